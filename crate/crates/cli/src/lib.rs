//! Command-line front end for biclustering, metric evaluation and the
//! fuzzy-rule trading system.

pub mod commands;
pub mod config;
pub mod error;
pub mod schema;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::Outcome;
pub use config::{load_config, RunConfig};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bcbof", version, about = "Orthogonal-factor biclustering and a fuzzy-rule trading backtester")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Find biclusters in data.matrix; writes biclusters.json and metrics.
    Bicluster(CommonArgs),
    /// Score the biclusters in data.biclusters against data.matrix.
    Evaluate(CommonArgs),
    /// Train the rule base and threshold on data.ohlcv; writes the model bundle.
    Train(CommonArgs),
    /// Trade the test period with a bundle; writes signals, report and plot data.
    Backtest(CommonArgs),
    /// Print the trading signals for the test period.
    Signals(CommonArgs),
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Seed of every stochastic step (default 42).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Also write factors.json (bicluster).
    #[arg(long)]
    pub dump_factors: bool,
    /// Parent directory of the run directories.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Any config key, e.g. `--bcbof.delta 0.02 --strategy.fill next_open`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "--KEY VALUE")]
    pub overrides: Vec<String>,
}

impl CommonArgs {
    pub fn load(&self) -> CliResult<RunConfig> {
        let mut ov = Vec::new();
        if let Some(seed) = self.seed {
            ov.push(("seed".to_string(), seed.to_string()));
        }
        if self.dump_factors {
            ov.push(("dump_factors".to_string(), "true".to_string()));
        }
        ov.extend(config::parse_overrides(&self.overrides)?);
        let mut cfg = load_config(&self.config, &ov)?;
        if let Some(dir) = &self.out_dir {
            cfg.out_dir = dir.clone();
        }
        Ok(cfg)
    }
}

pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let (args, f): (&CommonArgs, fn(&RunConfig) -> CliResult<Outcome>) = match &cli.command {
        Command::Bicluster(a) => (a, commands::cmd_bicluster),
        Command::Evaluate(a) => (a, commands::cmd_evaluate),
        Command::Train(a) => (a, commands::cmd_train),
        Command::Backtest(a) => (a, commands::cmd_backtest),
        Command::Signals(a) => (a, commands::cmd_signals),
    };
    let cfg = args.load()?;
    f(&cfg)
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match std::panic::catch_unwind(|| run(&cli)) {
        Ok(Ok(outcome)) => {
            println!("{}", outcome.run_dir.display());
            println!("{}", outcome.summary);
            0
        }
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        Err(_) => {
            eprintln!("error: internal failure");
            3
        }
    }
}
