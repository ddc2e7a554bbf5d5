//! Run configuration: a TOML document plus `--key value` overrides.

use std::path::{Path, PathBuf};

use bcbof::fuzzy::FuzzyOptions;
use bcbof::indicators::IndicatorSpec;
use bcbof::metrics::MetricsOptions;
use bcbof::pipeline::TrainConfig;
use bcbof::strategy::{PsoConfig, StrategyParams};
use bcbof::BcbofConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seed of every stochastic step.
    pub seed: u64,
    /// Parent of the per-run directories. Not part of the run id.
    pub out_dir: PathBuf,
    pub dump_factors: bool,
    pub data: DataConfig,
    pub bcbof: BcbofConfig,
    pub metrics: MetricsOptions,
    pub train: TrainSection,
    pub strategy: StrategyParams,
    pub pso: PsoSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            out_dir: PathBuf::from("out"),
            dump_factors: false,
            data: DataConfig::default(),
            bcbof: BcbofConfig::default(),
            metrics: MetricsOptions::default(),
            train: TrainSection::default(),
            strategy: StrategyParams::default(),
            pso: PsoSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Numeric matrix for `bicluster` and `evaluate`.
    pub matrix: Option<PathBuf>,
    pub has_header: bool,
    /// Column holding row labels.
    pub label_column: Option<usize>,
    /// Min-max normalize the matrix before biclustering or evaluation.
    pub normalize: bool,
    /// Biclusters for `evaluate`; defaults to the run's own biclusters.json.
    pub biclusters: Option<PathBuf>,
    /// OHLCV history. Its first `train_days` days train the system unless
    /// `test_ohlcv` is given, in which case all of it trains.
    pub ohlcv: Option<PathBuf>,
    pub train_days: Option<usize>,
    pub test_ohlcv: Option<PathBuf>,
    /// Model bundle for `backtest`/`signals`; defaults to the run directory.
    pub bundle: Option<PathBuf>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            matrix: None,
            has_header: true,
            label_column: None,
            normalize: true,
            biclusters: None,
            ohlcv: None,
            train_days: None,
            test_ohlcv: None,
            bundle: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub indicators: Vec<IndicatorSpec>,
    pub label_threshold: f64,
    pub label_window_offset: bool,
    /// Normalize test features with the training extremes.
    pub reuse_train_extremes: bool,
    pub bcbof: BcbofConfig,
    pub fuzzy: FuzzyOptions,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            indicators: t.indicators,
            label_threshold: t.label_threshold,
            label_window_offset: t.label_window_offset,
            reuse_train_extremes: true,
            bcbof: t.bcbof,
            fuzzy: t.fuzzy,
        }
    }
}

/// [`PsoConfig`] without the seed, which is the top-level `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoSection {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub vmax_fraction: f64,
    pub lo: f64,
    pub hi: f64,
}

impl Default for PsoSection {
    fn default() -> Self {
        let p = PsoConfig::default();
        PsoSection {
            particles: p.particles,
            iterations: p.iterations,
            inertia: p.inertia,
            cognitive: p.cognitive,
            social: p.social,
            vmax_fraction: p.vmax_fraction,
            lo: p.lo,
            hi: p.hi,
        }
    }
}

impl RunConfig {
    pub fn pso_config(&self) -> PsoConfig {
        let p = self.pso;
        PsoConfig {
            particles: p.particles,
            iterations: p.iterations,
            inertia: p.inertia,
            cognitive: p.cognitive,
            social: p.social,
            vmax_fraction: p.vmax_fraction,
            lo: p.lo,
            hi: p.hi,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            indicators: self.train.indicators.clone(),
            label_threshold: self.train.label_threshold,
            label_window_offset: self.train.label_window_offset,
            bcbof: self.train.bcbof.clone(),
            fuzzy: self.train.fuzzy,
            strategy: self.strategy,
            pso: self.pso_config(),
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let checks = [
            ("bcbof", self.bcbof.validate()),
            ("train.bcbof", self.train.bcbof.validate()),
            ("train.fuzzy", self.train.fuzzy.validate()),
            ("strategy", self.strategy.validate()),
            ("pso", self.pso_config().validate()),
        ];
        for (section, r) in checks {
            r.map_err(|e| CliError::Usage(format!("[{section}] {e}")))?;
        }
        if self.train.indicators.is_empty() {
            return Err(CliError::Usage("[train] indicators must not be empty".into()));
        }
        if !(self.train.label_threshold > 0.0 && self.train.label_threshold.is_finite()) {
            return Err(CliError::Usage("[train] label_threshold must be > 0".into()));
        }
        Ok(())
    }

    /// Hex digest of the canonical JSON form, `out_dir` excluded.
    pub fn run_id(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    pub fn run_dir(&self) -> PathBuf {
        self.out_dir.join(self.run_id())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let d = &mut self.data;
        for p in [&mut d.matrix, &mut d.biclusters, &mut d.ohlcv, &mut d.test_ohlcv, &mut d.bundle]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    fn check_paths_exist(&self) -> CliResult<()> {
        let d = &self.data;
        let named = [
            ("data.matrix", &d.matrix),
            ("data.biclusters", &d.biclusters),
            ("data.ohlcv", &d.ohlcv),
            ("data.test_ohlcv", &d.test_ohlcv),
            ("data.bundle", &d.bundle),
        ];
        for (key, p) in named {
            if let Some(p) = p {
                if !p.exists() {
                    return Err(CliError::Data(anyhow::anyhow!("{key}: {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Loads `path`, applies the overrides and resolves relative data paths against
/// the config file's directory.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut cfg = parse_config(&text, overrides)?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    cfg.check_paths_exist()?;
    Ok(cfg)
}

/// Parses and validates config text; paths are left as written.
pub fn parse_config(text: &str, overrides: &[(String, String)]) -> CliResult<RunConfig> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
    for (key, raw) in overrides {
        set_dotted(&mut table, key, parse_scalar(raw))?;
    }
    let cfg: RunConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
    cfg.validate()?;
    Ok(cfg)
}

/// A TOML literal if the text is one, otherwise a plain string.
fn parse_scalar(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_dotted(table: &mut toml::Table, key: &str, value: toml::Value) -> CliResult<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("malformed override key {key:?}")));
    }
    let (last, parents) = parts.split_last().expect("non-empty");
    let mut t = table;
    for p in parents {
        let entry = t
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        t = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {key}: {p} is not a table")))?;
    }
    t.insert(last.to_string(), value);
    Ok(())
}

/// Splits `--key value` pairs; a flag followed by another flag (or nothing)
/// means `true`. Dashes in keys become underscores.
pub fn parse_overrides(args: &[String]) -> CliResult<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < args.len() {
        let key = args[i]
            .strip_prefix("--")
            .ok_or_else(|| CliError::Usage(format!("expected --key, found {:?}", args[i])))?;
        let (key, value) = match key.split_once('=') {
            Some((k, v)) => {
                i += 1;
                (k, v.to_string())
            }
            None => match args.get(i + 1) {
                Some(v) if !v.starts_with("--") => {
                    i += 2;
                    (key, v.clone())
                }
                _ => {
                    i += 1;
                    (key, "true".to_string())
                }
            },
        };
        out.push((key.replace('-', "_"), value));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kv(k: &str, v: &str) -> (String, String) {
        (k.into(), v.into())
    }

    #[test]
    fn empty_config_is_all_defaults() {
        assert_eq!(parse_config("", &[]).unwrap(), RunConfig::default());
    }

    #[test]
    fn overrides_reach_nested_scalars() {
        let cfg = parse_config(
            "[bcbof]\ndelta = 0.5\n",
            &[kv("bcbof.delta", "0.02"), kv("seed", "7"), kv("strategy.fill", "next_open"), kv("pso.lo", "-2")],
        )
        .unwrap();
        assert_eq!(cfg.bcbof.delta, 0.02);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.pso_config().seed, 7);
        assert_eq!(cfg.pso.lo, -2.0);
        assert_eq!(cfg.strategy.fill, bcbof::strategy::Fill::NextOpen);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_are_usage_errors() {
        for (text, ov) in [
            ("[bcbof]\ndelt = 1\n", vec![]),
            ("", vec![kv("bcbof.delta", "-1")]),
            ("", vec![kv("pso.seed", "3")]),
            ("", vec![kv("seed.x", "3")]),
        ] {
            let e = parse_config(text, &ov).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{e}");
        }
    }

    #[test]
    fn run_id_tracks_everything_but_out_dir() {
        let a = RunConfig::default();
        let mut b = a.clone();
        b.out_dir = "elsewhere".into();
        assert_eq!(a.run_id(), b.run_id());
        b.seed = 43;
        assert_ne!(a.run_id(), b.run_id());
        assert_eq!(a.run_id().len(), 16);
    }

    #[test]
    fn override_arg_forms() {
        let args: Vec<String> = ["--seed", "3", "--dump-factors", "--bcbof.delta=0.1", "--pso.lo", "-2"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        assert_eq!(
            parse_overrides(&args).unwrap(),
            vec![kv("seed", "3"), kv("dump_factors", "true"), kv("bcbof.delta", "0.1"), kv("pso.lo", "-2")]
        );
        assert!(parse_overrides(&["seed".to_string()]).is_err());
    }
}
