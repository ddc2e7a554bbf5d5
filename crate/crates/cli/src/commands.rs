//! The five subcommands. Each returns the run directory and a short summary.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bcbof::bicluster::bcbof_detailed;
use bcbof::datamodel::{load_csv_matrix, minmax_normalize};
use bcbof::indicators::compute_indicators;
use bcbof::metrics::{evaluate, MetricsReport};
use bcbof::ohlcv::{load_ohlcv_csv, OhlcvSeries};
use bcbof::pipeline::{apply, train, Application};
use bcbof::strategy::{buy_and_hold_profit, Signal, SignalKind};
use bcbof::DataMatrix;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::schema::{
    load_biclusters, load_bundle, to_json, BiclusterRecord, BiclustersDoc, FactorsDoc, MetricsDoc, NormDoc, ParamsDoc,
    ReportDoc, RulesDoc, SignalsDoc, SCHEMA_VERSION,
};

#[derive(Debug)]
pub struct Outcome {
    pub run_dir: PathBuf,
    pub summary: String,
}

struct Run {
    dir: PathBuf,
    timings: BTreeMap<String, f64>,
    clock: Instant,
}

#[derive(Serialize)]
struct ConfigDoc<'a> {
    schema_version: &'a str,
    run_id: String,
    config: &'a RunConfig,
}

#[derive(Serialize)]
struct TimingDoc<'a> {
    schema_version: &'a str,
    command: &'a str,
    seconds: &'a BTreeMap<String, f64>,
}

impl Run {
    /// Creates `out_dir/run_id` and records the config there. An existing
    /// directory is reused only if it holds the same config.
    fn start(cfg: &RunConfig) -> CliResult<Run> {
        let dir = cfg.run_dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::internal(format!("creating {}", dir.display()), e))?;
        let mut recorded = cfg.clone();
        recorded.out_dir = PathBuf::new();
        let doc = to_json(&ConfigDoc {
            schema_version: SCHEMA_VERSION,
            run_id: cfg.run_id(),
            config: &recorded,
        });
        let path = dir.join("config.json");
        match std::fs::read_to_string(&path) {
            Ok(existing) if existing != doc => {
                return Err(CliError::Internal(anyhow::anyhow!(
                    "{} belongs to a different config; refusing to overwrite",
                    dir.display()
                )))
            }
            Ok(_) => log::info!("reusing run directory {}", dir.display()),
            Err(_) => write_file(&dir, "config.json", &doc)?,
        }
        Ok(Run {
            dir,
            timings: BTreeMap::new(),
            clock: Instant::now(),
        })
    }

    fn lap(&mut self, step: &str) {
        let now = Instant::now();
        self.timings.insert(step.to_string(), (now - self.clock).as_secs_f64());
        self.clock = now;
    }

    fn write(&self, name: &str, contents: &str) -> CliResult<()> {
        write_file(&self.dir, name, contents)
    }

    /// Timings vary between runs, so they go to their own file and the log.
    fn finish(self, command: &str, summary: String) -> CliResult<Outcome> {
        let total: f64 = self.timings.values().sum();
        log::info!("{command} finished in {total:.3}s");
        self.write(
            "timing.json",
            &to_json(&TimingDoc {
                schema_version: SCHEMA_VERSION,
                command,
                seconds: &self.timings,
            }),
        )?;
        Ok(Outcome {
            run_dir: self.dir,
            summary,
        })
    }
}

fn write_file(dir: &Path, name: &str, contents: &str) -> CliResult<()> {
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::internal(format!("writing {}", path.display()), e))
}

fn required<'a, T>(v: &'a Option<T>, key: &str, command: &str) -> CliResult<&'a T> {
    v.as_ref()
        .ok_or_else(|| CliError::Usage(format!("{command} needs data.{key} in the config")))
}

fn load_matrix(cfg: &RunConfig, command: &str) -> CliResult<DataMatrix> {
    let path = required(&cfg.data.matrix, "matrix", command)?;
    let raw = load_csv_matrix(path, cfg.data.has_header, cfg.data.label_column)
        .map_err(|e| CliError::data(path.display(), e))?;
    if cfg.data.normalize {
        let (x, params) = minmax_normalize(&raw)?;
        let flat = params.degenerate_columns();
        if !flat.is_empty() {
            log::warn!("constant columns {flat:?} normalize to 0.5");
        }
        Ok(x)
    } else {
        Ok(raw)
    }
}

fn metrics_docs(run: &Run, report: &MetricsReport) -> CliResult<()> {
    run.write(
        "metrics.json",
        &to_json(&MetricsDoc {
            schema_version: SCHEMA_VERSION.into(),
            report: report.clone(),
        }),
    )?;
    run.write("metrics.csv", &report.to_csv_string())
}

pub fn cmd_bicluster(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut run = Run::start(cfg)?;
    let x = load_matrix(cfg, "bicluster")?;
    run.lap("load");
    let out = bcbof_detailed(&x, &cfg.bcbof)?;
    run.lap("bcbof");
    let report = evaluate(&x, &out.biclusters, cfg.metrics)?;
    run.lap("metrics");

    let doc = BiclustersDoc {
        schema_version: SCHEMA_VERSION.into(),
        shape: [x.nrows(), x.ncols()],
        delta: cfg.bcbof.delta,
        biclusters: out
            .biclusters
            .iter()
            .map(|b| BiclusterRecord::from_bicluster(b, x.col_labels()))
            .collect(),
    };
    run.write("biclusters.json", &to_json(&doc))?;
    metrics_docs(&run, &report)?;
    if cfg.dump_factors {
        run.write(
            "factors.json",
            &to_json(&FactorsDoc {
                schema_version: SCHEMA_VERSION.into(),
                col_labels: x.col_labels().to_vec(),
                model: out.factor_model.clone(),
                column_clusters: out.column_clusters.members(),
            }),
        )?;
    }
    let summary = format!(
        "{} biclusters from a {}x{} matrix ({} factors, {} column clusters)",
        doc.biclusters.len(),
        x.nrows(),
        x.ncols(),
        out.factor_model.num_factors,
        out.column_clusters.num_clusters
    );
    run.finish("bicluster", summary)
}

pub fn cmd_evaluate(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut run = Run::start(cfg)?;
    let x = load_matrix(cfg, "evaluate")?;
    let path = cfg.data.biclusters.clone().unwrap_or_else(|| run.dir.join("biclusters.json"));
    let doc = load_biclusters(&path).map_err(|e| CliError::data(path.display(), e))?;
    if doc.shape != [x.nrows(), x.ncols()] {
        return Err(CliError::Data(anyhow::anyhow!(
            "{}: biclusters refer to a {}x{} matrix but the data is {}x{}",
            path.display(),
            doc.shape[0],
            doc.shape[1],
            x.nrows(),
            x.ncols()
        )));
    }
    run.lap("load");
    let biclusters: Vec<_> = doc.biclusters.iter().map(BiclusterRecord::to_bicluster).collect();
    let report = evaluate(&x, &biclusters, cfg.metrics)?;
    run.lap("metrics");
    metrics_docs(&run, &report)?;
    let summary = format!("evaluated {} biclusters", report.bicluster_count);
    run.finish("evaluate", summary)
}

/// The full series and the number of leading training days.
fn market(cfg: &RunConfig, command: &str) -> CliResult<(OhlcvSeries, usize)> {
    let path = required(&cfg.data.ohlcv, "ohlcv", command)?;
    let history = load_ohlcv_csv(path).map_err(|e| CliError::data(path.display(), e))?;
    if let Some(test_path) = &cfg.data.test_ohlcv {
        let test = load_ohlcv_csv(test_path).map_err(|e| CliError::data(test_path.display(), e))?;
        let n = history.len();
        let bars = [history.bars(), test.bars()].concat();
        let full = OhlcvSeries::new(bars)
            .map_err(|e| CliError::data(format!("{} must continue {}", test_path.display(), path.display()), e))?;
        return Ok((full, n));
    }
    let n = *required(&cfg.data.train_days, "train_days (or data.test_ohlcv)", command)?;
    if n == 0 || n > history.len() {
        return Err(CliError::Usage(format!(
            "data.train_days = {n} but {} has {} days",
            path.display(),
            history.len()
        )));
    }
    Ok((history, n))
}

pub fn cmd_train(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut run = Run::start(cfg)?;
    let (series, n) = market(cfg, "train")?;
    let train_series = series.slice(0, n)?;
    run.lap("load");
    let tc = cfg.train_config();
    let trained = train(&train_series, &tc)?;
    run.lap("train");

    let m = &trained.model;
    let frame = compute_indicators(&train_series, &m.indicators)?;
    run.write("indicators.csv", &frame.matrix.to_csv_string())?;
    run.write(
        "rules.json",
        &to_json(&RulesDoc {
            schema_version: SCHEMA_VERSION.into(),
            rule_base: m.rule_base.clone(),
        }),
    )?;
    run.write(
        "norm.json",
        &to_json(&NormDoc {
            schema_version: SCHEMA_VERSION.into(),
            indicators: m.indicators.clone(),
            norm: m.norm.clone(),
        }),
    )?;
    let dates = train_series.dates();
    run.write(
        "params.json",
        &to_json(&ParamsDoc {
            schema_version: SCHEMA_VERSION.into(),
            params: m.params,
            pso_config: tc.pso,
            pso: trained.pso.clone(),
            train_days: n,
            train_first_date: dates[0].clone(),
            train_last_date: dates[n - 1].clone(),
        }),
    )?;
    let labels: Vec<String> = m.rule_base.col_labels.clone();
    run.write(
        "train_biclusters.json",
        &to_json(&BiclustersDoc {
            schema_version: SCHEMA_VERSION.into(),
            shape: [trained.bicluster_days.len(), labels.len()],
            delta: tc.bcbof.delta,
            biclusters: trained
                .biclusters
                .iter()
                .map(|b| BiclusterRecord::from_bicluster(b, &labels))
                .collect(),
        }),
    )?;
    let summary = format!(
        "{} rules from {} training days, t_h = {}{}",
        m.rule_base.len(),
        n,
        m.params.t_h,
        if trained.pso.flat { " (training profit flat in t_h)" } else { "" }
    );
    run.finish("train", summary)
}

fn apply_bundle(cfg: &RunConfig, run: &mut Run, command: &str) -> CliResult<(OhlcvSeries, Application, f64)> {
    let (series, n) = market(cfg, command)?;
    if n >= series.len() {
        return Err(CliError::Usage(format!("{command} needs test days after the {n} training days")));
    }
    let dir = cfg.data.bundle.clone().unwrap_or_else(|| run.dir.clone());
    let bundle = load_bundle(&dir).map_err(|e| CliError::data(format!("model bundle {}", dir.display()), e))?;
    run.lap("load");
    let app = apply(&series, n, &bundle.model, cfg.train.reuse_train_extremes)?;
    run.lap("apply");
    Ok((series, app, bundle.model.params.t_h))
}

fn signals_csv(signals: &[Signal]) -> String {
    let mut out = String::from("day,date,kind,price,rule,ybar\n");
    for s in signals {
        let kind = match s.kind {
            SignalKind::Buy => "buy",
            SignalKind::Sell => "sell",
        };
        let ybar = s.ybar.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{kind},{},{},{ybar}\n", s.day, s.date, s.price, s.rule.as_str()));
    }
    out
}

fn write_signals(run: &Run, signals: &[Signal]) -> CliResult<String> {
    let csv = signals_csv(signals);
    run.write("signals.csv", &csv)?;
    run.write(
        "signals.json",
        &to_json(&SignalsDoc {
            schema_version: SCHEMA_VERSION.into(),
            signals: signals.to_vec(),
        }),
    )?;
    Ok(csv)
}

/// Close, `ybar` and execution markers for every traded day.
fn plot_csv(series: &OhlcvSeries, app: &Application) -> String {
    let mut buy = BTreeMap::new();
    let mut sell = BTreeMap::new();
    for s in &app.backtest.signals {
        match s.kind {
            SignalKind::Buy => buy.insert(s.day, s.price),
            SignalKind::Sell => sell.insert(s.day, s.price),
        };
    }
    let cell = |v: Option<&f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut out = String::from("date,close,ybar,buy,sell\n");
    for (i, bar) in series.bars().iter().enumerate().skip(app.start) {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            bar.date,
            bar.close,
            cell(app.ybar[i].as_ref()),
            cell(buy.get(&i)),
            cell(sell.get(&i))
        ));
    }
    out
}

pub fn cmd_backtest(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut run = Run::start(cfg)?;
    let (series, app, t_h) = apply_bundle(cfg, &mut run, "backtest")?;
    let test = series.slice(app.start, series.len())?;
    let bt = &app.backtest;
    let report = ReportDoc {
        schema_version: SCHEMA_VERSION.into(),
        t_h,
        start_day: app.start,
        start_date: test.bars()[0].date.clone(),
        end_date: test.bars()[test.len() - 1].date.clone(),
        test_days: test.len(),
        strategy_profit: bt.profit,
        profit_without_forced: bt.profit_without_forced,
        buy_and_hold_profit: buy_and_hold_profit(&test)?,
        rule_counts: bt.rule_counts.clone(),
        trades: bt.trades.clone(),
    };
    write_signals(&run, &bt.signals)?;
    run.write("report.json", &to_json(&report))?;
    run.write("plot.csv", &plot_csv(&series, &app))?;
    let summary = format!(
        "{} trades over {} test days: strategy {:.2}%, buy-and-hold {:.2}%",
        bt.trades.len(),
        report.test_days,
        report.strategy_profit,
        report.buy_and_hold_profit
    );
    run.finish("backtest", summary)
}

/// Like `backtest` but only emits the signals; the CSV is also the summary.
pub fn cmd_signals(cfg: &RunConfig) -> CliResult<Outcome> {
    let mut run = Run::start(cfg)?;
    let (_, app, _) = apply_bundle(cfg, &mut run, "signals")?;
    let csv = write_signals(&run, &app.backtest.signals)?;
    run.finish("signals", csv.trim_end().to_string())
}
