//! Training and application of the trading system end to end.
//!
//! Training: indicators on the training days, min-max normalization, trend
//! labels, biclustering of the labeled rows, one fuzzy rule per bicluster, then
//! PSO on `t_h` against training profit. Application: indicators over the full
//! history, normalization with the stored (or test-period) extremes, `ybar` per
//! day and the trading rules from the first test day on.

use serde::{Deserialize, Serialize};

use crate::bicluster::{bcbof, BcbofConfig, Bicluster};
use crate::datamodel::{apply_normalization, minmax_normalize, DataMatrix, NormalizationParams};
use crate::error::{Error, Result};
use crate::fuzzy::{build_rule_base, infer, FuzzyOptions, RuleBase};
use crate::indicators::{antecedent_indicator_set, compute_indicators, trend_labels, IndicatorSpec, LabelOptions};
use crate::ohlcv::OhlcvSeries;
use crate::strategy::{pso_optimize_threshold, simulate, Backtest, PsoConfig, PsoResult, StrategyParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub indicators: Vec<IndicatorSpec>,
    /// Trend band width in percent.
    pub label_threshold: f64,
    /// Label from the day after instead of the day itself.
    pub label_window_offset: bool,
    pub bcbof: BcbofConfig,
    pub fuzzy: FuzzyOptions,
    pub strategy: StrategyParams,
    pub pso: PsoConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            indicators: antecedent_indicator_set(),
            label_threshold: 0.5,
            label_window_offset: false,
            bcbof: BcbofConfig {
                eps: Some(0.1),
                min_pts: Some(4),
                ..BcbofConfig::default()
            },
            fuzzy: FuzzyOptions::default(),
            strategy: StrategyParams::default(),
            pso: PsoConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn label_options(&self) -> LabelOptions {
        LabelOptions {
            n: self.strategy.n_label,
            t: self.label_threshold,
            window_offset: self.label_window_offset,
        }
    }
}

/// Everything the application phase needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradingModel {
    pub indicators: Vec<IndicatorSpec>,
    pub norm: NormalizationParams,
    pub rule_base: RuleBase,
    /// Strategy parameters with the tuned `t_h`.
    pub params: StrategyParams,
}

impl TradingModel {
    /// Cross-checks the parts, which may come from separately stored files.
    pub fn validate(&self) -> Result<()> {
        self.norm.validate()?;
        self.rule_base.validate()?;
        self.params.validate()?;
        if self.norm.len() != self.indicators.len() {
            return Err(Error::Schema(format!(
                "normalization covers {} columns but there are {} indicators",
                self.norm.len(),
                self.indicators.len()
            )));
        }
        let names: Vec<String> = self.indicators.iter().map(|s| s.to_string()).collect();
        if names != self.rule_base.col_labels {
            return Err(Error::Schema(format!(
                "rule base columns {:?} do not match indicators {:?}",
                self.rule_base.col_labels, names
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub model: TradingModel,
    pub pso: PsoResult,
    /// Biclusters over the labeled training rows, in rule order.
    pub biclusters: Vec<Bicluster>,
    /// Matrix row `k` of the labeled training matrix is this series day.
    pub bicluster_days: Vec<usize>,
    pub train_days: usize,
}

/// Defuzzified value for every series day; `None` before `first_day` and
/// where no rule fires. `features` row `k` belongs to day `first_day + k`.
pub fn ybar_series(rb: &RuleBase, features: &DataMatrix, first_day: usize, len: usize) -> Result<Vec<Option<f64>>> {
    let mut out = vec![None; len];
    for k in 0..features.nrows() {
        let row = features.row(k).to_vec();
        out[first_day + k] = infer(rb, &row)?;
    }
    Ok(out)
}

pub fn train(series: &OhlcvSeries, cfg: &TrainConfig) -> Result<TrainedModel> {
    cfg.strategy.validate()?;
    let frame = compute_indicators(series, &cfg.indicators)?;
    let (x_norm, norm) = minmax_normalize(&frame.matrix)?;
    let labels = trend_labels(&series.closes(), cfg.label_options())?;

    let labeled: Vec<usize> = (0..x_norm.nrows()).filter(|&k| labels.is_valid(frame.first_day + k)).collect();
    if labeled.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "only {} training days carry a trend label",
            labeled.len()
        )));
    }
    let x_lab = x_norm.select_rows(&labeled)?;
    let trends: Vec<Option<i8>> = labeled.iter().map(|&k| labels.trend[frame.first_day + k]).collect();

    let biclusters = bcbof(&x_lab, &cfg.bcbof)?;
    if biclusters.is_empty() {
        return Err(Error::InsufficientData(
            "no technical patterns: biclustering found no bicluster within delta".into(),
        ));
    }
    let rule_base = build_rule_base(&x_lab, &biclusters, &trends, cfg.fuzzy)?;
    log::info!("{} fuzzy rules from {} labeled training days", rule_base.len(), labeled.len());

    let ybar = ybar_series(&rule_base, &x_norm, frame.first_day, series.len())?;
    let pso = pso_optimize_threshold(series, &ybar, frame.first_day, &cfg.strategy, &cfg.pso)?;
    let params = StrategyParams {
        t_h: pso.best,
        ..cfg.strategy
    };
    Ok(TrainedModel {
        model: TradingModel {
            indicators: cfg.indicators.clone(),
            norm,
            rule_base,
            params,
        },
        pso,
        biclusters,
        bicluster_days: labeled.iter().map(|&k| frame.first_day + k).collect(),
        train_days: series.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Application {
    pub ybar: Vec<Option<f64>>,
    /// First traded day.
    pub start: usize,
    pub backtest: Backtest,
}

/// Applies a trained model to `series`, trading from day `start` on.
///
/// Indicators use the whole series, so days before `start` serve as warm-up.
/// With `reuse_train_extremes` the stored training extremes normalize the
/// features (values clamped to [0, 1]); otherwise the extremes of the traded
/// days are used.
pub fn apply(series: &OhlcvSeries, start: usize, model: &TradingModel, reuse_train_extremes: bool) -> Result<Application> {
    model.validate()?;
    let frame = compute_indicators(series, &model.indicators)?;
    if frame.matrix.ncols() != model.norm.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} indicator columns but normalization covers {}",
            frame.matrix.ncols(),
            model.norm.len()
        )));
    }
    let start = start.max(frame.first_day);
    if start >= series.len() {
        return Err(Error::InsufficientData(format!(
            "no tradable days: trading would start at day {start} of {}",
            series.len()
        )));
    }
    let skip = start - frame.first_day;
    let traded: Vec<usize> = (skip..frame.matrix.nrows()).collect();
    let features = frame.matrix.select_rows(&traded)?;
    let x_norm = if reuse_train_extremes {
        apply_normalization(&features, &model.norm)?
    } else {
        minmax_normalize(&features)?.0
    };
    let ybar = ybar_series(&model.rule_base, &x_norm, start, series.len())?;
    let backtest = simulate(series, &ybar, start, &model.params)?;
    Ok(Application { ybar, start, backtest })
}
