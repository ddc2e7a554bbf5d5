//! Trading rules, backtesting and PSO tuning of the trading threshold.
//!
//! The backtest is a single-position state machine over days. While flat it
//! buys on Rule 1 (`ybar >= t_h`, close below the trailing average price, enough
//! days since the last trade). While long it sells on Rule 3 (loss rate at or
//! above `t_loss`, checked first and exempt from the holding lag) or Rule 2
//! (`ybar < t_h`, close above the buy price, held at least `t_bs` days).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::indicators::rolling_mean_price;
use crate::ohlcv::OhlcvSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fill {
    /// Trade at the signal day's close.
    #[default]
    Close,
    /// Trade at the next day's open; signals on the last day are dropped.
    NextOpen,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyParams {
    /// Trading threshold on the trend scale.
    pub t_h: f64,
    /// Days since the previous trade required before a buy.
    pub t_bt: usize,
    /// Days held required before a Rule 2 sell.
    pub t_bs: usize,
    /// Loss rate in percent that triggers Rule 3.
    pub t_loss: f64,
    /// Window of the trailing average price.
    pub n_avg: usize,
    /// Label horizon used in training.
    pub n_label: usize,
    pub fill: Fill,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            t_h: 0.0,
            t_bt: 5,
            t_bs: 3,
            t_loss: 10.0,
            n_avg: 5,
            n_label: 5,
            fill: Fill::Close,
        }
    }
}

impl StrategyParams {
    pub fn validate(&self) -> Result<()> {
        if !self.t_h.is_finite() {
            return Err(Error::InvalidParameter(format!("t_h must be finite, got {}", self.t_h)));
        }
        if !(self.t_loss.is_finite() && self.t_loss > 0.0) {
            return Err(Error::InvalidParameter(format!("t_loss must be > 0, got {}", self.t_loss)));
        }
        if self.n_avg == 0 || self.n_label == 0 {
            return Err(Error::InvalidParameter("n_avg and n_label must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    Buy,
    Sell,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleId {
    Rule1,
    Rule2,
    #[serde(rename = "rule3_stoploss")]
    Rule3StopLoss,
    EndOfTestForced,
}

impl RuleId {
    pub fn as_str(&self) -> &'static str {
        match self {
            RuleId::Rule1 => "rule1",
            RuleId::Rule2 => "rule2",
            RuleId::Rule3StopLoss => "rule3_stoploss",
            RuleId::EndOfTestForced => "end_of_test_forced",
        }
    }
}

/// A buy or sell with the quantities its rule was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    /// Series day the rule fired on.
    pub day: usize,
    pub date: String,
    pub kind: SignalKind,
    /// Execution price.
    pub price: f64,
    pub rule: RuleId,
    pub ybar: Option<f64>,
    /// Close on the signal day.
    pub close: f64,
    /// Trailing average price (buys).
    pub avg_price: Option<f64>,
    /// Buy price of the open position (sells).
    pub buy_price: Option<f64>,
    /// Days since the previous trade (buys, `None` if there was none) or since the buy (sells).
    pub lag: Option<usize>,
    /// `(BP - close) / BP * 100` (sells).
    pub loss_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub buy_day: usize,
    pub buy_price: f64,
    pub sell_day: usize,
    pub sell_price: f64,
    pub reason: RuleId,
}

/// `sum (SP - BP) / BP * 100` over the trades.
pub fn backtest_profit(trades: &[Trade]) -> f64 {
    trades.iter().map(|t| (t.sell_price - t.buy_price) / t.buy_price * 100.0).fold(0.0, |acc, r| acc + r)
}

pub fn buy_and_hold_profit(series: &OhlcvSeries) -> Result<f64> {
    let (first, last) = match (series.bars().first(), series.bars().last()) {
        (Some(f), Some(l)) => (f.close, l.close),
        _ => return Err(Error::InsufficientData("buy-and-hold needs a non-empty series".into())),
    };
    Ok((last - first) / first * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleCounts {
    pub rule1: usize,
    pub rule2: usize,
    pub rule3_stoploss: usize,
    pub end_of_test_forced: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backtest {
    pub signals: Vec<Signal>,
    pub trades: Vec<Trade>,
    /// Profit over every trade, including a forced end-of-test exit.
    pub profit: f64,
    /// Profit over trades closed by Rule 2 or Rule 3 only.
    pub profit_without_forced: f64,
    pub rule_counts: RuleCounts,
}

/// Runs the trading rules over days `start..series.len()`.
///
/// `ybar[i]` is the defuzzified value of series day `i` (`None` when no rule
/// matched); it must cover the whole series. No buy happens on the last day,
/// and a position still open there is closed at its close.
pub fn simulate(series: &OhlcvSeries, ybar: &[Option<f64>], start: usize, p: &StrategyParams) -> Result<Backtest> {
    p.validate()?;
    if ybar.len() != series.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} defuzzified values for a {}-day series",
            ybar.len(),
            series.len()
        )));
    }
    if start >= series.len() {
        return Err(Error::InsufficientData(format!(
            "trading starts at day {start} but the series has {} days",
            series.len()
        )));
    }
    let bars = series.bars();
    let closes = series.closes();
    let last = series.len() - 1;
    let fill_price = |day: usize| -> Option<f64> {
        match p.fill {
            Fill::Close => Some(bars[day].close),
            Fill::NextOpen => bars.get(day + 1).map(|b| b.open),
        }
    };

    let mut signals = Vec::new();
    let mut trades = Vec::new();
    let mut last_trade: Option<usize> = None;
    let mut position: Option<(usize, f64)> = None;

    for i in start..=last {
        let close = closes[i];
        let y = ybar[i];
        let signal = |kind, price, rule, avg_price, buy_price, lag, loss_rate| Signal {
            day: i,
            date: bars[i].date.clone(),
            kind,
            price,
            rule,
            ybar: y,
            close,
            avg_price,
            buy_price,
            lag,
            loss_rate,
        };
        match position {
            Some((buy_day, bp)) => {
                let loss = (bp - close) / bp * 100.0;
                let held = i - buy_day;
                let rule = if loss >= p.t_loss {
                    Some(RuleId::Rule3StopLoss)
                } else if y.is_some_and(|y| y < p.t_h) && close > bp && held >= p.t_bs {
                    Some(RuleId::Rule2)
                } else {
                    None
                };
                if let (Some(rule), Some(price)) = (rule, rule.and(fill_price(i))) {
                    signals.push(signal(SignalKind::Sell, price, rule, None, Some(bp), Some(held), Some(loss)));
                    trades.push(Trade {
                        buy_day,
                        buy_price: bp,
                        sell_day: i,
                        sell_price: price,
                        reason: rule,
                    });
                    position = None;
                    last_trade = Some(i);
                }
            }
            None => {
                let avg = rolling_mean_price(&closes, i, p.n_avg).ok();
                let lag = last_trade.map(|d| i - d);
                // a position opened on the last day could never be closed
                let buy = i < last
                    && y.is_some_and(|y| y >= p.t_h)
                    && avg.is_some_and(|a| close < a)
                    && lag.is_none_or(|l| l >= p.t_bt);
                if let (true, Some(price)) = (buy, fill_price(i)) {
                    signals.push(signal(SignalKind::Buy, price, RuleId::Rule1, avg, None, lag, None));
                    position = Some((i, price));
                    last_trade = Some(i);
                }
            }
        }
    }

    if let Some((buy_day, bp)) = position {
        let close = closes[last];
        signals.push(Signal {
            day: last,
            date: bars[last].date.clone(),
            kind: SignalKind::Sell,
            price: close,
            rule: RuleId::EndOfTestForced,
            ybar: ybar[last],
            close,
            avg_price: None,
            buy_price: Some(bp),
            lag: Some(last - buy_day),
            loss_rate: Some((bp - close) / bp * 100.0),
        });
        trades.push(Trade {
            buy_day,
            buy_price: bp,
            sell_day: last,
            sell_price: close,
            reason: RuleId::EndOfTestForced,
        });
    }

    let count = |r: RuleId| signals.iter().filter(|s| s.rule == r).count();
    let rule_counts = RuleCounts {
        rule1: count(RuleId::Rule1),
        rule2: count(RuleId::Rule2),
        rule3_stoploss: count(RuleId::Rule3StopLoss),
        end_of_test_forced: count(RuleId::EndOfTestForced),
    };
    let closed: Vec<Trade> = trades.iter().filter(|t| t.reason != RuleId::EndOfTestForced).cloned().collect();
    Ok(Backtest {
        profit: backtest_profit(&trades),
        profit_without_forced: backtest_profit(&closed),
        signals,
        trades,
        rule_counts,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsoConfig {
    pub particles: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    /// Velocity limit as a fraction of the search range.
    pub vmax_fraction: f64,
    pub lo: f64,
    pub hi: f64,
    pub seed: u64,
}

impl Default for PsoConfig {
    fn default() -> Self {
        PsoConfig {
            particles: 30,
            iterations: 50,
            inertia: 0.72,
            cognitive: 1.49,
            social: 1.49,
            vmax_fraction: 0.2,
            lo: -3.0,
            hi: 3.0,
            seed: 42,
        }
    }
}

impl PsoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.particles == 0 {
            return Err(Error::InvalidParameter("PSO needs at least one particle".into()));
        }
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidParameter(format!("PSO range [{}, {}] is empty", self.lo, self.hi)));
        }
        if !(self.vmax_fraction > 0.0) {
            return Err(Error::InvalidParameter("vmax_fraction must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsoResult {
    pub best: f64,
    pub best_value: f64,
    pub evaluations: usize,
    /// Every evaluation returned the same value.
    pub flat: bool,
}

/// Global-best PSO maximizing `objective` over `[lo, hi]`.
///
/// Initial positions are stratified: particle `k` starts uniformly inside the
/// `k`-th of `particles` equal slices of the range. Positions are clamped to the
/// range and velocities to `vmax_fraction * (hi - lo)`. Ties keep the earlier best.
pub fn pso_maximize(cfg: &PsoConfig, mut objective: impl FnMut(f64) -> f64) -> Result<PsoResult> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.hi - cfg.lo;
    let vmax = cfg.vmax_fraction * span;
    let n = cfg.particles;

    let mut x: Vec<f64> = (0..n).map(|k| cfg.lo + (k as f64 + rng.gen::<f64>()) / n as f64 * span).collect();
    let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(-vmax..=vmax)).collect();
    let mut pbest = x.clone();
    let mut pbest_val: Vec<f64> = x.iter().map(|&xi| objective(xi)).collect();
    let mut evaluations = n;
    let (mut lo_seen, mut hi_seen) = (f64::INFINITY, f64::NEG_INFINITY);
    for &f in &pbest_val {
        lo_seen = lo_seen.min(f);
        hi_seen = hi_seen.max(f);
    }
    let mut g = 0;
    for k in 1..n {
        if pbest_val[k] > pbest_val[g] {
            g = k;
        }
    }
    let (mut gbest, mut gbest_val) = (pbest[g], pbest_val[g]);

    for _ in 0..cfg.iterations {
        for k in 0..n {
            let (r1, r2): (f64, f64) = (rng.gen(), rng.gen());
            v[k] = (cfg.inertia * v[k] + cfg.cognitive * r1 * (pbest[k] - x[k]) + cfg.social * r2 * (gbest - x[k])).clamp(-vmax, vmax);
            x[k] = (x[k] + v[k]).clamp(cfg.lo, cfg.hi);
            let f = objective(x[k]);
            evaluations += 1;
            lo_seen = lo_seen.min(f);
            hi_seen = hi_seen.max(f);
            if f > pbest_val[k] {
                pbest[k] = x[k];
                pbest_val[k] = f;
                if f > gbest_val {
                    gbest = x[k];
                    gbest_val = f;
                }
            }
        }
    }
    let flat = lo_seen == hi_seen;
    if flat {
        log::warn!("PSO objective flat at {gbest_val} over {evaluations} evaluations");
    }
    Ok(PsoResult {
        best: gbest,
        best_value: gbest_val,
        evaluations,
        flat,
    })
}

/// Tunes `t_h` for training profit with every other parameter fixed.
pub fn pso_optimize_threshold(series: &OhlcvSeries, ybar: &[Option<f64>], start: usize, base: &StrategyParams, cfg: &PsoConfig) -> Result<PsoResult> {
    // surface input errors once rather than inside the objective
    simulate(series, ybar, start, base)?;
    pso_maximize(cfg, |t_h| {
        let p = StrategyParams { t_h, ..*base };
        simulate(series, ybar, start, &p).map(|b| b.profit).unwrap_or(f64::NEG_INFINITY)
    })
}
