//! Technical indicators over an [`OhlcvSeries`] and forward-looking trend labels.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::datamodel::DataMatrix;
use crate::error::{Error, Result};
use crate::ohlcv::{Bar, OhlcvSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KdjLine {
    K,
    D,
    J,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum IndicatorSpec {
    WilliamsR(usize),
    Roc(usize),
    Cci(usize),
    Emv(usize),
    Uos(usize, usize, usize),
    Ar(usize),
    Br(usize),
    Kdj(usize, KdjLine),
    Sma(usize),
    Rsi(usize),
    Mtm(usize),
    Rsv(usize),
}

impl IndicatorSpec {
    /// Index of the first day with a defined value.
    pub fn first_valid(&self) -> usize {
        use IndicatorSpec::*;
        match *self {
            Roc(n) | Mtm(n) | Rsi(n) | Br(n) | Emv(n) => n,
            WilliamsR(n) | Cci(n) | Ar(n) | Rsv(n) | Kdj(n, _) | Sma(n) => n - 1,
            Uos(a, b, c) => a.max(b).max(c),
        }
    }

    fn periods(&self) -> Vec<usize> {
        use IndicatorSpec::*;
        match *self {
            Uos(a, b, c) => vec![a, b, c],
            WilliamsR(n) | Roc(n) | Cci(n) | Emv(n) | Ar(n) | Br(n) | Kdj(n, _) | Sma(n) | Rsi(n) | Mtm(n) | Rsv(n) => vec![n],
        }
    }
}

impl fmt::Display for IndicatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use IndicatorSpec::*;
        match *self {
            WilliamsR(n) => write!(f, "WR_{n}"),
            Roc(n) => write!(f, "ROC_{n}"),
            Cci(n) => write!(f, "CCI_{n}"),
            Emv(n) => write!(f, "EMV_{n}"),
            Uos(a, b, c) => write!(f, "UOS_{a}_{b}_{c}"),
            Ar(n) => write!(f, "AR_{n}"),
            Br(n) => write!(f, "BR_{n}"),
            Kdj(n, KdjLine::J) => write!(f, "KDJ_{n}"),
            Kdj(n, KdjLine::K) => write!(f, "KDJ_K_{n}"),
            Kdj(n, KdjLine::D) => write!(f, "KDJ_D_{n}"),
            Sma(n) => write!(f, "SMA_{n}"),
            Rsi(n) => write!(f, "RSI_{n}"),
            Mtm(n) => write!(f, "MTM_{n}"),
            Rsv(n) => write!(f, "RSV_{n}"),
        }
    }
}

impl FromStr for IndicatorSpec {
    type Err = Error;

    /// Accepts `NAME_n` (case-insensitive), `UOS_a_b_c`, and `KDJ_n` / `KDJ_K_n` / `KDJ_D_n` / `KDJ_J_n`.
    fn from_str(s: &str) -> Result<Self> {
        let unknown = || Error::UnknownIndicator(s.to_string());
        let upper = s.trim().to_ascii_uppercase();
        let mut parts = upper.split('_');
        let name = parts.next().ok_or_else(unknown)?;
        let rest: Vec<&str> = parts.collect();
        let kdj_line = match (name, rest.first()) {
            ("KDJ", Some(&"K")) => Some(KdjLine::K),
            ("KDJ", Some(&"D")) => Some(KdjLine::D),
            ("KDJ", Some(&"J")) => Some(KdjLine::J),
            _ => None,
        };
        let nums: Vec<usize> = rest
            .iter()
            .skip(usize::from(kdj_line.is_some()))
            .map(|p| p.parse::<usize>().ok().filter(|&v| v > 0))
            .collect::<Option<_>>()
            .ok_or_else(unknown)?;
        use IndicatorSpec::*;
        let spec = match (name, nums.as_slice()) {
            ("UOS", &[a, b, c]) => Uos(a, b, c),
            ("KDJ", &[n]) => Kdj(n, kdj_line.unwrap_or(KdjLine::J)),
            (_, &[n]) => match name {
                "WR" | "WILLIAMSR" => WilliamsR(n),
                "ROC" => Roc(n),
                "CCI" => Cci(n),
                "EMV" => Emv(n),
                "AR" => Ar(n),
                "BR" => Br(n),
                "SMA" => Sma(n),
                "RSI" => Rsi(n),
                "MTM" => Mtm(n),
                "RSV" => Rsv(n),
                _ => return Err(unknown()),
            },
            _ => return Err(unknown()),
        };
        if spec.periods().iter().any(|&p| p > 100_000) {
            return Err(unknown());
        }
        Ok(spec)
    }
}

impl Serialize for IndicatorSpec {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for IndicatorSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// The 30-column set: W%R 6/14/20, ROC 6/12/24/28, CCI 6/12/14/28, EMV 6/12/14/28,
/// UOS 7/14/28, AR 26, BR 26, KDJ 9 (J line), SMA 6/10/12/24/30, RSI 6/12/18/24/30, MTM 6.
pub fn full_indicator_set() -> Vec<IndicatorSpec> {
    use IndicatorSpec::*;
    let mut v = Vec::with_capacity(30);
    v.extend([6, 14, 20].map(WilliamsR));
    v.extend([6, 12, 24, 28].map(Roc));
    v.extend([6, 12, 14, 28].map(Cci));
    v.extend([6, 12, 14, 28].map(Emv));
    v.push(Uos(7, 14, 28));
    v.extend([Ar(26), Br(26), Kdj(9, KdjLine::J)]);
    v.extend([6, 10, 12, 24, 30].map(Sma));
    v.extend([6, 12, 18, 24, 30].map(Rsi));
    v.push(Mtm(6));
    v
}

/// The eight-column antecedent set: ROC 6/12/24/28, MTM 6, RSV 9, AR 26, BR 26.
pub fn antecedent_indicator_set() -> Vec<IndicatorSpec> {
    use IndicatorSpec::*;
    vec![Roc(6), Roc(12), Roc(24), Roc(28), Mtm(6), Rsv(9), Ar(26), Br(26)]
}

fn highest(bars: &[Bar]) -> f64 {
    bars.iter().map(|b| b.high).fold(f64::NEG_INFINITY, f64::max)
}

fn lowest(bars: &[Bar]) -> f64 {
    bars.iter().map(|b| b.low).fold(f64::INFINITY, f64::min)
}

/// Value for days `first..`, `None` before. `f` receives the day index.
fn per_day(len: usize, first: usize, f: impl FnMut(usize) -> f64) -> Vec<Option<f64>> {
    let mut f = f;
    (0..len).map(|t| (t >= first).then(|| f(t))).collect()
}

fn rsv_series(bars: &[Bar], n: usize, flagged: &mut usize) -> Vec<Option<f64>> {
    per_day(bars.len(), n - 1, |t| {
        let w = &bars[t + 1 - n..=t];
        let (hh, ll) = (highest(w), lowest(w));
        if hh == ll {
            *flagged += 1;
            50.0
        } else {
            100.0 * (bars[t].close - ll) / (hh - ll)
        }
    })
}

/// One indicator column; `None` marks warm-up days. Degenerate-window days
/// (zero range or zero denominator) take their documented fallback and are
/// reported at debug level.
pub fn compute_indicator(series: &OhlcvSeries, spec: IndicatorSpec) -> Vec<Option<f64>> {
    use IndicatorSpec::*;
    let bars = series.bars();
    let len = bars.len();
    let close = |t: usize| bars[t].close;
    let mut flagged = 0usize;
    let out = match spec {
        Roc(n) => per_day(len, n, |t| 100.0 * (close(t) - close(t - n)) / close(t - n)),
        Mtm(n) => per_day(len, n, |t| close(t) - close(t - n)),
        Sma(n) => per_day(len, n - 1, |t| bars[t + 1 - n..=t].iter().map(|b| b.close).sum::<f64>() / n as f64),
        WilliamsR(n) => per_day(len, n - 1, |t| {
            let w = &bars[t + 1 - n..=t];
            let (hh, ll) = (highest(w), lowest(w));
            if hh == ll {
                flagged += 1;
                -50.0
            } else {
                -100.0 * (hh - close(t)) / (hh - ll)
            }
        }),
        Rsv(n) => rsv_series(bars, n, &mut flagged),
        Kdj(n, line) => {
            let rsv = rsv_series(bars, n, &mut flagged);
            let (mut k, mut d) = (50.0, 50.0);
            rsv.iter()
                .map(|r| {
                    r.map(|r| {
                        k = 2.0 / 3.0 * k + r / 3.0;
                        d = 2.0 / 3.0 * d + k / 3.0;
                        match line {
                            KdjLine::K => k,
                            KdjLine::D => d,
                            KdjLine::J => 3.0 * k - 2.0 * d,
                        }
                    })
                })
                .collect()
        }
        Rsi(n) => per_day(len, n, |t| {
            let (mut gain, mut loss) = (0.0, 0.0);
            for s in t + 1 - n..=t {
                let ch = close(s) - close(s - 1);
                if ch > 0.0 {
                    gain += ch;
                } else {
                    loss -= ch;
                }
            }
            if gain == 0.0 && loss == 0.0 {
                50.0
            } else if loss == 0.0 {
                100.0
            } else {
                100.0 - 100.0 / (1.0 + gain / loss)
            }
        }),
        Cci(n) => {
            let tp: Vec<f64> = bars.iter().map(|b| (b.high + b.low + b.close) / 3.0).collect();
            per_day(len, n - 1, |t| {
                let w = &tp[t + 1 - n..=t];
                let ma = w.iter().sum::<f64>() / n as f64;
                let md = w.iter().map(|v| (v - ma).abs()).sum::<f64>() / n as f64;
                if md == 0.0 {
                    flagged += 1;
                    0.0
                } else {
                    (tp[t] - ma) / (0.015 * md)
                }
            })
        }
        Emv(n) => {
            let term = |s: usize| {
                let b = &bars[s];
                if b.volume == 0.0 {
                    return 0.0;
                }
                let p = &bars[s - 1];
                ((b.high + b.low) / 2.0 - (p.high + p.low) / 2.0) * (b.high - b.low) / b.volume
            };
            per_day(len, n, |t| (t + 1 - n..=t).map(term).sum::<f64>() / n as f64)
        }
        Uos(a, b, c) => {
            let pressure = |s: usize| {
                let cp = close(s - 1);
                let low = bars[s].low.min(cp);
                (close(s) - low, bars[s].high.max(cp) - low)
            };
            per_day(len, a.max(b).max(c), |t| {
                let avg = |n: usize| {
                    let (bp, tr) = (t + 1 - n..=t).map(pressure).fold((0.0, 0.0), |(x, y), (p, r)| (x + p, y + r));
                    if tr == 0.0 {
                        0.5
                    } else {
                        bp / tr
                    }
                };
                100.0 * (4.0 * avg(a) + 2.0 * avg(b) + avg(c)) / 7.0
            })
        }
        Ar(n) => per_day(len, n - 1, |t| {
            let w = &bars[t + 1 - n..=t];
            let up: f64 = w.iter().map(|b| b.high - b.open).sum();
            let down: f64 = w.iter().map(|b| b.open - b.low).sum();
            if down == 0.0 {
                flagged += 1;
                100.0
            } else {
                100.0 * up / down
            }
        }),
        Br(n) => per_day(len, n, |t| {
            let (mut up, mut down) = (0.0, 0.0);
            for s in t + 1 - n..=t {
                let cp = close(s - 1);
                up += (bars[s].high - cp).max(0.0);
                down += (cp - bars[s].low).max(0.0);
            }
            if down == 0.0 {
                flagged += 1;
                100.0
            } else {
                100.0 * up / down
            }
        }),
    };
    if flagged > 0 {
        log::debug!("{spec}: {flagged} day(s) used the degenerate-window fallback");
    }
    out
}

/// Indicator matrix with warm-up days dropped. Row `k` is series day `first_day + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorFrame {
    pub matrix: DataMatrix,
    pub first_day: usize,
}

pub fn compute_indicators(series: &OhlcvSeries, specs: &[IndicatorSpec]) -> Result<IndicatorFrame> {
    if specs.is_empty() {
        return Err(Error::InvalidParameter("no indicators requested".into()));
    }
    let first_day = specs.iter().map(IndicatorSpec::first_valid).max().unwrap_or(0);
    if series.len() <= first_day {
        return Err(Error::InsufficientData(format!(
            "{} days of data but the indicators need {} warm-up days",
            series.len(),
            first_day
        )));
    }
    let rows = series.len() - first_day;
    let mut values = Array2::zeros((rows, specs.len()));
    for (j, &spec) in specs.iter().enumerate() {
        let col = compute_indicator(series, spec);
        for k in 0..rows {
            values[[k, j]] = col[first_day + k].expect("past warm-up");
        }
    }
    let labels = series.dates()[first_day..].to_vec();
    let names = specs.iter().map(ToString::to_string).collect();
    Ok(IndicatorFrame {
        matrix: DataMatrix::new(labels, names, values)?,
        first_day,
    })
}

fn window_mean(closes: &[f64], start: usize, n: usize, what: &str) -> Result<f64> {
    if n == 0 {
        return Err(Error::InvalidParameter(format!("{what} window must be >= 1")));
    }
    let end = start.checked_add(n).filter(|&e| e <= closes.len()).ok_or_else(|| {
        Error::InsufficientData(format!("{what} window {start}..{} past series end {}", start + n, closes.len()))
    })?;
    Ok(closes[start..end].iter().sum::<f64>() / n as f64)
}

/// Mean close over days `i..i+n`, the labeling day included.
pub fn acp(closes: &[f64], i: usize, n: usize) -> Result<f64> {
    window_mean(closes, i, n, "ACP")
}

/// `(ACP_i - CP_i) / CP_i * 100`.
pub fn change_rate(closes: &[f64], i: usize, n: usize) -> Result<f64> {
    let a = acp(closes, i, n)?;
    Ok((a - closes[i]) / closes[i] * 100.0)
}

/// Seven left-closed bands at multiples of `t`.
pub fn trend_level(cr: f64, t: f64) -> i8 {
    if cr >= 3.0 * t {
        3
    } else if cr >= 2.0 * t {
        2
    } else if cr >= t {
        1
    } else if cr >= -t {
        0
    } else if cr >= -2.0 * t {
        -1
    } else if cr >= -3.0 * t {
        -2
    } else {
        -3
    }
}

/// Trailing mean close over days `i-n+1..=i`.
pub fn rolling_mean_price(closes: &[f64], i: usize, n: usize) -> Result<f64> {
    if n == 0 || i + 1 < n {
        return Err(Error::InsufficientData(format!("average price at day {i} needs {n} days of history")));
    }
    window_mean(closes, i + 1 - n, n, "average price")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelOptions {
    /// Label horizon in trading days.
    pub n: usize,
    /// Band width in percent.
    pub t: f64,
    /// Average days `i+1..=i+n` instead of `i..i+n`.
    pub window_offset: bool,
}

impl Default for LabelOptions {
    fn default() -> Self {
        LabelOptions {
            n: 5,
            t: 0.5,
            window_offset: false,
        }
    }
}

/// Per-day change rate and trend level; `None` where the window runs past the end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendLabels {
    pub cr: Vec<Option<f64>>,
    pub trend: Vec<Option<i8>>,
}

impl TrendLabels {
    pub fn is_valid(&self, day: usize) -> bool {
        self.trend.get(day).is_some_and(Option::is_some)
    }
}

pub fn trend_labels(closes: &[f64], opts: LabelOptions) -> Result<TrendLabels> {
    if opts.n == 0 || !(opts.t > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "label window must be >= 1 and threshold > 0, got n={} t={}",
            opts.n, opts.t
        )));
    }
    let shift = usize::from(opts.window_offset);
    let cr: Vec<Option<f64>> = (0..closes.len())
        .map(|i| {
            acp(closes, i + shift, opts.n)
                .ok()
                .map(|a| (a - closes[i]) / closes[i] * 100.0)
        })
        .collect();
    let trend = cr.iter().map(|c| c.map(|c| trend_level(c, opts.t))).collect();
    Ok(TrendLabels { cr, trend })
}
