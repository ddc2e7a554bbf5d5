//! Seeded synthetic data: planted-bicluster matrices and a random-walk market.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::datamodel::{minmax_normalize, DataMatrix};
use crate::error::{Error, Result};
use crate::ohlcv::{Bar, OhlcvSeries};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantedSpec {
    pub nrows: usize,
    pub ncols: usize,
    pub blocks: usize,
    pub block_rows: usize,
    pub block_cols: usize,
    pub noise_sd: f64,
    /// Min-max normalize the result column-wise.
    pub normalize: bool,
    /// Scatter block rows and columns instead of laying blocks out contiguously.
    pub shuffle: bool,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            nrows: 200,
            ncols: 30,
            blocks: 3,
            block_rows: 60,
            block_cols: 10,
            noise_sd: 0.05,
            normalize: true,
            shuffle: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedBlock {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct Planted {
    pub matrix: DataMatrix,
    pub blocks: Vec<PlantedBlock>,
}

/// Disjoint additive blocks `r_i + c_j + noise` (offsets U[0,1]) on a U[0,1] background
/// that carries the same noise.
pub fn planted_additive(spec: &PlantedSpec, seed: u64) -> Result<Planted> {
    if spec.blocks * spec.block_rows > spec.nrows || spec.blocks * spec.block_cols > spec.ncols {
        return Err(Error::InvalidParameter(format!(
            "{} blocks of {}x{} do not fit disjointly in {}x{}",
            spec.blocks, spec.block_rows, spec.block_cols, spec.nrows, spec.ncols
        )));
    }
    let noise = Normal::new(0.0, spec.noise_sd)
        .map_err(|e| Error::InvalidParameter(format!("noise_sd: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut row_order: Vec<usize> = (0..spec.nrows).collect();
    let mut col_order: Vec<usize> = (0..spec.ncols).collect();
    if spec.shuffle {
        row_order.shuffle(&mut rng);
        col_order.shuffle(&mut rng);
    }

    let mut values = Array2::from_shape_fn((spec.nrows, spec.ncols), |_| rng.gen::<f64>());
    let mut blocks = Vec::with_capacity(spec.blocks);
    for b in 0..spec.blocks {
        let mut rows = row_order[b * spec.block_rows..(b + 1) * spec.block_rows].to_vec();
        let mut cols = col_order[b * spec.block_cols..(b + 1) * spec.block_cols].to_vec();
        rows.sort_unstable();
        cols.sort_unstable();
        let row_off: Vec<f64> = rows.iter().map(|_| rng.gen()).collect();
        let col_off: Vec<f64> = cols.iter().map(|_| rng.gen()).collect();
        for (i, &r) in rows.iter().enumerate() {
            for (j, &c) in cols.iter().enumerate() {
                values[[r, c]] = row_off[i] + col_off[j];
            }
        }
        blocks.push(PlantedBlock { rows, cols });
    }
    values.mapv_inplace(|v| v + noise.sample(&mut rng));

    let mut matrix = DataMatrix::from_values(values)?;
    if spec.normalize {
        matrix = minmax_normalize(&matrix)?.0;
    }
    Ok(Planted { matrix, blocks })
}

/// Jaccard index of two cell sets given as row and column index lists.
pub fn cell_jaccard(a_rows: &[usize], a_cols: &[usize], b_rows: &[usize], b_cols: &[usize]) -> f64 {
    let shared_rows = a_rows.iter().filter(|r| b_rows.contains(r)).count();
    let shared_cols = a_cols.iter().filter(|c| b_cols.contains(c)).count();
    let inter = shared_rows * shared_cols;
    let union = a_rows.len() * a_cols.len() + b_rows.len() * b_cols.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MarketSpec {
    pub days: usize,
    pub start_price: f64,
    /// First trading day, ISO format. Weekends are skipped.
    pub start_date: String,
    /// Daily drift magnitude of a trending regime.
    pub drift: f64,
    pub volatility: f64,
    pub min_regime: usize,
    pub max_regime: usize,
}

impl Default for MarketSpec {
    fn default() -> Self {
        MarketSpec {
            days: 400,
            start_price: 20.0,
            start_date: "2019-01-02".into(),
            drift: 0.006,
            volatility: 0.012,
            min_regime: 8,
            max_regime: 30,
        }
    }
}

/// Regime-switching geometric random walk: each regime draws a drift of
/// `-drift`, `0` or `+drift` and lasts `min_regime..=max_regime` days.
pub fn synthetic_market(spec: &MarketSpec, seed: u64) -> Result<OhlcvSeries> {
    let mut date = chrono::NaiveDate::parse_from_str(&spec.start_date, "%Y-%m-%d")
        .map_err(|e| Error::InvalidParameter(format!("start_date {:?}: {e}", spec.start_date)))?;
    if spec.min_regime == 0 || spec.min_regime > spec.max_regime || !(spec.start_price > 0.0) {
        return Err(Error::InvalidParameter("market spec out of range".into()));
    }
    let ret = Normal::new(0.0, spec.volatility).map_err(|e| Error::InvalidParameter(format!("volatility: {e}")))?;
    let gap = Normal::new(0.0, spec.volatility / 4.0).expect("finite");
    let wick = Normal::new(0.0, spec.volatility / 2.0).expect("finite");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut close = spec.start_price;
    let mut drift = 0.0;
    let mut left = 0usize;
    let mut bars = Vec::with_capacity(spec.days);
    for _ in 0..spec.days {
        use chrono::Datelike;
        while matches!(date.weekday(), chrono::Weekday::Sat | chrono::Weekday::Sun) {
            date = date.succ_opt().expect("date in range");
        }
        if left == 0 {
            drift = [-spec.drift, 0.0, spec.drift][rng.gen_range(0..3)];
            left = rng.gen_range(spec.min_regime..=spec.max_regime);
        }
        left -= 1;
        let open = close * (1.0 + gap.sample(&mut rng));
        let r: f64 = drift + ret.sample(&mut rng);
        close = (open * (1.0 + r)).max(0.01);
        let high = open.max(close) * (1.0 + wick.sample(&mut rng).abs());
        let low = open.min(close) * (1.0 - wick.sample(&mut rng).abs()).max(0.5);
        let volume = (1e6 * (1.0 + 20.0 * r.abs()) * rng.gen_range(0.7..1.3)).round();
        bars.push(Bar {
            date: date.format("%Y-%m-%d").to_string(),
            open,
            high,
            low,
            close,
            volume,
        });
        date = date.succ_opt().expect("date in range");
    }
    OhlcvSeries::new(bars)
}
