//! Bicluster quality measures.
//!
//! Variance-based: MSR, VAR, MAR, SMSR and the relevance index. Standardization-based:
//! MSA and virtual error, both computed on the row-standardized block. Plus the
//! size and overlap summary of a set of biclusters.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::bicluster::Bicluster;
use crate::datamodel::DataMatrix;
use crate::error::{Error, Result};

/// Row, column and block means of a submatrix.
struct Means {
    block: Array2<f64>,
    row: Array1<f64>,
    col: Array1<f64>,
    all: f64,
}

fn submatrix(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<Array2<f64>> {
    if rows.is_empty() || cols.is_empty() {
        return Err(Error::InvalidParameter("bicluster index sets must be non-empty".into()));
    }
    if let Some(r) = rows.iter().find(|&&r| r >= x.nrows()) {
        return Err(Error::IndexOutOfBounds(format!("row {r} in a matrix with {} rows", x.nrows())));
    }
    if let Some(c) = cols.iter().find(|&&c| c >= x.ncols()) {
        return Err(Error::IndexOutOfBounds(format!("column {c} in a matrix with {} columns", x.ncols())));
    }
    Ok(Array2::from_shape_fn((rows.len(), cols.len()), |(i, j)| x.get(rows[i], cols[j])))
}

fn means(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<Means> {
    let block = submatrix(x, rows, cols)?;
    let row = block.mean_axis(ndarray::Axis(1)).expect("non-empty");
    let col = block.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let all = block.mean().expect("non-empty");
    Ok(Means { block, row, col, all })
}

fn residuals(m: &Means) -> Array2<f64> {
    Array2::from_shape_fn(m.block.dim(), |(i, j)| m.block[[i, j]] - m.row[i] - m.col[j] + m.all)
}

/// Mean squared residual `H(I, J)`.
pub fn msr(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    let m = means(x, rows, cols)?;
    Ok(residuals(&m).mapv(|r| r * r).mean().expect("non-empty"))
}

/// Sum of squared deviations from the block mean (not divided by the cell count).
pub fn var_metric(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    let m = means(x, rows, cols)?;
    Ok(m.block.iter().map(|v| (v - m.all) * (v - m.all)).sum())
}

/// [`var_metric`] divided by `|I||J|`, comparable across bicluster sizes.
pub fn var_per_cell(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    Ok(var_metric(x, rows, cols)? / (rows.len() * cols.len()) as f64)
}

pub fn mar(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    let m = means(x, rows, cols)?;
    Ok(residuals(&m).mapv(f64::abs).mean().expect("non-empty"))
}

/// Scaled mean squared residual. Zero row or column means make a term undefined.
pub fn smsr(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<f64> {
    let m = means(x, rows, cols)?;
    if let Some(i) = m.row.iter().position(|&v| v == 0.0) {
        return Err(Error::Undefined(format!("SMSR: row {} has zero mean", rows[i])));
    }
    if let Some(j) = m.col.iter().position(|&v| v == 0.0) {
        return Err(Error::Undefined(format!("SMSR: column {} has zero mean", cols[j])));
    }
    let total: f64 = m
        .block
        .indexed_iter()
        .map(|((i, j), &a)| {
            let (ri, cj) = (m.row[i], m.col[j]);
            let num = ri * cj - a * m.all;
            num * num / (ri * ri * cj * cj)
        })
        .sum();
    Ok(total / m.block.len() as f64)
}

fn population_variance<'a>(values: impl Iterator<Item = &'a f64> + Clone) -> f64 {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceIndex {
    pub per_column: Vec<f64>,
    pub mean: f64,
}

/// `RI_j = 1 - s2_local / s2_global` for each bicluster column, and their mean.
pub fn relevance_index(x: &DataMatrix, rows: &[usize], cols: &[usize]) -> Result<RelevanceIndex> {
    let block = submatrix(x, rows, cols)?;
    let mut per_column = Vec::with_capacity(cols.len());
    for (k, &j) in cols.iter().enumerate() {
        let global = population_variance(x.column(j).into_iter());
        let scale = x.column(j).iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
        if global <= (1e-15 * scale).powi(2) {
            return Err(Error::Undefined(format!(
                "relevance index: column {j} ({:?}) has zero global variance",
                x.col_labels()[j]
            )));
        }
        let local = population_variance(block.column(k).into_iter());
        per_column.push(1.0 - local / global);
    }
    let mean = per_column.iter().sum::<f64>() / per_column.len() as f64;
    Ok(RelevanceIndex { per_column, mean })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// Divide by the number of values.
    #[default]
    Population,
    /// Divide by the number of values minus one.
    Sample,
}

fn mean_sigma(v: &[f64], kind: SigmaKind) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    let denom = match kind {
        SigmaKind::Population => n,
        SigmaKind::Sample => (n - 1.0).max(1.0),
    };
    (mean, (ss / denom).sqrt())
}

fn is_degenerate_sigma(mean: f64, sigma: f64) -> bool {
    sigma <= 1e-12 * (1.0 + mean.abs())
}

/// Row z-scores of the block: `(a_ij - mu_i) / sigma_i` over the selected columns.
pub fn standardize_bicluster(x: &DataMatrix, rows: &[usize], cols: &[usize], kind: SigmaKind) -> Result<Array2<f64>> {
    let mut block = submatrix(x, rows, cols)?;
    for (i, mut row) in block.rows_mut().into_iter().enumerate() {
        let (mu, sigma) = mean_sigma(&row.to_vec(), kind);
        if is_degenerate_sigma(mu, sigma) {
            return Err(Error::Undefined(format!(
                "row {} has zero standard deviation over the bicluster columns",
                rows[i]
            )));
        }
        row.mapv_inplace(|v| (v - mu) / sigma);
    }
    Ok(block)
}

/// Maximal standard area of a standardized block; 0 for fewer than two columns.
pub fn msa(standardized: &Array2<f64>) -> f64 {
    let ranges: Vec<f64> = standardized
        .columns()
        .into_iter()
        .map(|c| {
            let (lo, hi) = c.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            hi - lo
        })
        .collect();
    ranges.windows(2).map(|w| ((w[0] + w[1]) / 2.0).abs()).sum()
}

/// Virtual error of a standardized block against its standardized column-mean pattern.
///
/// When the column-mean vector is constant its standardization is undefined;
/// the pattern is then taken as the zero vector.
pub fn virtual_error(standardized: &Array2<f64>, kind: SigmaKind) -> f64 {
    let pattern = standardized.mean_axis(ndarray::Axis(0)).expect("non-empty").to_vec();
    let (mu, sigma) = mean_sigma(&pattern, kind);
    let pattern: Vec<f64> = if is_degenerate_sigma(mu, sigma) {
        vec![0.0; pattern.len()]
    } else {
        pattern.iter().map(|p| (p - mu) / sigma).collect()
    };
    standardized
        .indexed_iter()
        .map(|((_, j), &a)| (a - pattern[j]).abs())
        .sum::<f64>()
        / standardized.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapStats {
    pub count: usize,
    pub avg_rows: f64,
    pub avg_cols: f64,
    /// Cells covered at least twice over cells covered at least once.
    pub overlap: f64,
}

pub fn overlap_stats(biclusters: &[Bicluster], shape: (usize, usize)) -> OverlapStats {
    let count = biclusters.len();
    if count == 0 {
        return OverlapStats {
            count,
            avg_rows: 0.0,
            avg_cols: 0.0,
            overlap: 0.0,
        };
    }
    let (n, p) = shape;
    let mut hits = vec![0u32; n * p];
    for bc in biclusters {
        for &r in bc.rows.iter().filter(|&&r| r < n) {
            for &c in bc.cols.iter().filter(|&&c| c < p) {
                hits[r * p + c] += 1;
            }
        }
    }
    let covered = hits.iter().filter(|&&h| h >= 1).count();
    let multi = hits.iter().filter(|&&h| h >= 2).count();
    OverlapStats {
        count,
        avg_rows: biclusters.iter().map(|b| b.rows.len()).sum::<usize>() as f64 / count as f64,
        avg_cols: biclusters.iter().map(|b| b.cols.len()).sum::<usize>() as f64 / count as f64,
        overlap: if covered == 0 { 0.0 } else { multi as f64 / covered as f64 },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsOptions {
    pub sigma: SigmaKind,
}

impl Default for MetricsOptions {
    fn default() -> Self {
        MetricsOptions {
            sigma: SigmaKind::Population,
        }
    }
}

/// Every metric for one bicluster. Metrics that are undefined for the block
/// are `None`, with the reason in `notes`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiclusterMetrics {
    pub bicluster: usize,
    pub rows: usize,
    pub cols: usize,
    pub msr: f64,
    pub var: f64,
    pub mar: f64,
    pub smsr: Option<f64>,
    pub mean_ri: Option<f64>,
    pub per_column_ri: Option<Vec<f64>>,
    pub msa: Option<f64>,
    pub ve: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

/// Means of each metric over the biclusters where it is defined.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub msr: Option<f64>,
    pub var: Option<f64>,
    pub mar: Option<f64>,
    pub smsr: Option<f64>,
    pub mean_ri: Option<f64>,
    pub msa: Option<f64>,
    pub ve: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub biclusters: Vec<BiclusterMetrics>,
    pub aggregate: AggregateMetrics,
    pub bicluster_count: usize,
    pub avg_rows: f64,
    pub avg_cols: f64,
    pub overlap: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runtime_seconds: Option<f64>,
}

pub fn bicluster_metrics(x: &DataMatrix, index: usize, bc: &Bicluster, opts: MetricsOptions) -> Result<BiclusterMetrics> {
    let (rows, cols) = (&bc.rows[..], &bc.cols[..]);
    let mut notes = Vec::new();
    let mut keep = |r: Result<f64>| match r {
        Ok(v) => Some(v),
        Err(e) => {
            notes.push(e.to_string());
            None
        }
    };
    let msr_v = msr(x, rows, cols)?;
    let var_v = var_metric(x, rows, cols)?;
    let mar_v = mar(x, rows, cols)?;
    let smsr_v = keep(smsr(x, rows, cols));
    let ri = relevance_index(x, rows, cols);
    let std = standardize_bicluster(x, rows, cols, opts.sigma);
    let (msa_v, ve_v) = match &std {
        Ok(a) => (Some(msa(a)), Some(virtual_error(a, opts.sigma))),
        Err(_) => (None, None),
    };
    if let Err(e) = &std {
        notes.push(e.to_string());
    }
    let (mean_ri, per_column_ri) = match ri {
        Ok(r) => (Some(r.mean), Some(r.per_column)),
        Err(e) => {
            notes.push(e.to_string());
            (None, None)
        }
    };
    Ok(BiclusterMetrics {
        bicluster: index,
        rows: rows.len(),
        cols: cols.len(),
        msr: msr_v,
        var: var_v,
        mar: mar_v,
        smsr: smsr_v,
        mean_ri,
        per_column_ri,
        msa: msa_v,
        ve: ve_v,
        notes,
    })
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values.flatten().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Evaluates every bicluster; an out-of-bounds index names the offending bicluster.
pub fn evaluate(x: &DataMatrix, biclusters: &[Bicluster], opts: MetricsOptions) -> Result<MetricsReport> {
    let per: Vec<BiclusterMetrics> = biclusters
        .iter()
        .enumerate()
        .map(|(k, bc)| {
            bicluster_metrics(x, k, bc, opts).map_err(|e| match e {
                Error::IndexOutOfBounds(msg) => Error::IndexOutOfBounds(format!("bicluster {k}: {msg}")),
                other => other,
            })
        })
        .collect::<Result<_>>()?;
    let aggregate = AggregateMetrics {
        msr: mean_defined(per.iter().map(|m| Some(m.msr))),
        var: mean_defined(per.iter().map(|m| Some(m.var))),
        mar: mean_defined(per.iter().map(|m| Some(m.mar))),
        smsr: mean_defined(per.iter().map(|m| m.smsr)),
        mean_ri: mean_defined(per.iter().map(|m| m.mean_ri)),
        msa: mean_defined(per.iter().map(|m| m.msa)),
        ve: mean_defined(per.iter().map(|m| m.ve)),
    };
    let stats = overlap_stats(biclusters, x.shape());
    Ok(MetricsReport {
        biclusters: per,
        aggregate,
        bicluster_count: stats.count,
        avg_rows: stats.avg_rows,
        avg_cols: stats.avg_cols,
        overlap: stats.overlap,
        runtime_seconds: None,
    })
}

impl MetricsReport {
    /// One CSV row per bicluster followed by a `mean` row.
    pub fn to_csv_string(&self) -> String {
        fn cell(v: Option<f64>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let mut out = String::from("bicluster,rows,cols,msr,var,mar,smsr,mean_ri,msa,ve\n");
        for m in &self.biclusters {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                m.bicluster,
                m.rows,
                m.cols,
                m.msr,
                m.var,
                m.mar,
                cell(m.smsr),
                cell(m.mean_ri),
                cell(m.msa),
                cell(m.ve)
            ));
        }
        let a = &self.aggregate;
        out.push_str(&format!(
            "mean,{},{},{},{},{},{},{},{},{}\n",
            self.avg_rows,
            self.avg_cols,
            cell(a.msr),
            cell(a.var),
            cell(a.mar),
            cell(a.smsr),
            cell(a.mean_ri),
            cell(a.msa),
            cell(a.ve)
        ));
        out
    }
}
