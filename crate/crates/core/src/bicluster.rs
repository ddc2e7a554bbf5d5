//! Biclustering on orthogonal factors.
//!
//! Columns are grouped by their rotated factor loadings; within each column
//! group, rows are grouped by DBSCAN in the restricted column subspace. Each
//! dense row group over its column group is a candidate, and candidates are
//! kept when their mean squared residual is at most `delta`.

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::clustering::{dbscan, euclidean, hierarchical_cluster, ClusterAssignment, Linkage, StopRule};
use crate::datamodel::DataMatrix;
use crate::error::{Error, Result};
use crate::factor::{correlation_matrix, choose_num_factors, extract_factors, FactorCriterion, FactorModel, VarimaxOptions};
use crate::eigen::symmetric_eigen;
use crate::metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bicluster {
    pub rows: Vec<usize>,
    pub cols: Vec<usize>,
    pub msr: f64,
}

impl Bicluster {
    /// Sorts and deduplicates both index sets.
    pub fn new(mut rows: Vec<usize>, mut cols: Vec<usize>, msr: f64) -> Self {
        rows.sort_unstable();
        rows.dedup();
        cols.sort_unstable();
        cols.dedup();
        Bicluster { rows, cols, msr }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows.len(), self.cols.len())
    }

    pub fn cell_count(&self) -> usize {
        self.rows.len() * self.cols.len()
    }

    /// Checks the index sets against `shape` and, when `x` is given, the stored MSR.
    pub fn validate(&self, shape: (usize, usize), x: Option<&DataMatrix>) -> Result<()> {
        for (name, set, bound) in [("row", &self.rows, shape.0), ("column", &self.cols, shape.1)] {
            if set.is_empty() {
                return Err(Error::InvalidParameter(format!("bicluster has no {name}s")));
            }
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidParameter(format!("bicluster {name} indices must be sorted and unique")));
            }
            if let Some(&last) = set.last() {
                if last >= bound {
                    return Err(Error::IndexOutOfBounds(format!("{name} {last} out of {bound}")));
                }
            }
        }
        if !(self.msr.is_finite() && self.msr >= 0.0) {
            return Err(Error::InvalidParameter(format!("bicluster msr {} is not a finite non-negative number", self.msr)));
        }
        if let Some(x) = x {
            let m = metrics::msr(x, &self.rows, &self.cols)?;
            if (m - self.msr).abs() > 1e-12 * (1.0 + m.abs()) {
                return Err(Error::InvalidParameter(format!("stored msr {} differs from recomputed {m}", self.msr)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BcbofConfig {
    pub delta: f64,
    /// DBSCAN radius; when unset, half the median pairwise row distance of each restricted block.
    pub eps: Option<f64>,
    /// When unset, `max(4, ceil(0.02 * rows))`.
    pub min_pts: Option<usize>,
    pub factor_criterion: FactorCriterion,
    pub linkage: Linkage,
    /// When unset, cut the dendrogram at as many clusters as there are factors.
    pub column_stop: Option<StopRule>,
    /// Scale each loading row to unit length before clustering columns.
    pub normalize_loadings: bool,
    pub varimax: VarimaxOptions,
}

impl Default for BcbofConfig {
    fn default() -> Self {
        BcbofConfig {
            delta: 0.01,
            eps: None,
            min_pts: None,
            factor_criterion: FactorCriterion::Kaiser,
            linkage: Linkage::Average,
            column_stop: None,
            normalize_loadings: false,
            varimax: VarimaxOptions::default(),
        }
    }
}

impl BcbofConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta >= 0.0) {
            return Err(Error::InvalidParameter(format!("delta must be >= 0, got {}", self.delta)));
        }
        if let Some(eps) = self.eps {
            if !(eps.is_finite() && eps > 0.0) {
                return Err(Error::InvalidParameter(format!("eps must be > 0, got {eps}")));
            }
        }
        if self.min_pts == Some(0) {
            return Err(Error::InvalidParameter("min_pts must be >= 1".into()));
        }
        match self.column_stop {
            Some(StopRule::NumClusters(0)) => Err(Error::InvalidParameter("column_stop cluster count must be >= 1".into())),
            Some(StopRule::DistanceThreshold(t)) if !(t >= 0.0) => {
                Err(Error::InvalidParameter(format!("column_stop distance must be >= 0, got {t}")))
            }
            _ => Ok(()),
        }
    }
}

/// DBSCAN settings actually used for one column cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnClusterRun {
    pub cols: Vec<usize>,
    pub eps: f64,
    pub min_pts: usize,
    pub row_clusters: usize,
    pub noise_rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BcbofOutput {
    pub factor_model: FactorModel,
    pub column_clusters: ClusterAssignment,
    pub runs: Vec<ColumnClusterRun>,
    /// Every assembled candidate before the `delta` filter, in assembly order.
    pub candidates: Vec<Bicluster>,
    /// Candidates with `msr <= delta`, ascending by MSR.
    pub biclusters: Vec<Bicluster>,
}

pub fn bcbof(x: &DataMatrix, cfg: &BcbofConfig) -> Result<Vec<Bicluster>> {
    Ok(bcbof_detailed(x, cfg)?.biclusters)
}

pub fn default_min_pts(nrows: usize) -> usize {
    ((0.02 * nrows as f64).ceil() as usize).max(4)
}

/// Half the median pairwise Euclidean distance between rows of `points`.
pub fn default_eps(points: &Array2<f64>) -> f64 {
    let n = points.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push(euclidean(points.row(i), points.row(j)));
        }
    }
    if d.is_empty() {
        return f64::MIN_POSITIVE;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    let median = if d.len() % 2 == 0 { (d[mid - 1] + d[mid]) / 2.0 } else { d[mid] };
    // identical rows give a zero median; eps must stay positive
    (0.5 * median).max(f64::MIN_POSITIVE)
}

fn loading_points(model: &FactorModel, normalize: bool) -> Array2<f64> {
    let mut b = model.rotated_b.clone();
    if normalize {
        for mut row in b.axis_iter_mut(Axis(0)) {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
    }
    b
}

pub fn bcbof_detailed(x: &DataMatrix, cfg: &BcbofConfig) -> Result<BcbofOutput> {
    cfg.validate()?;
    let (n, p) = x.shape();
    if n < 2 || p < 2 {
        return Err(Error::InvalidMatrix(format!("biclustering needs at least 2x2 data, got {n}x{p}")));
    }
    if x.values().iter().any(|&v| !(0.0..=1.0).contains(&v)) {
        log::warn!("input matrix has values outside [0, 1]; min-max normalize it first");
    }

    let corr = correlation_matrix(x)?;
    let eig = symmetric_eigen(&corr.matrix)?;
    let m = choose_num_factors(&eig.values.to_vec(), cfg.factor_criterion)?;
    let model = extract_factors(&corr.matrix, m)?.rotate(cfg.varimax)?;
    log::debug!("{} factors retained from {p} columns", model.num_factors);

    let stop = cfg.column_stop.unwrap_or(StopRule::NumClusters(model.num_factors));
    let column_clusters = hierarchical_cluster(&loading_points(&model, cfg.normalize_loadings), cfg.linkage, stop)?;

    let min_pts = cfg.min_pts.unwrap_or_else(|| default_min_pts(n));
    let mut runs = Vec::new();
    let mut candidates = Vec::new();
    for cols in column_clusters.members() {
        if cols.len() < 2 {
            continue;
        }
        let restricted = x.values().select(Axis(1), &cols);
        let eps = cfg.eps.unwrap_or_else(|| default_eps(&restricted));
        let labels = dbscan(&restricted, eps, min_pts)?;
        let clusters = labels.clusters();
        runs.push(ColumnClusterRun {
            cols: cols.clone(),
            eps,
            min_pts,
            row_clusters: clusters.len(),
            noise_rows: labels.noise().len(),
        });
        for rows in clusters.into_iter().filter(|r| r.len() >= 2) {
            let h = metrics::msr(x, &rows, &cols)?;
            candidates.push(Bicluster::new(rows, cols.clone(), h));
        }
    }

    let mut biclusters: Vec<Bicluster> = candidates.iter().filter(|b| b.msr <= cfg.delta).cloned().collect();
    biclusters.sort_by(|a, b| {
        a.msr
            .total_cmp(&b.msr)
            .then_with(|| a.cols.cmp(&b.cols))
            .then_with(|| a.rows.cmp(&b.rows))
    });
    log::info!(
        "{} of {} candidate biclusters pass delta = {}",
        biclusters.len(),
        candidates.len(),
        cfg.delta
    );
    Ok(BcbofOutput {
        factor_model: model,
        column_clusters,
        runs,
        candidates,
        biclusters,
    })
}
