//! Agglomerative hierarchical clustering and DBSCAN on Euclidean distance.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    /// Contiguous labels `0..num_clusters`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub num_clusters: usize,
}

impl ClusterAssignment {
    fn from_raw(raw: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let labels: Vec<usize> = raw
            .iter()
            .map(|r| {
                let next = map.len();
                *map.entry(*r).or_insert(next)
            })
            .collect();
        ClusterAssignment {
            num_clusters: map.len(),
            labels,
        }
    }

    /// Member indices of each cluster, in label order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Linkage {
    Single,
    Complete,
    #[default]
    Average,
    Ward,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum StopRule {
    NumClusters(usize),
    /// Stop before the first merge whose distance exceeds the threshold.
    DistanceThreshold(f64),
}

/// One agglomeration step. Clusters are named by their smallest member index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Merge {
    pub kept: usize,
    pub absorbed: usize,
    pub distance: f64,
    pub size: usize,
}

pub fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn check_points(points: &Array2<f64>) -> Result<()> {
    if points.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidMatrix("points contain non-finite coordinates".into()));
    }
    Ok(())
}

fn distance_matrix(points: &Array2<f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let v = euclidean(points.row(i), points.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Runs agglomeration until `stop` holds and returns the merge history.
///
/// Linkage distances are maintained with the Lance-Williams recurrences.
/// Among equally distant pairs the one with the smallest `(kept, absorbed)`
/// index pair merges first.
pub fn agglomerate(points: &Array2<f64>, linkage: Linkage, stop: StopRule) -> Result<(Vec<Merge>, Vec<usize>)> {
    let n = points.nrows();
    if n == 0 {
        return Err(Error::InvalidMatrix("cannot cluster an empty point set".into()));
    }
    check_points(points)?;
    let target = match stop {
        StopRule::NumClusters(k) if k == 0 || k > n => {
            return Err(Error::InvalidParameter(format!(
                "cluster count {k} outside 1..={n}"
            )))
        }
        StopRule::NumClusters(k) => k,
        StopRule::DistanceThreshold(t) if t.is_nan() => {
            return Err(Error::InvalidParameter("distance threshold is NaN".into()))
        }
        StopRule::DistanceThreshold(_) => 1,
    };

    let mut d = distance_matrix(points);
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    // owner[i]: representative of the cluster containing point i
    let mut owner: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(target));
    let mut remaining = n;

    while remaining > target {
        let mut best: Option<(usize, usize, f64)> = None;
        for a in (0..n).filter(|&a| active[a]) {
            for b in ((a + 1)..n).filter(|&b| active[b]) {
                if best.is_none_or(|(_, _, bd)| d[[a, b]] < bd) {
                    best = Some((a, b, d[[a, b]]));
                }
            }
        }
        let (a, b, dist) = best.expect("at least two active clusters");
        if let StopRule::DistanceThreshold(t) = stop {
            if dist > t {
                break;
            }
        }

        let (na, nb) = (size[a] as f64, size[b] as f64);
        for k in (0..n).filter(|&k| active[k] && k != a && k != b) {
            let (dak, dbk) = (d[[a, k]], d[[b, k]]);
            let nk = size[k] as f64;
            let v = match linkage {
                Linkage::Single => dak.min(dbk),
                Linkage::Complete => dak.max(dbk),
                Linkage::Average => (na * dak + nb * dbk) / (na + nb),
                Linkage::Ward => (((na + nk) * dak * dak + (nb + nk) * dbk * dbk - nk * dist * dist)
                    / (na + nb + nk))
                    .max(0.0)
                    .sqrt(),
            };
            d[[a, k]] = v;
            d[[k, a]] = v;
        }
        active[b] = false;
        size[a] += size[b];
        for o in owner.iter_mut().filter(|o| **o == b) {
            *o = a;
        }
        merges.push(Merge {
            kept: a,
            absorbed: b,
            distance: dist,
            size: size[a],
        });
        remaining -= 1;
    }
    Ok((merges, owner))
}

pub fn hierarchical_cluster(points: &Array2<f64>, linkage: Linkage, stop: StopRule) -> Result<ClusterAssignment> {
    let (_, owner) = agglomerate(points, linkage, stop)?;
    Ok(ClusterAssignment::from_raw(&owner))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DbscanLabels {
    /// Cluster id per point, [`DbscanLabels::NOISE`] for noise.
    pub labels: Vec<i64>,
    pub core: Vec<bool>,
}

impl DbscanLabels {
    pub const NOISE: i64 = -1;

    pub fn num_clusters(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| (m + 1).max(0) as usize)
    }

    pub fn cluster_of(&self, i: usize) -> Option<usize> {
        usize::try_from(self.labels[i]).ok()
    }

    /// Point indices of each cluster, ascending.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }

    pub fn noise(&self) -> Vec<usize> {
        (0..self.labels.len()).filter(|&i| self.labels[i] == Self::NOISE).collect()
    }
}

/// DBSCAN with a closed `eps`-ball that counts the point itself.
///
/// Points are scanned in index order. A border point reachable from several
/// clusters joins the first one that reaches it.
pub fn dbscan(points: &Array2<f64>, eps: f64, min_pts: usize) -> Result<DbscanLabels> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(Error::InvalidParameter(format!("eps must be positive and finite, got {eps}")));
    }
    if min_pts == 0 {
        return Err(Error::InvalidParameter("min_pts must be at least 1".into()));
    }
    check_points(points)?;
    let n = points.nrows();
    let neighbors: Vec<Vec<usize>> = (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| euclidean(points.row(i), points.row(j)) <= eps)
                .collect()
        })
        .collect();
    let core: Vec<bool> = neighbors.iter().map(|nb| nb.len() >= min_pts).collect();

    let mut labels = vec![DbscanLabels::NOISE; n];
    let mut next = 0i64;
    let mut queue = std::collections::VecDeque::new();
    for start in 0..n {
        if labels[start] != DbscanLabels::NOISE || !core[start] {
            continue;
        }
        labels[start] = next;
        queue.push_back(start);
        while let Some(p) = queue.pop_front() {
            for &q in &neighbors[p] {
                if labels[q] == DbscanLabels::NOISE {
                    labels[q] = next;
                    if core[q] {
                        queue.push_back(q);
                    }
                }
            }
        }
        next += 1;
    }
    Ok(DbscanLabels { labels, core })
}
