//! R-type orthogonal factor model.
//!
//! Loadings are estimated with the principal-component method on the
//! correlation matrix: column `j` of `A` is `sqrt(lambda_j) * e_j`. The
//! loadings are then varimax-rotated, `B = A R`, and each row of `B` is used
//! downstream as the coordinates of one original variable in factor space.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::datamodel::DataMatrix;
use crate::eigen::symmetric_eigen;
use crate::error::{Error, Result};

/// Eigenvalues at or below this are treated as zero.
const POSITIVE_EIGEN_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Correlation {
    pub matrix: Array2<f64>,
    /// Zero-variance columns; their off-diagonal correlations are set to 0.
    pub degenerate: Vec<usize>,
}

/// Pearson correlation between the columns of `m`.
pub fn correlation_matrix(m: &DataMatrix) -> Result<Correlation> {
    let (n, p) = m.shape();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "correlation needs at least 2 rows, got {n}"
        )));
    }
    let x = m.values();
    let means: Vec<f64> = (0..p).map(|j| x.column(j).sum() / n as f64).collect();
    let centered = Array2::from_shape_fn((n, p), |(i, j)| x[[i, j]] - means[j]);
    let ss: Vec<f64> = (0..p).map(|j| centered.column(j).dot(&centered.column(j))).collect();
    let degenerate: Vec<usize> = (0..p)
        .filter(|&j| {
            // relative test: a column of 1e6 + rounding noise is still constant
            let scale = x.column(j).iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
            ss[j].sqrt() <= 1e-12 * scale * (n as f64).sqrt()
        })
        .collect();
    for &j in &degenerate {
        log::warn!("column {:?} has zero variance; its correlations are set to 0", m.col_labels()[j]);
    }
    let mut matrix = Array2::<f64>::eye(p);
    for a in 0..p {
        for b in (a + 1)..p {
            if degenerate.contains(&a) || degenerate.contains(&b) {
                continue;
            }
            let r = (centered.column(a).dot(&centered.column(b)) / (ss[a] * ss[b]).sqrt()).clamp(-1.0, 1.0);
            matrix[[a, b]] = r;
            matrix[[b, a]] = r;
        }
    }
    Ok(Correlation { matrix, degenerate })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum FactorCriterion {
    /// Eigenvalues greater than one.
    #[default]
    Kaiser,
    /// Smallest `m` whose leading eigenvalues explain at least this share of the total.
    Cumulative(f64),
    Fixed(usize),
}

/// Number of factors to retain; always at least 1 and at most `eigenvalues.len()`.
pub fn choose_num_factors(eigenvalues: &[f64], criterion: FactorCriterion) -> Result<usize> {
    let p = eigenvalues.len();
    if !eigenvalues.iter().any(|&l| l > 0.0) {
        return Err(Error::InvalidParameter("no positive eigenvalue".into()));
    }
    let m = match criterion {
        FactorCriterion::Kaiser => eigenvalues.iter().filter(|&&l| l > 1.0).count(),
        FactorCriterion::Cumulative(theta) => {
            let total: f64 = eigenvalues.iter().map(|l| l.max(0.0)).sum();
            let mut acc = 0.0;
            let mut m = p;
            for (k, l) in eigenvalues.iter().enumerate() {
                acc += l.max(0.0);
                if acc / total >= theta {
                    m = k + 1;
                    break;
                }
            }
            m
        }
        FactorCriterion::Fixed(m) => m,
    };
    Ok(m.clamp(1, p.max(1)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorModel {
    /// All eigenvalues of the correlation matrix, descending.
    pub eigenvalues: Vec<f64>,
    #[serde(with = "crate::serde_array")]
    pub loadings_a: Array2<f64>,
    #[serde(with = "crate::serde_array")]
    pub rotated_b: Array2<f64>,
    #[serde(with = "crate::serde_array")]
    pub rotation_r: Array2<f64>,
    pub num_factors: usize,
    pub explained_variance_ratio: Vec<f64>,
    /// Specific-factor variances `1 - sum_j a_ij^2`.
    pub residual_variances: Vec<f64>,
}

impl FactorModel {
    /// Applies varimax to the unrotated loadings.
    pub fn rotate(mut self, opts: VarimaxOptions) -> Result<Self> {
        let (b, r) = varimax_rotate(&self.loadings_a, opts)?;
        self.rotated_b = b;
        self.rotation_r = r;
        Ok(self)
    }

    pub fn communalities(&self) -> Array1<f64> {
        communalities(&self.loadings_a)
    }
}

pub fn communalities(loadings: &Array2<f64>) -> Array1<f64> {
    loadings.rows().into_iter().map(|r| r.dot(&r)).collect()
}

/// Principal-component loadings for the `m` leading factors.
///
/// If fewer than `m` eigenvalues are positive, `m` is reduced to that count.
pub fn extract_factors(corr: &Array2<f64>, m: usize) -> Result<FactorModel> {
    let p = corr.nrows();
    if m == 0 || m > p {
        return Err(Error::InvalidParameter(format!(
            "factor count {m} outside 1..={p}"
        )));
    }
    let eig = symmetric_eigen(corr)?;
    let positive = eig.values.iter().filter(|&&l| l > POSITIVE_EIGEN_FLOOR).count();
    if positive == 0 {
        return Err(Error::InvalidMatrix("correlation matrix has no positive eigenvalue".into()));
    }
    let m = if m > positive {
        log::warn!("requested {m} factors but only {positive} eigenvalues are positive; using {positive}");
        positive
    } else {
        m
    };

    let loadings_a = Array2::from_shape_fn((p, m), |(i, j)| eig.values[j].sqrt() * eig.vectors[[i, j]]);
    let trace: f64 = eig.values.iter().map(|l| l.max(0.0)).sum();
    let explained_variance_ratio = eig.values.iter().take(m).map(|l| l / trace).collect();
    let residual_variances = communalities(&loadings_a).iter().map(|h| 1.0 - h).collect();
    Ok(FactorModel {
        eigenvalues: eig.values.to_vec(),
        rotated_b: loadings_a.clone(),
        rotation_r: Array2::eye(m),
        loadings_a,
        num_factors: m,
        explained_variance_ratio,
        residual_variances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VarimaxOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Kaiser row normalization: rotate `a_i / h_i` instead of `a_i`.
    pub normalize: bool,
}

impl Default for VarimaxOptions {
    fn default() -> Self {
        VarimaxOptions {
            tol: 1e-6,
            max_iter: 100,
            normalize: true,
        }
    }
}

fn kaiser_normalized(a: &Array2<f64>) -> Array2<f64> {
    let h = communalities(a).mapv(f64::sqrt);
    Array2::from_shape_fn(a.dim(), |(i, j)| if h[i] > 0.0 { a[[i, j]] / h[i] } else { a[[i, j]] })
}

/// Sum over factors of the variance of the squared loadings.
///
/// With `normalize`, loadings are first divided by the square root of their
/// row communality, which is the quantity varimax maximizes.
pub fn varimax_criterion(loadings: &Array2<f64>, normalize: bool) -> f64 {
    let x = if normalize {
        kaiser_normalized(loadings)
    } else {
        loadings.clone()
    };
    let p = x.nrows() as f64;
    x.columns()
        .into_iter()
        .map(|c| {
            let sq = c.mapv(|v| v * v);
            let mean = sq.sum() / p;
            sq.mapv(|s| s * s).sum() / p - mean * mean
        })
        .sum()
}

/// Varimax rotation by cyclic sweeps of closed-form planar rotations.
///
/// Returns `(B, R)` with `B = A R` and `R` orthogonal. Columns of `R` are
/// sign-flipped so every column of `B` has a non-negative sum.
pub fn varimax_rotate(a: &Array2<f64>, opts: VarimaxOptions) -> Result<(Array2<f64>, Array2<f64>)> {
    let (p, m) = a.dim();
    if m == 0 || opts.max_iter == 0 {
        return Err(Error::InvalidParameter(
            "varimax needs at least one factor and one iteration".into(),
        ));
    }
    let mut r = Array2::<f64>::eye(m);
    if m == 1 || p == 0 {
        return Ok((a.clone(), r));
    }

    let mut x = if opts.normalize {
        kaiser_normalized(a)
    } else {
        a.clone()
    };
    let pf = p as f64;
    let mut crit = varimax_criterion(&x, false);
    for _ in 0..opts.max_iter {
        for j in 0..m {
            for k in (j + 1)..m {
                let (mut sa, mut sb, mut sc, mut sd) = (0.0, 0.0, 0.0, 0.0);
                for i in 0..p {
                    let (xj, xk) = (x[[i, j]], x[[i, k]]);
                    let u = xj * xj - xk * xk;
                    let v = 2.0 * xj * xk;
                    sa += u;
                    sb += v;
                    sc += u * u - v * v;
                    sd += 2.0 * u * v;
                }
                let num = sd - 2.0 * sa * sb / pf;
                let den = sc - (sa * sa - sb * sb) / pf;
                let phi = num.atan2(den) / 4.0;
                if phi.abs() < 1e-15 {
                    continue;
                }
                let (s, c) = phi.sin_cos();
                rotate_columns(&mut x, j, k, c, s);
                rotate_columns(&mut r, j, k, c, s);
            }
        }
        let next = varimax_criterion(&x, false);
        let gain = next - crit;
        crit = next;
        if gain < opts.tol {
            break;
        }
    }

    let mut b = a.dot(&r);
    for j in 0..m {
        if b.column(j).sum() < 0.0 {
            b.column_mut(j).mapv_inplace(|v| -v);
            r.column_mut(j).mapv_inplace(|v| -v);
        }
    }
    Ok((b, r))
}

fn rotate_columns(x: &mut Array2<f64>, j: usize, k: usize, c: f64, s: f64) {
    for i in 0..x.nrows() {
        let (xj, xk) = (x[[i, j]], x[[i, k]]);
        x[[i, j]] = c * xj + s * xk;
        x[[i, k]] = -s * xj + c * xk;
    }
}

/// Correlation, principal-component extraction and varimax in one call.
pub fn fit_factor_model(x: &DataMatrix, criterion: FactorCriterion, varimax: VarimaxOptions) -> Result<FactorModel> {
    let corr = correlation_matrix(x)?;
    let eig = symmetric_eigen(&corr.matrix)?;
    let m = choose_num_factors(&eig.values.to_vec(), criterion)?;
    extract_factors(&corr.matrix, m)?.rotate(varimax)
}
