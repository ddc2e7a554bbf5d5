//! Fuzzy rules built from trading patterns, with product-t-norm inference and
//! weighted-average defuzzification.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::bicluster::Bicluster;
use crate::datamodel::DataMatrix;
use crate::error::{Error, Result};

/// Gaussian set `exp(-(v - center)^2 / (2 width^2))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzySet {
    pub center: f64,
    pub width: f64,
}

impl FuzzySet {
    pub fn new(center: f64, width: f64) -> Result<Self> {
        if !center.is_finite() || !(width.is_finite() && width > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "fuzzy set needs a finite center and positive width, got ({center}, {width})"
            )));
        }
        Ok(FuzzySet { center, width })
    }

    pub fn membership(&self, v: f64) -> f64 {
        let z = (v - self.center) / self.width;
        (-0.5 * z * z).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FuzzyRule {
    /// Indicator column index to its input set.
    pub antecedent: BTreeMap<usize, FuzzySet>,
    /// Output set on the trend scale.
    pub consequent: FuzzySet,
    /// Index of the source bicluster.
    pub provenance: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FuzzyOptions {
    pub width_floor: f64,
    pub match_floor: f64,
}

impl Default for FuzzyOptions {
    fn default() -> Self {
        FuzzyOptions {
            width_floor: 0.02,
            match_floor: 0.1,
        }
    }
}

impl FuzzyOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.width_floor.is_finite() && self.width_floor > 0.0) {
            return Err(Error::InvalidParameter(format!("width_floor must be > 0, got {}", self.width_floor)));
        }
        if !(0.0..1.0).contains(&self.match_floor) {
            return Err(Error::InvalidParameter(format!("match_floor must be in [0, 1), got {}", self.match_floor)));
        }
        Ok(())
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// One rule from one bicluster.
///
/// Antecedent sets take each bicluster column's mean and population std over the
/// bicluster rows. The consequent takes the mean and std of the trend levels on
/// the rows whose label is valid. Widths are floored at `width_floor`.
/// `trends[i]` is the label of matrix row `i`.
pub fn pattern_to_rule(x_norm: &DataMatrix, bc: &Bicluster, trends: &[Option<i8>], provenance: usize, width_floor: f64) -> Result<FuzzyRule> {
    if trends.len() != x_norm.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "{} trend labels for {} matrix rows",
            trends.len(),
            x_norm.nrows()
        )));
    }
    bc.validate(x_norm.shape(), None)?;
    let mut antecedent = BTreeMap::new();
    for &c in &bc.cols {
        let vals: Vec<f64> = bc.rows.iter().map(|&r| x_norm.get(r, c)).collect();
        let (mean, std) = mean_std(&vals);
        antecedent.insert(c, FuzzySet::new(mean, std.max(width_floor))?);
    }
    let levels: Vec<f64> = bc.rows.iter().filter_map(|&r| trends[r]).map(f64::from).collect();
    if levels.is_empty() {
        return Err(Error::InsufficientData(format!("bicluster {provenance} has no rows with a valid trend label")));
    }
    let (mean, std) = mean_std(&levels);
    Ok(FuzzyRule {
        antecedent,
        consequent: FuzzySet::new(mean, std.max(width_floor))?,
        provenance,
    })
}

/// Product of the antecedent memberships at `input`, which is a full indicator row.
pub fn firing_strength(rule: &FuzzyRule, input: &[f64]) -> Result<f64> {
    rule.antecedent.iter().try_fold(1.0, |acc, (&c, set)| {
        let v = input.get(c).ok_or_else(|| {
            Error::DimensionMismatch(format!("rule {} uses column {c} but the input has {}", rule.provenance, input.len()))
        })?;
        Ok(acc * set.membership(*v))
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RuleBase {
    pub rules: Vec<FuzzyRule>,
    pub match_floor: f64,
    /// Indicator names the antecedent column indices refer to.
    pub col_labels: Vec<String>,
}

impl RuleBase {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.match_floor) {
            return Err(Error::Schema(format!("match_floor {} not in [0, 1)", self.match_floor)));
        }
        if self.rules.windows(2).any(|w| w[0].provenance >= w[1].provenance) {
            return Err(Error::Schema("rules must be ordered by provenance".into()));
        }
        for r in &self.rules {
            let bad = |what: String| Err(Error::Schema(format!("rule {}: {what}", r.provenance)));
            if r.antecedent.is_empty() {
                return bad("empty antecedent".into());
            }
            for (&c, s) in &r.antecedent {
                if c >= self.col_labels.len() {
                    return bad(format!("column {c} beyond the {} indicator columns", self.col_labels.len()));
                }
                if !(0.0..=1.0).contains(&s.center) || !(s.width.is_finite() && s.width > 0.0) {
                    return bad(format!("antecedent set for column {c} is out of range"));
                }
            }
            let s = r.consequent;
            if !(-3.0..=3.0).contains(&s.center) || !(s.width.is_finite() && s.width > 0.0) {
                return bad("consequent set is out of range".into());
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }
}

/// One rule per bicluster, in bicluster order.
pub fn build_rule_base(x_norm: &DataMatrix, biclusters: &[Bicluster], trends: &[Option<i8>], opts: FuzzyOptions) -> Result<RuleBase> {
    opts.validate()?;
    let rules = biclusters
        .iter()
        .enumerate()
        .map(|(k, bc)| pattern_to_rule(x_norm, bc, trends, k, opts.width_floor))
        .collect::<Result<Vec<_>>>()?;
    let rb = RuleBase {
        rules,
        match_floor: opts.match_floor,
        col_labels: x_norm.col_labels().to_vec(),
    };
    rb.validate()?;
    Ok(rb)
}

/// Weighted average of consequent centers over rules firing at or above
/// `match_floor`; `None` when no rule does.
pub fn infer(rb: &RuleBase, input: &[f64]) -> Result<Option<f64>> {
    let (mut num, mut den) = (0.0, 0.0);
    for r in &rb.rules {
        let w = firing_strength(r, input)?;
        if w >= rb.match_floor && w > 0.0 {
            num += w * r.consequent.center;
            den += w;
        }
    }
    Ok((den > 0.0).then(|| num / den))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    fn rule(sets: &[(usize, f64, f64)], out: f64, provenance: usize) -> FuzzyRule {
        FuzzyRule {
            antecedent: sets.iter().map(|&(c, m, w)| (c, FuzzySet::new(m, w).unwrap())).collect(),
            consequent: FuzzySet::new(out, 0.5).unwrap(),
            provenance,
        }
    }

    fn base(rules: Vec<FuzzyRule>, floor: f64) -> RuleBase {
        RuleBase {
            rules,
            match_floor: floor,
            col_labels: (0..4).map(|i| format!("c{i}")).collect(),
        }
    }

    #[test]
    fn pattern_rule_examples() {
        let x = DataMatrix::from_values(array![[0.4, 0.1], [0.4, 0.9], [0.4, 0.5], [0.7, 0.2]]).unwrap();
        let bc = Bicluster::new(vec![0, 1, 2], vec![0, 1], 0.0);
        let trends = [Some(2), Some(2), Some(2), None];
        let r = pattern_to_rule(&x, &bc, &trends, 0, 0.02).unwrap();
        assert!((r.antecedent[&0].center - 0.4).abs() < 1e-15);
        assert_eq!(r.antecedent[&0].width, 0.02);
        assert_eq!(r.consequent.center, 2.0);
        assert_eq!(r.consequent.width, 0.02);

        // oracle: mean and population std by hand
        let (m, s) = {
            let v = [0.1, 0.9, 0.5];
            let m = (0.1 + 0.9 + 0.5) / 3.0;
            let s = (v.iter().map(|x: &f64| (x - m).powi(2)).sum::<f64>() / 3.0).sqrt();
            (m, s)
        };
        assert!((r.antecedent[&1].center - m).abs() < 1e-12);
        assert!((r.antecedent[&1].width - s).abs() < 1e-12);

        let none = [None, None, None, Some(1)];
        assert!(pattern_to_rule(&x, &bc, &none, 0, 0.02).is_err());
        let mixed = [Some(1), Some(-1), None, None];
        let r = pattern_to_rule(&x, &bc, &mixed, 0, 0.02).unwrap();
        assert_eq!((r.consequent.center, r.consequent.width), (0.0, 1.0));
    }

    #[test]
    fn firing_examples() {
        let r = rule(&[(0, 0.3, 0.1), (2, 0.6, 0.2)], 1.0, 0);
        assert_eq!(firing_strength(&r, &[0.3, 0.0, 0.6]).unwrap(), 1.0);
        assert!(firing_strength(&r, &[1.3, 0.0, 0.6]).unwrap() < 1e-20);
        let w = firing_strength(&r, &[0.4, 0.0, 0.8]).unwrap();
        assert!((w - (-1.0f64).exp()).abs() < 1e-12);
        assert!(firing_strength(&r, &[0.3, 0.0]).is_err());
    }

    #[test]
    fn infer_examples() {
        let one = base(vec![rule(&[(0, 0.3, 0.1)], 1.5, 0)], 0.1);
        assert_eq!(infer(&one, &[0.3]).unwrap(), Some(1.5));
        let two = base(vec![rule(&[(0, 0.3, 0.1)], 2.0, 0), rule(&[(0, 0.5, 0.1)], -2.0, 1)], 0.1);
        assert!(infer(&two, &[0.4]).unwrap().unwrap().abs() < 1e-12);
        assert_eq!(infer(&two, &[0.95]).unwrap(), None);
    }

    #[test]
    fn rule_base_validation_and_json() {
        let x = DataMatrix::from_values(Array2::from_shape_fn((6, 3), |(i, j)| ((i * 3 + j) % 5) as f64 / 4.0)).unwrap();
        let bcs = [Bicluster::new(vec![0, 1, 2], vec![0, 2], 0.0), Bicluster::new(vec![3, 4], vec![1, 2], 0.0)];
        let trends = [Some(1), Some(0), Some(2), Some(-1), Some(-2), None];
        let rb = build_rule_base(&x, &bcs, &trends, FuzzyOptions::default()).unwrap();
        assert_eq!(rb.len(), 2);
        let json = serde_json::to_string(&rb).unwrap();
        let back: RuleBase = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rb);
        back.validate().unwrap();

        let mut bad = rb.clone();
        bad.rules[0].antecedent.insert(7, FuzzySet { center: 0.5, width: 0.1 });
        assert!(bad.validate().is_err());
        let mut bad = rb.clone();
        bad.rules[1].consequent.center = 3.5;
        assert!(bad.validate().is_err());
        let mut bad = rb;
        bad.rules.swap(0, 1);
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn ybar_is_convex_combination(
            centers in proptest::collection::vec((0.0f64..1.0, 0.02f64..0.5, -3.0f64..3.0), 1..6),
            input in 0.0f64..1.0,
        ) {
            let rules = centers.iter().enumerate().map(|(k, &(c, w, o))| rule(&[(0, c, w)], o, k)).collect();
            let rb = base(rules, 0.1);
            if let Some(y) = infer(&rb, &[input]).unwrap() {
                let fired: Vec<f64> = rb.rules.iter()
                    .filter(|r| firing_strength(r, &[input]).unwrap() >= 0.1)
                    .map(|r| r.consequent.center)
                    .collect();
                let lo = fired.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = fired.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(y >= lo - 1e-12 && y <= hi + 1e-12);
            }
        }

        #[test]
        fn unfired_rule_changes_nothing(c in 0.0f64..0.3, input in 0.7f64..1.0, out in -3.0f64..3.0) {
            let rb = base(vec![rule(&[(0, input, 0.2)], 1.0, 0)], 0.1);
            let mut more = rb.clone();
            more.rules.push(rule(&[(0, c, 0.02)], out, 1));
            prop_assert_eq!(infer(&rb, &[input]).unwrap(), infer(&more, &[input]).unwrap());
        }

        #[test]
        fn firing_monotone_away_from_center(center in 0.0f64..1.0, w in 0.02f64..0.5, d1 in 0.0f64..1.0, d2 in 0.0f64..1.0) {
            let r = rule(&[(0, center, w)], 0.0, 0);
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(firing_strength(&r, &[center + far]).unwrap() <= firing_strength(&r, &[center + near]).unwrap());
        }
    }
}
