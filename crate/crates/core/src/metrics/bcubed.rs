//! Soft BCubed precision and recall for comparing two mixed-membership
//! assignments.
//!
//! For nodes `e`, `e'` let `p = est(e) . est(e')` and `t = truth(e) . truth(e')`.
//! Pair precision is `min(p, t) / p` and pair recall is `min(p, t) / t`.
//! Scores average over all ordered pairs, self-pairs included; a pair whose
//! dot product is zero is left out of the corresponding average.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmmsbError};
use crate::model::MembershipMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SoftClusterScore {
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

impl SoftClusterScore {
    pub fn new(precision: f64, recall: f64) -> Self {
        let f_measure = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Self {
            precision,
            recall,
            f_measure,
        }
    }
}

/// Soft BCubed scores of `estimated` against `truth`. The two may use
/// different numbers of groups.
pub fn soft_bcubed(
    estimated: &MembershipMatrix,
    truth: &MembershipMatrix,
) -> Result<SoftClusterScore> {
    soft_bcubed_weights(estimated.as_array(), truth.as_array())
}

/// [`soft_bcubed`] on raw non-negative rows, e.g. 0/1 indicators of
/// overlapping clusters, where dot products count shared clusters.
pub fn soft_bcubed_weights(
    estimated: &Array2<f64>,
    truth: &Array2<f64>,
) -> Result<SoftClusterScore> {
    let m = estimated.nrows();
    if truth.nrows() != m {
        return Err(TmmsbError::Dimension(format!(
            "estimated memberships cover {m} nodes, truth covers {}",
            truth.nrows()
        )));
    }
    if estimated
        .iter()
        .chain(truth.iter())
        .any(|v| !(*v >= 0.0) || !v.is_finite())
    {
        return Err(TmmsbError::InvalidParameter(
            "membership weights must be finite and non-negative".into(),
        ));
    }
    let est = estimated.dot(&estimated.t());
    let tru = truth.dot(&truth.t());
    let (mut p_sum, mut p_n, mut r_sum, mut r_n) = (0.0, 0usize, 0.0, 0usize);
    for (&p, &t) in est.iter().zip(tru.iter()) {
        let shared = p.min(t);
        if p > 0.0 {
            p_sum += shared / p;
            p_n += 1;
        }
        if t > 0.0 {
            r_sum += shared / t;
            r_n += 1;
        }
    }
    let mean = |s: f64, n: usize| if n > 0 { s / n as f64 } else { 0.0 };
    Ok(SoftClusterScore::new(mean(p_sum, p_n), mean(r_sum, r_n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn identical_memberships_score_one() {
        let a = MembershipMatrix::new(array![[0.2, 0.8], [0.5, 0.5], [1.0, 0.0]]).unwrap();
        let s = soft_bcubed(&a, &a).unwrap();
        assert!((s.precision - 1.0).abs() < 1e-15);
        assert!((s.recall - 1.0).abs() < 1e-15);
        assert!((s.f_measure - 1.0).abs() < 1e-15);
    }

    #[test]
    fn hard_estimate_against_split_truth() {
        let est = MembershipMatrix::new(array![[1.0, 0.0], [1.0, 0.0]]).unwrap();
        let truth = MembershipMatrix::new(array![[0.5, 0.5], [0.5, 0.5]]).unwrap();
        let s = soft_bcubed(&est, &truth).unwrap();
        assert!((s.precision - 0.5).abs() < 1e-15);
        assert!((s.recall - 1.0).abs() < 1e-15);
        assert!((s.f_measure - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn f_of_zero_scores_is_zero() {
        assert_eq!(SoftClusterScore::new(0.0, 0.0).f_measure, 0.0);
    }
}
