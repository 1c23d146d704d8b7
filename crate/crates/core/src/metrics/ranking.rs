//! Link prediction by rank at full recall.

use ndarray::Array2;

use crate::error::{Result, TmmsbError};
use crate::inference::FittedModel;
use crate::model::{receive_matrix, MembershipMatrix, TransactionLog};

/// Rank at full recall of every held-out message under a receive-probability
/// matrix `p` (rows are senders).
///
/// Candidates are all nodes except the sender, ranked by decreasing
/// probability; tied candidates all take the worst rank of their block. A
/// message scores the rank of its lowest-ranked true recipient.
pub fn message_ranks(p: &Array2<f64>, heldout: &TransactionLog) -> Result<Vec<usize>> {
    let m = heldout.num_nodes();
    if p.dim() != (m, m) {
        return Err(TmmsbError::Dimension(format!(
            "probability matrix {:?} for a log over {m} nodes",
            p.dim()
        )));
    }
    heldout
        .transactions()
        .iter()
        .enumerate()
        .map(|(n, t)| {
            let s = t.sender();
            let worst = t
                .recipients()
                .iter()
                .map(|&r| p[[s, r]])
                .min_by(f64::total_cmp)
                .ok_or_else(|| TmmsbError::InvalidTransaction {
                    index: n,
                    reason: "held-out message has no recipients".into(),
                })?;
            Ok((0..m).filter(|&j| j != s && p[[s, j]] >= worst).count())
        })
        .collect()
}

/// Mean rank at full recall for memberships and an interaction matrix.
pub fn rank_at_full_recall_with(
    pi: &MembershipMatrix,
    b: &Array2<f64>,
    heldout: &TransactionLog,
) -> Result<f64> {
    super::likelihood::check_dims(pi, b, heldout)?;
    mean_rank(&receive_matrix(pi, b), heldout)
}

pub fn rank_at_full_recall(model: &FittedModel, heldout: &TransactionLog) -> Result<f64> {
    rank_at_full_recall_with(&model.memberships, model.b(), heldout)
}

pub fn mean_rank(p: &Array2<f64>, heldout: &TransactionLog) -> Result<f64> {
    if heldout.is_empty() {
        return Err(TmmsbError::InsufficientData("no held-out messages".into()));
    }
    let ranks = message_ranks(p, heldout)?;
    Ok(ranks.iter().sum::<usize>() as f64 / ranks.len() as f64)
}
