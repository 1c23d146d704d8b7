//! Per-group summaries of a fitted model.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::inference::FittedModel;
use crate::model::{receive_matrix, MembershipMatrix, TransactionLog};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupStats {
    /// Membership-weighted mean of messages sent; `None` for an empty group.
    pub n_sent: Option<f64>,
    /// Membership-weighted mean of messages received; `None` for an empty group.
    pub n_recv: Option<f64>,
    /// `sum_i pi_ik`.
    pub expected_size: f64,
    /// Nodes whose most probable group is this one.
    pub hard_size: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub groups: Vec<GroupStats>,
    /// `B` with column `l` multiplied by the expected size of group `l`:
    /// expected recipients in each group for a single message.
    pub weighted_b: Array2<f64>,
    pub b: Array2<f64>,
}

/// Scales column `l` of `b` by `sizes[l]`.
pub fn size_weighted_b(b: &Array2<f64>, sizes: &[f64]) -> Array2<f64> {
    Array2::from_shape_fn(b.dim(), |(r, c)| b[[r, c]] * sizes[c])
}

pub fn group_summaries_with(
    pi: &MembershipMatrix,
    b: &Array2<f64>,
    log: &TransactionLog,
) -> Result<GroupSummary> {
    super::likelihood::check_dims(pi, b, log)?;
    let k = pi.k();
    let sent = log.sent_counts();
    let recv = log.received_counts();
    let labels = pi.hard_labels();
    let p = pi.as_array();
    let groups = (0..k)
        .map(|g| {
            let col = p.column(g);
            let size: f64 = col.sum();
            let weighted = |counts: &[u64]| {
                (size > 0.0).then(|| {
                    col.iter()
                        .zip(counts)
                        .map(|(w, &c)| w * c as f64)
                        .sum::<f64>()
                        / size
                })
            };
            GroupStats {
                n_sent: weighted(&sent),
                n_recv: weighted(&recv),
                expected_size: size,
                hard_size: labels.iter().filter(|&&l| l == g).count(),
            }
        })
        .collect::<Vec<_>>();
    let sizes: Vec<f64> = groups.iter().map(|g| g.expected_size).collect();
    Ok(GroupSummary {
        weighted_b: size_weighted_b(b, &sizes),
        b: b.clone(),
        groups,
    })
}

pub fn group_summaries(model: &FittedModel, log: &TransactionLog) -> Result<GroupSummary> {
    group_summaries_with(&model.memberships, model.b(), log)
}

/// Expected message counts: `s_i * p_ij` off the diagonal, where `s_i` is
/// the number of messages node `i` sent.
pub fn predicted_frequency_matrix(
    model: &FittedModel,
    log: &TransactionLog,
) -> Result<Array2<f64>> {
    predicted_frequency_with(&model.memberships, model.b(), log)
}

pub fn predicted_frequency_with(
    pi: &MembershipMatrix,
    b: &Array2<f64>,
    log: &TransactionLog,
) -> Result<Array2<f64>> {
    super::likelihood::check_dims(pi, b, log)?;
    let sent = log.sent_counts();
    let mut p = receive_matrix(pi, b);
    for (mut row, &s) in p.rows_mut().into_iter().zip(&sent) {
        row.mapv_inplace(|v| v * s as f64);
    }
    Ok(p)
}

impl GroupSummary {
    /// Aligned text table: one row per group with `n_sent`, `n_recv`,
    /// `E(m)`, `m_hat` and `100 x B`.
    pub fn render_table(&self) -> String {
        let k = self.groups.len();
        let mut out = String::new();
        let mut header = format!(
            "{:>8} {:>8} {:>8} {:>6} |",
            "n_sent", "n_recv", "E(m)", "m_hat"
        );
        for l in 0..k {
            header.push_str(&format!(" {:>6}", l + 1));
        }
        header.push_str(" | group");
        out.push_str(&header);
        out.push('\n');
        out.push_str(&"-".repeat(header.len()));
        out.push('\n');
        let fmt_opt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.1}"));
        for (g, stats) in self.groups.iter().enumerate() {
            let mut line = format!(
                "{:>8} {:>8} {:>8.1} {:>6} |",
                fmt_opt(stats.n_sent),
                fmt_opt(stats.n_recv),
                stats.expected_size,
                stats.hard_size
            );
            for l in 0..k {
                line.push_str(&format!(" {:>6.1}", 100.0 * self.b[[g, l]]));
            }
            line.push_str(&format!(" | {}", g + 1));
            out.push_str(&line);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Transaction;
    use ndarray::array;

    fn log() -> TransactionLog {
        TransactionLog::new(
            4,
            vec![
                Transaction::new(0, [1]).unwrap(),
                Transaction::new(0, [2, 3]).unwrap(),
                Transaction::new(1, [0]).unwrap(),
                Transaction::new(2, [0, 1]).unwrap(),
                Transaction::new(2, [3]).unwrap(),
                Transaction::new(2, [1]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn one_hot_means_are_plain_means() {
        let pi = MembershipMatrix::one_hot(&[0, 0, 1, 1], 2).unwrap();
        let s = group_summaries_with(&pi, &array![[0.1, 0.2], [0.3, 0.4]], &log()).unwrap();
        assert_eq!(s.groups[0].n_sent, Some(1.5));
        assert_eq!(s.groups[1].n_sent, Some(1.5));
        assert_eq!(s.groups[0].n_recv, Some(2.5));
        assert_eq!(s.groups[0].hard_size, 2);
    }

    #[test]
    fn uniform_memberships_give_global_means() {
        let pi = MembershipMatrix::new(Array2::from_elem((4, 2), 0.5)).unwrap();
        let s = group_summaries_with(&pi, &array![[0.1, 0.2], [0.3, 0.4]], &log()).unwrap();
        for g in &s.groups {
            assert!((g.n_sent.unwrap() - 1.5).abs() < 1e-15);
            assert!((g.expected_size - 2.0).abs() < 1e-15);
        }
        // Ties resolve to the first group.
        assert_eq!(s.groups[0].hard_size, 4);
    }

    #[test]
    fn empty_group_has_undefined_rates() {
        let pi = MembershipMatrix::one_hot(&[0, 0, 0, 0], 2).unwrap();
        let s = group_summaries_with(&pi, &array![[0.1, 0.2], [0.3, 0.4]], &log()).unwrap();
        assert_eq!(s.groups[1].n_sent, None);
        assert_eq!(s.groups[1].expected_size, 0.0);
        assert!(s.render_table().contains('-'));
    }

    #[test]
    fn frequency_matrix_entries() {
        let pi = MembershipMatrix::one_hot(&[0, 1, 1, 0], 2).unwrap();
        let b = array![[0.5, 0.2], [0.1, 0.3]];
        let f = predicted_frequency_with(&pi, &b, &log()).unwrap();
        assert!((f[[2, 3]] - 3.0 * 0.1).abs() < 1e-15);
        assert_eq!(f.row(3).sum(), 0.0);
        assert_eq!(f[[0, 0]], 0.0);
    }
}
