//! Lossy reductions of a transaction log: counts, socio-matrix, and
//! group-ordered views for plotting.

use ndarray::Array2;
use serde::Serialize;

use crate::error::{Result, TmmsbError};
use crate::model::{MembershipMatrix, TransactionLog};

/// Sender-by-receiver message counts. `sent[i]` is the number of transactions
/// node `i` sent, which the counts alone cannot recover.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountMatrix {
    pub counts: Array2<u64>,
    pub sent: Vec<u64>,
}

impl CountMatrix {
    pub fn num_nodes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    /// `counts + counts^T`.
    pub fn symmetrized(&self) -> Array2<f64> {
        let c = self.counts.mapv(|v| v as f64);
        &c + &c.t()
    }
}

/// Binary relation matrix obtained by thresholding counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SocioMatrix {
    pub adj: Array2<u8>,
    pub threshold: u64,
}

pub fn to_counts(log: &TransactionLog) -> CountMatrix {
    let m = log.num_nodes();
    let mut counts = Array2::zeros((m, m));
    for t in log.transactions() {
        for &r in t.recipients() {
            counts[[t.sender(), r]] += 1;
        }
    }
    CountMatrix {
        counts,
        sent: log.sent_counts(),
    }
}

/// `adj[i, j] = 1` iff `counts[i, j] >= threshold`.
pub fn to_socio(counts: &CountMatrix, threshold: u64) -> Result<SocioMatrix> {
    if threshold == 0 {
        return Err(TmmsbError::InvalidParameter(
            "threshold must be at least 1".into(),
        ));
    }
    Ok(SocioMatrix {
        adj: counts.counts.mapv(|c| u8::from(c >= threshold)),
        threshold,
    })
}

/// A square matrix with rows and columns reordered by group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OrderedAdjacency<T> {
    pub matrix: Array2<T>,
    /// `order[p]` is the original node placed at position `p`.
    pub order: Vec<usize>,
    /// Positions where a new group starts (excluding 0).
    pub boundaries: Vec<usize>,
    /// Group of each position.
    pub groups: Vec<usize>,
}

/// Sorts nodes by most probable group, then by decreasing top membership,
/// then by index, and permutes both axes of `matrix` accordingly.
pub fn ordered_adjacency<T: Clone>(
    matrix: &Array2<T>,
    memberships: &MembershipMatrix,
) -> Result<OrderedAdjacency<T>> {
    let m = memberships.num_nodes();
    if matrix.dim() != (m, m) {
        return Err(TmmsbError::Dimension(format!(
            "matrix is {:?} but memberships cover {m} nodes",
            matrix.dim()
        )));
    }
    let labels = memberships.hard_labels();
    let top: Vec<f64> = (0..m).map(|i| memberships.row(i)[labels[i]]).collect();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        labels[a]
            .cmp(&labels[b])
            .then(top[b].total_cmp(&top[a]))
            .then(a.cmp(&b))
    });
    let reordered = Array2::from_shape_fn((m, m), |(r, c)| matrix[[order[r], order[c]]].clone());
    let groups: Vec<usize> = order.iter().map(|&i| labels[i]).collect();
    let boundaries = (1..m).filter(|&p| groups[p] != groups[p - 1]).collect();
    Ok(OrderedAdjacency {
        matrix: reordered,
        order,
        boundaries,
        groups,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Transaction;
    use ndarray::array;

    fn toy() -> TransactionLog {
        // A=0, B=1, C=2, D=3
        TransactionLog::new(
            4,
            vec![
                Transaction::new(0, [1]).unwrap(),
                Transaction::new(0, [1, 3]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn counts_of_two_messages() {
        let c = to_counts(&toy());
        assert_eq!(c.counts[[0, 1]], 2);
        assert_eq!(c.counts[[0, 3]], 1);
        assert_eq!(c.total(), 3);
        assert_eq!(c.counts.row(2).sum(), 0);
        assert_eq!(c.sent, vec![2, 0, 0, 0]);
    }

    #[test]
    fn socio_thresholding() {
        let c = to_counts(&toy());
        let s = to_socio(&c, 1).unwrap();
        assert_eq!(s.adj[[0, 1]], 1);
        assert_eq!(s.adj[[1, 0]], 0);
        assert_eq!(to_socio(&c, 2).unwrap().adj.sum(), 1);
        assert_eq!(to_socio(&c, 3).unwrap().adj.sum(), 0);
        assert!(to_socio(&c, 0).is_err());
    }

    #[test]
    fn one_hot_groups_are_contiguous() {
        let pi = MembershipMatrix::one_hot(&[1, 0, 1, 0], 2).unwrap();
        let a = array![[0, 1, 2, 3], [4, 5, 6, 7], [8, 9, 10, 11], [12, 13, 14, 15]];
        let o = ordered_adjacency(&a, &pi).unwrap();
        assert_eq!(o.order, vec![1, 3, 0, 2]);
        assert_eq!(o.boundaries, vec![2]);
        assert_eq!(o.matrix[[0, 0]], 5);
        assert_eq!(o.matrix[[0, 2]], 4);
    }

    #[test]
    fn sorted_input_is_unchanged() {
        let pi = MembershipMatrix::new(array![[0.9, 0.1], [0.6, 0.4], [0.2, 0.8]]).unwrap();
        let a = Array2::from_shape_fn((3, 3), |(r, c)| r * 3 + c);
        let o = ordered_adjacency(&a, &pi).unwrap();
        assert_eq!(o.order, vec![0, 1, 2]);
        assert_eq!(o.matrix, a);
    }
}
