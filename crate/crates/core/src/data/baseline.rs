//! Hard-clustering baseline: average-linkage agglomerative clustering of the
//! symmetrized count matrix, plus a count-based interaction matrix.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::reduce::CountMatrix;
use crate::error::{Result, TmmsbError};
use crate::inference::updates::{ratio_matrix, BEstimate};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    /// Cluster of each node. Clusters are numbered by their smallest member.
    pub labels: Vec<usize>,
    pub crude_b: Array2<f64>,
    pub empty_cells: Vec<(usize, usize)>,
}

/// Distance between rows of the symmetrized count matrix.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RowDistance {
    #[default]
    Euclidean,
    /// `1 - cos` of the angle between rows; insensitive to activity level.
    Cosine,
}

impl std::str::FromStr for RowDistance {
    type Err = TmmsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Self::Euclidean),
            "cosine" => Ok(Self::Cosine),
            other => Err(TmmsbError::InvalidParameter(format!(
                "unknown distance `{other}` (expected euclidean or cosine)"
            ))),
        }
    }
}

/// Average-linkage baseline with Euclidean row distances.
pub fn baseline_hierarchical(counts: &CountMatrix, k: usize, clamp_eps: f64) -> Result<Baseline> {
    baseline_with_distance(counts, k, RowDistance::Euclidean, clamp_eps)
}

pub fn baseline_with_distance(
    counts: &CountMatrix,
    k: usize,
    distance: RowDistance,
    clamp_eps: f64,
) -> Result<Baseline> {
    let labels = average_linkage(&row_distances(&counts.symmetrized(), distance), k)?;
    let BEstimate { b, empty_cells } = hard_b(counts, &labels, k, clamp_eps)?;
    Ok(Baseline {
        labels,
        crude_b: b,
        empty_cells,
    })
}

/// Pairwise distances between the rows of `x`.
pub fn row_distances(x: &Array2<f64>, distance: RowDistance) -> Array2<f64> {
    let m = x.nrows();
    let norms: Vec<f64> = x.rows().into_iter().map(|r| r.dot(&r).sqrt()).collect();
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        for j in (i + 1)..m {
            let v = match distance {
                RowDistance::Euclidean => x
                    .row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt(),
                RowDistance::Cosine => match (norms[i] > 0.0, norms[j] > 0.0) {
                    (true, true) => {
                        (1.0 - x.row(i).dot(&x.row(j)) / (norms[i] * norms[j])).max(0.0)
                    }
                    (false, false) => 0.0,
                    _ => 1.0,
                },
            };
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Agglomerative clustering with average (UPGMA) linkage, stopped at `k`
/// clusters. Among equally close pairs the one with the smallest member
/// indices merges first.
pub fn average_linkage(dist: &Array2<f64>, k: usize) -> Result<Vec<usize>> {
    let m = dist.nrows();
    if k == 0 || k > m {
        return Err(TmmsbError::InvalidParameter(format!(
            "cannot cut {m} nodes into {k} clusters"
        )));
    }
    // Active clusters keyed by their smallest member; d holds linkage distances.
    let mut d = dist.clone();
    let mut size = vec![1usize; m];
    let mut active: Vec<bool> = vec![true; m];
    let mut parent: Vec<usize> = (0..m).collect();
    let mut clusters = m;
    while clusters > k {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for a in (0..m).filter(|&a| active[a]) {
            for b in ((a + 1)..m).filter(|&b| active[b]) {
                if d[[a, b]] < best.2 {
                    best = (a, b, d[[a, b]]);
                }
            }
        }
        let (a, b, _) = best;
        // Lance-Williams update for average linkage.
        let (sa, sb) = (size[a] as f64, size[b] as f64);
        for c in (0..m).filter(|&c| active[c] && c != a && c != b) {
            let v = (sa * d[[a, c]] + sb * d[[b, c]]) / (sa + sb);
            d[[a, c]] = v;
            d[[c, a]] = v;
        }
        size[a] += size[b];
        active[b] = false;
        parent[b] = a;
        clusters -= 1;
    }
    let root = |mut i: usize| {
        while parent[i] != i {
            i = parent[i];
        }
        i
    };
    let mut numbering = vec![usize::MAX; m];
    let mut next = 0;
    let mut labels = Vec::with_capacity(m);
    for i in 0..m {
        let r = root(i);
        if numbering[r] == usize::MAX {
            numbering[r] = next;
            next += 1;
        }
        labels.push(numbering[r]);
    }
    Ok(labels)
}

/// Interaction matrix of hard labels: messages from label-`k` senders
/// received by label-`l` nodes over the sender/receiver slots exposed.
pub fn hard_b(
    counts: &CountMatrix,
    labels: &[usize],
    k: usize,
    clamp_eps: f64,
) -> Result<BEstimate> {
    let m = counts.num_nodes();
    if labels.len() != m || labels.iter().any(|&l| l >= k) {
        return Err(TmmsbError::Dimension(format!(
            "{} labels in [0, {k}) expected for {m} nodes",
            m
        )));
    }
    let mut group_size = vec![0usize; k];
    for &l in labels {
        group_size[l] += 1;
    }
    let mut num = vec![0.0; k * k];
    let mut den = vec![0.0; k * k];
    for i in 0..m {
        let gi = labels[i];
        let sent = counts.sent[i] as f64;
        for (l, &size) in group_size.iter().enumerate() {
            let exposed = size - usize::from(l == gi);
            den[gi * k + l] += sent * exposed as f64;
        }
        for j in 0..m {
            num[gi * k + labels[j]] += counts.counts[[i, j]] as f64;
        }
    }
    Ok(ratio_matrix(k, &num, &den, clamp_eps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::reduce::to_counts;
    use crate::model::{Transaction, TransactionLog};

    #[test]
    fn cosine_distance_ignores_scale() {
        let x = ndarray::array![
            [1.0, 0.0, 2.0],
            [10.0, 0.0, 20.0],
            [0.0, 3.0, 0.0],
            [0.0, 0.0, 0.0]
        ];
        let d = row_distances(&x, RowDistance::Cosine);
        assert!(d[[0, 1]].abs() < 1e-12);
        assert!((d[[0, 2]] - 1.0).abs() < 1e-12);
        assert_eq!(d[[0, 3]], 1.0);
        assert_eq!(d[[3, 3]], 0.0);
        let e = row_distances(&x, RowDistance::Euclidean);
        assert!((e[[0, 1]] - 405f64.sqrt()).abs() < 1e-12);
        assert_eq!(
            "cosine".parse::<RowDistance>().unwrap(),
            RowDistance::Cosine
        );
    }

    fn cliques() -> TransactionLog {
        let mut ts = Vec::new();
        for group in [[0, 1, 2], [3, 4, 5]] {
            for &s in &group {
                for &r in &group {
                    if s != r {
                        ts.push(Transaction::new(s, [r]).unwrap());
                    }
                }
            }
        }
        TransactionLog::new(6, ts).unwrap()
    }

    #[test]
    fn disconnected_cliques_separate() {
        let counts = to_counts(&cliques());
        let b = baseline_hierarchical(&counts, 2, 1e-9).unwrap();
        assert_eq!(b.labels, vec![0, 0, 0, 1, 1, 1]);
        // Each sender sends 2 messages exposing 2 same-group and 3 other-group slots.
        assert!((b.crude_b[[0, 0]] - 6.0 / 12.0).abs() < 1e-15);
        assert_eq!(b.crude_b[[0, 1]], 1e-9);
    }

    #[test]
    fn singleton_clusters() {
        let log = TransactionLog::new(
            3,
            vec![
                Transaction::new(0, [1]).unwrap(),
                Transaction::new(0, [1, 2]).unwrap(),
                Transaction::new(2, [0]).unwrap(),
            ],
        )
        .unwrap();
        let counts = to_counts(&log);
        let b = baseline_hierarchical(&counts, 3, 1e-9).unwrap();
        assert_eq!(b.labels, vec![0, 1, 2]);
        assert_eq!(b.crude_b[[0, 1]], 1.0 - 1e-9);
        assert!((b.crude_b[[0, 2]] - 0.5).abs() < 1e-12);
        assert_eq!(b.empty_cells, vec![(0, 0), (1, 0), (1, 1), (1, 2), (2, 2)]);
    }

    #[test]
    fn identical_rows_merge_by_index() {
        let d = Array2::zeros((4, 4));
        assert_eq!(average_linkage(&d, 3).unwrap(), vec![0, 0, 1, 2]);
        assert_eq!(average_linkage(&d, 1).unwrap(), vec![0, 0, 0, 0]);
        assert!(average_linkage(&d, 5).is_err());
    }
}
