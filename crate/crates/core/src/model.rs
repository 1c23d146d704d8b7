//! Domain types for transactional networks.
//!
//! A transactional network is a list of one-to-many events over a fixed set of
//! `M` nodes. Each event has one sender and a non-empty set of recipients that
//! never contains the sender.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmmsbError};

/// Tolerance on membership row sums.
pub const ROW_SUM_TOL: f64 = 1e-9;

/// A single one-to-many communication event.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Transaction {
    sender: usize,
    recipients: Vec<usize>,
}

impl Transaction {
    /// Builds a transaction. Recipients are stored sorted and de-duplicated.
    pub fn new<I>(sender: usize, recipients: I) -> Result<Self>
    where
        I: IntoIterator<Item = usize>,
    {
        let mut recipients: Vec<usize> = recipients.into_iter().collect();
        recipients.sort_unstable();
        recipients.dedup();
        if recipients.is_empty() {
            return Err(TmmsbError::InvalidTransaction {
                index: 0,
                reason: "empty recipient list".into(),
            });
        }
        if recipients.binary_search(&sender).is_ok() {
            return Err(TmmsbError::InvalidTransaction {
                index: 0,
                reason: format!("self-send: sender {sender} is also a recipient"),
            });
        }
        Ok(Self { sender, recipients })
    }

    pub fn sender(&self) -> usize {
        self.sender
    }

    pub fn recipients(&self) -> &[usize] {
        &self.recipients
    }

    pub fn receives(&self, node: usize) -> bool {
        self.recipients.binary_search(&node).is_ok()
    }

    /// Dense receive indicator row of length `m`.
    pub fn indicator(&self, m: usize) -> Vec<bool> {
        let mut row = vec![false; m];
        for &r in &self.recipients {
            row[r] = true;
        }
        row
    }
}

/// The observable data: `N` transactions over `M` nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransactionLog {
    num_nodes: usize,
    transactions: Vec<Transaction>,
    node_labels: Option<Vec<String>>,
}

impl TransactionLog {
    pub fn new(num_nodes: usize, transactions: Vec<Transaction>) -> Result<Self> {
        Self::with_labels(num_nodes, transactions, None)
    }

    pub fn with_labels(
        num_nodes: usize,
        transactions: Vec<Transaction>,
        node_labels: Option<Vec<String>>,
    ) -> Result<Self> {
        if num_nodes < 2 {
            return Err(TmmsbError::InvalidParameter(format!(
                "a network needs at least 2 nodes, got {num_nodes}"
            )));
        }
        if let Some(labels) = &node_labels {
            if labels.len() != num_nodes {
                return Err(TmmsbError::Dimension(format!(
                    "{} node labels for {num_nodes} nodes",
                    labels.len()
                )));
            }
        }
        for (index, t) in transactions.iter().enumerate() {
            let max = t.recipients.last().copied().unwrap_or(0).max(t.sender);
            if max >= num_nodes {
                return Err(TmmsbError::InvalidTransaction {
                    index,
                    reason: format!("node index {max} out of range for {num_nodes} nodes"),
                });
            }
        }
        Ok(Self {
            num_nodes,
            transactions,
            node_labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn len(&self) -> usize {
        self.transactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transactions.is_empty()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.transactions
    }

    pub fn node_labels(&self) -> Option<&[String]> {
        self.node_labels.as_deref()
    }

    /// Display name of a node: its label if present, otherwise its index.
    pub fn node_name(&self, node: usize) -> String {
        match &self.node_labels {
            Some(labels) => labels[node].clone(),
            None => node.to_string(),
        }
    }

    /// Total number of recipient slots, `|Y|`.
    pub fn total_recipients(&self) -> usize {
        self.transactions.iter().map(|t| t.recipients.len()).sum()
    }

    /// Messages sent by each node.
    pub fn sent_counts(&self) -> Vec<u64> {
        let mut sent = vec![0u64; self.num_nodes];
        for t in &self.transactions {
            sent[t.sender] += 1;
        }
        sent
    }

    /// Messages received by each node.
    pub fn received_counts(&self) -> Vec<u64> {
        let mut recv = vec![0u64; self.num_nodes];
        for t in &self.transactions {
            for &r in &t.recipients {
                recv[r] += 1;
            }
        }
        recv
    }

    /// Same node set, different transactions.
    pub fn with_transactions(&self, transactions: Vec<Transaction>) -> Self {
        Self {
            num_nodes: self.num_nodes,
            transactions,
            node_labels: self.node_labels.clone(),
        }
    }
}

/// Group interaction matrix `B` and Dirichlet hyperparameter `alpha`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    b: Array2<f64>,
    alpha: Array1<f64>,
}

impl ModelParams {
    pub fn new(b: Array2<f64>, alpha: Array1<f64>) -> Result<Self> {
        let k = b.nrows();
        if k == 0 || b.ncols() != k {
            return Err(TmmsbError::Dimension(format!(
                "interaction matrix must be square and non-empty, got {}x{}",
                b.nrows(),
                b.ncols()
            )));
        }
        if alpha.len() != k {
            return Err(TmmsbError::Dimension(format!(
                "alpha has {} entries for {k} groups",
                alpha.len()
            )));
        }
        if let Some(v) = b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(TmmsbError::InvalidParameter(format!(
                "interaction entry {v} outside [0, 1]"
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0 && a.is_finite())) {
            return Err(TmmsbError::InvalidParameter(format!(
                "alpha entries must be positive, got {a}"
            )));
        }
        Ok(Self { b, alpha })
    }

    pub fn symmetric_alpha(b: Array2<f64>, alpha: f64) -> Result<Self> {
        let k = b.nrows();
        Self::new(b, Array1::from_elem(k, alpha))
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }

    pub fn alpha(&self) -> &Array1<f64> {
        &self.alpha
    }
}

/// Per-node mixed-membership vectors, one row per node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Array2<f64>", into = "Array2<f64>")]
pub struct MembershipMatrix(Array2<f64>);

impl MembershipMatrix {
    pub fn new(pi: Array2<f64>) -> Result<Self> {
        if pi.ncols() == 0 {
            return Err(TmmsbError::Dimension(
                "membership matrix has no groups".into(),
            ));
        }
        for (i, row) in pi.rows().into_iter().enumerate() {
            if row.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                return Err(TmmsbError::InvalidParameter(format!(
                    "membership row {i} has a negative or non-finite entry"
                )));
            }
            let s = row.sum();
            if (s - 1.0).abs() > ROW_SUM_TOL {
                return Err(TmmsbError::InvalidParameter(format!(
                    "membership row {i} sums to {s}, not 1"
                )));
            }
        }
        Ok(Self(pi))
    }

    /// Normalizes each row of a non-negative matrix (e.g. Dirichlet parameters).
    pub fn from_weights(weights: &Array2<f64>) -> Result<Self> {
        let mut pi = weights.clone();
        for (i, mut row) in pi.rows_mut().into_iter().enumerate() {
            let s = row.sum();
            if !(s > 0.0) || !s.is_finite() {
                return Err(TmmsbError::InvalidParameter(format!(
                    "membership weights for row {i} sum to {s}"
                )));
            }
            row.mapv_inplace(|v| v / s);
        }
        Self::new(pi)
    }

    /// Hard memberships: row `i` is the indicator of `labels[i]`.
    pub fn one_hot(labels: &[usize], k: usize) -> Result<Self> {
        let mut pi = Array2::zeros((labels.len(), k));
        for (i, &l) in labels.iter().enumerate() {
            if l >= k {
                return Err(TmmsbError::Dimension(format!(
                    "label {l} of node {i} out of range for {k} groups"
                )));
            }
            pi[[i, l]] = 1.0;
        }
        Ok(Self(pi))
    }

    pub fn num_nodes(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    /// Most probable group of node `i`; ties go to the smallest index.
    pub fn argmax(&self, i: usize) -> usize {
        argmax_first(self.0.row(i).iter().copied())
    }

    pub fn hard_labels(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|i| self.argmax(i)).collect()
    }

    /// Reorders columns so that new column `c` is old column `perm[c]`.
    pub fn permute_columns(&self, perm: &[usize]) -> Self {
        Self(permute_columns(&self.0, perm))
    }
}

impl TryFrom<Array2<f64>> for MembershipMatrix {
    type Error = TmmsbError;

    fn try_from(value: Array2<f64>) -> Result<Self> {
        Self::new(value)
    }
}

impl From<MembershipMatrix> for Array2<f64> {
    fn from(value: MembershipMatrix) -> Self {
        value.0
    }
}

pub(crate) fn argmax_first<I: IntoIterator<Item = f64>>(values: I) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

pub(crate) fn permute_columns(a: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(a.dim(), |(i, c)| a[[i, perm[c]]])
}

/// `B'[r, c] = B[perm[r], perm[c]]`.
pub(crate) fn permute_square(b: &Array2<f64>, perm: &[usize]) -> Array2<f64> {
    Array2::from_shape_fn(b.dim(), |(r, c)| b[[perm[r], perm[c]]])
}

/// Probability that `j` receives a message sent by `i`: `pi_i B pi_j^T`.
pub fn receive_probability(
    pi: &MembershipMatrix,
    b: &Array2<f64>,
    i: usize,
    j: usize,
) -> Result<f64> {
    if i == j {
        return Err(TmmsbError::InvalidParameter(format!(
            "receive probability is undefined for a self-send ({i} -> {j})"
        )));
    }
    if b.nrows() != pi.k() || b.ncols() != pi.k() {
        return Err(TmmsbError::Dimension(format!(
            "B is {}x{} but memberships have {} groups",
            b.nrows(),
            b.ncols(),
            pi.k()
        )));
    }
    if i >= pi.num_nodes() || j >= pi.num_nodes() {
        return Err(TmmsbError::Dimension(format!(
            "node pair ({i}, {j}) out of range for {} nodes",
            pi.num_nodes()
        )));
    }
    Ok(pi.row(i).dot(&b.dot(&pi.row(j))))
}

/// All pairwise receive probabilities `P = pi B pi^T`, diagonal set to zero.
pub fn receive_matrix(pi: &MembershipMatrix, b: &Array2<f64>) -> Array2<f64> {
    let p = pi.as_array();
    let mut out = p.dot(b).dot(&p.t());
    for i in 0..out.nrows() {
        out[[i, i]] = 0.0;
    }
    out
}
