use ndarray::Array2;

use crate::error::{Result, TmmsbError};

/// Per-transaction, per-node multinomial parameters, stored as a dense
/// `N x M x K` tensor with the group axis innermost.
#[derive(Clone, Debug, PartialEq)]
pub struct Phi {
    n: usize,
    m: usize,
    k: usize,
    data: Vec<f64>,
}

impl Phi {
    pub fn uniform(n: usize, m: usize, k: usize) -> Self {
        Self {
            n,
            m,
            k,
            data: vec![1.0 / k as f64; n * m * k],
        }
    }

    pub fn from_vec(n: usize, m: usize, k: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * m * k {
            return Err(TmmsbError::Dimension(format!(
                "phi buffer has {} entries, expected {n}x{m}x{k}",
                data.len()
            )));
        }
        Ok(Self { n, m, k, data })
    }

    /// Same memberships for every transaction: `phi[n, m, :] = rows[m, :]`.
    pub fn broadcast(n: usize, rows: &Array2<f64>) -> Self {
        let (m, k) = rows.dim();
        let mut data = Vec::with_capacity(n * m * k);
        for _ in 0..n {
            data.extend(rows.iter());
        }
        Self { n, m, k, data }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n, self.m, self.k)
    }

    pub fn get(&self, n: usize, m: usize) -> &[f64] {
        let start = (n * self.m + m) * self.k;
        &self.data[start..start + self.k]
    }

    pub fn get_mut(&mut self, n: usize, m: usize) -> &mut [f64] {
        let start = (n * self.m + m) * self.k;
        &mut self.data[start..start + self.k]
    }

    /// The `M x K` block of transaction `n`.
    pub fn transaction(&self, n: usize) -> &[f64] {
        let stride = self.m * self.k;
        &self.data[n * stride..(n + 1) * stride]
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub(crate) fn block_len(&self) -> usize {
        self.m * self.k
    }

    /// Reorders the group axis so that new group `c` is old group `perm[c]`.
    pub fn permute_groups(&self, perm: &[usize]) -> Self {
        let mut out = self.clone();
        for (dst, src) in out.data.chunks_mut(self.k).zip(self.data.chunks(self.k)) {
            for (c, &p) in perm.iter().enumerate() {
                dst[c] = src[p];
            }
        }
        out
    }

    /// `sum_n phi[n, m, :]` for every node, accumulated in transaction order.
    pub fn node_sums(&self) -> Array2<f64> {
        let mut sums = Array2::zeros((self.m, self.k));
        let s = sums.as_slice_mut().expect("standard layout");
        for block in self.data.chunks(self.m * self.k) {
            for (acc, v) in s.iter_mut().zip(block) {
                *acc += v;
            }
        }
        sums
    }
}

/// Variational parameters plus the current interaction-matrix estimate.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalState {
    pub gamma: Array2<f64>,
    pub phi: Phi,
    pub b: Array2<f64>,
}

impl VariationalState {
    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    /// Checks normalization of every phi slice and positivity of gamma.
    pub fn validate(&self) -> Result<()> {
        let (n, m, k) = self.phi.dims();
        if self.gamma.dim() != (m, k) || self.b.dim() != (k, k) {
            return Err(TmmsbError::Dimension(format!(
                "gamma {:?} and B {:?} do not match phi {n}x{m}x{k}",
                self.gamma.dim(),
                self.b.dim()
            )));
        }
        for (idx, row) in self.phi.data.chunks(k).enumerate() {
            let s: f64 = row.iter().sum();
            if row.iter().any(|v| *v < 0.0) || (s - 1.0).abs() > 1e-9 {
                return Err(TmmsbError::InvalidParameter(format!(
                    "phi[{}, {}] is not a probability vector (sum {s})",
                    idx / m,
                    idx % m
                )));
            }
        }
        if self.gamma.iter().any(|g| !(*g > 0.0)) {
            return Err(TmmsbError::InvalidParameter(
                "gamma entries must be positive".into(),
            ));
        }
        Ok(())
    }
}
