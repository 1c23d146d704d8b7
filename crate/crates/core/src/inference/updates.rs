//! Coordinate updates for the mean-field posterior and the empirical-Bayes
//! interaction matrix.

use ndarray::Array2;
use rayon::prelude::*;

use super::state::{Phi, VariationalState};
use crate::error::{Result, TmmsbError};
use crate::model::{Transaction, TransactionLog};
use crate::special::digamma;

/// Transactions per parallel work unit. Partial sums are combined in chunk
/// order, so results do not depend on the thread count.
pub(crate) const CHUNK: usize = 32;

/// `E_q[log pi_k] = psi(gamma_k) - psi(sum_l gamma_l)` for a Dirichlet row.
pub fn expected_log_pi(gamma_row: &[f64]) -> Result<Vec<f64>> {
    if let Some(g) = gamma_row.iter().find(|g| !(**g > 0.0)) {
        return Err(TmmsbError::InvalidParameter(format!(
            "Dirichlet parameters must be positive, got {g}"
        )));
    }
    Ok(expected_log_pi_unchecked(gamma_row))
}

fn expected_log_pi_unchecked(gamma_row: &[f64]) -> Vec<f64> {
    let total = digamma(gamma_row.iter().sum());
    gamma_row.iter().map(|&g| digamma(g) - total).collect()
}

pub(crate) fn expected_log_pi_matrix(gamma: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(gamma.dim());
    for (src, mut dst) in gamma.rows().into_iter().zip(out.rows_mut()) {
        let row = expected_log_pi_unchecked(src.as_slice().expect("standard layout"));
        dst.assign(&ndarray::ArrayView1::from(&row));
    }
    out
}

/// `log B` and `log(1 - B)` of a clamped interaction matrix.
#[derive(Clone, Debug)]
pub(crate) struct LogB {
    pub k: usize,
    /// Row-major `ln B`.
    pub ln_b: Vec<f64>,
    /// Row-major `ln (1 - B)`.
    pub ln_1mb: Vec<f64>,
}

impl LogB {
    pub fn new(b: &Array2<f64>, clamp_eps: f64) -> Self {
        let k = b.nrows();
        let clamped: Vec<f64> = b.iter().map(|&v| clamp(v, clamp_eps)).collect();
        Self {
            k,
            ln_b: clamped.iter().map(|v| v.ln()).collect(),
            ln_1mb: clamped.iter().map(|v| (1.0 - v).ln()).collect(),
        }
    }

    /// `w_y[c] = sum_l phi_sender[l] * ln B(y)[l, c]`: the log-likelihood term
    /// a receiver in group `c` picks up, for `y` = received or not.
    fn receiver_terms(&self, phi_sender: &[f64], w1: &mut [f64], w0: &mut [f64]) {
        let k = self.k;
        w1.fill(0.0);
        w0.fill(0.0);
        for (l, &p) in phi_sender.iter().enumerate() {
            let r1 = &self.ln_b[l * k..(l + 1) * k];
            let r0 = &self.ln_1mb[l * k..(l + 1) * k];
            for c in 0..k {
                w1[c] += p * r1[c];
                w0[c] += p * r0[c];
            }
        }
    }
}

pub(crate) fn clamp(v: f64, eps: f64) -> f64 {
    v.clamp(eps, 1.0 - eps)
}

/// Normalizes `exp(logits)` in place.
pub(crate) fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

/// Optimal `phi[n, m, :]` with every other variational parameter held fixed.
///
/// Evaluates the update directly from the current state: for a receiving
/// slot the sender's groups weight `ln B[l, k]` (or `ln(1 - B[l, k])`), for
/// the sender every other node's groups weight `ln B[k, l]`.
pub fn update_phi(
    state: &VariationalState,
    log: &TransactionLog,
    clamp_eps: f64,
    n: usize,
    m: usize,
) -> Result<Vec<f64>> {
    let (nn, mm, k) = state.phi.dims();
    if n >= nn || m >= mm || log.len() != nn || log.num_nodes() != mm {
        return Err(TmmsbError::Dimension(format!(
            "slot ({n}, {m}) against phi {nn}x{mm}x{k} and a log of {}x{}",
            log.len(),
            log.num_nodes()
        )));
    }
    let t = &log.transactions()[n];
    let logb = LogB::new(&state.b, clamp_eps);
    let gamma_row = state.gamma.row(m).to_vec();
    let mut logits = expected_log_pi(&gamma_row)?;
    let s = t.sender();
    if m != s {
        let table = if t.receives(m) {
            &logb.ln_b
        } else {
            &logb.ln_1mb
        };
        let phi_s = state.phi.get(n, s);
        for (c, out) in logits.iter_mut().enumerate() {
            for (l, &p) in phi_s.iter().enumerate() {
                *out += p * table[l * k + c];
            }
        }
    } else {
        for other in (0..mm).filter(|&o| o != s) {
            let table = if t.receives(other) {
                &logb.ln_b
            } else {
                &logb.ln_1mb
            };
            let phi_o = state.phi.get(n, other);
            for (c, out) in logits.iter_mut().enumerate() {
                for (l, &p) in phi_o.iter().enumerate() {
                    *out += p * table[c * k + l];
                }
            }
        }
    }
    softmax_in_place(&mut logits);
    Ok(logits)
}

/// ELBO contributions of one transaction that depend only on its phi block.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct TransactionTerms {
    /// `E_q[log p(Y_n | Z_n, B)]`
    pub data: f64,
    /// `-E_q[log q(Z_n)]`
    pub entropy: f64,
}

impl std::ops::AddAssign for TransactionTerms {
    fn add_assign(&mut self, rhs: Self) {
        self.data += rhs.data;
        self.entropy += rhs.entropy;
    }
}

/// `E_q[log pi]` of every node together with its exponential.
#[derive(Clone, Debug)]
pub(crate) struct NodePrior {
    pub log: Vec<f64>,
    pub exp: Vec<f64>,
}

impl NodePrior {
    pub fn new(gamma: &Array2<f64>) -> Self {
        let log = expected_log_pi_matrix(gamma).into_raw_vec_and_offset().0;
        let exp = log.iter().map(|v| v.exp()).collect();
        Self { log, exp }
    }
}

/// Writes `softmax(prior + w)` into `out` given `scaled = exp(w - max w)`,
/// and returns the slot's entropy.
fn set_slot(
    out: &mut [f64],
    prior: &[f64],
    prior_exp: &[f64],
    w: &[f64],
    w_max: f64,
    scaled: &[f64],
) -> f64 {
    let mut z = 0.0;
    for c in 0..out.len() {
        out[c] = prior_exp[c] * scaled[c];
        z += out[c];
    }
    if !(z > 0.0 && z.is_finite()) {
        for c in 0..out.len() {
            out[c] = prior[c] + w[c];
        }
        softmax_in_place(out);
        return -out
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>();
    }
    let mut expected = 0.0;
    for c in 0..out.len() {
        out[c] /= z;
        expected += out[c] * (prior[c] + w[c] - w_max);
    }
    z.ln() - expected
}

fn shifted_exp(w: &[f64], scaled: &mut [f64]) -> f64 {
    let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    for (o, v) in scaled.iter_mut().zip(w) {
        *o = (v - max).exp();
    }
    max
}

/// Updates every `phi[n, m, :]` of one transaction in node order, each update
/// seeing the latest values of the others, and returns the transaction's
/// ELBO terms at the new values.
pub(crate) fn sweep_transaction(
    t: &Transaction,
    block: &mut [f64],
    prior: &NodePrior,
    logb: &LogB,
) -> TransactionTerms {
    let k = logb.k;
    let m = block.len() / k;
    let s = t.sender();
    let y = t.indicator(m);
    let mut w1 = vec![0.0; k];
    let mut w0 = vec![0.0; k];
    let mut e1 = vec![0.0; k];
    let mut e0 = vec![0.0; k];
    let mut entropy = 0.0;
    logb.receiver_terms(&block[s * k..(s + 1) * k], &mut w1, &mut w0);
    let mut max1 = shifted_exp(&w1, &mut e1);
    let mut max0 = shifted_exp(&w0, &mut e0);
    for node in 0..m {
        let range = node * k..(node + 1) * k;
        let (p_log, p_exp) = (&prior.log[range.clone()], &prior.exp[range.clone()]);
        if node == s {
            // Soft group counts of receiving and non-receiving slots.
            let mut got = vec![0.0; k];
            let mut missed = vec![0.0; k];
            for other in (0..m).filter(|&o| o != s) {
                let acc = if y[other] { &mut got } else { &mut missed };
                for (a, v) in acc.iter_mut().zip(&block[other * k..(other + 1) * k]) {
                    *a += v;
                }
            }
            let mut logits = vec![0.0; k];
            for c in 0..k {
                let r1 = &logb.ln_b[c * k..(c + 1) * k];
                let r0 = &logb.ln_1mb[c * k..(c + 1) * k];
                let mut v = p_log[c];
                for l in 0..k {
                    v += got[l] * r1[l] + missed[l] * r0[l];
                }
                logits[c] = v;
            }
            let lse = log_sum_exp(&logits);
            let row = &mut block[range];
            let mut h = 0.0;
            for (out, v) in row.iter_mut().zip(&logits) {
                let lp = v - lse;
                *out = lp.exp();
                h -= *out * lp;
            }
            entropy += h;
            logb.receiver_terms(row, &mut w1, &mut w0);
            max1 = shifted_exp(&w1, &mut e1);
            max0 = shifted_exp(&w0, &mut e0);
        } else {
            let (w, w_max, scaled) = if y[node] {
                (&w1, max1, &e1)
            } else {
                (&w0, max0, &e0)
            };
            entropy += set_slot(&mut block[range], p_log, p_exp, w, w_max, scaled);
        }
    }
    TransactionTerms {
        data: data_term(t, block, logb, &y),
        entropy,
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn data_term(t: &Transaction, block: &[f64], logb: &LogB, y: &[bool]) -> f64 {
    let k = logb.k;
    let s = t.sender();
    let mut w1 = vec![0.0; k];
    let mut w0 = vec![0.0; k];
    logb.receiver_terms(&block[s * k..(s + 1) * k], &mut w1, &mut w0);
    let mut data = 0.0;
    for (node, row) in block.chunks(k).enumerate() {
        if node == s {
            continue;
        }
        let w = if y[node] { &w1 } else { &w0 };
        data += row.iter().zip(w).map(|(p, v)| p * v).sum::<f64>();
    }
    data
}

pub(crate) fn transaction_terms(
    t: &Transaction,
    block: &[f64],
    logb: &LogB,
    y: &[bool],
) -> TransactionTerms {
    let entropy = -block
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>();
    TransactionTerms {
        data: data_term(t, block, logb, y),
        entropy,
    }
}

/// One parallel pass of [`sweep_transaction`] over the whole log.
pub(crate) fn sweep_all(
    log: &TransactionLog,
    phi: &mut Phi,
    prior: &NodePrior,
    logb: &LogB,
) -> TransactionTerms {
    let block = phi.block_len();
    let partials: Vec<TransactionTerms> = phi
        .as_mut_slice()
        .par_chunks_mut(block * CHUNK)
        .zip(log.transactions().par_chunks(CHUNK))
        .map(|(blocks, ts)| {
            let mut acc = TransactionTerms::default();
            for (b, t) in blocks.chunks_mut(block).zip(ts) {
                acc += sweep_transaction(t, b, prior, logb);
            }
            acc
        })
        .collect();
    sum_terms(partials)
}

/// Transaction terms of the current phi without modifying it.
pub(crate) fn terms_all(log: &TransactionLog, phi: &Phi, logb: &LogB) -> TransactionTerms {
    let (_, m, _) = phi.dims();
    let partials: Vec<TransactionTerms> = (0..log.len())
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|n| {
            let t = &log.transactions()[n];
            transaction_terms(t, phi.transaction(n), logb, &t.indicator(m))
        })
        .collect();
    sum_terms(partials)
}

fn sum_terms(partials: Vec<TransactionTerms>) -> TransactionTerms {
    let mut total = TransactionTerms::default();
    for p in partials {
        total += p;
    }
    total
}

/// `gamma[m, k] = alpha[k] + sum_n phi[n, m, k]`.
pub fn update_gamma(alpha: &[f64], phi: &Phi, m: usize) -> Result<Vec<f64>> {
    let (n, mm, k) = phi.dims();
    if m >= mm || alpha.len() != k {
        return Err(TmmsbError::Dimension(format!(
            "node {m} / alpha of length {} against phi {n}x{mm}x{k}",
            alpha.len()
        )));
    }
    let mut out = alpha.to_vec();
    for t in 0..n {
        for (o, v) in out.iter_mut().zip(phi.get(t, m)) {
            *o += v;
        }
    }
    Ok(out)
}

/// Empirical-Bayes interaction matrix with the cells that had no soft exposure.
#[derive(Clone, Debug, PartialEq)]
pub struct BEstimate {
    pub b: Array2<f64>,
    /// `(k, l)` cells whose denominator was zero; set to `clamp_eps`.
    pub empty_cells: Vec<(usize, usize)>,
}

/// Ratio of soft received slots to soft exposed slots for every group pair,
/// clamped to `[clamp_eps, 1 - clamp_eps]`.
pub fn estimate_b(phi: &Phi, log: &TransactionLog, clamp_eps: f64) -> Result<BEstimate> {
    let (n, m, k) = phi.dims();
    if n != log.len() || m != log.num_nodes() {
        return Err(TmmsbError::Dimension(format!(
            "phi {n}x{m}x{k} against a log with {} transactions over {} nodes",
            log.len(),
            log.num_nodes()
        )));
    }
    let partials: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .collect::<Vec<_>>()
        .par_chunks(CHUNK)
        .map(|idx| {
            let mut num = vec![0.0; k * k];
            let mut den = vec![0.0; k * k];
            let mut got = vec![0.0; k];
            let mut all = vec![0.0; k];
            for &t_idx in idx {
                let t = &log.transactions()[t_idx];
                let s = t.sender();
                got.fill(0.0);
                all.fill(0.0);
                for node in (0..m).filter(|&o| o != s) {
                    let row = phi.get(t_idx, node);
                    for l in 0..k {
                        all[l] += row[l];
                    }
                }
                for &r in t.recipients() {
                    let row = phi.get(t_idx, r);
                    for l in 0..k {
                        got[l] += row[l];
                    }
                }
                let ps = phi.get(t_idx, s);
                for a in 0..k {
                    for l in 0..k {
                        num[a * k + l] += ps[a] * got[l];
                        den[a * k + l] += ps[a] * all[l];
                    }
                }
            }
            (num, den)
        })
        .collect();
    let mut num = vec![0.0; k * k];
    let mut den = vec![0.0; k * k];
    for (pn, pd) in partials {
        for i in 0..k * k {
            num[i] += pn[i];
            den[i] += pd[i];
        }
    }
    Ok(ratio_matrix(k, &num, &den, clamp_eps))
}

pub(crate) fn ratio_matrix(k: usize, num: &[f64], den: &[f64], clamp_eps: f64) -> BEstimate {
    let mut b = Array2::zeros((k, k));
    let mut empty_cells = Vec::new();
    for a in 0..k {
        for l in 0..k {
            let d = den[a * k + l];
            b[[a, l]] = if d > 0.0 {
                clamp(num[a * k + l] / d, clamp_eps)
            } else {
                empty_cells.push((a, l));
                clamp_eps
            };
        }
    }
    BEstimate { b, empty_cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn expected_log_pi_of_flat_pair() {
        let e = expected_log_pi(&[1.0, 1.0]).unwrap();
        assert_abs_diff_eq!(e[0], -1.0, epsilon = 1e-14);
        assert_abs_diff_eq!(e[1], -1.0, epsilon = 1e-14);
        assert!(expected_log_pi(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn expected_log_pi_symmetry() {
        for c in [0.01, 0.3, 2.0, 17.5] {
            let e = expected_log_pi(&[c; 5]).unwrap();
            assert!(e.iter().all(|v| (v - e[0]).abs() < 1e-14));
        }
    }

    #[test]
    fn gamma_update_of_half_memberships() {
        let phi = Phi::uniform(5, 3, 2);
        let g = update_gamma(&[0.1, 0.1], &phi, 1).unwrap();
        assert_abs_diff_eq!(g[0], 2.6, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 2.6, epsilon = 1e-12);
    }

    #[test]
    fn gamma_update_without_transactions_is_alpha() {
        let phi = Phi::uniform(0, 3, 2);
        assert_eq!(update_gamma(&[0.1, 0.4], &phi, 0).unwrap(), vec![0.1, 0.4]);
    }

    fn toy_log() -> TransactionLog {
        TransactionLog::new(
            4,
            vec![
                Transaction::new(0, [1]).unwrap(),
                Transaction::new(0, [1, 3]).unwrap(),
                Transaction::new(2, [0]).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn single_group_b_is_recipient_rate() {
        let log = toy_log();
        let phi = Phi::uniform(3, 4, 1);
        let est = estimate_b(&phi, &log, 1e-9).unwrap();
        assert_abs_diff_eq!(est.b[[0, 0]], 4.0 / 9.0, epsilon = 1e-15);
        assert!(est.empty_cells.is_empty());
    }

    #[test]
    fn empty_cells_get_default() {
        let log = toy_log();
        // Node 3 alone in group 1 and never sends: row 1 has no exposure.
        let rows = array![[1.0, 0.0], [1.0, 0.0], [1.0, 0.0], [0.0, 1.0]];
        let phi = Phi::broadcast(3, &rows);
        let est = estimate_b(&phi, &log, 1e-9).unwrap();
        assert_eq!(est.empty_cells, vec![(1, 0), (1, 1)]);
        assert_eq!(est.b[[1, 1]], 1e-9);
        assert_abs_diff_eq!(est.b[[0, 1]], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn single_group_phi_is_one() {
        let log = toy_log();
        let state = VariationalState {
            gamma: Array2::from_elem((4, 1), 3.0),
            phi: Phi::uniform(3, 4, 1),
            b: array![[0.4]],
        };
        for n in 0..3 {
            for m in 0..4 {
                assert_eq!(update_phi(&state, &log, 1e-9, n, m).unwrap(), vec![1.0]);
            }
        }
    }

    #[test]
    fn symmetric_state_gives_uniform_phi() {
        let log = toy_log();
        let state = VariationalState {
            gamma: Array2::from_elem((4, 3), 1.7),
            phi: Phi::uniform(3, 4, 3),
            b: Array2::from_elem((3, 3), 0.2),
        };
        for n in 0..3 {
            for m in 0..4 {
                let p = update_phi(&state, &log, 1e-9, n, m).unwrap();
                for v in p {
                    assert_abs_diff_eq!(v, 1.0 / 3.0, epsilon = 1e-14);
                }
            }
        }
    }

    fn random_state(log: &TransactionLog, k: usize, seed: u64) -> VariationalState {
        use rand::Rng;
        let mut rng = crate::simulate::seeded_rng(seed);
        let (n, m) = (log.len(), log.num_nodes());
        let mut data: Vec<f64> = (0..n * m * k)
            .map(|_| rng.random_range(0.05..1.0))
            .collect();
        for row in data.chunks_mut(k) {
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        VariationalState {
            gamma: Array2::from_shape_fn((m, k), |_| rng.random_range(0.2..4.0)),
            phi: Phi::from_vec(n, m, k, data).unwrap(),
            b: Array2::from_shape_fn((k, k), |_| rng.random_range(0.01..0.9)),
        }
    }

    #[test]
    fn sweep_matches_sequential_slot_updates() {
        let log = toy_log();
        for seed in 0..5 {
            let mut state = random_state(&log, 3, seed);
            let logb = LogB::new(&state.b, 1e-9);
            let prior = NodePrior::new(&state.gamma);
            let mut swept = state.phi.clone();
            let block = swept.block_len();
            for (n, t) in log.transactions().iter().enumerate() {
                let slice = &mut swept.as_mut_slice()[n * block..(n + 1) * block];
                let terms = sweep_transaction(t, slice, &prior, &logb);
                let fresh = transaction_terms(t, slice, &logb, &t.indicator(4));
                assert_abs_diff_eq!(terms.data, fresh.data, epsilon = 1e-12);
                assert_abs_diff_eq!(terms.entropy, fresh.entropy, epsilon = 1e-12);
                for m in 0..4 {
                    let row = update_phi(&state, &log, 1e-9, n, m).unwrap();
                    state.phi.get_mut(n, m).copy_from_slice(&row);
                }
            }
            for (a, b) in swept
                .as_mut_slice()
                .iter()
                .zip(state.phi.as_mut_slice().iter())
            {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn slot_update_survives_extreme_logits() {
        let log = toy_log();
        let mut state = random_state(&log, 2, 9);
        state.b = array![[1e-300, 0.5], [0.5, 1e-300]];
        let logb = LogB::new(&state.b, 1e-300);
        let mut gamma = state.gamma.clone();
        gamma[[1, 0]] = 1e-200;
        let prior = NodePrior::new(&gamma);
        let block = state.phi.block_len();
        let t = &log.transactions()[0];
        let slice = &mut state.phi.as_mut_slice()[..block];
        let terms = sweep_transaction(t, slice, &prior, &logb);
        assert!(terms.data.is_finite() && terms.entropy.is_finite());
        for row in slice.chunks(2) {
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }
}
