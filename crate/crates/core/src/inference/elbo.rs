//! Evidence lower bound of the mean-field family.

use ndarray::Array2;

use super::state::VariationalState;
use super::updates::{expected_log_pi_matrix, terms_all, LogB, TransactionTerms};
use crate::error::{Result, TmmsbError};
use crate::model::TransactionLog;
use crate::special::ln_gamma;

/// `E_q[log p(Y, Z, pi | S, alpha, B)] - E_q[log q(Z, pi)]` with `B` clamped
/// to `[clamp_eps, 1 - clamp_eps]`.
pub fn elbo(
    state: &VariationalState,
    log: &TransactionLog,
    alpha: &[f64],
    clamp_eps: f64,
) -> Result<f64> {
    let (n, m, k) = state.phi.dims();
    if n != log.len() || m != log.num_nodes() || alpha.len() != k {
        return Err(TmmsbError::Dimension(format!(
            "state {n}x{m}x{k} against a log of {}x{} and {} alphas",
            log.len(),
            log.num_nodes(),
            alpha.len()
        )));
    }
    let logb = LogB::new(&state.b, clamp_eps);
    let terms = terms_all(log, &state.phi, &logb);
    let sums = state.phi.node_sums();
    Ok(combine(terms, &state.gamma, alpha, &sums))
}

pub(crate) fn combine(
    terms: TransactionTerms,
    gamma: &Array2<f64>,
    alpha: &[f64],
    phi_sums: &Array2<f64>,
) -> f64 {
    terms.data + terms.entropy + node_terms(gamma, alpha, phi_sums)
}

/// Terms that involve `pi`: the Dirichlet prior, `E_q[log p(z | pi)]` through
/// the per-node phi sums, and the Dirichlet entropy of `q(pi)`.
pub(crate) fn node_terms(gamma: &Array2<f64>, alpha: &[f64], phi_sums: &Array2<f64>) -> f64 {
    let elogpi = expected_log_pi_matrix(gamma);
    let alpha_sum: f64 = alpha.iter().sum();
    let prior_norm = ln_gamma(alpha_sum) - alpha.iter().map(|&a| ln_gamma(a)).sum::<f64>();
    let mut total = 0.0;
    for ((g, e), s) in gamma
        .rows()
        .into_iter()
        .zip(elogpi.rows())
        .zip(phi_sums.rows())
    {
        let mut node = prior_norm;
        for c in 0..alpha.len() {
            node += (alpha[c] - 1.0 + s[c] - (g[c] - 1.0)) * e[c] + ln_gamma(g[c]);
        }
        node -= ln_gamma(g.sum());
        total += node;
    }
    total
}
