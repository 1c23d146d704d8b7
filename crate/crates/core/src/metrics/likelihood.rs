//! Predictive likelihood of recipients and BIC-based choice of `K`.

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmmsbError};
use crate::inference::fit::{fit, splitmix, FitConfig};
use crate::inference::updates::clamp;
use crate::model::{receive_matrix, MembershipMatrix, TransactionLog};

/// Log-likelihood of every transaction's recipient indicators under
/// `p_ij = pi_i B pi_j^T`, clamped to `[clamp_eps, 1 - clamp_eps]`.
pub fn predictive_log_likelihood(
    pi: &MembershipMatrix,
    b: &Array2<f64>,
    log: &TransactionLog,
    clamp_eps: f64,
) -> Result<f64> {
    check_dims(pi, b, log)?;
    let p = receive_matrix(pi, b);
    Ok(log_likelihood_with(&p, log, clamp_eps))
}

pub(crate) fn check_dims(
    pi: &MembershipMatrix,
    b: &Array2<f64>,
    log: &TransactionLog,
) -> Result<()> {
    if pi.num_nodes() != log.num_nodes() || b.dim() != (pi.k(), pi.k()) {
        return Err(TmmsbError::Dimension(format!(
            "memberships {}x{}, B {:?}, log over {} nodes",
            pi.num_nodes(),
            pi.k(),
            b.dim(),
            log.num_nodes()
        )));
    }
    Ok(())
}

fn log_likelihood_with(p: &Array2<f64>, log: &TransactionLog, clamp_eps: f64) -> f64 {
    let m = log.num_nodes();
    let ln_p = p.mapv(|v| clamp(v, clamp_eps).ln());
    let ln_q = p.mapv(|v| (1.0 - clamp(v, clamp_eps)).ln());
    // Sum of ln(1 - p) over every other node, per sender.
    let miss_all: Vec<f64> = (0..m)
        .map(|i| (0..m).filter(|&j| j != i).map(|j| ln_q[[i, j]]).sum())
        .collect();
    let mut total = 0.0;
    for t in log.transactions() {
        let s = t.sender();
        let mut v = miss_all[s];
        for &r in t.recipients() {
            v += ln_p[[s, r]] - ln_q[[s, r]];
        }
        total += v;
    }
    total
}

/// `2 log L - (K^2 + K) log |Y|`, natural log.
pub fn bic(log_l: f64, k: usize, total_recipients: usize) -> f64 {
    let params = (k * k + k) as f64;
    2.0 * log_l - params * (total_recipients as f64).ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicRecord {
    pub k: usize,
    pub log_predictive_likelihood: f64,
    pub bic: f64,
    pub converged: bool,
    pub iterations: usize,
    pub final_elbo: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BicReport {
    pub records: Vec<BicRecord>,
    pub best_k: usize,
    pub total_recipients: usize,
}

impl BicReport {
    /// One row per `K`: predictive log-likelihood, BIC and convergence flag.
    pub fn render_table(&self) -> String {
        let mut out = format!(
            "{:>4} {:>16} {:>16} {:>9}\n",
            "K", "log L", "BIC", "converged"
        );
        for r in &self.records {
            let mark = if r.k == self.best_k { " *" } else { "" };
            out.push_str(&format!(
                "{:>4} {:>16.2} {:>16.2} {:>9}{mark}\n",
                r.k, r.log_predictive_likelihood, r.bic, r.converged
            ));
        }
        out
    }
}

/// Seed used for the fit with `k` groups inside a scan.
pub fn scan_seed(base: u64, k: usize) -> u64 {
    splitmix(base ^ (k as u64).wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Fits every `K` in `k_range` and scores it by BIC on the training log.
/// The best `K` maximizes BIC; ties go to the smaller `K`.
pub fn select_k(log: &TransactionLog, k_range: &[usize], base: &FitConfig) -> Result<BicReport> {
    if k_range.is_empty() {
        return Err(TmmsbError::InvalidParameter("empty K range".into()));
    }
    let total = log.total_recipients();
    if total == 0 {
        return Err(TmmsbError::InsufficientData("log has no recipients".into()));
    }
    let mut records = k_range
        .par_iter()
        .map(|&k| {
            let config = FitConfig {
                k,
                seed: scan_seed(base.seed, k),
                ..base.clone()
            };
            let model = fit(log, &config)?;
            let log_l =
                predictive_log_likelihood(&model.memberships, model.b(), log, config.clamp_eps)?;
            if !model.converged {
                log::warn!("fit with K = {k} did not converge; scored anyway");
            }
            Ok(BicRecord {
                k,
                log_predictive_likelihood: log_l,
                bic: bic(log_l, k, total),
                converged: model.converged,
                iterations: model.iterations,
                final_elbo: model.final_elbo(),
                seed: config.seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    records.sort_by_key(|r| r.k);
    let best_k = best_of(&records);
    Ok(BicReport {
        records,
        best_k,
        total_recipients: total,
    })
}

fn best_of(records: &[BicRecord]) -> usize {
    let mut best = &records[0];
    for r in &records[1..] {
        if r.bic > best.bic {
            best = r;
        }
    }
    best.k
}
