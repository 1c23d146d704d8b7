//! Brute-force oracles shared by the integration tests.

#![allow(dead_code)]

use std::collections::BTreeSet;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tmmsb::{Transaction, TransactionLog};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_log(r: &mut ChaCha8Rng, m: usize, n: usize) -> TransactionLog {
    let ts = (0..n)
        .map(|_| {
            let s = r.random_range(0..m);
            let size = r.random_range(1..m.min(4));
            let mut recips = BTreeSet::new();
            while recips.len() < size {
                let j = r.random_range(0..m);
                if j != s {
                    recips.insert(j);
                }
            }
            Transaction::new(s, recips).unwrap()
        })
        .collect();
    TransactionLog::new(m, ts).unwrap()
}

pub fn random_simplex_rows(r: &mut ChaCha8Rng, rows: usize, k: usize) -> Vec<f64> {
    let mut out: Vec<f64> = (0..rows * k).map(|_| r.random_range(0.01..1.0)).collect();
    for row in out.chunks_mut(k) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Per sender-group and receiver-group pair: recipients received and
/// non-sender slots exposed, with per-transaction hard labels.
pub fn count_exposures(
    log: &TransactionLog,
    labels: &[Vec<usize>],
    k: usize,
) -> (Array2<f64>, Array2<f64>) {
    let m = log.num_nodes();
    let mut received = Array2::<f64>::zeros((k, k));
    let mut exposed = Array2::<f64>::zeros((k, k));
    for (t, tr) in log.transactions().iter().enumerate() {
        let ks = labels[t][tr.sender()];
        for j in 0..m {
            if j == tr.sender() {
                continue;
            }
            exposed[[ks, labels[t][j]]] += 1.0;
            if tr.recipients().contains(&j) {
                received[[ks, labels[t][j]]] += 1.0;
            }
        }
    }
    (received, exposed)
}

/// Log evidence of a one-transaction log by summing over all `K^M` label
/// assignments. With one draw per node, integrating `pi` out of a Dirichlet
/// gives `P(z_m = k) = alpha_k / sum(alpha)`.
pub fn enumerated_log_evidence(log: &TransactionLog, alpha: &[f64], b: &Array2<f64>) -> f64 {
    let m = log.num_nodes();
    let k = alpha.len();
    let a: f64 = alpha.iter().sum();
    let mut total = 0.0;
    for code in 0..k.pow(m as u32) {
        let z: Vec<usize> = (0..m).map(|i| (code / k.pow(i as u32)) % k).collect();
        let mut p: f64 = z.iter().map(|&c| alpha[c] / a).product();
        for t in log.transactions() {
            let s = t.sender();
            for j in (0..m).filter(|&j| j != s) {
                let q = b[[z[s], z[j]]];
                p *= if t.receives(j) { q } else { 1.0 - q };
            }
        }
        total += p;
    }
    total.ln()
}

/// Set-based BCubed precision and recall over overlapping clusterings.
pub fn set_bcubed(est: &[BTreeSet<usize>], truth: &[BTreeSet<usize>]) -> (f64, f64) {
    let (mut p, mut pn, mut rc, mut rn) = (0.0, 0, 0.0, 0);
    for e in 0..est.len() {
        for f in 0..est.len() {
            let c = est[e].intersection(&est[f]).count() as f64;
            let l = truth[e].intersection(&truth[f]).count() as f64;
            if c > 0.0 {
                p += c.min(l) / c;
                pn += 1;
            }
            if l > 0.0 {
                rc += c.min(l) / l;
                rn += 1;
            }
        }
    }
    (p / pn as f64, rc / rn as f64)
}
