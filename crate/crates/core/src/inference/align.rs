//! Group-label alignment between two membership matrices.

use crate::error::{Result, TmmsbError};
use crate::model::MembershipMatrix;

/// Largest group count solved by exhaustive search.
pub const EXHAUSTIVE_MAX_K: usize = 8;

/// `cost[r][c] = sum_m |reference[m, r] - candidate[m, c]|`.
pub fn alignment_costs(
    reference: &MembershipMatrix,
    candidate: &MembershipMatrix,
) -> Result<Vec<Vec<f64>>> {
    if reference.num_nodes() != candidate.num_nodes() || reference.k() != candidate.k() {
        return Err(TmmsbError::Dimension(format!(
            "cannot align {}x{} memberships with {}x{}",
            reference.num_nodes(),
            reference.k(),
            candidate.num_nodes(),
            candidate.k()
        )));
    }
    let k = reference.k();
    let (r, c) = (reference.as_array(), candidate.as_array());
    Ok((0..k)
        .map(|a| {
            (0..k)
                .map(|b| {
                    r.column(a)
                        .iter()
                        .zip(c.column(b))
                        .map(|(x, y)| (x - y).abs())
                        .sum()
                })
                .collect()
        })
        .collect())
}

/// Permutation `perm` minimizing `sum_k cost[k][perm[k]]`: candidate group
/// `perm[k]` plays the role of reference group `k`.
///
/// Exhaustive in lexicographic order for `K <= 8` (first minimum wins, so an
/// already-aligned candidate yields the identity); greedy above that.
pub fn align_labels(
    reference: &MembershipMatrix,
    candidate: &MembershipMatrix,
) -> Result<Vec<usize>> {
    let cost = alignment_costs(reference, candidate)?;
    let k = cost.len();
    if k <= EXHAUSTIVE_MAX_K {
        Ok(exhaustive(&cost))
    } else {
        Ok(greedy(&cost))
    }
}

pub fn permutation_cost(cost: &[Vec<f64>], perm: &[usize]) -> f64 {
    perm.iter().enumerate().map(|(r, &c)| cost[r][c]).sum()
}

fn exhaustive(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = perm.clone();
    let mut best_cost = permutation_cost(cost, &perm);
    while next_permutation(&mut perm) {
        let c = permutation_cost(cost, &perm);
        if c < best_cost {
            best_cost = c;
            best.copy_from_slice(&perm);
        }
    }
    best
}

fn greedy(cost: &[Vec<f64>]) -> Vec<usize> {
    let k = cost.len();
    let mut perm = vec![usize::MAX; k];
    let mut used = vec![false; k];
    for _ in 0..k {
        let mut pick = (usize::MAX, usize::MAX, f64::INFINITY);
        for (r, row) in cost
            .iter()
            .enumerate()
            .filter(|(r, _)| perm[*r] == usize::MAX)
        {
            for (c, &v) in row.iter().enumerate().filter(|(c, _)| !used[*c]) {
                if v < pick.2 {
                    pick = (r, c, v);
                }
            }
        }
        perm[pick.0] = pick.1;
        used[pick.1] = true;
    }
    perm
}

pub(crate) fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}
