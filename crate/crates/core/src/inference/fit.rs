//! Nested coordinate-ascent variational EM.
//!
//! Each outer iteration re-estimates `B` from the current `phi`, then runs
//! inner sweeps that update every `phi` slot followed by every `gamma` row.
//! Each step maximizes the ELBO in its own block, so the per-iteration ELBO
//! trace never decreases.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::elbo::combine;
use super::state::{Phi, VariationalState};
use super::updates::{estimate_b, sweep_all, terms_all, LogB, NodePrior};
use crate::data::baseline::{baseline_with_distance, RowDistance};
use crate::data::reduce::to_counts;
use crate::error::{Result, TmmsbError};
use crate::model::{
    permute_columns, permute_square, receive_matrix, MembershipMatrix, ModelParams, TransactionLog,
};
use crate::simulate::seeded_rng;

pub const DEFAULT_CLAMP_EPS: f64 = 1e-9;

/// Weight kept on the hard label when seeding phi from clusters or truth.
const SEED_CONFIDENCE: f64 = 0.6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitStrategy {
    /// Uniform phi with per-node multiplicative jitter; gamma = alpha plus
    /// the summed phi, or N / K when the jitter scale is zero.
    UniformJitter,
    /// phi seeded from the average-linkage clustering of the count matrix.
    BaselineClusters,
    /// phi seeded from supplied memberships (see [`fit_with_memberships`]).
    GroundTruth,
}

impl std::str::FromStr for InitStrategy {
    type Err = TmmsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "uniform-jitter" => Ok(Self::UniformJitter),
            "baseline-clusters" => Ok(Self::BaselineClusters),
            "ground-truth" => Ok(Self::GroundTruth),
            other => Err(TmmsbError::InvalidParameter(format!(
                "unknown init `{other}` (expected uniform-jitter, baseline-clusters or ground-truth)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub k: usize,
    pub alpha_value: f64,
    pub max_outer_iters: usize,
    pub max_inner_iters: usize,
    pub rel_tol: f64,
    pub init: InitStrategy,
    pub jitter_scale: f64,
    pub seed: u64,
    pub clamp_eps: f64,
    /// Independent starts; the one with the highest final ELBO is kept.
    pub restarts: usize,
    /// Rounds of merge-and-split moves tried after convergence. A move is
    /// kept only when it raises the final ELBO.
    pub refine_rounds: usize,
    /// Extrapolate gamma along its last change before each phi sweep; a
    /// sweep that lowers the ELBO is undone and replaced by a plain one.
    pub extrapolate: bool,
    /// Row distance of the clustering used by `baseline-clusters` init.
    pub baseline_distance: RowDistance,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 2,
            alpha_value: 0.1,
            max_outer_iters: 100,
            max_inner_iters: 20,
            rel_tol: 1e-6,
            init: InitStrategy::UniformJitter,
            jitter_scale: 0.5,
            seed: 0,
            clamp_eps: DEFAULT_CLAMP_EPS,
            restarts: 1,
            refine_rounds: 0,
            extrapolate: false,
            baseline_distance: RowDistance::Euclidean,
        }
    }
}

impl FitConfig {
    pub fn with_k(k: usize) -> Self {
        Self {
            k,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(TmmsbError::InvalidParameter(what.to_string()));
        if self.k == 0
            || self.max_outer_iters == 0
            || self.max_inner_iters == 0
            || self.restarts == 0
        {
            return bad("k, iteration limits and restarts must be at least 1");
        }
        if !(self.rel_tol > 0.0) {
            return bad("rel_tol must be positive");
        }
        if !(self.alpha_value > 0.0 && self.alpha_value.is_finite()) {
            return bad("alpha must be positive");
        }
        if !(0.0..1.0).contains(&self.jitter_scale) {
            return bad("jitter_scale must lie in [0, 1)");
        }
        if !(self.clamp_eps > 0.0 && self.clamp_eps < 0.5) {
            return bad("clamp_eps must lie in (0, 0.5)");
        }
        Ok(())
    }

    pub fn alpha(&self) -> Vec<f64> {
        vec![self.alpha_value; self.k]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedModel {
    pub params: ModelParams,
    /// Row-normalized gamma.
    pub memberships: MembershipMatrix,
    pub state: VariationalState,
    /// ELBO after every outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Seed of the start that produced this model.
    pub seed: u64,
    pub config: FitConfig,
    /// Group pairs with no soft exposure in the final B estimate.
    pub empty_b_cells: Vec<(usize, usize)>,
}

impl FittedModel {
    pub fn k(&self) -> usize {
        self.params.k()
    }

    pub fn b(&self) -> &Array2<f64> {
        self.params.b()
    }

    pub fn final_elbo(&self) -> f64 {
        self.trace.last().copied().unwrap_or(f64::NEG_INFINITY)
    }

    /// Pairwise receive probabilities `pi_i B pi_j^T` (zero diagonal).
    pub fn receive_matrix(&self) -> Array2<f64> {
        receive_matrix(&self.memberships, self.b())
    }

    /// Relabels groups so that new group `c` is old group `perm[c]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let k = self.k();
        let mut seen = vec![false; k];
        if perm.len() != k
            || perm
                .iter()
                .any(|&p| p >= k || std::mem::replace(&mut seen[p], true))
        {
            return Err(TmmsbError::InvalidParameter(format!(
                "{perm:?} is not a permutation of {k} groups"
            )));
        }
        let b = permute_square(self.b(), perm);
        let alpha = Array1::from_shape_fn(k, |c| self.params.alpha()[perm[c]]);
        let inverse = {
            let mut inv = vec![0; k];
            for (c, &p) in perm.iter().enumerate() {
                inv[p] = c;
            }
            inv
        };
        Ok(Self {
            params: ModelParams::new(b.clone(), alpha)?,
            memberships: self.memberships.permute_columns(perm),
            state: VariationalState {
                gamma: permute_columns(&self.state.gamma, perm),
                phi: self.state.phi.permute_groups(perm),
                b,
            },
            trace: self.trace.clone(),
            converged: self.converged,
            iterations: self.iterations,
            seed: self.seed,
            config: self.config.clone(),
            empty_b_cells: self
                .empty_b_cells
                .iter()
                .map(|&(r, c)| (inverse[r], inverse[c]))
                .collect(),
        })
    }

    /// This model with its labels aligned to reference memberships.
    pub fn aligned_to(&self, reference: &MembershipMatrix) -> Result<Self> {
        let perm = super::align::align_labels(reference, &self.memberships)?;
        self.permuted(&perm)
    }

    pub fn to_document(&self) -> ModelDocument {
        ModelDocument {
            k: self.k(),
            alpha: self.params.alpha().to_vec(),
            b: rows(self.b()),
            gamma: rows(&self.state.gamma),
            pi: rows(self.memberships.as_array()),
            trace: self.trace.clone(),
            converged: self.converged,
            iterations: self.iterations,
            seed: self.seed,
            config: self.config.clone(),
        }
    }
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn from_rows(rows: &[Vec<f64>], what: &str) -> Result<Array2<f64>> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != k) {
        return Err(TmmsbError::Dimension(format!(
            "{what} rows have unequal lengths"
        )));
    }
    Array2::from_shape_vec((n, k), rows.concat())
        .map_err(|e| TmmsbError::Dimension(format!("{what}: {e}")))
}

/// JSON form of a fitted model. Matrices are arrays of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub k: usize,
    pub alpha: Vec<f64>,
    pub b: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
    pub pi: Vec<Vec<f64>>,
    pub trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub seed: u64,
    pub config: FitConfig,
}

impl ModelDocument {
    /// Rebuilds a model. The per-transaction phi tensor is not serialized, so
    /// the restored state carries an empty one.
    pub fn into_model(self) -> Result<FittedModel> {
        let b = from_rows(&self.b, "b")?;
        let gamma = from_rows(&self.gamma, "gamma")?;
        let pi = from_rows(&self.pi, "pi")?;
        if b.dim() != (self.k, self.k) || gamma.ncols() != self.k || pi.dim() != gamma.dim() {
            return Err(TmmsbError::Dimension(format!(
                "model document with k = {} has B {:?}, gamma {:?}, pi {:?}",
                self.k,
                b.dim(),
                gamma.dim(),
                pi.dim()
            )));
        }
        let params = ModelParams::new(b.clone(), Array1::from(self.alpha))?;
        let m = gamma.nrows();
        Ok(FittedModel {
            params,
            memberships: MembershipMatrix::new(pi)?,
            state: VariationalState {
                gamma,
                phi: Phi::uniform(0, m, self.k),
                b,
            },
            trace: self.trace,
            converged: self.converged,
            iterations: self.iterations,
            seed: self.seed,
            config: self.config,
            empty_b_cells: Vec::new(),
        })
    }
}

/// Fits the model with a fixed number of groups.
pub fn fit(log: &TransactionLog, config: &FitConfig) -> Result<FittedModel> {
    if config.init == InitStrategy::GroundTruth {
        return Err(TmmsbError::InvalidParameter(
            "ground-truth initialization needs memberships; use fit_with_memberships".into(),
        ));
    }
    fit_inner(log, config, None)
}

/// Like [`fit`], with memberships used when `config.init` is `GroundTruth`.
pub fn fit_with_memberships(
    log: &TransactionLog,
    config: &FitConfig,
    memberships: &MembershipMatrix,
) -> Result<FittedModel> {
    fit_inner(log, config, Some(memberships))
}

fn fit_inner(
    log: &TransactionLog,
    config: &FitConfig,
    memberships: Option<&MembershipMatrix>,
) -> Result<FittedModel> {
    config.validate()?;
    if log.is_empty() {
        return Err(TmmsbError::InsufficientData(
            "cannot fit an empty log".into(),
        ));
    }
    let mut best: Option<FittedModel> = None;
    for restart in 0..config.restarts {
        let seed = restart_seed(config.seed, restart);
        let model = fit_once(log, config, memberships, seed)?;
        if best
            .as_ref()
            .is_none_or(|b| model.final_elbo() > b.final_elbo())
        {
            best = Some(model);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub(crate) fn restart_seed(seed: u64, restart: usize) -> u64 {
    if restart == 0 {
        seed
    } else {
        splitmix(seed ^ (restart as u64).wrapping_mul(0xA24B_AED4_963E_E407))
    }
}

pub(crate) fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn initial_state(
    log: &TransactionLog,
    config: &FitConfig,
    memberships: Option<&MembershipMatrix>,
    seed: u64,
) -> Result<(Phi, Array2<f64>)> {
    let (n, m, k) = (log.len(), log.num_nodes(), config.k);
    let mut rng = seeded_rng(seed);
    let seeded_rows = match config.init {
        InitStrategy::UniformJitter => None,
        InitStrategy::BaselineClusters => {
            let counts = to_counts(log);
            let baseline = baseline_with_distance(
                &counts,
                k.min(m),
                config.baseline_distance,
                config.clamp_eps,
            )?;
            Some(
                MembershipMatrix::one_hot(&baseline.labels, k)?
                    .as_array()
                    .clone(),
            )
        }
        InitStrategy::GroundTruth => {
            let pi = memberships.ok_or_else(|| {
                TmmsbError::InvalidParameter("ground-truth init without memberships".into())
            })?;
            if pi.num_nodes() != m || pi.k() != k {
                return Err(TmmsbError::Dimension(format!(
                    "initial memberships are {}x{}, expected {m}x{k}",
                    pi.num_nodes(),
                    pi.k()
                )));
            }
            Some(pi.as_array().clone())
        }
    };
    let mut phi = match &seeded_rows {
        None => Phi::uniform(n, m, k),
        Some(rows) => {
            let soft = rows.mapv(|v| SEED_CONFIDENCE * v + (1.0 - SEED_CONFIDENCE) / k as f64);
            Phi::broadcast(n, &soft)
        }
    };
    let s = config.jitter_scale;
    if s > 0.0 && k > 1 {
        // One jitter vector per node, shared by all transactions.
        let factors: Vec<f64> = (0..m * k)
            .map(|_| rng.random_range(1.0 - s..1.0 + s))
            .collect();
        for (idx, row) in phi.as_mut_slice().chunks_mut(k).enumerate() {
            let node = idx % m;
            for (v, f) in row.iter_mut().zip(&factors[node * k..(node + 1) * k]) {
                *v *= f;
            }
            let total: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= total);
        }
    }
    let gamma = if s > 0.0 || seeded_rows.is_some() {
        phi.node_sums() + config.alpha_value
    } else {
        Array2::from_elem((m, k), n as f64 / k as f64)
    };
    Ok((phi, gamma))
}

fn relative_change(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / prev.abs().max(f64::MIN_POSITIVE)
}

/// Groups tried as the emptied side of a merge-and-split move.
const REFINE_SMALL: usize = 2;
/// Groups tried as the split side of a merge-and-split move.
const REFINE_LARGE: usize = 3;
/// Cap on the gamma extrapolation factor.
const MAX_EXTRAPOLATION: f64 = 64.0;

fn fit_once(
    log: &TransactionLog,
    config: &FitConfig,
    memberships: Option<&MembershipMatrix>,
    seed: u64,
) -> Result<FittedModel> {
    let (phi, gamma) = initial_state(log, config, memberships, seed)?;
    let mut model = run_em(log, config, phi, gamma, seed)?;
    let mut rng = seeded_rng(splitmix(seed));
    for round in 0..config.refine_rounds {
        match refine(log, config, &model, &mut rng)? {
            Some(better) => {
                log::info!(
                    "refinement round {}: elbo {:.6} -> {:.6}",
                    round + 1,
                    model.final_elbo(),
                    better.final_elbo()
                );
                model = better;
            }
            None => break,
        }
    }
    Ok(model)
}

/// Tries merging a small group into a large one and splitting the result at
/// random, rerunning EM from each candidate. Returns the first candidate
/// whose final ELBO beats `model`.
fn refine<R: Rng>(
    log: &TransactionLog,
    config: &FitConfig,
    model: &FittedModel,
    rng: &mut R,
) -> Result<Option<FittedModel>> {
    let (_, m, k) = model.state.phi.dims();
    if k < 2 {
        return Ok(None);
    }
    let sizes: Vec<f64> = model
        .memberships
        .as_array()
        .sum_axis(ndarray::Axis(0))
        .to_vec();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| sizes[a].total_cmp(&sizes[b]).then(a.cmp(&b)));
    for &small in order.iter().take(REFINE_SMALL) {
        for &large in order.iter().rev().take(REFINE_LARGE) {
            if small == large {
                continue;
            }
            let share: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
            let mut phi = model.state.phi.clone();
            for (idx, row) in phi.as_mut_slice().chunks_mut(k).enumerate() {
                let mass = row[small] + row[large];
                let u = share[idx % m];
                row[large] = mass * u;
                row[small] = mass * (1.0 - u);
            }
            let gamma = phi.node_sums() + config.alpha_value;
            let candidate = run_em(log, config, phi, gamma, model.seed)?;
            if candidate.final_elbo() > model.final_elbo() {
                return Ok(Some(candidate));
            }
        }
    }
    Ok(None)
}

fn run_em(
    log: &TransactionLog,
    config: &FitConfig,
    mut phi: Phi,
    mut gamma: Array2<f64>,
    seed: u64,
) -> Result<FittedModel> {
    let alpha = config.alpha();
    let mut trace = Vec::with_capacity(config.max_outer_iters);
    let mut converged = false;
    let mut iterations = 0;
    let mut estimate;
    let mut step = 1.0;
    let mut previous_gamma: Option<Array2<f64>> = None;
    loop {
        iterations += 1;
        estimate = estimate_b(&phi, log, config.clamp_eps)?;
        let logb = LogB::new(&estimate.b, config.clamp_eps);
        let mut inner_prev = combine(
            terms_all(log, &phi, &logb),
            &gamma,
            &alpha,
            &phi.node_sums(),
        );
        let mut current = inner_prev;
        for _ in 0..config.max_inner_iters {
            let mut accepted = None;
            if let (true, Some(prev)) = (step > 1.0, &previous_gamma) {
                let target = (&gamma - prev) * (step - 1.0) + &gamma;
                let target = target.mapv(|g| g.max(config.alpha_value));
                let backup = phi.clone();
                let terms = sweep_all(log, &mut phi, &NodePrior::new(&target), &logb);
                let sums = phi.node_sums();
                let next = &sums + config.alpha_value;
                let value = combine(terms, &next, &alpha, &sums);
                if value >= inner_prev {
                    step = (step * 2.0).min(MAX_EXTRAPOLATION);
                    accepted = Some((next, value));
                } else {
                    phi = backup;
                    step = 1.0;
                }
            }
            let (next, value) = match accepted {
                Some(done) => done,
                None => {
                    let terms = sweep_all(log, &mut phi, &NodePrior::new(&gamma), &logb);
                    let sums = phi.node_sums();
                    let next = &sums + config.alpha_value;
                    let value = combine(terms, &next, &alpha, &sums);
                    if config.extrapolate {
                        step = step.max(2.0);
                    }
                    (next, value)
                }
            };
            previous_gamma = Some(std::mem::replace(&mut gamma, next));
            current = value;
            let change = relative_change(inner_prev, current);
            inner_prev = current;
            if change < config.rel_tol {
                break;
            }
        }
        let outer_change = trace.last().map(|&p| relative_change(p, current));
        trace.push(current);
        log::debug!("outer iteration {iterations}: elbo {current:.6}");
        if outer_change.is_some_and(|c| c < config.rel_tol) {
            converged = true;
            break;
        }
        if iterations >= config.max_outer_iters {
            break;
        }
    }
    if !converged {
        log::info!(
            "variational EM did not converge within {} outer iterations",
            config.max_outer_iters
        );
    }
    let memberships = MembershipMatrix::from_weights(&gamma)?;
    let params = ModelParams::new(estimate.b.clone(), Array1::from(alpha))?;
    Ok(FittedModel {
        params,
        memberships,
        state: VariationalState {
            gamma,
            phi,
            b: estimate.b,
        },
        trace,
        converged,
        iterations,
        seed,
        config: config.clone(),
        empty_b_cells: estimate.empty_cells,
    })
}
