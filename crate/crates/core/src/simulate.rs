//! Generative sampler for transactional networks.
//!
//! Each node draws a membership vector from a symmetric or general Dirichlet.
//! Every transaction then picks a sender by weight, draws one group label per
//! node from its membership vector, and includes each other node as a recipient
//! with probability `B[z_sender, z_node]`. Draws with no recipients are
//! rejected and redrawn with the same sender.

use ndarray::{array, Array2};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Gamma, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmmsbError};
use crate::model::{MembershipMatrix, Transaction, TransactionLog};

pub const DEFAULT_MAX_REJECTIONS: usize = 1000;

/// Number of transactions to draw.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransactionCount {
    Fixed(usize),
    Poisson(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub m: usize,
    pub count: TransactionCount,
    pub alpha: Vec<f64>,
    pub b: Array2<f64>,
    /// Sender weights; uniform when absent.
    pub sender_weights: Option<Vec<f64>>,
    pub seed: u64,
    pub max_rejections: usize,
}

impl SimulationConfig {
    pub fn new(m: usize, n: usize, alpha: f64, b: Array2<f64>, seed: u64) -> Self {
        let k = b.nrows();
        Self {
            m,
            count: TransactionCount::Fixed(n),
            alpha: vec![alpha; k],
            b,
            sender_weights: None,
            seed,
            max_rejections: DEFAULT_MAX_REJECTIONS,
        }
    }

    pub fn k(&self) -> usize {
        self.b.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        if self.m < 2 {
            return Err(TmmsbError::InvalidParameter(format!(
                "need at least 2 nodes, got {}",
                self.m
            )));
        }
        if k == 0 || self.b.ncols() != k {
            return Err(TmmsbError::Dimension(format!(
                "interaction matrix must be square, got {}x{}",
                self.b.nrows(),
                self.b.ncols()
            )));
        }
        if let Some(v) = self.b.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(TmmsbError::InvalidParameter(format!(
                "interaction entry {v} outside [0, 1]"
            )));
        }
        if self.alpha.len() != k {
            return Err(TmmsbError::Dimension(format!(
                "alpha has {} entries for {k} groups",
                self.alpha.len()
            )));
        }
        if self.alpha.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(TmmsbError::InvalidParameter(
                "alpha entries must be positive".into(),
            ));
        }
        match self.count {
            TransactionCount::Fixed(0) => {
                return Err(TmmsbError::InvalidParameter(
                    "transaction count must be at least 1".into(),
                ))
            }
            TransactionCount::Poisson(rate) if !(rate > 0.0 && rate.is_finite()) => {
                return Err(TmmsbError::InvalidParameter(format!(
                    "Poisson rate must be positive, got {rate}"
                )))
            }
            _ => {}
        }
        if let Some(w) = &self.sender_weights {
            if w.len() != self.m {
                return Err(TmmsbError::Dimension(format!(
                    "{} sender weights for {} nodes",
                    w.len(),
                    self.m
                )));
            }
            if w.iter().any(|x| !(*x >= 0.0)) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(TmmsbError::InvalidParameter(
                    "sender weights must be non-negative and sum to 1".into(),
                ));
            }
        }
        if self.max_rejections == 0 {
            return Err(TmmsbError::InvalidParameter(
                "rejection cap must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Output of [`sample_network`]: the log plus the ground truth behind it.
#[derive(Clone, Debug)]
pub struct SimulatedNetwork {
    pub log: TransactionLog,
    pub memberships: MembershipMatrix,
    /// `groups[n][i]` is the group node `i` took in transaction `n`.
    pub groups: Vec<Vec<usize>>,
    /// Rejected zero-recipient draws, summed over transactions.
    pub rejections: usize,
}

/// The named generator used for every seeded draw in this crate.
pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Simulates a network with the generator seeded from `config.seed`.
pub fn simulate(config: &SimulationConfig) -> Result<SimulatedNetwork> {
    let mut rng = seeded_rng(config.seed);
    sample_network(config, &mut rng)
}

pub fn sample_network<R: Rng + ?Sized>(
    config: &SimulationConfig,
    rng: &mut R,
) -> Result<SimulatedNetwork> {
    config.validate()?;
    let m = config.m;
    let memberships = sample_memberships(m, &config.alpha, rng)?;
    let n = match config.count {
        TransactionCount::Fixed(n) => n,
        TransactionCount::Poisson(rate) => {
            let d = Poisson::new(rate)
                .map_err(|e| TmmsbError::InvalidParameter(format!("Poisson rate: {e}")))?;
            d.sample(rng) as usize
        }
    };
    let sender_dist = match &config.sender_weights {
        Some(w) => Some(
            WeightedIndex::new(w)
                .map_err(|e| TmmsbError::InvalidParameter(format!("sender weights: {e}")))?,
        ),
        None => None,
    };
    let group_dists = memberships
        .as_array()
        .rows()
        .into_iter()
        .map(|row| {
            WeightedIndex::new(row.iter().copied())
                .map_err(|e| TmmsbError::InvalidParameter(format!("membership row: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut transactions = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let mut rejections = 0;
    let mut z = vec![0usize; m];
    let mut recipients = Vec::new();
    for index in 0..n {
        let sender = match &sender_dist {
            Some(d) => d.sample(rng),
            None => rng.random_range(0..m),
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            for (zi, d) in z.iter_mut().zip(&group_dists) {
                *zi = d.sample(rng);
            }
            let row = config.b.row(z[sender]);
            recipients.clear();
            for j in 0..m {
                if j != sender && rng.random::<f64>() < row[z[j]] {
                    recipients.push(j);
                }
            }
            if !recipients.is_empty() {
                break;
            }
            rejections += 1;
            if attempts >= config.max_rejections {
                let pi = memberships.row(sender);
                let best = (0..config.k())
                    .map(|g| config.b.row(g).iter().cloned().fold(0.0, f64::max))
                    .collect::<Vec<_>>();
                return Err(TmmsbError::RejectionCapExceeded {
                    transaction: index,
                    sender,
                    attempts,
                    detail: format!(
                        "sender membership {:?}, largest B entry per sending group {:?}",
                        pi.to_vec(),
                        best
                    ),
                });
            }
        }
        transactions.push(Transaction::new(sender, recipients.iter().copied())?);
        groups.push(z.clone());
    }
    let log = TransactionLog::new(m, transactions)?;
    Ok(SimulatedNetwork {
        log,
        memberships,
        groups,
        rejections,
    })
}

/// Draws `m` Dirichlet(alpha) rows. Small shapes are sampled in log space
/// (`Gamma(a) = Gamma(a + 1) * U^(1/a)`) so rows never underflow to all zeros.
pub fn sample_memberships<R: Rng + ?Sized>(
    m: usize,
    alpha: &[f64],
    rng: &mut R,
) -> Result<MembershipMatrix> {
    let k = alpha.len();
    let gammas = alpha
        .iter()
        .map(|&a| {
            let shape = if a < 1.0 { a + 1.0 } else { a };
            Gamma::new(shape, 1.0)
                .map_err(|e| TmmsbError::InvalidParameter(format!("alpha {a}: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut pi = Array2::zeros((m, k));
    let mut logs = vec![0.0; k];
    for i in 0..m {
        for (g, (&a, d)) in alpha.iter().zip(&gammas).enumerate() {
            let mut l = d.sample(rng).ln();
            if a < 1.0 {
                let u: f64 = rng.random();
                l += u.ln() / a;
            }
            logs[g] = l;
        }
        let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = logs.iter().map(|l| (l - max).exp()).sum();
        for g in 0..k {
            pi[[i, g]] = (logs[g] - max).exp() / total;
        }
    }
    MembershipMatrix::from_weights(&pi)
}

/// Built-in simulation scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// The four scenarios of the simulation study, numbered 1 to 4.
    Table1(u8),
    /// A sparse, forum-style network with 248 nodes and 6222 transactions.
    RedditLike,
}

impl std::str::FromStr for Preset {
    type Err = TmmsbError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reddit-like" => Ok(Self::RedditLike),
            _ => {
                let idx = s
                    .strip_prefix("table1:")
                    .and_then(|v| v.parse::<u8>().ok())
                    .filter(|v| (1..=4).contains(v))
                    .ok_or_else(|| {
                        TmmsbError::InvalidParameter(format!(
                            "unknown preset `{s}` (expected table1:1..4 or reddit-like)"
                        ))
                    })?;
                Ok(Self::Table1(idx))
            }
        }
    }
}

impl std::fmt::Display for Preset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Table1(i) => write!(f, "table1:{i}"),
            Self::RedditLike => f.write_str("reddit-like"),
        }
    }
}

/// Interaction matrix of the four-group scenarios. Rows are sending groups.
pub fn four_group_b() -> Array2<f64> {
    array![
        [0.01, 0.2, 0.01, 0.01],
        [0.01, 0.3, 0.2, 0.1],
        [0.1, 0.01, 0.01, 0.3],
        [0.1, 0.01, 0.01, 0.3],
    ]
}

fn three_group_b() -> Array2<f64> {
    array![[0.25, 0.02, 0.1], [0.01, 0.02, 0.3], [0.2, 0.25, 0.01]]
}

/// Nine groups: strong within-group traffic plus one outgoing off-diagonal
/// channel per group, on a 0.01 background.
fn nine_group_b() -> Array2<f64> {
    let k = 9;
    Array2::from_shape_fn((k, k), |(r, c)| {
        if r == c {
            0.3
        } else if c == (r + 2) % k {
            0.15
        } else {
            0.01
        }
    })
}

fn reddit_like_b() -> Array2<f64> {
    let k = 6;
    Array2::from_shape_fn((k, k), |(r, c)| if r == c { 0.04 } else { 0.0005 })
}

/// Heavy-tailed sender weights: node `i` gets weight proportional to `1 / (i + 10)`
/// after a seeded shuffle.
fn reddit_like_sender_weights(m: usize, seed: u64) -> Vec<f64> {
    use rand::seq::SliceRandom;
    let mut w: Vec<f64> = (0..m).map(|i| 1.0 / (i as f64 + 10.0)).collect();
    w.shuffle(&mut seeded_rng(seed ^ 0x5eed_5e11));
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

impl Preset {
    pub fn config(self, seed: u64) -> Result<SimulationConfig> {
        Ok(match self {
            Self::Table1(1) => SimulationConfig::new(50, 500, 0.05, three_group_b(), seed),
            Self::Table1(2) => SimulationConfig::new(65, 650, 0.05, four_group_b(), seed),
            Self::Table1(3) => SimulationConfig::new(65, 650, 0.25, four_group_b(), seed),
            Self::Table1(4) => SimulationConfig::new(150, 1500, 0.05, nine_group_b(), seed),
            Self::Table1(i) => {
                return Err(TmmsbError::InvalidParameter(format!(
                    "no preset table1:{i} (expected 1 to 4)"
                )))
            }
            Self::RedditLike => {
                let mut c = SimulationConfig::new(248, 6222, 0.05, reddit_like_b(), seed);
                c.sender_weights = Some(reddit_like_sender_weights(248, seed));
                c
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_sizes() {
        let c = Preset::Table1(4).config(1).unwrap();
        assert!(Preset::Table1(5).config(1).is_err());
        assert_eq!((c.m, c.k(), c.alpha[0]), (150, 9, 0.05));
        assert_eq!(c.count, TransactionCount::Fixed(1500));
        assert_eq!("table1:3".parse::<Preset>().unwrap(), Preset::Table1(3));
        assert!("table1:5".parse::<Preset>().is_err());
    }

    #[test]
    fn table_scenario_has_exact_count_and_valid_transactions() {
        let net = simulate(&Preset::Table1(1).config(7).unwrap()).unwrap();
        assert_eq!(net.log.len(), 500);
        for t in net.log.transactions() {
            assert!(!t.recipients().is_empty());
            assert!(!t.receives(t.sender()));
        }
        assert_eq!(net.groups.len(), 500);
    }

    #[test]
    fn forced_two_node_network() {
        let c = SimulationConfig::new(2, 10, 0.1, array![[1.0]], 3);
        let net = simulate(&c).unwrap();
        assert_eq!(net.log.len(), 10);
        for t in net.log.transactions() {
            assert_eq!(t.recipients(), &[1 - t.sender()]);
        }
        assert_eq!(net.rejections, 0);
    }

    #[test]
    fn rejection_cap_is_reported() {
        let mut c = SimulationConfig::new(3, 5, 0.1, array![[0.0]], 3);
        c.max_rejections = 10;
        match simulate(&c) {
            Err(TmmsbError::RejectionCapExceeded { attempts, .. }) => assert_eq!(attempts, 10),
            other => panic!("expected rejection error, got {other:?}"),
        }
    }

    #[test]
    fn same_seed_same_log() {
        let c = Preset::Table1(2).config(11).unwrap();
        let a = simulate(&c).unwrap();
        let b = simulate(&c).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.memberships, b.memberships);
    }

    #[test]
    fn tiny_alpha_rows_stay_normalized() {
        let pi = sample_memberships(500, &[0.001; 5], &mut seeded_rng(2)).unwrap();
        for row in pi.as_array().rows() {
            assert!((row.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn poisson_count() {
        let mut c = SimulationConfig::new(10, 1, 0.1, array![[0.5]], 5);
        c.count = TransactionCount::Poisson(40.0);
        let net = simulate(&c).unwrap();
        assert!(net.log.len() > 10 && net.log.len() < 90);
    }
}
