//! Wall-clock scaling of the fit over a grid of network sizes.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TmmsbError};
use crate::inference::{fit, FitConfig};
use crate::simulate::{simulate, SimulationConfig};

pub const MIN_POINTS: usize = 6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchGrid {
    pub m: Vec<usize>,
    pub n: Vec<usize>,
    pub k: Vec<usize>,
    pub alpha: f64,
    pub repeats: usize,
    pub seed: u64,
    /// When set, every fit runs exactly this many outer iterations of this
    /// many inner sweeps, so timings measure cost per iteration rather than
    /// time to convergence.
    pub fixed_iterations: Option<usize>,
}

impl Default for BenchGrid {
    fn default() -> Self {
        Self {
            m: vec![50, 100],
            n: vec![250, 500],
            k: vec![2, 4, 8],
            alpha: 0.1,
            repeats: 1,
            seed: 0,
            fixed_iterations: Some(5),
        }
    }
}

impl BenchGrid {
    pub fn points(&self) -> Vec<(usize, usize, usize)> {
        let mut out = Vec::new();
        for &m in &self.m {
            for &n in &self.n {
                for &k in &self.k {
                    out.push((m, n, k));
                }
            }
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let n_points = self.points().len();
        if n_points < MIN_POINTS {
            return Err(TmmsbError::InsufficientData(format!(
                "grid has {n_points} points, regression needs at least {MIN_POINTS}"
            )));
        }
        for (name, v) in [("M", &self.m), ("N", &self.n), ("K", &self.k)] {
            let mut d = v.clone();
            d.sort_unstable();
            d.dedup();
            if d.len() < 2 {
                return Err(TmmsbError::InsufficientData(format!(
                    "{name} needs at least two distinct values"
                )));
            }
        }
        if self.m.iter().any(|&m| m < 2) || self.k.contains(&0) || self.n.contains(&0) {
            return Err(TmmsbError::InvalidParameter(
                "grid values must be positive, M >= 2".into(),
            ));
        }
        if self.fixed_iterations == Some(0) {
            return Err(TmmsbError::InvalidParameter(
                "fixed_iterations must be at least 1".into(),
            ));
        }
        if self.repeats == 0 {
            return Err(TmmsbError::InvalidParameter(
                "repeats must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub m: usize,
    pub n: usize,
    pub k: usize,
    /// Median wall time of the fit, in seconds.
    pub seconds: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub intercept: f64,
    pub exponent_m: f64,
    pub exponent_n: f64,
    pub exponent_k: f64,
    pub r_squared: f64,
}

/// Interaction matrix used for bench networks: 0.3 on the diagonal, 0.02 elsewhere.
pub fn bench_b(k: usize) -> Array2<f64> {
    Array2::from_shape_fn((k, k), |(r, c)| if r == c { 0.3 } else { 0.02 })
}

/// Simulates one network per grid point and times `fit` on it.
pub fn run_bench(grid: &BenchGrid, base: &FitConfig) -> Result<Vec<BenchPoint>> {
    grid.validate()?;
    grid.points()
        .into_iter()
        .enumerate()
        .map(|(i, (m, n, k))| {
            let sim = simulate(&SimulationConfig::new(
                m,
                n,
                grid.alpha,
                bench_b(k),
                grid.seed.wrapping_add(i as u64),
            ))?;
            let config = match grid.fixed_iterations {
                Some(it) => FitConfig {
                    k,
                    max_outer_iters: it,
                    max_inner_iters: it,
                    rel_tol: f64::MIN_POSITIVE,
                    restarts: 1,
                    refine_rounds: 0,
                    ..base.clone()
                },
                None => FitConfig { k, ..base.clone() },
            };
            let mut times = Vec::with_capacity(grid.repeats);
            let mut last = None;
            for _ in 0..grid.repeats {
                let start = Instant::now();
                let model = fit(&sim.log, &config)?;
                times.push(start.elapsed().as_secs_f64());
                last = Some(model);
            }
            let model = last.expect("repeats >= 1");
            times.sort_by(f64::total_cmp);
            log::info!("bench M={m} N={n} K={k}: {:.4}s", times[times.len() / 2]);
            Ok(BenchPoint {
                m,
                n,
                k,
                seconds: times[times.len() / 2],
                iterations: model.iterations,
                converged: model.converged,
            })
        })
        .collect()
}

/// Least squares fit of `ln t = c + a ln M + b ln N + d ln K`.
pub fn fit_scaling(points: &[BenchPoint]) -> Result<ScalingFit> {
    if points.len() < MIN_POINTS {
        return Err(TmmsbError::InsufficientData(format!(
            "{} timing points, regression needs at least {MIN_POINTS}",
            points.len()
        )));
    }
    if points.iter().any(|p| !(p.seconds > 0.0)) {
        return Err(TmmsbError::InvalidParameter(
            "timings must be positive".into(),
        ));
    }
    let rows = points.len();
    let x = DMatrix::from_fn(rows, 4, |r, c| {
        let p = &points[r];
        match c {
            0 => 1.0,
            1 => (p.m as f64).ln(),
            2 => (p.n as f64).ln(),
            _ => (p.k as f64).ln(),
        }
    });
    let y = DVector::from_iterator(rows, points.iter().map(|p| p.seconds.ln()));
    let xtx = x.transpose() * &x;
    let coef = xtx
        .cholesky()
        .ok_or_else(|| TmmsbError::InsufficientData("grid does not vary every dimension".into()))?
        .solve(&(x.transpose() * &y));
    let fitted = &x * &coef;
    let mean = y.mean();
    let ss_res: f64 = (&y - fitted).iter().map(|e| e * e).sum();
    let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    Ok(ScalingFit {
        intercept: coef[0],
        exponent_m: coef[1],
        exponent_n: coef[2],
        exponent_k: coef[3],
        r_squared,
    })
}
