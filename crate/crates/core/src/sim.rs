//! Monte-Carlo simulation of the optimal process through its Y representation.
//!
//! `Y` solves `dY = ∂_y u[k](Y) dt + dW` from `Y_0 = Y_0(X_0)`, and `X_t = X_t(Y_t)`.
//! The drift is read on the Y side and the diffusion `β/(β − ∂_xx v)` on the X side.
//! Every path draws from its own ChaCha stream `(seed, path index)`, so results do not
//! depend on scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bridge::{feedback, SbbSolution};
use crate::dual::SolverConfig;
use crate::error::{Result, SbbError};
use crate::measures::{ks_empirical, quantile_from_cdf, wasserstein2, wasserstein2_empirical, GridMeasure};

/// Fewest paths for which a standard error exists.
pub const MIN_PATHS: usize = 2;
pub const MAX_DUMPED_PATHS: usize = 1000;
/// Largest tolerated fraction of paths leaving the grid.
pub const MAX_EXCLUDED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub path_count: usize,
    pub excluded_paths: usize,
    pub time_steps: usize,
    pub seed: u64,
    pub primal_cost_mean: f64,
    pub primal_cost_stderr: f64,
    pub drift_energy: f64,
    pub diffusion_energy: f64,
    #[serde(rename = "terminal_W2")]
    pub terminal_w2: f64,
    #[serde(rename = "terminal_KS")]
    pub terminal_ks: f64,
    #[serde(rename = "initial_W2")]
    pub initial_w2: f64,
    pub martingale_slope: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryRow {
    pub path_id: usize,
    pub t: f64,
    #[serde(rename = "Y")]
    pub y: f64,
    #[serde(rename = "X")]
    pub x: f64,
    pub a: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub report: SimulationReport,
    /// `(X_0, X_T)` of the retained paths, in path order.
    pub x0: Vec<f64>,
    pub xt: Vec<f64>,
    pub trajectories: Vec<TrajectoryRow>,
}

struct PathResult {
    x0: f64,
    xt: f64,
    drift: f64,
    diffusion: f64,
    rows: Vec<TrajectoryRow>,
}

fn simulate_path(sol: &SbbSolution, cdf0: &[f64], seed: u64, id: usize, keep_rows: bool) -> Option<PathResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    let grid = &sol.grid;
    let tg = &sol.time_grid;
    let beta = sol.config.beta;
    let m = tg.steps();
    let dt = tg.dt();
    let sq = dt.sqrt();
    let x0 = quantile_from_cdf(grid, cdf0, rng.gen::<f64>());
    let mut y = sol.ymap[0].eval(x0);
    let (mut drift, mut diffusion) = (0.0, 0.0);
    let mut rows = Vec::new();
    for k in 0..=m {
        if !grid.contains(y) {
            return None;
        }
        let a = sol.heat.score[k].eval(y);
        let x = sol.xmap[k].eval(y);
        if !grid.contains(x) {
            return None;
        }
        let (_, sigma) = feedback(a, sol.v_xx[k].eval(x), beta).ok()?;
        if keep_rows {
            rows.push(TrajectoryRow { path_id: id, t: tg.t(k), y, x, a, sigma });
        }
        if k == m {
            return Some(PathResult { x0, xt: x, drift, diffusion, rows });
        }
        drift += 0.5 * a * a * dt;
        diffusion += 0.5 * beta * (sigma - 1.0) * (sigma - 1.0) * dt;
        let xi: f64 = rng.sample(StandardNormal);
        y += a * dt + sq * xi;
    }
    unreachable!()
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Euler–Maruyama simulation of `paths` paths; `dump` keeps trajectories of the first
/// `min(paths, MAX_DUMPED_PATHS)` paths.
pub fn simulate_with(sol: &SbbSolution, paths: usize, seed: u64, dump: bool) -> Result<SimulationOutput> {
    if paths < MIN_PATHS {
        return Err(SbbError::InvalidConfig(format!("need at least {MIN_PATHS} paths, got {paths}")));
    }
    let cdf0 = sol.mu0.node_cdf();
    let results: Vec<Option<PathResult>> = (0..paths)
        .into_par_iter()
        .map(|id| simulate_path(sol, &cdf0, seed, id, dump && id < MAX_DUMPED_PATHS))
        .collect();
    let excluded = results.iter().filter(|r| r.is_none()).count();
    if excluded as f64 > MAX_EXCLUDED_FRACTION * paths as f64 {
        return Err(SbbError::GridTooSmall(format!("{excluded} of {paths} paths left the grid")));
    }
    let kept: Vec<PathResult> = results.into_iter().flatten().collect();
    let cost: Vec<f64> = kept.iter().map(|p| p.drift + p.diffusion).collect();
    let drift: Vec<f64> = kept.iter().map(|p| p.drift).collect();
    let diffusion: Vec<f64> = kept.iter().map(|p| p.diffusion).collect();
    let (primal_cost_mean, primal_cost_stderr) = mean_and_stderr(&cost);
    let x0: Vec<f64> = kept.iter().map(|p| p.x0).collect();
    let xt: Vec<f64> = kept.iter().map(|p| p.xt).collect();
    let report = SimulationReport {
        path_count: paths,
        excluded_paths: excluded,
        time_steps: sol.time_grid.steps(),
        seed,
        primal_cost_mean,
        primal_cost_stderr,
        drift_energy: mean_and_stderr(&drift).0,
        diffusion_energy: mean_and_stderr(&diffusion).0,
        terminal_w2: wasserstein2_empirical(&xt, &sol.mu_t),
        terminal_ks: ks_empirical(&xt, &sol.mu_t),
        initial_w2: wasserstein2_empirical(&x0, &sol.mu0),
        martingale_slope: martingale_diagnostic(&x0, &xt)?,
    };
    let trajectories = kept.into_iter().flat_map(|p| p.rows).collect();
    Ok(SimulationOutput { report, x0, xt, trajectories })
}

pub fn simulate(sol: &SbbSolution, paths: usize, seed: u64) -> Result<SimulationReport> {
    Ok(simulate_with(sol, paths, seed, false)?.report)
}

/// Cost of the comonotone linear interpolation `X_t = X_0 + (t/T)(X_T − X_0)` with zero
/// diffusion: `W2²/(2T) + βT/2`.
pub fn linear_coupling_bound(mu0: &GridMeasure, mu_t: &GridMeasure, cfg: &SolverConfig) -> f64 {
    let w = wasserstein2(mu0, mu_t);
    w * w / (2.0 * cfg.horizon) + 0.5 * cfg.beta * cfg.horizon
}

/// Least-squares slope of `X_T` on `X_0`.
pub fn martingale_diagnostic(x0: &[f64], xt: &[f64]) -> Result<f64> {
    let n = x0.len() as f64;
    if x0.len() != xt.len() || x0.len() < 2 {
        return Err(SbbError::Degenerate("need matching pairs for the slope".into()));
    }
    let m0 = x0.iter().sum::<f64>() / n;
    let mt = xt.iter().sum::<f64>() / n;
    let sxx: f64 = x0.iter().map(|a| (a - m0) * (a - m0)).sum::<f64>() / n;
    if sxx < 1e-12 {
        return Err(SbbError::Degenerate(format!("X_0 variance {sxx:.3e} too small")));
    }
    let sxy: f64 = x0.iter().zip(xt).map(|(a, b)| (a - m0) * (b - mt)).sum::<f64>() / n;
    Ok(sxy / sxx)
}
