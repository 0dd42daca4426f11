//! Reduced dual objective `J(φ) = μ_T(T+[φ]) − μ_0(T+[u_T^φ])`, its gradient, and the ascent.
//!
//! The gradient density is `Y_T#μ_T − m_T`. The pushforward `Y_T#μ_T` is computed through the
//! inverse map `X_T = id + φ'/β`: the mass landing in the dual cell of node `j` is the
//! `μ_T`-mass of `[X_T(y_{j−½}), X_T(y_{j+½})]`, with the map evaluated from the one-sided
//! difference of φ across each half node. `m_0 = Y_0#μ_0` is computed the same way from `u_T`.
//!
//! The ascent step is a preconditioned version of the log-ratio update. The increment solves
//! `(m_T + K/β) δ = ∇J`, where `K` is the stiffness operator weighted by `μ_T∘X_T + m_T`.
//! Without the `m_T` term this is the linearization of `Y_T#μ_T − m_T` with the non-local
//! part of `m_T` dropped. The plain ratio update `log(A/m_T)` amplifies high frequencies by
//! about `4/(βh²)` and diverges on fine grids.
//!
//! The extra `m_T` in the stiffness weight keeps the length over which δ can turn, about
//! `sqrt(weight/(β m_T))`, at least `β^{-1/2}`. Where `μ_T∘X_T` is negligible but `m_T` is
//! not, the unweighted step bends φ on the scale of one cell, far past the cone
//! `φ'' ≥ −β`, and the line search then shrinks every step to a few percent.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SbbError};
use crate::grid::{Grid, GridFunction, TimeGrid};
use crate::heat::{convolve_density, log_heat_convolve};
use crate::measures::{quadrature, GridMeasure, HermiteCdf};
use crate::moreau::{beta_convex_project, moreau_plus, MoreauResult};

/// Mass on boundary-clipped nodes above which the grid is declared too small.
pub const CLIPPED_MASS_TOL: f64 = 1e-6;
/// Below this density on both sides a node receives no update.
pub const DENSITY_FLOOR: f64 = 1e-12;
const PRECONDITIONER_SHIFT: f64 = 1e-10;
const OBJECTIVE_SLACK: f64 = 1e-12;
const MIN_DAMPING: f64 = 1e-8;
const RESTORE_AFTER: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub beta: f64,
    pub horizon: f64,
    /// Spatial nodes.
    #[serde(default = "defaults::nodes")]
    pub nodes: usize,
    /// Explicit grid bounds; derived from the marginals when absent.
    #[serde(default)]
    pub bounds: Option<(f64, f64)>,
    #[serde(default = "defaults::time_steps")]
    pub time_steps: usize,
    #[serde(default = "defaults::damping")]
    pub damping: f64,
    #[serde(default = "defaults::max_iter")]
    pub max_iter: usize,
    #[serde(default = "defaults::tol_residual")]
    pub tol_residual: f64,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn nodes() -> usize {
        1024
    }
    pub fn time_steps() -> usize {
        256
    }
    pub fn damping() -> f64 {
        0.5
    }
    pub fn max_iter() -> usize {
        200
    }
    pub fn tol_residual() -> f64 {
        1e-5
    }
}

impl SolverConfig {
    pub fn new(beta: f64, horizon: f64) -> Self {
        Self {
            beta,
            horizon,
            nodes: defaults::nodes(),
            bounds: None,
            time_steps: defaults::time_steps(),
            damping: defaults::damping(),
            max_iter: defaults::max_iter(),
            tol_residual: defaults::tol_residual(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SbbError::InvalidConfig(m));
        if !(self.beta.is_finite() && self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("T must be positive, got {}", self.horizon));
        }
        if self.beta * self.horizon <= 1.0 {
            return bad(format!(
                "beta*T must exceed 1 for an optimal bridge to exist (got beta*T = {})",
                self.beta * self.horizon
            ));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tol_residual > 0.0) {
            return bad(format!("tol_residual must be positive, got {}", self.tol_residual));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo < hi) {
                return bad(format!("grid bounds must satisfy lo < hi, got ({lo}, {hi})"));
            }
        }
        Grid::new(0.0, 1.0, self.nodes)?;
        TimeGrid::new(self.horizon, self.time_steps)?;
        Ok(())
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.horizon, self.time_steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    pub residual: f64,
    pub damping: f64,
}

#[derive(Debug, Clone)]
pub struct DualState {
    pub phi: GridFunction,
    pub objective: f64,
    pub gradient: Vec<f64>,
    pub residual: f64,
    pub iteration: usize,
    pub converged: bool,
    pub history: Vec<IterationRecord>,
}

/// Densities entering the first-order system, all on the potential grid.
#[derive(Debug, Clone)]
pub struct DualGradient {
    /// `Y_T#μ_T − m_T`.
    pub gradient: Vec<f64>,
    /// `Y_T#μ_T`.
    pub pushed_terminal: Vec<f64>,
    /// `m_0 = Y_0#μ_0`.
    pub m0: Vec<f64>,
    /// `ν_0 = e^{−u_T} m_0`.
    pub nu0: Vec<f64>,
    /// `ν_T = N_T * ν_0`.
    pub nu_t: Vec<f64>,
    /// `m_T = e^φ ν_T`.
    pub m_t: Vec<f64>,
    pub mass_m_t: f64,
    /// Argmin maps `Y_0` (of `T+[u_T]`) and `Y_T` (of `T+[φ]`).
    pub y0: GridFunction,
    pub y_t: GridFunction,
    pub u_t: GridFunction,
}

struct Evaluation {
    psi: MoreauResult,
    u_t: GridFunction,
    v0: MoreauResult,
    objective: f64,
}

fn clipped_mass(r: &MoreauResult, mu: &GridMeasure) -> f64 {
    mu.masses().iter().zip(&r.clipped).filter(|(_, &c)| c).map(|(m, _)| m).sum()
}

fn evaluate(phi: &GridFunction, mu0: &GridMeasure, mu_t: &GridMeasure, cfg: &SolverConfig) -> Result<Evaluation> {
    let g = *phi.grid();
    g.check_same(mu0.grid())?;
    g.check_same(mu_t.grid())?;
    let psi = moreau_plus(phi, cfg.beta, &g)?;
    let u_t = log_heat_convolve(phi, cfg.horizon)?;
    let v0 = moreau_plus(&u_t, cfg.beta, &g)?;
    for (r, mu, name) in [(&psi, mu_t, "terminal"), (&v0, mu0, "initial")] {
        let cm = clipped_mass(r, mu);
        if cm > CLIPPED_MASS_TOL {
            return Err(SbbError::GridTooSmall(format!(
                "{name} marginal puts mass {cm:.3e} on boundary-clipped nodes"
            )));
        }
    }
    let objective = quadrature(&psi.envelope, mu_t)? - quadrature(&v0.envelope, mu0)?;
    Ok(Evaluation { psi, u_t, v0, objective })
}

pub fn dual_objective(phi: &GridFunction, mu0: &GridMeasure, mu_t: &GridMeasure, cfg: &SolverConfig) -> Result<f64> {
    Ok(evaluate(phi, mu0, mu_t, cfg)?.objective)
}

/// Values of the inverse map `id + f'/β` at the interior half nodes, made nondecreasing.
fn half_node_map(f: &GridFunction, beta: f64) -> Vec<f64> {
    let g = f.grid();
    let h = g.h();
    let v = f.values();
    let mut out: Vec<f64> = (0..g.n() - 1)
        .map(|j| g.x_min() + (j as f64 + 0.5) * h + (v[j + 1] - v[j]) / (h * beta))
        .collect();
    for j in 1..out.len() {
        if out[j] < out[j - 1] {
            out[j] = out[j - 1];
        }
    }
    out
}

/// Density on `f`'s grid of `(id + f'/β)^{-1} # mu`.
fn pull_through_inverse(f: &GridFunction, beta: f64, mu: &GridMeasure) -> Vec<f64> {
    let g = f.grid();
    let n = g.n();
    let cdf = HermiteCdf::new(mu);
    let total = cdf.total();
    let xs = half_node_map(f, beta);
    let w = g.weights();
    let mut f_at: Vec<f64> = Vec::with_capacity(n + 1);
    f_at.push(0.0);
    f_at.extend(xs.iter().map(|&x| cdf.eval(x)));
    f_at.push(total);
    (0..n).map(|j| ((f_at[j + 1] - f_at[j]) / w[j]).max(0.0)).collect()
}

fn gradient_from(phi: &GridFunction, ev: &Evaluation, mu0: &GridMeasure, mu_t: &GridMeasure, cfg: &SolverConfig) -> Result<DualGradient> {
    let g = *phi.grid();
    let beta = cfg.beta;
    let pushed_terminal = pull_through_inverse(phi, beta, mu_t);
    let m0 = pull_through_inverse(&ev.u_t, beta, mu0);
    let nu0: Vec<f64> = m0.iter().zip(ev.u_t.values()).map(|(m, u)| m * (-u).exp()).collect();
    let nu_t = convolve_density(&g, &nu0, cfg.horizon);
    let m_t: Vec<f64> = nu_t.iter().zip(phi.values()).map(|(n, p)| n * p.exp()).collect();
    let w = g.weights();
    let mass_m_t: f64 = m_t.iter().zip(&w).map(|(a, b)| a * b).sum();
    if (mass_m_t - 1.0).abs() > 1e-3 {
        return Err(SbbError::Resolution(format!("mass of m_T is {mass_m_t}, expected 1")));
    }
    let gradient = pushed_terminal.iter().zip(&m_t).map(|(a, b)| a - b).collect();
    Ok(DualGradient {
        gradient,
        pushed_terminal,
        m0,
        nu0,
        nu_t,
        m_t,
        mass_m_t,
        y0: ev.v0.argmin.clone(),
        y_t: ev.psi.argmin.clone(),
        u_t: ev.u_t.clone(),
    })
}

pub fn dual_gradient(phi: &GridFunction, mu0: &GridMeasure, mu_t: &GridMeasure, cfg: &SolverConfig) -> Result<DualGradient> {
    let ev = evaluate(phi, mu0, mu_t, cfg)?;
    gradient_from(phi, &ev, mu0, mu_t, cfg)
}

/// Dual state at a given potential, as the solver would report it after `iteration` steps.
pub fn state_at(
    phi: GridFunction,
    mu0: &GridMeasure,
    mu_t: &GridMeasure,
    cfg: &SolverConfig,
    iteration: usize,
    converged: bool,
) -> Result<DualState> {
    let ev = evaluate(&phi, mu0, mu_t, cfg)?;
    let grad = gradient_from(&phi, &ev, mu0, mu_t, cfg)?;
    let residual = interior_l1(phi.grid(), &grad.gradient);
    Ok(DualState { phi, objective: ev.objective, gradient: grad.gradient, residual, iteration, converged, history: Vec::new() })
}

/// L1 norm of a density on the grid, skipping the two end nodes where clipped mass collects.
pub fn interior_l1(grid: &Grid, density: &[f64]) -> f64 {
    let w = grid.weights();
    (1..grid.n() - 1).map(|j| w[j] * density[j].abs()).sum()
}

fn normalize(phi: GridFunction) -> Result<GridFunction> {
    let g = *phi.grid();
    let anchor = g.nearest(0.0);
    let c = phi.value(anchor);
    let mut v = phi.into_values();
    v.iter_mut().for_each(|x| *x -= c);
    v[anchor] = 0.0;
    GridFunction::new(g, v)
}

/// Thomas algorithm for the preconditioned increment.
fn precondition(phi: &GridFunction, grad: &DualGradient, mu_t: &GridMeasure, beta: f64) -> Vec<f64> {
    let g = phi.grid();
    let n = g.n();
    let h = g.h();
    let w = g.weights();
    let xs = half_node_map(phi, beta);
    let a: Vec<f64> = xs
        .iter()
        .enumerate()
        .map(|(j, &x)| {
            mu_t.density_at(x) + 0.5 * (grad.m_t[j] + grad.m_t[(j + 1).min(n - 1)])
        })
        .collect();
    let rhs: Vec<f64> = (0..n)
        .map(|j| {
            let r = grad.gradient[j];
            if grad.pushed_terminal[j] < DENSITY_FLOOR && grad.m_t[j] < DENSITY_FLOOR {
                0.0
            } else {
                r
            }
        })
        .collect();
    let mut lower = vec![0.0; n];
    let mut diag = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for j in 0..n {
        let s = 1.0 / (beta * h * w[j]);
        let left = if j > 0 { a[j - 1] * s } else { 0.0 };
        let right = if j + 1 < n { a[j] * s } else { 0.0 };
        diag[j] = grad.m_t[j] + PRECONDITIONER_SHIFT + left + right;
        lower[j] = -left;
        upper[j] = -right;
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for j in 1..n {
        let den = diag[j] - lower[j] * c[j - 1];
        c[j] = upper[j] / den;
        d[j] = (rhs[j] - lower[j] * d[j - 1]) / den;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = d[j] - c[j] * x[j + 1];
    }
    x
}

pub fn solve(mu0: &GridMeasure, mu_t: &GridMeasure, cfg: &SolverConfig) -> Result<DualState> {
    solve_with_observer(mu0, mu_t, cfg, |_| {})
}

/// Damped preconditioned ascent from `φ ≡ 0`; `observer` sees one record per iteration.
pub fn solve_with_observer(
    mu0: &GridMeasure,
    mu_t: &GridMeasure,
    cfg: &SolverConfig,
    mut observer: impl FnMut(&IterationRecord),
) -> Result<DualState> {
    cfg.validate()?;
    let g = *mu_t.grid();
    g.check_same(mu0.grid())?;
    let mut phi = GridFunction::zeros(g);
    let mut ev = evaluate(&phi, mu0, mu_t, cfg)?;
    let mut grad = gradient_from(&phi, &ev, mu0, mu_t, cfg)?;
    let mut omega = cfg.damping;
    let mut successes = 0;
    let mut history = Vec::new();
    let mut residuals = Vec::new();
    let mut converged = false;
    let mut iteration = 0;
    loop {
        let residual = interior_l1(&g, &grad.gradient);
        let rec = IterationRecord { iteration, objective: ev.objective, residual, damping: omega };
        observer(&rec);
        history.push(rec);
        residuals.push(residual);
        if residual <= cfg.tol_residual {
            converged = true;
            break;
        }
        if iteration >= cfg.max_iter {
            break;
        }
        let delta = precondition(&phi, &grad, mu_t, cfg.beta);
        let mut accepted = None;
        while omega >= MIN_DAMPING {
            let trial: Vec<f64> = phi.values().iter().zip(&delta).map(|(p, d)| p + omega * d).collect();
            let cand = normalize(beta_convex_project(&GridFunction::new(g, trial)?, cfg.beta)?)?;
            let cev = evaluate(&cand, mu0, mu_t, cfg)?;
            if cev.objective >= ev.objective - OBJECTIVE_SLACK {
                accepted = Some((cand, cev));
                break;
            }
            omega *= 0.5;
            successes = 0;
        }
        let Some((cand, cev)) = accepted else { break };
        iteration += 1;
        successes += 1;
        if successes >= RESTORE_AFTER {
            omega = cfg.damping;
            successes = 0;
        }
        grad = gradient_from(&cand, &cev, mu0, mu_t, cfg)?;
        phi = cand;
        ev = cev;
    }
    let residual = *residuals.last().unwrap();
    if !converged && residual > 10.0 * cfg.tol_residual {
        return Err(SbbError::NonConvergence { residuals });
    }
    Ok(DualState {
        phi,
        objective: ev.objective,
        gradient: grad.gradient,
        residual,
        iteration,
        converged,
        history,
    })
}
