//! Independent validators: a log-domain Sinkhorn solver for the static Schrödinger bridge
//! (the β → ∞ limit) and a closed-form maximization of the dual over quadratic potentials.

use serde::{Deserialize, Serialize};

use crate::dual::SolverConfig;
use crate::error::{Result, SbbError};
use crate::grid::GridFunction;
use crate::measures::GridMeasure;

pub const SINKHORN_MAX_ITER: usize = 20_000;
/// Log-weight gap below which a zero-mass node's potential sits, so its couplings underflow.
const UNDERFLOW_GAP: f64 = 745.0;

#[derive(Debug, Clone)]
pub struct SinkhornResult {
    /// `KL(π* | μ_0(dx) N_T(y − x) dy)`.
    pub value: f64,
    /// Scalings `(f, g)` with `π_ij = R_ij exp(f_i + g_j)`.
    pub potentials: (GridFunction, GridFunction),
    pub iterations: usize,
    /// L1 error of the first marginal after the last column update.
    pub residual: f64,
    pub residual_history: Vec<f64>,
}

fn log_sum_exp(terms: impl Iterator<Item = f64> + Clone) -> f64 {
    let mx = terms.clone().fold(f64::NEG_INFINITY, f64::max);
    if mx == f64::NEG_INFINITY {
        return mx;
    }
    mx + terms.map(|t| (t - mx).exp()).sum::<f64>().ln()
}

pub fn sinkhorn_sb(mu0: &GridMeasure, mu_t: &GridMeasure, horizon: f64, tol: f64) -> Result<SinkhornResult> {
    sinkhorn_sb_with(mu0, mu_t, horizon, tol, SINKHORN_MAX_ITER)
}

/// Static Schrödinger bridge between two measures on the same grid. The reference coupling
/// is `R_ij = p_i r_ij`, where `p` are the source cell masses and `r_i·` is the heat kernel
/// row at `x_i` times the target weights, normalized to a probability.
pub fn sinkhorn_sb_with(
    mu0: &GridMeasure,
    mu_t: &GridMeasure,
    horizon: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SinkhornResult> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(SbbError::InvalidConfig(format!("horizon must be positive, got {horizon}")));
    }
    if !(tol > 0.0) {
        return Err(SbbError::InvalidConfig(format!("tolerance must be positive, got {tol}")));
    }
    let g = *mu0.grid();
    g.check_same(mu_t.grid())?;
    let n = g.n();
    let x = g.nodes();
    let w = g.weights();
    let p = mu0.masses();
    let q = mu_t.masses();
    let lp: Vec<f64> = p.iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let lq: Vec<f64> = q.iter().map(|v| if *v > 0.0 { v.ln() } else { f64::NEG_INFINITY }).collect();
    let inv2t = 0.5 / horizon;
    let mut log_r = vec![0.0; n * n];
    for i in 0..n {
        let row = &mut log_r[i * n..(i + 1) * n];
        for j in 0..n {
            let d = x[i] - x[j];
            row[j] = w[j].ln() - d * d * inv2t;
        }
        let norm = log_sum_exp(row.iter().cloned());
        row.iter_mut().for_each(|v| *v -= norm);
    }
    let log_r = &log_r;
    let mut f = vec![0.0; n];
    let mut gp = vec![0.0; n];
    let mut history = Vec::new();
    let mut iterations = 0;
    loop {
        // rows: Σ_j r_ij e^{f_i + g_j} = 1
        for i in 0..n {
            f[i] = -log_sum_exp((0..n).map(|j| log_r[i * n + j] + gp[j]));
        }
        // columns: Σ_i p_i r_ij e^{f_i + g_j} = q_j
        for j in 0..n {
            let s = log_sum_exp((0..n).map(|i| lp[i] + log_r[i * n + j] + f[i]));
            gp[j] = lq[j] - s;
        }
        iterations += 1;
        let residual: f64 = (0..n)
            .map(|i| {
                let row = (0..n).map(|j| log_r[i * n + j] + gp[j]).filter(|t| t.is_finite());
                (p[i] * (f[i] + log_sum_exp(row)).exp() - p[i]).abs()
            })
            .sum();
        history.push(residual);
        if residual <= tol {
            break;
        }
        if iterations >= max_iter {
            return Err(SbbError::NonConvergence { residuals: history });
        }
    }
    let value: f64 = (0..n)
        .map(|i| if p[i] > 0.0 { p[i] * f[i] } else { 0.0 })
        .sum::<f64>()
        + (0..n).map(|j| if q[j] > 0.0 { q[j] * gp[j] } else { 0.0 }).sum::<f64>();
    let finite = |v: &[f64]| {
        let lo = v.iter().cloned().filter(|t| t.is_finite()).fold(f64::INFINITY, f64::min);
        v.iter().map(|t| if t.is_finite() { *t } else { lo - UNDERFLOW_GAP }).collect::<Vec<_>>()
    };
    Ok(SinkhornResult {
        value,
        potentials: (GridFunction::new(g, finite(&f))?, GridFunction::new(g, finite(&gp))?),
        iterations,
        residual: *history.last().unwrap(),
        residual_history: history,
    })
}

/// Coefficients of `(a/2)y² + b y + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    /// `log N_s * exp(self)`, finite for `a s < 1`.
    pub fn heat(self, s: f64) -> Option<Quadratic> {
        let d = 1.0 - self.a * s;
        (d > 0.0).then(|| Quadratic {
            a: self.a / d,
            b: self.b / d,
            c: self.c + self.b * self.b * s / (2.0 * d) - 0.5 * d.ln(),
        })
    }

    /// `T+[self]`, finite for `a > −β`.
    pub fn moreau_plus(self, beta: f64) -> Option<Quadratic> {
        let d = self.a + beta;
        (d > 0.0).then(|| Quadratic {
            a: self.a * beta / d,
            b: beta * self.b / d,
            c: self.c - self.b * self.b / (2.0 * d),
        })
    }

    /// Expectation under `N(mean, var)`.
    pub fn gaussian_mean(self, mean: f64, var: f64) -> f64 {
        0.5 * self.a * (var + mean * mean) + self.b * mean + self.c
    }
}

/// Dual objective at `φ(y) = p y + (q/2) y²` for Gaussian marginals given as `(mean, var)`.
/// `None` outside the domain where every transform is finite.
pub fn quadratic_dual(p: f64, q: f64, mu0: (f64, f64), mu_t: (f64, f64), beta: f64, horizon: f64) -> Option<f64> {
    let phi = Quadratic { a: q, b: p, c: 0.0 };
    let terminal = phi.moreau_plus(beta)?.gaussian_mean(mu_t.0, mu_t.1);
    let initial = phi.heat(horizon)?.moreau_plus(beta)?.gaussian_mean(mu0.0, mu0.1);
    Some(terminal - initial)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadraticOptimum {
    pub value: f64,
    pub p: f64,
    pub q: f64,
}

const SCAN: usize = 41;
const REFINEMENTS: usize = 80;
const MAX_WIDENINGS: usize = 12;

/// Maximizes the dual over quadratic potentials for Gaussian marginals `(mean, var)`,
/// doubling the `p` range while the optimum sits on its edge.
pub fn gaussian_quadratic_oracle(mu0: (f64, f64), mu_t: (f64, f64), cfg: &SolverConfig) -> Result<QuadraticOptimum> {
    cfg.validate()?;
    let mut half = 1.0 + cfg.beta * (mu_t.0 - mu0.0).abs();
    for _ in 0..MAX_WIDENINGS {
        match quadratic_oracle_in_box(mu0, mu_t, cfg, half) {
            Err(SbbError::EnlargeBox(_)) => half *= 2.0,
            other => return other,
        }
    }
    Err(SbbError::EnlargeBox(format!("p-range ±{half} still binds")))
}

/// Scan over `p ∈ [−half, half]` and the whole admissible `q` interval
/// `(−β, min(1/T, β/(βT − 1)))`, followed by repeated local refinement.
pub fn quadratic_oracle_in_box(
    mu0: (f64, f64),
    mu_t: (f64, f64),
    cfg: &SolverConfig,
    half: f64,
) -> Result<QuadraticOptimum> {
    cfg.validate()?;
    let (beta, horizon) = (cfg.beta, cfg.horizon);
    let q_hi = (1.0 / horizon).min(beta / (beta * horizon - 1.0));
    let j = |p: f64, q: f64| quadratic_dual(p, q, mu0, mu_t, beta, horizon).unwrap_or(f64::NEG_INFINITY);
    // open interval in q: cell midpoints
    let qs = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / SCAN as f64;
    let ps = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * i as f64 / (SCAN - 1) as f64;
    let scan = |(plo, phi): (f64, f64), (qlo, qhi): (f64, f64)| {
        let mut best = (f64::NEG_INFINITY, 0, 0);
        for a in 0..SCAN {
            for b in 0..SCAN {
                let v = j(ps(plo, phi, a), qs(qlo, qhi, b));
                if v > best.0 {
                    best = (v, a, b);
                }
            }
        }
        best
    };
    let (v, a, b) = scan((-half, half), (-beta, q_hi));
    if !v.is_finite() {
        return Err(SbbError::Degenerate("no admissible quadratic potential".into()));
    }
    if a == 0 || a == SCAN - 1 {
        return Err(SbbError::EnlargeBox(format!("optimum on the p edge of ±{half}")));
    }
    let mut best = QuadraticOptimum { value: v, p: ps(-half, half, a), q: qs(-beta, q_hi, b) };
    let mut dp = 2.0 * half / (SCAN - 1) as f64;
    let mut dq = (q_hi + beta) / SCAN as f64;
    for _ in 0..REFINEMENTS {
        let pr = (best.p - 2.0 * dp, best.p + 2.0 * dp);
        let qr = ((best.q - 2.0 * dq).max(-beta), (best.q + 2.0 * dq).min(q_hi));
        let (v, a, b) = scan(pr, qr);
        if v >= best.value {
            best = QuadraticOptimum { value: v, p: ps(pr.0, pr.1, a), q: qs(qr.0, qr.1, b) };
        }
        dp = (pr.1 - pr.0) / (SCAN - 1) as f64;
        dq = (qr.1 - qr.0) / SCAN as f64;
        if dp < 1e-13 && dq < 1e-13 {
            break;
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    #[test]
    fn quadratic_transforms_match_reference_values() {
        let h = Quadratic { a: -1.0, b: 0.0, c: 0.0 }.heat(0.5).unwrap();
        assert!((h.c + 0.5 * 1.5_f64.ln()).abs() < 1e-15);
        let m = Quadratic { a: 2.0, b: 0.0, c: 0.0 }.moreau_plus(2.0).unwrap();
        assert!((m.a - 1.0).abs() < 1e-15);
        let m = Quadratic { a: 0.0, b: 3.0, c: 0.0 }.moreau_plus(1.0).unwrap();
        assert_eq!((m.a, m.b, m.c), (0.0, 3.0, -4.5));
        assert!(Quadratic { a: 2.0, b: 0.0, c: 0.0 }.heat(0.5).is_none());
        assert!(Quadratic { a: -2.0, b: 0.0, c: 0.0 }.moreau_plus(2.0).is_none());
    }

    #[test]
    fn oracle_on_heat_flow_pair_is_zero() {
        let cfg = SolverConfig::new(2.0, 1.0);
        let o = gaussian_quadratic_oracle((0.0, 0.5), (0.0, 1.5), &cfg).unwrap();
        assert!(o.value.abs() < 1e-8, "{o:?}");
        assert!(o.p.abs() < 1e-4 && o.q.abs() < 1e-4, "{o:?}");
    }

    #[test]
    fn narrow_box_is_reported() {
        let cfg = SolverConfig::new(2.0, 1.0);
        let r = quadratic_oracle_in_box((0.0, 0.25), (3.0, 1.0), &cfg, 0.1);
        assert!(matches!(r, Err(SbbError::EnlargeBox(_))));
    }

    #[test]
    fn sinkhorn_heat_flow_pair_is_free() {
        let g = Grid::new(-10.0, 10.0, 201).unwrap();
        let mu0 = GridMeasure::gaussian(g, 0.0, 0.5).unwrap();
        let mut_ = GridMeasure::gaussian(g, 0.0, 1.5).unwrap();
        let r = sinkhorn_sb(&mu0, &mut_, 1.0, 1e-10).unwrap();
        assert!(r.value.abs() < 1e-6, "{}", r.value);
    }

    #[test]
    fn sinkhorn_reports_nonconvergence() {
        let g = Grid::new(-10.0, 10.0, 101).unwrap();
        let mu0 = GridMeasure::gaussian(g, -2.0, 0.3).unwrap();
        let mut_ = GridMeasure::gaussian(g, 2.0, 0.3).unwrap();
        let r = sinkhorn_sb_with(&mu0, &mut_, 0.5, 1e-14, 2);
        assert!(matches!(r, Err(SbbError::NonConvergence { .. })));
    }
}
