//! Log-domain heat semigroup `u_s = log(N_s * e^φ)` and the backward potential field.
//!
//! Fields are indexed by time to go: `u[k] = u_{T - t_k}` and `u[m] = φ`.

use rayon::prelude::*;

use crate::error::{Result, SbbError};
use crate::grid::{Grid, GridFunction, TimeGrid};

/// Offsets beyond which the linear extension of φ is ignored, in units of `sqrt(s)`.
pub const EXTENSION_REACH: f64 = 10.0;
/// Terms this far below the row maximum are dropped; each weighs less than 5e-18 relative.
const NEGLIGIBLE_EXPONENT: f64 = -40.0;
const BLOCK: usize = 32;

/// Gaussian log-sum-exp convolution of `exp(logv)` sampled on `grid`, evaluated at the grid
/// nodes. With `extend`, `logv` is continued linearly from its boundary slopes out to
/// `EXTENSION_REACH * sqrt(s)` beyond each end. Entries equal to `-inf` contribute nothing.
pub(crate) fn lse_convolve(grid: &Grid, logv: &[f64], s: f64, extend: bool) -> Vec<f64> {
    let n = grid.n();
    let h = grid.h();
    let pad = if extend { ((EXTENSION_REACH * s.sqrt()) / h).ceil() as usize } else { 0 };
    let total = n + 2 * pad;
    let mut ys = Vec::with_capacity(total);
    let mut vals = Vec::with_capacity(total);
    let (sl, sr) = ((logv[1] - logv[0]) / h, (logv[n - 1] - logv[n - 2]) / h);
    for k in (1..=pad).rev() {
        let d = k as f64 * h;
        ys.push(grid.x_min() - d);
        vals.push(logv[0] - d * sl);
    }
    for i in 0..n {
        ys.push(grid.node(i));
        vals.push(logv[i]);
    }
    for k in 1..=pad {
        let d = k as f64 * h;
        ys.push(grid.x_max() + d);
        vals.push(logv[n - 1] + d * sr);
    }
    let mut lw = vec![h.ln(); total];
    lw[0] = (0.5 * h).ln();
    lw[total - 1] = (0.5 * h).ln();
    let terms: Vec<f64> = vals.iter().zip(&lw).map(|(v, w)| v + w).collect();
    let norm = 0.5 * (2.0 * std::f64::consts::PI * s).ln();
    let inv2s = 0.5 / s;
    // Per-block maxima bound every term of a block, so far blocks are skipped safely.
    let blocks: Vec<(usize, usize, f64)> = (0..total)
        .step_by(BLOCK)
        .map(|lo| {
            let hi = (lo + BLOCK).min(total);
            (lo, hi, terms[lo..hi].iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        })
        .collect();
    let bound = |x: f64, &(lo, hi, top): &(usize, usize, f64)| {
        let d = if x < ys[lo] {
            ys[lo] - x
        } else if x > ys[hi - 1] {
            x - ys[hi - 1]
        } else {
            0.0
        };
        top - d * d * inv2s
    };
    (0..n)
        .into_par_iter()
        .map(|i| {
            let x = grid.node(i);
            let home = (i + pad) / BLOCK;
            let order = (0..2 * blocks.len()).map(|r| {
                // home block first, then alternately outward
                let r = r as isize;
                let off = if r % 2 == 1 { (r + 1) / 2 } else { -(r / 2) };
                home as isize + off
            });
            let mut mx = f64::NEG_INFINITY;
            for b in order.filter(|&b| b >= 0 && (b as usize) < blocks.len()) {
                let blk = &blocks[b as usize];
                if bound(x, blk) <= mx {
                    continue;
                }
                for j in blk.0..blk.1 {
                    let d = x - ys[j];
                    let t = terms[j] - d * d * inv2s;
                    if t > mx {
                        mx = t;
                    }
                }
            }
            if mx == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            let mut acc = 0.0;
            for blk in &blocks {
                if bound(x, blk) - mx <= NEGLIGIBLE_EXPONENT {
                    continue;
                }
                for j in blk.0..blk.1 {
                    let d = x - ys[j];
                    let t = terms[j] - d * d * inv2s - mx;
                    if t > NEGLIGIBLE_EXPONENT {
                        acc += t.exp();
                    }
                }
            }
            mx + acc.ln() - norm
        })
        .collect()
}

/// `u_s(x) = log Σ_j w_j exp(φ(y_j) − (x−y_j)²/(2s)) − ½ log(2πs)`.
pub fn log_heat_convolve(phi: &GridFunction, s: f64) -> Result<GridFunction> {
    if !(s.is_finite() && s > 0.0) {
        return Err(SbbError::InvalidConfig(format!("heat time must be positive, got {s}")));
    }
    GridFunction::new(*phi.grid(), lse_convolve(phi.grid(), phi.values(), s, true))
}

/// Density convolution `N_s * ρ` restricted to the grid (no extension).
pub(crate) fn convolve_density(grid: &Grid, density: &[f64], s: f64) -> Vec<f64> {
    let logv: Vec<f64> = density.iter().map(|d| if *d > 0.0 { d.ln() } else { f64::NEG_INFINITY }).collect();
    lse_convolve(grid, &logv, s, false).into_iter().map(f64::exp).collect()
}

/// `N_{t_k} * ρ` at every time node, `k = 0..=m`, stepped through the semigroup.
pub(crate) fn density_flow(grid: &Grid, density: &[f64], time_grid: &TimeGrid) -> Vec<Vec<f64>> {
    let mut out = vec![density.to_vec()];
    for k in 1..=time_grid.steps() {
        let next = convolve_density(grid, &out[k - 1], time_grid.t(k) - time_grid.t(k - 1));
        out.push(next);
    }
    out
}

/// Semiconvexity modulus `κ(t) = β / (1 + β(T − t))`, defined for `0 ≤ t < T`.
pub fn kappa(t: f64, beta: f64, horizon: f64) -> Result<f64> {
    if !(t >= 0.0 && t < horizon) {
        return Err(SbbError::InvalidConfig(format!("kappa needs 0 <= t < T, got t = {t}, T = {horizon}")));
    }
    Ok(beta / (1.0 + beta * (horizon - t)))
}

#[derive(Debug, Clone)]
pub struct HeatField {
    pub time_grid: TimeGrid,
    pub beta: f64,
    pub u: Vec<GridFunction>,
    pub score: Vec<GridFunction>,
    /// Per time node, `min_i (D²u[k] + κ(t_k))` over interior nodes.
    pub semiconvexity_margin: Vec<f64>,
    pub warnings: Vec<String>,
}

impl HeatField {
    pub fn certificate_holds(&self) -> bool {
        self.warnings.is_empty()
    }
}

/// Semiconvexity modulus at time node `k`, with the `t → T` limit `β` at `k = m`.
pub fn kappa_at(tg: &TimeGrid, k: usize, beta: f64) -> f64 {
    if k == tg.steps() {
        beta
    } else {
        beta / (1.0 + beta * tg.to_go(k))
    }
}

pub fn build_heat_field(phi: &GridFunction, time_grid: &TimeGrid, beta: f64) -> Result<HeatField> {
    let m = time_grid.steps();
    let mut u: Vec<GridFunction> = (0..m)
        .into_par_iter()
        .map(|k| log_heat_convolve(phi, time_grid.to_go(k)))
        .collect::<Result<_>>()?;
    u.push(phi.clone());
    let score = u.iter().map(GridFunction::derivative).collect();
    let mut semiconvexity_margin = Vec::with_capacity(m + 1);
    let mut warnings = Vec::new();
    for (k, uk) in u.iter().enumerate() {
        let kap = kappa_at(time_grid, k, beta);
        let d2 = uk.second_difference();
        let n = d2.values().len();
        let margin = d2.values()[1..n - 1].iter().map(|v| v + kap).fold(f64::INFINITY, f64::min);
        let tol = 1e-6 * (1.0 + uk.max_abs());
        if margin < -tol {
            warnings.push(format!("semiconvexity violated at t = {}: margin {margin:.3e}", time_grid.t(k)));
        }
        semiconvexity_margin.push(margin);
    }
    Ok(HeatField { time_grid: *time_grid, beta, u, score, semiconvexity_margin, warnings })
}
