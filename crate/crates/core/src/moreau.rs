//! Quadratic inf-convolution `T+[φ](x) = min_y φ(y) + β/2 (x−y)²`, its order-reversed
//! dual `T−[ψ] = −T+[−ψ]`, and β-convexity tests and projection.
//!
//! The discrete minimum over the nodes is found with the lower envelope of parabolas and
//! then refined by the vertex of a parabola through three nodes near the discrete argmin
//! `j`. Stencils centred inside an affine run of the input, and the crossing of two runs
//! meeting at an off-node kink, give the exact minimum for piecewise-linear input; the
//! lowest admissible one wins. Otherwise a stencil
//! whose second differences are nearly constant (smooth input, no kink nearby) is used,
//! the one with the most central vertex. Without either the nodal minimum is kept.

use crate::error::{Result, SbbError};
use crate::grid::{Grid, GridFunction};

/// Relative spread of the five second differences around a smooth stencil's centre.
const STENCIL_SMOOTHNESS: f64 = 0.25;
/// Relative fourth difference tolerated inside a smooth stencil.
const STENCIL_FOURTH: f64 = 0.01;
/// Stencil centres searched around the discrete argmin, and the largest vertex offset
/// inside an affine run, in units of `h`.
const AFFINE_REACH: usize = 4;
/// Largest vertex offset from the stencil centre, in units of `h`.
const STENCIL_REACH: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct MoreauResult {
    pub envelope: GridFunction,
    pub argmin: GridFunction,
    /// Evaluation nodes whose discrete argmin is the first or last node of the input grid.
    pub clipped: Vec<bool>,
}

impl MoreauResult {
    pub fn clipped_count(&self) -> usize {
        self.clipped.iter().filter(|&&c| c).count()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(SbbError::InvalidConfig(format!("beta must be positive, got {beta}")))
    }
}

/// Lower hull of `φ + β/2 y²` and, for each sorted evaluation point, the hull position of
/// its minimizing input node; ties go to the smallest node.
fn discrete_argmin(y: &[f64], phi: &[f64], beta: f64, xs: &[f64]) -> (Vec<usize>, Vec<usize>) {
    let n = y.len();
    let c: Vec<f64> = (0..n).map(|j| phi[j] + 0.5 * beta * y[j] * y[j]).collect();
    let meet = |j: usize, k: usize| (c[k] - c[j]) / (beta * (y[k] - y[j]));
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    let mut starts: Vec<f64> = Vec::with_capacity(n);
    for q in 0..n {
        loop {
            match hull.last() {
                None => {
                    hull.push(q);
                    starts.push(f64::NEG_INFINITY);
                    break;
                }
                Some(&top) => {
                    let s = meet(top, q);
                    if s <= *starts.last().unwrap() {
                        hull.pop();
                        starts.pop();
                    } else {
                        hull.push(q);
                        starts.push(s);
                        break;
                    }
                }
            }
        }
    }
    let mut k = 0;
    let pos = xs
        .iter()
        .map(|&x| {
            while k + 1 < hull.len() && starts[k + 1] < x {
                k += 1;
            }
            k
        })
        .collect();
    (hull, pos)
}

/// Whether the vertex of the parabola through `c-1, c, c+1` may stand in for the minimum.
/// `c` sits inside an affine run of the input. A vertex outside the run is kept only if
/// no node it passes lies above the parabola: an upward bend there would put the true
/// minimum above the vertex.
fn affine_vertex_admissible(f: &impl Fn(usize) -> f64, d2: &[f64], c: usize, off: f64, curv: f64, tol: f64) -> bool {
    let n = d2.len() as isize;
    let reach = AFFINE_REACH as isize;
    if off.abs() > AFFINE_REACH as f64 {
        return false;
    }
    let (fm, fc, fp) = (f(c - 1), f(c), f(c + 1));
    let parabola = |t: isize| fc + 0.5 * (fp - fm) * t as f64 + 0.5 * curv * (t * t) as f64;
    let ci = c as isize;
    let affine_at = |k: isize| d2[(ci + k) as usize].abs() <= tol;
    let (mut lo, mut hi) = (-1isize, 1isize);
    while hi < reach && ci + hi + 1 < n && affine_at(hi) {
        hi += 1;
    }
    while lo > -reach && ci + lo >= 1 && affine_at(lo) {
        lo -= 1;
    }
    let below = |k: isize| (0..n).contains(&(ci + k)) && f((ci + k) as usize) <= parabola(k) + tol;
    if off > hi as f64 {
        return (hi + 1..=off.floor() as isize + 1).all(below);
    }
    if off < lo as f64 {
        return (off.ceil() as isize - 1..lo).all(below);
    }
    true
}

/// Convex kink between `y[k]` and `y[k+1]` joining two affine runs: nodes `k-2..=k` on one
/// line and `k+1..=k+3` on another. Returns the two slopes and the crossing offset from `y[k]`.
fn kink_at(p: &[f64], d2: &[f64], h: f64, bh2: f64, k: usize) -> Option<(f64, f64, f64)> {
    if k < 2 || k + 3 >= p.len() {
        return None;
    }
    let scale = p[k - 2..=k + 3].iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-9 * bh2 + 1e-14 * scale;
    if d2[k - 1].abs() > tol || d2[k + 2].abs() > tol || d2[k].abs() <= tol || d2[k + 1].abs() <= tol {
        return None;
    }
    let (sl, sr) = ((p[k] - p[k - 1]) / h, (p[k + 2] - p[k + 1]) / h);
    if !(sr - sl > tol / h) {
        return None;
    }
    let t = (p[k + 1] - p[k] - sr * h) / (sl - sr);
    (t > 0.0 && t < h).then_some((sl, sr, t))
}

/// Minimum of `max(left line, right line) + β/2 (x−y)²` over the span of the runs at a kink.
fn kink_vertex(p: &[f64], y: &[f64], beta: f64, x: f64, k: usize, (sl, sr, t): (f64, f64, f64)) -> Option<(f64, f64)> {
    let kink = y[k] + t;
    let (a, line) = if x - sl / beta <= kink {
        (x - sl / beta, p[k] + sl * (x - sl / beta - y[k]))
    } else if x - sr / beta >= kink {
        (x - sr / beta, p[k + 1] + sr * (x - sr / beta - y[k + 1]))
    } else {
        (kink, p[k] + sl * t)
    };
    if a < y[k - 2] || a > y[k + 3] {
        return None;
    }
    Some((line + 0.5 * beta * (x - a) * (x - a), a))
}

/// Input-dependent data shared by all evaluation points.
struct Stencils<'a> {
    p: &'a [f64],
    y: &'a [f64],
    d2: Vec<f64>,
    kinks: Vec<Option<(f64, f64, f64)>>,
    beta: f64,
    h: f64,
}

impl<'a> Stencils<'a> {
    fn new(p: &'a [f64], y: &'a [f64], beta: f64) -> Self {
        let n = p.len();
        let h = y[1] - y[0];
        let mut d2 = vec![0.0; n];
        for c in 1..n - 1 {
            d2[c] = p[c - 1] - 2.0 * p[c] + p[c + 1];
        }
        let kinks = (0..n).map(|k| kink_at(p, &d2, h, beta * h * h, k)).collect();
        Stencils { p, y, d2, kinks, beta, h }
    }

    /// Upper bound on how far a refined value can fall below the nodal values around it.
    fn max_gain(&self) -> f64 {
        let reach = AFFINE_REACH as f64 * self.h;
        let jump = self.kinks.iter().flatten().map(|&(sl, sr, _)| sr - sl).fold(0.0, f64::max);
        0.5 * self.beta * reach * reach + jump * self.h
    }

    /// Best refined minimum of `φ(y) + β/2 (x−y)²` over stencil centres `cs`, if one lies at
    /// or below `fmin`. Affine runs and kinks take precedence over smooth stencils.
    fn refine(&self, x: f64, cs: impl Iterator<Item = usize>, fmin: f64) -> Option<(f64, f64)> {
        let (p, y, d2, beta, h) = (self.p, self.y, &self.d2, self.beta, self.h);
        let n = p.len();
        let bh2 = beta * h * h;
        let f = |c: usize| p[c] + 0.5 * beta * (x - y[c]) * (x - y[c]);
        // (value, argmin) from an affine run or kink, and (|offset|, value, argmin) from a smooth stencil
        let mut affine: Option<(f64, f64)> = None;
        let mut smooth: Option<(f64, f64, f64)> = None;
        for c in cs {
            if let Some((v, a)) = self.kinks[c].and_then(|kink| kink_vertex(p, y, beta, x, c, kink)) {
                if v <= fmin && affine.map_or(true, |b| v < b.0) {
                    affine = Some((v, a));
                }
            }
            if c < 2 || c > n - 3 {
                continue;
            }
            let curv = d2[c] + bh2;
            let (fm, fc, fp) = (f(c - 1), f(c), f(c + 1));
            if !(curv > 1e-14 * (1.0 + fc.abs())) {
                continue;
            }
            let off = (fm - fp) / (2.0 * curv);
            let v = fc - (fp - fm) * (fp - fm) / (8.0 * curv);
            if v > fmin {
                continue;
            }
            let tol = 1e-9 * bh2 + 1e-14 * (p[c - 1].abs().max(p[c].abs()).max(p[c + 1].abs()) + 1.0);
            if d2[c].abs() <= tol {
                if affine_vertex_admissible(&f, d2, c, off, curv, tol) && affine.map_or(true, |b| v < b.0) {
                    affine = Some((v, y[c] + off * h));
                }
                continue;
            }
            if c < 3 || c > n - 4 {
                continue;
            }
            let spread = (c - 2..=c + 2).map(|k| (d2[k] - d2[c]).abs()).fold(0.0, f64::max);
            let d4 = (d2[c - 1] - 2.0 * d2[c] + d2[c + 1]).abs();
            // a stencil next to an affine stretch sees a kink, not curvature
            let mixed = (c - 2..=(c + 2).min(n - 2)).any(|k| k >= 1 && d2[k].abs() <= tol);
            if !mixed
                && spread <= STENCIL_SMOOTHNESS * curv
                && d4 <= STENCIL_FOURTH * curv
                && off.abs() <= STENCIL_REACH
                && smooth.map_or(true, |b| off.abs() < b.0)
            {
                smooth = Some((off.abs(), v, y[c] + off * h));
            }
        }
        affine.or(smooth.map(|(_, v, a)| (v, a)))
    }
}

/// `T+[φ]` evaluated on `eval_grid`, minimizing over the nodes of φ's grid.
///
/// Refinement can lower a hull vertex other than the nodal argmin below the nodal minimum
/// (for example across a non-convex stretch), so every hull vertex whose nodal value is
/// within the largest possible gain is refined. Along the hull the nodal values are
/// unimodal in the vertex index, so the scan stops at the first vertex beyond that margin.
pub fn moreau_plus(phi: &GridFunction, beta: f64, eval_grid: &Grid) -> Result<MoreauResult> {
    check_beta(beta)?;
    let g = phi.grid();
    let n = g.n();
    let y = g.nodes();
    let p = phi.values();
    let xs = eval_grid.nodes();
    let (hull, pos) = discrete_argmin(&y, p, beta, &xs);
    let st = Stencils::new(p, &y, beta);
    let margin = st.max_gain();
    let reach = AFFINE_REACH;
    let mut env = Vec::with_capacity(xs.len());
    let mut arg = Vec::with_capacity(xs.len());
    let mut clipped = Vec::with_capacity(xs.len());
    for (&x, &k) in xs.iter().zip(&pos) {
        let f = |c: usize| p[c] + 0.5 * beta * (x - y[c]) * (x - y[c]);
        let j = hull[k];
        let fj = f(j);
        let (mut lo, mut hi) = (k, k);
        while lo > 0 && f(hull[lo - 1]) <= fj + margin {
            lo -= 1;
        }
        while hi + 1 < hull.len() && f(hull[hi + 1]) <= fj + margin {
            hi += 1;
        }
        // stencil centres within `reach` of a scanned vertex, each visited once
        let mut next = 0;
        let centres = hull[lo..=hi].iter().flat_map(|&q| {
            let from = q.saturating_sub(reach).max(next);
            let to = (q + reach).min(n - 1);
            next = next.max(to + 1);
            from..=to
        });
        let (v, a) = st.refine(x, centres, fj).unwrap_or((fj, y[j]));
        env.push(v);
        arg.push(a);
        clipped.push(j == 0 || j == n - 1);
    }
    Ok(MoreauResult {
        envelope: GridFunction::new(*eval_grid, env)?,
        argmin: GridFunction::new(*eval_grid, arg)?,
        clipped,
    })
}

/// `T−[ψ] = −T+[−ψ]`; `argmin` holds the maximizing point.
pub fn moreau_minus(psi: &GridFunction, beta: f64, eval_grid: &Grid) -> Result<MoreauResult> {
    let neg = psi.map(|_, v| -v)?;
    let r = moreau_plus(&neg, beta, eval_grid)?;
    Ok(MoreauResult { envelope: r.envelope.map(|_, v| -v)?, ..r })
}

/// Largest β-convex minorant on the nodes: lower convex hull of `φ + β/2 y²` minus `β/2 y²`.
pub fn beta_convex_project(phi: &GridFunction, beta: f64) -> Result<GridFunction> {
    check_beta(beta)?;
    let g = phi.grid();
    let n = g.n();
    let y = g.nodes();
    let p = phi.values();
    let gv: Vec<f64> = (0..n).map(|i| p[i] + 0.5 * beta * y[i] * y[i]).collect();
    let mut hull: Vec<usize> = Vec::with_capacity(n);
    for i in 0..n {
        while hull.len() >= 2 {
            let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // indices stand in for abscissae on a uniform grid
            let cross = (a - o) as f64 * (gv[i] - gv[o]) - (gv[a] - gv[o]) * (i - o) as f64;
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    let mut out = p.to_vec();
    for w in hull.windows(2) {
        let (i0, i1) = (w[0], w[1]);
        for k in i0 + 1..i1 {
            let t = (k - i0) as f64 / (i1 - i0) as f64;
            let hv = gv[i0] + t * (gv[i1] - gv[i0]) - 0.5 * beta * y[k] * y[k];
            out[k] = hv.min(p[k]);
        }
    }
    GridFunction::new(*g, out)
}

/// Whether `φ'' + β ≥ −tol` holds for the divided second differences at interior nodes.
pub fn is_beta_convex(phi: &GridFunction, beta: f64, tol: f64) -> bool {
    let h2 = phi.grid().h().powi(2);
    phi.values().windows(3).all(|w| (w[0] - 2.0 * w[1] + w[2]) / h2 + beta >= -tol)
}
