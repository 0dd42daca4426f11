//! Uniform spatial and temporal meshes and real fields sampled on them.

use crate::error::{Result, SbbError};
use serde::{Deserialize, Serialize};

pub const MIN_NODES: usize = 16;

/// Uniform mesh `x_min + i*h`, `i = 0..n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    x_min: f64,
    x_max: f64,
    n: usize,
}

impl Grid {
    pub fn new(x_min: f64, x_max: f64, n: usize) -> Result<Self> {
        if n < MIN_NODES {
            return Err(SbbError::Structural(format!("grid needs at least {MIN_NODES} nodes, got {n}")));
        }
        if !(x_min.is_finite() && x_max.is_finite() && x_min < x_max) {
            return Err(SbbError::Structural(format!("bad grid bounds [{x_min}, {x_max}]")));
        }
        Ok(Self { x_min, x_max, n })
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        (self.x_max - self.x_min) / (self.n - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.h()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.node(i)).collect()
    }

    /// Trapezoid weights including the spacing, so `sum w_i f_i` approximates the integral.
    pub fn weights(&self) -> Vec<f64> {
        let h = self.h();
        let mut w = vec![h; self.n];
        w[0] = 0.5 * h;
        w[self.n - 1] = 0.5 * h;
        w
    }

    /// Edges of the dual cells: `x_min`, the midpoints, `x_max`. Cell `i` carries
    /// trapezoid weight `edges[i+1] - edges[i]`.
    pub fn cell_edges(&self) -> Vec<f64> {
        let h = self.h();
        let mut e = Vec::with_capacity(self.n + 1);
        e.push(self.x_min);
        for i in 1..self.n {
            e.push(self.x_min + (i as f64 - 0.5) * h);
        }
        e.push(self.x_max);
        e
    }

    /// Node nearest to `x`, clamped to the grid.
    pub fn nearest(&self, x: f64) -> usize {
        let r = ((x - self.x_min) / self.h()).round();
        r.clamp(0.0, (self.n - 1) as f64) as usize
    }

    /// Cell index `i` and fraction `t` with `x = node(i) + t*h`, `i` clamped to `0..n-1`.
    /// `t` lies outside `[0,1]` when `x` is outside the grid.
    pub fn locate(&self, x: f64) -> (usize, f64) {
        let s = (x - self.x_min) / self.h();
        let i = (s.floor().max(0.0) as usize).min(self.n - 2);
        (i, s - i as f64)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max
    }

    pub fn same_as(&self, other: &Grid) -> bool {
        self == other
    }

    pub fn check_same(&self, other: &Grid) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(SbbError::Structural(format!("grid mismatch: {self:?} vs {other:?}")))
        }
    }
}

/// Calendar-time mesh `t_k = k T / m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    m: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, m: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SbbError::Structural(format!("horizon must be positive, got {horizon}")));
        }
        if m < MIN_NODES {
            return Err(SbbError::Structural(format!("need at least {MIN_NODES} time steps, got {m}")));
        }
        Ok(Self { horizon, m })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.m
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.m as f64
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.m {
            self.horizon
        } else {
            k as f64 * self.horizon / self.m as f64
        }
    }

    /// Time to go `T - t_k`.
    pub fn to_go(&self, k: usize) -> f64 {
        (self.m - k) as f64 * self.horizon / self.m as f64
    }
}

/// Real field sampled at the nodes of a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(SbbError::Structural(format!(
                "expected {} values, got {}",
                grid.n(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(SbbError::Structural(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().into_iter().map(f).collect())
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, values: vec![0.0; grid.n()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Piecewise-linear interpolation, linear extrapolation from the boundary slopes.
    pub fn eval(&self, x: f64) -> f64 {
        let (i, t) = self.grid.locate(x);
        let a = self.values[i];
        let b = self.values[i + 1];
        a + t * (b - a)
    }

    /// Central differences, one-sided at the two ends.
    pub fn derivative(&self) -> GridFunction {
        GridFunction { grid: self.grid, values: central_difference(&self.values, self.grid.h()) }
    }

    /// Divided second differences `(f[i-1] - 2f[i] + f[i+1]) / h^2`, copied from the
    /// neighbour at the two ends.
    pub fn second_difference(&self) -> GridFunction {
        GridFunction { grid: self.grid, values: second_difference(&self.values, self.grid.h()) }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    pub fn map(&self, f: impl Fn(f64, f64) -> f64) -> Result<GridFunction> {
        let vals = self.values.iter().enumerate().map(|(i, &v)| f(self.grid.node(i), v)).collect();
        GridFunction::new(self.grid, vals)
    }
}

pub(crate) fn central_difference(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let mut d = vec![0.0; n];
    d[0] = (f[1] - f[0]) / h;
    d[n - 1] = (f[n - 1] - f[n - 2]) / h;
    for i in 1..n - 1 {
        d[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    }
    d
}

pub(crate) fn second_difference(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    let h2 = h * h;
    let mut d = vec![0.0; n];
    for i in 1..n - 1 {
        d[i] = (f[i - 1] - 2.0 * f[i] + f[i + 1]) / h2;
    }
    d[0] = d[1];
    d[n - 1] = d[n - 2];
    d
}
