//! Discretized problem instance: grid plus both marginals on it.

use crate::dual::SolverConfig;
use crate::error::Result;
use crate::grid::Grid;
use crate::measures::{truncation_window, GridMeasure, Marginal};

#[derive(Debug, Clone)]
pub struct Problem {
    pub grid: Grid,
    pub mu0: GridMeasure,
    pub mu_t: GridMeasure,
    pub cfg: SolverConfig,
}

impl Problem {
    pub fn new(mu0: &Marginal, mu_t: &Marginal, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = match cfg.bounds {
            Some(b) => b,
            None => truncation_window(&[mu0.moments()?, mu_t.moments()?], cfg.horizon),
        };
        let grid = Grid::new(lo, hi, cfg.nodes)?;
        Ok(Self { grid, mu0: mu0.on_grid(grid)?, mu_t: mu_t.on_grid(grid)?, cfg: cfg.clone() })
    }

    pub fn gaussian(m0: (f64, f64), mt: (f64, f64), cfg: &SolverConfig) -> Result<Self> {
        Self::new(
            &Marginal::Gaussian { mean: m0.0, var: m0.1 },
            &Marginal::Gaussian { mean: mt.0, var: mt.1 },
            cfg,
        )
    }
}
