//! Solution directories and report files.
//!
//! Field CSVs have columns `t,x,value`, measure CSVs `x,density`. Floats are written in the
//! shortest exponent form that parses back to the same bits, so a reloaded solution is
//! identical and repeated runs produce byte-identical files. Every file is written to a
//! temporary sibling and renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bridge::{assemble, SbbSolution};
use crate::dual::{state_at, IterationRecord, SolverConfig};
use crate::error::{Result, SbbError};
use crate::grid::{Grid, GridFunction, TimeGrid};
use crate::measures::GridMeasure;
use crate::problem::Problem;
use crate::sim::TrajectoryRow;

pub const SUMMARY_FILE: &str = "summary.json";
pub const PHI_FILE: &str = "phi_hat.csv";
pub const MU0_FILE: &str = "mu0.csv";
pub const MU_T_FILE: &str = "mu_T.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub dual_value: f64,
    pub solver_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub degraded: Vec<String>,
    pub residuals: BTreeMap<String, f64>,
    pub grid: Grid,
    pub time_grid: TimeGrid,
    pub solver: SolverConfig,
    pub history: Vec<IterationRecord>,
    /// Resolved configuration of the run that produced the solution, echoed verbatim.
    pub config: serde_json::Value,
}

impl Summary {
    pub fn new(sol: &SbbSolution, history: &[IterationRecord], config: serde_json::Value) -> Self {
        Self {
            dual_value: sol.dual_value,
            solver_residual: sol.solver_residual,
            iterations: sol.iterations,
            converged: sol.converged,
            degraded: sol.degraded.clone(),
            residuals: sol.residuals.clone(),
            grid: sol.grid,
            time_grid: sol.time_grid,
            solver: sol.config.clone(),
            history: history.to_vec(),
            config,
        }
    }
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:e}")
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| SbbError::Io(e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

fn csv_bytes(header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.into_inner().map_err(|e| SbbError::Io(e.into_error()))
}

/// One CSV with the rows `(t_k, x_i, fields[k][i])`.
pub fn write_field(path: &Path, times: &[f64], fields: &[GridFunction]) -> Result<()> {
    let rows = times.iter().zip(fields).flat_map(|(&t, f)| {
        let g = *f.grid();
        f.values().iter().enumerate().map(move |(i, v)| vec![fmt_f64(t), fmt_f64(g.node(i)), fmt_f64(*v)]).collect::<Vec<_>>()
    });
    write_atomic(path, &csv_bytes(&["t", "x", "value"], rows)?)
}

pub fn write_density(path: &Path, grid: &Grid, density: &[f64]) -> Result<()> {
    let rows = density.iter().enumerate().map(|(i, d)| vec![fmt_f64(grid.node(i)), fmt_f64(*d)]);
    write_atomic(path, &csv_bytes(&["x", "density"], rows)?)
}

pub fn write_trajectories(path: &Path, rows: &[TrajectoryRow]) -> Result<()> {
    let rows = rows.iter().map(|r| {
        vec![r.path_id.to_string(), fmt_f64(r.t), fmt_f64(r.y), fmt_f64(r.x), fmt_f64(r.a), fmt_f64(r.sigma)]
    });
    write_atomic(path, &csv_bytes(&["path_id", "t", "Y", "X", "a", "sigma"], rows)?)
}

/// Writes every field and measure of `sol` plus `summary.json` into `dir`.
pub fn write_solution(dir: &Path, sol: &SbbSolution, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tg = &sol.time_grid;
    let times: Vec<f64> = (0..=tg.steps()).map(|k| tg.t(k)).collect();
    write_field(&dir.join(PHI_FILE), &[tg.horizon()], std::slice::from_ref(&sol.phi_hat))?;
    write_field(&dir.join("u.csv"), &times, &sol.heat.u)?;
    write_field(&dir.join("v.csv"), &times, &sol.v)?;
    write_field(&dir.join("Ymap.csv"), &times, &sol.ymap)?;
    write_field(&dir.join("Xmap.csv"), &times, &sol.xmap)?;
    let g = &sol.grid;
    write_density(&dir.join(MU0_FILE), g, sol.mu0.density())?;
    write_density(&dir.join(MU_T_FILE), g, sol.mu_t.density())?;
    write_density(&dir.join("nu0.csv"), g, &sol.measures.nu0)?;
    write_density(&dir.join("nu_T.csv"), g, &sol.measures.nu_t)?;
    write_density(&dir.join("m0.csv"), g, &sol.measures.m0)?;
    write_density(&dir.join("m_T.csv"), g, &sol.measures.m_t)?;
    write_json(&dir.join(SUMMARY_FILE), summary)
}

fn read_columns(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path)?;
    let found: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(SbbError::Structural(format!("{}: expected header {header:?}, found {found:?}", path.display())));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for rec in r.records() {
        let rec = rec?;
        for (c, field) in cols.iter_mut().zip(rec.iter()) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| SbbError::Structural(format!("{}: bad number {field:?}", path.display())))?;
            c.push(v);
        }
    }
    Ok(cols)
}

fn read_on_grid(path: &Path, grid: &Grid, header: &[&str]) -> Result<Vec<f64>> {
    let cols = read_columns(path, header)?;
    let xs = &cols[header.len() - 2];
    if xs.len() != grid.n() || xs.iter().enumerate().any(|(i, x)| (x - grid.node(i)).abs() > 1e-9 * (1.0 + x.abs())) {
        return Err(SbbError::Structural(format!("{}: nodes do not match the stored grid", path.display())));
    }
    Ok(cols[header.len() - 1].clone())
}

pub fn read_summary(dir: &Path) -> Result<Summary> {
    let text = fs::read_to_string(dir.join(SUMMARY_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuilds a stored solution from its summary, `phi_hat.csv` and both marginals.
pub fn read_solution(dir: &Path) -> Result<(SbbSolution, Summary)> {
    let summary = read_summary(dir)?;
    let grid = summary.grid;
    let phi = GridFunction::new(grid, read_on_grid(&dir.join(PHI_FILE), &grid, &["t", "x", "value"])?)?;
    let mu0 = GridMeasure::new(grid, read_on_grid(&dir.join(MU0_FILE), &grid, &["x", "density"])?)?;
    let mu_t = GridMeasure::new(grid, read_on_grid(&dir.join(MU_T_FILE), &grid, &["x", "density"])?)?;
    let cfg = summary.solver.clone();
    let state = state_at(phi, &mu0, &mu_t, &cfg, summary.iterations, summary.converged)?;
    let problem = Problem { grid, mu0, mu_t, cfg };
    let sol = assemble(&state, &problem)?;
    Ok((sol, summary))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_format_round_trips() {
        for v in [0.0, -0.0, 1.0, 1e-300, 5e-324, -3.25e17, std::f64::consts::PI, 0.1 + 0.2] {
            let s = fmt_f64(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
    }

    #[test]
    fn density_files_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid::new(-3.0, 3.0, 64).unwrap();
        let mu = GridMeasure::gaussian(g, 0.1, 0.7).unwrap();
        let p = dir.path().join("m.csv");
        write_density(&p, &g, mu.density()).unwrap();
        let back = read_on_grid(&p, &g, &["x", "density"]).unwrap();
        assert_eq!(back, mu.density());
        let other = Grid::new(-3.0, 3.0, 65).unwrap();
        assert!(read_on_grid(&p, &other, &["x", "density"]).is_err());
        assert!(read_on_grid(&p, &g, &["t", "x", "value"]).is_err());
    }
}
