use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;

use sbb_core::dual::solve_with_observer;
use sbb_core::io::{self, fmt_f64, Summary};
use sbb_core::reference::sinkhorn_sb;
use sbb_core::sim::{linear_coupling_bound, simulate_with, SimulationReport};
use sbb_core::{assemble, Marginal, Problem, SbbError, SbbSolution, SolverConfig};

use crate::config::RunConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_NONCONVERGED: u8 = 2;
pub const EXIT_DEGRADED: u8 = 3;
pub const EXIT_SWEEP_FAILED: u8 = 4;

/// Duality is only judged once the Monte Carlo error is meaningful.
pub const MIN_PATHS_FOR_DUALITY: usize = 1000;
/// Tolerance of the linear-coupling upper bound.
pub const BOUND_SLACK: f64 = 1e-6;
const SINKHORN_TOL: f64 = 1e-10;

pub const REPORT_FILE: &str = "report.json";
pub const TRAJECTORY_FILE: &str = "trajectories.csv";
pub const VALIDATION_FILE: &str = "validation.json";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_SUMMARY_FILE: &str = "sweep.json";

fn timestamp() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf, SbbError> {
    cfg.out.clone().ok_or_else(|| SbbError::InvalidConfig("no output directory (set \"out\" or pass --out)".into()))
}

fn echo(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serializes")
}

fn problem(cfg: &RunConfig, solver: &SolverConfig) -> Result<Problem, SbbError> {
    let base = cfg.base.as_deref();
    let mu0 = Marginal::resolve(&cfg.mu0, base)?;
    let mu_t = Marginal::resolve(&cfg.mu_t, base)?;
    Problem::new(&mu0, &mu_t, solver)
}

enum Solved {
    Done(Box<SbbSolution>, Vec<sbb_core::IterationRecord>),
    NotConverged(String),
}

fn run_solver(problem: &Problem, verbose: bool) -> Result<Solved, SbbError> {
    let observe = |r: &sbb_core::IterationRecord| {
        if verbose {
            eprintln!("iter {:4}  J = {:.10}  residual = {:.3e}  omega = {:.3}", r.iteration, r.objective, r.residual, r.damping);
        }
    };
    let state = match solve_with_observer(&problem.mu0, &problem.mu_t, &problem.cfg, observe) {
        Ok(s) => s,
        Err(e @ SbbError::NonConvergence { .. }) => return Ok(Solved::NotConverged(e.to_string())),
        Err(e) => return Err(e),
    };
    let sol = assemble(&state, problem)?;
    Ok(Solved::Done(Box::new(sol), state.history))
}

pub fn solve(cfg: &RunConfig) -> Result<u8, SbbError> {
    cfg.check()?;
    let out = out_dir(cfg)?;
    let problem = problem(cfg, &cfg.solver)?;
    let (sol, history) = match run_solver(&problem, true)? {
        Solved::Done(sol, history) => (sol, history),
        Solved::NotConverged(msg) => {
            eprintln!("{msg}");
            return Ok(EXIT_NONCONVERGED);
        }
    };
    io::write_solution(&out, &sol, &Summary::new(&sol, &history, echo(cfg)))?;
    eprintln!("dual value {}  ({} iterations), written to {}", sol.dual_value, sol.iterations, out.display());
    if !sol.converged {
        eprintln!("solver stopped before reaching the tolerance (residual {:.3e})", sol.solver_residual);
        return Ok(EXIT_NONCONVERGED);
    }
    if sol.is_degraded() {
        eprintln!("degraded: {}", sol.degraded.join(", "));
        return Ok(EXIT_DEGRADED);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize)]
pub struct DualityCheck {
    pub checked: bool,
    pub gap: f64,
    pub budget: f64,
    pub passed: bool,
}

impl DualityCheck {
    pub fn new(dual: f64, report: &SimulationReport, rel_budget: f64) -> Self {
        let gap = (report.primal_cost_mean - dual).abs();
        let budget = 3.0 * report.primal_cost_stderr + rel_budget * dual.abs();
        let checked = report.path_count >= MIN_PATHS_FOR_DUALITY;
        Self { checked, gap, budget, passed: !checked || gap <= budget }
    }
}

#[derive(Debug, Serialize)]
struct SimulateReport<'a> {
    timestamp: u64,
    config: &'a serde_json::Value,
    paths: usize,
    seed: u64,
    dual_value: f64,
    linear_bound: f64,
    duality: DualityCheck,
    simulation: SimulationReport,
}

/// Reloads the solution in `dir`, simulating with the run config stored beside it unless
/// `overrides` supplies one.
pub fn simulate(dir: &Path, overrides: Option<&RunConfig>, paths: Option<usize>, seed: Option<u64>, emit: bool) -> Result<u8, SbbError> {
    let (sol, summary) = io::read_solution(dir)?;
    let stored: Option<RunConfig> = serde_json::from_value(summary.config.clone()).ok();
    let base = overrides.or(stored.as_ref());
    let paths = paths.or(base.map(|c| c.paths)).unwrap_or(100_000);
    let seed = seed.or(overrides.map(|c| c.solver.seed)).unwrap_or(sol.config.seed);
    let rel = base.map_or(0.02, |c| c.duality_budget);
    let emit = emit || base.is_some_and(|c| c.emit_paths);
    let mut config = base.map_or(summary.config.clone(), echo);
    if let Some(obj) = config.as_object_mut() {
        obj.insert("paths".into(), paths.into());
        obj.insert("emit_paths".into(), emit.into());
        obj.insert("seed".into(), seed.into());
    }
    let out = simulate_with(&sol, paths, seed, emit)?;
    let duality = DualityCheck::new(sol.dual_value, &out.report, rel);
    let report = SimulateReport {
        timestamp: timestamp(),
        config: &config,
        paths,
        seed,
        dual_value: sol.dual_value,
        linear_bound: linear_coupling_bound(&sol.mu0, &sol.mu_t, &sol.config),
        duality,
        simulation: out.report,
    };
    io::write_json(&dir.join(REPORT_FILE), &report)?;
    if emit {
        io::write_trajectories(&dir.join(TRAJECTORY_FILE), &out.trajectories)?;
    }
    eprintln!(
        "primal {} ± {}  dual {}  gap {:.3e} (budget {:.3e}{})",
        report.simulation.primal_cost_mean,
        report.simulation.primal_cost_stderr,
        report.dual_value,
        report.duality.gap,
        report.duality.budget,
        if report.duality.checked { "" } else { ", not checked below 1000 paths" }
    );
    Ok(if report.duality.passed { EXIT_OK } else { EXIT_DEGRADED })
}

#[derive(Debug, Serialize)]
struct Validation<'a> {
    timestamp: u64,
    config: &'a serde_json::Value,
    dual_value: f64,
    linear_bound: f64,
    bound_holds: bool,
    converged: bool,
    residuals: &'a std::collections::BTreeMap<String, f64>,
    degraded: &'a [String],
}

/// Rebuilds a stored solution and reruns every structural check on it.
pub fn validate(dir: &Path) -> Result<u8, SbbError> {
    let (sol, summary) = io::read_solution(dir)?;
    let bound = linear_coupling_bound(&sol.mu0, &sol.mu_t, &sol.config);
    let bound_holds = sol.dual_value <= bound + BOUND_SLACK;
    let v = Validation {
        timestamp: timestamp(),
        config: &summary.config,
        dual_value: sol.dual_value,
        linear_bound: bound,
        bound_holds,
        converged: sol.converged,
        residuals: &sol.residuals,
        degraded: &sol.degraded,
    };
    io::write_json(&dir.join(VALIDATION_FILE), &v)?;
    for (name, value) in &sol.residuals {
        let mark = if sol.degraded.contains(name) { "FAIL" } else { "ok" };
        eprintln!("{mark:>4}  {name} = {value:.3e}");
    }
    eprintln!("{:>4}  dual value {} <= linear bound {}", if bound_holds { "ok" } else { "FAIL" }, sol.dual_value, bound);
    Ok(if sol.is_degraded() || !bound_holds { EXIT_DEGRADED } else { EXIT_OK })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub beta: f64,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub dual_value: f64,
    pub primal_cost: f64,
    pub drift_energy: f64,
    pub diffusion_energy: f64,
    pub martingale_slope: f64,
    pub sinkhorn_value: Option<f64>,
    pub status: String,
}

impl SweepRow {
    fn failed(beta: f64, horizon: f64, status: String) -> Self {
        Self {
            beta,
            horizon,
            dual_value: f64::NAN,
            primal_cost: f64::NAN,
            drift_energy: f64::NAN,
            diffusion_energy: f64::NAN,
            martingale_slope: f64::NAN,
            sinkhorn_value: None,
            status,
        }
    }

    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

fn sweep_row(cfg: &RunConfig, beta: f64, horizon: f64) -> Result<SweepRow, SbbError> {
    let solver = SolverConfig { beta, horizon, ..cfg.solver.clone() };
    let problem = problem(cfg, &solver)?;
    let sol = match run_solver(&problem, false)? {
        Solved::Done(sol, _) => sol,
        Solved::NotConverged(msg) => return Ok(SweepRow::failed(beta, horizon, format!("failed: {msg}"))),
    };
    let report = simulate_with(&sol, cfg.paths, solver.seed, false)?.report;
    let sinkhorn_value =
        if cfg.sinkhorn { Some(sinkhorn_sb(&problem.mu0, &problem.mu_t, horizon, SINKHORN_TOL)?.value) } else { None };
    let status = if !sol.converged {
        "failed: not converged".to_string()
    } else if sol.is_degraded() {
        format!("failed: degraded ({})", sol.degraded.join(" "))
    } else {
        "ok".to_string()
    };
    Ok(SweepRow {
        beta,
        horizon,
        dual_value: sol.dual_value,
        primal_cost: report.primal_cost_mean,
        drift_energy: report.drift_energy,
        diffusion_energy: report.diffusion_energy,
        martingale_slope: report.martingale_slope,
        sinkhorn_value,
        status,
    })
}

pub fn sweep_csv(rows: &[SweepRow]) -> Vec<u8> {
    let mut s = String::from("beta,T,dual_value,primal_cost,drift_energy,diffusion_energy,martingale_slope,sinkhorn_value,status\n");
    for r in rows {
        let cells = [r.beta, r.horizon, r.dual_value, r.primal_cost, r.drift_energy, r.diffusion_energy, r.martingale_slope];
        for c in cells {
            s.push_str(&fmt_f64(c));
            s.push(',');
        }
        s.push_str(&r.sinkhorn_value.map(fmt_f64).unwrap_or_default());
        s.push(',');
        s.push_str(&r.status.replace([',', '\n'], " "));
        s.push('\n');
    }
    s.into_bytes()
}

#[derive(Debug, Serialize)]
struct SweepSummary<'a> {
    timestamp: u64,
    config: serde_json::Value,
    rows: &'a [SweepRow],
}

pub fn sweep(cfg: &RunConfig) -> Result<u8, SbbError> {
    if cfg.sweep.is_empty() {
        return Err(SbbError::InvalidConfig("empty beta list".into()));
    }
    cfg.check()?;
    let out = out_dir(cfg)?;
    std::fs::create_dir_all(&out)?;
    let rows: Vec<SweepRow> = cfg
        .sweep
        .par_iter()
        .map(|&(beta, horizon)| {
            let row = sweep_row(cfg, beta, horizon).unwrap_or_else(|e| SweepRow::failed(beta, horizon, format!("failed: {e}")));
            eprintln!("beta {beta}  T {horizon}: {}  dual {}", row.status, row.dual_value);
            row
        })
        .collect();
    io::write_atomic(&out.join(SWEEP_FILE), &sweep_csv(&rows))?;
    io::write_json(&out.join(SWEEP_SUMMARY_FILE), &SweepSummary { timestamp: timestamp(), config: echo(cfg), rows: &rows })?;
    Ok(if rows.iter().all(SweepRow::ok) { EXIT_OK } else { EXIT_SWEEP_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_cells() {
        let mut r = SweepRow::failed(2.0, 1.0, "failed: a, b".into());
        r.sinkhorn_value = Some(0.5);
        let text = String::from_utf8(sweep_csv(&[r])).unwrap();
        let line = text.lines().nth(1).unwrap();
        assert_eq!(line.split(',').count(), 9);
        assert!(line.starts_with("2e0,1e0,NaN,"));
        assert!(line.ends_with("5e-1,failed: a  b"));
    }
}
