//! Shared fixtures for the kernel benchmarks.

use sbb_core::moreau::beta_convex_project;
use sbb_core::{assemble, solve, GridFunction, Problem, SbbSolution, SolverConfig};

/// Gaussian pair N(0, 0.25) → N(0, 1) at β = 2, T = 1 on `nodes` nodes.
pub fn gaussian_problem(nodes: usize) -> Problem {
    let cfg = SolverConfig { nodes, ..SolverConfig::new(2.0, 1.0) };
    Problem::gaussian((0.0, 0.25), (0.0, 1.0), &cfg).expect("valid benchmark problem")
}

/// A wavy β-convex potential on the problem grid.
pub fn wavy_potential(problem: &Problem) -> GridFunction {
    let g = problem.grid;
    let raw = g.nodes().iter().map(|x| 0.3 * x - 0.05 * x * x + 0.2 * (2.0 * x).sin()).collect();
    beta_convex_project(&GridFunction::new(g, raw).expect("finite"), problem.cfg.beta).expect("projectable")
}

pub fn solved(problem: &Problem) -> SbbSolution {
    let state = solve(&problem.mu0, &problem.mu_t, &problem.cfg).expect("benchmark problem converges");
    assemble(&state, problem).expect("assembles")
}
