//! Grid solver for the one-dimensional Schrödinger–Bridge–Bass transport problem.
//!
//! The cost of a semimartingale `dX = a dt + σ dW` on `[0, T]` is
//! `E ∫ ½a² + (β/2)(σ − 1)² dt`. The solver maximizes the reduced dual over β-convex
//! potentials φ, rebuilds the optimal fields and transport maps from the maximizer,
//! and simulates the optimal process.

pub mod bridge;
pub mod dual;
pub mod error;
pub mod grid;
pub mod heat;
pub mod io;
pub mod measures;
pub mod moreau;
pub mod problem;
pub mod reference;
pub mod sim;

pub use dual::{dual_gradient, dual_objective, solve, DualGradient, DualState, IterationRecord, SolverConfig};
pub use error::{Result, SbbError};
pub use grid::{Grid, GridFunction, TimeGrid};
pub use measures::{GridMeasure, Marginal, MarginalSpec};
pub use problem::Problem;
pub use bridge::{assemble, SbbSolution};
pub use sim::{simulate, SimulationReport};
