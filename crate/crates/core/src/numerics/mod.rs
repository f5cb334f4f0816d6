//! Dense LP and convex QP solvers.
//!
//! Problem sizes in this crate stay around a few hundred variables, so both
//! solvers work on dense `nalgebra` matrices.

mod lp;
mod qp;

pub use lp::{solve_lp, LinearProgram};
pub use qp::{solve_qp, QpSettings, QuadraticProgram};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    MaxIterations,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub solution: Vec<f64>,
    pub objective: f64,
    /// Objective of the dual certificate; equals `objective` up to round-off
    /// at an optimum.
    pub dual_objective: f64,
    /// Largest constraint or bound violation of `solution`.
    pub primal_residual: f64,
    /// Largest violation of dual feasibility / stationarity.
    pub dual_residual: f64,
    pub iterations: usize,
}

impl SolveReport {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub(crate) fn failed(status: SolveStatus, n: usize, iterations: usize) -> Self {
        SolveReport {
            status,
            solution: vec![f64::NAN; n],
            objective: f64::NAN,
            dual_objective: f64::NAN,
            primal_residual: f64::INFINITY,
            dual_residual: f64::INFINITY,
            iterations,
        }
    }
}

/// Largest amount by which `value` leaves `[lo, hi]`.
pub(crate) fn bound_violation(value: f64, lo: f64, hi: f64) -> f64 {
    (lo - value).max(value - hi).max(0.0)
}
