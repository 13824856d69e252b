//! Dense LP and convex QP kernels.
//!
//! Both solvers are deterministic: the same inputs produce bit-identical
//! outputs on the same build. Infeasibility is always reported from a
//! certificate (an unbounded dual ray for the LP, a dependent violated
//! constraint with no droppable multiplier for the QP), never from an
//! iteration cap.

mod lp;
mod qp;

use nalgebra::{DMatrix, DVector};

pub use lp::{lp_solve, lp_solve_with_limit, LinearProgram};
pub(crate) use lp::{solve_parts, Parts};
pub use qp::{qp_solve, KktResiduals, PreparedQp, QuadraticProgram};

/// Default solver tolerances.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub feasibility: f64,
    pub optimality: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            feasibility: 1e-7,
            optimality: 1e-6,
            max_iter: 50_000,
        }
    }
}

/// Optimal point together with the multipliers that certify it.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub x: DVector<f64>,
    /// Primal objective value (maximised value for LPs, minimised for QPs).
    pub value: f64,
    /// Objective of the dual problem evaluated at the returned multipliers.
    pub dual_value: f64,
    pub ineq_multipliers: DVector<f64>,
    pub eq_multipliers: DVector<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    Optimal(Optimum),
    Infeasible,
    Unbounded,
    MaxIterations,
}

impl SolveStatus {
    pub fn is_optimal(&self) -> bool {
        matches!(self, SolveStatus::Optimal(_))
    }

    pub fn optimum(&self) -> Option<&Optimum> {
        match self {
            SolveStatus::Optimal(opt) => Some(opt),
            _ => None,
        }
    }

    pub fn into_optimum(self) -> Option<Optimum> {
        match self {
            SolveStatus::Optimal(opt) => Some(opt),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            SolveStatus::Optimal(_) => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Unbounded => "unbounded",
            SolveStatus::MaxIterations => "max_iterations",
        }
    }
}

pub(crate) fn empty_matrix(cols: usize) -> DMatrix<f64> {
    DMatrix::zeros(0, cols)
}
