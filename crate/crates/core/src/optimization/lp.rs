//! Two-phase dense simplex.
//!
//! The primal problem `max cᵀx  s.t.  A x ≤ b,  E x = e` (x free) is solved
//! through its dual in standard form,
//!
//! ```text
//! min  bᵀy + eᵀ(v⁺ − v⁻)   s.t.  Aᵀy + Eᵀ(v⁺ − v⁻) = c,   y, v⁺, v⁻ ≥ 0
//! ```
//!
//! which has only `n` equality rows (the primal dimension), so the tableau
//! stays small even for polytopes with thousands of facets. The primal
//! optimiser is read off the simplex multipliers of the final basis.

use nalgebra::{DMatrix, DVector};

use super::{empty_matrix, Optimum, SolveStatus, Tolerances};
use crate::error::{Error, Result};

/// `max cᵀx` subject to `a_ineq·x ≤ b_ineq` and `a_eq·x = b_eq`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub c: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
}

impl LinearProgram {
    pub fn new(c: DVector<f64>, a_ineq: DMatrix<f64>, b_ineq: DVector<f64>) -> Result<Self> {
        let n = c.len();
        Self::with_equalities(c, a_ineq, b_ineq, empty_matrix(n), DVector::zeros(0))
    }

    pub fn with_equalities(
        c: DVector<f64>,
        a_ineq: DMatrix<f64>,
        b_ineq: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
    ) -> Result<Self> {
        let lp = LinearProgram {
            c,
            a_ineq,
            b_ineq,
            a_eq,
            b_eq,
        };
        lp.validate()?;
        Ok(lp)
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.c.len();
        if self.a_ineq.ncols() != n || self.a_eq.ncols() != n {
            return Err(Error::Dimension(format!(
                "LP has {} variables but constraint matrices have {} and {} columns",
                n,
                self.a_ineq.ncols(),
                self.a_eq.ncols()
            )));
        }
        if self.a_ineq.nrows() != self.b_ineq.len() || self.a_eq.nrows() != self.b_eq.len() {
            return Err(Error::Dimension(
                "LP constraint rows do not match right-hand sides".into(),
            ));
        }
        let finite = self.c.iter().all(|v| v.is_finite())
            && self.a_ineq.iter().all(|v| v.is_finite())
            && self.b_ineq.iter().all(|v| v.is_finite())
            && self.a_eq.iter().all(|v| v.is_finite())
            && self.b_eq.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidInput("LP data contains non-finite entries".into()));
        }
        Ok(())
    }
}

/// Solve with the default iteration cap.
pub fn lp_solve(lp: &LinearProgram, tol: f64) -> Result<SolveStatus> {
    lp_solve_with_limit(lp, tol, Tolerances::default().max_iter)
}

pub fn lp_solve_with_limit(lp: &LinearProgram, tol: f64, max_iter: usize) -> Result<SolveStatus> {
    lp.validate()?;
    solve_parts(
        Parts {
            c: &lp.c,
            a_ineq: &lp.a_ineq,
            b_ineq: &lp.b_ineq,
            a_eq: &lp.a_eq,
            b_eq: &lp.b_eq,
        },
        tol,
        max_iter,
    )
}

/// Borrowed LP data, so repeated solves over one constraint set avoid copies.
#[derive(Clone, Copy)]
pub(crate) struct Parts<'a> {
    pub c: &'a DVector<f64>,
    pub a_ineq: &'a DMatrix<f64>,
    pub b_ineq: &'a DVector<f64>,
    pub a_eq: &'a DMatrix<f64>,
    pub b_eq: &'a DVector<f64>,
}

impl Parts<'_> {
    fn dim(&self) -> usize {
        self.c.len()
    }
}

pub(crate) fn solve_parts(lp: Parts<'_>, tol: f64, max_iter: usize) -> Result<SolveStatus> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("LP tolerance must be positive, got {tol}")));
    }
    let n = lp.dim();
    if n == 0 {
        // No variables: feasible iff every constant constraint holds.
        let ok = lp.b_ineq.iter().all(|&b| b >= -tol) && lp.b_eq.iter().all(|&e| e.abs() <= tol);
        if !ok {
            return Ok(SolveStatus::Infeasible);
        }
        return Ok(SolveStatus::Optimal(Optimum {
            x: DVector::zeros(0),
            value: 0.0,
            dual_value: 0.0,
            ineq_multipliers: DVector::zeros(lp.b_ineq.len()),
            eq_multipliers: DVector::zeros(lp.b_eq.len()),
            iterations: 0,
        }));
    }

    let mut tab = Tableau::build(lp, lp.c);
    match tab.run(max_iter)? {
        Outcome::Optimal => Ok(SolveStatus::Optimal(tab.extract(lp))),
        Outcome::DualUnbounded => Ok(SolveStatus::Infeasible),
        Outcome::MaxIterations => Ok(SolveStatus::MaxIterations),
        Outcome::DualInfeasible => {
            // Either the primal is unbounded or it is infeasible; a zero
            // objective separates the two cases.
            let zero = DVector::zeros(n);
            let mut feas = Tableau::build(lp, &zero);
            match feas.run(max_iter)? {
                Outcome::Optimal => Ok(SolveStatus::Unbounded),
                Outcome::DualUnbounded => Ok(SolveStatus::Infeasible),
                Outcome::MaxIterations => Ok(SolveStatus::MaxIterations),
                Outcome::DualInfeasible => Err(Error::Solver("zero-objective LP reported dual infeasibility".into())),
            }
        }
    }
}

enum Outcome {
    Optimal,
    DualUnbounded,
    DualInfeasible,
    MaxIterations,
}

const PIVOT_TOL: f64 = 1e-10;
const REDUCED_COST_TOL: f64 = 1e-10;
const PHASE1_TOL: f64 = 1e-9;
const BLAND_AFTER: usize = 50;

struct Tableau {
    rows: usize,
    /// Structural columns (y, v⁺, v⁻) followed by one artificial per row.
    n_struct: usize,
    width: usize,
    /// Row-major `rows × (width + 1)`; the last column is the right-hand side.
    t: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    row_sign: Vec<f64>,
    m_ineq: usize,
    p_eq: usize,
    iterations: usize,
}

impl Tableau {
    fn build(lp: Parts<'_>, c: &DVector<f64>) -> Tableau {
        let n = lp.dim();
        let m = lp.a_ineq.nrows();
        let p = lp.a_eq.nrows();
        let n_struct = m + 2 * p;
        let width = n_struct + n;
        let stride = width + 1;
        let mut t = vec![0.0; n * stride];
        let mut row_sign = vec![1.0; n];
        for i in 0..n {
            let s = if c[i] < 0.0 { -1.0 } else { 1.0 };
            row_sign[i] = s;
            let row = &mut t[i * stride..(i + 1) * stride];
            for j in 0..m {
                row[j] = s * lp.a_ineq[(j, i)];
            }
            for k in 0..p {
                row[m + k] = s * lp.a_eq[(k, i)];
                row[m + p + k] = -s * lp.a_eq[(k, i)];
            }
            row[n_struct + i] = 1.0;
            row[width] = s * c[i];
        }
        let mut cost = vec![0.0; width];
        cost[..m].copy_from_slice(lp.b_ineq.as_slice());
        for k in 0..p {
            cost[m + k] = lp.b_eq[k];
            cost[m + p + k] = -lp.b_eq[k];
        }
        Tableau {
            rows: n,
            n_struct,
            width,
            t,
            cost,
            basis: (n_struct..n_struct + n).collect(),
            row_sign,
            m_ineq: m,
            p_eq: p,
            iterations: 0,
        }
    }

    #[inline]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.t[i * (self.width + 1) + j]
    }

    fn rhs(&self, i: usize) -> f64 {
        self.at(i, self.width)
    }

    fn pivot(&mut self, r: usize, q: usize) {
        let stride = self.width + 1;
        let piv = self.t[r * stride + q];
        for v in &mut self.t[r * stride..(r + 1) * stride] {
            *v /= piv;
        }
        let (before, rest) = self.t.split_at_mut(r * stride);
        let (prow, after) = rest.split_at_mut(stride);
        let eliminate = |row: &mut [f64]| {
            let f = row[q];
            if f != 0.0 {
                for (v, pv) in row.iter_mut().zip(prow.iter()) {
                    *v -= f * pv;
                }
                row[q] = 0.0;
            }
        };
        for row in before.chunks_mut(stride) {
            eliminate(row);
        }
        for row in after.chunks_mut(stride) {
            eliminate(row);
        }
        self.basis[r] = q;
        self.iterations += 1;
    }

    /// Reduced costs of every column for the given cost vector.
    fn reduced_costs(&self, cost: &[f64]) -> Vec<f64> {
        let mut r = cost.to_vec();
        for i in 0..self.rows {
            let cb = cost[self.basis[i]];
            if cb != 0.0 {
                let stride = self.width + 1;
                let row = &self.t[i * stride..i * stride + self.width];
                for (rj, tij) in r.iter_mut().zip(row) {
                    *rj -= cb * tij;
                }
            }
        }
        r
    }

    /// Minimise `cost` over columns `0..allowed`; returns false if unbounded.
    fn optimise(&mut self, cost: &[f64], allowed: usize, max_iter: usize) -> Option<bool> {
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= max_iter {
                return None;
            }
            let r = self.reduced_costs(cost);
            let bland = degenerate_run >= BLAND_AFTER;
            let mut enter = None;
            let mut best = -REDUCED_COST_TOL;
            for (j, &rj) in r.iter().enumerate().take(allowed) {
                if rj < -REDUCED_COST_TOL * (1.0 + cost[j].abs()) {
                    if bland {
                        enter = Some(j);
                        break;
                    }
                    if rj < best {
                        best = rj;
                        enter = Some(j);
                    }
                }
            }
            let Some(q) = enter else {
                return Some(true);
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, q);
                if a > PIVOT_TOL {
                    let ratio = self.rhs(i).max(0.0) / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((li, lr)) => {
                            if ratio < lr - 1e-12 || (ratio <= lr + 1e-12 && self.basis[i] < self.basis[li]) {
                                Some((i, ratio))
                            } else {
                                Some((li, lr))
                            }
                        }
                    };
                }
            }
            let Some((r_out, step)) = leave else {
                return Some(false);
            };
            if step <= 1e-12 {
                degenerate_run += 1;
            } else {
                degenerate_run = 0;
            }
            self.pivot(r_out, q);
        }
    }

    fn run(&mut self, max_iter: usize) -> Result<Outcome> {
        // Phase 1: drive the artificials to zero.
        let mut phase1 = vec![0.0; self.width];
        for v in &mut phase1[self.n_struct..] {
            *v = 1.0;
        }
        let rhs_scale = (0..self.rows).map(|i| self.rhs(i).abs()).fold(1.0, f64::max);
        match self.optimise(&phase1, self.n_struct, max_iter) {
            None => return Ok(Outcome::MaxIterations),
            Some(false) => {
                return Err(Error::Solver("phase-1 objective unbounded below".into()));
            }
            Some(true) => {}
        }
        let infeas: f64 = (0..self.rows)
            .filter(|&i| self.basis[i] >= self.n_struct)
            .map(|i| self.rhs(i))
            .sum();
        if infeas > PHASE1_TOL * rhs_scale {
            return Ok(Outcome::DualInfeasible);
        }
        // Pivot remaining zero-level artificials out where possible.
        for i in 0..self.rows {
            if self.basis[i] >= self.n_struct {
                let mut best: Option<(usize, f64)> = None;
                for j in 0..self.n_struct {
                    let a = self.at(i, j).abs();
                    if a > 1e-9 && best.is_none_or(|(_, b)| a > b) {
                        best = Some((j, a));
                    }
                }
                if let Some((j, _)) = best {
                    self.pivot(i, j);
                }
            }
        }
        let cost = self.cost.clone();
        match self.optimise(&cost, self.n_struct, max_iter) {
            None => Ok(Outcome::MaxIterations),
            Some(false) => Ok(Outcome::DualUnbounded),
            Some(true) => Ok(Outcome::Optimal),
        }
    }

    fn extract(&self, lp: Parts<'_>) -> Optimum {
        let n = self.rows;
        let r = self.reduced_costs(&self.cost);
        let x = DVector::from_fn(n, |i, _| -r[self.n_struct + i] * self.row_sign[i]);
        let mut z = vec![0.0; self.width];
        for i in 0..self.rows {
            z[self.basis[i]] = self.rhs(i).max(0.0);
        }
        let m = self.m_ineq;
        let p = self.p_eq;
        let ineq = DVector::from_fn(m, |j, _| z[j]);
        let eq = DVector::from_fn(p, |k, _| z[m + k] - z[m + p + k]);
        let dual_value = lp.b_ineq.dot(&ineq) + lp.b_eq.dot(&eq);
        Optimum {
            value: lp.c.dot(&x),
            x,
            dual_value,
            ineq_multipliers: ineq,
            eq_multipliers: eq,
            iterations: self.iterations,
        }
    }
}
