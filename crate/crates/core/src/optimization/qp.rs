//! Convex QP by null-space elimination plus a Goldfarb–Idnani dual active set.
//!
//! Equalities are eliminated once with an SVD basis of their null space, the
//! reduced Hessian is factored once, and every subsequent solve with new
//! right-hand sides only runs the active-set loop. This is the shape the MPC
//! needs: matrices fixed at synthesis, vectors changing every step.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen, SVD};

use super::{empty_matrix, Optimum, SolveStatus};
use crate::error::{Error, Result};

/// `min ½ zᵀPz + qᵀz + offset` subject to `a_ineq·z ≤ b_ineq`, `a_eq·z = b_eq`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    pub offset: f64,
}

impl QuadraticProgram {
    pub fn new(p: DMatrix<f64>, q: DVector<f64>) -> Self {
        let n = q.len();
        QuadraticProgram {
            p,
            q,
            a_ineq: empty_matrix(n),
            b_ineq: DVector::zeros(0),
            a_eq: empty_matrix(n),
            b_eq: DVector::zeros(0),
            offset: 0.0,
        }
    }

    pub fn inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn offset(mut self, offset: f64) -> Self {
        self.offset = offset;
        self
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.p * z)) + self.q.dot(z) + self.offset
    }
}

/// First-order optimality residuals of a QP solution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktResiduals {
    /// Largest violation of `a_ineq·z ≤ b_ineq`.
    pub primal_ineq: f64,
    /// Largest `|a_eq·z − b_eq|`.
    pub primal_eq: f64,
    /// Most negative inequality multiplier, as a positive number.
    pub dual: f64,
    /// `‖Pz + q + Gᵀμ + Eᵀν‖∞`.
    pub stationarity: f64,
    /// `max |μ_i · slack_i|`.
    pub complementarity: f64,
}

impl KktResiduals {
    pub fn max(&self) -> f64 {
        self.primal_ineq
            .max(self.primal_eq)
            .max(self.dual)
            .max(self.stationarity)
            .max(self.complementarity)
    }
}

/// Factorisations that depend only on the QP matrices.
#[derive(Debug, Clone)]
pub struct PreparedQp {
    n: usize,
    p: DMatrix<f64>,
    g: DMatrix<f64>,
    e: DMatrix<f64>,
    /// Orthonormal basis of `ker E`, `n × r`.
    null: DMatrix<f64>,
    /// Pseudo-inverse of `E`, `n × p_eq`.
    e_pinv: DMatrix<f64>,
    /// Lower Cholesky factor of the (possibly regularised) reduced Hessian.
    chol_l: DMatrix<f64>,
    /// Proximal weight; zero when the reduced Hessian is positive definite.
    prox: f64,
    reduced_hess: DMatrix<f64>,
    /// `G · Z`, `m × r`.
    gz: DMatrix<f64>,
    row_scale: Vec<f64>,
}

/// Outcome of the reduced-space active-set loop.
enum DualOutcome {
    Optimal {
        w: DVector<f64>,
        mu: DVector<f64>,
        iterations: usize,
    },
    Infeasible,
    MaxIterations,
}

impl PreparedQp {
    pub fn new(p: &DMatrix<f64>, a_ineq: &DMatrix<f64>, a_eq: &DMatrix<f64>) -> Result<Self> {
        let n = p.nrows();
        if p.ncols() != n || a_ineq.ncols() != n || a_eq.ncols() != n {
            return Err(Error::Dimension(format!(
                "QP cost is {}x{}, constraint matrices have {} and {} columns",
                p.nrows(),
                p.ncols(),
                a_ineq.ncols(),
                a_eq.ncols()
            )));
        }
        if !(p.iter().chain(a_ineq.iter()).chain(a_eq.iter())).all(|v| v.is_finite()) {
            return Err(Error::InvalidInput("QP data contains non-finite entries".into()));
        }
        let scale = p.amax().max(1.0);
        if (p - p.transpose()).amax() > 1e-10 * scale {
            return Err(Error::InvalidInput("QP cost matrix is not symmetric".into()));
        }
        if n > 0 {
            let sym = (p + p.transpose()) * 0.5;
            let min_eig = SymmetricEigen::new(sym).eigenvalues.min();
            if min_eig < -1e-8 {
                return Err(Error::InvalidInput(format!(
                    "QP cost matrix is not positive semidefinite (min eigenvalue {min_eig:e})"
                )));
            }
        }

        let (null, e_pinv) = null_space_and_pinv(a_eq);
        let r = null.ncols();
        let reduced_hess = {
            let h = null.transpose() * p * &null;
            (&h + h.transpose()) * 0.5
        };
        let h_scale = reduced_hess.amax().max(1e-12);
        let (chol_l, prox) = match Cholesky::new(reduced_hess.clone()) {
            Some(ch) if min_diag(ch.l_dirty()) > 1e-7 * h_scale.sqrt() => (ch.l(), 0.0),
            _ => {
                let prox = 1e-3 * h_scale.max(1.0);
                let reg = &reduced_hess + DMatrix::identity(r, r) * prox;
                let ch = Cholesky::new(reg)
                    .ok_or_else(|| Error::Solver("regularised reduced Hessian is not positive definite".into()))?;
                (ch.l(), prox)
            }
        };
        let gz = a_ineq * &null;
        let row_scale = (0..gz.nrows()).map(|i| gz.row(i).norm().max(1.0)).collect();
        Ok(PreparedQp {
            n,
            p: p.clone(),
            g: a_ineq.clone(),
            e: a_eq.clone(),
            null,
            e_pinv,
            chol_l,
            prox,
            reduced_hess,
            gz,
            row_scale,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn n_ineq(&self) -> usize {
        self.g.nrows()
    }

    pub fn n_eq(&self) -> usize {
        self.e.nrows()
    }

    /// Solve with new vectors. `tol` bounds feasibility and stationarity.
    pub fn solve(
        &self,
        q: &DVector<f64>,
        b_ineq: &DVector<f64>,
        b_eq: &DVector<f64>,
        tol: f64,
        max_iter: usize,
    ) -> Result<SolveStatus> {
        if q.len() != self.n || b_ineq.len() != self.g.nrows() || b_eq.len() != self.e.nrows() {
            return Err(Error::Dimension("QP vectors do not match the prepared matrices".into()));
        }
        if !(tol > 0.0) {
            return Err(Error::InvalidInput(format!("QP tolerance must be positive, got {tol}")));
        }
        let z0 = &self.e_pinv * b_eq;
        if self.e.nrows() > 0 {
            let res = (&self.e * &z0 - b_eq).amax();
            if res > tol * (1.0 + b_eq.amax()) {
                return Ok(SolveStatus::Infeasible);
            }
        }
        let g_red = self.null.transpose() * (&self.p * &z0 + q);
        let d = b_ineq - &self.g * &z0;
        let viol_tol = 1e-3 * tol;

        let outcome = if self.prox == 0.0 {
            self.dual_active_set(&g_red, &d, viol_tol, max_iter)
        } else {
            self.proximal(&g_red, &d, viol_tol, tol, max_iter)
        };
        let (w, mu, iterations) = match outcome {
            DualOutcome::Optimal { w, mu, iterations } => (w, mu, iterations),
            DualOutcome::Infeasible => return Ok(SolveStatus::Infeasible),
            DualOutcome::MaxIterations => return Ok(SolveStatus::MaxIterations),
        };

        let z = &z0 + &self.null * w;
        let grad = &self.p * &z + q + self.g.transpose() * &mu;
        let nu = -(self.e_pinv.transpose() * &grad);
        let pz = &self.p * &z;
        let value = 0.5 * z.dot(&pz) + q.dot(&z);
        let lagr = value + mu.dot(&(&self.g * &z - b_ineq)) + nu.dot(&(&self.e * &z - b_eq));
        Ok(SolveStatus::Optimal(Optimum {
            x: z,
            value,
            dual_value: lagr,
            ineq_multipliers: mu,
            eq_multipliers: nu,
            iterations,
        }))
    }

    /// Residuals of the first-order conditions at a returned optimum.
    pub fn kkt_residuals(
        &self,
        q: &DVector<f64>,
        b_ineq: &DVector<f64>,
        b_eq: &DVector<f64>,
        opt: &Optimum,
    ) -> KktResiduals {
        let z = &opt.x;
        let slack = b_ineq - &self.g * z;
        let primal_ineq = slack.iter().fold(0.0f64, |acc, &s| acc.max(-s));
        let primal_eq = if self.e.nrows() > 0 {
            (&self.e * z - b_eq).amax()
        } else {
            0.0
        };
        let dual = opt.ineq_multipliers.iter().fold(0.0f64, |acc, &m| acc.max(-m));
        let stat =
            &self.p * z + q + self.g.transpose() * &opt.ineq_multipliers + self.e.transpose() * &opt.eq_multipliers;
        let complementarity = opt
            .ineq_multipliers
            .iter()
            .zip(slack.iter())
            .fold(0.0f64, |acc, (m, s)| acc.max((m * s).abs()));
        KktResiduals {
            primal_ineq,
            primal_eq,
            dual,
            stationarity: if self.n > 0 { stat.amax() } else { 0.0 },
            complementarity,
        }
    }

    fn chol_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let y = self
            .chol_l
            .solve_lower_triangular(rhs)
            .expect("Cholesky factor has a positive diagonal");
        self.chol_l
            .tr_solve_lower_triangular(&y)
            .expect("Cholesky factor has a positive diagonal")
    }

    /// Proximal-point outer loop for a singular reduced Hessian.
    fn proximal(&self, g: &DVector<f64>, d: &DVector<f64>, viol_tol: f64, tol: f64, max_iter: usize) -> DualOutcome {
        let r = g.len();
        let mut center = DVector::zeros(r);
        let mut total = 0usize;
        let mut last_mu = DVector::zeros(d.len());
        while total < max_iter {
            let shifted = g - &center * self.prox;
            match self.dual_active_set(&shifted, d, viol_tol, max_iter - total) {
                DualOutcome::Optimal { w, mu, iterations } => {
                    total += iterations + 1;
                    let step = (&w - &center).amax();
                    // Stationarity of the original problem: Hw + g + Cᵀμ.
                    let stat = (&self.reduced_hess * &w + g + self.gz.transpose() * &mu).amax();
                    center = w;
                    last_mu = mu;
                    if step <= 1e-3 * tol * (1.0 + center.amax()) && stat <= 1e-2 * tol {
                        return DualOutcome::Optimal {
                            w: center,
                            mu: last_mu,
                            iterations: total,
                        };
                    }
                }
                other => return other,
            }
        }
        let _ = last_mu;
        DualOutcome::MaxIterations
    }

    /// Goldfarb–Idnani on `min ½wᵀHw + gᵀw  s.t.  C w ≤ d` with `C = G·Z`.
    fn dual_active_set(&self, g: &DVector<f64>, d: &DVector<f64>, viol_tol: f64, max_iter: usize) -> DualOutcome {
        let r = g.len();
        let m = d.len();
        let c = &self.gz;
        let mut w = -self.chol_solve(g);
        let mut active: Vec<usize> = Vec::new();
        let mut u: Vec<f64> = Vec::new();
        let mut is_active = vec![false; m];
        let mut iterations = 0usize;

        loop {
            // Most violated inactive constraint, scaled by its row norm.
            let mut pick: Option<(usize, f64)> = None;
            for i in 0..m {
                if is_active[i] {
                    continue;
                }
                let slack = d[i] - c.row(i).dot(&w.transpose());
                let v = -slack / self.row_scale[i];
                if v > viol_tol && pick.is_none_or(|(_, best)| v > best) {
                    pick = Some((i, v));
                }
            }
            let Some((p_idx, _)) = pick else {
                let mut mu = DVector::zeros(m);
                for (&j, &uj) in active.iter().zip(&u) {
                    mu[j] = uj;
                }
                return DualOutcome::Optimal { w, mu, iterations };
            };

            // Normal in the ≥ convention: n_p·w ≥ −d_p.
            let n_p: DVector<f64> = -c.row(p_idx).transpose();
            let mut u_p = 0.0;
            loop {
                iterations += 1;
                if iterations > max_iter {
                    return DualOutcome::MaxIterations;
                }
                let v = self.chol_l.solve_lower_triangular(&n_p).expect("positive diagonal");
                let (resid, rdir) = if active.is_empty() {
                    (v.clone(), DVector::zeros(0))
                } else {
                    let mut nmat = DMatrix::zeros(r, active.len());
                    for (col, &j) in active.iter().enumerate() {
                        nmat.set_column(col, &(-c.row(j).transpose()));
                    }
                    let lm = self.chol_l.solve_lower_triangular(&nmat).expect("positive diagonal");
                    let qr = lm.qr();
                    let q1 = qr.q();
                    let rr = qr.r();
                    let qtv = q1.transpose() * &v;
                    let resid = &v - &q1 * &qtv;
                    let rdir = rr
                        .solve_upper_triangular(&qtv)
                        .unwrap_or_else(|| DVector::zeros(active.len()));
                    (resid, rdir)
                };
                let ztn = resid.norm_squared();
                let dependent = ztn <= 1e-20 * v.norm_squared().max(1e-300);

                // Partial step limit from the active multipliers.
                let mut t1 = f64::INFINITY;
                let mut drop_at = None;
                for (k, &rk) in rdir.iter().enumerate() {
                    if rk > 1e-14 {
                        let ratio = u[k] / rk;
                        if ratio < t1 {
                            t1 = ratio;
                            drop_at = Some(k);
                        }
                    }
                }
                let slack_p = d[p_idx] - c.row(p_idx).dot(&w.transpose());
                let t2 = if dependent { f64::INFINITY } else { -slack_p / ztn };

                if !t1.is_finite() && !t2.is_finite() {
                    return DualOutcome::Infeasible;
                }
                let t = t1.min(t2);
                if t2.is_finite() {
                    let z = self
                        .chol_l
                        .tr_solve_lower_triangular(&resid)
                        .expect("positive diagonal");
                    w += &z * t;
                }
                for (uk, rk) in u.iter_mut().zip(rdir.iter()) {
                    *uk -= t * rk;
                }
                u_p += t;
                if t2 <= t1 {
                    active.push(p_idx);
                    u.push(u_p);
                    is_active[p_idx] = true;
                    break;
                }
                let k = drop_at.expect("finite partial step has a blocking index");
                is_active[active[k]] = false;
                active.remove(k);
                u.remove(k);
            }
        }
    }
}

fn min_diag(l: &DMatrix<f64>) -> f64 {
    l.diagonal().iter().copied().fold(f64::INFINITY, f64::min)
}

/// Orthonormal null-space basis and pseudo-inverse of `e` (`p × n`).
fn null_space_and_pinv(e: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let (p, n) = e.shape();
    if p == 0 {
        return (DMatrix::identity(n, n), DMatrix::zeros(n, 0));
    }
    if n == 0 {
        return (DMatrix::zeros(0, 0), DMatrix::zeros(0, p));
    }
    // Pad to at least n rows so the SVD returns a complete right basis.
    let rows = p.max(n);
    let mut padded = DMatrix::zeros(rows, n);
    padded.view_mut((0, 0), (p, n)).copy_from(e);
    let svd: SVD<f64, Dyn, Dyn> = SVD::new(padded, true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested V^T");
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let thresh = (smax * n as f64 * 1e-12).max(1e-14);
    let null_rows: Vec<usize> = (0..sigma.len()).filter(|&i| sigma[i] <= thresh).collect();
    let mut null = DMatrix::zeros(n, null_rows.len());
    for (col, &i) in null_rows.iter().enumerate() {
        null.set_column(col, &v_t.row(i).transpose());
    }
    let mut pinv = DMatrix::zeros(n, p);
    for i in 0..sigma.len() {
        if sigma[i] > thresh {
            let vi = v_t.row(i).transpose();
            let ui = u.column(i).rows(0, p).into_owned();
            pinv += (vi * ui.transpose()) / sigma[i];
        }
    }
    (null, pinv)
}

/// Prepare and solve in one call.
pub fn qp_solve(qp: &QuadraticProgram, tol: f64, max_iter: usize) -> Result<SolveStatus> {
    if qp.q.len() != qp.p.nrows() || qp.a_ineq.nrows() != qp.b_ineq.len() || qp.a_eq.nrows() != qp.b_eq.len() {
        return Err(Error::Dimension("QP vector lengths do not match matrices".into()));
    }
    let prepared = PreparedQp::new(&qp.p, &qp.a_ineq, &qp.a_eq)?;
    let status = prepared.solve(&qp.q, &qp.b_ineq, &qp.b_eq, tol, max_iter)?;
    Ok(match status {
        SolveStatus::Optimal(mut opt) => {
            opt.value += qp.offset;
            opt.dual_value += qp.offset;
            SolveStatus::Optimal(opt)
        }
        other => other,
    })
}
