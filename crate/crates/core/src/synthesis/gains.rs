use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lti::spectral_radius;
use crate::error::{Error, Result};

/// Ancillary gain `K`, steady-state gain `K̄` and terminal cost `P`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainSet {
    pub k: DMatrix<f64>,
    pub k_bar: DMatrix<f64>,
    pub p: DMatrix<f64>,
}

const DARE_MAX_ITER: usize = 1_000_000;

/// Stabilising DARE solution by Riccati iteration from `P = Q`.
///
/// Returns `(K, P)` with `K = (R + BᵀPB)⁻¹BᵀPA`. Iteration stops once the
/// max-norm change drops below `1e-11` relative to `max(1, ‖P‖)`.
pub fn dare_gain(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let m = b.ncols();
    if a.ncols() != n || b.nrows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(Error::Dimension("DARE data has inconsistent shapes".into()));
    }
    if r.clone().cholesky().is_none() {
        return Err(Error::InvalidInput("R must be positive definite".into()));
    }
    let at = a.transpose();
    let mut p = q.clone();
    for _ in 0..DARE_MAX_ITER {
        let gain = riccati_gain(&p, a, b, r)?;
        let next = q + &at * &p * a - &at * &p * b * &gain;
        let next = (&next + next.transpose()) * 0.5;
        let change = (&next - &p).amax();
        p = next;
        if change < 1e-11 * p.amax().max(1.0) {
            let k = riccati_gain(&p, a, b, r)?;
            let rho = spectral_radius(&(a - b * &k));
            if rho >= 1.0 {
                return Err(Error::Synthesis(format!(
                    "Riccati fixed point is not stabilising (spectral radius {rho})"
                )));
            }
            return Ok((k, p));
        }
        if !p.iter().all(|v| v.is_finite()) {
            break;
        }
    }
    Err(Error::Synthesis(
        "Riccati iteration did not converge; (A, B) may not be stabilisable".into(),
    ))
}

fn riccati_gain(p: &DMatrix<f64>, a: &DMatrix<f64>, b: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let bt = b.transpose();
    let s = r + &bt * p * b;
    let rhs = &bt * p * a;
    s.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Synthesis("R + BᵀPB is not positive definite".into()))
}

/// Solve `P = A_Kᵀ P A_K + S` by a Kronecker-product linear system.
pub fn dlyap(a_k: &DMatrix<f64>, s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a_k.nrows();
    if a_k.ncols() != n || s.shape() != (n, n) {
        return Err(Error::Dimension("Lyapunov data has inconsistent shapes".into()));
    }
    let rho = spectral_radius(a_k);
    if rho >= 1.0 {
        return Err(Error::Synthesis(format!(
            "Lyapunov equation needs a Schur-stable matrix, spectral radius is {rho}"
        )));
    }
    // vec(AᵀPA) = (Aᵀ ⊗ Aᵀ) vec(P) for column-major vec.
    let at = a_k.transpose();
    let kron = at.kronecker(&at);
    let lhs = DMatrix::identity(n * n, n * n) - kron;
    let rhs = nalgebra::DVector::from_column_slice(s.as_slice());
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Synthesis("Lyapunov system is singular".into()))?;
    let p = DMatrix::from_column_slice(n, n, sol.as_slice());
    Ok((&p + p.transpose()) * 0.5)
}

/// Terminal cost `P = (A − BK̄)ᵀP(A − BK̄) + Q + K̄ᵀRK̄`.
pub fn dlyap_terminal_cost(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k_bar: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let a_k = a - b * k_bar;
    let s = q + k_bar.transpose() * r * k_bar;
    dlyap(&a_k, &s)
}

/// Max-norm residual of the terminal-cost identity.
pub fn lyapunov_residual(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k_bar: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> f64 {
    let a_k = a - b * k_bar;
    (a_k.transpose() * p * &a_k + q + k_bar.transpose() * r * k_bar - p).amax()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn golden_ratio_riccati() {
        let (k, p) = dare_gain(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0], &dmatrix![1.0]).unwrap();
        let phi = (1.0 + 5f64.sqrt()) / 2.0;
        assert!((p[(0, 0)] - phi).abs() < 1e-9);
        assert!((k[(0, 0)] - phi / (1.0 + phi)).abs() < 1e-9);
    }

    #[test]
    fn deadbeat_needs_no_feedback() {
        let (k, p) = dare_gain(&dmatrix![0.0], &dmatrix![1.0], &dmatrix![3.0], &dmatrix![2.0]).unwrap();
        assert!(k[(0, 0)].abs() < 1e-15);
        assert!((p[(0, 0)] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn unstabilisable_pair_fails() {
        let a = dmatrix![2.0, 0.0; 0.0, 0.5];
        let b = dmatrix![0.0; 1.0];
        assert!(dare_gain(&a, &b, &DMatrix::identity(2, 2), &dmatrix![1.0]).is_err());
    }

    #[test]
    fn geometric_series_lyapunov() {
        // a − b·k̄ = 0.5 and q + k̄²r = 1 give p = 1/(1 − 0.25).
        let p = dlyap_terminal_cost(
            &dmatrix![1.0],
            &dmatrix![1.0],
            &dmatrix![0.5],
            &dmatrix![0.75],
            &dmatrix![1.0],
        )
        .unwrap();
        assert!((p[(0, 0)] - 4.0 / 3.0).abs() < 1e-10);
    }

    #[test]
    fn one_step_lyapunov() {
        let a = dmatrix![1.0, 0.0; 0.0, 1.0];
        let b = DMatrix::identity(2, 2);
        let k_bar = a.clone();
        let q = dmatrix![2.0, 0.0; 0.0, 1.0];
        let r = dmatrix![0.5, 0.0; 0.0, 0.5];
        let p = dlyap_terminal_cost(&a, &b, &k_bar, &q, &r).unwrap();
        assert!((p - (&q + k_bar.transpose() * &r * &k_bar)).amax() < 1e-14);
    }

    #[test]
    fn riccati_and_lyapunov_agree() {
        let a = dmatrix![1.1, 0.3; 0.0, 0.9];
        let b = dmatrix![0.0; 1.0];
        let q = dmatrix![2.0, 0.0; 0.0, 1.0];
        let r = dmatrix![0.3];
        let (k, p_lqr) = dare_gain(&a, &b, &q, &r).unwrap();
        let p = dlyap_terminal_cost(&a, &b, &k, &q, &r).unwrap();
        assert!((p - p_lqr).amax() < 1e-7);
    }

    #[test]
    fn unstable_closed_loop_rejected() {
        assert!(dlyap(&dmatrix![1.5], &dmatrix![1.0]).is_err());
    }
}
