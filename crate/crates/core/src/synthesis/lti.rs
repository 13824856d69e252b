use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Discrete-time `x⁺ = Ax + Bu`, `y = Cx`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtiModel {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub sampling_time: f64,
}

impl LtiModel {
    /// Model with full-state output `C = I`.
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, sampling_time: f64) -> Result<Self> {
        let n = a.nrows();
        Self::with_output(a, b, DMatrix::identity(n, n), sampling_time)
    }

    pub fn with_output(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, sampling_time: f64) -> Result<Self> {
        let model = LtiModel { a, b, c, sampling_time };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.a.nrows();
        if n == 0 || self.a.ncols() != n || self.b.nrows() != n || self.b.ncols() == 0 || self.c.ncols() != n {
            return Err(Error::Dimension(format!(
                "inconsistent model: A {:?}, B {:?}, C {:?}",
                self.a.shape(),
                self.b.shape(),
                self.c.shape()
            )));
        }
        if !(self.sampling_time > 0.0) {
            return Err(Error::InvalidInput("sampling time must be positive".into()));
        }
        Ok(())
    }

    pub fn nx(&self) -> usize {
        self.a.nrows()
    }

    pub fn nu(&self) -> usize {
        self.b.ncols()
    }

    /// `A − BK`.
    pub fn closed_loop(&self, k: &DMatrix<f64>) -> DMatrix<f64> {
        &self.a - &self.b * k
    }
}

/// Zero-order-hold discretisation through the exponential of `[[A_c, B_c], [0, 0]]·Ts`.
pub fn zoh_discretize(a_c: &DMatrix<f64>, b_c: &DMatrix<f64>, ts: f64) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let n = a_c.nrows();
    let m = b_c.ncols();
    if a_c.ncols() != n || b_c.nrows() != n {
        return Err(Error::Dimension("continuous-time matrices are inconsistent".into()));
    }
    if !(ts > 0.0) || a_c.iter().chain(b_c.iter()).any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(
            "discretisation needs finite data and Ts > 0".into(),
        ));
    }
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a_c * ts));
    aug.view_mut((0, n), (n, m)).copy_from(&(b_c * ts));
    let e = aug.exp();
    Ok((e.view((0, 0), (n, n)).into_owned(), e.view((0, n), (n, m)).into_owned()))
}

pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<Complex<f64>> {
    a.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Rank of the observability matrix of `(C, A)`.
pub fn observability_rank(c: &DMatrix<f64>, a: &DMatrix<f64>) -> usize {
    let n = a.nrows();
    let p = c.nrows();
    let mut obs = DMatrix::zeros(p * n, n);
    let mut block = c.clone();
    for i in 0..n {
        obs.view_mut((i * p, 0), (p, n)).copy_from(&block);
        block = &block * a;
    }
    let scale = obs.amax().max(1.0);
    obs.svd(false, false).rank(1e-10 * scale)
}
