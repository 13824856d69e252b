use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optimization::{solve_parts, Parts, SolveStatus, Tolerances};

/// Tolerance used for LPs that back set operations.
pub const LP_TOL: f64 = 1e-9;

/// Default tolerance for membership and inclusion tests.
pub const GEOM_TOL: f64 = 1e-8;

/// `{x : Hx ≤ h}`.
///
/// Values are immutable; the emptiness flag is decided by one LP on first
/// request and cached.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "PolytopeRepr", into = "PolytopeRepr")]
pub struct HPolytope {
    h_mat: DMatrix<f64>,
    h_vec: DVector<f64>,
    empty: OnceLock<bool>,
}

#[derive(Serialize, Deserialize)]
struct PolytopeRepr {
    #[serde(rename = "H")]
    h_mat: Vec<Vec<f64>>,
    h: Vec<f64>,
}

impl TryFrom<PolytopeRepr> for HPolytope {
    type Error = Error;

    fn try_from(r: PolytopeRepr) -> Result<Self> {
        let m = r.h_mat.len();
        let n = r.h_mat.first().map_or(0, Vec::len);
        if r.h_mat.iter().any(|row| row.len() != n) {
            return Err(Error::Dimension("ragged polytope matrix".into()));
        }
        let flat: Vec<f64> = r.h_mat.into_iter().flatten().collect();
        HPolytope::new(DMatrix::from_row_slice(m, n, &flat), DVector::from_vec(r.h))
    }
}

impl From<HPolytope> for PolytopeRepr {
    fn from(p: HPolytope) -> Self {
        PolytopeRepr {
            h_mat: p.h_mat.row_iter().map(|row| row.iter().copied().collect()).collect(),
            h: p.h_vec.iter().copied().collect(),
        }
    }
}

impl PartialEq for HPolytope {
    fn eq(&self, other: &Self) -> bool {
        self.h_mat == other.h_mat && self.h_vec == other.h_vec
    }
}

impl HPolytope {
    pub fn new(h_mat: DMatrix<f64>, h_vec: DVector<f64>) -> Result<Self> {
        let (m, n) = h_mat.shape();
        if m == 0 || n == 0 {
            return Err(Error::InvalidInput(format!(
                "polytope needs at least one row and column, got {m}x{n}"
            )));
        }
        if h_vec.len() != m {
            return Err(Error::Dimension(format!(
                "polytope has {m} rows but {} offsets",
                h_vec.len()
            )));
        }
        if h_mat.iter().chain(h_vec.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("polytope data contains non-finite entries".into()));
        }
        if let Some(i) = (0..m).find(|&i| h_mat.row(i).amax() == 0.0) {
            return Err(Error::InvalidInput(format!("polytope row {i} is all zero")));
        }
        Ok(HPolytope {
            h_mat,
            h_vec,
            empty: OnceLock::new(),
        })
    }

    /// Axis-aligned box `|x_i − c_i| ≤ r_i` with rows `+e_i, −e_i` interleaved.
    pub fn from_box(center: &DVector<f64>, half_widths: &DVector<f64>) -> Result<Self> {
        BoxSet::new(center.clone(), half_widths.clone())?.to_polytope()
    }

    /// Symmetric box centered at the origin.
    pub fn symmetric_box(half_widths: &[f64]) -> Result<Self> {
        let n = half_widths.len();
        Self::from_box(&DVector::zeros(n), &DVector::from_column_slice(half_widths))
    }

    pub fn dim(&self) -> usize {
        self.h_mat.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.h_mat.nrows()
    }

    pub fn normals(&self) -> &DMatrix<f64> {
        &self.h_mat
    }

    pub fn offsets(&self) -> &DVector<f64> {
        &self.h_vec
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.h_mat.row(i).transpose()
    }

    /// `max_{x∈P} dᵀx`.
    pub fn support(&self, d: &DVector<f64>) -> Result<f64> {
        Ok(self.support_point(d)?.0)
    }

    /// Support value together with a maximiser.
    pub fn support_point(&self, d: &DVector<f64>) -> Result<(f64, DVector<f64>)> {
        if d.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "direction has length {} for a polytope in R^{}",
                d.len(),
                self.dim()
            )));
        }
        let no_eq = DMatrix::zeros(0, self.dim());
        let no_rhs = DVector::zeros(0);
        let status = solve_parts(
            Parts {
                c: d,
                a_ineq: &self.h_mat,
                b_ineq: &self.h_vec,
                a_eq: &no_eq,
                b_eq: &no_rhs,
            },
            LP_TOL,
            Tolerances::default().max_iter,
        )?;
        match status {
            SolveStatus::Optimal(opt) => Ok((opt.value, opt.x)),
            SolveStatus::Infeasible => Err(Error::EmptySet("support of an empty polytope".into())),
            SolveStatus::Unbounded => Err(Error::UnboundedSet),
            SolveStatus::MaxIterations => Err(Error::Solver("support LP hit the iteration cap".into())),
        }
    }

    pub fn is_empty(&self) -> bool {
        *self.empty.get_or_init(|| {
            let zero = DVector::zeros(self.dim());
            matches!(self.support(&zero), Err(Error::EmptySet(_)))
        })
    }

    /// Finite support in ±each axis direction.
    pub fn is_bounded(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| {
            let mut d = DVector::zeros(n);
            d[i] = 1.0;
            let up = self.support(&d);
            d[i] = -1.0;
            let down = self.support(&d);
            up.is_ok() && down.is_ok()
        })
    }

    /// `Hx ≤ h + tol` componentwise.
    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        assert_eq!(x.len(), self.dim(), "point dimension does not match polytope");
        let hx = &self.h_mat * x;
        hx.iter().zip(self.h_vec.iter()).all(|(a, b)| *a <= b + tol)
    }

    /// Largest row violation `max_i (H_i x − h_i)`; non-positive inside.
    pub fn violation(&self, x: &DVector<f64>) -> f64 {
        let hx = &self.h_mat * x;
        hx.iter()
            .zip(self.h_vec.iter())
            .map(|(a, b)| a - b)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// `{x : Hx ≤ λh}`.
    pub fn scaled(&self, lambda: f64) -> HPolytope {
        HPolytope {
            h_mat: self.h_mat.clone(),
            h_vec: &self.h_vec * lambda,
            empty: OnceLock::new(),
        }
    }

    pub fn with_offsets(&self, h_vec: DVector<f64>) -> Result<HPolytope> {
        HPolytope::new(self.h_mat.clone(), h_vec)
    }

    pub fn intersect(&self, other: &HPolytope) -> Result<HPolytope> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension("intersecting polytopes of different dimension".into()));
        }
        let mut h_mat = DMatrix::zeros(self.n_rows() + other.n_rows(), self.dim());
        h_mat.rows_mut(0, self.n_rows()).copy_from(&self.h_mat);
        h_mat.rows_mut(self.n_rows(), other.n_rows()).copy_from(&other.h_mat);
        let mut h_vec = DVector::zeros(self.n_rows() + other.n_rows());
        h_vec.rows_mut(0, self.n_rows()).copy_from(&self.h_vec);
        h_vec.rows_mut(self.n_rows(), other.n_rows()).copy_from(&other.h_vec);
        HPolytope::new(h_mat, h_vec)
    }

    /// Preimage `{y : M y ∈ P}`.
    pub fn preimage(&self, m: &DMatrix<f64>) -> Result<HPolytope> {
        if m.nrows() != self.dim() {
            return Err(Error::Dimension("preimage map has the wrong output dimension".into()));
        }
        let h_mat = &self.h_mat * m;
        // Rows that vanish under the map are constant constraints.
        let zero = 1e-12 * self.h_mat.amax().max(1.0) * m.amax().max(1.0);
        let keep: Vec<usize> = (0..h_mat.nrows()).filter(|&i| h_mat.row(i).amax() > zero).collect();
        if let Some(i) = (0..h_mat.nrows()).find(|&i| h_mat.row(i).amax() <= zero && self.h_vec[i] < -zero) {
            return Err(Error::EmptySet(format!("row {i} becomes 0 ≤ {}", self.h_vec[i])));
        }
        HPolytope::new(h_mat.select_rows(&keep), self.h_vec.select_rows(&keep))
    }

    /// Center and radius of the largest inscribed Euclidean ball.
    pub fn chebyshev_center(&self) -> Result<(DVector<f64>, f64)> {
        let n = self.dim();
        let m = self.n_rows();
        let mut a = DMatrix::zeros(m + 1, n + 1);
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] = self.h_mat[(i, j)];
            }
            a[(i, n)] = self.h_mat.row(i).norm();
        }
        // Cap the radius so unbounded sets still give an answer.
        a[(m, n)] = 1.0;
        let mut b = DVector::zeros(m + 1);
        b.rows_mut(0, m).copy_from(&self.h_vec);
        b[m] = 1e6;
        let mut c = DVector::zeros(n + 1);
        c[n] = 1.0;
        let no_eq = DMatrix::zeros(0, n + 1);
        let no_rhs = DVector::zeros(0);
        let status = solve_parts(
            Parts {
                c: &c,
                a_ineq: &a,
                b_ineq: &b,
                a_eq: &no_eq,
                b_eq: &no_rhs,
            },
            LP_TOL,
            Tolerances::default().max_iter,
        )?;
        match status {
            SolveStatus::Optimal(opt) if opt.x[n] >= -LP_TOL => Ok((opt.x.rows(0, n).into_owned(), opt.x[n].max(0.0))),
            SolveStatus::Optimal(_) | SolveStatus::Infeasible => {
                Err(Error::EmptySet("polytope has no interior point".into()))
            }
            SolveStatus::Unbounded => Err(Error::UnboundedSet),
            SolveStatus::MaxIterations => Err(Error::Solver("Chebyshev LP hit the iteration cap".into())),
        }
    }

    /// Drop rows whose maximum over the remaining rows does not exceed their
    /// offset by more than `tol`. Row order of survivors is preserved.
    pub fn remove_redundant(&self, tol: f64) -> Result<HPolytope> {
        let mut keep: Vec<usize> = (0..self.n_rows()).collect();
        let mut i = 0;
        while i < keep.len() {
            let row = keep[i];
            let others: Vec<usize> = keep.iter().copied().filter(|&r| r != row).collect();
            if others.is_empty() {
                break;
            }
            let sub = HPolytope::new(self.h_mat.select_rows(&others), self.h_vec.select_rows(&others))?;
            match sub.support(&self.row(row)) {
                Ok(v) if v <= self.h_vec[row] + tol => {
                    keep.remove(i);
                }
                Ok(_) | Err(Error::UnboundedSet) => i += 1,
                Err(e) => return Err(e),
            }
        }
        HPolytope::new(self.h_mat.select_rows(&keep), self.h_vec.select_rows(&keep))
    }
}

/// Axis-aligned box `{c + r ∘ s : |s_i| ≤ 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    pub center: DVector<f64>,
    pub half_widths: DVector<f64>,
}

impl BoxSet {
    pub fn new(center: DVector<f64>, half_widths: DVector<f64>) -> Result<Self> {
        if center.len() != half_widths.len() || center.is_empty() {
            return Err(Error::Dimension("box center and half widths differ in length".into()));
        }
        if half_widths.iter().any(|&r| !(r >= 0.0) || !r.is_finite()) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "box half widths must be finite and nonnegative".into(),
            ));
        }
        Ok(BoxSet { center, half_widths })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        let n = half_widths.len();
        BoxSet::new(DVector::zeros(n), DVector::from_column_slice(half_widths))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn to_polytope(&self) -> Result<HPolytope> {
        let n = self.dim();
        let mut h_mat = DMatrix::zeros(2 * n, n);
        let mut h_vec = DVector::zeros(2 * n);
        for i in 0..n {
            h_mat[(2 * i, i)] = 1.0;
            h_mat[(2 * i + 1, i)] = -1.0;
            h_vec[2 * i] = self.center[i] + self.half_widths[i];
            h_vec[2 * i + 1] = -self.center[i] + self.half_widths[i];
        }
        HPolytope::new(h_mat, h_vec)
    }

    pub fn support(&self, d: &DVector<f64>) -> f64 {
        d.dot(&self.center) + d.abs().dot(&self.half_widths)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> bool {
        (0..self.dim()).all(|i| (x[i] - self.center[i]).abs() <= self.half_widths[i] + tol)
    }

    pub fn scaled(&self, factor: f64) -> BoxSet {
        BoxSet {
            center: self.center.clone(),
            half_widths: &self.half_widths * factor,
        }
    }
}
