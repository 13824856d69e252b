use nalgebra::{DMatrix, DVector};

use super::polytope::{BoxSet, HPolytope};
use crate::error::{Error, Result};

/// A convex set known through its support function `d ↦ max_{x∈S} dᵀx`.
pub trait SupportFunction {
    fn dim(&self) -> usize;

    fn support(&self, d: &DVector<f64>) -> Result<f64>;

    fn is_empty(&self) -> bool {
        false
    }
}

impl SupportFunction for HPolytope {
    fn dim(&self) -> usize {
        HPolytope::dim(self)
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        HPolytope::support(self, d)
    }

    fn is_empty(&self) -> bool {
        HPolytope::is_empty(self)
    }
}

impl SupportFunction for BoxSet {
    fn dim(&self) -> usize {
        BoxSet::dim(self)
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        Ok(BoxSet::support(self, d))
    }
}

/// `{x}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Singleton(pub DVector<f64>);

impl SupportFunction for Singleton {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        Ok(d.dot(&self.0))
    }
}

/// Image `M·S` of a set under a linear map.
#[derive(Debug, Clone)]
pub struct LinearMap<'a, S: SupportFunction + ?Sized> {
    pub map: DMatrix<f64>,
    pub set: &'a S,
}

impl<S: SupportFunction + ?Sized> SupportFunction for LinearMap<'_, S> {
    fn dim(&self) -> usize {
        self.map.nrows()
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        self.set.support(&(self.map.transpose() * d))
    }

    fn is_empty(&self) -> bool {
        self.set.is_empty()
    }
}

/// Minkowski sum `A ⊕ B`.
#[derive(Debug, Clone)]
pub struct MinkowskiSum<'a, A: SupportFunction + ?Sized, B: SupportFunction + ?Sized> {
    pub a: &'a A,
    pub b: &'a B,
}

impl<A: SupportFunction + ?Sized, B: SupportFunction + ?Sized> SupportFunction for MinkowskiSum<'_, A, B> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn support(&self, d: &DVector<f64>) -> Result<f64> {
        Ok(self.a.support(d)? + self.b.support(d)?)
    }

    fn is_empty(&self) -> bool {
        self.a.is_empty() || self.b.is_empty()
    }
}

/// `max_{x∈P} dᵀx`.
pub fn support(p: &HPolytope, d: &DVector<f64>) -> Result<f64> {
    p.support(d)
}

/// `support(P, d) + support(Q, d)`.
pub fn minkowski_support(p: &HPolytope, q: &HPolytope, d: &DVector<f64>) -> Result<f64> {
    Ok(p.support(d)? + q.support(d)?)
}

/// `Hx ≤ h + tol` componentwise.
pub fn contains_point(p: &HPolytope, x: &DVector<f64>, tol: f64) -> bool {
    p.contains(x, tol)
}

/// Result of `P ⊖ Q`; the set may be empty, in which case the caller decides.
#[derive(Debug, Clone)]
pub struct PontryaginDiff {
    pub set: HPolytope,
    pub empty: bool,
}

/// `P ⊖ Q = {x : x + q ∈ P ∀ q ∈ Q}` computed row by row with support LPs.
pub fn pontryagin_diff<Q: SupportFunction + ?Sized>(p: &HPolytope, q: &Q) -> Result<PontryaginDiff> {
    if p.dim() != q.dim() {
        return Err(Error::Dimension(
            "Pontryagin difference of sets in different spaces".into(),
        ));
    }
    let mut h = p.offsets().clone();
    for i in 0..p.n_rows() {
        h[i] -= q.support(&p.row(i))?;
    }
    let set = p.with_offsets(h)?;
    let empty = set.is_empty();
    Ok(PontryaginDiff { set, empty })
}

/// Outcome of an inclusion test `S ⊆ Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct InclusionReport {
    pub holds: bool,
    /// True when `S` is empty and the answer is vacuous.
    pub vacuous: bool,
    /// Largest `support(S, H_i) − h_i` over the rows of `Q`.
    pub worst_margin: f64,
    pub worst_row: Option<usize>,
}

/// `S ⊆ Q` iff `support(S, H_{Q,i}) ≤ h_{Q,i} + tol` for every row.
pub fn inclusion_check<S: SupportFunction + ?Sized>(s: &S, q: &HPolytope, tol: f64) -> Result<InclusionReport> {
    if s.dim() != q.dim() {
        return Err(Error::Dimension(
            "inclusion test between sets in different spaces".into(),
        ));
    }
    if s.is_empty() {
        log::warn!("inclusion_check on an empty set is vacuously true");
        return Ok(InclusionReport {
            holds: true,
            vacuous: true,
            worst_margin: f64::NEG_INFINITY,
            worst_row: None,
        });
    }
    let mut worst = f64::NEG_INFINITY;
    let mut worst_row = None;
    for i in 0..q.n_rows() {
        let margin = match s.support(&q.row(i)) {
            Ok(v) => v - q.offsets()[i],
            Err(Error::UnboundedSet) => f64::INFINITY,
            Err(e) => return Err(e),
        };
        if margin > worst {
            worst = margin;
            worst_row = Some(i);
        }
    }
    Ok(InclusionReport {
        holds: worst <= tol,
        vacuous: false,
        worst_margin: worst,
        worst_row,
    })
}

/// `{x : dᵀx ≤ σ(d), d ∈ D}` for a support function `σ`.
pub fn template_outer<F>(support_fn: F, directions: &[DVector<f64>]) -> Result<HPolytope>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let Some(first) = directions.first() else {
        return Err(Error::InvalidInput("empty direction template".into()));
    };
    let n = first.len();
    if directions.iter().any(|d| d.len() != n || d.amax() == 0.0) {
        return Err(Error::InvalidInput(
            "template directions must be nonzero and of equal length".into(),
        ));
    }
    let mut h_mat = DMatrix::zeros(directions.len(), n);
    for (i, d) in directions.iter().enumerate() {
        h_mat.set_row(i, &d.transpose());
    }
    if h_mat.clone().svd(false, false).rank(1e-12) < n {
        return Err(Error::InvalidInput("template directions do not span the space".into()));
    }
    let offsets = directions.iter().map(&support_fn).collect::<Result<Vec<f64>>>()?;
    let p = HPolytope::new(h_mat, DVector::from_vec(offsets))?;
    Ok(p)
}

/// `±e_i` for `i < n`.
pub fn axis_directions(n: usize) -> Vec<DVector<f64>> {
    let mut out = Vec::with_capacity(2 * n);
    for i in 0..n {
        let mut d = DVector::zeros(n);
        d[i] = 1.0;
        out.push(d.clone());
        out.push(-d);
    }
    out
}

/// Append `d` unless a positive multiple is already present.
pub fn push_unique_direction(dirs: &mut Vec<DVector<f64>>, d: DVector<f64>) {
    let norm = d.norm();
    if norm == 0.0 {
        return;
    }
    let unit = &d / norm;
    let dup = dirs.iter().any(|e| {
        let en = e.norm();
        en > 0.0 && (&unit - e / en).amax() < 1e-9
    });
    if !dup {
        dirs.push(d);
    }
}
