use nalgebra::{DVector, Matrix2, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

use super::polytope::{BoxSet, HPolytope};
use crate::error::{Error, Result};

/// Approximately uniform points from a bounded polytope by hit-and-run,
/// started at the Chebyshev center.
pub fn hit_and_run<R: Rng + ?Sized>(
    p: &HPolytope,
    count: usize,
    thinning: usize,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    let (mut x, radius) = p.chebyshev_center()?;
    if radius <= 0.0 {
        return Err(Error::EmptySet("cannot sample a polytope without interior".into()));
    }
    let n = p.dim();
    let h = p.normals();
    let off = p.offsets();
    let mut out = Vec::with_capacity(count);
    let steps = thinning.max(1);
    let burn_in = 10 * n * steps;
    let mut taken = 0usize;
    while out.len() < count {
        let dir: DVector<f64> = DVector::from_fn(n, |_, _| rng.sample(StandardNormal));
        let hd = h * &dir;
        let slack = off - h * &x;
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..p.n_rows() {
            let s = slack[i].max(0.0);
            if hd[i] > 1e-14 {
                hi = hi.min(s / hd[i]);
            } else if hd[i] < -1e-14 {
                lo = lo.max(s / hd[i]);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::UnboundedSet);
        }
        let t = lo + (hi - lo) * rng.random::<f64>();
        x += &dir * t;
        taken += 1;
        if taken > burn_in && taken.is_multiple_of(steps) {
            out.push(x.clone());
        }
    }
    Ok(out)
}

/// Uniform sample from a box.
pub fn sample_box<R: Rng + ?Sized>(b: &BoxSet, rng: &mut R) -> DVector<f64> {
    DVector::from_fn(b.dim(), |i, _| {
        b.center[i] + b.half_widths[i] * (2.0 * rng.random::<f64>() - 1.0)
    })
}

/// Vertices of a bounded 2-D polytope by intersecting every pair of rows.
///
/// Quadratic in the number of rows; intended as a brute-force reference.
pub fn vertices_2d(p: &HPolytope, tol: f64) -> Result<Vec<Vector2<f64>>> {
    if p.dim() != 2 {
        return Err(Error::Dimension("vertex enumeration is only provided in 2-D".into()));
    }
    let h = p.normals();
    let off = p.offsets();
    let mut verts: Vec<Vector2<f64>> = Vec::new();
    for i in 0..p.n_rows() {
        for j in (i + 1)..p.n_rows() {
            let m = Matrix2::new(h[(i, 0)], h[(i, 1)], h[(j, 0)], h[(j, 1)]);
            let Some(inv) = m.try_inverse() else { continue };
            let v = inv * Vector2::new(off[i], off[j]);
            let x = DVector::from_column_slice(v.as_slice());
            if p.contains(&x, tol) && !verts.iter().any(|w| (w - v).amax() < tol) {
                verts.push(v);
            }
        }
    }
    Ok(verts)
}
