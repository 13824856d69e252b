use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{
    inclusion_check, pontryagin_diff, push_unique_direction, template_outer, HPolytope, LinearMap, MinkowskiSum,
    SupportFunction, GEOM_TOL, LP_TOL,
};

use super::lti::spectral_radius;

/// Outer RPI approximation together with iteration diagnostics.
#[derive(Debug, Clone)]
pub struct RpiOutcome {
    pub set: HPolytope,
    pub iterations: usize,
    /// Largest `support(A_K Z ⊕ W, d) − h(d)` over the template; ≤ tol.
    pub rpi_margin: f64,
}

/// Template fixed point `h(d) = support(Z, A_Kᵀd) + support(W, d)`.
///
/// Starts from the template hull of `W` and iterates until the largest
/// offset change is below `tol`. Offsets grow monotonically; if they exceed
/// `1e6` times their initial scale the template cannot carry an invariant set
/// and an error is returned.
pub fn rpi_outer<W: SupportFunction + ?Sized>(
    a_k: &DMatrix<f64>,
    w: &W,
    directions: &[DVector<f64>],
    tol: f64,
    max_iter: usize,
) -> Result<RpiOutcome> {
    let n = a_k.nrows();
    if a_k.ncols() != n || w.dim() != n {
        return Err(Error::Dimension("RPI data has inconsistent dimensions".into()));
    }
    let rho = spectral_radius(a_k);
    if rho >= 1.0 {
        return Err(Error::Synthesis(format!(
            "closed loop is not Schur stable (spectral radius {rho})"
        )));
    }
    let w_support: Vec<f64> = directions.iter().map(|d| w.support(d)).collect::<Result<_>>()?;
    let mut z = template_outer(|d| w.support(d), directions)?;
    let scale = z.offsets().amax().max(f64::MIN_POSITIVE);
    let mapped: Vec<DVector<f64>> = directions.iter().map(|d| a_k.transpose() * d).collect();
    for it in 1..=max_iter {
        let mut next = DVector::zeros(directions.len());
        for (i, md) in mapped.iter().enumerate() {
            next[i] = z.support(md)? + w_support[i];
        }
        let change = (&next - z.offsets()).amax();
        z = z.with_offsets(next)?;
        if z.offsets().amax() > 1e6 * scale {
            return Err(Error::Synthesis(format!(
                "RPI iteration diverges after {it} steps; the direction template is not invariant-compatible"
            )));
        }
        if change < tol {
            let image = LinearMap {
                map: a_k.clone(),
                set: &z,
            };
            let sum = MinkowskiSum { a: &image, b: w };
            let report = inclusion_check(&sum, &z, GEOM_TOL)?;
            if !report.holds {
                return Err(Error::Synthesis(format!(
                    "RPI verification failed by {:e} on row {:?}",
                    report.worst_margin, report.worst_row
                )));
            }
            return Ok(RpiOutcome {
                set: z,
                iterations: it,
                rpi_margin: report.worst_margin,
            });
        }
    }
    Err(Error::Synthesis(format!(
        "RPI iteration did not converge in {max_iter} steps"
    )))
}

/// `±e_i`, the rows of `H_x`, and the rows of `H_u·(−K)`.
pub fn default_directions(x: &HPolytope, u: &HPolytope, k: &DMatrix<f64>) -> Vec<DVector<f64>> {
    let n = x.dim();
    let mut dirs = crate::geometry::axis_directions(n);
    for i in 0..x.n_rows() {
        push_unique_direction(&mut dirs, x.row(i));
    }
    let hk = -(u.normals() * k);
    for i in 0..hk.nrows() {
        push_unique_direction(&mut dirs, hk.row(i).transpose());
    }
    dirs
}

/// Extend a template with normalised `(A_Kᵀ)^i d` for `i = 1..=powers`.
///
/// Closing the template under the transposed closed-loop map is what makes
/// the fixed-point iteration converge for lightly damped or strongly coupled
/// dynamics.
pub fn enrich_directions(base: &[DVector<f64>], a_k: &DMatrix<f64>, powers: usize) -> Vec<DVector<f64>> {
    let mut dirs = base.to_vec();
    let at = a_k.transpose();
    let mut layer: Vec<DVector<f64>> = base.to_vec();
    for _ in 0..powers {
        layer = layer
            .iter()
            .map(|d| {
                let v = &at * d;
                let nrm = v.norm();
                if nrm > 0.0 {
                    v / nrm
                } else {
                    v
                }
            })
            .collect();
        for d in &layer {
            push_unique_direction(&mut dirs, d.clone());
        }
    }
    dirs
}

/// `X_c = X ⊖ Z` and `U_c = U ⊖ (−K)Z`. Both must be nonempty.
pub fn tighten(x: &HPolytope, u: &HPolytope, z: &HPolytope, k: &DMatrix<f64>) -> Result<(HPolytope, HPolytope)> {
    let xc = pontryagin_diff(x, z)?;
    if xc.empty {
        return Err(Error::Synthesis(format!(
            "tightened state set is empty (first nonpositive width at row {:?})",
            first_collapsed_row(&xc.set)
        )));
    }
    let kz = LinearMap { map: -k, set: z };
    let uc = pontryagin_diff(u, &kz)?;
    if uc.empty {
        return Err(Error::Synthesis(format!(
            "tightened input set is empty (first nonpositive width at row {:?})",
            first_collapsed_row(&uc.set)
        )));
    }
    Ok((xc.set, uc.set))
}

/// Row with the smallest tightened offset, the usual culprit for emptiness.
fn first_collapsed_row(tightened: &HPolytope) -> Option<usize> {
    tightened
        .offsets()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
}

/// `[[A − BK̄, BK̄, B], [0, I, 0], [0, 0, I]]` on `(x_n, x̄, ū)`.
pub fn augmented_dynamics(a: &DMatrix<f64>, b: &DMatrix<f64>, k_bar: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let dim = 2 * n + m;
    let mut aa = DMatrix::zeros(dim, dim);
    aa.view_mut((0, 0), (n, n)).copy_from(&(a - b * k_bar));
    aa.view_mut((0, n), (n, n)).copy_from(&(b * k_bar));
    aa.view_mut((0, 2 * n), (n, m)).copy_from(b);
    aa.view_mut((n, n), (n + m, n + m)).fill_with_identity();
    aa
}

/// Terminal set and the determination index found by the iteration.
#[derive(Debug, Clone)]
pub struct AdmissibleOutcome {
    pub set: HPolytope,
    pub determination_index: usize,
}

/// Options for the maximal admissible set computation.
#[derive(Debug, Clone, Copy)]
pub struct AdmissibleOptions {
    pub lambda: f64,
    pub k_max: usize,
    pub redundancy_tol: f64,
    /// Restrict `(x̄, ū)` to steady pairs `(A − I)x̄ + Bū = 0`.
    pub steady_state_rows: bool,
}

impl Default for AdmissibleOptions {
    fn default() -> Self {
        AdmissibleOptions {
            lambda: 0.99,
            k_max: 500,
            redundancy_tol: 1e-9,
            steady_state_rows: true,
        }
    }
}

/// Gilbert–Tan maximal admissible set for the augmented dynamics.
///
/// The base constraints are `x_n ∈ X_c` and `ū − K̄(x_n − x̄) ∈ U_c`, propagated
/// through powers of `A_a` until every new row is redundant. The invariant
/// restrictions `x̄ ∈ λX_c`, `ū ∈ λU_c` (and optionally the steady-state
/// equality as two inequalities) are added once.
pub fn max_admissible_set(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x_c: &HPolytope,
    u_c: &HPolytope,
    k_bar: &DMatrix<f64>,
    opts: AdmissibleOptions,
) -> Result<AdmissibleOutcome> {
    if !(opts.lambda > 0.0 && opts.lambda < 1.0) {
        return Err(Error::InvalidInput(format!(
            "lambda must lie in (0, 1), got {}",
            opts.lambda
        )));
    }
    let n = a.nrows();
    let m = b.ncols();
    let dim = 2 * n + m;
    let a_a = augmented_dynamics(a, b, k_bar);

    // Base rows G x_a ≤ g that get propagated.
    let hx = x_c.normals();
    let hu = u_c.normals();
    let base_rows = hx.nrows() + hu.nrows();
    let mut g = DMatrix::zeros(base_rows, dim);
    let mut gv = DVector::zeros(base_rows);
    g.view_mut((0, 0), (hx.nrows(), n)).copy_from(hx);
    gv.rows_mut(0, hx.nrows()).copy_from(x_c.offsets());
    let hk = hu * k_bar;
    let r0 = hx.nrows();
    g.view_mut((r0, 0), (hu.nrows(), n)).copy_from(&(-&hk));
    g.view_mut((r0, n), (hu.nrows(), n)).copy_from(&hk);
    g.view_mut((r0, 2 * n), (hu.nrows(), m)).copy_from(hu);
    gv.rows_mut(r0, hu.nrows()).copy_from(u_c.offsets());

    // Fixed rows.
    let mut fixed_rows: Vec<(DVector<f64>, f64)> = Vec::new();
    for i in 0..hx.nrows() {
        let mut row = DVector::zeros(dim);
        row.rows_mut(n, n).copy_from(&hx.row(i).transpose());
        fixed_rows.push((row, opts.lambda * x_c.offsets()[i]));
    }
    for i in 0..hu.nrows() {
        let mut row = DVector::zeros(dim);
        row.rows_mut(2 * n, m).copy_from(&hu.row(i).transpose());
        fixed_rows.push((row, opts.lambda * u_c.offsets()[i]));
    }
    if opts.steady_state_rows {
        let ss = steady_state_matrix(a, b);
        for i in 0..n {
            let mut row = DVector::zeros(dim);
            row.rows_mut(n, n + m).copy_from(&ss.row(i).transpose());
            if row.amax() > 0.0 {
                fixed_rows.push((row.clone(), 0.0));
                fixed_rows.push((-row, 0.0));
            }
        }
    }

    let mut rows: Vec<DVector<f64>> = fixed_rows.iter().map(|r| r.0.clone()).collect();
    let mut offs: Vec<f64> = fixed_rows.iter().map(|r| r.1).collect();
    for i in 0..base_rows {
        rows.push(g.row(i).transpose());
        offs.push(gv[i]);
    }

    let mut power = g.clone();
    for t in 0..opts.k_max {
        let current = build(&rows, &offs)?;
        power = &power * &a_a;
        let mut added = 0usize;
        let mut candidates = Vec::new();
        for i in 0..base_rows {
            let row = power.row(i).transpose();
            let value = match current.support(&row) {
                Ok(v) => v,
                Err(Error::UnboundedSet) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            if value > gv[i] + opts.redundancy_tol {
                candidates.push((row, gv[i]));
            }
        }
        if candidates.is_empty() {
            let set = current.remove_redundant(opts.redundancy_tol.max(LP_TOL))?;
            return Ok(AdmissibleOutcome {
                set,
                determination_index: t,
            });
        }
        for (row, off) in candidates {
            rows.push(row);
            offs.push(off);
            added += 1;
        }
        log::debug!("admissible set: power {} added {} rows", t + 1, added);
    }
    Err(Error::Synthesis(format!(
        "maximal admissible set not finitely determined within {} steps",
        opts.k_max
    )))
}

fn build(rows: &[DVector<f64>], offs: &[f64]) -> Result<HPolytope> {
    let dim = rows[0].len();
    let mut h = DMatrix::zeros(rows.len(), dim);
    for (i, r) in rows.iter().enumerate() {
        h.set_row(i, &r.transpose());
    }
    HPolytope::new(h, DVector::from_column_slice(offs))
}

/// `[A − I, B]`, whose kernel is the set of steady pairs `(x̄, ū)`.
pub fn steady_state_matrix(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let mut s = DMatrix::zeros(n, n + m);
    s.view_mut((0, 0), (n, n)).copy_from(&(a - DMatrix::identity(n, n)));
    s.view_mut((0, n), (n, m)).copy_from(b);
    s
}

/// Columns spanning `{(x_n, x̄, ū) : (A − I)x̄ + Bū = 0}`.
pub fn steady_subspace_basis(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let m = b.ncols();
    let s = steady_state_matrix(a, b);
    let mut padded = DMatrix::zeros(n + m, n + m);
    padded.view_mut((0, 0), (n, n + m)).copy_from(&s);
    let svd = padded.svd(false, true);
    let vt = svd.v_t.unwrap();
    let kernel: Vec<usize> = (0..n + m).filter(|&i| svd.singular_values[i] < 1e-10).collect();
    let mut basis = DMatrix::zeros(2 * n + m, n + kernel.len());
    basis.view_mut((0, 0), (n, n)).fill_with_identity();
    for (c, &i) in kernel.iter().enumerate() {
        basis.view_mut((n, n + c), (n + m, 1)).copy_from(&vt.row(i).transpose());
    }
    basis
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{axis_directions, hit_and_run, BoxSet};
    use nalgebra::{dmatrix, dvector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn interval(half: f64) -> HPolytope {
        HPolytope::symmetric_box(&[half]).unwrap()
    }

    #[test]
    fn scalar_mrpi_is_geometric_series() {
        let out = rpi_outer(&dmatrix![0.5], &interval(1.0), &axis_directions(1), 1e-12, 10_000).unwrap();
        assert!((out.set.offsets() - dvector![2.0, 2.0]).amax() < 1e-10);
    }

    #[test]
    fn deadbeat_mrpi_is_w() {
        let out = rpi_outer(&dmatrix![0.0], &interval(1.0), &axis_directions(1), 1e-12, 10).unwrap();
        assert!((out.set.offsets() - dvector![1.0, 1.0]).amax() < 1e-14);
    }

    #[test]
    fn rotation_contraction_contains_trajectories() {
        let th = 30f64.to_radians();
        let a_k = dmatrix![th.cos(), -th.sin(); th.sin(), th.cos()] * 0.5;
        let w = BoxSet::symmetric(&[1.0, 1.0]).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut dirs = axis_directions(2);
        for d in [dvector![s, s], dvector![-s, -s], dvector![s, -s], dvector![-s, s]] {
            dirs.push(d);
        }
        let z = rpi_outer(&a_k, &w, &dirs, 1e-11, 10_000).unwrap().set;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut e = DVector::zeros(2);
        for _ in 0..100_000 {
            let wk = dvector![rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            e = &a_k * e + wk;
            assert!(z.contains(&e, 1e-9));
        }
    }

    #[test]
    fn tightening_examples() {
        let x = interval(5.0);
        let u = interval(3.0);
        let (xc, uc) = tighten(&x, &u, &interval(1.0), &dmatrix![0.0]).unwrap();
        assert!((xc.offsets() - dvector![4.0, 4.0]).amax() < 1e-12);
        assert!((uc.offsets() - u.offsets()).amax() < 1e-12);
        assert!(tighten(&x, &u, &interval(6.0), &dmatrix![0.0]).is_err());
    }

    #[test]
    fn augmented_spectrum() {
        let aa = augmented_dynamics(&dmatrix![1.0], &dmatrix![1.0], &dmatrix![0.5]);
        let mut eig: Vec<f64> = crate::synthesis::eigenvalues(&aa).iter().map(|z| z.re).collect();
        eig.sort_by(f64::total_cmp);
        assert!((eig[0] - 0.5).abs() < 1e-12 && (eig[1] - 1.0).abs() < 1e-12 && (eig[2] - 1.0).abs() < 1e-12);
        // Steady pair is a fixed point.
        let a = dmatrix![0.9, 0.1; 0.0, 0.8];
        let b = dmatrix![0.0; 1.0];
        let kb = dmatrix![0.3, 0.4];
        let aa = augmented_dynamics(&a, &b, &kb);
        let ub = 0.2;
        // (A − I)x̄ + Bū = 0 → x̄₂ = ū/0.2, x̄₁ = x̄₂.
        let x2 = ub / 0.2;
        let xa = dvector![x2, x2, x2, x2, ub];
        assert!((&aa * &xa - &xa).amax() < 1e-12);
    }

    #[test]
    fn scalar_admissible_set_contains_steady_points() {
        // a = 1, b = 1, k̄ = 0.5 gives a − bk̄ = 0.5.
        let a = dmatrix![1.0];
        let b = dmatrix![1.0];
        let kb = dmatrix![0.5];
        let xc = interval(1.0);
        let uc = interval(100.0);
        let out = max_admissible_set(&a, &b, &xc, &uc, &kb, AdmissibleOptions::default()).unwrap();
        assert!(out.determination_index < 50);
        assert!(out.set.contains(&dvector![0.0, 0.0, 0.0], 1e-12));
        // Steady pairs of a = 1 have ū = 0.
        assert!(out.set.contains(&dvector![0.9, 0.9, 0.0], 1e-9));
        assert!(!out.set.contains(&dvector![0.995, 0.995, 0.0], 1e-9));
    }

    #[test]
    fn admissible_set_matches_brute_force_rows() {
        let a = dmatrix![1.0];
        let b = dmatrix![1.0];
        let kb = dmatrix![0.5];
        let xc = interval(1.0);
        let uc = interval(100.0);
        let out = max_admissible_set(&a, &b, &xc, &uc, &kb, AdmissibleOptions::default()).unwrap();
        // Brute force: stack every power up to 50 and compare on samples.
        let aa = augmented_dynamics(&a, &b, &kb);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..2000 {
            let xbar: f64 = rng.random_range(-1.0..1.0);
            let x = dvector![rng.random_range(-1.5..1.5), xbar, 0.0];
            let mut y = x.clone();
            let mut ok = xbar.abs() <= 0.99;
            for _ in 0..=50 {
                ok &= y[0].abs() <= 1.0 + 1e-12 && (y[2] - 0.5 * (y[0] - y[1])).abs() <= 100.0;
                y = &aa * y;
            }
            let dist = out.set.violation(&x);
            if dist.abs() > 1e-9 {
                assert_eq!(ok, dist < 0.0, "disagreement at {x:?}");
            }
        }
    }

    #[test]
    fn admissible_sets_nest_in_lambda() {
        let a = dmatrix![1.0, 0.1; 0.0, 1.0];
        let b = dmatrix![0.0; 0.1];
        let (kb, _) = crate::synthesis::dare_gain(&a, &b, &DMatrix::identity(2, 2), &dmatrix![1.0]).unwrap();
        let xc = HPolytope::symmetric_box(&[1.0, 1.0]).unwrap();
        let uc = interval(2.0);
        let small = max_admissible_set(
            &a,
            &b,
            &xc,
            &uc,
            &kb,
            AdmissibleOptions {
                lambda: 0.5,
                ..Default::default()
            },
        )
        .unwrap()
        .set;
        let big = max_admissible_set(
            &a,
            &b,
            &xc,
            &uc,
            &kb,
            AdmissibleOptions {
                lambda: 0.9,
                ..Default::default()
            },
        )
        .unwrap()
        .set;
        // Project onto (x̄, ū) by sampling the smaller set.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let basis = steady_subspace_basis(&a, &b);
        let reduced = small.preimage(&basis).unwrap();
        let pts = hit_and_run(&reduced, 300, 3, &mut rng).unwrap();
        for p in pts {
            let x = &basis * p;
            assert!(big.contains(&x, 1e-8));
        }
    }
}
