//! Remote tracking MPC over explicit states, and the packets it emits.
//!
//! Decision vector layout: `u(0..N−1)`, `x(0..N)`, `x̄`, `ū`. The dynamics,
//! the steady-state condition and (when pinned) the initial state are
//! equalities; everything else is a polytopic inequality. Two prepared QPs
//! are kept: one with `x(0) = x̂` and, for the extended variant, one where
//! `x(0)` is free but must keep the true state inside its tube.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::HPolytope;
use crate::optimization::{PreparedQp, SolveStatus};
use crate::synthesis::{observability_rank, GainSet, LtiModel, SetSuite, Synthesis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MpcVariant {
    /// Initial state pinned to the nominal estimate.
    Rt,
    /// Initial state may be reset around the measured state.
    Ert,
}

#[derive(Debug, Clone)]
pub struct MpcConfig {
    pub model: LtiModel,
    pub horizon: usize,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    /// Weight of the offset `‖x̄ − x_r‖²`.
    pub t: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub gains: GainSet,
    pub sets: SetSuite,
    pub variant: MpcVariant,
    /// Feasibility and stationarity tolerance handed to the QP.
    pub tol: f64,
    pub max_iter: usize,
}

impl MpcConfig {
    pub fn from_synthesis(syn: &Synthesis, horizon: usize, t: DMatrix<f64>, variant: MpcVariant) -> Self {
        MpcConfig {
            model: syn.spec.model.clone(),
            horizon,
            q: syn.spec.q.clone(),
            r: syn.spec.r.clone(),
            t,
            p: syn.gains.p.clone(),
            gains: syn.gains.clone(),
            sets: syn.sets.clone(),
            variant,
            tol: 1e-7,
            max_iter: 50_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let n = self.model.nx();
        let m = self.model.nu();
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        if self.q.shape() != (n, n) || self.t.shape() != (n, n) || self.p.shape() != (n, n) || self.r.shape() != (m, m)
        {
            return Err(Error::Dimension("cost matrices do not match the model".into()));
        }
        for (name, w) in [("Q", &self.q), ("R", &self.r), ("T", &self.t)] {
            if (w - w.transpose()).amax() > 1e-10 * w.amax().max(1.0) || w.clone().cholesky().is_none() {
                return Err(Error::InvalidInput(format!(
                    "{name} must be symmetric positive definite"
                )));
            }
        }
        let q_half = self
            .q
            .clone()
            .cholesky()
            .map(|c| c.l().transpose())
            .ok_or_else(|| Error::InvalidInput("Q must be positive definite".into()))?;
        if observability_rank(&q_half, &self.model.a) < n {
            return Err(Error::InvalidInput("(Q^½, A) is not observable".into()));
        }
        let s = &self.sets;
        if s.x_c.dim() != n || s.u_c.dim() != m || s.z_k.dim() != n || s.x_f.dim() != 2 * n + m {
            return Err(Error::Dimension("set suite does not match the model".into()));
        }
        if s.w_support_on_z.len() != s.z_k.n_rows() {
            return Err(Error::Dimension(
                "precomputed disturbance supports do not match Z_K".into(),
            ));
        }
        if s.x_c.is_empty() || s.u_c.is_empty() || s.x_f.is_empty() {
            return Err(Error::EmptySet("tightened or terminal constraints are empty".into()));
        }
        Ok(())
    }
}

/// Optimal nominal plan.
#[derive(Debug, Clone, PartialEq)]
pub struct MpcSolution {
    pub u_traj: Vec<DVector<f64>>,
    pub x_traj: Vec<DVector<f64>>,
    pub x_bar: DVector<f64>,
    pub u_bar: DVector<f64>,
    /// Objective including the constant `x_rᵀTx_r`.
    pub cost: f64,
    pub iterations: usize,
}

/// Result of one MPC solve.
#[derive(Debug, Clone, PartialEq)]
pub enum MpcOutcome {
    Optimal(MpcSolution),
    Infeasible,
    MaxIterations,
}

impl MpcOutcome {
    pub fn solution(&self) -> Option<&MpcSolution> {
        match self {
            MpcOutcome::Optimal(s) => Some(s),
            _ => None,
        }
    }

    pub fn tag(&self) -> &'static str {
        match self {
            MpcOutcome::Optimal(_) => "optimal",
            MpcOutcome::Infeasible => "infeasible",
            MpcOutcome::MaxIterations => "max_iterations",
        }
    }
}

/// Controller-to-plant packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerPacket {
    pub u_traj: Vec<DVector<f64>>,
    /// `ū* + K̄x̄*`.
    pub steady_input_affine: DVector<f64>,
    /// Last plant index seen by the controller, `−1` before any.
    pub q: i64,
    pub k_sent: i64,
    pub x0_opt: Option<DVector<f64>>,
}

impl ControllerPacket {
    /// Input for time `k` when this packet is active and the nominal state is `x_n`.
    pub fn input_at(&self, k: i64, x_n: &DVector<f64>, k_bar: &DMatrix<f64>) -> Result<DVector<f64>> {
        let offset = k - self.k_sent;
        if offset < 0 {
            return Err(Error::Protocol(format!(
                "packet sent at {} cannot drive step {k}",
                self.k_sent
            )));
        }
        match self.u_traj.get(offset as usize) {
            Some(u) => Ok(u.clone()),
            None => Ok(&self.steady_input_affine - k_bar * x_n),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u_traj
            .iter()
            .chain(std::iter::once(&self.steady_input_affine))
            .chain(self.x0_opt.iter())
            .all(|v| v.iter().all(|x| x.is_finite()))
    }
}

/// Packet for a solution computed at step `k`.
pub fn make_controller_packet(
    outcome: &MpcOutcome,
    q_k: i64,
    k: i64,
    variant: MpcVariant,
    k_bar: &DMatrix<f64>,
) -> Result<ControllerPacket> {
    let sol = outcome
        .solution()
        .ok_or_else(|| Error::Protocol(format!("no packet from a {} solve", outcome.tag())))?;
    if q_k > k {
        return Err(Error::Protocol(format!("q = {q_k} is ahead of send time {k}")));
    }
    Ok(ControllerPacket {
        u_traj: sol.u_traj.clone(),
        steady_input_affine: &sol.u_bar + k_bar * &sol.x_bar,
        q: q_k,
        k_sent: k,
        x0_opt: match variant {
            MpcVariant::Rt => None,
            MpcVariant::Ert => Some(sol.x_traj[0].clone()),
        },
    })
}

struct Layout {
    n: usize,
    m: usize,
    horizon: usize,
}

impl Layout {
    fn u(&self, i: usize) -> usize {
        i * self.m
    }
    fn x(&self, i: usize) -> usize {
        self.horizon * self.m + i * self.n
    }
    fn x_bar(&self) -> usize {
        self.x(self.horizon + 1)
    }
    fn u_bar(&self) -> usize {
        self.x_bar() + self.n
    }
    fn dim(&self) -> usize {
        self.u_bar() + self.m
    }
}

/// Tracking MPC with factorisations cached across steps.
pub struct TrackingMpc {
    cfg: MpcConfig,
    layout: Layout,
    pinned: PreparedQp,
    /// Inequality offsets shared by both problems.
    b_common: DVector<f64>,
    /// Free-initial-state problem and the `H_Z` rows it appends.
    free: Option<PreparedQp>,
}

impl TrackingMpc {
    pub fn new(cfg: MpcConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout {
            n: cfg.model.nx(),
            m: cfg.model.nu(),
            horizon: cfg.horizon,
        };
        let hess = hessian(&cfg, &layout);
        let (g_common, b_common) = common_inequalities(&cfg, &layout)?;
        let e_dyn = dynamics_equalities(&cfg, &layout);

        let n = layout.n;
        let mut e_pin = DMatrix::zeros(e_dyn.nrows() + n, layout.dim());
        e_pin.view_mut((0, 0), e_dyn.shape()).copy_from(&e_dyn);
        for j in 0..n {
            e_pin[(e_dyn.nrows() + j, layout.x(0) + j)] = 1.0;
        }
        let pinned = PreparedQp::new(&hess, &g_common, &e_pin)?;

        let free = match cfg.variant {
            MpcVariant::Rt => None,
            MpcVariant::Ert => {
                let hz = cfg.sets.z_k.normals();
                let mut g = DMatrix::zeros(g_common.nrows() + hz.nrows(), layout.dim());
                g.view_mut((0, 0), g_common.shape()).copy_from(&g_common);
                g.view_mut((g_common.nrows(), layout.x(0)), hz.shape())
                    .copy_from(&(-hz));
                Some(PreparedQp::new(&hess, &g, &e_dyn)?)
            }
        };
        Ok(TrackingMpc {
            cfg,
            layout,
            pinned,
            b_common,
            free,
        })
    }

    pub fn config(&self) -> &MpcConfig {
        &self.cfg
    }

    /// Number of decision variables.
    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    /// Solve for estimate `x_hat` and reference `x_r`. `received_prev` selects
    /// the reset constraint for the extended variant and is ignored otherwise.
    pub fn solve(&self, x_hat: &DVector<f64>, x_r: &DVector<f64>, received_prev: bool) -> Result<MpcOutcome> {
        let l = &self.layout;
        if x_hat.len() != l.n || x_r.len() != l.n {
            return Err(Error::Dimension("estimate or reference has the wrong length".into()));
        }
        if x_hat.iter().chain(x_r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite estimate or reference".into()));
        }
        let t_xr = &self.cfg.t * x_r;
        let mut lin = DVector::zeros(l.dim());
        lin.rows_mut(l.x_bar(), l.n).copy_from(&(-2.0 * &t_xr));
        let offset = x_r.dot(&t_xr);
        let n_dyn = (l.horizon + 1) * l.n;

        let status = match (&self.free, received_prev) {
            (Some(free), true) => {
                let z = &self.cfg.sets.z_k;
                let extra = z.offsets() - &self.cfg.sets.w_support_on_z - z.normals() * x_hat;
                let mut b = DVector::zeros(self.b_common.len() + extra.len());
                b.rows_mut(0, self.b_common.len()).copy_from(&self.b_common);
                b.rows_mut(self.b_common.len(), extra.len()).copy_from(&extra);
                free.solve(&lin, &b, &DVector::zeros(n_dyn), self.cfg.tol, self.cfg.max_iter)?
            }
            _ => {
                let mut b_eq = DVector::zeros(n_dyn + l.n);
                b_eq.rows_mut(n_dyn, l.n).copy_from(x_hat);
                self.pinned
                    .solve(&lin, &self.b_common, &b_eq, self.cfg.tol, self.cfg.max_iter)?
            }
        };
        Ok(match status {
            SolveStatus::Optimal(opt) => {
                let z = &opt.x;
                MpcOutcome::Optimal(MpcSolution {
                    u_traj: (0..l.horizon).map(|i| z.rows(l.u(i), l.m).into_owned()).collect(),
                    x_traj: (0..=l.horizon).map(|i| z.rows(l.x(i), l.n).into_owned()).collect(),
                    x_bar: z.rows(l.x_bar(), l.n).into_owned(),
                    u_bar: z.rows(l.u_bar(), l.m).into_owned(),
                    cost: opt.value + offset,
                    iterations: opt.iterations,
                })
            }
            SolveStatus::Infeasible | SolveStatus::Unbounded => MpcOutcome::Infeasible,
            SolveStatus::MaxIterations => MpcOutcome::MaxIterations,
        })
    }

    /// Objective of an arbitrary plan, for comparisons against the optimum.
    pub fn cost_of(&self, sol: &MpcSolution, x_r: &DVector<f64>) -> f64 {
        let c = &self.cfg;
        let quad = |w: &DMatrix<f64>, v: &DVector<f64>| v.dot(&(w * v));
        let mut cost = 0.0;
        for i in 0..c.horizon {
            cost += quad(&c.q, &(&sol.x_traj[i] - &sol.x_bar)) + quad(&c.r, &(&sol.u_traj[i] - &sol.u_bar));
        }
        cost + quad(&c.p, &(&sol.x_traj[c.horizon] - &sol.x_bar)) + quad(&c.t, &(&sol.x_bar - x_r))
    }

    /// Largest constraint violation of a plan for the pinned problem at `x_hat`
    /// (or, with `reset_at`, the free problem around that estimate).
    pub fn violation(&self, sol: &MpcSolution, x_hat: &DVector<f64>, reset_at: Option<&DVector<f64>>) -> f64 {
        let c = &self.cfg;
        let s = &c.sets;
        let mut worst = 0.0f64;
        for i in 0..c.horizon {
            let next = &c.model.a * &sol.x_traj[i] + &c.model.b * &sol.u_traj[i];
            worst = worst.max((next - &sol.x_traj[i + 1]).amax());
            worst = worst.max(s.x_c.violation(&sol.x_traj[i]));
            worst = worst.max(s.u_c.violation(&sol.u_traj[i]));
        }
        let steady =
            (&c.model.a - DMatrix::identity(self.layout.n, self.layout.n)) * &sol.x_bar + &c.model.b * &sol.u_bar;
        worst = worst.max(steady.amax());
        let mut triple = DVector::zeros(2 * self.layout.n + self.layout.m);
        triple.rows_mut(0, self.layout.n).copy_from(&sol.x_traj[c.horizon]);
        triple.rows_mut(self.layout.n, self.layout.n).copy_from(&sol.x_bar);
        triple.rows_mut(2 * self.layout.n, self.layout.m).copy_from(&sol.u_bar);
        worst = worst.max(s.x_f.violation(&triple));
        match reset_at {
            None => worst.max((&sol.x_traj[0] - x_hat).amax()),
            Some(center) => {
                let lhs = s.z_k.normals() * (center - &sol.x_traj[0]) + &s.w_support_on_z;
                let v = (lhs - s.z_k.offsets()).max();
                worst.max(v)
            }
        }
    }
}

/// Time-shifted plan extended with the terminal law `ū − K̄(x(N) − x̄)`.
pub fn shifted_solution(sol: &MpcSolution, model: &LtiModel, k_bar: &DMatrix<f64>) -> MpcSolution {
    let horizon = sol.u_traj.len();
    let last = &sol.x_traj[horizon];
    let u_tail = &sol.u_bar - k_bar * (last - &sol.x_bar);
    let x_tail = &model.a * last + &model.b * &u_tail;
    let mut u_traj: Vec<_> = sol.u_traj[1..].to_vec();
    u_traj.push(u_tail);
    let mut x_traj: Vec<_> = sol.x_traj[1..].to_vec();
    x_traj.push(x_tail);
    MpcSolution {
        u_traj,
        x_traj,
        x_bar: sol.x_bar.clone(),
        u_bar: sol.u_bar.clone(),
        cost: f64::NAN,
        iterations: 0,
    }
}

/// Whether `x_r` is reachable as a steady state inside `λX_c × λU_c`, and the
/// matching steady input.
pub fn admissible_reference(model: &LtiModel, sets: &SetSuite, x_r: &DVector<f64>) -> Result<Option<DVector<f64>>> {
    let n = model.nx();
    let lhs = model.a.clone() - DMatrix::identity(n, n);
    let rhs = -(&lhs * x_r);
    // Least squares for ū in Bū = −(A − I)x_r.
    let svd = model.b.clone().svd(true, true);
    let u = svd
        .solve(&rhs, 1e-12)
        .map_err(|e| Error::Solver(format!("steady input solve failed: {e}")))?;
    if (&model.b * &u - &rhs).amax() > 1e-9 * (1.0 + rhs.amax()) {
        return Ok(None);
    }
    let inside = sets.x_c.scaled(sets.lambda).contains(x_r, 1e-9) && sets.u_c.scaled(sets.lambda).contains(&u, 1e-9);
    Ok(inside.then_some(u))
}

fn hessian(cfg: &MpcConfig, l: &Layout) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(l.dim(), l.dim());
    let (n, m) = (l.n, l.m);
    // ‖a − b‖²_W contributes 2W on (a,a), (b,b) and −2W on the cross blocks.
    let mut add_diff = |a: usize, b: usize, w: &DMatrix<f64>, size: usize| {
        let w2 = w * 2.0;
        let mut blk = |r: usize, c: usize, s: f64| {
            let mut v = h.view_mut((r, c), (size, size));
            v += &w2 * s;
        };
        blk(a, a, 1.0);
        blk(b, b, 1.0);
        blk(a, b, -1.0);
        blk(b, a, -1.0);
    };
    for i in 0..l.horizon {
        add_diff(l.x(i), l.x_bar(), &cfg.q, n);
        add_diff(l.u(i), l.u_bar(), &cfg.r, m);
    }
    add_diff(l.x(l.horizon), l.x_bar(), &cfg.p, n);
    let mut v = h.view_mut((l.x_bar(), l.x_bar()), (n, n));
    v += &cfg.t * 2.0;
    (&h + h.transpose()) * 0.5
}

fn common_inequalities(cfg: &MpcConfig, l: &Layout) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let s = &cfg.sets;
    let (hx, hu, hf) = (s.x_c.normals(), s.u_c.normals(), s.x_f.normals());
    let rows = l.horizon * (hx.nrows() + hu.nrows()) + hf.nrows();
    let mut g = DMatrix::zeros(rows, l.dim());
    let mut b = DVector::zeros(rows);
    let mut r = 0;
    let place = |g: &mut DMatrix<f64>, b: &mut DVector<f64>, r: &mut usize, col: usize, p: &HPolytope| {
        let hm = p.normals();
        g.view_mut((*r, col), hm.shape()).copy_from(hm);
        b.rows_mut(*r, hm.nrows()).copy_from(p.offsets());
        *r += hm.nrows();
    };
    for i in 0..l.horizon {
        place(&mut g, &mut b, &mut r, l.x(i), &s.x_c);
        place(&mut g, &mut b, &mut r, l.u(i), &s.u_c);
    }
    // (x(N), x̄, ū) are contiguous in the layout.
    place(&mut g, &mut b, &mut r, l.x(l.horizon), &s.x_f);
    debug_assert_eq!(r, rows);
    Ok((g, b))
}

/// `x(i+1) − Ax(i) − Bu(i) = 0` and `(A − I)x̄ + Bū = 0`.
fn dynamics_equalities(cfg: &MpcConfig, l: &Layout) -> DMatrix<f64> {
    let (n, m) = (l.n, l.m);
    let a = &cfg.model.a;
    let b = &cfg.model.b;
    let mut e = DMatrix::zeros((l.horizon + 1) * n, l.dim());
    for i in 0..l.horizon {
        let r = i * n;
        e.view_mut((r, l.x(i + 1)), (n, n)).copy_from(&DMatrix::identity(n, n));
        e.view_mut((r, l.x(i)), (n, n)).copy_from(&(-a));
        e.view_mut((r, l.u(i)), (n, m)).copy_from(&(-b));
    }
    let r = l.horizon * n;
    e.view_mut((r, l.x_bar()), (n, n))
        .copy_from(&(a - DMatrix::identity(n, n)));
    e.view_mut((r, l.u_bar()), (n, m)).copy_from(b);
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthesis::{synthesize, SynthesisSpec};
    use nalgebra::dmatrix;

    fn scalar_synthesis(robust: bool) -> Synthesis {
        let spec = SynthesisSpec {
            model: LtiModel::new(dmatrix![1.0], dmatrix![1.0], 1.0).unwrap(),
            x: HPolytope::symmetric_box(&[5.0]).unwrap(),
            u: HPolytope::symmetric_box(&[2.0]).unwrap(),
            w: HPolytope::symmetric_box(&[0.1]).unwrap(),
            q: dmatrix![1.0],
            r: dmatrix![1.0],
            k: Some(dmatrix![0.5]),
            k_bar: Some(dmatrix![0.5]),
            lambda: 0.99,
            template_powers: 5,
            rpi_tol: 1e-10,
            rpi_max_iter: 10_000,
            k_max: 200,
            redundancy_tol: 1e-9,
            robust,
        };
        synthesize(&spec).unwrap()
    }

    fn scalar_mpc(variant: MpcVariant) -> TrackingMpc {
        let syn = scalar_synthesis(true);
        TrackingMpc::new(MpcConfig::from_synthesis(&syn, 5, dmatrix![100.0], variant)).unwrap()
    }

    #[test]
    fn origin_is_a_zero_cost_solution() {
        let mpc = scalar_mpc(MpcVariant::Rt);
        let zero = DVector::zeros(1);
        let out = mpc.solve(&zero, &zero, false).unwrap();
        let sol = out.solution().unwrap();
        assert!(sol.cost.abs() < 1e-9);
        assert!(sol.u_traj.iter().all(|u| u.amax() < 1e-7));
        assert!(sol.x_bar.amax() < 1e-7 && sol.u_bar.amax() < 1e-7);
    }

    #[test]
    fn admissible_reference_is_its_own_steady_state() {
        let mpc = scalar_mpc(MpcVariant::Rt);
        let xr = DVector::from_element(1, 2.0);
        let sol = mpc.solve(&xr, &xr, false).unwrap().solution().unwrap().clone();
        assert!((&sol.x_bar - &xr).amax() < 1e-6);
        assert!(sol.cost.abs() < 1e-8);
        assert!(mpc.violation(&sol, &xr, None) < 1e-7);
    }

    #[test]
    fn cost_matches_recomputation() {
        let mpc = scalar_mpc(MpcVariant::Rt);
        let xr = DVector::from_element(1, 3.0);
        let x0 = DVector::from_element(1, -1.0);
        let sol = mpc.solve(&x0, &xr, false).unwrap().solution().unwrap().clone();
        assert!((mpc.cost_of(&sol, &xr) - sol.cost).abs() < 1e-6 * sol.cost.max(1.0));
        assert!(mpc.violation(&sol, &x0, None) < 1e-7);
    }

    #[test]
    fn shifted_plan_stays_feasible() {
        let mpc = scalar_mpc(MpcVariant::Rt);
        let xr = DVector::from_element(1, 3.0);
        let x0 = DVector::from_element(1, -2.0);
        let sol = mpc.solve(&x0, &xr, false).unwrap().solution().unwrap().clone();
        let shifted = shifted_solution(&sol, &mpc.config().model, &mpc.config().gains.k_bar);
        assert!(mpc.violation(&shifted, &sol.x_traj[1], None) < 1e-7);
        let next = mpc
            .solve(&sol.x_traj[1], &xr, false)
            .unwrap()
            .solution()
            .unwrap()
            .clone();
        assert!(next.cost <= sol.cost + 1e-6);
    }

    #[test]
    fn extended_problem_is_no_worse_than_pinned() {
        let ert = scalar_mpc(MpcVariant::Ert);
        let xr = DVector::from_element(1, 3.0);
        let x_hat = DVector::from_element(1, -2.0);
        let pinned = ert.solve(&x_hat, &xr, false).unwrap().solution().unwrap().clone();
        let free = ert.solve(&x_hat, &xr, true).unwrap().solution().unwrap().clone();
        assert!(free.cost <= pinned.cost + 1e-6);
        assert!(ert.violation(&free, &x_hat, Some(&x_hat)) < 1e-7);
        // The pinned optimum satisfies the reset constraint.
        assert!(ert.violation(&pinned, &x_hat, Some(&x_hat)) < 1e-7);
    }

    #[test]
    fn infeasible_start_is_reported() {
        let mpc = scalar_mpc(MpcVariant::Rt);
        let out = mpc
            .solve(&DVector::from_element(1, 50.0), &DVector::zeros(1), false)
            .unwrap();
        assert_eq!(out, MpcOutcome::Infeasible);
        assert!(make_controller_packet(&out, 0, 0, MpcVariant::Rt, &dmatrix![0.5]).is_err());
    }

    #[test]
    fn packet_carries_steady_affine_term() {
        let sol = MpcSolution {
            u_traj: vec![DVector::from_element(1, 0.3)],
            x_traj: vec![DVector::from_element(1, 0.7), DVector::from_element(1, 1.0)],
            x_bar: DVector::from_element(1, 2.0),
            u_bar: DVector::from_element(1, 1.0),
            cost: 0.0,
            iterations: 0,
        };
        let out = MpcOutcome::Optimal(sol);
        let k_bar = dmatrix![0.5];
        let rt = make_controller_packet(&out, 3, 4, MpcVariant::Rt, &k_bar).unwrap();
        assert_eq!(rt.steady_input_affine[0], 2.0);
        assert!(rt.x0_opt.is_none());
        let ert = make_controller_packet(&out, 3, 4, MpcVariant::Ert, &k_bar).unwrap();
        assert_eq!(ert.x0_opt.as_ref().unwrap()[0], 0.7);
        // Exhausted packet: 2 − 0.5·2 = 1.
        let u = rt.input_at(5, &DVector::from_element(1, 2.0), &k_bar).unwrap();
        assert_eq!(u[0], 1.0);
        assert_eq!(rt.input_at(4, &DVector::zeros(1), &k_bar).unwrap()[0], 0.3);
        assert!(rt.input_at(3, &DVector::zeros(1), &k_bar).is_err());
        assert!(make_controller_packet(&out, 5, 4, MpcVariant::Rt, &k_bar).is_err());
    }

    #[test]
    fn rejects_bad_weights() {
        let syn = scalar_synthesis(true);
        let cfg = MpcConfig::from_synthesis(&syn, 5, dmatrix![-1.0], MpcVariant::Rt);
        assert!(TrackingMpc::new(cfg).is_err());
        let cfg = MpcConfig::from_synthesis(&syn, 0, dmatrix![1.0], MpcVariant::Rt);
        assert!(TrackingMpc::new(cfg).is_err());
    }

    #[test]
    fn reference_admissibility() {
        let syn = scalar_synthesis(false);
        let ok = admissible_reference(&syn.spec.model, &syn.sets, &DVector::from_element(1, 1.0)).unwrap();
        assert!(ok.is_some());
        let far = admissible_reference(&syn.spec.model, &syn.sets, &DVector::from_element(1, 4.99)).unwrap();
        assert!(far.is_none());
    }
}
