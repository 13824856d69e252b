use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::{ControllerVariant, PlantKind, ScenarioConfig};
use super::metrics::{compute_metrics, RunSummary};
use crate::cartpole::plant_step;
use crate::error::{Error, Result};
use crate::geometry::{sample_box, BoxSet};
use crate::mpc::{
    admissible_reference, make_controller_packet, shifted_solution, MpcConfig, MpcOutcome, MpcSolution, MpcVariant,
    TrackingMpc,
};
use crate::network::{Direction, Link, DISTURBANCE_STREAM};
use crate::plant::{ancillary_control, make_plant_packet, nominal_reset, nominal_step, ActuatorState};
use crate::remote::EstimatorState;
use crate::synthesis::{synthesize_cached, Synthesis};

/// Tolerance for the membership checks recorded in traces.
pub const CHECK_TOL: f64 = 1e-7;

/// Solver outcome of one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepStatus {
    Optimal,
    Infeasible,
    MaxIterations,
}

impl StepStatus {
    pub fn tag(self) -> &'static str {
        match self {
            StepStatus::Optimal => "optimal",
            StepStatus::Infeasible => "infeasible",
            StepStatus::MaxIterations => "max_iterations",
        }
    }

    pub fn from_tag(s: &str) -> Option<Self> {
        match s {
            "optimal" => Some(StepStatus::Optimal),
            "infeasible" => Some(StepStatus::Infeasible),
            "max_iterations" => Some(StepStatus::MaxIterations),
            _ => None,
        }
    }

    pub fn is_failure(self) -> bool {
        self != StepStatus::Optimal
    }
}

/// Everything that happened at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub k: i64,
    pub x: DVector<f64>,
    /// Nominal state used at step `k` (after any reset).
    pub x_n: DVector<f64>,
    pub u: DVector<f64>,
    pub u_n: DVector<f64>,
    /// `x̂(k|k−1)`, the estimate the MPC solved from.
    pub x_hat: DVector<f64>,
    pub theta: bool,
    pub gamma: bool,
    pub big_theta: bool,
    pub s: i64,
    /// `q_k` carried in the step-`k` controller packet.
    pub q: i64,
    pub status: StepStatus,
    pub solve_ms: f64,
    /// `‖x̂(k|k−1) − x_n(k)‖∞` with `x_n(k)` before any reset.
    pub estimate_gap: f64,
    /// Whether the tube membership was checked at this step.
    pub tube_checked: bool,
    pub in_tube: bool,
    /// Largest violation of `x ∈ X`, `u ∈ U`.
    pub constraint_violation: f64,
}

/// Identification of a run inside a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunKey {
    pub variant: ControllerVariant,
    pub plant: PlantKind,
    pub rho_index: usize,
    pub rho: f64,
    pub rep: usize,
    pub seed: u64,
}

impl RunKey {
    pub fn file_stem(&self) -> String {
        format!("{}-{}-rho{:.2}-s{:02}", self.variant, self.plant, self.rho, self.rep)
    }
}

#[derive(Debug, Clone)]
pub struct SimTrace {
    pub key: RunKey,
    pub records: Vec<StepRecord>,
    /// Set when the run stopped early.
    pub truncated: Option<String>,
    pub summary: RunSummary,
}

/// Synthesis and MPC shared by every run of one variant.
pub struct RunContext {
    pub variant: ControllerVariant,
    pub plant: PlantKind,
    pub synthesis: Synthesis,
    pub mpc: TrackingMpc,
    pub disturbance: BoxSet,
    pub reference: DVector<f64>,
    pub cfg: ScenarioConfig,
}

impl RunContext {
    /// Synthesize (through the cache) and build the controller.
    pub fn prepare(cfg: &ScenarioConfig, variant: ControllerVariant) -> Result<Self> {
        cfg.validate()?;
        let spec = cfg.synthesis_spec(variant)?;
        let synthesis = synthesize_cached(&spec, &cfg.cache_dir())?;
        Self::with_synthesis(cfg, variant, synthesis)
    }

    pub fn with_synthesis(cfg: &ScenarioConfig, variant: ControllerVariant, synthesis: Synthesis) -> Result<Self> {
        let mpc_cfg = MpcConfig::from_synthesis(
            &synthesis,
            cfg.mpc_horizon,
            cfg.offset_weight_matrix(),
            variant.mpc_variant(),
        );
        let mpc = TrackingMpc::new(mpc_cfg)?;
        let reference = cfg.reference_vector();
        if admissible_reference(&synthesis.spec.model, &synthesis.sets, &reference)?.is_none() {
            log::warn!("reference {} is not an admissible steady state", reference.transpose());
        }
        let disturbance = BoxSet::symmetric(&cfg.disturbance_half_widths()?)?;
        Ok(RunContext {
            variant,
            plant: cfg.plant,
            synthesis,
            mpc,
            disturbance,
            reference,
            cfg: cfg.clone(),
        })
    }

    /// One closed-loop run from the origin.
    pub fn simulate(&self, key: RunKey) -> Result<SimTrace> {
        self.simulate_from(key, &DVector::zeros(self.synthesis.spec.model.nx()))
    }

    pub fn simulate_from(&self, key: RunKey, x0: &DVector<f64>) -> Result<SimTrace> {
        let model = &self.synthesis.spec.model;
        let gains = &self.synthesis.gains;
        let sets = &self.synthesis.sets;
        let x_set = &self.synthesis.spec.x;
        let u_set = &self.synthesis.spec.u;
        let mpc_variant = self.variant.mpc_variant();
        let baseline = self.variant == ControllerVariant::R;
        let forced = self.cfg.forced_init;
        let params = self.cfg.params;
        let substeps = params.default_substeps();

        let (theta_loss, gamma_loss) = self.cfg.loss.processes(key.rho);
        let mut theta_link = Link::new(theta_loss, Direction::ToPlant, key.seed)?;
        let mut gamma_link = Link::new(gamma_loss, Direction::ToController, key.seed)?;
        let mut w_rng = ChaCha8Rng::seed_from_u64(key.seed);
        w_rng.set_stream(DISTURBANCE_STREAM);

        let mut x = x0.clone();
        let mut x_n = x0.clone();
        let mut est = EstimatorState::new(x0.clone());
        let mut act = ActuatorState::new();
        let mut gamma_prev = forced;
        let mut last_good: Option<(MpcSolution, i64)> = None;
        let mut records = Vec::with_capacity(self.cfg.horizon);
        let mut truncated = None;

        for k in 0..self.cfg.horizon as i64 {
            // Controller: solve from x̂(k|k−1).
            let x_hat = est.x_hat().clone();
            let started = Instant::now();
            let outcome = self
                .mpc
                .solve(&x_hat, &self.reference, gamma_prev && mpc_variant == MpcVariant::Ert)?;
            let solve_ms = started.elapsed().as_secs_f64() * 1e3;
            let status = match &outcome {
                MpcOutcome::Optimal(_) => StepStatus::Optimal,
                MpcOutcome::Infeasible => StepStatus::Infeasible,
                MpcOutcome::MaxIterations => StepStatus::MaxIterations,
            };
            let plan = match outcome {
                MpcOutcome::Optimal(sol) => {
                    last_good = Some((sol.clone(), k));
                    Some(sol)
                }
                _ => {
                    log::debug!("{}: step {k} solver returned {}", key.file_stem(), status.tag());
                    last_good.as_ref().map(|(sol, at)| {
                        let mut shifted = sol.clone();
                        for _ in *at..k {
                            shifted = shifted_solution(&shifted, model, &gains.k_bar);
                        }
                        shifted
                    })
                }
            };
            let Some(plan) = plan else {
                truncated = Some(format!("no feasible plan at step {k}"));
                break;
            };
            let packet = make_controller_packet(&MpcOutcome::Optimal(plan), est.q(), k, mpc_variant, &gains.k_bar)?;
            est.record_sent(packet.clone());

            // Forward link and consistent actuator.
            let theta = if k == 0 && forced {
                theta_link.transmit_forced(k)?
            } else {
                theta_link.transmit(k)?
            };
            let incoming = theta.then_some(&packet);
            if baseline {
                x_n = x.clone();
            }
            let estimate_gap = (&x_hat - &x_n).amax();
            let big_theta = act.receive(k, incoming);
            x_n = nominal_reset(&x_n, incoming, big_theta, mpc_variant)?;
            let u_n = if act.s().is_none() && !big_theta {
                DVector::zeros(model.nu())
            } else {
                act.step(incoming, big_theta, k, &x_n, &gains.k_bar)?
            };
            let u = if baseline {
                u_n.clone()
            } else {
                ancillary_control(&u_n, &x_n, &x, &gains.k)
            };
            let s = act.s().unwrap_or(-1);

            // Reverse link and estimator.
            let gamma = gamma_link.transmit(k)?;
            let plant_packet = make_plant_packet(&x_n, s, &x, k, mpc_variant);
            // Before the first adoption the plant has nothing to report.
            let delivered = (gamma && act.s().is_some()).then_some(&plant_packet);
            est.update(delivered, &packet, k, mpc_variant, model, gains)?;

            let tube_checked = act.s().is_some() && !baseline;
            let in_tube = !tube_checked || sets.z_k.contains(&(&x - &x_n), CHECK_TOL);
            let constraint_violation = x_set.violation(&x).max(u_set.violation(&u));
            records.push(StepRecord {
                k,
                x: x.clone(),
                x_n: x_n.clone(),
                u: u.clone(),
                u_n: u_n.clone(),
                x_hat,
                theta,
                gamma,
                big_theta,
                s,
                q: packet.q,
                status,
                solve_ms,
                estimate_gap,
                tube_checked,
                in_tube,
                constraint_violation,
            });

            // Plant and nominal model advance.
            let next = match self.plant {
                PlantKind::Linear => {
                    let w = sample_box(&self.disturbance, &mut w_rng);
                    Ok(&model.a * &x + &model.b * &u + w)
                }
                PlantKind::Nonlinear => plant_step(&x, u[0], &params, substeps),
            };
            match next {
                Ok(v) => x = v,
                Err(e) => {
                    truncated = Some(format!("plant failed after step {k}: {e}"));
                    break;
                }
            }
            x_n = nominal_step(&x_n, &u_n, model);
            gamma_prev = gamma;
        }
        let summary = compute_metrics(&records, &self.reference, truncated.is_some());
        Ok(SimTrace {
            key,
            records,
            truncated,
            summary,
        })
    }
}

/// `(x, x_n, u)` at one step of [`direct_mpc_loop`].
pub type DirectStep = (DVector<f64>, DVector<f64>, DVector<f64>);

/// Reference simulation that solves the MPC from the nominal state and
/// applies it directly, with no network in between.
pub fn direct_mpc_loop(ctx: &RunContext, steps: usize, seed: u64) -> Result<Vec<DirectStep>> {
    let model = &ctx.synthesis.spec.model;
    let gains = &ctx.synthesis.gains;
    let mut w_rng = ChaCha8Rng::seed_from_u64(seed);
    w_rng.set_stream(DISTURBANCE_STREAM);
    let n = model.nx();
    let mut x = DVector::zeros(n);
    let mut x_n = DVector::zeros(n);
    let mut out = Vec::with_capacity(steps);
    for k in 0..steps {
        let sol = match ctx.mpc.solve(&x_n, &ctx.reference, false)? {
            MpcOutcome::Optimal(sol) => sol,
            other => return Err(Error::Solver(format!("direct loop: {} at step {k}", other.tag()))),
        };
        let u_n = sol.u_traj[0].clone();
        let u = ancillary_control(&u_n, &x_n, &x, &gains.k);
        out.push((x.clone(), x_n.clone(), u.clone()));
        let w = match ctx.plant {
            PlantKind::Linear => sample_box(&ctx.disturbance, &mut w_rng),
            PlantKind::Nonlinear => DVector::zeros(n),
        };
        x = match ctx.plant {
            PlantKind::Linear => &model.a * &x + &model.b * &u + w,
            PlantKind::Nonlinear => plant_step(&x, u[0], &ctx.cfg.params, ctx.cfg.params.default_substeps())?,
        };
        x_n = nominal_step(&x_n, &u_n, model);
    }
    Ok(out)
}
