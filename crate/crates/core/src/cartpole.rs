//! Cart-pole benchmark: physical parameters, the linearisation about the
//! upright equilibrium, the nonlinear ODE with RK4 sub-stepping, and the
//! disturbance-set estimation procedure.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2, Vector4};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_box, BoxSet, HPolytope};
use crate::synthesis::{zoh_discretize, LtiModel, SynthesisSpec};

/// Physical parameters. Defaults are the benchmark values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CartpoleParams {
    /// Pendulum inertia about its center of mass (kg·m²).
    pub inertia: f64,
    /// Distance from pivot to the pendulum center of mass (m).
    pub length: f64,
    /// Pendulum mass (kg).
    pub pole_mass: f64,
    /// Cart mass (kg).
    pub cart_mass: f64,
    /// Cart viscous friction (N·s/m).
    pub friction: f64,
    pub gravity: f64,
    /// Controller sampling time (s).
    pub sampling_time: f64,
}

impl Default for CartpoleParams {
    fn default() -> Self {
        CartpoleParams {
            inertia: 0.001,
            length: 0.5,
            pole_mass: 0.1,
            cart_mass: 1.0,
            friction: 0.0,
            gravity: 9.8,
            sampling_time: 0.02,
        }
    }
}

impl CartpoleParams {
    /// `r = I(M + m) + M·m·l²`.
    pub fn r(&self) -> f64 {
        self.inertia * (self.cart_mass + self.pole_mass) + self.cart_mass * self.pole_mass * self.length.powi(2)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.inertia,
            self.length,
            self.pole_mass,
            self.cart_mass,
            self.gravity,
            self.sampling_time,
        ];
        if positive.iter().any(|v| !(*v > 0.0) || !v.is_finite()) || !(self.friction >= 0.0) || !(self.r() > 0.0) {
            return Err(Error::InvalidInput(format!("invalid cart-pole parameters {self:?}")));
        }
        Ok(())
    }

    /// RK4 substeps that give a 500 Hz physics rate.
    pub fn default_substeps(&self) -> usize {
        ((self.sampling_time * 500.0).round() as usize).max(1)
    }
}

/// Continuous-time linearisation about the upright equilibrium, state
/// `[p, ṗ, φ, φ̇]`.
pub fn linearized_matrices(params: &CartpoleParams) -> (DMatrix<f64>, DMatrix<f64>) {
    let CartpoleParams {
        inertia: i,
        length: l,
        pole_mass: m,
        cart_mass: mc,
        friction: b,
        gravity: g,
        ..
    } = *params;
    let r = params.r();
    let a = DMatrix::from_row_slice(
        4,
        4,
        &[
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            -(i + m * l * l) * b / r,
            -m * m * g * l * l / r,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
            m * l * b / r,
            m * g * l * (mc + m) / r,
            0.0,
        ],
    );
    let b_c = DMatrix::from_column_slice(4, 1, &[0.0, (i + m * l * l) / r, 0.0, -m * l / r]);
    (a, b_c)
}

/// Right-hand side of the cart-pole ODE.
///
/// Solves `(M+m)p̈ + bṗ + ml·φ̈·cosφ − ml·φ̇²·sinφ = u` together with
/// `(I+ml²)φ̈ + ml·p̈·cosφ − mgl·sinφ = 0` for the accelerations.
pub fn nonlinear_derivative(x: &Vector4<f64>, u: f64, params: &CartpoleParams) -> Result<Vector4<f64>> {
    let CartpoleParams {
        inertia: i,
        length: l,
        pole_mass: m,
        cart_mass: mc,
        friction: b,
        gravity: g,
        ..
    } = *params;
    let (pd, phi, phid) = (x[1], x[2], x[3]);
    let (s, c) = phi.sin_cos();
    let mass = Matrix2::new(mc + m, m * l * c, m * l * c, i + m * l * l);
    let rhs = Vector2::new(u - b * pd + m * l * phid * phid * s, m * g * l * s);
    let acc = mass
        .try_inverse()
        .ok_or_else(|| Error::InvalidInput("singular cart-pole mass matrix".into()))?
        * rhs;
    Ok(Vector4::new(pd, acc[0], phid, acc[1]))
}

/// One sampling period of the nonlinear plant with the input held constant,
/// integrated by classical RK4 over `substeps` equal intervals.
pub fn plant_step(x: &DVector<f64>, u: f64, params: &CartpoleParams, substeps: usize) -> Result<DVector<f64>> {
    if x.len() != 4 {
        return Err(Error::Dimension(format!(
            "cart-pole state has 4 entries, got {}",
            x.len()
        )));
    }
    let n = substeps.max(1);
    let h = params.sampling_time / n as f64;
    let mut s = Vector4::new(x[0], x[1], x[2], x[3]);
    for _ in 0..n {
        let k1 = nonlinear_derivative(&s, u, params)?;
        let k2 = nonlinear_derivative(&(s + k1 * (h / 2.0)), u, params)?;
        let k3 = nonlinear_derivative(&(s + k2 * (h / 2.0)), u, params)?;
        let k4 = nonlinear_derivative(&(s + k3 * h), u, params)?;
        s += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("cart-pole state became non-finite".into()));
    }
    Ok(DVector::from_column_slice(s.as_slice()))
}

/// Kinetic plus potential energy (zero potential at the pivot height).
pub fn energy(x: &DVector<f64>, params: &CartpoleParams) -> f64 {
    let CartpoleParams {
        inertia: i,
        length: l,
        pole_mass: m,
        cart_mass: mc,
        gravity: g,
        ..
    } = *params;
    let (pd, phi, phid) = (x[1], x[2], x[3]);
    // Pole center of mass at (p + l sinφ, l cosφ).
    let vx = pd + l * phid * phi.cos();
    let vy = -l * phid * phi.sin();
    0.5 * mc * pd * pd + 0.5 * m * (vx * vx + vy * vy) + 0.5 * i * phid * phid + m * g * l * phi.cos()
}

/// Settings of the disturbance estimation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceEstimation {
    pub n_runs: usize,
    pub horizon: usize,
    /// Half widths of the initial-state box.
    pub init_box: [f64; 4],
    pub seed: u64,
    /// Runs are cut when `|φ|` exceeds this value.
    pub angle_envelope: f64,
    /// Relative margin applied to the estimated bounds.
    pub inflation: f64,
}

impl Default for DisturbanceEstimation {
    fn default() -> Self {
        DisturbanceEstimation {
            n_runs: 50,
            horizon: 250,
            init_box: [0.2, 0.2, 0.1, 0.2],
            seed: 0,
            angle_envelope: 0.5,
            inflation: 0.05,
        }
    }
}

/// Estimated disturbance box and bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceEstimate {
    /// Componentwise maxima of `|w(k)|` before inflation.
    pub raw: DVector<f64>,
    /// Inflated box used for synthesis.
    pub set: BoxSet,
    pub truncated_runs: Vec<usize>,
}

/// Simulate `u = −Kx` from random initial states and record the residual
/// `w(k) = x(k+1) − (A − BK)x(k)` against the discrete linear model.
///
/// `step` advances the plant one sampling period; passing the linear model
/// itself yields `W = {0}`.
pub fn estimate_disturbance_set<F>(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    k: &DMatrix<f64>,
    cfg: &DisturbanceEstimation,
    mut step: F,
) -> Result<DisturbanceEstimate>
where
    F: FnMut(&DVector<f64>, f64) -> Result<DVector<f64>>,
{
    let a_k = a - b * k;
    let init = BoxSet::symmetric(&cfg.init_box)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut raw = DVector::zeros(4);
    let mut truncated = Vec::new();
    for run in 0..cfg.n_runs {
        let mut x = sample_box(&init, &mut rng);
        for _ in 0..cfg.horizon {
            let u = -(k * &x)[0];
            let next = step(&x, u)?;
            let w = &next - &a_k * &x;
            for i in 0..4 {
                raw[i] = f64::max(raw[i], w[i].abs());
            }
            x = next;
            if x[2].abs() > cfg.angle_envelope {
                truncated.push(run);
                break;
            }
        }
    }
    let set = BoxSet::symmetric((&raw * (1.0 + cfg.inflation)).as_slice())?;
    Ok(DisturbanceEstimate {
        raw,
        set,
        truncated_runs: truncated,
    })
}

/// Disturbance bounds reported for the benchmark (position, velocity,
/// angle, angular velocity).
pub const REFERENCE_DISTURBANCE: [f64; 4] = [1e-4, 2.7e-3, 3e-4, 4.3e-2];

/// State bounds `|p| ≤ 5, |ṗ| ≤ 5, |φ| ≤ 0.3, |φ̇| ≤ 2`.
pub const STATE_BOUNDS: [f64; 4] = [5.0, 5.0, 0.3, 2.0];

/// Input bound `|u| ≤ 10`.
pub const INPUT_BOUND: f64 = 10.0;

/// Design defaults for the benchmark.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    pub q_diag: [f64; 4],
    pub r: f64,
    pub state_bounds: [f64; 4],
    pub input_bound: f64,
    pub lambda: f64,
    pub template_powers: usize,
    pub rpi_tol: f64,
    pub rpi_max_iter: usize,
    pub k_max: usize,
    pub redundancy_tol: f64,
}

impl Default for DesignOptions {
    fn default() -> Self {
        DesignOptions {
            q_diag: [100.0, 10.0, 100.0, 10.0],
            r: 0.1,
            state_bounds: STATE_BOUNDS,
            input_bound: INPUT_BOUND,
            lambda: 0.99,
            template_powers: 20,
            rpi_tol: 1e-10,
            rpi_max_iter: 20_000,
            k_max: 500,
            redundancy_tol: 1e-9,
        }
    }
}

/// Discrete cart-pole model from the linearisation.
pub fn discrete_model(params: &CartpoleParams) -> Result<LtiModel> {
    params.validate()?;
    let (ac, bc) = linearized_matrices(params);
    let (a, b) = zoh_discretize(&ac, &bc, params.sampling_time)?;
    LtiModel::new(a, b, params.sampling_time)
}

/// Synthesis inputs for the benchmark with disturbance half widths `w`.
pub fn synthesis_spec(
    params: &CartpoleParams,
    design: &DesignOptions,
    w: &[f64; 4],
    robust: bool,
) -> Result<SynthesisSpec> {
    Ok(SynthesisSpec {
        model: discrete_model(params)?,
        x: HPolytope::symmetric_box(&design.state_bounds)?,
        u: HPolytope::symmetric_box(&[design.input_bound])?,
        w: HPolytope::symmetric_box(w)?,
        q: DMatrix::from_diagonal(&DVector::from_column_slice(&design.q_diag)),
        r: DMatrix::from_element(1, 1, design.r),
        k: None,
        k_bar: None,
        lambda: design.lambda,
        template_powers: design.template_powers,
        rpi_tol: design.rpi_tol,
        rpi_max_iter: design.rpi_max_iter,
        k_max: design.k_max,
        redundancy_tol: design.redundancy_tol,
        robust,
    })
}
