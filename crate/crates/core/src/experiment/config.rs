use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cartpole::{
    discrete_model, estimate_disturbance_set, plant_step, synthesis_spec, CartpoleParams, DesignOptions,
    DisturbanceEstimation, REFERENCE_DISTURBANCE,
};
use crate::error::{Error, Result};
use crate::mpc::MpcVariant;
use crate::network::LossProcess;
use crate::synthesis::{dare_gain, SynthesisSpec};

/// Controller scheme under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ControllerVariant {
    /// Baseline without a tube: untightened constraints, plant-state packets.
    R,
    Rt,
    Ert,
}

impl ControllerVariant {
    pub fn mpc_variant(self) -> MpcVariant {
        match self {
            ControllerVariant::R | ControllerVariant::Rt => MpcVariant::Rt,
            ControllerVariant::Ert => MpcVariant::Ert,
        }
    }

    /// Whether the design uses a tube and tightened constraints.
    pub fn robust(self) -> bool {
        self != ControllerVariant::R
    }

    pub fn tag(self) -> &'static str {
        match self {
            ControllerVariant::R => "r",
            ControllerVariant::Rt => "rt",
            ControllerVariant::Ert => "ert",
        }
    }
}

impl fmt::Display for ControllerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ControllerVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "r" => Ok(ControllerVariant::R),
            "rt" => Ok(ControllerVariant::Rt),
            "ert" => Ok(ControllerVariant::Ert),
            _ => Err(Error::Config(format!("unknown controller variant {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlantKind {
    /// Discrete linear model plus a uniform disturbance from `W`.
    Linear,
    /// RK4-integrated cart-pole.
    Nonlinear,
}

impl PlantKind {
    pub fn tag(self) -> &'static str {
        match self {
            PlantKind::Linear => "linear",
            PlantKind::Nonlinear => "nonlinear",
        }
    }
}

impl fmt::Display for PlantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for PlantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(PlantKind::Linear),
            "nonlinear" => Ok(PlantKind::Nonlinear),
            _ => Err(Error::Config(format!("unknown plant kind {s:?}"))),
        }
    }
}

/// Where the disturbance box comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisturbanceSource {
    /// The `half_widths` given in the config.
    Fixed,
    /// Estimated from nonlinear simulations under LQR.
    Estimated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DisturbanceConfig {
    pub source: DisturbanceSource,
    pub half_widths: [f64; 4],
    pub estimation: DisturbanceEstimation,
}

impl Default for DisturbanceConfig {
    fn default() -> Self {
        DisturbanceConfig {
            source: DisturbanceSource::Fixed,
            half_widths: REFERENCE_DISTURBANCE,
            estimation: DisturbanceEstimation::default(),
        }
    }
}

/// Loss model for both links; `rho` comes from the sweep list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossModel {
    Bernoulli,
    /// Markov channel whose bad state drops with probability `rho`.
    GilbertElliott {
        p_good_to_bad: f64,
        p_bad_to_good: f64,
        rho_good: f64,
    },
    /// Fixed bit patterns per direction; `rho` is ignored.
    Scripted {
        theta: Vec<u8>,
        gamma: Vec<u8>,
    },
}

impl LossModel {
    /// `(θ-link, γ-link)` processes for loss level `rho`.
    pub fn processes(&self, rho: f64) -> (LossProcess, LossProcess) {
        match self {
            LossModel::Bernoulli => (LossProcess::Bernoulli { rho }, LossProcess::Bernoulli { rho }),
            LossModel::GilbertElliott {
                p_good_to_bad,
                p_bad_to_good,
                rho_good,
            } => {
                let p = LossProcess::GilbertElliott {
                    p_good_to_bad: *p_good_to_bad,
                    p_bad_to_good: *p_bad_to_good,
                    rho_good: *rho_good,
                    rho_bad: rho,
                };
                (p.clone(), p)
            }
            LossModel::Scripted { theta, gamma } => (
                LossProcess::Scripted { bits: theta.clone() },
                LossProcess::Scripted { bits: gamma.clone() },
            ),
        }
    }
}

/// Scenario description, read from TOML. Every key is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub variant: ControllerVariant,
    pub plant: PlantKind,
    pub rhos: Vec<f64>,
    /// Repetitions per loss level.
    pub seeds: usize,
    /// Simulated steps per run.
    pub horizon: usize,
    pub reference: Vec<f64>,
    pub master_seed: u64,
    pub out: PathBuf,
    /// Synthesis cache; `<out>/cache` when absent.
    pub cache_dir: Option<PathBuf>,
    /// MPC prediction horizon `N`.
    pub mpc_horizon: usize,
    /// Diagonal of the offset weight `T`.
    pub offset_weight: Vec<f64>,
    /// Start with one guaranteed exchange in both directions.
    pub forced_init: bool,
    /// Write solver wall times into the CSV files (makes them non-reproducible).
    pub timing: bool,
    /// Worker threads for sweeps; 0 picks the available parallelism.
    pub threads: usize,
    pub params: CartpoleParams,
    pub design: DesignOptions,
    pub disturbance: DisturbanceConfig,
    pub loss: LossModel,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            variant: ControllerVariant::Rt,
            plant: PlantKind::Linear,
            rhos: (0..10).map(|i| i as f64 / 10.0).collect(),
            seeds: 20,
            horizon: 500,
            reference: vec![0.5, 0.0, 0.0, 0.0],
            master_seed: 0,
            out: PathBuf::from("out"),
            cache_dir: None,
            mpc_horizon: 20,
            offset_weight: vec![1e4; 4],
            forced_init: true,
            timing: false,
            threads: 0,
            params: CartpoleParams::default(),
            design: DesignOptions::default(),
            disturbance: DisturbanceConfig::default(),
            loss: LossModel::Bernoulli,
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if self.mpc_horizon == 0 {
            return Err(Error::Config("mpc_horizon must be at least 1".into()));
        }
        if let Some(rho) = self.rhos.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return Err(Error::Config(format!("loss probability {rho} is outside [0, 1)")));
        }
        if self.reference.len() != 4 || self.offset_weight.len() != 4 {
            return Err(Error::Config("reference and offset_weight need four entries".into()));
        }
        if self.offset_weight.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Config("offset_weight entries must be positive".into()));
        }
        for rho in &self.rhos {
            let (a, b) = self.loss.processes(*rho);
            a.validate()?;
            b.validate()?;
        }
        self.params.validate()
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out.join("cache"))
    }

    pub fn reference_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.reference)
    }

    pub fn offset_weight_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_column_slice(&self.offset_weight))
    }

    /// Half widths of `W` after resolving the disturbance source.
    pub fn disturbance_half_widths(&self) -> Result<[f64; 4]> {
        match self.disturbance.source {
            DisturbanceSource::Fixed => Ok(self.disturbance.half_widths),
            DisturbanceSource::Estimated => {
                let model = discrete_model(&self.params)?;
                let q = DMatrix::from_diagonal(&DVector::from_column_slice(&self.design.q_diag));
                let r = DMatrix::from_element(1, 1, self.design.r);
                let (k, _) = dare_gain(&model.a, &model.b, &q, &r)?;
                let params = self.params;
                let substeps = params.default_substeps();
                let est = estimate_disturbance_set(&model.a, &model.b, &k, &self.disturbance.estimation, |x, u| {
                    plant_step(x, u, &params, substeps)
                })?;
                let hw = &est.set.half_widths;
                Ok([hw[0], hw[1], hw[2], hw[3]])
            }
        }
    }

    /// Offline design inputs for `variant`.
    pub fn synthesis_spec(&self, variant: ControllerVariant) -> Result<SynthesisSpec> {
        let w = self.disturbance_half_widths()?;
        synthesis_spec(&self.params, &self.design, &w, variant.robust())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ScenarioConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_fills_defaults() {
        let cfg = ScenarioConfig::from_toml_str(
            r#"
            variant = "ert"
            plant = "nonlinear"
            rhos = [0.0, 0.4]
            seeds = 3

            [params]
            friction = 0.1

            [loss]
            kind = "gilbert_elliott"
            p_good_to_bad = 0.1
            p_bad_to_good = 0.3
            rho_good = 0.0
            "#,
        )
        .unwrap();
        assert_eq!(cfg.variant, ControllerVariant::Ert);
        assert_eq!(cfg.plant, PlantKind::Nonlinear);
        assert_eq!(cfg.params.friction, 0.1);
        assert_eq!(cfg.params.length, 0.5);
        assert_eq!(cfg.horizon, 500);
        assert!(matches!(cfg.loss.processes(0.4).0, LossProcess::GilbertElliott { rho_bad, .. } if rho_bad == 0.4));
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(ScenarioConfig::from_toml_str("rhos = [1.0]").is_err());
        assert!(ScenarioConfig::from_toml_str("horizon = 0").is_err());
        assert!(ScenarioConfig::from_toml_str("reference = [0.5]").is_err());
        assert!(ScenarioConfig::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("RT".parse::<ControllerVariant>().unwrap(), ControllerVariant::Rt);
        assert!("x".parse::<ControllerVariant>().is_err());
        assert_eq!(ControllerVariant::R.mpc_variant(), MpcVariant::Rt);
        assert!(!ControllerVariant::R.robust());
        assert_eq!("nonlinear".parse::<PlantKind>().unwrap(), PlantKind::Nonlinear);
    }
}
