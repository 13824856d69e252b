#![allow(dead_code)]

use std::sync::OnceLock;

use tubenet::experiment::{ControllerVariant, PlantKind, RunContext, RunKey, ScenarioConfig};
use tubenet::network::run_seed;
use tubenet::synthesis::{synthesize, Synthesis};

/// The benchmark design, computed once per test binary.
pub fn design(robust: bool) -> &'static Synthesis {
    static ROBUST: OnceLock<Synthesis> = OnceLock::new();
    static PLAIN: OnceLock<Synthesis> = OnceLock::new();
    let variant = if robust {
        ControllerVariant::Rt
    } else {
        ControllerVariant::R
    };
    let cell = if robust { &ROBUST } else { &PLAIN };
    cell.get_or_init(|| {
        let spec = ScenarioConfig::default()
            .synthesis_spec(variant)
            .expect("design inputs");
        synthesize(&spec).expect("benchmark synthesis")
    })
}

pub fn context(cfg: &ScenarioConfig, variant: ControllerVariant) -> RunContext {
    RunContext::with_synthesis(cfg, variant, design(variant.robust()).clone()).expect("run context")
}

pub fn key(ctx: &RunContext, rho_index: usize, rho: f64, rep: usize) -> RunKey {
    RunKey {
        variant: ctx.variant,
        plant: ctx.plant,
        rho_index,
        rho,
        rep,
        seed: run_seed(ctx.cfg.master_seed, rho_index, rep),
    }
}

pub fn short_config(plant: PlantKind, horizon: usize) -> ScenarioConfig {
    ScenarioConfig {
        plant,
        horizon,
        ..ScenarioConfig::default()
    }
}
