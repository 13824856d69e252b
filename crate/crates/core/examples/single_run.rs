//! Design the benchmark controller and simulate one lossy run.
//!
//! `cargo run --release --example single_run -- ert 0.3`

use tubenet::experiment::{ControllerVariant, RunContext, RunKey, ScenarioConfig};
use tubenet::network::run_seed;

fn main() -> tubenet::Result<()> {
    let mut args = std::env::args().skip(1);
    let variant: ControllerVariant = args.next().as_deref().unwrap_or("rt").parse()?;
    let rho: f64 = args.next().and_then(|s| s.parse().ok()).unwrap_or(0.3);

    let cfg = ScenarioConfig {
        cache_dir: Some(std::env::temp_dir().join("tubenet-cache")),
        ..ScenarioConfig::default()
    };
    let ctx = RunContext::prepare(&cfg, variant)?;
    let key = RunKey {
        variant,
        plant: cfg.plant,
        rho_index: 0,
        rho,
        rep: 0,
        seed: run_seed(cfg.master_seed, 0, 0),
    };
    let trace = ctx.simulate(key)?;
    for r in trace.records.iter().step_by(50) {
        println!(
            "k {:>3}  p {:+.4}  phi {:+.4}  u {:+.3}  adopted {}",
            r.k, r.x[0], r.x[2], r.u[0], r.big_theta
        );
    }
    println!("{:#?}", trace.summary);
    Ok(())
}
