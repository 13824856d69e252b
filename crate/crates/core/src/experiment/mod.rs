//! Scenario orchestration for the cart-pole study: closed-loop runs, loss
//! sweeps, metrics and file exports.

mod closed_loop;
mod config;
mod export;
mod metrics;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

pub use closed_loop::{direct_mpc_loop, DirectStep, RunContext, RunKey, SimTrace, StepRecord, StepStatus, CHECK_TOL};
pub use config::{ControllerVariant, DisturbanceConfig, DisturbanceSource, LossModel, PlantKind, ScenarioConfig};
pub use export::{
    export_sweep, read_run_csv, report_dir, solve_time_histogram, summarize, write_run_csv, CsvReport, CsvRun,
    ExportPaths, RhoSummary, RunEntry, SweepSummary, HISTOGRAM_BIN_MS,
};
pub use metrics::{average_tracking_error, compute_metrics, histogram, quartiles, Histogram, Quartiles, RunSummary};

use crate::error::Result;
use crate::network::run_seed;

/// Keys of every run in a sweep, ordered by loss level then repetition.
pub fn sweep_keys(ctx: &RunContext, rhos: &[f64], seeds: usize, master_seed: u64) -> Vec<RunKey> {
    rhos.iter()
        .enumerate()
        .flat_map(|(rho_index, &rho)| {
            (0..seeds).map(move |rep| RunKey {
                variant: ctx.variant,
                plant: ctx.plant,
                rho_index,
                rho,
                rep,
                seed: run_seed(master_seed, rho_index, rep),
            })
        })
        .collect()
}

/// Run every key, in parallel when `threads` allows. Output order follows
/// `keys` regardless of scheduling.
pub fn run_keys(ctx: &RunContext, keys: &[RunKey], threads: usize) -> Result<Vec<SimTrace>> {
    let workers = match threads {
        0 => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
        t => t,
    }
    .min(keys.len().max(1));
    if workers <= 1 {
        return keys.iter().map(|k| ctx.simulate(*k)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<SimTrace>>>> = Mutex::new((0..keys.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= keys.len() {
                    break;
                }
                let out = ctx.simulate(keys[i]);
                slots.lock().expect("no worker panics while holding the lock")[i] = Some(out);
            });
        }
    });
    slots
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|s| s.expect("every key was simulated"))
        .collect()
}

/// Full sweep for the context's variant and plant.
pub fn run_sweep(
    ctx: &RunContext,
    rhos: &[f64],
    seeds: usize,
    master_seed: u64,
    threads: usize,
) -> Result<Vec<SimTrace>> {
    let keys = sweep_keys(ctx, rhos, seeds, master_seed);
    log::info!("{} {} sweep: {} runs", ctx.variant, ctx.plant, keys.len());
    run_keys(ctx, &keys, threads)
}
