use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use tubenet::experiment::{
    export_sweep, report_dir, run_keys, run_sweep, write_run_csv, ControllerVariant, PlantKind, RunContext, RunKey,
    ScenarioConfig,
};
use tubenet::network::run_seed;
use tubenet::synthesis::{cache_path, synthesize_cached};
use tubenet::Error;

#[derive(Parser)]
#[command(
    name = "tubenet",
    version,
    about = "Tube-based tracking MPC over lossy links: design, simulate, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute (or load from cache) the offline design and print its diagnostics.
    Synthesize(Common),
    /// Simulate single runs and write their CSV traces.
    Run(RunArgs),
    /// Simulate the full loss sweep and write traces, summary and timing histogram.
    Sweep(Common),
    /// Recompute summaries from the CSV files in a directory.
    Report(ReportArgs),
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML); every key is optional.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<ControllerVariant>,
    #[arg(long)]
    plant: Option<PlantKind>,
    /// Loss probability; repeat or comma-separate for several levels.
    #[arg(long, value_delimiter = ',')]
    rho: Vec<f64>,
    /// Repetitions per loss level.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    master_seed: Option<u64>,
    /// Simulated steps per run.
    #[arg(long)]
    horizon: Option<usize>,
    /// Record solver wall times in the CSV files.
    #[arg(long)]
    timing: bool,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Run only this repetition index instead of all of them.
    #[arg(long)]
    rep: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding run CSV files.
    #[arg(long, default_value = "out")]
    dir: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> tubenet::Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => ScenarioConfig::load(path)?,
            None => ScenarioConfig::default(),
        };
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(p) = self.plant {
            cfg.plant = p;
        }
        if !self.rho.is_empty() {
            cfg.rhos = self.rho.clone();
        }
        if let Some(s) = self.seeds {
            cfg.seeds = s;
        }
        if let Some(o) = &self.out {
            cfg.out = o.clone();
        }
        if let Some(m) = self.master_seed {
            cfg.master_seed = m;
        }
        if let Some(h) = self.horizon {
            cfg.horizon = h;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.timing |= self.timing;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn to_json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).unwrap_or_else(|e| format!("<unserializable: {e}>"))
}

fn synthesize_cmd(args: &Common) -> tubenet::Result<()> {
    let cfg = args.resolve()?;
    let spec = cfg.synthesis_spec(cfg.variant)?;
    let dir = cfg.cache_dir();
    let syn = synthesize_cached(&spec, &dir)?;
    println!(
        "design {} written to {}",
        &syn.key[..16],
        cache_path(&dir, &spec)?.display()
    );
    println!("{}", to_json(&syn.diagnostics));
    println!(
        "Z_K rows {}, X_c rows {}, X_f rows {}",
        syn.sets.z_k.n_rows(),
        syn.sets.x_c.n_rows(),
        syn.sets.x_f.n_rows()
    );
    Ok(())
}

fn run_cmd(args: &RunArgs) -> tubenet::Result<()> {
    let cfg = args.common.resolve()?;
    let ctx = RunContext::prepare(&cfg, cfg.variant)?;
    let reps: Vec<usize> = match args.rep {
        Some(r) => vec![r],
        None => (0..cfg.seeds).collect(),
    };
    let keys: Vec<RunKey> = cfg
        .rhos
        .iter()
        .enumerate()
        .flat_map(|(rho_index, &rho)| {
            reps.iter().map(move |&rep| RunKey {
                variant: cfg.variant,
                plant: cfg.plant,
                rho_index,
                rho,
                rep,
                seed: run_seed(cfg.master_seed, rho_index, rep),
            })
        })
        .collect();
    let traces = run_keys(&ctx, &keys, cfg.threads)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| io_error(&cfg.out, e))?;
    for t in &traces {
        let path = cfg.out.join(format!("{}.csv", t.key.file_stem()));
        write_run_csv(&path, t, cfg.timing)?;
        let s = &t.summary;
        println!(
            "{}: error {:.6}, infeasible {}, tube violations {}{}",
            path.display(),
            s.avg_tracking_error,
            s.infeasible_steps,
            s.tube_violations,
            t.truncated
                .as_deref()
                .map(|r| format!(" (truncated: {r})"))
                .unwrap_or_default()
        );
    }
    Ok(())
}

fn sweep_cmd(args: &Common) -> tubenet::Result<()> {
    let cfg = args.resolve()?;
    let ctx = RunContext::prepare(&cfg, cfg.variant)?;
    let traces = run_sweep(&ctx, &cfg.rhos, cfg.seeds, cfg.master_seed, cfg.threads)?;
    let paths = export_sweep(&cfg.out, cfg.variant, cfg.plant, &traces, cfg.timing)?;
    info!("wrote {} traces", paths.csv.len());
    println!("summary: {}", paths.summary.display());
    println!("solver times: {}", paths.histogram.display());
    Ok(())
}

fn report_cmd(args: &ReportArgs) -> tubenet::Result<()> {
    let cfg = match &args.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let rows = report_dir(&args.dir, &cfg.reference_vector())?;
    println!("{}", to_json(&rows));
    Ok(())
}

fn io_error(path: &Path, e: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Synthesis(_) | Error::EmptySet(_) | Error::UnboundedSet => 2,
        Error::Io { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Synthesize(a) => synthesize_cmd(a),
        Command::Run(a) => run_cmd(a),
        Command::Sweep(a) => sweep_cmd(a),
        Command::Report(a) => report_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
