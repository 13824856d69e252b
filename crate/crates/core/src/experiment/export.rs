use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::closed_loop::{SimTrace, StepStatus};
use super::config::{ControllerVariant, PlantKind};
use super::metrics::{average_tracking_error, histogram, quartiles, Histogram, Quartiles, RunSummary};
use crate::error::{Error, Result};

/// Width of the solver-time histogram bins.
pub const HISTOGRAM_BIN_MS: f64 = 0.5;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Config(format!("{}: {other:?}", path.display())),
    }
}

fn header(nx: usize, nu: usize) -> Vec<String> {
    let mut h = vec!["k".to_string()];
    let vec_cols = |h: &mut Vec<String>, name: &str, n: usize| {
        if n == 1 {
            h.push(name.to_string());
        } else {
            h.extend((0..n).map(|i| format!("{name}{i}")));
        }
    };
    vec_cols(&mut h, "x", nx);
    vec_cols(&mut h, "xn", nx);
    vec_cols(&mut h, "u", nu);
    vec_cols(&mut h, "un", nu);
    vec_cols(&mut h, "xhat", nx);
    h.extend(["theta", "gamma", "Theta", "s", "q", "status", "solve_ms"].map(String::from));
    h
}

/// One CSV row per recorded step. `solve_ms` stays blank unless `timing`.
pub fn write_run_csv(path: &Path, trace: &SimTrace, timing: bool) -> Result<()> {
    let (nx, nu) = trace.records.first().map(|r| (r.x.len(), r.u.len())).unwrap_or((4, 1));
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header(nx, nu)).map_err(|e| csv_err(path, e))?;
    let bit = |b: bool| if b { "1".to_string() } else { "0".to_string() };
    for r in &trace.records {
        let mut row = vec![r.k.to_string()];
        for v in [&r.x, &r.x_n, &r.u, &r.u_n, &r.x_hat] {
            row.extend(v.iter().map(|x| format!("{x}")));
        }
        row.extend([
            bit(r.theta),
            bit(r.gamma),
            bit(r.big_theta),
            r.s.to_string(),
            r.q.to_string(),
            r.status.tag().to_string(),
            if timing {
                format!("{}", r.solve_ms)
            } else {
                String::new()
            },
        ]);
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// A run read back from its CSV file.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRun {
    pub k: Vec<i64>,
    pub x: Vec<DVector<f64>>,
    pub x_n: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub big_theta: Vec<bool>,
    pub s: Vec<i64>,
    pub status: Vec<StepStatus>,
    pub solve_ms: Vec<Option<f64>>,
}

impl CsvRun {
    pub fn infeasible_steps(&self) -> usize {
        self.status.iter().filter(|s| s.is_failure()).count()
    }

    pub fn average_tracking_error(&self, x_r: &DVector<f64>) -> f64 {
        average_tracking_error(&self.x, x_r)
    }
}

pub fn read_run_csv(path: &Path) -> Result<CsvRun> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rd.headers().map_err(|e| csv_err(path, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let cols = |prefix: &str| -> Vec<usize> {
        match col(prefix) {
            Some(i) => vec![i],
            None => (0..).map_while(|i| col(&format!("{prefix}{i}"))).collect(),
        }
    };
    let need =
        |name: &str| col(name).ok_or_else(|| Error::Config(format!("{}: missing column {name}", path.display())));
    let (xc, xnc, uc) = (cols("x"), cols("xn"), cols("u"));
    let (kc, tc, sc, stc, msc) = (
        need("k")?,
        need("Theta")?,
        need("s")?,
        need("status")?,
        need("solve_ms")?,
    );
    let bad = |what: &str| Error::Config(format!("{}: malformed {what}", path.display()));
    let mut run = CsvRun {
        k: vec![],
        x: vec![],
        x_n: vec![],
        u: vec![],
        big_theta: vec![],
        s: vec![],
        status: vec![],
        solve_ms: vec![],
    };
    for rec in rd.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| bad("number"));
        let vecf = |c: &[usize]| -> Result<DVector<f64>> {
            Ok(DVector::from_vec(
                c.iter().map(|i| num(*i)).collect::<Result<Vec<_>>>()?,
            ))
        };
        run.k.push(rec[kc].parse().map_err(|_| bad("k"))?);
        run.x.push(vecf(&xc)?);
        run.x_n.push(vecf(&xnc)?);
        run.u.push(vecf(&uc)?);
        run.big_theta.push(&rec[tc] == "1");
        run.s.push(rec[sc].parse().map_err(|_| bad("s"))?);
        run.status
            .push(StepStatus::from_tag(&rec[stc]).ok_or_else(|| bad("status"))?);
        run.solve_ms
            .push(if rec[msc].is_empty() { None } else { Some(num(msc)?) });
    }
    Ok(run)
}

/// Aggregates for one loss level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoSummary {
    pub rho: f64,
    pub runs: usize,
    pub runs_with_infeasible_steps: usize,
    pub runs_with_tube_violations: usize,
    pub max_constraint_violation: f64,
    /// Over all runs.
    pub tracking_error: Option<Quartiles>,
    /// Over runs without an infeasible step.
    pub tracking_error_feasible: Option<Quartiles>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub file: String,
    pub rho: f64,
    pub rep: usize,
    pub seed: u64,
    pub summary: RunSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub variant: ControllerVariant,
    pub plant: PlantKind,
    pub per_rho: Vec<RhoSummary>,
    pub runs: Vec<RunEntry>,
}

pub fn summarize(variant: ControllerVariant, plant: PlantKind, traces: &[SimTrace]) -> SweepSummary {
    let mut rhos: Vec<(usize, f64)> = traces.iter().map(|t| (t.key.rho_index, t.key.rho)).collect();
    rhos.sort_by_key(|r| r.0);
    rhos.dedup_by_key(|r| r.0);
    let per_rho = rhos
        .into_iter()
        .map(|(idx, rho)| {
            let group: Vec<&SimTrace> = traces.iter().filter(|t| t.key.rho_index == idx).collect();
            let errs: Vec<f64> = group.iter().map(|t| t.summary.avg_tracking_error).collect();
            let feasible: Vec<f64> = group
                .iter()
                .filter(|t| t.summary.infeasible_steps == 0)
                .map(|t| t.summary.avg_tracking_error)
                .collect();
            RhoSummary {
                rho,
                runs: group.len(),
                runs_with_infeasible_steps: group.iter().filter(|t| t.summary.infeasible_steps > 0).count(),
                runs_with_tube_violations: group.iter().filter(|t| t.summary.tube_violations > 0).count(),
                max_constraint_violation: group
                    .iter()
                    .map(|t| t.summary.max_constraint_violation)
                    .fold(0.0, f64::max),
                tracking_error: quartiles(&errs),
                tracking_error_feasible: quartiles(&feasible),
            }
        })
        .collect();
    let runs = traces
        .iter()
        .map(|t| RunEntry {
            file: format!("{}.csv", t.key.file_stem()),
            rho: t.key.rho,
            rep: t.key.rep,
            seed: t.key.seed,
            summary: t.summary.clone(),
        })
        .collect();
    SweepSummary {
        variant,
        plant,
        per_rho,
        runs,
    }
}

pub fn solve_time_histogram(traces: &[SimTrace]) -> Histogram {
    let times: Vec<f64> = traces
        .iter()
        .flat_map(|t| t.records.iter().map(|r| r.solve_ms))
        .collect();
    histogram(&times, HISTOGRAM_BIN_MS)
}

/// Files written by [`export_sweep`].
#[derive(Debug, Clone)]
pub struct ExportPaths {
    pub csv: Vec<PathBuf>,
    pub summary: PathBuf,
    pub histogram: PathBuf,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Per-run CSVs, the sweep summary and the solver-time histogram.
pub fn export_sweep(
    dir: &Path,
    variant: ControllerVariant,
    plant: PlantKind,
    traces: &[SimTrace],
    timing: bool,
) -> Result<ExportPaths> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut csv = Vec::with_capacity(traces.len());
    for t in traces {
        let path = dir.join(format!("{}.csv", t.key.file_stem()));
        write_run_csv(&path, t, timing)?;
        csv.push(path);
    }
    let summary = dir.join(format!("summary-{variant}-{plant}.json"));
    write_json(&summary, &summarize(variant, plant, traces))?;
    let histogram = dir.join(format!("solve-times-{variant}-{plant}.json"));
    write_json(&histogram, &solve_time_histogram(traces))?;
    Ok(ExportPaths {
        csv,
        summary,
        histogram,
    })
}

/// Summary row produced by the `report` command for one CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvReport {
    pub file: String,
    pub steps: usize,
    pub avg_tracking_error: f64,
    pub infeasible_steps: usize,
    pub median_solve_ms: Option<f64>,
}

/// Recompute the summaries of every `*.csv` in `dir`, sorted by file name.
pub fn report_dir(dir: &Path, x_r: &DVector<f64>) -> Result<Vec<CsvReport>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    files.sort();
    files
        .iter()
        .map(|p| {
            let run = read_run_csv(p)?;
            let times: Vec<f64> = run.solve_ms.iter().flatten().copied().collect();
            Ok(CsvReport {
                file: p
                    .file_name()
                    .map(|f| f.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                steps: run.k.len(),
                avg_tracking_error: run.average_tracking_error(x_r),
                infeasible_steps: run.infeasible_steps(),
                median_solve_ms: quartiles(&times).map(|q| q.median),
            })
        })
        .collect()
}
