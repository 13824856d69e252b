use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::closed_loop::StepRecord;

/// Per-run figures of merit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub steps: usize,
    /// Mean of `‖x(k) − x_r‖₂` over the recorded steps.
    pub avg_tracking_error: f64,
    pub infeasible_steps: usize,
    pub tube_violations: usize,
    pub max_constraint_violation: f64,
    /// Largest `‖x̂(k|k−1) − x_n(k)‖∞` over steps with `Θ_k = 1`. Zero for the
    /// nominal-state estimator; the extended estimator tracks `x` instead, so
    /// there it measures the tube offset.
    pub max_consistent_estimate_gap: f64,
    pub truncated: bool,
}

/// Mean Euclidean distance of the states to `x_r`.
pub fn average_tracking_error<'a>(states: impl IntoIterator<Item = &'a DVector<f64>>, x_r: &DVector<f64>) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for x in states {
        sum += (x - x_r).norm();
        count += 1;
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

pub fn compute_metrics(records: &[StepRecord], x_r: &DVector<f64>, truncated: bool) -> RunSummary {
    RunSummary {
        steps: records.len(),
        avg_tracking_error: average_tracking_error(records.iter().map(|r| &r.x), x_r),
        infeasible_steps: records.iter().filter(|r| r.status.is_failure()).count(),
        tube_violations: records.iter().filter(|r| r.tube_checked && !r.in_tube).count(),
        max_constraint_violation: records.iter().map(|r| r.constraint_violation).fold(0.0, f64::max),
        max_consistent_estimate_gap: records
            .iter()
            .filter(|r| r.big_theta)
            .map(|r| r.estimate_gap)
            .fold(0.0, f64::max),
        truncated,
    }
}

/// Five-number summary for box plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quartiles {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Quartiles as medians of the lower and upper halves, excluding the
/// middle element for odd counts. `None` for an empty list.
pub fn quartiles(values: &[f64]) -> Option<Quartiles> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let (lower, upper) = if n == 1 {
        (&v[..], &v[..])
    } else {
        (&v[..n / 2], &v[n.div_ceil(2)..])
    };
    Some(Quartiles {
        min: v[0],
        q1: median_sorted(lower),
        median: median_sorted(&v),
        q3: median_sorted(upper),
        max: v[n - 1],
    })
}

/// Counts of solver wall times in bins of `width_ms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width_ms: f64,
    /// `counts[i]` covers `[i·w, (i+1)·w)`.
    pub counts: Vec<usize>,
    pub total: usize,
    pub median_ms: Option<f64>,
    pub max_ms: Option<f64>,
}

pub fn histogram(times_ms: &[f64], width_ms: f64) -> Histogram {
    let mut counts = Vec::new();
    for t in times_ms {
        let bin = (t.max(0.0) / width_ms).floor() as usize;
        if counts.len() <= bin {
            counts.resize(bin + 1, 0);
        }
        counts[bin] += 1;
    }
    let q = quartiles(times_ms);
    Histogram {
        bin_width_ms: width_ms,
        counts,
        total: times_ms.len(),
        median_ms: q.map(|q| q.median),
        max_ms: q.map(|q| q.max),
    }
}
