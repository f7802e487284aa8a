//! Side-by-side runs of one program under several plans, with percentage
//! gains against a baseline row.

use std::fmt::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::adjoint::{differentiate, AdError, CheckpointPlan, DiffOptions, RunStats};
use crate::lang::{Program, Store};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no plans to compare")]
    Empty,
    #[error("baseline row {0} is out of range")]
    Baseline(usize),
    #[error("plan `{id}`: {source}")]
    Run { id: String, source: AdError },
    #[error("gradient of plan `{id}` differs from plan `{baseline}`")]
    Mismatch { id: String, baseline: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ComparisonRow {
    pub id: String,
    pub description: String,
    /// Op count plus the traffic charge.
    pub total_time: f64,
    pub ops: u64,
    /// Left out of JSON when cleared, so the output stays byte-stable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_ms: Option<f64>,
    pub time_gain_pct: Option<f64>,
    pub peak_bytes: u64,
    pub mem_gain_pct: Option<f64>,
    #[serde(skip)]
    pub stats: RunStats,
}

/// `100 * (base - value) / base`; negative means worse than the base.
pub fn gain_pct(base: f64, value: f64) -> f64 {
    if base == 0.0 {
        if value == 0.0 {
            0.0
        } else {
            -value.signum() * f64::INFINITY
        }
    } else {
        100.0 * (base - value) / base
    }
}

/// Named plans to run, in output order.
pub struct PlanSet {
    pub entries: Vec<(String, String, CheckpointPlan)>,
}

impl PlanSet {
    pub fn new() -> Self {
        PlanSet { entries: Vec::new() }
    }

    pub fn add(mut self, id: &str, description: &str, plan: CheckpointPlan) -> Self {
        self.entries.push((id.to_string(), description.to_string(), plan));
        self
    }
}

impl Default for PlanSet {
    fn default() -> Self {
        Self::new()
    }
}

/// Differentiates under every plan (rows in parallel, order kept), checks
/// that every gradient is bit-identical to the baseline's and fills in the
/// gains.
#[allow(clippy::too_many_arguments)]
pub fn compare(
    program: &Program,
    entry: &str,
    inputs: &Store,
    weights: &Store,
    plans: &PlanSet,
    baseline: usize,
    kappa: f64,
    opts: DiffOptions,
) -> Result<Vec<ComparisonRow>, MetricsError> {
    if plans.entries.is_empty() {
        return Err(MetricsError::Empty);
    }
    if baseline >= plans.entries.len() {
        return Err(MetricsError::Baseline(baseline));
    }
    let runs: Vec<_> = plans
        .entries
        .par_iter()
        .map(|(id, _, plan)| {
            let start = Instant::now();
            let d = differentiate(program, entry, inputs, weights, plan, opts)
                .map_err(|e| MetricsError::Run { id: id.clone(), source: e })?;
            Ok((d, start.elapsed().as_secs_f64() * 1e3))
        })
        .collect::<Result<_, MetricsError>>()?;
    let base = &runs[baseline].0;
    let base_id = &plans.entries[baseline].0;
    for ((d, _), (id, _, _)) in runs.iter().zip(&plans.entries) {
        if d.gradient != base.gradient {
            return Err(MetricsError::Mismatch { id: id.clone(), baseline: base_id.clone() });
        }
    }
    let (bt, bp) = (base.stats.time(kappa), base.stats.peak_bytes as f64);
    Ok(runs
        .into_iter()
        .zip(&plans.entries)
        .enumerate()
        .map(|(k, ((d, wall), (id, desc, _)))| {
            let t = d.stats.time(kappa);
            let own = k == baseline;
            ComparisonRow {
                id: id.clone(),
                description: desc.clone(),
                total_time: t,
                ops: d.stats.ops(),
                wall_ms: Some(wall),
                time_gain_pct: (!own).then(|| gain_pct(bt, t)),
                peak_bytes: d.stats.peak_bytes,
                mem_gain_pct: (!own).then(|| gain_pct(bp, d.stats.peak_bytes as f64)),
                stats: d.stats,
            }
        })
        .collect())
}

fn cell(v: Option<f64>) -> String {
    v.map(|g| format!("{g:.1}")).unwrap_or_default()
}

/// Aligned table: id, description, time, gain, peak, gain, wall clock.
pub fn to_text(rows: &[ComparisonRow]) -> String {
    let w = rows.iter().map(|r| r.description.len()).max().unwrap_or(0).max(11);
    let id_w = rows.iter().map(|r| r.id.len()).max().unwrap_or(0).max(2);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<id_w$}  {:<w$}  {:>12}  {:>8}  {:>12}  {:>8}  {:>10}",
        "id", "description", "time", "% gain", "peak bytes", "% gain", "wall ms"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<id_w$}  {:<w$}  {:>12}  {:>8}  {:>12}  {:>8}  {:>10}",
            r.id,
            r.description,
            r.total_time,
            cell(r.time_gain_pct),
            r.peak_bytes,
            cell(r.mem_gain_pct),
            r.wall_ms.map(|w| format!("{w:.3}")).unwrap_or_default()
        );
    }
    out
}
