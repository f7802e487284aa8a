//! Central finite-difference check of a computed gradient.

use serde::Serialize;

use crate::lang::{eval_primal, EvalOptions, Program, Store, Value};

use super::engine::{differentiate, DiffOptions};
use super::plan::CheckpointPlan;
use super::AdError;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FdEntry {
    pub var: String,
    /// 1-based element index for arrays.
    pub index: Option<usize>,
    pub adjoint: f64,
    pub finite_diff: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct FdReport {
    pub max_rel_error: f64,
    pub entries: Vec<FdEntry>,
}

/// `|a - b| / max(|a|, |b|, 1)`.
pub fn rel_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

/// Weighted sum of the entry's final parameter values.
pub fn weighted_output(
    program: &Program,
    entry: &str,
    inputs: &Store,
    weights: &Store,
    opts: EvalOptions,
) -> Result<f64, AdError> {
    let out = eval_primal(program, entry, inputs, opts).map_err(|e| AdError::Eval { sweep: "primal", source: e })?;
    let mut j = 0.0;
    for (name, w) in &weights.0 {
        let Some(v) = out.get(name) else {
            return Err(AdError::Input(format!("weighted output `{name}` was never assigned")));
        };
        j += w.cells().iter().zip(v.cells()).map(|(a, b)| a * b).sum::<f64>();
    }
    Ok(j)
}

fn perturbed(inputs: &Store, var: &str, k: usize, delta: f64) -> Store {
    let mut s = inputs.clone();
    if let Some(v) = s.0.get_mut(var) {
        v.cells_mut()[k] += delta;
    }
    s
}

/// Compares the adjoint gradient against central differences along every
/// input cell. The step for a cell of value `v` is `h * max(1, |v|)`.
pub fn fd_check(
    program: &Program,
    entry: &str,
    inputs: &Store,
    weights: &Store,
    plan: &CheckpointPlan,
    h: f64,
    opts: EvalOptions,
) -> Result<FdReport, AdError> {
    let d = differentiate(program, entry, inputs, weights, plan, DiffOptions { eval: opts, shadow: false })?;
    let mut entries = Vec::new();
    for (name, value) in &inputs.0 {
        let grad = d.gradient.get(name).map(|g| g.cells().to_vec()).unwrap_or_default();
        for (k, &v) in value.cells().iter().enumerate() {
            let step = h * v.abs().max(1.0);
            let up = weighted_output(program, entry, &perturbed(inputs, name, k, step), weights, opts)?;
            let down = weighted_output(program, entry, &perturbed(inputs, name, k, -step), weights, opts)?;
            let fd = (up - down) / (2.0 * step);
            let ad = grad.get(k).copied().unwrap_or(0.0);
            entries.push(FdEntry {
                var: name.clone(),
                index: matches!(value, Value::Array(_)).then_some(k + 1),
                adjoint: ad,
                finite_diff: fd,
                rel_error: rel_error(ad, fd),
            });
        }
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(FdReport { max_rel_error, entries })
}
