//! Plan search over the time/peak trade-off.

use rayon::prelude::*;
use serde::Serialize;

use crate::adjoint::Mode;

use super::simulate::Flat;
use super::{CallTreeCost, CostError, PlanVector};

/// Exhaustive search refuses trees with more non-root nodes than this.
pub const MAX_EXHAUSTIVE_NODES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ParetoPoint {
    /// `J`/`S` per non-root node, preorder.
    pub plan: String,
    /// Names of the split nodes.
    pub split: Vec<String>,
    pub peak_bytes: f64,
    pub total_time: f64,
}

fn point(tree: &CallTreeCost, plan: &PlanVector, peak: f64, time: f64) -> ParetoPoint {
    let nodes = tree.preorder();
    ParetoPoint {
        plan: plan.encode(),
        split: plan
            .0
            .iter()
            .zip(&nodes[1..])
            .filter(|(m, _)| **m == Mode::Split)
            .map(|(_, n)| n.name.clone())
            .collect(),
        peak_bytes: peak,
        total_time: time,
    }
}

/// Indices of the points no other point beats in both peak and time.
fn nondominated(vals: &[(f64, f64)]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].0.total_cmp(&vals[b].0).then(vals[a].1.total_cmp(&vals[b].1)));
    let mut keep = Vec::new();
    let mut best_before = f64::INFINITY;
    let mut i = 0;
    while i < order.len() {
        let peak = vals[order[i]].0;
        let group_min = vals[order[i]].1;
        let mut j = i;
        while j < order.len() && vals[order[j]].0 == peak {
            if vals[order[j]].1 == group_min && group_min < best_before {
                keep.push(order[j]);
            }
            j += 1;
        }
        best_before = best_before.min(group_min);
        i = j;
    }
    keep.sort_unstable();
    keep
}

/// Evaluates every plan and returns the nondominated ones in plan-string
/// order.
pub fn enumerate_pareto(tree: &CallTreeCost, kappa: f64) -> Result<Vec<ParetoPoint>, CostError> {
    tree.check()?;
    let flat = Flat::new(tree);
    let n = flat.decisions();
    if n > MAX_EXHAUSTIVE_NODES {
        return Err(CostError::TooLarge(format!(
            "exhaustive search covers at most {MAX_EXHAUSTIVE_NODES} non-root nodes, this tree has {n}; use the greedy search instead"
        )));
    }
    let vals: Vec<(f64, f64)> = (0..1u64 << n)
        .into_par_iter()
        .map(|mask| {
            let p = flat.run(&PlanVector::from_mask(n, mask), kappa, false);
            (p.peak_bytes, p.total_time)
        })
        .collect();
    Ok(nondominated(&vals)
        .into_iter()
        .map(|k| point(tree, &PlanVector::from_mask(n, k as u64), vals[k].0, vals[k].1))
        .collect())
}

/// Starts from split-all and repeatedly makes joint the node with the best
/// peak reduction per unit of added time. Returns the nondominated plans
/// met on the way; there is no optimality guarantee.
pub fn greedy_pareto(tree: &CallTreeCost, kappa: f64) -> Result<Vec<ParetoPoint>, CostError> {
    tree.check()?;
    let flat = Flat::new(tree);
    let eval = |p: &PlanVector| {
        let r = flat.run(p, kappa, false);
        (r.peak_bytes, r.total_time)
    };
    let mut plan = PlanVector::uniform(tree, Mode::Split);
    let mut cur = eval(&plan);
    let mut seen = vec![(plan.clone(), cur)];
    loop {
        let mut best: Option<(f64, PlanVector, (f64, f64))> = None;
        for k in 0..plan.0.len() {
            if plan.0[k] == Mode::Joint {
                continue;
            }
            let mut cand = plan.clone();
            cand.0[k] = Mode::Joint;
            let v = eval(&cand);
            let saved = cur.0 - v.0;
            if saved <= 0.0 {
                continue;
            }
            let added = v.1 - cur.1;
            let score = if added <= 0.0 { f64::INFINITY } else { saved / added };
            if best.as_ref().is_none_or(|(s, _, _)| score > *s) {
                best = Some((score, cand, v));
            }
        }
        let Some((_, next, v)) = best else { break };
        plan = next;
        cur = v;
        seen.push((plan.clone(), cur));
    }
    seen.sort_by(|a, b| a.0.cmp(&b.0));
    seen.dedup_by(|a, b| a.0 == b.0);
    let vals: Vec<(f64, f64)> = seen.iter().map(|s| s.1).collect();
    Ok(nondominated(&vals).into_iter().map(|k| point(tree, &seen[k].0, vals[k].0, vals[k].1)).collect())
}
