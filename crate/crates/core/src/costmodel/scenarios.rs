//! The two uniform-cost scenarios on the canonical tree.

use std::fmt::Write;

use serde::Serialize;

use crate::adjoint::Mode;

use super::{simulate, CallTreeCost, PlanVector};

/// `A` calling `B` and `D`; `B` calls `C` and `D` calls `E`. Every node
/// takes one time unit per sweep and has the same tape and snapshot.
pub fn canonical_tree(tape: f64, snapshot: f64) -> CallTreeCost {
    let n = |name: &str| CallTreeCost::leaf(name, 1.0, tape, snapshot);
    n("A").with_children(vec![n("B").with_children(vec![n("C")]), n("D").with_children(vec![n("E")])])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    #[serde(rename = "Joint-All")]
    JointAll,
    #[serde(rename = "Split-All")]
    SplitAll,
    /// Joint everywhere except D.
    #[serde(rename = "hybrid1")]
    Hybrid1,
    /// Split everywhere except D.
    #[serde(rename = "hybrid2")]
    Hybrid2,
}

impl Strategy {
    pub const ALL: [Strategy; 4] = [Strategy::JointAll, Strategy::SplitAll, Strategy::Hybrid1, Strategy::Hybrid2];

    pub fn label(self) -> &'static str {
        match self {
            Strategy::JointAll => "Joint-All",
            Strategy::SplitAll => "Split-All",
            Strategy::Hybrid1 => "hybrid1 (joint, D split)",
            Strategy::Hybrid2 => "hybrid2 (split, D joint)",
        }
    }

    pub fn plan(self, tree: &CallTreeCost) -> PlanVector {
        match self {
            Strategy::JointAll => PlanVector::uniform(tree, Mode::Joint),
            Strategy::SplitAll => PlanVector::uniform(tree, Mode::Split),
            Strategy::Hybrid1 => PlanVector::split_named(tree, &["D"]).expect("canonical tree has D"),
            Strategy::Hybrid2 => PlanVector::joint_named(tree, &["D"]).expect("canonical tree has D"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioRow {
    pub strategy: Strategy,
    pub plan: String,
    pub peak_bytes: f64,
    pub total_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Scenario {
    pub name: String,
    pub tape: f64,
    pub snapshot: f64,
    pub kappa: f64,
    pub rows: Vec<ScenarioRow>,
}

impl Scenario {
    pub fn run(name: &str, tape: f64, snapshot: f64, kappa: f64) -> Self {
        let tree = canonical_tree(tape, snapshot);
        let rows = Strategy::ALL
            .iter()
            .map(|&s| {
                let plan = s.plan(&tree);
                let p = simulate(&tree, &plan, kappa).expect("canonical tree and plans are valid");
                ScenarioRow { strategy: s, plan: plan.encode(), peak_bytes: p.peak_bytes, total_time: p.total_time }
            })
            .collect();
        Scenario { name: name.to_string(), tape, snapshot, kappa, rows }
    }

    pub fn tree(&self) -> CallTreeCost {
        canonical_tree(self.tape, self.snapshot)
    }

    pub fn row(&self, s: Strategy) -> &ScenarioRow {
        self.rows.iter().find(|r| r.strategy == s).expect("all strategies are simulated")
    }

    fn extreme(&self, key: impl Fn(&ScenarioRow) -> f64, want_max: bool) -> Vec<Strategy> {
        let vals = self.rows.iter().map(&key);
        let best = if want_max { vals.fold(f64::MIN, f64::max) } else { vals.fold(f64::MAX, f64::min) };
        self.rows.iter().filter(|r| key(r) == best).map(|r| r.strategy).collect()
    }

    pub fn min_peak(&self) -> Vec<Strategy> {
        self.extreme(|r| r.peak_bytes, false)
    }

    pub fn max_peak(&self) -> Vec<Strategy> {
        self.extreme(|r| r.peak_bytes, true)
    }

    pub fn min_time(&self) -> Vec<Strategy> {
        self.extreme(|r| r.total_time, false)
    }

    pub fn max_time(&self) -> Vec<Strategy> {
        self.extreme(|r| r.total_time, true)
    }

    pub fn peak_range(&self) -> (f64, f64) {
        let p = self.rows.iter().map(|r| r.peak_bytes);
        (p.clone().fold(f64::MAX, f64::min), p.fold(f64::MIN, f64::max))
    }

    pub fn to_text(&self) -> String {
        let mut out =
            format!("{}: tape = {}, snapshot = {}, kappa = {}\n", self.name, self.tape, self.snapshot, self.kappa);
        let _ = writeln!(out, "{:<26} {:>6} {:>10} {:>10}", "strategy", "plan", "peak", "time");
        for r in &self.rows {
            let _ =
                writeln!(out, "{:<26} {:>6} {:>10.2} {:>10.2}", r.strategy.label(), r.plan, r.peak_bytes, r.total_time);
        }
        let names = |v: Vec<Strategy>| v.iter().map(|s| s.label()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(out, "min peak: {}", names(self.min_peak()));
        let _ = writeln!(out, "max peak: {}", names(self.max_peak()));
        let _ = writeln!(out, "min time: {}", names(self.min_time()));
        let _ = writeln!(out, "max time: {}", names(self.max_time()));
        out
    }
}

/// Scenario A (tape 10, snapshot 6) and scenario B (tape 6, snapshot 10).
pub fn paper_scenarios(kappa: f64) -> [Scenario; 2] {
    [Scenario::run("paper-A", 10.0, 6.0, kappa), Scenario::run("paper-B", 6.0, 10.0, kappa)]
}
