//! Analytic model of a checkpoint plan's stack profile over an annotated
//! call tree, plus plan search and calibration from engine runs.

mod calibrate;
mod scenarios;
mod search;
mod simulate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adjoint::{CheckpointPlan, Mode};
use crate::lang::SiteId;

pub use calibrate::calibrate;
pub use scenarios::{canonical_tree, paper_scenarios, Scenario, ScenarioRow, Strategy};
pub use search::{enumerate_pareto, greedy_pareto, ParetoPoint, MAX_EXHAUSTIVE_NODES};
pub use simulate::{simulate, Profile};

#[derive(Debug, Error, PartialEq)]
pub enum CostError {
    #[error("invalid cost tree: {0}")]
    Tree(String),
    #[error("invalid plan: {0}")]
    Plan(String),
    #[error("{0}")]
    TooLarge(String),
    #[error("calibration: {0}")]
    Calibration(String),
}

/// A call tree annotated with per-node costs. Times are in op units and
/// sizes in bytes; a node's `tape` excludes its children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallTreeCost {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<SiteId>,
    #[serde(default)]
    pub t_primal: f64,
    #[serde(default)]
    pub t_fwd: f64,
    #[serde(default)]
    pub t_bwd: f64,
    #[serde(default)]
    pub tape: f64,
    #[serde(default)]
    pub snapshot: f64,
    /// Call record: pushed with the snapshot, popped after the replay.
    #[serde(default)]
    pub record: f64,
    #[serde(default)]
    pub locals: f64,
    /// Own forward time and tape between consecutive children, one entry
    /// more than there are children. Empty means spread evenly.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<(f64, f64)>,
    /// Extra tape the caller records right after this call when the call
    /// is split.
    #[serde(default)]
    pub caller_tape: f64,
    /// Own costs when the node is split, where they differ from the joint ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split_costs: Option<OwnCosts>,
    #[serde(default)]
    pub children: Vec<CallTreeCost>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnCosts {
    pub t_fwd: f64,
    pub t_bwd: f64,
    pub tape: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub segments: Vec<(f64, f64)>,
}

impl CallTreeCost {
    pub fn leaf(name: &str, t: f64, tape: f64, snapshot: f64) -> Self {
        CallTreeCost {
            name: name.to_string(),
            site: None,
            t_primal: t,
            t_fwd: t,
            t_bwd: t,
            tape,
            snapshot,
            record: 0.0,
            locals: 0.0,
            segments: Vec::new(),
            caller_tape: 0.0,
            split_costs: None,
            children: Vec::new(),
        }
    }

    pub fn with_children(mut self, children: Vec<CallTreeCost>) -> Self {
        self.children = children;
        self
    }

    pub fn from_json(text: &str) -> Result<Self, CostError> {
        let t: CallTreeCost = serde_json::from_str(text).map_err(|e| CostError::Tree(e.to_string()))?;
        t.check()?;
        Ok(t)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("tree serializes")
    }

    /// Rejects negative or non-finite costs.
    pub fn check(&self) -> Result<(), CostError> {
        let mut vals = vec![
            self.t_primal,
            self.t_fwd,
            self.t_bwd,
            self.tape,
            self.snapshot,
            self.record,
            self.locals,
            self.caller_tape,
        ];
        let mut segs = vec![&self.segments];
        vals.extend(self.segments.iter().flat_map(|(a, b)| [*a, *b]));
        if let Some(c) = &self.split_costs {
            vals.extend([c.t_fwd, c.t_bwd, c.tape]);
            vals.extend(c.segments.iter().flat_map(|(a, b)| [*a, *b]));
            segs.push(&c.segments);
        }
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(CostError::Tree(format!("node `{}` has a negative or non-finite cost", self.name)));
        }
        if segs.iter().any(|s| !s.is_empty() && s.len() != self.children.len() + 1) {
            return Err(CostError::Tree(format!("node `{}` needs one segment more than it has children", self.name)));
        }
        self.children.iter().try_for_each(CallTreeCost::check)
    }

    /// Number of nodes including the root.
    pub fn len(&self) -> usize {
        1 + self.children.iter().map(CallTreeCost::len).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Own primal time plus that of every descendant.
    pub fn primal_time(&self) -> f64 {
        self.t_primal + self.children.iter().map(CallTreeCost::primal_time).sum::<f64>()
    }

    /// Nodes in preorder, root first.
    pub fn preorder(&self) -> Vec<&CallTreeCost> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.preorder());
        }
        out
    }
}

/// Mode of every non-root node, in preorder. The root is always
/// differentiated once, so it has no entry.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PlanVector(pub Vec<Mode>);

impl PlanVector {
    pub fn uniform(tree: &CallTreeCost, mode: Mode) -> Self {
        PlanVector(vec![mode; tree.len() - 1])
    }

    /// Bit `k` of `mask` set means node `k + 1` (preorder) is split.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        PlanVector((0..n).map(|k| if mask >> (n - 1 - k) & 1 == 1 { Mode::Split } else { Mode::Joint }).collect())
    }

    /// One letter per non-root node: `J` or `S`.
    pub fn encode(&self) -> String {
        self.0.iter().map(|m| if *m == Mode::Joint { 'J' } else { 'S' }).collect()
    }

    pub fn decode(text: &str) -> Result<Self, CostError> {
        text.chars()
            .map(|c| match c.to_ascii_uppercase() {
                'J' => Ok(Mode::Joint),
                'S' => Ok(Mode::Split),
                _ => Err(CostError::Plan(format!("unexpected `{c}` in plan string `{text}`; use J and S"))),
            })
            .collect::<Result<_, _>>()
            .map(PlanVector)
    }

    /// Joint everywhere except the named nodes.
    pub fn split_named<S: AsRef<str>>(tree: &CallTreeCost, names: &[S]) -> Result<Self, CostError> {
        Self::named(tree, names, Mode::Split)
    }

    /// Split everywhere except the named nodes.
    pub fn joint_named<S: AsRef<str>>(tree: &CallTreeCost, names: &[S]) -> Result<Self, CostError> {
        Self::named(tree, names, Mode::Joint)
    }

    fn named<S: AsRef<str>>(tree: &CallTreeCost, names: &[S], mode: Mode) -> Result<Self, CostError> {
        let nodes = tree.preorder();
        for n in names {
            if !nodes[1..].iter().any(|t| t.name == n.as_ref()) {
                return Err(CostError::Plan(format!("no non-root node named `{}`", n.as_ref())));
            }
        }
        let other = if mode == Mode::Split { Mode::Joint } else { Mode::Split };
        Ok(PlanVector(
            nodes[1..].iter().map(|t| if names.iter().any(|n| n.as_ref() == t.name) { mode } else { other }).collect(),
        ))
    }

    /// Reads the site of every node from a program-level plan. Nodes
    /// without a site, or sites the plan omits, are joint.
    pub fn from_site_plan(tree: &CallTreeCost, plan: &CheckpointPlan) -> Self {
        PlanVector(
            tree.preorder()[1..]
                .iter()
                .map(|t| t.site.as_ref().and_then(|s| plan.mode(s)).unwrap_or(Mode::Joint))
                .collect(),
        )
    }

    pub fn split_count(&self) -> usize {
        self.0.iter().filter(|m| **m == Mode::Split).count()
    }
}
