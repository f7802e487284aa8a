//! Stack-height-versus-time trace of one plan.

use std::fmt::Write;

use serde::Serialize;

use crate::adjoint::Mode;

use super::{CallTreeCost, CostError, OwnCosts, PlanVector};

/// Piecewise-linear stack profile. Points are `(time, bytes)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Profile {
    pub points: Vec<(f64, f64)>,
    pub peak_bytes: f64,
    pub total_time: f64,
    /// Bytes pushed plus bytes popped.
    pub traffic_bytes: f64,
}

impl Profile {
    /// Two tab-separated columns with a header line.
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("time\tstack_bytes\n");
        for (t, h) in &self.points {
            let _ = writeln!(out, "{t}\t{h}");
        }
        out
    }
}

/// Flattened tree, preorder.
pub(crate) struct Flat {
    nodes: Vec<FlatNode>,
}

/// Own costs with the per-segment forward time and tape filled in.
struct Own {
    t_fwd: f64,
    t_bwd: f64,
    segments: Vec<(f64, f64)>,
}

impl Own {
    fn new(c: &OwnCosts, children: usize) -> Self {
        let k = children as f64 + 1.0;
        let segments =
            if c.segments.is_empty() { vec![(c.t_fwd / k, c.tape / k); children + 1] } else { c.segments.clone() };
        Own { t_fwd: c.t_fwd, t_bwd: c.t_bwd, segments }
    }
}

struct FlatNode {
    joint: Own,
    split: Own,
    snapshot: f64,
    record: f64,
    locals: f64,
    caller_tape: f64,
    primal_total: f64,
    children: Vec<usize>,
}

impl Flat {
    pub(crate) fn new(tree: &CallTreeCost) -> Self {
        fn go(t: &CallTreeCost, out: &mut Vec<FlatNode>) -> usize {
            let id = out.len();
            let joint = OwnCosts { t_fwd: t.t_fwd, t_bwd: t.t_bwd, tape: t.tape, segments: t.segments.clone() };
            let k = t.children.len();
            out.push(FlatNode {
                split: Own::new(t.split_costs.as_ref().unwrap_or(&joint), k),
                joint: Own::new(&joint, k),
                snapshot: t.snapshot,
                record: t.record,
                locals: t.locals,
                caller_tape: t.caller_tape,
                primal_total: t.primal_time(),
                children: Vec::new(),
            });
            let kids = t.children.iter().map(|c| go(c, out)).collect();
            out[id].children = kids;
            id
        }
        let mut nodes = Vec::new();
        go(tree, &mut nodes);
        Flat { nodes }
    }

    /// The root counts as joint: it runs in the entry context.
    fn own(&self, plan: &PlanVector, id: usize) -> &Own {
        let n = &self.nodes[id];
        match id.checked_sub(1).map(|k| plan.0[k]) {
            Some(Mode::Split) => &n.split,
            _ => &n.joint,
        }
    }

    /// Tape added to segment `j` of node `id` by a split call just before it.
    fn caller_tape(&self, plan: &PlanVector, id: usize, j: usize) -> f64 {
        match j.checked_sub(1).map(|k| self.nodes[id].children[k]) {
            Some(c) if plan.0[c - 1] == Mode::Split => self.nodes[c].caller_tape,
            _ => 0.0,
        }
    }

    pub(crate) fn decisions(&self) -> usize {
        self.nodes.len() - 1
    }

    pub(crate) fn run(&self, plan: &PlanVector, kappa: f64, curve: bool) -> Profile {
        let mut tr = Trace {
            kappa,
            curve,
            t: 0.0,
            h: 0.0,
            ops: 0.0,
            traffic: 0.0,
            peak: 0.0,
            marks: Vec::new(),
            points: vec![(0.0, 0.0)],
        };
        tr.fwd(self, plan, 0);
        tr.bwd(self, plan, 0);
        let total_time = tr.ops + kappa * tr.traffic;
        if let Some(last) = tr.points.last_mut() {
            *last = (total_time, 0.0);
        }
        Profile { points: tr.points, peak_bytes: tr.peak, total_time, traffic_bytes: tr.traffic }
    }
}

struct Trace {
    kappa: f64,
    curve: bool,
    t: f64,
    h: f64,
    /// Op time, kept apart from the curve so whole-unit costs sum exactly.
    ops: f64,
    traffic: f64,
    peak: f64,
    /// Height before every push, so pops return to it exactly.
    marks: Vec<f64>,
    points: Vec<(f64, f64)>,
}

impl Trace {
    fn point(&mut self) {
        self.peak = self.peak.max(self.h);
        if self.curve && self.points.last() != Some(&(self.t, self.h)) {
            self.points.push((self.t, self.h));
        }
    }

    fn work(&mut self, dt: f64) {
        self.ops += dt;
        self.t += dt;
        self.point();
    }

    /// Pushes `bytes` while the curve advances `dt`. Op time is charged
    /// by the caller in whole units.
    fn push(&mut self, bytes: f64, dt: f64) {
        self.marks.push(self.h);
        self.traffic += bytes;
        self.t += dt + self.kappa * bytes;
        self.h += bytes;
        self.point();
    }

    fn pop(&mut self, bytes: f64, dt: f64) {
        self.h = self.marks.pop().expect("balanced trace");
        self.traffic += bytes;
        self.t += dt + self.kappa * bytes;
        self.point();
    }

    fn fwd(&mut self, f: &Flat, plan: &PlanVector, id: usize) {
        let n = &f.nodes[id];
        let own = f.own(plan, id);
        self.ops += own.t_fwd;
        for j in 0..=n.children.len() {
            let (dt, bytes) = own.segments[j];
            self.push(bytes + f.caller_tape(plan, id, j), dt);
            if let Some(&c) = n.children.get(j) {
                let child = &f.nodes[c];
                match plan.0[c - 1] {
                    Mode::Joint => {
                        self.push(child.record, 0.0);
                        self.push(child.snapshot, 0.0);
                        self.work(child.primal_total);
                    }
                    Mode::Split => {
                        self.fwd(f, plan, c);
                        self.push(child.locals, 0.0);
                    }
                }
            }
        }
    }

    fn bwd(&mut self, f: &Flat, plan: &PlanVector, id: usize) {
        let n = &f.nodes[id];
        let own = f.own(plan, id);
        self.ops += own.t_bwd;
        let dt = own.t_bwd / (n.children.len() as f64 + 1.0);
        for j in (0..=n.children.len()).rev() {
            self.pop(own.segments[j].1 + f.caller_tape(plan, id, j), dt);
            if j == 0 {
                break;
            }
            let c = n.children[j - 1];
            let child = &f.nodes[c];
            match plan.0[c - 1] {
                Mode::Joint => {
                    self.pop(child.snapshot, 0.0);
                    self.fwd(f, plan, c);
                    self.bwd(f, plan, c);
                    self.pop(child.record, 0.0);
                }
                Mode::Split => {
                    self.pop(child.locals, 0.0);
                    self.bwd(f, plan, c);
                }
            }
        }
    }
}

/// Simulates the adjoint of `tree` under `plan`, charging `kappa` time
/// units per byte pushed or popped.
pub fn simulate(tree: &CallTreeCost, plan: &PlanVector, kappa: f64) -> Result<Profile, CostError> {
    tree.check()?;
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return Err(CostError::Plan(format!("traffic coefficient must be a finite non-negative number, got {kappa}")));
    }
    if plan.0.len() != tree.len() - 1 {
        return Err(CostError::Plan(format!(
            "plan has {} modes but the tree has {} non-root nodes",
            plan.0.len(),
            tree.len() - 1
        )));
    }
    Ok(Flat::new(tree).run(plan, kappa, true))
}
