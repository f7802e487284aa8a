//! The sweep engine: forward sweep with recording, backward sweep with
//! restoring, and checkpointed (joint) or inline (split) calls.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::dataflow::{analyze, AnalysisResults, VarSet};
use crate::lang::interp::{Frame, Machine, NoObserver};
use crate::lang::{eval_primal, validate, EvalError, EvalOptions, ProcDef, Program, SiteId, Stmt, StmtKind, Store};

use super::plan::{CheckpointPlan, Mode};
use super::rules::{adjoint_of, AdjointAssign};
use super::shadow::{derivative_reads, ShadowTrace};
use super::stack::{Entry, ValueStack, VarBlock};
use super::AdError;

#[derive(Debug, Clone, Copy, Default)]
pub struct DiffOptions {
    pub eval: EvalOptions,
    /// Check every derivative read against a plain reference run.
    pub shadow: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcStats {
    /// Plain runs at checkpointed sites plus forward sweeps.
    pub primal_exec_count: u64,
    pub plain_runs: u64,
    pub fwd_runs: u64,
    pub bwd_runs: u64,
    pub fwd_sweep_time: u64,
    pub bwd_sweep_time: u64,
    pub tape_bytes: u64,
    pub snapshot_bytes: u64,
    pub locals_bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SiteStats {
    pub callee: String,
    pub mode: Mode,
    /// Times a recording forward sweep reached the site.
    pub traversals: u64,
    /// Times the callee body started (plain or recording) on behalf of the site.
    pub executions: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RunStats {
    pub plain_time: u64,
    pub fwd_sweep_time: u64,
    pub bwd_sweep_time: u64,
    pub peak_bytes: u64,
    pub pushed_bytes: u64,
    pub popped_bytes: u64,
    pub tape_bytes: u64,
    pub snapshot_bytes: u64,
    pub locals_bytes: u64,
    pub procedures: BTreeMap<String, ProcStats>,
    pub sites: BTreeMap<SiteId, SiteStats>,
    /// Union of the variable sets actually pushed as snapshots, per site.
    pub snapshot_sets: BTreeMap<SiteId, VarSet>,
    /// Derivative statements checked against the shadow trace.
    pub shadow_checked: u64,
}

impl RunStats {
    /// Executed assignments: plain, forward and derivative.
    pub fn ops(&self) -> u64 {
        self.plain_time + self.fwd_sweep_time + self.bwd_sweep_time
    }

    /// Op count plus `kappa` time units per byte pushed or popped.
    pub fn time(&self, kappa: f64) -> f64 {
        self.ops() as f64 + kappa * (self.pushed_bytes + self.popped_bytes) as f64
    }
}

/// One dynamic call instance reached by a recording forward sweep, with
/// what it cost. The root is the entry procedure.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunNode {
    pub name: String,
    pub site: Option<SiteId>,
    pub mode: Option<Mode>,
    /// Ops of one plain run of the whole subtree (joint nodes only).
    pub plain_total: Option<u64>,
    pub fwd_ops: u64,
    pub bwd_ops: u64,
    pub tape: u64,
    /// Call record, held until the replay at a joint site has finished.
    pub record: u64,
    pub snapshot: u64,
    pub locals: u64,
    /// Forward ops and own tape bytes between consecutive child calls.
    pub segments: Vec<(u64, u64)>,
    pub children: Vec<RunNode>,
}

impl RunNode {
    pub fn count(&self) -> usize {
        1 + self.children.iter().map(RunNode::count).sum::<usize>()
    }
}

#[derive(Debug, Clone)]
pub struct Differentiation {
    /// Adjoints of the entry parameters.
    pub gradient: Store,
    pub primal_out: Store,
    pub stats: RunStats,
    pub tree: RunNode,
}

struct NodeBuf {
    node: RunNode,
    children: Vec<usize>,
}

struct Engine<'p, 'a> {
    m: Machine<'p>,
    an: &'a AnalysisResults,
    plan: &'a CheckpointPlan,
    rules: HashMap<(&'p str, usize), AdjointAssign>,
    stack: ValueStack,
    stats: RunStats,
    nodes: Vec<NodeBuf>,
    cur: usize,
    pending: Vec<usize>,
    shadow: Option<ShadowTrace>,
}

fn fwd_err(e: EvalError) -> AdError {
    AdError::Eval { sweep: "forward", source: e }
}

fn bwd_err(e: EvalError) -> AdError {
    AdError::Eval { sweep: "backward", source: e }
}

impl<'p, 'a> Engine<'p, 'a> {
    fn proc_stats(&mut self, name: &str) -> &mut ProcStats {
        self.stats.procedures.entry(name.to_string()).or_default()
    }

    fn node(&mut self) -> &mut RunNode {
        &mut self.nodes[self.cur].node
    }

    fn segment(&mut self) -> &mut (u64, u64) {
        let segs = &mut self.nodes[self.cur].node.segments;
        if segs.is_empty() {
            segs.push((0, 0));
        }
        segs.last_mut().expect("one segment")
    }

    fn own_tape(&mut self, b: u64) {
        self.node().tape += b;
        self.segment().1 += b;
    }

    fn new_node(&mut self, name: &str, site: &SiteId, mode: Mode) -> usize {
        let id = self.nodes.len();
        self.nodes.push(NodeBuf {
            node: RunNode {
                name: name.to_string(),
                site: Some(site.clone()),
                mode: Some(mode),
                segments: vec![(0, 0)],
                ..Default::default()
            },
            children: Vec::new(),
        });
        self.segment();
        self.nodes[self.cur].node.segments.push((0, 0));
        self.nodes[self.cur].children.push(id);
        id
    }

    fn mode(&self, site: &SiteId) -> Result<Mode, AdError> {
        self.plan.mode(site).ok_or_else(|| AdError::Plan(format!("plan has no mode for call site {site}")))
    }

    fn block(&self, frame: &Frame<'p>, vars: &VarSet) -> VarBlock {
        vars.iter()
            .map(|v| {
                let i = frame.var_index(v).expect("analysed variable is declared");
                let s = frame.slots[i];
                (i, self.m.mem[s.base..s.base + s.len].to_vec())
            })
            .collect()
    }

    fn restore(&mut self, frame: &Frame<'p>, block: &VarBlock) {
        for (i, values) in block {
            let base = frame.slots[*i].base;
            self.m.mem[base..base + values.len()].copy_from_slice(values);
        }
    }

    fn site_stats(&mut self, site: &SiteId, callee: &str, mode: Mode) -> &mut SiteStats {
        self.stats.sites.entry(site.clone()).or_insert_with(|| SiteStats {
            callee: callee.to_string(),
            mode,
            traversals: 0,
            executions: 0,
        })
    }

    fn fwd(&mut self, frame: &mut Frame<'p>, stmts: &'p [Stmt]) -> Result<(), AdError> {
        let pname = frame.proc.name.as_str();
        for s in stmts {
            let info = self.an.stmt(pname, s.id);
            match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    if info.sliced {
                        continue;
                    }
                    if !info.record.is_empty() {
                        let addr = self.m.addr(frame, lhs, s.span).map_err(fwd_err)?;
                        let var = frame.var_index(&lhs.name).expect("declared lhs");
                        let offset = addr - frame.slots[var].base;
                        let b = self.stack.push(Entry::Value { var, offset, value: self.m.mem[addr] });
                        self.own_tape(b);
                        self.proc_stats(pname).tape_bytes += b;
                        self.stats.tape_bytes += b;
                    }
                    self.m.assign(frame, lhs, rhs, s.span).map_err(fwd_err)?;
                    self.node().fwd_ops += 1;
                    self.segment().0 += 1;
                    self.proc_stats(pname).fwd_sweep_time += 1;
                    self.stats.fwd_sweep_time += 1;
                }
                StmtKind::Call { callee, args, .. } => {
                    let site = SiteId::new(pname, s.span);
                    let mode = self.mode(&site)?;
                    let target: &'p ProcDef = self.m.proc(callee).map_err(fwd_err)?;
                    let child = self.new_node(callee, &site, mode);
                    let ss = self.site_stats(&site, callee, mode);
                    ss.traversals += 1;
                    ss.executions += 1;
                    self.m.path.push(s.id as u32);
                    match mode {
                        Mode::Joint => {
                            let snp = self.an.snapshot(&site).cloned().unwrap_or_default();
                            let record = self.block(frame, &info.record);
                            let snap = self.block(frame, &snp);
                            let rho = self.stack.push(Entry::CallRecord(record));
                            let snap = self.stack.push(Entry::Snapshot { site: site.clone(), vars: snap });
                            self.nodes[child].node.record = rho;
                            self.nodes[child].node.snapshot = snap;
                            let sigma = rho + snap;
                            self.stats.snapshot_bytes += sigma;
                            self.stats.snapshot_sets.entry(site.clone()).or_default().extend(&snp);
                            let before = self.m.plain_ops;
                            let mut inner = self.m.callee_frame(frame, target, args, s.span).map_err(fwd_err)?;
                            self.m
                                .exec_plain(&mut inner, &target.body, &mut NoObserver)
                                .map_err(|e| AdError::Eval { sweep: "plain", source: e })?;
                            self.m.free(inner);
                            self.nodes[child].node.plain_total = Some(self.m.plain_ops - before);
                            self.stats.plain_time = self.m.plain_ops;
                            let ps = self.proc_stats(callee);
                            ps.plain_runs += 1;
                            ps.primal_exec_count += 1;
                            ps.snapshot_bytes += sigma;
                        }
                        Mode::Split => {
                            let mut inner = self.m.callee_frame(frame, target, args, s.span).map_err(fwd_err)?;
                            let saved = std::mem::replace(&mut self.cur, child);
                            self.fwd(&mut inner, &target.body)?;
                            let locals = self.an.proc(callee).map(|p| p.split_locals.clone()).unwrap_or_default();
                            let vars = self.block(&inner, &locals);
                            let b = self.stack.push(Entry::Locals { proc: callee.clone(), vars });
                            self.cur = saved;
                            self.m.free(inner);
                            self.nodes[child].node.locals = b;
                            self.stats.locals_bytes += b;
                            let ps = self.proc_stats(callee);
                            ps.fwd_runs += 1;
                            ps.primal_exec_count += 1;
                            ps.locals_bytes += b;
                        }
                    }
                    self.m.path.pop();
                    self.pending.push(child);
                }
                StmtKind::For { var, lo, hi, body } => {
                    let lo = self.m.eval_int(frame, lo, s.span).map_err(fwd_err)?;
                    let hi = self.m.eval_int(frame, hi, s.span).map_err(fwd_err)?;
                    let count = (hi - lo + 1).max(0);
                    let (Ok(lower), Ok(count32)) = (i32::try_from(lo), u32::try_from(count)) else {
                        return Err(AdError::Input(format!("{}: loop bounds exceed the 32-bit range", s.span)));
                    };
                    for k in 0..count {
                        frame.indices.push((var.as_str(), lo + k));
                        self.m.path.extend([s.id as u32, k as u32]);
                        self.fwd(frame, body)?;
                        self.m.path.truncate(self.m.path.len() - 2);
                        frame.indices.pop();
                    }
                    let b = self.stack.push(Entry::LoopCount { lower, count: count32 });
                    self.own_tape(b);
                    self.proc_stats(pname).tape_bytes += b;
                    self.stats.tape_bytes += b;
                }
                StmtKind::If { cond, then_body, else_body } => {
                    let taken = self.m.eval_cond(frame, cond, s.span).map_err(fwd_err)?;
                    self.fwd(frame, if taken { then_body } else { else_body })?;
                    let b = self.stack.push(Entry::Branch(taken));
                    self.own_tape(b);
                    self.proc_stats(pname).tape_bytes += b;
                    self.stats.tape_bytes += b;
                }
            }
        }
        Ok(())
    }

    fn derivative(&mut self, frame: &Frame<'p>, s: &'p Stmt) -> Result<(), AdError> {
        let pname: &'p str = frame.proc.name.as_str();
        let a = self.rules.entry((pname, s.id)).or_insert_with(|| {
            let StmtKind::Assign { lhs, rhs } = &s.kind else { unreachable!() };
            let is_var = |n: &str| frame.proc.decl(n).is_some();
            adjoint_of(lhs, rhs, &is_var)
        });
        if let Some(trace) = &self.shadow {
            let got = derivative_reads(&self.m, frame, a, s.span).map_err(bwd_err)?;
            let key = (self.m.path.clone(), s.id);
            let Some(want) = trace.reads.get(&key) else {
                return Err(AdError::Shadow(format!(
                    "{pname} {}: instance {:?} absent from the reference run",
                    s.span, key.0
                )));
            };
            if got.len() != want.len() || got.iter().zip(want).any(|(g, w)| g.to_bits() != w.to_bits()) {
                return Err(AdError::Shadow(format!(
                    "{pname} {}: derivative read {got:?}, reference run had {want:?}",
                    s.span
                )));
            }
            self.stats.shadow_checked += 1;
        }
        let seed_addr = self.m.addr(frame, &a.lhs, s.span).map_err(bwd_err)?;
        let seed = self.m.adj[seed_addr];
        if a.self_ref {
            self.m.adj[seed_addr] = 0.0;
        }
        for p in &a.partials {
            let f = match &p.factor {
                Some(e) => self.m.eval(frame, e, s.span).map_err(bwd_err)?,
                None => 1.0,
            };
            let t = self.m.addr(frame, &p.target, s.span).map_err(bwd_err)?;
            self.m.adj[t] += f * seed;
        }
        if !a.self_ref {
            self.m.adj[seed_addr] = 0.0;
        }
        self.node().bwd_ops += 1;
        self.proc_stats(pname).bwd_sweep_time += 1;
        self.stats.bwd_sweep_time += 1;
        Ok(())
    }

    fn bwd(&mut self, frame: &mut Frame<'p>, stmts: &'p [Stmt]) -> Result<(), AdError> {
        let pname = frame.proc.name.as_str();
        for s in stmts.iter().rev() {
            let info = self.an.stmt(pname, s.id);
            match &s.kind {
                StmtKind::Assign { .. } => {
                    if !info.sliced && !info.record.is_empty() {
                        let (var, offset, value) = self.stack.pop_value()?;
                        self.m.mem[frame.slots[var].base + offset] = value;
                    }
                    self.derivative(frame, s)?;
                }
                StmtKind::Call { callee, args, .. } => {
                    let site = SiteId::new(pname, s.span);
                    let mode = self.mode(&site)?;
                    let target: &'p ProcDef = self.m.proc(callee).map_err(bwd_err)?;
                    let child = self.pending.pop().ok_or_else(|| AdError::Stack("call node stack underflow".into()))?;
                    self.m.path.push(s.id as u32);
                    let saved = std::mem::replace(&mut self.cur, child);
                    match mode {
                        Mode::Joint => {
                            let snap = self.stack.pop_snapshot(&site)?;
                            self.restore(frame, &snap);
                            let mut inner = self.m.callee_frame(frame, target, args, s.span).map_err(bwd_err)?;
                            self.fwd(&mut inner, &target.body)?;
                            self.bwd(&mut inner, &target.body)?;
                            self.m.free(inner);
                            let record = self.stack.pop_call_record()?;
                            self.restore(frame, &record);
                            self.site_stats(&site, callee, mode).executions += 1;
                            let ps = self.proc_stats(callee);
                            ps.fwd_runs += 1;
                            ps.bwd_runs += 1;
                            ps.primal_exec_count += 1;
                        }
                        Mode::Split => {
                            let mut inner = self.m.callee_frame(frame, target, args, s.span).map_err(bwd_err)?;
                            let locals = self.stack.pop_locals(callee)?;
                            self.restore(&inner, &locals);
                            self.bwd(&mut inner, &target.body)?;
                            self.m.free(inner);
                            self.proc_stats(callee).bwd_runs += 1;
                        }
                    }
                    self.cur = saved;
                    self.m.path.pop();
                }
                StmtKind::For { var, body, .. } => {
                    let (lower, count) = self.stack.pop_loop()?;
                    for k in (0..count as i64).rev() {
                        frame.indices.push((var.as_str(), lower as i64 + k));
                        self.m.path.extend([s.id as u32, k as u32]);
                        self.bwd(frame, body)?;
                        self.m.path.truncate(self.m.path.len() - 2);
                        frame.indices.pop();
                    }
                }
                StmtKind::If { then_body, else_body, .. } => {
                    let taken = self.stack.pop_branch()?;
                    self.bwd(frame, if taken { then_body } else { else_body })?;
                }
            }
        }
        Ok(())
    }

    fn into_tree(nodes: &mut Vec<NodeBuf>, id: usize) -> RunNode {
        let children = std::mem::take(&mut nodes[id].children);
        let mut node = std::mem::take(&mut nodes[id].node);
        node.children = children.into_iter().map(|c| Self::into_tree(nodes, c)).collect();
        node
    }
}

fn check_weights(entry: &ProcDef, weights: &Store) -> Result<(), AdError> {
    if weights.0.is_empty() {
        return Err(AdError::Input("no output weights given".into()));
    }
    for (name, v) in &weights.0 {
        let Some(d) = entry.params.iter().find(|p| &p.name == name) else {
            return Err(AdError::Input(format!("weight on `{name}`, which is not a parameter of `{}`", entry.name)));
        };
        if v.cells().len() != d.kind.len() || matches!(v, crate::lang::Value::Array(_)) != d.kind.is_array() {
            return Err(AdError::Input(format!("weight on `{name}` does not match its declared shape")));
        }
    }
    Ok(())
}

/// Differentiates `entry` under `plan`: returns the adjoints of the entry
/// parameters for output weights `weights`, the primal results and
/// instrumentation.
pub fn differentiate(
    program: &Program,
    entry: &str,
    inputs: &Store,
    weights: &Store,
    plan: &CheckpointPlan,
    opts: DiffOptions,
) -> Result<Differentiation, AdError> {
    let diags = validate(program);
    if !diags.is_empty() {
        let msgs: Vec<String> = diags.iter().map(ToString::to_string).collect();
        return Err(AdError::Invalid(msgs.join("\n")));
    }
    let proc = program.proc(entry).ok_or_else(|| AdError::Input(format!("no procedure named `{entry}`")))?;
    plan.check_total(program, entry)?;
    check_weights(proc, weights)?;
    let an = analyze(program, entry, plan);
    let primal_out =
        eval_primal(program, entry, inputs, opts.eval).map_err(|e| AdError::Eval { sweep: "primal", source: e })?;
    let shadow = if opts.shadow {
        Some(
            ShadowTrace::record(program, entry, inputs, opts.eval)
                .map_err(|e| AdError::Eval { sweep: "primal", source: e })?,
        )
    } else {
        None
    };

    let root = RunNode { name: entry.to_string(), segments: vec![(0, 0)], ..Default::default() };
    let mut eng = Engine {
        m: Machine::new(program, opts.eval),
        an: &an,
        plan,
        rules: HashMap::new(),
        stack: ValueStack::new(),
        stats: RunStats::default(),
        nodes: vec![NodeBuf { node: root, children: Vec::new() }],
        cur: 0,
        pending: Vec::new(),
        shadow,
    };
    let mut frame = eng.m.root_frame(proc, inputs).map_err(fwd_err)?;
    for (name, v) in &weights.0 {
        let slot = frame.slot(name).expect("checked weight");
        eng.m.adj[slot.base..slot.base + slot.len].copy_from_slice(v.cells());
    }
    eng.fwd(&mut frame, &proc.body)?;
    eng.bwd(&mut frame, &proc.body)?;
    if !eng.stack.is_empty() || eng.stack.current != 0 || !eng.pending.is_empty() {
        return Err(AdError::Stack(format!("{} entries left after the backward sweep", eng.stack.len())));
    }
    let ps = eng.proc_stats(entry);
    ps.fwd_runs += 1;
    ps.bwd_runs += 1;
    ps.primal_exec_count += 1;

    let gradient = eng.m.adjoint_store(&frame);
    eng.stats.plain_time = eng.m.plain_ops;
    eng.stats.peak_bytes = eng.stack.peak;
    eng.stats.pushed_bytes = eng.stack.pushed;
    eng.stats.popped_bytes = eng.stack.popped;
    let tree = Engine::into_tree(&mut eng.nodes, 0);
    Ok(Differentiation { gradient, primal_out, stats: eng.stats, tree })
}
