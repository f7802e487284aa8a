//! Plan-dependent analyses: adjoint liveness, TBR, snapshots and split
//! locals.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::adjoint::plan::{CheckpointPlan, Mode};
use crate::lang::{topo_order, Kind, ProcDef, Program, SiteId, Stmt, StmtId, StmtKind};

use super::sets::{expr_uses, lvalue_index_uses, Binding, VarSet};
use super::summary::{assign_adj_uses, assign_kill, assign_uses, compute_summaries, may_write, ProcSummary};

/// Facts about one statement.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct StmtInfo {
    /// Variables whose value is pushed before the statement runs in the
    /// forward sweep. For a joint call these are pushed whole.
    pub record: VarSet,
    /// Adjoint-live variables just after the statement.
    pub live: VarSet,
    /// Omitted from the forward sweep; its derivative statements still run.
    pub sliced: bool,
    /// TBR state just before the statement.
    #[serde(skip)]
    pub tbr: VarSet,
}

/// Context and per-statement facts of one procedure.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProcAnalysis {
    /// Indexed by statement id.
    pub stmts: Vec<StmtInfo>,
    /// True when at least one reachable site calls this procedure in split mode.
    pub split_called: bool,
    pub entry_tbr: VarSet,
    pub tail_live: VarSet,
    /// Locals saved at the end of the forward sweep for the split backward sweep.
    pub split_locals: VarSet,
}

/// Everything the engine and the listing emitter need for one
/// (program, entry, plan) triple.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisResults {
    pub entry: String,
    pub summaries: BTreeMap<String, ProcSummary>,
    /// Reachable procedures only, callers first.
    pub procs: indexmap::IndexMap<String, ProcAnalysis>,
    /// Joint sites only.
    pub snapshots: BTreeMap<SiteId, VarSet>,
}

struct Ctx<'a> {
    program: &'a Program,
    plan: &'a CheckpointPlan,
    sums: &'a BTreeMap<String, ProcSummary>,
    proc: &'a ProcDef,
}

impl Ctx<'_> {
    fn mode(&self, s: &Stmt) -> Mode {
        self.plan.mode(&SiteId::new(self.proc.name.clone(), s.span)).unwrap_or(Mode::Joint)
    }

    fn callee(&self, name: &str) -> (&ProcDef, &ProcSummary) {
        (self.program.proc(name).expect("validated callee"), &self.sums[name])
    }

    fn liveness(&self, stmts: &[Stmt], after: &VarSet, infos: &mut [StmtInfo]) -> VarSet {
        let mut live = after.clone();
        for s in stmts.iter().rev() {
            let before = match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    let adj = assign_adj_uses(self.proc, lhs, rhs);
                    let sliced = !live.contains(&lhs.name);
                    infos[s.id].sliced = sliced;
                    if sliced {
                        live.union(&adj)
                    } else {
                        let mut b = live.difference(&assign_kill(self.proc, lhs));
                        b.extend(&assign_uses(self.proc, lhs, rhs));
                        b.extend(&adj);
                        b
                    }
                }
                StmtKind::Call { callee, args, .. } => {
                    let (c, sum) = self.callee(callee);
                    let mut b = live.union(&Binding::new(c, args).up(&sum.adj_upward_uses));
                    for a in args {
                        b.extend(&lvalue_index_uses(self.proc, a));
                    }
                    b
                }
                StmtKind::For { lo, hi, body, .. } => {
                    let mut x = live.clone();
                    loop {
                        let next = live.union(&self.liveness(body, &x, infos));
                        if next == x {
                            break;
                        }
                        x = next;
                    }
                    x.union(&expr_uses(self.proc, lo)).union(&expr_uses(self.proc, hi))
                }
                StmtKind::If { cond, then_body, else_body } => {
                    let mut b = self.liveness(then_body, &live, infos);
                    b.extend(&self.liveness(else_body, &live, infos));
                    b.extend(&expr_uses(self.proc, &cond.lhs));
                    b.extend(&expr_uses(self.proc, &cond.rhs));
                    b
                }
            };
            infos[s.id].live = live;
            live = before;
        }
        live
    }

    fn tbr(&self, stmts: &[Stmt], before: &VarSet, infos: &mut [StmtInfo]) -> VarSet {
        let mut t = before.clone();
        for s in stmts {
            infos[s.id].tbr = t.clone();
            t = match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    let needed = t.union(&assign_adj_uses(self.proc, lhs, rhs));
                    if infos[s.id].sliced {
                        infos[s.id].record = VarSet::new();
                        needed
                    } else {
                        infos[s.id].record = if needed.contains(&lhs.name) {
                            std::iter::once(lhs.name.clone()).collect()
                        } else {
                            VarSet::new()
                        };
                        needed.difference(&assign_kill(self.proc, lhs))
                    }
                }
                StmtKind::Call { callee, args, .. } => {
                    let (c, sum) = self.callee(callee);
                    let b = Binding::new(c, args);
                    match self.mode(s) {
                        Mode::Joint => {
                            infos[s.id].record = b.up(&sum.may_write).intersection(&t);
                            t
                        }
                        Mode::Split => {
                            infos[s.id].record = VarSet::new();
                            t.union(&b.up(&sum.bwd_reads))
                        }
                    }
                }
                StmtKind::For { body, .. } => {
                    let mut x = t.clone();
                    loop {
                        let next = t.union(&self.tbr(body, &x, infos));
                        if next == x {
                            break;
                        }
                        x = next;
                    }
                    x
                }
                StmtKind::If { then_body, else_body, .. } => {
                    self.tbr(then_body, &t, infos).union(&self.tbr(else_body, &t, infos))
                }
            };
        }
        t
    }

    /// Snapshot sets of the joint sites in `stmts`; `downstream` is what the
    /// code after this block may write.
    fn snapshots(&self, stmts: &[Stmt], downstream: &VarSet, out: &mut BTreeMap<SiteId, VarSet>) {
        for (k, s) in stmts.iter().enumerate() {
            let rest = || may_write(self.program, self.sums, &stmts[k + 1..]).union(downstream);
            match &s.kind {
                StmtKind::Assign { .. } => {}
                StmtKind::Call { callee, args, .. } => {
                    if self.mode(s) == Mode::Joint {
                        let (c, sum) = self.callee(callee);
                        let b = Binding::new(c, args);
                        let writes = b.up(&sum.may_write).union(&rest());
                        let snp = b.up(&sum.adj_upward_uses).intersection(&writes);
                        out.insert(SiteId::new(self.proc.name.clone(), s.span), snp);
                    }
                }
                StmtKind::For { body, .. } => {
                    let d = may_write(self.program, self.sums, body).union(&rest());
                    self.snapshots(body, &d, out);
                }
                StmtKind::If { then_body, else_body, .. } => {
                    let d = rest();
                    self.snapshots(then_body, &d, out);
                    self.snapshots(else_body, &d, out);
                }
            }
        }
    }

    /// Values read by the backward sweep of `stmts` before any restore.
    fn bwd_exposed(
        &self,
        stmts: &[Stmt],
        infos: &[StmtInfo],
        snaps: &BTreeMap<SiteId, VarSet>,
        killed: &mut VarSet,
    ) -> VarSet {
        let mut out = VarSet::new();
        for s in stmts.iter().rev() {
            let info = &infos[s.id];
            match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    for v in info.record.iter() {
                        if self.proc.decl(v).map(|d| d.kind) == Some(Kind::Scalar) {
                            killed.insert(v);
                        }
                    }
                    out.extend(&assign_adj_uses(self.proc, lhs, rhs).difference(killed));
                }
                StmtKind::Call { callee, args, .. } => {
                    let (c, sum) = self.callee(callee);
                    let b = Binding::new(c, args);
                    match self.mode(s) {
                        Mode::Joint => {
                            if let Some(snp) = snaps.get(&SiteId::new(self.proc.name.clone(), s.span)) {
                                killed.extend(snp);
                            }
                            out.extend(&b.up(&sum.adj_upward_uses).difference(killed));
                            killed.extend(&info.record);
                        }
                        Mode::Split => out.extend(&b.up(&sum.bwd_reads).difference(killed)),
                    }
                }
                StmtKind::For { body, .. } => {
                    let mut inner = killed.clone();
                    out.extend(&self.bwd_exposed(body, infos, snaps, &mut inner));
                }
                StmtKind::If { then_body, else_body, .. } => {
                    let mut kt = killed.clone();
                    let mut ke = killed.clone();
                    out.extend(&self.bwd_exposed(then_body, infos, snaps, &mut kt));
                    out.extend(&self.bwd_exposed(else_body, infos, snaps, &mut ke));
                    *killed = kt.intersection(&ke);
                }
            }
        }
        out
    }
}

/// Split sites of `proc` with the statement carrying them.
fn split_sites<'a>(proc: &'a ProcDef, plan: &CheckpointPlan) -> Vec<&'a Stmt> {
    let mut out = Vec::new();
    crate::lang::visit_stmts(&proc.body, &mut |s| {
        if matches!(s.kind, StmtKind::Call { .. })
            && plan.mode(&SiteId::new(proc.name.clone(), s.span)) == Some(Mode::Split)
        {
            out.push(s);
        }
    });
    out
}

/// Runs every analysis for the procedures reachable from `entry`. Sites
/// missing from `plan` are treated as joint.
pub fn analyze(program: &Program, entry: &str, plan: &CheckpointPlan) -> AnalysisResults {
    let summaries = compute_summaries(program);
    let order = topo_order(program, entry);
    let mut procs: indexmap::IndexMap<String, ProcAnalysis> = order
        .iter()
        .map(|n| {
            let count = program.proc(n).map_or(0, ProcDef::stmt_count);
            (n.clone(), ProcAnalysis { stmts: vec![StmtInfo::default(); count], ..Default::default() })
        })
        .collect();

    for name in &order {
        let proc = program.proc(name).expect("reachable procedure");
        let ctx = Ctx { program, plan, sums: &summaries, proc };
        let mut pa = std::mem::take(&mut procs[name.as_str()]);
        ctx.liveness(&proc.body, &pa.tail_live.clone(), &mut pa.stmts);
        ctx.tbr(&proc.body, &pa.entry_tbr.clone(), &mut pa.stmts);
        for s in split_sites(proc, plan) {
            let StmtKind::Call { callee, args, .. } = &s.kind else { unreachable!() };
            let b = Binding::new(program.proc(callee).expect("validated callee"), args);
            let target = &mut procs[callee.as_str()];
            target.split_called = true;
            target.tail_live.extend(&b.down(&pa.stmts[s.id].live));
            target.entry_tbr.extend(&b.down(&pa.stmts[s.id].tbr));
        }
        procs[name.as_str()] = pa;
    }

    let mut snapshots = BTreeMap::new();
    for name in &order {
        let proc = program.proc(name).expect("reachable procedure");
        let ctx = Ctx { program, plan, sums: &summaries, proc };
        ctx.snapshots(&proc.body, &VarSet::new(), &mut snapshots);
    }

    for name in &order {
        let proc = program.proc(name).expect("reachable procedure");
        if !procs[name.as_str()].split_called {
            continue;
        }
        let ctx = Ctx { program, plan, sums: &summaries, proc };
        let reads = ctx.bwd_exposed(&proc.body, &procs[name.as_str()].stmts, &snapshots, &mut VarSet::new());
        procs[name.as_str()].split_locals = reads.iter().filter(|v| proc.is_local(v)).collect();
    }

    AnalysisResults { entry: entry.to_string(), summaries, procs, snapshots }
}

impl AnalysisResults {
    pub fn proc(&self, name: &str) -> Option<&ProcAnalysis> {
        self.procs.get(name)
    }

    pub fn stmt(&self, proc: &str, id: StmtId) -> &StmtInfo {
        &self.procs[proc].stmts[id]
    }

    pub fn snapshot(&self, site: &SiteId) -> Option<&VarSet> {
        self.snapshots.get(site)
    }

    pub fn summary(&self, proc: &str) -> &ProcSummary {
        &self.summaries[proc]
    }

    /// JSON document with summaries, per-statement facts, joint-site
    /// snapshots and split contexts.
    pub fn to_json(&self, program: &Program) -> serde_json::Value {
        use serde_json::{json, Map, Value};
        let mut procs = Map::new();
        for (name, pa) in &self.procs {
            let proc = program.proc(name).expect("analyzed procedure");
            let mut stmts = Vec::new();
            crate::lang::visit_stmts(&proc.body, &mut |s| {
                let info = &pa.stmts[s.id];
                stmts.push(json!({
                    "id": s.id,
                    "span": s.span.to_string(),
                    "record": info.record,
                    "live": info.live,
                    "sliced": info.sliced,
                }));
            });
            let mut entry = serde_json::to_value(&self.summaries[name]).expect("summary serializes");
            entry["statements"] = Value::Array(stmts);
            entry["split"] = if pa.split_called {
                json!({ "splitLocals": pa.split_locals, "entryTbr": pa.entry_tbr, "tailLive": pa.tail_live })
            } else {
                Value::Null
            };
            procs.insert(name.clone(), entry);
        }
        let snaps: Map<String, Value> =
            self.snapshots.iter().map(|(s, v)| (s.to_string(), json!({ "snapshot": v }))).collect();
        json!({ "entry": self.entry, "procedures": procs, "sites": snaps })
    }
}
