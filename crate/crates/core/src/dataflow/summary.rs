//! Bottom-up procedure summaries.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::adjoint::rules::adjoint_of;
use crate::lang::{Kind, LValue, ProcDef, Program, Stmt, StmtKind};

use super::sets::{expr_uses, lvalue_index_uses, Binding, VarSet};

/// Effect of a procedure, expressed in its own scope.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ProcSummary {
    /// Variables possibly overwritten, through callees included.
    pub may_write: VarSet,
    /// Variables whose incoming value the primal code may read.
    pub upward_uses: VarSet,
    /// Variables whose incoming value the differentiated code (forward
    /// sweep plus derivative statements) may read.
    pub adj_upward_uses: VarSet,
    /// Every primal variable the backward sweep may read, regardless of
    /// restores. Used as the conservative need of a split call.
    #[serde(skip)]
    pub bwd_reads: VarSet,
}

/// Primal reads of an assignment.
pub(crate) fn assign_uses(proc: &ProcDef, lhs: &LValue, rhs: &crate::lang::Expr) -> VarSet {
    expr_uses(proc, rhs).union(&lvalue_index_uses(proc, lhs))
}

/// Primal variables read by the derivative statements of an assignment.
pub(crate) fn assign_adj_uses(proc: &ProcDef, lhs: &LValue, rhs: &crate::lang::Expr) -> VarSet {
    let is_var = |n: &str| proc.decl(n).is_some();
    adjoint_of(lhs, rhs, &is_var).primal_reads(&is_var).into_iter().collect()
}

/// Variables an assignment overwrites completely.
pub(crate) fn assign_kill(proc: &ProcDef, lhs: &LValue) -> VarSet {
    match proc.decl(&lhs.name).map(|d| d.kind) {
        Some(Kind::Scalar) if lhs.index.is_none() => std::iter::once(lhs.name.clone()).collect(),
        _ => VarSet::new(),
    }
}

pub(crate) fn may_write(program: &Program, sums: &BTreeMap<String, ProcSummary>, stmts: &[Stmt]) -> VarSet {
    let mut out = VarSet::new();
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { lhs, .. } => {
                out.insert(lhs.name.clone());
            }
            StmtKind::Call { callee, args, .. } => {
                if let (Some(c), Some(sum)) = (program.proc(callee), sums.get(callee)) {
                    out.extend(&Binding::new(c, args).up(&sum.may_write));
                }
            }
            StmtKind::For { body, .. } => out.extend(&may_write(program, sums, body)),
            StmtKind::If { then_body, else_body, .. } => {
                out.extend(&may_write(program, sums, then_body));
                out.extend(&may_write(program, sums, else_body));
            }
        }
    }
    out
}

/// Upward-exposed reads. `adjoint` selects the differentiated form.
fn exposed(
    program: &Program,
    sums: &BTreeMap<String, ProcSummary>,
    proc: &ProcDef,
    stmts: &[Stmt],
    killed: &mut VarSet,
    adjoint: bool,
) -> VarSet {
    let mut out = VarSet::new();
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { lhs, rhs } => {
                let mut uses = assign_uses(proc, lhs, rhs);
                if adjoint {
                    uses.extend(&assign_adj_uses(proc, lhs, rhs));
                }
                out.extend(&uses.difference(killed));
                killed.extend(&assign_kill(proc, lhs));
            }
            StmtKind::Call { callee, args, .. } => {
                if let (Some(c), Some(sum)) = (program.proc(callee), sums.get(callee)) {
                    let set = if adjoint { &sum.adj_upward_uses } else { &sum.upward_uses };
                    out.extend(&Binding::new(c, args).up(set).difference(killed));
                }
                for a in args {
                    out.extend(&lvalue_index_uses(proc, a).difference(killed));
                }
            }
            StmtKind::For { lo, hi, body, .. } => {
                out.extend(&expr_uses(proc, lo).union(&expr_uses(proc, hi)).difference(killed));
                let mut inner = killed.clone();
                out.extend(&exposed(program, sums, proc, body, &mut inner, adjoint));
            }
            StmtKind::If { cond, then_body, else_body } => {
                out.extend(&expr_uses(proc, &cond.lhs).union(&expr_uses(proc, &cond.rhs)).difference(killed));
                let mut kt = killed.clone();
                let mut ke = killed.clone();
                out.extend(&exposed(program, sums, proc, then_body, &mut kt, adjoint));
                out.extend(&exposed(program, sums, proc, else_body, &mut ke, adjoint));
                *killed = kt.intersection(&ke);
            }
        }
    }
    out
}

fn bwd_reads(program: &Program, sums: &BTreeMap<String, ProcSummary>, proc: &ProcDef, stmts: &[Stmt]) -> VarSet {
    let mut out = VarSet::new();
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { lhs, rhs } => out.extend(&assign_adj_uses(proc, lhs, rhs)),
            StmtKind::Call { callee, args, .. } => {
                if let (Some(c), Some(sum)) = (program.proc(callee), sums.get(callee)) {
                    let b = Binding::new(c, args);
                    out.extend(&b.up(&sum.adj_upward_uses));
                    out.extend(&b.up(&sum.bwd_reads));
                }
            }
            StmtKind::For { body, .. } => out.extend(&bwd_reads(program, sums, proc, body)),
            StmtKind::If { then_body, else_body, .. } => {
                out.extend(&bwd_reads(program, sums, proc, then_body));
                out.extend(&bwd_reads(program, sums, proc, else_body));
            }
        }
    }
    out
}

fn summarize(program: &Program, name: &str, sums: &mut BTreeMap<String, ProcSummary>) {
    if sums.contains_key(name) {
        return;
    }
    let Some(proc) = program.proc(name) else { return };
    for (_, callee) in crate::lang::call_sites(proc) {
        summarize(program, callee, sums);
    }
    let summary = ProcSummary {
        may_write: may_write(program, sums, &proc.body),
        upward_uses: exposed(program, sums, proc, &proc.body, &mut VarSet::new(), false),
        adj_upward_uses: exposed(program, sums, proc, &proc.body, &mut VarSet::new(), true),
        bwd_reads: bwd_reads(program, sums, proc, &proc.body),
    };
    sums.insert(name.to_string(), summary);
}

/// Summaries for every procedure, computed callees first. Requires an
/// acyclic call graph.
pub fn compute_summaries(program: &Program) -> BTreeMap<String, ProcSummary> {
    let mut sums = BTreeMap::new();
    for name in program.procs.keys() {
        summarize(program, name, &mut sums);
    }
    sums
}
