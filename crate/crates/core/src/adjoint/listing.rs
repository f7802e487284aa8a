//! Adjoint pseudo-source: forward sweeps with their pushes, backward sweeps
//! with their pops and derivative statements.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write;

use crate::dataflow::{analyze, AnalysisResults, ProcAnalysis};
use crate::lang::printer::{expr_to_string, lvalue_to_string};
use crate::lang::{topo_order, visit_stmts, BinOp, Decl, Expr, Kind, LValue, ProcDef, Program, SiteId, Stmt, StmtKind};

use super::plan::{CheckpointPlan, Mode};
use super::rules::adjoint_of;

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Routine {
    Joint,
    Fwd,
    Bwd,
}

impl Routine {
    fn suffix(self) -> &'static str {
        match self {
            Routine::Joint => "_b",
            Routine::Fwd => "_fwd",
            Routine::Bwd => "_bwd",
        }
    }
}

fn fresh(base: &str, taken: &mut BTreeSet<String>) -> String {
    let mut name = base.to_string();
    let mut n = 2;
    while taken.contains(&name) {
        name = format!("{base}{n}");
        n += 1;
    }
    taken.insert(name.clone());
    name
}

struct Emitter<'a> {
    program: &'a Program,
    plan: &'a CheckpointPlan,
    an: &'a AnalysisResults,
    routines: HashMap<(String, Routine), String>,
}

/// Names inside one adjoint routine.
struct Scope<'a> {
    proc: &'a ProcDef,
    pa: &'a ProcAnalysis,
    adj: HashMap<String, String>,
    seed: String,
    seed_used: bool,
    branch: String,
    branch_used: bool,
}

impl<'a> Scope<'a> {
    fn new(proc: &'a ProcDef, pa: &'a ProcAnalysis) -> Self {
        let mut taken: BTreeSet<String> = proc.decls().map(|d| d.name.clone()).collect();
        visit_stmts(&proc.body, &mut |s| {
            if let StmtKind::For { var, .. } = &s.kind {
                taken.insert(var.clone());
            }
        });
        let adj = proc.decls().map(|d| (d.name.clone(), fresh(&format!("{}b", d.name), &mut taken))).collect();
        let seed = fresh("seedb", &mut taken);
        let branch = fresh("branch", &mut taken);
        Scope { proc, pa, adj, seed, seed_used: false, branch, branch_used: false }
    }

    fn adj_lv(&self, lv: &LValue) -> LValue {
        LValue { name: self.adj[&lv.name].clone(), index: lv.index.clone() }
    }

    fn adj_expr(&self, lv: &LValue) -> Expr {
        match &lv.index {
            Some(i) => Expr::Elem(self.adj[&lv.name].clone(), i.clone()),
            None => Expr::Var(self.adj[&lv.name].clone()),
        }
    }

    fn args(&self, args: &[LValue], with_adjoints: bool) -> String {
        let mut parts = Vec::new();
        for a in args {
            parts.push(lvalue_to_string(a));
            if with_adjoints {
                parts.push(lvalue_to_string(&self.adj_lv(a)));
            }
        }
        parts.join(", ")
    }

    fn header(&self, name: &str, with_adjoints: bool) -> String {
        fn decl(d: &Decl, n: &str) -> String {
            match d.kind {
                Kind::Scalar => n.to_string(),
                Kind::Array(len) => format!("{n}({len})"),
            }
        }
        let mut params = Vec::new();
        for d in &self.proc.params {
            params.push(decl(d, &d.name));
            if with_adjoints {
                params.push(decl(d, &self.adj[&d.name]));
            }
        }
        let mut out = format!("proc {name}({})\n", params.join(", "));
        let mut locals: Vec<String> = Vec::new();
        for d in &self.proc.locals {
            locals.push(decl(d, &d.name));
            if with_adjoints {
                locals.push(decl(d, &self.adj[&d.name]));
            }
        }
        if self.seed_used {
            locals.push(self.seed.clone());
        }
        if self.branch_used {
            locals.push(self.branch.clone());
        }
        if !locals.is_empty() {
            let _ = writeln!(out, "  local {}", locals.join(", "));
        }
        out
    }
}

/// `factor * seed`, with the sign pulled out and `(1/d) * s` written `s / d`.
fn term(factor: Option<&Expr>, seed: Expr) -> (bool, Expr) {
    match factor {
        None => (false, seed),
        Some(Expr::Neg(f)) => {
            let (neg, t) = term(Some(f), seed);
            (!neg, t)
        }
        Some(Expr::Binary(BinOp::Div, a, d)) => {
            let (neg, num) = match &**a {
                Expr::Const(c) if *c == 1.0 => (false, seed),
                a => term(Some(a), seed),
            };
            (neg, Expr::binary(BinOp::Div, num, (**d).clone()))
        }
        Some(Expr::Const(c)) if *c == 1.0 => (false, seed),
        Some(Expr::Const(c)) if *c < 0.0 => {
            let (neg, t) = term(Some(&Expr::Const(-c)), seed);
            (!neg, t)
        }
        Some(f) => (false, Expr::binary(BinOp::Mul, f.clone(), seed)),
    }
}

/// Partials with equal targets summed; equal factors become `2 * f`.
fn merged(partials: &[super::rules::Partial]) -> Vec<(LValue, Option<Expr>)> {
    let mut out: Vec<(LValue, Vec<Option<Expr>>)> = Vec::new();
    for p in partials {
        match out.iter_mut().find(|(t, _)| *t == p.target) {
            Some((_, fs)) => fs.push(p.factor.clone()),
            None => out.push((p.target.clone(), vec![p.factor.clone()])),
        }
    }
    out.into_iter()
        .map(|(t, fs)| {
            let f = if fs.len() > 1 && fs.iter().all(|f| *f == fs[0]) {
                let one = fs[0].clone().unwrap_or(Expr::Const(1.0));
                Some(Expr::binary(BinOp::Mul, Expr::Const(fs.len() as f64), one))
            } else {
                fs.into_iter()
                    .map(|f| f.unwrap_or(Expr::Const(1.0)))
                    .reduce(|a, b| Expr::binary(BinOp::Add, a, b))
                    .filter(|f| *f != Expr::Const(1.0))
            };
            (t, f)
        })
        .collect()
}

fn pad(depth: usize) -> String {
    "  ".repeat(depth)
}

impl<'a> Emitter<'a> {
    fn routine(&self, proc: &str, r: Routine) -> &str {
        &self.routines[&(proc.to_string(), r)]
    }

    fn mode(&self, proc: &ProcDef, s: &Stmt) -> Mode {
        self.plan.mode(&SiteId::new(proc.name.clone(), s.span)).unwrap_or(Mode::Joint)
    }

    fn push_list(vars: impl IntoIterator<Item = String>) -> String {
        vars.into_iter().collect::<Vec<_>>().join(", ")
    }

    fn fwd(&self, sc: &mut Scope<'_>, stmts: &[Stmt], depth: usize, out: &mut String) {
        let p = pad(depth);
        for s in stmts {
            let info = &sc.pa.stmts[s.id];
            match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    if info.sliced {
                        continue;
                    }
                    if !info.record.is_empty() {
                        let _ = writeln!(out, "{p}PUSH({})", lvalue_to_string(lhs));
                    }
                    let _ = writeln!(out, "{p}{} = {}", lvalue_to_string(lhs), expr_to_string(rhs));
                }
                StmtKind::Call { callee, args, .. } => match self.mode(sc.proc, s) {
                    Mode::Joint => {
                        if !info.record.is_empty() {
                            let _ = writeln!(out, "{p}PUSH({})", Self::push_list(info.record.iter().map(String::from)));
                        }
                        let site = SiteId::new(sc.proc.name.clone(), s.span);
                        if let Some(snp) = self.an.snapshot(&site).filter(|v| !v.is_empty()) {
                            let _ =
                                writeln!(out, "{p}PUSH_SNAPSHOT({})", Self::push_list(snp.iter().map(String::from)));
                        }
                        let _ = writeln!(out, "{p}call {callee}({})", sc.args(args, false));
                    }
                    Mode::Split => {
                        let _ =
                            writeln!(out, "{p}call {}({})", self.routine(callee, Routine::Fwd), sc.args(args, false));
                    }
                },
                StmtKind::For { var, lo, hi, body } => {
                    let _ = writeln!(out, "{p}for {var} = {} .. {}", expr_to_string(lo), expr_to_string(hi));
                    self.fwd(sc, body, depth + 1, out);
                    let _ = writeln!(out, "{p}end");
                    let _ = writeln!(out, "{p}PUSH_LOOP({var})");
                }
                StmtKind::If { cond, then_body, else_body } => {
                    let _ = writeln!(
                        out,
                        "{p}if {} {} {}",
                        expr_to_string(&cond.lhs),
                        cond.rel.symbol(),
                        expr_to_string(&cond.rhs)
                    );
                    self.fwd(sc, then_body, depth + 1, out);
                    let _ = writeln!(out, "{p}  PUSH_BRANCH(1)");
                    let _ = writeln!(out, "{p}else");
                    self.fwd(sc, else_body, depth + 1, out);
                    let _ = writeln!(out, "{p}  PUSH_BRANCH(0)");
                    let _ = writeln!(out, "{p}end");
                }
            }
        }
    }

    fn derivative(&self, sc: &mut Scope<'_>, lhs: &LValue, rhs: &Expr, p: &str, out: &mut String) {
        let is_var = |n: &str| sc.proc.decl(n).is_some();
        let a = adjoint_of(lhs, rhs, &is_var);
        let parts = merged(&a.partials);
        let lhs_b = sc.adj_expr(lhs);
        let lhs_b_text = expr_to_string(&lhs_b);
        let neat = parts.iter().all(|(t, _)| t.name != lhs.name || t == lhs);
        if a.self_ref && !neat {
            sc.seed_used = true;
        }
        let sc = &*sc;
        let accumulate = |out: &mut String, target: &LValue, f: Option<&Expr>, seed: Expr| {
            let (neg, t) = term(f, seed);
            let tb = lvalue_to_string(&sc.adj_lv(target));
            let _ = writeln!(out, "{p}{tb} = {tb} {} {}", if neg { "-" } else { "+" }, expr_to_string(&t));
        };
        if !a.self_ref {
            for (t, f) in &parts {
                accumulate(out, t, f.as_ref(), lhs_b.clone());
            }
            let _ = writeln!(out, "{p}{lhs_b_text} = 0.0");
        } else if neat {
            for (t, f) in parts.iter().filter(|(t, _)| t != lhs) {
                accumulate(out, t, f.as_ref(), lhs_b.clone());
            }
            let (_, f) = parts.iter().find(|(t, _)| t == lhs).expect("self reference");
            let (neg, t) = term(f.as_ref(), lhs_b.clone());
            let t = if neg { Expr::Neg(Box::new(t)) } else { t };
            if t != lhs_b {
                let _ = writeln!(out, "{p}{lhs_b_text} = {}", expr_to_string(&t));
            }
        } else {
            let _ = writeln!(out, "{p}{} = {lhs_b_text}", sc.seed);
            let _ = writeln!(out, "{p}{lhs_b_text} = 0.0");
            for (t, f) in &parts {
                accumulate(out, t, f.as_ref(), Expr::Var(sc.seed.clone()));
            }
        }
    }

    fn bwd(&self, sc: &mut Scope<'_>, stmts: &[Stmt], depth: usize, out: &mut String) {
        let p = pad(depth);
        for s in stmts.iter().rev() {
            let info = &sc.pa.stmts[s.id];
            match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    if !info.sliced && !info.record.is_empty() {
                        let _ = writeln!(out, "{p}POP({})", lvalue_to_string(lhs));
                    }
                    self.derivative(sc, lhs, rhs, &p, out);
                }
                StmtKind::Call { callee, args, .. } => match self.mode(sc.proc, s) {
                    Mode::Joint => {
                        let site = SiteId::new(sc.proc.name.clone(), s.span);
                        if let Some(snp) = self.an.snapshot(&site).filter(|v| !v.is_empty()) {
                            let _ = writeln!(out, "{p}POP_SNAPSHOT({})", Self::push_list(snp.iter().map(String::from)));
                        }
                        let _ =
                            writeln!(out, "{p}call {}({})", self.routine(callee, Routine::Joint), sc.args(args, true));
                        if !info.record.is_empty() {
                            let _ = writeln!(out, "{p}POP({})", Self::push_list(info.record.iter().map(String::from)));
                        }
                    }
                    Mode::Split => {
                        let _ =
                            writeln!(out, "{p}call {}({})", self.routine(callee, Routine::Bwd), sc.args(args, true));
                    }
                },
                StmtKind::For { var, body, .. } => {
                    let _ = writeln!(out, "{p}POP_LOOP({var})");
                    let _ = writeln!(out, "{p}for {var} reversed");
                    self.bwd(sc, body, depth + 1, out);
                    let _ = writeln!(out, "{p}end");
                }
                StmtKind::If { then_body, else_body, .. } => {
                    sc.branch_used = true;
                    let _ = writeln!(out, "{p}POP_BRANCH({})", sc.branch);
                    let _ = writeln!(out, "{p}if {} == 1", sc.branch);
                    self.bwd(sc, then_body, depth + 1, out);
                    let _ = writeln!(out, "{p}else");
                    self.bwd(sc, else_body, depth + 1, out);
                    let _ = writeln!(out, "{p}end");
                }
            }
        }
    }

    fn emit(&self, proc: &ProcDef, r: Routine) -> String {
        let pa = &self.an.procs[proc.name.as_str()];
        let mut sc = Scope::new(proc, pa);
        let mut body = String::new();
        let locals = || Self::push_list(pa.split_locals.iter().map(String::from));
        if r != Routine::Bwd {
            self.fwd(&mut sc, &proc.body, 1, &mut body);
        }
        if r == Routine::Fwd && !pa.split_locals.is_empty() {
            let _ = writeln!(body, "  PUSH_LOCALS({})", locals());
        }
        if r == Routine::Joint {
            body.push_str("  ! backward sweep\n");
        }
        if r == Routine::Bwd && !pa.split_locals.is_empty() {
            let _ = writeln!(body, "  POP_LOCALS({})", locals());
        }
        if r != Routine::Fwd {
            self.bwd(&mut sc, &proc.body, 1, &mut body);
        }
        let mut out = sc.header(self.routine(&proc.name, r), r != Routine::Fwd);
        out.push_str(&body);
        out.push_str("end\n");
        out
    }
}

/// Renders the adjoint routines of every procedure reachable from `entry`
/// under `plan`. Procedures checkpointed somewhere (and the entry) get one
/// `_b` routine; procedures called in split mode get `_fwd` and `_bwd`.
pub fn emit_listing(program: &Program, entry: &str, plan: &CheckpointPlan) -> String {
    let an = analyze(program, entry, plan);
    let order = topo_order(program, entry);
    let mut needed: Vec<(String, Routine)> = Vec::new();
    for name in &order {
        let Some(proc) = program.proc(name) else { continue };
        let mut joint = name == entry;
        for caller in &order {
            let Some(c) = program.proc(caller) else { continue };
            visit_stmts(&c.body, &mut |s| {
                if let StmtKind::Call { callee, .. } = &s.kind {
                    if callee == name
                        && plan.mode(&SiteId::new(caller.clone(), s.span)).unwrap_or(Mode::Joint) == Mode::Joint
                    {
                        joint = true;
                    }
                }
            });
        }
        if joint {
            needed.push((proc.name.clone(), Routine::Joint));
        }
        if an.procs[name.as_str()].split_called {
            needed.push((proc.name.clone(), Routine::Fwd));
            needed.push((proc.name.clone(), Routine::Bwd));
        }
    }
    let mut taken: BTreeSet<String> = program.procs.keys().cloned().collect();
    let routines =
        needed.iter().map(|(p, r)| ((p.clone(), *r), fresh(&format!("{p}{}", r.suffix()), &mut taken))).collect();
    let em = Emitter { program, plan, an: &an, routines };
    let parts: Vec<String> =
        needed.iter().map(|(p, r)| em.emit(em.program.proc(p).expect("reachable procedure"), *r)).collect();
    parts.join("\n")
}
