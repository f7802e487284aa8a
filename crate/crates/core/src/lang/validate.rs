//! Static checks on a parsed program.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::Serialize;

use super::ast::*;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub proc: String,
    pub span: Span,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.proc, self.span, self.message)
    }
}

struct Checker<'a> {
    program: &'a Program,
    proc: &'a ProcDef,
    diags: Vec<Diagnostic>,
    indices: Vec<String>,
}

impl<'a> Checker<'a> {
    fn report(&mut self, span: Span, message: impl Into<String>) {
        self.diags.push(Diagnostic { proc: self.proc.name.clone(), span, message: message.into() });
    }

    fn is_index(&self, name: &str) -> bool {
        self.indices.iter().any(|i| i == name)
    }

    fn expr(&mut self, e: &Expr, span: Span) {
        match e {
            Expr::Const(_) => {}
            Expr::Var(v) => {
                if self.is_index(v) {
                    return;
                }
                match self.proc.decl(v) {
                    None => self.report(span, format!("undeclared variable `{v}`")),
                    Some(d) if d.kind.is_array() => self.report(span, format!("array `{v}` used without a subscript")),
                    _ => {}
                }
            }
            Expr::Elem(a, i) => {
                match self.proc.decl(a) {
                    None => self.report(span, format!("undeclared array `{a}`")),
                    Some(d) if !d.kind.is_array() => self.report(span, format!("scalar `{a}` used with a subscript")),
                    _ => {}
                }
                self.expr(i, span);
            }
            Expr::Neg(x) | Expr::Pow(x, _) | Expr::Call(_, x) => self.expr(x, span),
            Expr::Binary(_, l, r) => {
                self.expr(l, span);
                self.expr(r, span);
            }
        }
    }

    fn lvalue(&mut self, l: &LValue, span: Span) {
        if self.is_index(&l.name) {
            self.report(span, format!("loop index `{}` assigned inside its loop", l.name));
            return;
        }
        match (self.proc.decl(&l.name), &l.index) {
            (None, _) => self.report(span, format!("undeclared variable `{}`", l.name)),
            (Some(d), None) if d.kind.is_array() => {
                self.report(span, format!("whole-array assignment to `{}` is not supported", l.name))
            }
            (Some(d), Some(_)) if !d.kind.is_array() => {
                self.report(span, format!("scalar `{}` used with a subscript", l.name))
            }
            _ => {}
        }
        if let Some(i) = &l.index {
            self.expr(i, span);
        }
    }

    fn stmts(&mut self, stmts: &'a [Stmt]) {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    self.lvalue(lhs, s.span);
                    self.expr(rhs, s.span);
                }
                StmtKind::Call { callee, args, .. } => self.call(callee, args, s.span),
                StmtKind::For { var, lo, hi, body } => {
                    self.expr(lo, s.span);
                    self.expr(hi, s.span);
                    if self.proc.decl(var).is_some() {
                        self.report(s.span, format!("loop index `{var}` shadows a declared variable"));
                    }
                    if self.is_index(var) {
                        self.report(s.span, format!("loop index `{var}` reused by a nested loop"));
                    }
                    self.indices.push(var.clone());
                    self.stmts(body);
                    self.indices.pop();
                }
                StmtKind::If { cond, then_body, else_body } => {
                    self.expr(&cond.lhs, s.span);
                    self.expr(&cond.rhs, s.span);
                    self.stmts(then_body);
                    self.stmts(else_body);
                }
            }
        }
    }

    fn call(&mut self, callee: &str, args: &[LValue], span: Span) {
        let Some(target) = self.program.proc(callee) else {
            self.report(span, format!("call to unknown procedure `{callee}`"));
            return;
        };
        if target.params.len() != args.len() {
            self.report(
                span,
                format!("`{callee}` takes {} argument(s) but {} were given", target.params.len(), args.len()),
            );
        }
        let mut seen = HashSet::new();
        for (arg, param) in args.iter().zip(target.params.iter()) {
            if !seen.insert(arg.name.clone()) {
                self.report(span, format!("variable `{}` passed more than once to `{callee}`", arg.name));
            }
            if self.is_index(&arg.name) {
                self.report(span, format!("loop index `{}` cannot be passed by reference", arg.name));
                continue;
            }
            let Some(decl) = self.proc.decl(&arg.name) else {
                self.report(span, format!("undeclared variable `{}`", arg.name));
                continue;
            };
            match (&arg.index, decl.kind, param.kind) {
                (None, Kind::Scalar, Kind::Scalar) => {}
                (None, Kind::Array(n), Kind::Array(m)) if n == m => {}
                (Some(i), Kind::Array(_), Kind::Scalar) => {
                    let mut reads = Vec::new();
                    i.reads(&mut reads);
                    if reads.iter().any(|r| !self.is_index(r)) {
                        self.report(
                            span,
                            format!("subscript of argument `{}` may only use constants and loop indices", arg.name),
                        );
                    }
                    self.expr(i, span);
                }
                _ => self.report(
                    span,
                    format!(
                        "argument `{}` does not match the shape of parameter `{}` of `{callee}`",
                        arg.name, param.name
                    ),
                ),
            }
        }
    }
}

fn find_cycle(program: &Program) -> Option<Vec<String>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Active,
        Done,
    }
    fn dfs(
        program: &Program,
        name: &str,
        marks: &mut BTreeMap<String, Mark>,
        path: &mut Vec<String>,
    ) -> Option<Vec<String>> {
        marks.insert(name.to_string(), Mark::Active);
        path.push(name.to_string());
        if let Some(p) = program.proc(name) {
            for (_, callee) in call_sites(p) {
                match marks.get(callee).copied().unwrap_or(Mark::Done) {
                    Mark::Active => {
                        let start = path.iter().position(|n| n == callee).unwrap_or(0);
                        let mut cycle = path[start..].to_vec();
                        cycle.push(callee.to_string());
                        return Some(cycle);
                    }
                    Mark::New => {
                        if let Some(c) = dfs(program, callee, marks, path) {
                            return Some(c);
                        }
                    }
                    Mark::Done => {}
                }
            }
        }
        path.pop();
        marks.insert(name.to_string(), Mark::Done);
        None
    }
    let mut marks: BTreeMap<String, Mark> = program.procs.keys().map(|k| (k.clone(), Mark::New)).collect();
    for name in program.procs.keys() {
        if marks[name] == Mark::New {
            if let Some(c) = dfs(program, name, &mut marks, &mut Vec::new()) {
                return Some(c);
            }
        }
    }
    None
}

/// Checks every program invariant. An empty result means the program is
/// well formed.
pub fn validate(program: &Program) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    for (key, proc) in &program.procs {
        let mut c = Checker { program, proc, diags: Vec::new(), indices: Vec::new() };
        if key != &proc.name {
            c.report(proc.span, format!("procedure registered as `{key}` but named `{}`", proc.name));
        }
        let mut names = HashSet::new();
        for d in proc.decls() {
            if !names.insert(d.name.as_str()) {
                c.report(d.span, format!("`{}` declared more than once", d.name));
            }
            if d.kind == Kind::Array(0) {
                c.report(d.span, format!("array `{}` must have positive size", d.name));
            }
            if Intrinsic::from_name(&d.name).is_some() {
                c.report(d.span, format!("`{}` is an intrinsic name", d.name));
            }
        }
        c.stmts(&proc.body);
        diags.extend(c.diags);
    }
    if let Some(cycle) = find_cycle(program) {
        let first = &cycle[0];
        let span = program.proc(first).map(|p| p.span).unwrap_or_default();
        diags.push(Diagnostic {
            proc: first.clone(),
            span,
            message: format!("recursive call chain {}", cycle.join(" -> ")),
        });
    }
    diags
}

/// Procedures reachable from `entry`, callers before callees.
pub fn topo_order(program: &Program, entry: &str) -> Vec<String> {
    fn post(program: &Program, name: &str, seen: &mut HashSet<String>, out: &mut Vec<String>) {
        if !seen.insert(name.to_string()) {
            return;
        }
        if let Some(p) = program.proc(name) {
            for (_, callee) in call_sites(p) {
                post(program, callee, seen, out);
            }
        }
        out.push(name.to_string());
    }
    let mut out = Vec::new();
    post(program, entry, &mut HashSet::new(), &mut out);
    out.reverse();
    out
}
