//! Source IR of the mini language.

use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// 1-based source position.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl Span {
    pub fn new(line: u32, col: u32) -> Self {
        Span { line, col }
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// Shape of a declared variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Kind {
    Scalar,
    Array(usize),
}

impl Kind {
    /// Number of f64 cells the variable occupies.
    #[allow(clippy::len_without_is_empty)]
    pub fn len(self) -> usize {
        match self {
            Kind::Scalar => 1,
            Kind::Array(n) => n,
        }
    }

    pub fn is_array(self) -> bool {
        matches!(self, Kind::Array(_))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decl {
    pub name: String,
    pub kind: Kind,
    pub span: Span,
}

/// Index of a statement inside its procedure, assigned in preorder.
pub type StmtId = usize;

#[derive(Debug, Clone, PartialEq)]
pub struct ProcDef {
    pub name: String,
    pub params: Vec<Decl>,
    pub locals: Vec<Decl>,
    pub body: Vec<Stmt>,
    pub span: Span,
}

impl ProcDef {
    /// Looks up a parameter or local by name.
    pub fn decl(&self, name: &str) -> Option<&Decl> {
        self.params.iter().chain(self.locals.iter()).find(|d| d.name == name)
    }

    pub fn is_param(&self, name: &str) -> bool {
        self.params.iter().any(|d| d.name == name)
    }

    pub fn is_local(&self, name: &str) -> bool {
        self.locals.iter().any(|d| d.name == name)
    }

    /// All declarations, parameters first.
    pub fn decls(&self) -> impl Iterator<Item = &Decl> {
        self.params.iter().chain(self.locals.iter())
    }

    /// Reassigns statement ids in preorder. Returns the statement count.
    pub fn renumber(&mut self) -> usize {
        fn walk(stmts: &mut [Stmt], next: &mut usize) {
            for s in stmts {
                s.id = *next;
                *next += 1;
                match &mut s.kind {
                    StmtKind::For { body, .. } => walk(body, next),
                    StmtKind::If { then_body, else_body, .. } => {
                        walk(then_body, next);
                        walk(else_body, next);
                    }
                    _ => {}
                }
            }
        }
        let mut next = 0;
        walk(&mut self.body, &mut next);
        next
    }

    /// Number of statements (nested ones included).
    pub fn stmt_count(&self) -> usize {
        let mut n = 0;
        visit_stmts(&self.body, &mut |_| n += 1);
        n
    }
}

/// Preorder walk over a statement tree.
pub fn visit_stmts<'a>(stmts: &'a [Stmt], f: &mut impl FnMut(&'a Stmt)) {
    for s in stmts {
        f(s);
        match &s.kind {
            StmtKind::For { body, .. } => visit_stmts(body, f),
            StmtKind::If { then_body, else_body, .. } => {
                visit_stmts(then_body, f);
                visit_stmts(else_body, f);
            }
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stmt {
    pub id: StmtId,
    pub span: Span,
    pub kind: StmtKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StmtKind {
    Assign {
        lhs: LValue,
        rhs: Expr,
    },
    Call {
        callee: String,
        args: Vec<LValue>,
        /// Set by a preceding `NOCHECKPOINT` directive.
        nocheckpoint: bool,
    },
    For {
        var: String,
        lo: Expr,
        hi: Expr,
        body: Vec<Stmt>,
    },
    If {
        cond: Cond,
        then_body: Vec<Stmt>,
        else_body: Vec<Stmt>,
    },
}

/// A writable reference: a whole variable or one array element.
#[derive(Debug, Clone, PartialEq)]
pub struct LValue {
    pub name: String,
    pub index: Option<Box<Expr>>,
}

impl LValue {
    pub fn var(name: impl Into<String>) -> Self {
        LValue { name: name.into(), index: None }
    }

    pub fn elem(name: impl Into<String>, index: Expr) -> Self {
        LValue { name: name.into(), index: Some(Box::new(index)) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Intrinsic {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
}

impl Intrinsic {
    pub fn name(self) -> &'static str {
        match self {
            Intrinsic::Sin => "sin",
            Intrinsic::Cos => "cos",
            Intrinsic::Exp => "exp",
            Intrinsic::Log => "log",
            Intrinsic::Sqrt => "sqrt",
        }
    }

    /// Case-insensitive lookup, so `SIN` and `sin` both resolve.
    pub fn from_name(name: &str) -> Option<Self> {
        match name.to_ascii_lowercase().as_str() {
            "sin" => Some(Intrinsic::Sin),
            "cos" => Some(Intrinsic::Cos),
            "exp" => Some(Intrinsic::Exp),
            "log" => Some(Intrinsic::Log),
            "sqrt" => Some(Intrinsic::Sqrt),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    /// Scalar variable or loop index.
    Var(String),
    /// Array element read.
    Elem(String, Box<Expr>),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    /// Power with an integer literal exponent.
    Pow(Box<Expr>, i32),
    Call(Intrinsic, Box<Expr>),
}

impl Expr {
    pub fn var(name: impl Into<String>) -> Self {
        Expr::Var(name.into())
    }

    pub fn binary(op: BinOp, l: Expr, r: Expr) -> Self {
        Expr::Binary(op, Box::new(l), Box::new(r))
    }

    /// Every variable name read by the expression, subscripts included.
    pub fn reads(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) => {}
            Expr::Var(v) => out.push(v.clone()),
            Expr::Elem(a, i) => {
                out.push(a.clone());
                i.reads(out);
            }
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.reads(out),
            Expr::Binary(_, l, r) => {
                l.reads(out);
                r.reads(out);
            }
        }
    }

    /// Variables read only inside array subscripts.
    pub fn subscript_reads(&self, out: &mut Vec<String>) {
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Elem(_, i) => i.reads(out),
            Expr::Neg(e) | Expr::Pow(e, _) | Expr::Call(_, e) => e.subscript_reads(out),
            Expr::Binary(_, l, r) => {
                l.subscript_reads(out);
                r.subscript_reads(out);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RelOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl RelOp {
    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Lt => "<",
            RelOp::Le => "<=",
            RelOp::Gt => ">",
            RelOp::Ge => ">=",
            RelOp::Eq => "==",
            RelOp::Ne => "/=",
        }
    }

    pub fn holds(self, a: f64, b: f64) -> bool {
        match self {
            RelOp::Lt => a < b,
            RelOp::Le => a <= b,
            RelOp::Gt => a > b,
            RelOp::Ge => a >= b,
            RelOp::Eq => a == b,
            RelOp::Ne => a != b,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cond {
    pub lhs: Expr,
    pub rel: RelOp,
    pub rhs: Expr,
}

/// A parsed program: procedures in source order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Program {
    pub procs: IndexMap<String, ProcDef>,
}

impl Program {
    pub fn proc(&self, name: &str) -> Option<&ProcDef> {
        self.procs.get(name)
    }

    /// Copy with every span zeroed; used to compare programs structurally.
    pub fn without_spans(&self) -> Program {
        fn strip(stmts: &mut [Stmt]) {
            for s in stmts {
                s.span = Span::default();
                match &mut s.kind {
                    StmtKind::For { body, .. } => strip(body),
                    StmtKind::If { then_body, else_body, .. } => {
                        strip(then_body);
                        strip(else_body);
                    }
                    _ => {}
                }
            }
        }
        let mut p = self.clone();
        for proc in p.procs.values_mut() {
            proc.span = Span::default();
            for d in proc.params.iter_mut().chain(proc.locals.iter_mut()) {
                d.span = Span::default();
            }
            strip(&mut proc.body);
        }
        p
    }
}

/// Identity of a call statement: `proc:line:col`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId {
    pub proc: String,
    pub span: Span,
}

impl SiteId {
    pub fn new(proc: impl Into<String>, span: Span) -> Self {
        SiteId { proc: proc.into(), span }
    }
}

impl fmt::Display for SiteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.proc, self.span.line, self.span.col)
    }
}

impl std::str::FromStr for SiteId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts = s.rsplitn(3, ':');
        let col = parts.next();
        let line = parts.next();
        let proc = parts.next();
        match (proc, line, col) {
            (Some(p), Some(l), Some(c)) if !p.is_empty() => {
                let line = l.parse().map_err(|_| format!("bad line in site id `{s}`"))?;
                let col = c.parse().map_err(|_| format!("bad column in site id `{s}`"))?;
                Ok(SiteId::new(p, Span::new(line, col)))
            }
            _ => Err(format!("site id `{s}` is not of the form proc:line:col")),
        }
    }
}

impl Serialize for SiteId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SiteId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Every call site of `proc` with its callee, in preorder.
pub fn call_sites(proc: &ProcDef) -> Vec<(SiteId, &str)> {
    let mut out = Vec::new();
    visit_stmts(&proc.body, &mut |s| {
        if let StmtKind::Call { callee, .. } = &s.kind {
            out.push((SiteId::new(proc.name.clone(), s.span), callee.as_str()));
        }
    });
    out
}
