//! Shadow trace: the primal values each derivative statement should see,
//! logged from a plain reference run.

use std::collections::HashMap;

use crate::lang::interp::{Frame, Machine, Observer};
use crate::lang::{EvalError, EvalOptions, Expr, Program, Span, Stmt, StmtKind, Store};

use super::rules::{adjoint_of, AdjointAssign};

fn leaves(m: &Machine<'_>, frame: &Frame<'_>, e: &Expr, span: Span, out: &mut Vec<f64>) -> Result<(), EvalError> {
    match e {
        Expr::Const(_) => {}
        Expr::Var(_) => out.push(m.eval(frame, e, span)?),
        Expr::Elem(_, i) => {
            leaves(m, frame, i, span, out)?;
            out.push(m.eval(frame, e, span)?);
        }
        Expr::Neg(x) | Expr::Pow(x, _) | Expr::Call(_, x) => leaves(m, frame, x, span, out)?,
        Expr::Binary(_, l, r) => {
            leaves(m, frame, l, span, out)?;
            leaves(m, frame, r, span, out)?;
        }
    }
    Ok(())
}

/// Every variable, element and subscript value the derivative statements
/// of `a` read, in a fixed order.
pub(crate) fn derivative_reads(
    m: &Machine<'_>,
    frame: &Frame<'_>,
    a: &AdjointAssign,
    span: Span,
) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::new();
    if let Some(i) = &a.lhs.index {
        leaves(m, frame, i, span, &mut out)?;
    }
    for p in &a.partials {
        if let Some(f) = &p.factor {
            leaves(m, frame, f, span, &mut out)?;
        }
        if let Some(i) = &p.target.index {
            leaves(m, frame, i, span, &mut out)?;
        }
    }
    Ok(out)
}

/// Key of one dynamic statement instance: the machine path plus the
/// statement id.
pub(crate) type InstanceKey = (Vec<u32>, usize);

#[derive(Debug, Default)]
pub struct ShadowTrace {
    pub(crate) reads: HashMap<InstanceKey, Vec<f64>>,
}

struct Recorder {
    reads: HashMap<InstanceKey, Vec<f64>>,
}

impl Observer for Recorder {
    fn before_assign(&mut self, m: &Machine<'_>, frame: &Frame<'_>, stmt: &Stmt) -> Result<(), EvalError> {
        let StmtKind::Assign { lhs, rhs } = &stmt.kind else { return Ok(()) };
        let is_var = |n: &str| frame.proc.decl(n).is_some();
        let a = adjoint_of(lhs, rhs, &is_var);
        let values = derivative_reads(m, frame, &a, stmt.span)?;
        self.reads.insert((m.path.clone(), stmt.id), values);
        Ok(())
    }
}

impl ShadowTrace {
    /// Runs `entry` plainly and logs, for every executed assignment, the
    /// values its derivative statements read.
    pub fn record(program: &Program, entry: &str, inputs: &Store, opts: EvalOptions) -> Result<Self, EvalError> {
        let mut m = Machine::new(program, opts);
        let proc = m.proc(entry)?;
        let mut frame = m.root_frame(proc, inputs)?;
        let mut rec = Recorder { reads: HashMap::new() };
        m.exec_plain(&mut frame, &proc.body, &mut rec)?;
        Ok(ShadowTrace { reads: rec.reads })
    }

    pub fn len(&self) -> usize {
        self.reads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.reads.is_empty()
    }
}
