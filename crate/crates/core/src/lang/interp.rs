//! Primal interpreter and the cell-based machine shared with the adjoint
//! engine.
//!
//! Variables live in a flat cell memory. Each active call owns a frame that
//! maps its declarations to cell ranges; by-reference parameters point into
//! the caller's cells, locals are allocated on entry and released on exit.

use std::collections::{BTreeMap, BTreeSet};

use super::ast::*;
use super::error::EvalError;
use super::store::{Store, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EvalOptions {
    /// Reading a never-written cell is an error. When off, cells start at 0.
    pub strict_uninit: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { strict_uninit: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Slot {
    pub base: usize,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Frame<'p> {
    pub proc: &'p ProcDef,
    /// Parallel to `proc.decls()`.
    pub slots: Vec<Slot>,
    pub indices: Vec<(&'p str, i64)>,
    mark: usize,
}

impl<'p> Frame<'p> {
    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.proc.decls().position(|d| d.name == name)
    }

    pub fn slot(&self, name: &str) -> Option<Slot> {
        self.var_index(name).map(|i| self.slots[i])
    }

    fn index_value(&self, name: &str) -> Option<i64> {
        self.indices.iter().rev().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }
}

/// Hooks into plain execution, used by the trace oracles.
pub(crate) trait Observer {
    fn before_assign(&mut self, _m: &Machine<'_>, _frame: &Frame<'_>, _stmt: &Stmt) -> Result<(), EvalError> {
        Ok(())
    }
    fn on_write(&mut self, _addr: usize) {}
    fn enter_call(&mut self, _frame: &Frame<'_>) {}
    fn exit_call(&mut self, _frame: &Frame<'_>) {}
}

pub(crate) struct NoObserver;

impl Observer for NoObserver {}

pub(crate) struct Machine<'p> {
    pub program: &'p Program,
    pub mem: Vec<Option<f64>>,
    pub adj: Vec<f64>,
    pub strict: bool,
    /// Dynamic position: call-site statement ids and (loop id, iteration)
    /// pairs from the entry down.
    pub path: Vec<u32>,
    pub plain_ops: u64,
}

fn check_finite(v: f64, span: Span) -> Result<f64, EvalError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(EvalError::NonFinite { span, value: v })
    }
}

impl<'p> Machine<'p> {
    pub fn new(program: &'p Program, opts: EvalOptions) -> Self {
        Machine {
            program,
            mem: Vec::new(),
            adj: Vec::new(),
            strict: opts.strict_uninit,
            path: Vec::new(),
            plain_ops: 0,
        }
    }

    fn alloc(&mut self, len: usize) -> Slot {
        let base = self.mem.len();
        let init = if self.strict { None } else { Some(0.0) };
        self.mem.resize(base + len, init);
        self.adj.resize(base + len, 0.0);
        Slot { base, len }
    }

    pub fn proc(&self, name: &str) -> Result<&'p ProcDef, EvalError> {
        self.program.proc(name).ok_or_else(|| EvalError::UnknownProc(name.to_string()))
    }

    /// Allocates the entry frame and binds `inputs` to its parameters.
    pub fn root_frame(&mut self, entry: &'p ProcDef, inputs: &Store) -> Result<Frame<'p>, EvalError> {
        for name in inputs.0.keys() {
            if !entry.is_param(name) {
                return Err(EvalError::BadInput {
                    var: name.clone(),
                    msg: format!("not a parameter of `{}`", entry.name),
                });
            }
        }
        let mark = self.mem.len();
        let mut slots = Vec::new();
        for d in entry.decls() {
            let slot = self.alloc(d.kind.len());
            if let Some(v) = inputs.get(&d.name) {
                let cells = v.cells();
                let shape_ok = match (d.kind, v) {
                    (Kind::Scalar, Value::Scalar(_)) => true,
                    (Kind::Array(n), Value::Array(a)) => a.len() == n,
                    _ => false,
                };
                if !shape_ok {
                    return Err(EvalError::BadInput {
                        var: d.name.clone(),
                        msg: "shape does not match declaration".into(),
                    });
                }
                for (k, c) in cells.iter().enumerate() {
                    self.mem[slot.base + k] = Some(*c);
                }
            }
            slots.push(slot);
        }
        Ok(Frame { proc: entry, slots, indices: Vec::new(), mark })
    }

    /// Binds a callee frame to the caller's argument cells.
    pub fn callee_frame(
        &mut self,
        caller: &Frame<'p>,
        callee: &'p ProcDef,
        args: &[LValue],
        span: Span,
    ) -> Result<Frame<'p>, EvalError> {
        let mark = self.mem.len();
        let mut slots = Vec::with_capacity(callee.params.len() + callee.locals.len());
        for (arg, param) in args.iter().zip(&callee.params) {
            let slot = match &arg.index {
                None => caller.slot(&arg.name).ok_or_else(|| EvalError::UnknownProc(arg.name.clone()))?,
                Some(_) => Slot { base: self.addr(caller, arg, span)?, len: 1 },
            };
            debug_assert_eq!(slot.len, param.kind.len());
            slots.push(slot);
        }
        for local in &callee.locals {
            slots.push(self.alloc(local.kind.len()));
        }
        Ok(Frame { proc: callee, slots, indices: Vec::new(), mark })
    }

    pub fn free(&mut self, frame: Frame<'p>) {
        self.mem.truncate(frame.mark);
        self.adj.truncate(frame.mark);
    }

    pub fn read(&self, addr: usize, name: &str, span: Span) -> Result<f64, EvalError> {
        self.mem[addr].ok_or_else(|| EvalError::Uninitialized { span, var: name.to_string() })
    }

    fn element(&self, frame: &Frame<'_>, name: &str, idx: &Expr, span: Span) -> Result<usize, EvalError> {
        let slot = frame.slot(name).ok_or_else(|| EvalError::Uninitialized { span, var: name.to_string() })?;
        let i = self.eval(frame, idx, span)?;
        if i != i.trunc() {
            return Err(EvalError::NonInteger { span, value: i });
        }
        if i < 1.0 || i > slot.len as f64 {
            return Err(EvalError::OutOfBounds { span, var: name.to_string(), index: i });
        }
        Ok(slot.base + i as usize - 1)
    }

    /// Cell address designated by an lvalue.
    pub fn addr(&self, frame: &Frame<'_>, lv: &LValue, span: Span) -> Result<usize, EvalError> {
        match &lv.index {
            Some(i) => self.element(frame, &lv.name, i, span),
            None => frame
                .slot(&lv.name)
                .map(|s| s.base)
                .ok_or_else(|| EvalError::Uninitialized { span, var: lv.name.clone() }),
        }
    }

    pub fn eval_int(&self, frame: &Frame<'_>, e: &Expr, span: Span) -> Result<i64, EvalError> {
        let v = self.eval(frame, e, span)?;
        if v != v.trunc() || v.abs() > 1e15 {
            return Err(EvalError::NonInteger { span, value: v });
        }
        Ok(v as i64)
    }

    pub fn eval(&self, frame: &Frame<'_>, e: &Expr, span: Span) -> Result<f64, EvalError> {
        Ok(match e {
            Expr::Const(c) => *c,
            Expr::Var(v) => {
                if let Some(i) = frame.index_value(v) {
                    return Ok(i as f64);
                }
                let addr = frame.slot(v).ok_or_else(|| EvalError::Uninitialized { span, var: v.clone() })?.base;
                self.read(addr, v, span)?
            }
            Expr::Elem(a, i) => {
                let addr = self.element(frame, a, i, span)?;
                self.read(addr, a, span)?
            }
            Expr::Neg(x) => -self.eval(frame, x, span)?,
            Expr::Binary(op, l, r) => {
                let a = self.eval(frame, l, span)?;
                let b = self.eval(frame, r, span)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero { span });
                        }
                        a / b
                    }
                }
            }
            Expr::Pow(b, n) => {
                let b = self.eval(frame, b, span)?;
                if *n < 0 && b == 0.0 {
                    return Err(EvalError::DivisionByZero { span });
                }
                b.powi(*n)
            }
            Expr::Call(f, x) => {
                let x = self.eval(frame, x, span)?;
                match f {
                    Intrinsic::Sin => x.sin(),
                    Intrinsic::Cos => x.cos(),
                    Intrinsic::Exp => check_finite(x.exp(), span)?,
                    Intrinsic::Log => {
                        if x <= 0.0 {
                            return Err(EvalError::Domain { span, what: "log", arg: x });
                        }
                        x.ln()
                    }
                    Intrinsic::Sqrt => {
                        if x < 0.0 {
                            return Err(EvalError::Domain { span, what: "sqrt", arg: x });
                        }
                        x.sqrt()
                    }
                }
            }
        })
    }

    pub fn eval_cond(&self, frame: &Frame<'_>, c: &Cond, span: Span) -> Result<bool, EvalError> {
        let a = self.eval(frame, &c.lhs, span)?;
        let b = self.eval(frame, &c.rhs, span)?;
        Ok(c.rel.holds(a, b))
    }

    /// Executes one assignment with no recording.
    pub fn assign(&mut self, frame: &Frame<'_>, lhs: &LValue, rhs: &Expr, span: Span) -> Result<usize, EvalError> {
        let v = check_finite(self.eval(frame, rhs, span)?, span)?;
        let addr = self.addr(frame, lhs, span)?;
        self.mem[addr] = Some(v);
        Ok(addr)
    }

    /// Plain primal execution of a statement list.
    pub fn exec_plain(
        &mut self,
        frame: &mut Frame<'p>,
        stmts: &'p [Stmt],
        obs: &mut dyn Observer,
    ) -> Result<(), EvalError> {
        for s in stmts {
            match &s.kind {
                StmtKind::Assign { lhs, rhs } => {
                    obs.before_assign(self, frame, s)?;
                    let addr = self.assign(frame, lhs, rhs, s.span)?;
                    obs.on_write(addr);
                    self.plain_ops += 1;
                }
                StmtKind::Call { callee, args, .. } => {
                    let target = self.proc(callee)?;
                    let mut inner = self.callee_frame(frame, target, args, s.span)?;
                    self.path.push(s.id as u32);
                    obs.enter_call(&inner);
                    self.exec_plain(&mut inner, &target.body, obs)?;
                    obs.exit_call(&inner);
                    self.path.pop();
                    self.free(inner);
                }
                StmtKind::For { var, lo, hi, body } => {
                    let lo = self.eval_int(frame, lo, s.span)?;
                    let hi = self.eval_int(frame, hi, s.span)?;
                    for k in 0..(hi - lo + 1).max(0) {
                        frame.indices.push((var.as_str(), lo + k));
                        self.path.extend([s.id as u32, k as u32]);
                        self.exec_plain(frame, body, obs)?;
                        self.path.truncate(self.path.len() - 2);
                        frame.indices.pop();
                    }
                }
                StmtKind::If { cond, then_body, else_body } => {
                    let taken = if self.eval_cond(frame, cond, s.span)? { then_body } else { else_body };
                    self.exec_plain(frame, taken, obs)?;
                }
            }
        }
        Ok(())
    }

    /// Snapshot of a frame's parameters as a [`Store`]. Uninitialized scalars
    /// are omitted; uninitialized array cells read as NaN.
    pub fn params_store(&self, frame: &Frame<'_>) -> Store {
        let mut out = Store::new();
        for (d, slot) in frame.proc.params.iter().zip(&frame.slots) {
            let cells = &self.mem[slot.base..slot.base + slot.len];
            match d.kind {
                Kind::Scalar => {
                    if let Some(v) = cells[0] {
                        out.set_scalar(&d.name, v);
                    }
                }
                Kind::Array(_) => {
                    out.0.insert(d.name.clone(), Value::Array(cells.iter().map(|c| c.unwrap_or(f64::NAN)).collect()));
                }
            }
        }
        out
    }

    pub fn adjoint_store(&self, frame: &Frame<'_>) -> Store {
        let mut out = Store::new();
        for (d, slot) in frame.proc.params.iter().zip(&frame.slots) {
            let cells = &self.adj[slot.base..slot.base + slot.len];
            let v = match d.kind {
                Kind::Scalar => Value::Scalar(cells[0]),
                Kind::Array(_) => Value::Array(cells.to_vec()),
            };
            out.0.insert(d.name.clone(), v);
        }
        out
    }
}

/// Runs `entry` on `inputs` and returns the final values of its parameters.
///
/// Deterministic and side-effect free; no tape is recorded.
pub fn eval_primal(program: &Program, entry: &str, inputs: &Store, opts: EvalOptions) -> Result<Store, EvalError> {
    let mut m = Machine::new(program, opts);
    let proc = m.proc(entry)?;
    let mut frame = m.root_frame(proc, inputs)?;
    m.exec_plain(&mut frame, &proc.body, &mut NoObserver)?;
    Ok(m.params_store(&frame))
}

/// Variables of an open call (name, base, length), cells written so far,
/// and the procedure name.
type OpenCall = (Vec<(String, usize, usize)>, BTreeSet<usize>, String);

struct WriteLog {
    stack: Vec<OpenCall>,
    observed: BTreeMap<String, BTreeSet<String>>,
}

impl WriteLog {
    fn open(&mut self, frame: &Frame<'_>) {
        let vars = frame.proc.decls().zip(&frame.slots).map(|(d, s)| (d.name.clone(), s.base, s.len)).collect();
        self.stack.push((vars, BTreeSet::new(), frame.proc.name.clone()));
    }

    fn close(&mut self) {
        let Some((vars, written, proc)) = self.stack.pop() else { return };
        let entry = self.observed.entry(proc).or_default();
        for (name, base, len) in vars {
            if written.range(base..base + len).next().is_some() {
                entry.insert(name);
            }
        }
    }
}

impl Observer for WriteLog {
    fn on_write(&mut self, addr: usize) {
        for (_, written, _) in &mut self.stack {
            written.insert(addr);
        }
    }
    fn enter_call(&mut self, frame: &Frame<'_>) {
        self.open(frame);
    }
    fn exit_call(&mut self, _frame: &Frame<'_>) {
        self.close();
    }
}

/// Instrumented run: for each procedure, the variables of its own scope that
/// were actually written during any of its invocations (callee writes through
/// by-reference arguments included).
pub fn observed_writes(
    program: &Program,
    entry: &str,
    inputs: &Store,
    opts: EvalOptions,
) -> Result<BTreeMap<String, BTreeSet<String>>, EvalError> {
    let mut m = Machine::new(program, opts);
    let proc = m.proc(entry)?;
    let mut frame = m.root_frame(proc, inputs)?;
    let mut log = WriteLog { stack: Vec::new(), observed: BTreeMap::new() };
    log.open(&frame);
    m.exec_plain(&mut frame, &proc.body, &mut log)?;
    log.close();
    Ok(log.observed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    const SUB1: &str =
        "proc sub1(x, y, z)\n local tmp1\n tmp1 = SIN(y)\n y = y * y\n tmp1 = tmp1 * x\n z = y / tmp1\nend\n";

    #[test]
    fn sub1_value() {
        let p = parse_program(SUB1).unwrap();
        let y = std::f64::consts::FRAC_PI_2;
        let out =
            eval_primal(&p, "sub1", &Store::new().with_scalar("x", 1.0).with_scalar("y", y), EvalOptions::default())
                .unwrap();
        let expected = y * y / (1.0 * y.sin());
        assert_eq!(out.scalar("z"), Some(expected));
        assert!((out.scalar("z").unwrap() - std::f64::consts::PI.powi(2) / 4.0).abs() < 1e-12);
    }

    #[test]
    fn sub1_division_by_zero() {
        let p = parse_program(SUB1).unwrap();
        let err =
            eval_primal(&p, "sub1", &Store::new().with_scalar("x", 1.0).with_scalar("y", 0.0), EvalOptions::default())
                .unwrap_err();
        assert_eq!(err, EvalError::DivisionByZero { span: Span::new(6, 2) });
    }

    #[test]
    fn identity() {
        let p = parse_program("proc id(x, z)\n z = x\nend\n").unwrap();
        let out = eval_primal(&p, "id", &Store::new().with_scalar("x", 3.5), EvalOptions::default()).unwrap();
        assert_eq!(out.scalar("z"), Some(3.5));
    }

    #[test]
    fn uninitialized_strict_and_lenient() {
        let p = parse_program("proc f(x, z)\n local t\n z = x + t\nend\n").unwrap();
        let inputs = Store::new().with_scalar("x", 1.0);
        let err = eval_primal(&p, "f", &inputs, EvalOptions::default()).unwrap_err();
        assert!(matches!(err, EvalError::Uninitialized { ref var, .. } if var == "t"));
        let out = eval_primal(&p, "f", &inputs, EvalOptions { strict_uninit: false }).unwrap();
        assert_eq!(out.scalar("z"), Some(1.0));
    }

    #[test]
    fn domain_errors() {
        let p = parse_program("proc f(x, z)\n z = log(x)\nend\nproc g(x, z)\n z = sqrt(x)\nend\n").unwrap();
        let bad = Store::new().with_scalar("x", -1.0);
        assert!(matches!(
            eval_primal(&p, "f", &bad, EvalOptions::default()),
            Err(EvalError::Domain { what: "log", .. })
        ));
        assert!(matches!(
            eval_primal(&p, "g", &bad, EvalOptions::default()),
            Err(EvalError::Domain { what: "sqrt", .. })
        ));
    }

    #[test]
    fn by_reference_and_arrays() {
        let src = "\
proc scale(a(3), s)
  for i = 1 .. 3
    a(i) = a(i) * s
  end
end
proc bump(v)
  v = v + 1
end
proc main(a(3), s)
  call scale(a, s)
  call bump(a(2))
end
";
        let p = parse_program(src).unwrap();
        let out = eval_primal(
            &p,
            "main",
            &Store::new().with_array("a", vec![1.0, 2.0, 3.0]).with_scalar("s", 2.0),
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(out.get("a"), Some(&Value::Array(vec![2.0, 5.0, 6.0])));
        let writes = observed_writes(
            &p,
            "main",
            &Store::new().with_array("a", vec![1.0, 2.0, 3.0]).with_scalar("s", 2.0),
            EvalOptions::default(),
        )
        .unwrap();
        assert_eq!(writes["main"], BTreeSet::from(["a".to_string()]));
        assert_eq!(writes["bump"], BTreeSet::from(["v".to_string()]));
    }

    #[test]
    fn bad_index() {
        let p = parse_program("proc f(a(2), z)\n z = a(3)\nend\n").unwrap();
        let err =
            eval_primal(&p, "f", &Store::new().with_array("a", vec![1.0, 2.0]), EvalOptions::default()).unwrap_err();
        assert!(matches!(err, EvalError::OutOfBounds { .. }));
    }
}
