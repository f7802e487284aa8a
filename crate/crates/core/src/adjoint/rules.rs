//! Reverse differentiation rules for a single assignment.

use crate::lang::{BinOp, Expr, Intrinsic, LValue};

/// `target_b += factor * seed`; a missing factor means 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Partial {
    pub target: LValue,
    pub factor: Option<Expr>,
}

/// Derivative statements of `lhs = rhs`.
///
/// When the assigned variable also appears on the right-hand side, its
/// adjoint is saved into a temporary and cleared before the partials are
/// accumulated; otherwise the partials are accumulated first and the
/// adjoint of `lhs` is cleared afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointAssign {
    pub lhs: LValue,
    pub self_ref: bool,
    pub partials: Vec<Partial>,
}

fn neg(chain: Option<Expr>) -> Option<Expr> {
    Some(match chain {
        None => Expr::Const(-1.0),
        Some(Expr::Neg(e)) => *e,
        Some(Expr::Const(c)) => Expr::Const(-c),
        Some(e) => Expr::Neg(Box::new(e)),
    })
}

fn mul(chain: Option<Expr>, f: Expr) -> Option<Expr> {
    Some(match chain {
        None => f,
        Some(Expr::Const(-1.0)) => match f {
            Expr::Neg(e) => *e,
            f => Expr::Neg(Box::new(f)),
        },
        Some(c) => Expr::binary(BinOp::Mul, c, f),
    })
}

fn div(chain: Option<Expr>, d: Expr) -> Option<Expr> {
    Some(Expr::binary(BinOp::Div, chain.unwrap_or(Expr::Const(1.0)), d))
}

fn walk(e: &Expr, chain: Option<Expr>, is_var: &dyn Fn(&str) -> bool, out: &mut Vec<Partial>) {
    match e {
        Expr::Const(_) => {}
        Expr::Var(v) => {
            if is_var(v) {
                out.push(Partial { target: LValue::var(v.clone()), factor: chain });
            }
        }
        Expr::Elem(a, i) => out.push(Partial { target: LValue::elem(a.clone(), (**i).clone()), factor: chain }),
        Expr::Neg(x) => walk(x, neg(chain), is_var, out),
        Expr::Binary(op, l, r) => match op {
            BinOp::Add => {
                walk(l, chain.clone(), is_var, out);
                walk(r, chain, is_var, out);
            }
            BinOp::Sub => {
                walk(l, chain.clone(), is_var, out);
                walk(r, neg(chain), is_var, out);
            }
            BinOp::Mul => {
                walk(l, mul(chain.clone(), (**r).clone()), is_var, out);
                walk(r, mul(chain, (**l).clone()), is_var, out);
            }
            BinOp::Div => {
                walk(l, div(chain.clone(), (**r).clone()), is_var, out);
                // d(a/b)/db = -(a / b**2)
                let db = Expr::Neg(Box::new(Expr::binary(BinOp::Div, (**l).clone(), Expr::Pow(r.clone(), 2))));
                walk(r, mul(chain, db), is_var, out);
            }
        },
        Expr::Pow(b, n) => match n {
            0 => {}
            1 => walk(b, chain, is_var, out),
            2 => walk(b, mul(chain, Expr::binary(BinOp::Mul, Expr::Const(2.0), (**b).clone())), is_var, out),
            n => {
                let d = Expr::binary(BinOp::Mul, Expr::Const(*n as f64), Expr::Pow(b.clone(), n - 1));
                walk(b, mul(chain, d), is_var, out)
            }
        },
        Expr::Call(f, x) => {
            let arg = (**x).clone();
            let local = match f {
                Intrinsic::Sin => mul(chain, Expr::Call(Intrinsic::Cos, Box::new(arg))),
                Intrinsic::Cos => mul(chain, Expr::Neg(Box::new(Expr::Call(Intrinsic::Sin, Box::new(arg))))),
                Intrinsic::Exp => mul(chain, Expr::Call(Intrinsic::Exp, Box::new(arg))),
                Intrinsic::Log => div(chain, arg),
                Intrinsic::Sqrt => {
                    div(chain, Expr::binary(BinOp::Mul, Expr::Const(2.0), Expr::Call(Intrinsic::Sqrt, Box::new(arg))))
                }
            };
            walk(x, local, is_var, out)
        }
    }
}

/// Builds the derivative statements of `lhs = rhs`. `is_var` tells declared
/// variables apart from loop indices, which carry no adjoint.
pub fn adjoint_of(lhs: &LValue, rhs: &Expr, is_var: &dyn Fn(&str) -> bool) -> AdjointAssign {
    let mut partials = Vec::new();
    walk(rhs, None, is_var, &mut partials);
    let self_ref = partials.iter().any(|p| p.target.name == lhs.name);
    AdjointAssign { lhs: lhs.clone(), self_ref, partials }
}

impl AdjointAssign {
    /// Primal variables read by the derivative statements: everything in the
    /// partial factors plus every subscript needed to address an adjoint.
    pub fn primal_reads(&self, is_var: &dyn Fn(&str) -> bool) -> Vec<String> {
        let mut reads = Vec::new();
        if let Some(i) = &self.lhs.index {
            i.reads(&mut reads);
        }
        for p in &self.partials {
            if let Some(f) = &p.factor {
                f.reads(&mut reads);
            }
            if let Some(i) = &p.target.index {
                i.reads(&mut reads);
            }
        }
        reads.retain(|r| is_var(r));
        reads.sort();
        reads.dedup();
        reads
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::printer::expr_to_string;
    use crate::lang::{parse_program, StmtKind};

    fn rules(stmt: &str, decls: &str) -> (AdjointAssign, Vec<String>) {
        let src = format!("proc f({decls})\n {stmt}\nend\n");
        let p = parse_program(&src).unwrap();
        let proc = p.proc("f").unwrap();
        let StmtKind::Assign { lhs, rhs } = &proc.body[0].kind else { panic!() };
        let is_var = |n: &str| proc.decl(n).is_some();
        let a = adjoint_of(lhs, rhs, &is_var);
        let reads = a.primal_reads(&is_var);
        (a, reads)
    }

    fn factors(a: &AdjointAssign) -> Vec<(String, String)> {
        a.partials
            .iter()
            .map(|p| (p.target.name.clone(), p.factor.as_ref().map(expr_to_string).unwrap_or_else(|| "1".into())))
            .collect()
    }

    #[test]
    fn quotient_rule_matches_reference_listing() {
        let (a, reads) = rules("z = y / tmp1", "y, tmp1, z");
        assert!(!a.self_ref);
        assert_eq!(factors(&a), vec![("y".into(), "1.0 / tmp1".into()), ("tmp1".into(), "-(y / tmp1**2)".into())]);
        assert_eq!(reads, vec!["tmp1", "y"]);
    }

    #[test]
    fn self_reference() {
        let (a, reads) = rules("y = y * y", "y");
        assert!(a.self_ref);
        assert_eq!(factors(&a), vec![("y".into(), "y".into()), ("y".into(), "y".into())]);
        assert_eq!(reads, vec!["y"]);
    }

    #[test]
    fn linear_reads_nothing() {
        let (a, reads) = rules("z = 3 * x + y", "x, y, z");
        assert_eq!(factors(&a), vec![("x".into(), "3.0".into()), ("y".into(), "1".into())]);
        assert!(reads.is_empty());
        let (_, reads) = rules("z = x - y", "x, y, z");
        assert!(reads.is_empty());
    }

    #[test]
    fn intrinsics() {
        let (a, _) = rules("z = sin(y) + cos(y) + exp(y) + log(y) + sqrt(y)", "y, z");
        let f: Vec<String> = factors(&a).into_iter().map(|(_, f)| f).collect();
        assert_eq!(f, vec!["cos(y)", "-sin(y)", "exp(y)", "1.0 / y", "1.0 / (2.0 * sqrt(y))"]);
    }

    #[test]
    fn subscripts_are_read() {
        let (a, reads) = rules("a(n) = a(n) * x", "a(4), n, x");
        assert!(a.self_ref);
        assert_eq!(reads, vec!["a", "n", "x"]);
        let (_, reads) = rules("a(n) = x + 1", "a(4), n, x");
        assert_eq!(reads, vec!["n"]);
    }
}
