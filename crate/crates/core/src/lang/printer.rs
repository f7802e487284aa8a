//! Pretty-printer producing parseable `.adl` text.

use std::fmt::Write;

use super::ast::*;

fn prec(e: &Expr) -> u8 {
    match e {
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
        Expr::Neg(_) => 3,
        Expr::Pow(..) => 4,
        Expr::Const(c) if *c < 0.0 || c.is_sign_negative() => 3,
        _ => 5,
    }
}

pub fn fmt_num(c: f64) -> String {
    if c.is_finite() && c == c.trunc() && c.abs() < 1e15 {
        format!("{c:.1}")
    } else {
        format!("{c:?}")
    }
}

/// Renders an expression with the minimum parentheses needed to reparse it.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e);
    s
}

fn wrap(out: &mut String, e: &Expr, paren: bool) {
    if paren {
        out.push('(');
        write_expr(out, e);
        out.push(')');
    } else {
        write_expr(out, e);
    }
}

fn write_expr(out: &mut String, e: &Expr) {
    match e {
        Expr::Const(c) => out.push_str(&fmt_num(*c)),
        Expr::Var(v) => out.push_str(v),
        Expr::Elem(a, i) => {
            out.push_str(a);
            out.push('(');
            write_expr(out, i);
            out.push(')');
        }
        Expr::Neg(x) => {
            out.push('-');
            wrap(out, x, prec(x) < 3);
        }
        Expr::Binary(op, l, r) => {
            let p = prec(e);
            wrap(out, l, prec(l) < p);
            let _ = write!(out, " {} ", op.symbol());
            let right_paren = prec(r) < p || (prec(r) == p && matches!(op, BinOp::Sub | BinOp::Div));
            // `a - -b` reparses fine, but `a * -b` binds as intended too.
            wrap(out, r, right_paren && !matches!(**r, Expr::Neg(_)));
        }
        Expr::Pow(b, n) => {
            wrap(out, b, prec(b) <= 4);
            if *n < 0 {
                let _ = write!(out, "**({n})");
            } else {
                let _ = write!(out, "**{n}");
            }
        }
        Expr::Call(f, x) => {
            out.push_str(f.name());
            out.push('(');
            write_expr(out, x);
            out.push(')');
        }
    }
}

pub fn lvalue_to_string(l: &LValue) -> String {
    match &l.index {
        Some(i) => format!("{}({})", l.name, expr_to_string(i)),
        None => l.name.clone(),
    }
}

fn decl_to_string(d: &Decl) -> String {
    match d.kind {
        Kind::Scalar => d.name.clone(),
        Kind::Array(n) => format!("{}({n})", d.name),
    }
}

fn write_stmts(out: &mut String, stmts: &[Stmt], depth: usize) {
    let pad = "  ".repeat(depth);
    for s in stmts {
        match &s.kind {
            StmtKind::Assign { lhs, rhs } => {
                let _ = writeln!(out, "{pad}{} = {}", lvalue_to_string(lhs), expr_to_string(rhs));
            }
            StmtKind::Call { callee, args, nocheckpoint } => {
                if *nocheckpoint {
                    let _ = writeln!(out, "{pad}!$AD NOCHECKPOINT");
                }
                let args: Vec<String> = args.iter().map(lvalue_to_string).collect();
                let _ = writeln!(out, "{pad}call {callee}({})", args.join(", "));
            }
            StmtKind::For { var, lo, hi, body } => {
                let _ = writeln!(out, "{pad}for {var} = {} .. {}", expr_to_string(lo), expr_to_string(hi));
                write_stmts(out, body, depth + 1);
                let _ = writeln!(out, "{pad}end");
            }
            StmtKind::If { cond, then_body, else_body } => {
                let _ = writeln!(
                    out,
                    "{pad}if {} {} {}",
                    expr_to_string(&cond.lhs),
                    cond.rel.symbol(),
                    expr_to_string(&cond.rhs)
                );
                write_stmts(out, then_body, depth + 1);
                if !else_body.is_empty() {
                    let _ = writeln!(out, "{pad}else");
                    write_stmts(out, else_body, depth + 1);
                }
                let _ = writeln!(out, "{pad}end");
            }
        }
    }
}

pub fn proc_to_string(p: &ProcDef) -> String {
    let mut out = String::new();
    let params: Vec<String> = p.params.iter().map(decl_to_string).collect();
    let _ = writeln!(out, "proc {}({})", p.name, params.join(", "));
    if !p.locals.is_empty() {
        let locals: Vec<String> = p.locals.iter().map(decl_to_string).collect();
        let _ = writeln!(out, "  local {}", locals.join(", "));
    }
    write_stmts(&mut out, &p.body, 1);
    out.push_str("end\n");
    out
}

/// Prints a whole program; the output parses back to the same structure.
pub fn program_to_string(p: &Program) -> String {
    let parts: Vec<String> = p.procs.values().map(proc_to_string).collect();
    parts.join("\n")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    #[test]
    fn minimal_parens() {
        let p = parse_program("proc g(a, b, c)\n c = (a - (b - c)) / (a * b) + -(a + b)**2\nend\n").unwrap();
        let StmtKind::Assign { rhs, .. } = &p.proc("g").unwrap().body[0].kind else { panic!() };
        assert_eq!(expr_to_string(rhs), "(a - (b - c)) / (a * b) + -(a + b)**2");
    }

    #[test]
    fn reparse_identity() {
        let src = "\
proc f(x, a(3))
  local t
  t = 1.5e-7 * x
  for i = 1 .. 3
    a(i) = a(i) * t - x**(-2)
  end
end

proc g(u)
  local v(3)
  !$AD NOCHECKPOINT
  call f(u, v)
  if u >= 0
    u = sqrt(u)
  else
    u = -u
  end
end
";
        let p = parse_program(src).unwrap();
        let printed = program_to_string(&p);
        let q = parse_program(&printed).unwrap();
        assert_eq!(p.without_spans(), q.without_spans());
        assert_eq!(program_to_string(&q), printed);
    }
}
