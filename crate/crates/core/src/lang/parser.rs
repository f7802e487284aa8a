//! Line-oriented parser for `.adl` sources.

use indexmap::IndexMap;

use super::ast::*;
use super::error::ParseError;

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num { value: f64, int: Option<i64> },
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    col: u32,
}

#[derive(Debug)]
enum LineKind {
    Directive,
    Code(Vec<Token>),
}

#[derive(Debug)]
struct Line {
    no: u32,
    col: u32,
    kind: LineKind,
}

const SYMBOLS: &[&str] = &["**", "..", "==", "/=", "<=", ">=", "(", ")", ",", "=", "<", ">", "+", "-", "*", "/"];

fn lex_line(no: u32, text: &str) -> Result<Option<Line>, ParseError> {
    let trimmed = text.trim_start();
    let indent = (text.len() - trimmed.len()) as u32 + 1;
    let upper = trimmed.to_ascii_uppercase();
    if upper.starts_with("!$AD") || upper.starts_with("C$AD") {
        let rest = trimmed[4..].trim();
        let rest = rest.split('!').next().unwrap_or("").trim();
        if rest.eq_ignore_ascii_case("NOCHECKPOINT") {
            return Ok(Some(Line { no, col: indent, kind: LineKind::Directive }));
        }
        return Err(ParseError::syntax(no, indent, format!("unknown directive `{}`", trimmed.trim_end())));
    }
    let code = match text.find('!') {
        Some(i) => &text[..i],
        None => text,
    };
    let bytes = code.as_bytes();
    let mut toks = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let col = i as u32 + 1;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            toks.push(Token { tok: Tok::Ident(code[start..i].to_string()), col });
        } else if c.is_ascii_digit() || (c == '.' && i + 1 < bytes.len() && bytes[i + 1].is_ascii_digit()) {
            let start = i;
            let mut is_int = true;
            while i < bytes.len() && bytes[i].is_ascii_digit() {
                i += 1;
            }
            if i + 1 < bytes.len() && bytes[i] == b'.' && bytes[i + 1].is_ascii_digit() {
                is_int = false;
                i += 1;
                while i < bytes.len() && bytes[i].is_ascii_digit() {
                    i += 1;
                }
            } else if i < bytes.len() && bytes[i] == b'.' && !(i + 1 < bytes.len() && bytes[i + 1] == b'.') {
                // `2.` with no fraction digits
                is_int = false;
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    is_int = false;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &code[start..i];
            let value: f64 =
                text.parse().map_err(|_| ParseError::syntax(no, col, format!("malformed number `{text}`")))?;
            let int = if is_int { text.parse::<i64>().ok() } else { None };
            toks.push(Token { tok: Tok::Num { value, int }, col });
        } else {
            let rest = &code[i..];
            match SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
                Some(s) => {
                    toks.push(Token { tok: Tok::Sym(s), col });
                    i += s.len();
                }
                None => return Err(ParseError::syntax(no, col, format!("unexpected character `{c}`"))),
            }
        }
    }
    if toks.is_empty() {
        return Ok(None);
    }
    Ok(Some(Line { no, col: indent, kind: LineKind::Code(toks) }))
}

/// Token cursor over one line.
struct Cursor<'a> {
    line: u32,
    toks: &'a [Token],
    pos: usize,
    end_col: u32,
}

impl<'a> Cursor<'a> {
    fn new(line: &'a Line, toks: &'a [Token]) -> Self {
        let end_col = toks.last().map(|t| t.col + 1).unwrap_or(line.col);
        Cursor { line: line.no, toks, pos: 0, end_col }
    }

    fn peek(&self) -> Option<&'a Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn col(&self) -> u32 {
        self.toks.get(self.pos).map(|t| t.col).unwrap_or(self.end_col)
    }

    fn err(&self, msg: impl Into<String>) -> ParseError {
        ParseError::syntax(self.line, self.col(), msg)
    }

    fn eat(&mut self, sym: &str) -> bool {
        if matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, sym: &str) -> Result<(), ParseError> {
        if self.eat(sym) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{sym}`")))
        }
    }

    fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                self.pos += 1;
                Ok(s.clone())
            }
            _ => Err(self.err("expected identifier")),
        }
    }

    fn done(&self) -> Result<(), ParseError> {
        if self.pos < self.toks.len() {
            Err(self.err("unexpected trailing tokens"))
        } else {
            Ok(())
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = if self.eat("+") {
                BinOp::Add
            } else if self.eat("-") {
                BinOp::Sub
            } else {
                return Ok(lhs);
            };
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = if self.eat("*") {
                BinOp::Mul
            } else if self.eat("/") {
                BinOp::Div
            } else {
                return Ok(lhs);
            };
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if self.eat("-") {
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if self.eat("+") {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.primary()?;
        if self.eat("**") {
            let paren = self.eat("(");
            let neg = self.eat("-");
            let n = match self.peek() {
                Some(Tok::Num { int: Some(n), .. }) => {
                    self.pos += 1;
                    *n
                }
                _ => return Err(self.err("exponent must be an integer literal")),
            };
            if paren {
                self.expect(")")?;
            }
            let n = if neg { -n } else { n };
            let n = i32::try_from(n).map_err(|_| self.err("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), n));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Num { value, .. }) => {
                self.pos += 1;
                Ok(Expr::Const(*value))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.eat("(") {
                    let arg = self.expr()?;
                    self.expect(")")?;
                    match Intrinsic::from_name(name) {
                        Some(f) => Ok(Expr::Call(f, Box::new(arg))),
                        None => Ok(Expr::Elem(name.clone(), Box::new(arg))),
                    }
                } else {
                    Ok(Expr::Var(name.clone()))
                }
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(")")?;
                Ok(e)
            }
            _ => Err(self.err("expected expression")),
        }
    }

    fn lvalue(&mut self) -> Result<LValue, ParseError> {
        let name = self.ident()?;
        if self.eat("(") {
            let idx = self.expr()?;
            self.expect(")")?;
            Ok(LValue::elem(name, idx))
        } else {
            Ok(LValue::var(name))
        }
    }

    fn rel(&mut self) -> Result<RelOp, ParseError> {
        let op = match self.peek() {
            Some(Tok::Sym("<")) => RelOp::Lt,
            Some(Tok::Sym("<=")) => RelOp::Le,
            Some(Tok::Sym(">")) => RelOp::Gt,
            Some(Tok::Sym(">=")) => RelOp::Ge,
            Some(Tok::Sym("==")) | Some(Tok::Sym("=")) => RelOp::Eq,
            Some(Tok::Sym("/=")) => RelOp::Ne,
            _ => return Err(self.err("expected comparison operator")),
        };
        self.pos += 1;
        Ok(op)
    }

    /// `name` or `name(n)` in a declaration list.
    fn decl(&mut self) -> Result<Decl, ParseError> {
        let col = self.col();
        let name = self.ident()?;
        let kind = if self.eat("(") {
            let n = match self.peek() {
                Some(Tok::Num { int: Some(n), .. }) => {
                    self.pos += 1;
                    *n
                }
                _ => return Err(self.err("array size must be an integer literal")),
            };
            self.expect(")")?;
            if n <= 0 {
                return Err(ParseError::syntax(self.line, col, format!("array `{name}` must have positive size")));
            }
            Kind::Array(n as usize)
        } else {
            Kind::Scalar
        };
        Ok(Decl { name, kind, span: Span::new(self.line, col) })
    }
}

fn keyword(toks: &[Token]) -> Option<String> {
    match toks.first().map(|t| &t.tok) {
        Some(Tok::Ident(s)) => {
            let second_is_assign = matches!(toks.get(1).map(|t| &t.tok), Some(Tok::Sym("=")) | Some(Tok::Sym("(")));
            let kw = s.to_ascii_lowercase();
            match kw.as_str() {
                // `end`/`else` are never followed by `=` or `(` legitimately.
                "proc" | "local" | "call" | "for" | "if" | "else" | "end" => {
                    if second_is_assign && kw != "call" && kw != "proc" && kw != "if" {
                        None
                    } else {
                        Some(kw)
                    }
                }
                _ => None,
            }
        }
        _ => None,
    }
}

enum Terminator {
    End,
    Else,
}

struct ProcParser<'a> {
    lines: &'a [Line],
    pos: usize,
    locals: Vec<Decl>,
}

impl<'a> ProcParser<'a> {
    fn block(&mut self, depth: usize, header: (u32, u32)) -> Result<(Vec<Stmt>, Terminator), ParseError> {
        let mut body = Vec::new();
        let mut directive: Option<(u32, u32)> = None;
        loop {
            let Some(line) = self.lines.get(self.pos) else {
                return Err(ParseError::syntax(header.0, header.1, "block is missing `end`"));
            };
            self.pos += 1;
            let toks = match &line.kind {
                LineKind::Directive => {
                    if directive.is_some() {
                        return Err(ParseError::DanglingDirective { span: Span::new(line.no, line.col) });
                    }
                    directive = Some((line.no, line.col));
                    continue;
                }
                LineKind::Code(t) => t,
            };
            let kw = keyword(toks);
            if let Some((l, c)) = directive {
                if kw.as_deref() != Some("call") {
                    return Err(ParseError::DanglingDirective { span: Span::new(l, c) });
                }
            }
            let mut cur = Cursor::new(line, toks);
            let span = Span::new(line.no, toks[0].col);
            match kw.as_deref() {
                Some("end") => {
                    cur.pos = 1;
                    cur.done()?;
                    return Ok((body, Terminator::End));
                }
                Some("else") => {
                    cur.pos = 1;
                    cur.done()?;
                    return Ok((body, Terminator::Else));
                }
                Some("proc") => return Err(cur.err("nested `proc` (missing `end`?)")),
                Some("local") => {
                    if depth > 0 {
                        return Err(cur.err("`local` declarations must be at procedure level"));
                    }
                    cur.pos = 1;
                    loop {
                        self.locals.push(cur.decl()?);
                        if !cur.eat(",") {
                            break;
                        }
                    }
                    cur.done()?;
                }
                Some("call") => {
                    cur.pos = 1;
                    let callee = cur.ident()?;
                    cur.expect("(")?;
                    let mut args = Vec::new();
                    if !cur.eat(")") {
                        loop {
                            args.push(cur.lvalue()?);
                            if cur.eat(")") {
                                break;
                            }
                            cur.expect(",")?;
                        }
                    }
                    cur.done()?;
                    body.push(Stmt {
                        id: 0,
                        span,
                        kind: StmtKind::Call { callee, args, nocheckpoint: directive.take().is_some() },
                    });
                }
                Some("for") => {
                    cur.pos = 1;
                    let var = cur.ident()?;
                    cur.expect("=")?;
                    let lo = cur.expr()?;
                    cur.expect("..")?;
                    let hi = cur.expr()?;
                    cur.done()?;
                    let (inner, term) = self.block(depth + 1, (span.line, span.col))?;
                    if let Terminator::Else = term {
                        return Err(ParseError::syntax(span.line, span.col, "`else` inside `for`"));
                    }
                    body.push(Stmt { id: 0, span, kind: StmtKind::For { var, lo, hi, body: inner } });
                }
                Some("if") => {
                    cur.pos = 1;
                    let lhs = cur.expr()?;
                    let rel = cur.rel()?;
                    let rhs = cur.expr()?;
                    if matches!(cur.peek(), Some(Tok::Ident(s)) if s.eq_ignore_ascii_case("then")) {
                        cur.pos += 1;
                    }
                    cur.done()?;
                    let (then_body, term) = self.block(depth + 1, (span.line, span.col))?;
                    let else_body = match term {
                        Terminator::End => Vec::new(),
                        Terminator::Else => match self.block(depth + 1, (span.line, span.col))? {
                            (b, Terminator::End) => b,
                            (_, Terminator::Else) => {
                                return Err(ParseError::syntax(span.line, span.col, "duplicate `else`"))
                            }
                        },
                    };
                    body.push(Stmt {
                        id: 0,
                        span,
                        kind: StmtKind::If { cond: Cond { lhs, rel, rhs }, then_body, else_body },
                    });
                }
                _ => {
                    let lhs = cur.lvalue()?;
                    cur.expect("=")?;
                    let rhs = cur.expr()?;
                    cur.done()?;
                    body.push(Stmt { id: 0, span, kind: StmtKind::Assign { lhs, rhs } });
                }
            }
        }
    }
}

fn check_intrinsics(proc: &ProcDef) -> Result<(), ParseError> {
    fn expr(proc: &ProcDef, e: &Expr, span: Span) -> Result<(), ParseError> {
        match e {
            Expr::Elem(name, idx) => {
                if proc.decl(name).is_none() {
                    return Err(ParseError::UnknownIntrinsic { span, name: name.clone() });
                }
                expr(proc, idx, span)
            }
            Expr::Neg(x) | Expr::Pow(x, _) | Expr::Call(_, x) => expr(proc, x, span),
            Expr::Binary(_, l, r) => {
                expr(proc, l, span)?;
                expr(proc, r, span)
            }
            Expr::Const(_) | Expr::Var(_) => Ok(()),
        }
    }
    let mut result = Ok(());
    visit_stmts(&proc.body, &mut |s| {
        if result.is_err() {
            return;
        }
        let span = s.span;
        result = match &s.kind {
            StmtKind::Assign { lhs, rhs } => {
                lhs.index.as_deref().map_or(Ok(()), |i| expr(proc, i, span)).and_then(|_| expr(proc, rhs, span))
            }
            StmtKind::Call { args, .. } => {
                args.iter().filter_map(|a| a.index.as_deref()).try_for_each(|i| expr(proc, i, span))
            }
            StmtKind::For { lo, hi, .. } => expr(proc, lo, span).and_then(|_| expr(proc, hi, span)),
            StmtKind::If { cond, .. } => expr(proc, &cond.lhs, span).and_then(|_| expr(proc, &cond.rhs, span)),
        };
    });
    result
}

/// Parses `.adl` source text into a [`Program`].
///
/// Directives attach to the call on the following line. Statement ids are
/// assigned in preorder per procedure.
pub fn parse_program(text: &str) -> Result<Program, ParseError> {
    let mut lines = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(l) = lex_line(i as u32 + 1, raw)? {
            lines.push(l);
        }
    }
    let mut procs = IndexMap::new();
    let mut pos = 0;
    while pos < lines.len() {
        let line = &lines[pos];
        pos += 1;
        let toks = match &line.kind {
            LineKind::Directive => return Err(ParseError::DanglingDirective { span: Span::new(line.no, line.col) }),
            LineKind::Code(t) => t,
        };
        let mut cur = Cursor::new(line, toks);
        if keyword(toks).as_deref() != Some("proc") {
            return Err(cur.err("expected `proc`"));
        }
        let span = Span::new(line.no, toks[0].col);
        cur.pos = 1;
        let name = cur.ident()?;
        cur.expect("(")?;
        let mut params = Vec::new();
        if !cur.eat(")") {
            loop {
                params.push(cur.decl()?);
                if cur.eat(")") {
                    break;
                }
                cur.expect(",")?;
            }
        }
        cur.done()?;
        let mut pp = ProcParser { lines: &lines, pos, locals: Vec::new() };
        let (body, term) = pp.block(0, (span.line, span.col))?;
        if let Terminator::Else = term {
            return Err(ParseError::syntax(span.line, span.col, "`else` outside `if`"));
        }
        pos = pp.pos;
        let mut proc = ProcDef { name: name.clone(), params, locals: pp.locals, body, span };
        proc.renumber();
        check_intrinsics(&proc)?;
        if procs.contains_key(&name) {
            return Err(ParseError::syntax(span.line, span.col, format!("duplicate procedure `{name}`")));
        }
        procs.insert(name, proc);
    }
    Ok(Program { procs })
}
