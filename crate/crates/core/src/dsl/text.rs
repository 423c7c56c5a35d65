use std::fmt::Write;

use crate::error::{Error, Result};

use super::ast::{expand, Coef, Expr, ImpProgram, Stmt};

/// Coefficients smaller than this in magnitude are left out of emitted sums.
const ELIDE: f64 = 1e-9;
const KEYWORDS: [&str; 4] = ["if", "else", "return", "double"];

/// Formats a coefficient with 6 significant digits, fixed notation for
/// exponents in `[-5, 6)` and scientific otherwise, trailing zeros removed.
pub fn format_coef(c: f64) -> String {
    if c == 0.0 {
        return "0".into();
    }
    let sci = format!("{c:.5e}");
    let (mant, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| -> String {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..6).contains(&exp) {
        trim(&format!("{:.*}", (5 - exp) as usize, c))
    } else {
        format!("{}e{exp}", trim(mant))
    }
}

fn valid_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
        && !KEYWORDS.contains(&s)
}

fn emit_expr(e: &Expr, names: &[String]) -> String {
    let mut out = String::new();
    for (i, c) in e.coeffs.iter().enumerate() {
        let (neg, text) = match c {
            Coef::Hole => (false, "??".to_string()),
            Coef::Const(v) if v.abs() < ELIDE => continue,
            Coef::Const(v) => (*v < 0.0, format_coef(v.abs())),
        };
        match (out.is_empty(), neg) {
            (true, true) => out.push('-'),
            (true, false) => {}
            (false, true) => out.push_str(" - "),
            (false, false) => out.push_str(" + "),
        }
        out.push_str(&text);
        if let Some(name) = names.get(i) {
            out.push_str(" * ");
            out.push_str(name);
        }
    }
    if out.is_empty() {
        out.push('0');
    }
    out
}

fn is_zero_predicate(e: &Expr) -> bool {
    e.coeffs
        .iter()
        .all(|c| matches!(c, Coef::Const(v) if v.abs() < ELIDE))
}

/// Emits normalized `stmt` in return form, given the per-output expressions
/// assigned so far on this path.
fn emit_stmt(stmt: &Stmt, mut outs: Vec<Expr>, names: &[String], depth: usize, buf: &mut String) {
    let pad = "    ".repeat(depth);
    match stmt {
        Stmt::Assign { output, expr } => {
            outs[*output] = expr.clone();
            let rendered: Vec<String> = outs.iter().map(|e| emit_expr(e, names)).collect();
            if rendered.len() == 1 {
                let _ = writeln!(buf, "{pad}return {};", rendered[0]);
            } else {
                let _ = writeln!(buf, "{pad}return ({});", rendered.join(", "));
            }
        }
        Stmt::Seq(first, rest) => {
            let Stmt::Assign { output, expr } = first.as_ref() else {
                unreachable!("statement is normalized")
            };
            outs[*output] = expr.clone();
            emit_stmt(rest, outs, names, depth, buf);
        }
        Stmt::If { cond, then, els } => {
            if is_zero_predicate(cond) {
                emit_stmt(els, outs, names, depth, buf);
                return;
            }
            let _ = writeln!(buf, "{pad}if ({} > 0) {{", emit_expr(cond, names));
            emit_stmt(then, outs.clone(), names, depth + 1, buf);
            let _ = writeln!(buf, "{pad}}} else {{");
            emit_stmt(els, outs, names, depth + 1, buf);
            let _ = writeln!(buf, "{pad}}}");
        }
    }
}

/// Renders `prog` as C-like source. `names` defaults to `x0 .. x{p-1}`.
///
/// The body is first normalized, so every path ends in one `return` of all
/// outputs. Conditions whose coefficients are all elided (never true) are
/// replaced by their else-branch. Output is deterministic.
pub fn emit_code(prog: &ImpProgram, names: Option<&[String]>) -> Result<String> {
    prog.validate()?;
    let names: Vec<String> = match names {
        Some(n) if n.len() != prog.p => {
            return Err(Error::DimensionMismatch {
                expected: prog.p,
                actual: n.len(),
            })
        }
        Some(n) => n.to_vec(),
        None => (0..prog.p).map(|i| format!("x{i}")).collect(),
    };
    if let Some(bad) = names.iter().find(|n| !valid_ident(n)) {
        return Err(Error::InvalidArgument(format!(
            "invalid feature name {bad:?}"
        )));
    }
    if names
        .iter()
        .enumerate()
        .any(|(i, n)| names[..i].contains(n))
    {
        return Err(Error::InvalidArgument("duplicate feature names".into()));
    }
    let mut nonfinite = false;
    let mut check = |s: &Stmt| nonfinite |= has_nonfinite(s);
    check(&prog.body);
    if nonfinite {
        return Err(Error::InvalidArgument(
            "cannot emit non-finite coefficients".into(),
        ));
    }
    let params: Vec<String> = names.iter().map(|n| format!("double {n}")).collect();
    let mut buf = format!("double decide({}) {{\n", params.join(", "));
    let outs = vec![Expr::constant(prog.p, 0.0); prog.m];
    emit_stmt(&expand(&prog.body), outs, &names, 1, &mut buf);
    buf.push_str("}\n");
    Ok(buf)
}

fn has_nonfinite(s: &Stmt) -> bool {
    let bad = |e: &Expr| {
        e.coeffs
            .iter()
            .any(|c| matches!(c, Coef::Const(v) if !v.is_finite()))
    };
    match s {
        Stmt::Assign { expr, .. } => bad(expr),
        Stmt::If { cond, then, els } => bad(cond) || has_nonfinite(then) || has_nonfinite(els),
        Stmt::Seq(a, b) => has_nonfinite(a) || has_nonfinite(b),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Num(f64),
    Hole,
    Sym(char),
    Eof,
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    column: usize,
}

fn syntax(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        line,
        column,
        message: message.into(),
    }
}

fn tokenize(text: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut i, mut line, mut col) = (0, 1, 1);
    while i < chars.len() {
        let c = chars[i];
        let (tl, tc) = (line, col);
        if c == '\n' {
            i += 1;
            line += 1;
            col = 1;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            col += 1;
            continue;
        }
        if c == '/' && chars.get(i + 1) == Some(&'/') {
            while i < chars.len() && chars[i] != '\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        let tok = if c.is_ascii_alphabetic() || c == '_' {
            while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Tok::Ident(chars[start..i].iter().collect())
        } else if c.is_ascii_digit() || c == '.' {
            while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                i += 1;
            }
            if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                let mut j = i + 1;
                if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].is_ascii_digit() {
                    i = j;
                    while i < chars.len() && chars[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let s: String = chars[start..i].iter().collect();
            match s.parse::<f64>() {
                Ok(v) => Tok::Num(v),
                Err(_) => return Err(syntax(tl, tc, format!("malformed number {s:?}"))),
            }
        } else if c == '?' {
            if chars.get(i + 1) != Some(&'?') {
                return Err(syntax(tl, tc, "expected '??'"));
            }
            i += 2;
            Tok::Hole
        } else if "(){},;*+->=".contains(c) {
            i += 1;
            Tok::Sym(c)
        } else {
            return Err(syntax(tl, tc, format!("unexpected character {c:?}")));
        };
        col += i - start;
        out.push(Token {
            tok,
            line: tl,
            column: tc,
        });
    }
    out.push(Token {
        tok: Tok::Eof,
        line,
        column: col,
    });
    Ok(out)
}

/// Expression before the feature count is known: sparse feature
/// coefficients plus the constant term.
#[derive(Debug, Clone, Default)]
struct RawExpr {
    terms: Vec<(usize, Coef)>,
    bias: Option<Coef>,
}

#[derive(Debug, Clone)]
enum RawStmt {
    Assign(usize, RawExpr),
    Return(Vec<RawExpr>, usize, usize),
    If(RawExpr, Vec<RawStmt>, Vec<RawStmt>),
}

struct Parser {
    toks: Vec<Token>,
    pos: usize,
    names: Option<Vec<String>>,
    max_index: Option<usize>,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.toks[self.pos]
    }

    fn next(&mut self) -> Token {
        let t = self.toks[self.pos].clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        let t = self.peek();
        Err(syntax(t.line, t.column, message))
    }

    fn describe(tok: &Tok) -> String {
        match tok {
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Num(v) => format!("number {v}"),
            Tok::Hole => "'??'".into(),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::Eof => "end of input".into(),
        }
    }

    fn expect_sym(&mut self, c: char) -> Result<()> {
        if self.peek().tok == Tok::Sym(c) {
            self.next();
            Ok(())
        } else {
            self.err(format!(
                "expected '{c}', found {}",
                Self::describe(&self.peek().tok)
            ))
        }
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(&self.peek().tok, Tok::Ident(s) if s == kw)
    }

    fn expect_kw(&mut self, kw: &str) -> Result<()> {
        if self.is_kw(kw) {
            self.next();
            Ok(())
        } else {
            self.err(format!(
                "expected '{kw}', found {}",
                Self::describe(&self.peek().tok)
            ))
        }
    }

    fn ident(&mut self) -> Result<String> {
        match &self.peek().tok {
            Tok::Ident(s) if !KEYWORDS.contains(&s.as_str()) => {
                let s = s.clone();
                self.next();
                Ok(s)
            }
            other => {
                let d = Self::describe(other);
                self.err(format!("expected identifier, found {d}"))
            }
        }
    }

    fn header(&mut self) -> Result<()> {
        self.expect_kw("double")?;
        self.ident()?;
        self.expect_sym('(')?;
        let mut names: Vec<String> = Vec::new();
        if self.peek().tok != Tok::Sym(')') {
            loop {
                self.expect_kw("double")?;
                let (line, column) = (self.peek().line, self.peek().column);
                let name = self.ident()?;
                if names.contains(&name) {
                    return Err(syntax(
                        line,
                        column,
                        format!("duplicate parameter '{name}'"),
                    ));
                }
                names.push(name);
                if self.peek().tok == Tok::Sym(',') {
                    self.next();
                } else {
                    break;
                }
            }
        }
        self.expect_sym(')')?;
        self.names = Some(names);
        Ok(())
    }

    fn feature_index(&mut self, name: &str, line: usize, column: usize) -> Result<usize> {
        let idx = match &self.names {
            Some(names) => names.iter().position(|n| n == name),
            None => name
                .strip_prefix('x')
                .filter(|d| {
                    !d.is_empty()
                        && d.bytes().all(|b| b.is_ascii_digit())
                        && (d == &"0" || !d.starts_with('0'))
                })
                .and_then(|d| d.parse().ok()),
        };
        match idx {
            Some(i) => {
                self.max_index = self.max_index.max(Some(i));
                Ok(i)
            }
            None => Err(syntax(line, column, format!("unknown feature '{name}'"))),
        }
    }

    fn term(&mut self, negate: bool, expr: &mut RawExpr) -> Result<()> {
        let t = self.next();
        let coef = match t.tok {
            Tok::Num(v) => Coef::Const(if negate { -v } else { v }),
            Tok::Hole => Coef::Hole,
            Tok::Ident(ref name) if !KEYWORDS.contains(&name.as_str()) => {
                let i = self.feature_index(name, t.line, t.column)?;
                return add_term(
                    expr,
                    Some(i),
                    Coef::Const(if negate { -1.0 } else { 1.0 }),
                    &t,
                );
            }
            ref other => {
                return Err(syntax(
                    t.line,
                    t.column,
                    format!("expected a term, found {}", Self::describe(other)),
                ))
            }
        };
        if self.peek().tok == Tok::Sym('*') {
            self.next();
            let (line, column) = (self.peek().line, self.peek().column);
            let name = self.ident()?;
            let i = self.feature_index(&name, line, column)?;
            add_term(expr, Some(i), coef, &t)
        } else {
            add_term(expr, None, coef, &t)
        }
    }

    fn expr(&mut self) -> Result<RawExpr> {
        let mut e = RawExpr::default();
        let mut negate = false;
        if self.peek().tok == Tok::Sym('-') {
            self.next();
            negate = true;
        }
        self.term(negate, &mut e)?;
        loop {
            match self.peek().tok {
                Tok::Sym('+') => negate = false,
                Tok::Sym('-') => negate = true,
                _ => return Ok(e),
            }
            self.next();
            self.term(negate, &mut e)?;
        }
    }

    /// Items up to (not including) the closing `}` or end of input.
    fn block(&mut self) -> Result<Vec<RawStmt>> {
        let mut items = Vec::new();
        loop {
            let t = self.peek().clone();
            match &t.tok {
                Tok::Sym('}') | Tok::Eof => break,
                Tok::Ident(kw) if kw == "return" => {
                    self.next();
                    let mut exprs = Vec::new();
                    // expressions never start with '(', so this opens a tuple
                    if self.peek().tok == Tok::Sym('(') {
                        self.next();
                        loop {
                            exprs.push(self.expr()?);
                            if self.peek().tok == Tok::Sym(',') {
                                self.next();
                            } else {
                                break;
                            }
                        }
                        self.expect_sym(')')?;
                    } else {
                        exprs.push(self.expr()?);
                    }
                    self.expect_sym(';')?;
                    items.push(RawStmt::Return(exprs, t.line, t.column));
                    if !matches!(self.peek().tok, Tok::Sym('}') | Tok::Eof) {
                        return self.err("statement after return");
                    }
                }
                Tok::Ident(kw) if kw == "if" => {
                    self.next();
                    self.expect_sym('(')?;
                    let cond = self.expr()?;
                    self.expect_sym('>')?;
                    match self.next().tok {
                        Tok::Num(0.0) => {}
                        _ => {
                            self.pos -= 1;
                            return self.err("conditions must have the form 'E > 0'");
                        }
                    }
                    self.expect_sym(')')?;
                    let then = self.braced()?;
                    self.expect_kw("else")?;
                    let els = self.braced()?;
                    items.push(RawStmt::If(cond, then, els));
                }
                Tok::Ident(name) => {
                    let output = name
                        .strip_prefix('o')
                        .and_then(|d| d.parse::<usize>().ok())
                        .filter(|_| self.toks[self.pos + 1].tok == Tok::Sym('='));
                    let Some(output) = output else {
                        return self.err(format!("expected statement, found '{name}'"));
                    };
                    self.next();
                    self.expect_sym('=')?;
                    let e = self.expr()?;
                    self.expect_sym(';')?;
                    items.push(RawStmt::Assign(output, e));
                }
                other => {
                    let d = Self::describe(other);
                    return self.err(format!("expected statement, found {d}"));
                }
            }
        }
        Ok(items)
    }

    fn braced(&mut self) -> Result<Vec<RawStmt>> {
        self.expect_sym('{')?;
        let (line, column) = (self.peek().line, self.peek().column);
        let items = self.block()?;
        if items.is_empty() {
            return Err(syntax(line, column, "empty block"));
        }
        self.expect_sym('}')?;
        Ok(items)
    }
}

fn add_term(e: &mut RawExpr, index: Option<usize>, coef: Coef, at: &Token) -> Result<()> {
    let slot = match index {
        Some(i) => match e.terms.iter_mut().find(|(j, _)| *j == i) {
            Some((_, c)) => c,
            None => {
                e.terms.push((i, Coef::Const(0.0)));
                &mut e.terms.last_mut().expect("pushed").1
            }
        },
        None => e.bias.get_or_insert(Coef::Const(0.0)),
    };
    *slot = match (*slot, coef) {
        (Coef::Const(a), Coef::Const(b)) if a == 0.0 && a.is_sign_positive() => Coef::Const(b),
        (Coef::Const(a), Coef::Const(b)) => Coef::Const(a + b),
        (Coef::Const(0.0), Coef::Hole) => Coef::Hole,
        _ => {
            return Err(syntax(
                at.line,
                at.column,
                "a hole cannot be combined with another term",
            ))
        }
    };
    Ok(())
}

/// A parsed program together with its feature names.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedProgram {
    pub program: ImpProgram,
    pub names: Vec<String>,
}

struct Lower {
    p: usize,
    m: usize,
}

impl Lower {
    fn expr(&self, raw: &RawExpr) -> Expr {
        let mut coeffs = vec![Coef::Const(0.0); self.p + 1];
        for &(i, c) in &raw.terms {
            coeffs[i] = c;
        }
        if let Some(b) = raw.bias {
            coeffs[self.p] = b;
        }
        Expr { coeffs }
    }

    fn block(&self, items: &[RawStmt]) -> Stmt {
        let stmts = items
            .iter()
            .map(|item| match item {
                RawStmt::Assign(o, e) => Stmt::assign(*o, self.expr(e)),
                RawStmt::Return(es, ..) => Stmt::seq_all(
                    es.iter()
                        .enumerate()
                        .map(|(o, e)| Stmt::assign(o, self.expr(e)))
                        .collect(),
                )
                .expect("return has an expression"),
                RawStmt::If(c, t, e) => Stmt::if_else(self.expr(c), self.block(t), self.block(e)),
            })
            .collect();
        Stmt::seq_all(stmts).expect("blocks are non-empty")
    }
}

fn output_arity(
    items: &[RawStmt],
    ret: &mut Option<(usize, usize, usize)>,
    max_out: &mut usize,
) -> Result<()> {
    for item in items {
        match item {
            RawStmt::Assign(o, _) => *max_out = (*max_out).max(o + 1),
            RawStmt::Return(es, line, column) => match ret {
                Some((n, ..)) if *n != es.len() => {
                    return Err(syntax(
                        *line,
                        *column,
                        format!("return has {} values, expected {n}", es.len()),
                    ))
                }
                Some(_) => {}
                None => *ret = Some((es.len(), *line, *column)),
            },
            RawStmt::If(_, t, e) => {
                output_arity(t, ret, max_out)?;
                output_arity(e, ret, max_out)?;
            }
        }
    }
    Ok(())
}

/// Parses the emitted grammar (see the module docs) into a program and its
/// feature names.
pub fn parse_program_named(text: &str) -> Result<ParsedProgram> {
    let mut parser = Parser {
        toks: tokenize(text)?,
        pos: 0,
        names: None,
        max_index: None,
    };
    let has_header = parser.is_kw("double");
    if has_header {
        parser.header()?;
        parser.expect_sym('{')?;
    }
    let (line, column) = (parser.peek().line, parser.peek().column);
    let items = parser.block()?;
    if has_header {
        parser.expect_sym('}')?;
    }
    if parser.peek().tok != Tok::Eof {
        let d = Parser::describe(&parser.peek().tok);
        return parser.err(format!("unexpected {d}"));
    }
    if items.is_empty() {
        return Err(syntax(line, column, "program has no statements"));
    }
    let mut ret = None;
    let mut max_out = 0;
    output_arity(&items, &mut ret, &mut max_out)?;
    let m = ret.map_or(0, |r| r.0).max(max_out);
    let names = match parser.names.take() {
        Some(n) => n,
        None => (0..parser.max_index.map_or(0, |i| i + 1))
            .map(|i| format!("x{i}"))
            .collect(),
    };
    let lower = Lower { p: names.len(), m };
    let program = ImpProgram::new(lower.p, lower.m, lower.block(&items))?;
    Ok(ParsedProgram { program, names })
}

/// [`parse_program_named`] without the names.
pub fn parse_program(text: &str) -> Result<ImpProgram> {
    parse_program_named(text).map(|p| p.program)
}
