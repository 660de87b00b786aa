//! Expression language of the mock prover: natural-number terms with
//! `+ - * / ^`, negation, literals, variables, function application,
//! bounded finite sums, type ascriptions and coercion markers.
//!
//! Pattern variables are written `?name`. A sum binder may itself be a
//! pattern variable (`∑ ?k in Ico ?lo ?hi, ?f`).

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn prec(self) -> u32 {
        match self {
            BinOp::Add | BinOp::Sub => 65,
            BinOp::Mul | BinOp::Div => 70,
            BinOp::Pow => 75,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Expr {
    Num(u64),
    Var(String),
    Meta(String),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    App(String, Vec<Expr>),
    /// `∑ var in Ico lo hi, body`; printed with `range hi` when `lo = 0`.
    Sum {
        var: String,
        lo: Box<Expr>,
        hi: Box<Expr>,
        body: Box<Expr>,
    },
    Ascribe(Box<Expr>, String),
    Coe(Box<Expr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Rel {
    Eq,
    Ne,
    Le,
    Lt,
    Ge,
    Gt,
}

impl Rel {
    pub fn symbol(self) -> &'static str {
        match self {
            Rel::Eq => "=",
            Rel::Ne => "≠",
            Rel::Le => "≤",
            Rel::Lt => "<",
            Rel::Ge => "≥",
            Rel::Gt => ">",
        }
    }

    fn holds(self, a: i128, b: i128) -> bool {
        match self {
            Rel::Eq => a == b,
            Rel::Ne => a != b,
            Rel::Le => a <= b,
            Rel::Lt => a < b,
            Rel::Ge => a >= b,
            Rel::Gt => a > b,
        }
    }

    /// Relations closed by reflexivity.
    pub fn reflexive(self) -> bool {
        matches!(self, Rel::Eq | Rel::Le | Rel::Ge)
    }
}

/// A relation between two terms; goals and hypotheses are props.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Prop {
    pub rel: Rel,
    pub lhs: Expr,
    pub rhs: Expr,
}

pub fn add(a: Expr, b: Expr) -> Expr {
    Expr::Bin(BinOp::Add, Box::new(a), Box::new(b))
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b))
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b))
}

pub fn var(name: &str) -> Expr {
    Expr::Var(name.to_string())
}

// ---------------------------------------------------------------------------
// Lexing and parsing

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("unbalanced parentheses")]
    Unbalanced,
    #[error("unexpected token `{0}`")]
    Unexpected(String),
    #[error("unexpected end of input")]
    Eof,
    #[error("expected a relation (=, ≠, ≤, <, ≥, >)")]
    NoRelation,
    #[error("unsupported character `{0}`")]
    BadChar(char),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Num(u64),
    Ident(String),
    Meta(String),
    Sym(&'static str),
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(n) => write!(f, "{n}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Meta(s) => write!(f, "?{s}"),
            Tok::Sym(s) => f.write_str(s),
        }
    }
}

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_' || c == '\'' || c == '.' || c == '✝'
}

fn lex(src: &str) -> Result<Vec<Tok>, ParseError> {
    let mut toks = Vec::new();
    let mut depth: i64 = 0;
    let mut chars = src.chars().peekable();
    while let Some(&c) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        if c.is_ascii_digit() {
            let mut n: u64 = 0;
            while let Some(&d) = chars.peek() {
                if let Some(v) = d.to_digit(10) {
                    n = n.saturating_mul(10).saturating_add(v as u64);
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(Tok::Num(n));
            continue;
        }
        if c == '?' {
            chars.next();
            let mut name = String::new();
            while let Some(&d) = chars.peek() {
                if is_ident_char(d) {
                    name.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
            if name.is_empty() {
                return Err(ParseError::BadChar('?'));
            }
            toks.push(Tok::Meta(name));
            continue;
        }
        if is_ident_char(c) {
            let mut name = String::new();
            while let Some(&d) = chars.peek() {
                if is_ident_char(d) {
                    name.push(d);
                    chars.next();
                } else {
                    break;
                }
            }
            toks.push(Tok::Ident(name));
            continue;
        }
        chars.next();
        let sym = match c {
            '+' => "+",
            '-' | '−' => "-",
            '*' | '·' | '×' => "*",
            '/' => "/",
            '^' => "^",
            '(' => {
                depth += 1;
                "("
            }
            ')' => {
                depth -= 1;
                if depth < 0 {
                    return Err(ParseError::Unbalanced);
                }
                ")"
            }
            ',' => ",",
            ':' => ":",
            '=' => "=",
            '≠' => "≠",
            '≤' => "≤",
            '≥' => "≥",
            '<' => {
                if chars.peek() == Some(&'=') {
                    chars.next();
                    "≤"
                } else {
                    "<"
                }
            }
            '>' => {
                if chars.peek() == Some(&'=') {
                    chars.next();
                    "≥"
                } else {
                    ">"
                }
            }
            '∑' => "∑",
            '∈' => "∈",
            '↑' => "↑",
            other => return Err(ParseError::BadChar(other)),
        };
        toks.push(Tok::Sym(sym));
    }
    if depth != 0 {
        return Err(ParseError::Unbalanced);
    }
    Ok(toks)
}

struct Parser {
    toks: Vec<Tok>,
    pos: usize,
}

const APP_PREC: u32 = 1024;

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos)
    }

    fn next(&mut self) -> Result<Tok, ParseError> {
        let tok = self.toks.get(self.pos).cloned().ok_or(ParseError::Eof)?;
        self.pos += 1;
        Ok(tok)
    }

    fn expect(&mut self, sym: &'static str) -> Result<(), ParseError> {
        match self.next()? {
            Tok::Sym(s) if s == sym => Ok(()),
            other => Err(ParseError::Unexpected(other.to_string())),
        }
    }

    fn peek_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn binop(&self) -> Option<BinOp> {
        match self.peek() {
            Some(Tok::Sym("+")) => Some(BinOp::Add),
            Some(Tok::Sym("-")) => Some(BinOp::Sub),
            Some(Tok::Sym("*")) => Some(BinOp::Mul),
            Some(Tok::Sym("/")) => Some(BinOp::Div),
            Some(Tok::Sym("^")) => Some(BinOp::Pow),
            _ => None,
        }
    }

    fn rel(&self) -> Option<Rel> {
        match self.peek() {
            Some(Tok::Sym("=")) => Some(Rel::Eq),
            Some(Tok::Sym("≠")) => Some(Rel::Ne),
            Some(Tok::Sym("≤")) => Some(Rel::Le),
            Some(Tok::Sym("<")) => Some(Rel::Lt),
            Some(Tok::Sym("≥")) => Some(Rel::Ge),
            Some(Tok::Sym(">")) => Some(Rel::Gt),
            _ => None,
        }
    }

    fn expr(&mut self, min_prec: u32) -> Result<Expr, ParseError> {
        let mut lhs = self.prefix()?;
        while let Some(op) = self.binop() {
            let prec = op.prec();
            if prec < min_prec {
                break;
            }
            self.pos += 1;
            let next_min = if op == BinOp::Pow { prec } else { prec + 1 };
            let rhs = self.expr(next_min)?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some(Tok::Sym("-")) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.expr(75)?)))
            }
            Some(Tok::Sym("↑")) => {
                self.pos += 1;
                Ok(Expr::Coe(Box::new(self.atom()?)))
            }
            Some(Tok::Sym("∑")) => {
                self.pos += 1;
                self.sum()
            }
            _ => self.application(),
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let var = match self.next()? {
            Tok::Ident(v) => v,
            Tok::Meta(m) => format!("?{m}"),
            other => return Err(ParseError::Unexpected(other.to_string())),
        };
        match self.next()? {
            Tok::Ident(kw) if kw == "in" => {}
            Tok::Sym("∈") => {}
            other => return Err(ParseError::Unexpected(other.to_string())),
        }
        let former = match self.next()? {
            Tok::Ident(name) => name,
            other => return Err(ParseError::Unexpected(other.to_string())),
        };
        let (lo, hi) = match former.trim_start_matches("Finset.") {
            "range" => (Expr::Num(0), self.atom()?),
            "Ico" => {
                let lo = self.atom()?;
                (lo, self.atom()?)
            }
            _ => return Err(ParseError::Unexpected(former)),
        };
        self.expect(",")?;
        let body = self.expr(0)?;
        Ok(Expr::Sum {
            var,
            lo: Box::new(lo),
            hi: Box::new(hi),
            body: Box::new(body),
        })
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Some(Tok::Num(_)) | Some(Tok::Meta(_)) => true,
            Some(Tok::Ident(s)) => s != "in",
            Some(Tok::Sym("(")) => true,
            _ => false,
        }
    }

    fn application(&mut self) -> Result<Expr, ParseError> {
        let head = self.atom()?;
        if let Expr::Var(name) = &head {
            let mut args = Vec::new();
            while self.starts_atom() {
                args.push(self.atom()?);
            }
            if !args.is_empty() {
                return Ok(Expr::App(name.clone(), args));
            }
        }
        Ok(head)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let base = match self.next()? {
            Tok::Num(n) => Expr::Num(n),
            Tok::Ident(name) => Expr::Var(name),
            Tok::Meta(name) => Expr::Meta(name),
            Tok::Sym("(") => {
                let inner = self.expr(0)?;
                if self.peek_sym(":") {
                    self.pos += 1;
                    let mut ty = Vec::new();
                    while !self.peek_sym(")") {
                        ty.push(self.next()?.to_string());
                    }
                    self.expect(")")?;
                    if ty.is_empty() {
                        return Err(ParseError::Unexpected(")".into()));
                    }
                    Expr::Ascribe(Box::new(inner), ty.join(" "))
                } else {
                    self.expect(")")?;
                    inner
                }
            }
            Tok::Sym("↑") => Expr::Coe(Box::new(self.atom()?)),
            other => return Err(ParseError::Unexpected(other.to_string())),
        };
        let mut out = base;
        while self.peek_sym("↑") {
            self.pos += 1;
            out = Expr::Coe(Box::new(out));
        }
        Ok(out)
    }

    fn finish(&self) -> Result<(), ParseError> {
        match self.peek() {
            None => Ok(()),
            Some(tok) => Err(ParseError::Unexpected(tok.to_string())),
        }
    }
}

pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let e = p.expr(0)?;
    p.finish()?;
    Ok(e)
}

pub fn parse_prop(src: &str) -> Result<Prop, ParseError> {
    let mut p = Parser {
        toks: lex(src)?,
        pos: 0,
    };
    let lhs = p.expr(0)?;
    let rel = p.rel().ok_or_else(|| match p.peek() {
        None => ParseError::NoRelation,
        Some(tok) => ParseError::Unexpected(tok.to_string()),
    })?;
    p.pos += 1;
    let rhs = p.expr(0)?;
    p.finish()?;
    Ok(Prop { rel, lhs, rhs })
}

// ---------------------------------------------------------------------------
// Printing

fn write_expr(out: &mut String, e: &Expr, ctx: u32, rightmost: bool) {
    match e {
        Expr::Num(n) => out.push_str(&n.to_string()),
        Expr::Var(v) => out.push_str(v),
        Expr::Meta(m) => {
            out.push('?');
            out.push_str(m);
        }
        Expr::Neg(inner) => {
            let parens = ctx > 75;
            if parens {
                out.push('(');
            }
            out.push('-');
            write_expr(out, inner, 75, rightmost || parens);
            if parens {
                out.push(')');
            }
        }
        Expr::Bin(op, l, r) => {
            let prec = op.prec();
            let parens = prec < ctx;
            let rightmost = rightmost || parens;
            if parens {
                out.push('(');
            }
            let (lp, rp) = if *op == BinOp::Pow {
                (prec + 1, prec)
            } else {
                (prec, prec + 1)
            };
            write_expr(out, l, lp, false);
            out.push(' ');
            out.push_str(op.symbol());
            out.push(' ');
            write_expr(out, r, rp, rightmost);
            if parens {
                out.push(')');
            }
        }
        Expr::App(f, args) => {
            let parens = ctx >= APP_PREC;
            if parens {
                out.push('(');
            }
            out.push_str(f);
            for a in args {
                out.push(' ');
                write_expr(out, a, APP_PREC, false);
            }
            if parens {
                out.push(')');
            }
        }
        Expr::Sum { var, lo, hi, body } => {
            // a bare sum body extends to the right as far as possible
            let parens = !rightmost || ctx >= APP_PREC;
            if parens {
                out.push('(');
            }
            out.push_str("∑ ");
            out.push_str(var);
            if **lo == Expr::Num(0) {
                out.push_str(" in range ");
            } else {
                out.push_str(" in Ico ");
                write_expr(out, lo, APP_PREC, false);
                out.push(' ');
            }
            write_expr(out, hi, APP_PREC, false);
            out.push_str(", ");
            write_expr(out, body, 0, true);
            if parens {
                out.push(')');
            }
        }
        Expr::Ascribe(inner, ty) => {
            out.push('(');
            write_expr(out, inner, 0, true);
            out.push_str(" : ");
            out.push_str(ty);
            out.push(')');
        }
        Expr::Coe(inner) => {
            write_expr(out, inner, APP_PREC, false);
            out.push('↑');
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_expr(&mut out, self, 0, true);
        f.write_str(&out)
    }
}

impl fmt::Display for Prop {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        write_expr(&mut out, &self.lhs, 51, true);
        out.push(' ');
        out.push_str(self.rel.symbol());
        out.push(' ');
        write_expr(&mut out, &self.rhs, 51, true);
        f.write_str(&out)
    }
}

// ---------------------------------------------------------------------------
// Structural utilities

impl Expr {
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Meta(_) => vec![],
            Expr::Bin(_, l, r) => vec![l, r],
            Expr::Neg(e) | Expr::Ascribe(e, _) | Expr::Coe(e) => vec![e],
            Expr::App(_, args) => args.iter().collect(),
            Expr::Sum { lo, hi, body, .. } => vec![lo, hi, body],
        }
    }

    fn children_mut(&mut self) -> Vec<&mut Expr> {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Meta(_) => vec![],
            Expr::Bin(_, l, r) => vec![l, r],
            Expr::Neg(e) | Expr::Ascribe(e, _) | Expr::Coe(e) => vec![e],
            Expr::App(_, args) => args.iter_mut().collect(),
            Expr::Sum { lo, hi, body, .. } => vec![lo, hi, body],
        }
    }

    pub fn size(&self) -> usize {
        1 + self.children().iter().map(|c| c.size()).sum::<usize>()
    }

    /// Head symbol used for feature keys: operator, function name, or a
    /// class tag for leaves.
    pub fn head_symbol(&self) -> String {
        match self {
            Expr::Num(_) => "lit".into(),
            Expr::Var(_) | Expr::Meta(_) => "var".into(),
            Expr::Bin(op, _, _) => op.symbol().into(),
            Expr::Neg(_) => "neg".into(),
            Expr::App(f, _) => f.clone(),
            Expr::Sum { .. } => "∑".into(),
            Expr::Ascribe(_, _) => "ascribe".into(),
            Expr::Coe(_) => "↑".into(),
        }
    }

    /// Pre-order list of operator symbols (binary ops, negation, sums,
    /// applications, coercions).
    pub fn operator_symbols(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) | Expr::Var(_) | Expr::Meta(_) | Expr::Ascribe(_, _) => {}
            _ => out.push(self.head_symbol()),
        }
        for c in self.children() {
            c.operator_symbols(out);
        }
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match self {
            Expr::Var(v) => {
                if !bound.contains(v) {
                    out.insert(v.clone());
                }
            }
            Expr::Sum { var, lo, hi, body } => {
                lo.collect_free(bound, out);
                hi.collect_free(bound, out);
                bound.push(var.clone());
                body.collect_free(bound, out);
                bound.pop();
            }
            _ => {
                for c in self.children() {
                    c.collect_free(bound, out);
                }
            }
        }
    }

    pub fn has_free_var(&self, name: &str) -> bool {
        self.free_vars().contains(name)
    }

    pub fn metas(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Meta(m) => {
                out.insert(m.clone());
            }
            Expr::Sum { var, .. } if var.starts_with('?') => {
                out.insert(var[1..].to_string());
            }
            _ => {}
        }
        for c in self.children() {
            c.metas(out);
        }
    }

    /// True when no free variables, metas, applications or coercions occur.
    pub fn is_ground(&self) -> bool {
        self.free_vars().is_empty() && !self.any(&|e| matches!(e, Expr::Meta(_) | Expr::App(..) | Expr::Coe(_)))
    }

    pub fn any(&self, pred: &dyn Fn(&Expr) -> bool) -> bool {
        pred(self) || self.children().iter().any(|c| c.any(pred))
    }

    /// Capture-avoiding substitution of a free variable. Returns `None` when
    /// an inner binder would capture a free variable of `replacement`.
    pub fn substitute(&self, name: &str, replacement: &Expr) -> Option<Expr> {
        match self {
            Expr::Var(v) if v == name => Some(replacement.clone()),
            Expr::Sum { var, lo, hi, body } => {
                let lo = lo.substitute(name, replacement)?;
                let hi = hi.substitute(name, replacement)?;
                let body = if var == name {
                    (**body).clone()
                } else if body.has_free_var(name) && replacement.has_free_var(var) {
                    return None;
                } else {
                    body.substitute(name, replacement)?
                };
                Some(Expr::Sum {
                    var: var.clone(),
                    lo: Box::new(lo),
                    hi: Box::new(hi),
                    body: Box::new(body),
                })
            }
            _ => {
                let mut out = self.clone();
                for (dst, src) in out.children_mut().into_iter().zip(self.children()) {
                    *dst = src.substitute(name, replacement)?;
                }
                Some(out)
            }
        }
    }

    /// Evaluate with natural-number semantics (truncated subtraction,
    /// floor division, division by zero is zero).
    pub fn eval(&self, env: &dyn Fn(&str) -> Option<i128>, funcs: &dyn Fn(&str, &[i128]) -> Option<i128>) -> Option<i128> {
        const LIMIT: i128 = 1 << 60;
        let v = match self {
            Expr::Num(n) => *n as i128,
            Expr::Var(v) => env(v)?,
            Expr::Meta(_) | Expr::Neg(_) | Expr::Coe(_) => return None,
            Expr::Ascribe(inner, _) => inner.eval(env, funcs)?,
            Expr::Bin(op, l, r) => {
                let a = l.eval(env, funcs)?;
                let b = r.eval(env, funcs)?;
                match op {
                    BinOp::Add => a.checked_add(b)?,
                    BinOp::Sub => (a - b).max(0),
                    BinOp::Mul => a.checked_mul(b)?,
                    BinOp::Div => {
                        if b == 0 {
                            0
                        } else {
                            a / b
                        }
                    }
                    BinOp::Pow => {
                        let e = u32::try_from(b).ok().filter(|e| *e <= 64)?;
                        a.checked_pow(e)?
                    }
                }
            }
            Expr::App(f, args) => {
                let vals: Option<Vec<i128>> = args.iter().map(|a| a.eval(env, funcs)).collect();
                funcs(f, &vals?)?
            }
            Expr::Sum { var, lo, hi, body } => {
                let lo = lo.eval(env, funcs)?;
                let hi = hi.eval(env, funcs)?;
                if hi - lo > 10_000 {
                    return None;
                }
                let mut acc: i128 = 0;
                for k in lo..hi {
                    let inner_env = |name: &str| if name == var { Some(k) } else { env(name) };
                    acc = acc.checked_add(body.eval(&inner_env, funcs)?)?;
                }
                acc
            }
        };
        (v.abs() < LIMIT).then_some(v)
    }

    /// Evaluate a closed expression.
    pub fn eval_ground(&self) -> Option<i128> {
        self.eval(&|_| None, &|_, _| None)
    }
}

impl Prop {
    pub fn sides(&self) -> [&Expr; 2] {
        [&self.lhs, &self.rhs]
    }

    pub fn is_ground(&self) -> bool {
        self.lhs.is_ground() && self.rhs.is_ground()
    }

    /// Truth value of a closed proposition, when decidable by evaluation.
    pub fn eval_ground(&self) -> Option<bool> {
        if !self.is_ground() {
            return None;
        }
        Some(self.rel.holds(self.lhs.eval_ground()?, self.rhs.eval_ground()?))
    }

    pub fn eval(&self, env: &dyn Fn(&str) -> Option<i128>, funcs: &dyn Fn(&str, &[i128]) -> Option<i128>) -> Option<bool> {
        Some(self.rel.holds(self.lhs.eval(env, funcs)?, self.rhs.eval(env, funcs)?))
    }

    pub fn alpha_eq(&self, other: &Prop) -> bool {
        self.rel == other.rel && alpha_eq(&self.lhs, &other.lhs) && alpha_eq(&self.rhs, &other.rhs)
    }

    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = self.lhs.free_vars();
        out.extend(self.rhs.free_vars());
        out
    }
}

/// Equality up to renaming of sum binders.
pub fn alpha_eq(a: &Expr, b: &Expr) -> bool {
    fn go(a: &Expr, b: &Expr, env: &mut Vec<(String, String)>) -> bool {
        match (a, b) {
            (Expr::Var(x), Expr::Var(y)) => {
                for (bx, by) in env.iter().rev() {
                    if bx == x || by == y {
                        return bx == x && by == y;
                    }
                }
                x == y
            }
            (
                Expr::Sum { var: v1, lo: l1, hi: h1, body: b1 },
                Expr::Sum { var: v2, lo: l2, hi: h2, body: b2 },
            ) => {
                if !go(l1, l2, env) || !go(h1, h2, env) {
                    return false;
                }
                env.push((v1.clone(), v2.clone()));
                let ok = go(b1, b2, env);
                env.pop();
                ok
            }
            (Expr::Num(x), Expr::Num(y)) => x == y,
            (Expr::Meta(x), Expr::Meta(y)) => x == y,
            (Expr::Bin(o1, l1, r1), Expr::Bin(o2, l2, r2)) => {
                o1 == o2 && go(l1, l2, env) && go(r1, r2, env)
            }
            (Expr::Neg(x), Expr::Neg(y)) | (Expr::Coe(x), Expr::Coe(y)) => go(x, y, env),
            (Expr::Ascribe(x, t1), Expr::Ascribe(y, t2)) => t1 == t2 && go(x, y, env),
            (Expr::App(f, xs), Expr::App(g, ys)) => {
                f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| go(x, y, env))
            }
            _ => false,
        }
    }
    go(a, b, &mut Vec::new())
}

// ---------------------------------------------------------------------------
// Matching and rewriting

/// Bindings of pattern variables, borrowed from the matched term; binder
/// metas map to `Expr::Var`.
pub type Subst<'a> = BTreeMap<&'a str, Cow<'a, Expr>>;

pub fn match_pattern<'a>(pat: &'a Expr, e: &'a Expr, subst: &mut Subst<'a>) -> bool {
    match (pat, e) {
        (Expr::Meta(m), _) => match subst.get(m.as_str()) {
            Some(bound) => alpha_eq(bound, e),
            None => {
                subst.insert(m, Cow::Borrowed(e));
                true
            }
        },
        (Expr::Num(a), Expr::Num(b)) => a == b,
        (Expr::Var(a), Expr::Var(b)) => a == b,
        (Expr::Bin(o1, l1, r1), Expr::Bin(o2, l2, r2)) => {
            o1 == o2 && match_pattern(l1, l2, subst) && match_pattern(r1, r2, subst)
        }
        (Expr::Neg(a), Expr::Neg(b)) | (Expr::Coe(a), Expr::Coe(b)) => match_pattern(a, b, subst),
        (Expr::Ascribe(a, t1), Expr::Ascribe(b, t2)) => t1 == t2 && match_pattern(a, b, subst),
        (Expr::App(f, xs), Expr::App(g, ys)) => {
            f == g && xs.len() == ys.len() && xs.iter().zip(ys).all(|(x, y)| match_pattern(x, y, subst))
        }
        (
            Expr::Sum { var: pv, lo: pl, hi: ph, body: pb },
            Expr::Sum { var: ev, lo: el, hi: eh, body: eb },
        ) => {
            if let Some(meta) = pv.strip_prefix('?') {
                match subst.get(meta).map(|b| b.as_ref()) {
                    Some(Expr::Var(bound)) if bound != ev => return false,
                    Some(Expr::Var(_)) => {}
                    Some(_) => return false,
                    None => {
                        subst.insert(meta, Cow::Owned(Expr::Var(ev.clone())));
                    }
                }
            } else if pv != ev {
                return false;
            }
            match_pattern(pl, el, subst) && match_pattern(ph, eh, subst) && match_pattern(pb, eb, subst)
        }
        _ => false,
    }
}

pub fn instantiate(pat: &Expr, subst: &Subst<'_>) -> Option<Expr> {
    Some(match pat {
        Expr::Meta(m) => subst.get(m.as_str())?.clone().into_owned(),
        Expr::Sum { var, lo, hi, body } => {
            let var = match var.strip_prefix('?') {
                Some(meta) => match subst.get(meta)?.as_ref() {
                    Expr::Var(v) => v.clone(),
                    _ => return None,
                },
                None => var.clone(),
            };
            Expr::Sum {
                var,
                lo: Box::new(instantiate(lo, subst)?),
                hi: Box::new(instantiate(hi, subst)?),
                body: Box::new(instantiate(body, subst)?),
            }
        }
        _ => {
            let mut out = pat.clone();
            for (dst, src) in out.children_mut().into_iter().zip(pat.children()) {
                *dst = instantiate(src, subst)?;
            }
            out
        }
    })
}

/// Pattern variables occurring outside the body of the binder `?binder`.
fn metas_outside_binder(pat: &Expr, binder: &str, inside: bool, out: &mut BTreeSet<String>) {
    match pat {
        Expr::Meta(m) if !inside => {
            out.insert(m.clone());
        }
        Expr::Sum { var, lo, hi, body } => {
            metas_outside_binder(lo, binder, inside, out);
            metas_outside_binder(hi, binder, inside, out);
            let enters = var.strip_prefix('?') == Some(binder);
            metas_outside_binder(body, binder, inside || enters, out);
        }
        _ => {
            for c in pat.children() {
                metas_outside_binder(c, binder, inside, out);
            }
        }
    }
}

fn binder_metas(pat: &Expr, out: &mut BTreeSet<String>) {
    if let Expr::Sum { var, .. } = pat {
        if let Some(m) = var.strip_prefix('?') {
            out.insert(m.to_string());
        }
    }
    for c in pat.children() {
        binder_metas(c, out);
    }
}

/// A directed rewrite from `from` to `to`, with scope checks so that no
/// sum binder captures a variable moved across it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rewrite {
    pub from: Expr,
    pub to: Expr,
}

impl Rewrite {
    pub fn apply_at(&self, e: &Expr) -> Option<Expr> {
        let mut subst = Subst::new();
        if !match_pattern(&self.from, e, &mut subst) {
            return None;
        }
        let mut binders = BTreeSet::new();
        binder_metas(&self.from, &mut binders);
        binder_metas(&self.to, &mut binders);
        for binder in &binders {
            let Some(Expr::Var(bound)) = subst.get(binder.as_str()).map(|b| b.as_ref()) else {
                return None;
            };
            let mut outside = BTreeSet::new();
            metas_outside_binder(&self.from, binder, false, &mut outside);
            metas_outside_binder(&self.to, binder, false, &mut outside);
            for m in outside {
                if m != *binder && subst.get(m.as_str()).is_some_and(|v| v.has_free_var(bound)) {
                    return None;
                }
            }
        }
        instantiate(&self.to, &subst)
    }
}

fn first_match(e: &Expr, step: &dyn Fn(&Expr) -> Option<Expr>, path: &mut Vec<usize>) -> Option<Expr> {
    if let Some(out) = step(e) {
        return Some(out);
    }
    for (idx, child) in e.children().into_iter().enumerate() {
        path.push(idx);
        if let Some(out) = first_match(child, step, path) {
            return Some(out);
        }
        path.pop();
    }
    None
}

/// Rewrite the first match in leftmost-outermost (pre-order) order.
pub fn rewrite_first(e: &Expr, step: &dyn Fn(&Expr) -> Option<Expr>) -> Option<Expr> {
    let mut path = Vec::new();
    let replacement = first_match(e, step, &mut path)?;
    let mut out = e.clone();
    let mut slot = &mut out;
    for idx in path {
        slot = slot.children_mut().into_iter().nth(idx).expect("child index");
    }
    *slot = replacement;
    Some(out)
}

pub fn rewrite_prop_first(p: &Prop, step: &dyn Fn(&Expr) -> Option<Expr>) -> Option<Prop> {
    if let Some(lhs) = rewrite_first(&p.lhs, step) {
        return Some(Prop { lhs, ..p.clone() });
    }
    rewrite_first(&p.rhs, step).map(|rhs| Prop { rhs, ..p.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn round(src: &str) -> String {
        parse_prop(src).unwrap().to_string()
    }

    #[test]
    fn parse_print_basic() {
        assert_eq!(round("x +  0 = x"), "x + 0 = x");
        assert_eq!(round("(x + y) * z = x * z + y * z"), "(x + y) * z = x * z + y * z");
        assert_eq!(round("x - (y - z) = 0"), "x - (y - z) = 0");
        assert_eq!(round("x·1 = x"), "x * 1 = x");
        assert_eq!(round("2 ^ 3 ^ 2 = 512"), "2 ^ 3 ^ 2 = 512");
    }

    #[test]
    fn parse_sums_and_application() {
        let src = "∑ k in Ico 1 (n + 1), n * choose (n - 1) (k - 1) = n * ∑ k in range n, choose (n - 1) k";
        assert_eq!(round(src), src);
        let p = parse_prop(src).unwrap();
        assert!(matches!(p.lhs, Expr::Sum { .. }));
        assert!(matches!(p.rhs, Expr::Bin(BinOp::Mul, _, _)));
    }

    #[test]
    fn sum_on_the_left_of_an_operator_is_parenthesized() {
        let e = add(
            Expr::Sum {
                var: "k".into(),
                lo: Box::new(Expr::Num(0)),
                hi: Box::new(var("n")),
                body: Box::new(var("k")),
            },
            Expr::Num(1),
        );
        let printed = e.to_string();
        assert_eq!(printed, "(∑ k in range n, k) + 1");
        assert_eq!(parse_expr(&printed).unwrap(), e);
    }

    #[test]
    fn ascription_and_coercion() {
        assert_eq!(round("2 + (−1 : ℝ) / (m + 1) = 0"), "2 + (-1 : ℝ) / (m + 1) = 0");
        assert_eq!(round("2 + (-1)↑ / (m + 1) = 0"), "2 + (-1)↑ / (m + 1) = 0");
        assert!(matches!(parse_expr("↑n").unwrap(), Expr::Coe(_)));
    }

    #[test]
    fn unbalanced_parentheses_rejected() {
        assert_eq!(parse_prop("(x + 0 = x"), Err(ParseError::Unbalanced));
        assert_eq!(parse_prop("x + 0) = x"), Err(ParseError::Unbalanced));
        assert!(parse_prop("x + 0").is_err());
    }

    #[test]
    fn matching_respects_repeated_metas() {
        let pat = parse_expr("?a - ?a").unwrap();
        let mut s = Subst::new();
        assert!(match_pattern(&pat, &parse_expr("x * y - x * y").unwrap(), &mut s));
        let mut s = Subst::new();
        assert!(!match_pattern(&pat, &parse_expr("x - y").unwrap(), &mut s));
    }

    #[test]
    fn leftmost_outermost_first_only() {
        let rw = Rewrite {
            from: parse_expr("?a + 0").unwrap(),
            to: parse_expr("?a").unwrap(),
        };
        let p = parse_prop("(x + 0) + 0 = y + 0").unwrap();
        let out = rewrite_prop_first(&p, &|e| rw.apply_at(e)).unwrap();
        assert_eq!(out.to_string(), "x + 0 = y + 0");
    }

    #[test]
    fn binder_capture_blocked() {
        let mul_sum = Rewrite {
            from: parse_expr("?c * ∑ ?k in Ico ?a ?b, ?f").unwrap(),
            to: parse_expr("∑ ?k in Ico ?a ?b, ?c * ?f").unwrap(),
        };
        let ok = parse_expr("n * ∑ k in range n, f k").unwrap();
        assert_eq!(mul_sum.apply_at(&ok).unwrap().to_string(), "∑ k in range n, n * f k");
        let captured = parse_expr("k * ∑ k in range n, f k").unwrap();
        assert_eq!(mul_sum.apply_at(&captured), None);
        let back = Rewrite { from: mul_sum.to.clone(), to: mul_sum.from.clone() };
        assert_eq!(back.apply_at(&parse_expr("∑ k in range n, k * f k").unwrap()), None);
    }

    #[test]
    fn substitution_avoids_capture() {
        let body = parse_expr("f k + ∑ j in range k, j").unwrap();
        let out = body.substitute("k", &parse_expr("a + k").unwrap()).unwrap();
        assert_eq!(out.to_string(), "f (a + k) + ∑ j in range (a + k), j");
        assert!(body.substitute("k", &var("j")).is_some());
        let captures = parse_expr("∑ j in range k, j + k").unwrap();
        assert_eq!(captures.substitute("k", &var("j")), None);
    }

    #[test]
    fn alpha_equivalence() {
        let a = parse_expr("∑ k in range n, f k").unwrap();
        let b = parse_expr("∑ l in range n, f l").unwrap();
        let c = parse_expr("∑ l in range n, f k").unwrap();
        assert!(alpha_eq(&a, &b));
        assert!(!alpha_eq(&a, &c));
    }

    #[test]
    fn ground_evaluation_is_natural() {
        assert_eq!(parse_expr("3 - 5").unwrap().eval_ground(), Some(0));
        assert_eq!(parse_expr("7 / 2").unwrap().eval_ground(), Some(3));
        assert_eq!(parse_expr("∑ k in Ico 1 4, k * k").unwrap().eval_ground(), Some(14));
        assert_eq!(parse_prop("2 + 2 = 5").unwrap().eval_ground(), Some(false));
        assert_eq!(parse_prop("x = x").unwrap().eval_ground(), None);
    }
}
