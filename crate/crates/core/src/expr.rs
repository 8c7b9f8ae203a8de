//! A small arithmetic language for coefficients, nonlinearities and
//! manufactured solutions given as text.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := '-' unary | power
//! power   := atom ('^' unary)?            right-associative
//! atom    := number | ident | func '(' sum ')' | '(' sum ')'
//! ```
//!
//! so `-x^2` is `-(x^2)` and `2^-1` is legal. Functions: `sin cos exp log
//! tanh sqrt abs`.
//!
//! Reserved identifiers: `t`, `s`, `y1`, `y2` and the jet names. For a
//! multi-index with axis labels `i <= j <= ...` the local derivative is
//! `p<i>` (first order), `q<ij>`, `c<ijk>`, `e<ijkl>` (fourth order), and
//! `u` for the value itself. The diagonal counterparts carry an `n` prefix
//! (`n`, `np1`, `nq11`, `nc111`, `ne1111`). Labels must be nondecreasing:
//! `q21` is a syntax error since only `q12` is stored.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::grid::{Jet, MultiIndex, Point};

pub const MAX_SOURCE_LEN: usize = 64 * 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Tanh,
    Sqrt,
    Abs,
}

impl Func {
    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "tanh" => Func::Tanh,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log => {
                if x > 0.0 {
                    x.ln()
                } else {
                    f64::NAN
                }
            }
            Func::Tanh => x.tanh(),
            Func::Sqrt => {
                if x >= 0.0 {
                    x.sqrt()
                } else {
                    f64::NAN
                }
            }
            Func::Abs => x.abs(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> &'static str {
        match self {
            BinOp::Add => "+",
            BinOp::Sub => "-",
            BinOp::Mul => "*",
            BinOp::Div => "/",
            BinOp::Pow => "^",
        }
    }

    fn apply(self, a: f64, b: f64) -> f64 {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
            BinOp::Pow => a.powf(b),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(String),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    pub fn bin(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::Bin(op, Box::new(a), Box::new(b))
    }

    /// Identifiers referenced anywhere in the tree.
    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => {
                out.insert(v.clone());
            }
            Expr::Neg(a) | Expr::Call(_, a) => a.collect_vars(out),
            Expr::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    pub fn depends_on(&self, name: &str) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(v) => v == name,
            Expr::Neg(a) | Expr::Call(_, a) => a.depends_on(name),
            Expr::Bin(_, a, b) => a.depends_on(name) || b.depends_on(name),
        }
    }

    /// Constant value if the tree has no identifiers.
    pub fn constant_value(&self) -> Option<f64> {
        if self.variables().is_empty() {
            eval(self, &Bindings::new()).ok()
        } else {
            None
        }
    }
}

/// Canonical, fully parenthesized form; parsing it yields the same tree.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v:?}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

/// Checks jet-style names (`p1`, `nq12`, `c112`, ...) for canonical form.
fn check_identifier(name: &str, offset: usize) -> Result<()> {
    let body = name.strip_prefix('n').unwrap_or(name);
    let mut chars = body.chars();
    let Some(head) = chars.next() else {
        return Ok(());
    };
    let digits = chars.as_str();
    let want = match head {
        'p' => 1,
        'q' => 2,
        'c' => 3,
        'e' => 4,
        _ => return Ok(()),
    };
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Ok(());
    }
    let syntax = |message: String| Err(Error::Syntax { offset, message });
    if digits.len() != want {
        return syntax(format!(
            "jet identifier `{name}` needs exactly {want} axis label(s)"
        ));
    }
    let b = digits.as_bytes();
    if b.contains(&b'0') {
        return syntax(format!("axis labels start at 1 in `{name}`"));
    }
    if b.windows(2).any(|w| w[0] > w[1]) {
        let mut sorted = b.to_vec();
        sorted.sort_unstable();
        return syntax(format!(
            "non-canonical jet identifier `{name}`: labels must be nondecreasing (use `{}{}{}`)",
            if name.starts_with('n') && name.len() > body.len() { "n" } else { "" },
            head,
            String::from_utf8_lossy(&sorted)
        ));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut k = 0;
    while k < bytes.len() {
        let c = bytes[k];
        if c.is_ascii_whitespace() {
            k += 1;
            continue;
        }
        let start = k;
        if c.is_ascii_digit() || c == b'.' {
            while k < bytes.len() && (bytes[k].is_ascii_digit() || bytes[k] == b'.') {
                k += 1;
            }
            if k < bytes.len() && (bytes[k] == b'e' || bytes[k] == b'E') {
                let mut e = k + 1;
                if e < bytes.len() && (bytes[e] == b'+' || bytes[e] == b'-') {
                    e += 1;
                }
                if e < bytes.len() && bytes[e].is_ascii_digit() {
                    while e < bytes.len() && bytes[e].is_ascii_digit() {
                        e += 1;
                    }
                    k = e;
                }
            }
            let lit = &text[start..k];
            let v: f64 = lit.parse().map_err(|_| Error::Syntax {
                offset: start,
                message: format!("malformed number `{lit}`"),
            })?;
            if !v.is_finite() {
                return Err(Error::Syntax {
                    offset: start,
                    message: format!("number `{lit}` overflows"),
                });
            }
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == b'_' {
            while k < bytes.len() && (bytes[k].is_ascii_alphanumeric() || bytes[k] == b'_') {
                k += 1;
            }
            out.push((start, Tok::Ident(text[start..k].to_string())));
        } else {
            let tok = match c {
                b'+' | b'-' | b'*' | b'/' | b'^' => Tok::Op(c as char),
                b'(' => Tok::LParen,
                b')' => Tok::RParen,
                _ => {
                    let ch = text[start..].chars().next().unwrap_or('?');
                    return Err(Error::Syntax {
                        offset: start,
                        message: format!("unexpected character `{ch}`"),
                    });
                }
            };
            k += 1;
            out.push((start, tok));
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].1
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].1.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            offset: self.offset(),
            message: message.into(),
        })
    }

    fn sum(&mut self) -> Result<Expr> {
        let mut lhs = self.product()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinOp::Add,
                Tok::Op('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.product()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn product(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinOp::Mul,
                Tok::Op('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::bin(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == &Tok::Op('-') {
            self.bump();
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if self.peek() == &Tok::Op('^') {
            self.bump();
            let exp = self.unary()?;
            return Ok(Expr::bin(BinOp::Pow, base, exp));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        let offset = self.offset();
        match self.bump() {
            Tok::Num(v) => Ok(Expr::Num(v)),
            Tok::LParen => {
                let e = self.sum()?;
                self.expect_rparen()?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == &Tok::LParen {
                    let func = Func::from_name(&name).ok_or(Error::UnknownFunction(name))?;
                    self.bump();
                    let arg = self.sum()?;
                    self.expect_rparen()?;
                    Ok(Expr::Call(func, Box::new(arg)))
                } else if Func::from_name(&name).is_some() {
                    Err(Error::Syntax {
                        offset,
                        message: format!("function `{name}` needs a parenthesized argument"),
                    })
                } else {
                    check_identifier(&name, offset)?;
                    Ok(Expr::Var(name))
                }
            }
            Tok::End => Err(Error::Syntax {
                offset,
                message: "unexpected end of input".into(),
            }),
            other => Err(Error::Syntax {
                offset,
                message: format!("unexpected token {}", describe(&other)),
            }),
        }
    }

    fn expect_rparen(&mut self) -> Result<()> {
        if self.peek() == &Tok::RParen {
            self.bump();
            Ok(())
        } else {
            self.error("expected `)`")
        }
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("`{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::LParen => "`(`".into(),
        Tok::RParen => "`)`".into(),
        Tok::End => "end of input".into(),
    }
}

pub fn parse(text: &str) -> Result<Expr> {
    if text.len() > MAX_SOURCE_LEN {
        return Err(Error::Syntax {
            offset: MAX_SOURCE_LEN,
            message: format!("expression longer than {MAX_SOURCE_LEN} bytes"),
        });
    }
    let mut p = Parser {
        toks: tokenize(text)?,
        pos: 0,
    };
    let e = p.sum()?;
    if p.peek() != &Tok::End {
        let t = p.peek().clone();
        return p.error(format!("unexpected token {} after expression", describe(&t)));
    }
    Ok(e)
}

/// Identifier bound to `∂_I` of the local (or diagonal) jet part.
pub fn jet_identifier(index: MultiIndex, diagonal: bool) -> String {
    let head = match index.order() {
        0 => return if diagonal { "n".into() } else { "u".into() },
        1 => 'p',
        2 => 'q',
        3 => 'c',
        4 => 'e',
        o => panic!("no jet identifier for order {o}"),
    };
    format!("{}{head}{}", if diagonal { "n" } else { "" }, index.label())
}

/// Parses a jet identifier back into `(index, diagonal)`.
pub fn parse_jet_identifier(name: &str, d: usize) -> Option<(MultiIndex, bool)> {
    match name {
        "u" => return Some((MultiIndex::EMPTY, false)),
        "n" => return Some((MultiIndex::EMPTY, true)),
        _ => {}
    }
    let (diag, body) = match name.strip_prefix('n') {
        Some(b) if !b.is_empty() => (true, b),
        _ => (false, name),
    };
    let mut it = body.chars();
    let want = match it.next()? {
        'p' => 1,
        'q' => 2,
        'c' => 3,
        'e' => 4,
        _ => return None,
    };
    let label = it.as_str();
    if label.len() != want {
        return None;
    }
    let idx = MultiIndex::parse_label(label, d)?;
    (jet_identifier(idx, diag) == name).then_some((idx, diag))
}

/// Identifier → value map used by [`eval`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bindings {
    values: BTreeMap<String, f64>,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, name: &str, v: f64) -> &mut Self {
        self.values.insert(name.to_string(), v);
        self
    }

    pub fn with(mut self, name: &str, v: f64) -> Self {
        self.set(name, v);
        self
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).copied()
    }

    /// Binds `t`, `s`, `y1..yd`.
    pub fn bind_point(&mut self, p: &Point, d: usize) -> &mut Self {
        self.set("t", p.t).set("s", p.s);
        for (a, y) in p.y.iter().take(d).enumerate() {
            self.set(&format!("y{}", a + 1), *y);
        }
        self
    }

    /// Binds every entry of a scalar jet under its canonical name.
    pub fn bind_jet(&mut self, jet: &Jet) -> &mut Self {
        assert_eq!(jet.m(), 1, "expression jets are scalar");
        for idx in jet.indices() {
            self.set(&jet_identifier(idx, false), jet.local(idx)[0]);
            self.set(&jet_identifier(idx, true), jet.diagonal(idx)[0]);
        }
        self
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.values.iter().map(|(k, v)| (k.as_str(), *v))
    }

    fn snapshot(&self) -> String {
        let parts: Vec<String> = self.values.iter().map(|(k, v)| format!("{k}={v:?}")).collect();
        format!("{{{}}}", parts.join(", "))
    }
}

fn domain_error(op: &str, detail: String, snapshot: String) -> Error {
    Error::Domain {
        operation: op.to_string(),
        detail,
        snapshot,
    }
}

fn eval_inner(e: &Expr, b: &Bindings) -> std::result::Result<f64, (String, String)> {
    let check = |op: &str, args: String, v: f64| {
        if v.is_finite() {
            Ok(v)
        } else {
            Err((op.to_string(), format!("{op}{args} = {v}")))
        }
    };
    match e {
        Expr::Num(v) => Ok(*v),
        Expr::Var(name) => b.get(name).ok_or_else(|| ("unbound".to_string(), name.clone())),
        Expr::Neg(a) => Ok(-eval_inner(a, b)?),
        Expr::Bin(op, l, r) => {
            let x = eval_inner(l, b)?;
            let y = eval_inner(r, b)?;
            check(op.symbol(), format!("({x:?}, {y:?})"), op.apply(x, y))
        }
        Expr::Call(func, a) => {
            let x = eval_inner(a, b)?;
            check(func.name(), format!("({x:?})"), func.apply(x))
        }
    }
}

/// Evaluates in IEEE double, left operand before right.
///
/// Any non-finite intermediate result (log of a non-positive number,
/// division by zero, overflow) is a `DomainError` carrying the bindings.
pub fn eval(e: &Expr, b: &Bindings) -> Result<f64> {
    eval_inner(e, b).map_err(|(op, detail)| {
        if op == "unbound" {
            Error::UnboundIdentifier(detail)
        } else {
            domain_error(&op, detail, b.snapshot())
        }
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Op {
    Const(f64),
    Load(usize),
    Neg,
    Bin(BinOp),
    Call(Func),
}

/// Expression compiled to a stack program over positional slots.
///
/// Evaluation order and arithmetic are identical to [`eval`], so results
/// agree bit for bit.
#[derive(Clone, Debug, PartialEq)]
pub struct Compiled {
    code: Vec<Op>,
    slots: Vec<String>,
    depth: usize,
    source: String,
}

impl Compiled {
    /// Compiles against a fixed slot layout; unknown names fail here.
    pub fn new(e: &Expr, slots: &[&str]) -> Result<Self> {
        let mut code = Vec::new();
        let mut depth = 0;
        let mut cur = 0;
        fn walk(
            e: &Expr,
            slots: &[&str],
            code: &mut Vec<Op>,
            cur: &mut usize,
            depth: &mut usize,
        ) -> Result<()> {
            match e {
                Expr::Num(v) => {
                    code.push(Op::Const(*v));
                    *cur += 1;
                }
                Expr::Var(name) => {
                    let k = slots
                        .iter()
                        .position(|s| s == name)
                        .ok_or_else(|| Error::UnboundIdentifier(name.clone()))?;
                    code.push(Op::Load(k));
                    *cur += 1;
                }
                Expr::Neg(a) => {
                    walk(a, slots, code, cur, depth)?;
                    code.push(Op::Neg);
                }
                Expr::Call(f, a) => {
                    walk(a, slots, code, cur, depth)?;
                    code.push(Op::Call(*f));
                }
                Expr::Bin(op, a, b) => {
                    walk(a, slots, code, cur, depth)?;
                    walk(b, slots, code, cur, depth)?;
                    code.push(Op::Bin(*op));
                    *cur -= 1;
                }
            }
            *depth = (*depth).max(*cur);
            Ok(())
        }
        walk(e, slots, &mut code, &mut cur, &mut depth)?;
        Ok(Compiled {
            code,
            slots: slots.iter().map(|s| s.to_string()).collect(),
            depth,
            source: e.to_string(),
        })
    }

    pub fn slots(&self) -> &[String] {
        &self.slots
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn eval(&self, values: &[f64]) -> Result<f64> {
        debug_assert_eq!(values.len(), self.slots.len());
        let mut stack: Vec<f64> = Vec::with_capacity(self.depth);
        let fail = |op: &str, detail: String| {
            let parts: Vec<String> = self
                .slots
                .iter()
                .zip(values)
                .map(|(k, v)| format!("{k}={v:?}"))
                .collect();
            domain_error(op, detail, format!("{{{}}}", parts.join(", ")))
        };
        for op in &self.code {
            match op {
                Op::Const(v) => stack.push(*v),
                Op::Load(k) => stack.push(values[*k]),
                Op::Neg => {
                    let x = stack.pop().expect("stack");
                    stack.push(-x);
                }
                Op::Bin(b) => {
                    let y = stack.pop().expect("stack");
                    let x = stack.pop().expect("stack");
                    let v = b.apply(x, y);
                    if !v.is_finite() {
                        return Err(fail(b.symbol(), format!("{}({x:?}, {y:?}) = {v}", b.symbol())));
                    }
                    stack.push(v);
                }
                Op::Call(f) => {
                    let x = stack.pop().expect("stack");
                    let v = f.apply(x);
                    if !v.is_finite() {
                        return Err(fail(f.name(), format!("{}({x:?}) = {v}", f.name())));
                    }
                    stack.push(v);
                }
            }
        }
        Ok(stack.pop().expect("non-empty program"))
    }
}

const EPS: f64 = f64::EPSILON;

/// Central difference `(f(x+ε) - f(x-ε)) / 2ε`, `ε = eps^(1/3)·max(|x|, scale)`.
pub fn central_difference(
    mut f: impl FnMut(f64) -> Result<f64>,
    x: f64,
    scale: f64,
) -> Result<f64> {
    let h = EPS.cbrt() * x.abs().max(scale);
    Ok((f(x + h)? - f(x - h)?) / (2.0 * h))
}

/// Second derivative `∂²f/∂x₁∂x₂` by nested central differences.
///
/// Steps are `eps^(1/4)·max(|x|, scale)`, which balances the `h²`
/// truncation against the `eps/h²` rounding of a second difference. For
/// `same = true` the two arguments are the same variable and the
/// three-point formula is used.
pub fn second_difference(
    mut f: impl FnMut(f64, f64) -> Result<f64>,
    x1: f64,
    x2: f64,
    scale: f64,
    same: bool,
) -> Result<f64> {
    let e4 = EPS.sqrt().sqrt();
    let h1 = e4 * x1.abs().max(scale);
    if same {
        return Ok((f(x1 + h1, x2)? - 2.0 * f(x1, x2)? + f(x1 - h1, x2)?) / (h1 * h1));
    }
    let h2 = e4 * x2.abs().max(scale);
    let pp = f(x1 + h1, x2 + h2)?;
    let pm = f(x1 + h1, x2 - h2)?;
    let mp = f(x1 - h1, x2 + h2)?;
    let mm = f(x1 - h1, x2 - h2)?;
    Ok(((pp - pm) - (mp - mm)) / (4.0 * h1 * h2))
}

/// `∂E/∂var` at the given bindings by central differences.
pub fn derivative_fd(e: &Expr, var: &str, b: &Bindings, scale: f64) -> Result<f64> {
    let x = b.get(var).ok_or_else(|| Error::UnboundIdentifier(var.to_string()))?;
    let mut work = b.clone();
    central_difference(
        |v| {
            work.set(var, v);
            eval(e, &work)
        },
        x,
        scale,
    )
}

/// `∂²E/∂v1∂v2` at the given bindings.
pub fn second_derivative_fd(e: &Expr, v1: &str, v2: &str, b: &Bindings, scale: f64) -> Result<f64> {
    let x1 = b.get(v1).ok_or_else(|| Error::UnboundIdentifier(v1.to_string()))?;
    let x2 = b.get(v2).ok_or_else(|| Error::UnboundIdentifier(v2.to_string()))?;
    let mut work = b.clone();
    second_difference(
        |a, c| {
            work.set(v1, a);
            if v1 != v2 {
                work.set(v2, c);
            }
            eval(e, &work)
        },
        x1,
        x2,
        scale,
        v1 == v2,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, jet_at, TriangleField};
    use std::f64::consts::PI;

    fn b(pairs: &[(&str, f64)]) -> Bindings {
        let mut out = Bindings::new();
        for (k, v) in pairs {
            out.set(k, *v);
        }
        out
    }

    #[test]
    fn two_token_sum() {
        assert_eq!(
            parse("q11 + nq11").unwrap(),
            Expr::bin(BinOp::Add, Expr::var("q11"), Expr::var("nq11"))
        );
    }

    #[test]
    fn pythagoras_everywhere() {
        let e = parse("sin(y1)^2 + cos(y1)^2").unwrap();
        for k in 0..50 {
            let y = -7.0 + 0.3 * k as f64;
            let v = eval(&e, &b(&[("y1", y)])).unwrap();
            assert!((v - 1.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn unary_plus_is_rejected_at_its_offset() {
        match parse("2*+3") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn precedence_and_associativity() {
        let v = |s: &str| eval(&parse(s).unwrap(), &Bindings::new()).unwrap();
        assert_eq!(v("2^3^2"), 512.0);
        assert_eq!(v("-2^2"), -4.0);
        assert_eq!(v("2^-1"), 0.5);
        assert_eq!(v("1 - 2 - 3"), -4.0);
        assert_eq!(v("8 / 4 / 2"), 1.0);
        assert_eq!(v("1 + 2 * 3"), 7.0);
        assert_eq!(v("(1 + 2) * 3"), 9.0);
        assert_eq!(v("--3"), 3.0);
        assert_eq!(v("1.5e2 + 2E-1"), 150.2);
        assert_eq!(v(" \t2\n*3 "), 6.0);
    }

    #[test]
    fn product_of_bindings() {
        let e = parse("t*s").unwrap();
        assert_eq!(eval(&e, &b(&[("t", 0.5), ("s", 0.25)])).unwrap(), 0.125);
    }

    #[test]
    fn log_of_negative_is_domain_error() {
        let e = parse("log(u)").unwrap();
        match eval(&e, &b(&[("u", -1.0)])) {
            Err(Error::Domain { snapshot, .. }) => assert!(snapshot.contains("u=-1.0")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            eval(&parse("1/u").unwrap(), &b(&[("u", 0.0)])),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn unbound_and_unknown() {
        assert!(matches!(
            eval(&parse("t + w").unwrap(), &b(&[("t", 1.0)])),
            Err(Error::UnboundIdentifier(n)) if n == "w"
        ));
        assert!(matches!(parse("sinh(t)"), Err(Error::UnknownFunction(_))));
        assert!(matches!(parse("sin t"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("(1 + 2"), Err(Error::Syntax { offset: 6, .. })));
        assert!(matches!(parse(""), Err(Error::Syntax { offset: 0, .. })));
        assert!(matches!(parse("1 2"), Err(Error::Syntax { offset: 2, .. })));
        assert!(matches!(parse("1e999"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn non_canonical_jet_names() {
        assert!(matches!(parse("q21"), Err(Error::Syntax { offset: 0, .. })));
        assert!(matches!(parse("1 + nq21"), Err(Error::Syntax { offset: 4, .. })));
        assert!(matches!(parse("c121"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("p12"), Err(Error::Syntax { .. })));
        assert!(parse("q12 + nq22 + c112 + ne1122 + np2 + n + u").is_ok());
    }

    #[test]
    fn jet_identifier_round_trip() {
        for d in 1..=2 {
            for idx in MultiIndex::all_up_to(d, 4) {
                for diag in [false, true] {
                    let name = jet_identifier(idx, diag);
                    assert_eq!(parse_jet_identifier(&name, d), Some((idx, diag)), "{name}");
                    assert!(parse(&name).is_ok());
                }
            }
        }
        assert_eq!(jet_identifier(MultiIndex::from_axes(&[0, 1]), true), "nq12");
        assert_eq!(parse_jet_identifier("q21", 2), None);
    }

    #[test]
    fn q11_from_a_sine_field() {
        let g = build_grid(1.0, 2, 2.0 * PI, 32, 1, 1, 1).unwrap();
        let f = TriangleField::from_fn(&g, |p, o| o[0] = p.y[0].sin());
        let sj = jet_at(&f, 2, 1, 2).unwrap();
        let e = parse("q11").unwrap();
        let dy = g.dy();
        let symbol = (2.0 - 2.0 * dy.cos()) / (dy * dy);
        for k in 0..32 {
            let mut bind = Bindings::new();
            bind.bind_jet(&sj.point(k));
            let v = eval(&e, &bind).unwrap();
            let y = g.y(k)[0];
            assert!((v + symbol * y.sin()).abs() < 1e-12);
            assert!((v + y.sin()).abs() < dy * dy / 12.0 + 1e-12);
        }
    }

    #[test]
    fn printing_is_canonical() {
        let e = parse("-x^2 + sin(2*y1)/3").unwrap();
        let text = e.to_string();
        assert_eq!(text, "((-(x ^ 2.0)) + (sin((2.0 * y1)) / 3.0))");
        assert_eq!(parse(&text).unwrap(), e);
        let tiny = parse("1e-7 * 12345678901234567890").unwrap();
        assert_eq!(parse(&tiny.to_string()).unwrap(), tiny);
    }

    #[test]
    fn compiled_matches_tree_bitwise() {
        let e = parse("tanh(nq11) + q11 * exp(-t*s) - abs(y1)^1.5 / (1 + u^2)").unwrap();
        let slots = ["t", "s", "y1", "u", "q11", "nq11"];
        let c = Compiled::new(&e, &slots).unwrap();
        for k in 0..20 {
            let x = k as f64 * 0.37 - 3.0;
            let vals = [x, 0.5 * x, x.sin(), x * x, -x, 2.0 * x];
            let mut bind = Bindings::new();
            for (n, v) in slots.iter().zip(vals) {
                bind.set(n, v);
            }
            assert_eq!(c.eval(&vals).unwrap().to_bits(), eval(&e, &bind).unwrap().to_bits());
        }
        assert!(matches!(
            Compiled::new(&e, &["t"]),
            Err(Error::UnboundIdentifier(_))
        ));
        let bad = Compiled::new(&parse("log(u)").unwrap(), &["u"]).unwrap();
        assert!(matches!(bad.eval(&[-1.0]), Err(Error::Domain { .. })));
    }

    #[test]
    fn fd_derivatives() {
        let e = parse("q11 + nq11").unwrap();
        let bind = b(&[("q11", 0.3), ("nq11", -0.2)]);
        assert!((derivative_fd(&e, "q11", &bind, 1.0).unwrap() - 1.0).abs() <= 1e-9);
        let sq = parse("u^2").unwrap();
        let d = derivative_fd(&sq, "u", &b(&[("u", 3.0)]), 1.0).unwrap();
        assert!((d - 6.0).abs() <= 1e-7 * 6.0);
        let cross = parse("u^2 * n + sin(n)").unwrap();
        let at = b(&[("u", 0.7), ("n", 0.4)]);
        let d2 = second_derivative_fd(&cross, "u", "n", &at, 1.0).unwrap();
        assert!((d2 - 1.4).abs() < 1e-6);
        let dnn = second_derivative_fd(&cross, "n", "n", &at, 1.0).unwrap();
        assert!((dnn + 0.4f64.sin()).abs() < 1e-6);
    }

    #[test]
    fn eval_is_pure() {
        let e = parse("exp(sin(t)) * log(2 + s)").unwrap();
        let bind = b(&[("t", 0.123), ("s", 4.56)]);
        let a = eval(&e, &bind).unwrap();
        let c = eval(&e, &bind).unwrap();
        assert_eq!(a.to_bits(), c.to_bits());
    }

    #[test]
    fn oversize_source_is_rejected() {
        let text = "1+".repeat(MAX_SOURCE_LEN / 2 + 1);
        assert!(matches!(parse(&text), Err(Error::Syntax { .. })));
    }
}
