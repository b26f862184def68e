//! Symbolic scalar expressions over variables `x1..xn` with exact derivatives.
//!
//! The grammar covers `+ - * / ^` (with `^` restricted to nonnegative integer
//! literal exponents), unary minus, parentheses, numeric literals, and the
//! unary functions `sin cos exp log sqrt`. Parsing applies constant folding
//! and nothing else; the canonical printer emits a fully parenthesized form
//! that re-parses to the identical tree. Differentiation is symbolic, so
//! gradients and Hessians are exact up to floating-point rounding in the
//! final evaluation.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExprError {
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("evaluation error: {message} in `{subterm}`")]
    Eval { message: String, subterm: String },
    #[error("expression uses x{index} but the ambient dimension is {n}")]
    VarOutOfRange { index: usize, n: usize },
}

/// Expression tree. Variables are stored 0-based; the surface syntax `x1`
/// maps to `Var(0)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(usize),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Neg(Box<Expr>),
    Sin(Box<Expr>),
    Cos(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

// ---------------------------------------------------------------------------
// Folding constructors. These perform constant folding only; a fold is
// skipped whenever it would produce a non-finite value (the unevaluated node
// is kept and reported as an evaluation error later, never as a silent NaN).
// ---------------------------------------------------------------------------

pub fn add(a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        let v = x + y;
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::Add(Box::new(a), Box::new(b))
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        let v = x - y;
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::Sub(Box::new(a), Box::new(b))
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        let v = x * y;
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::Mul(Box::new(a), Box::new(b))
}

pub fn div(a: Expr, b: Expr) -> Expr {
    if let (Expr::Const(x), Expr::Const(y)) = (&a, &b) {
        if *y != 0.0 {
            let v = x / y;
            if v.is_finite() {
                return Expr::Const(v);
            }
        }
    }
    Expr::Div(Box::new(a), Box::new(b))
}

pub fn pow(a: Expr, k: u32) -> Expr {
    if let Expr::Const(x) = &a {
        let v = x.powi(k as i32);
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    Expr::Pow(Box::new(a), k)
}

pub fn neg(a: Expr) -> Expr {
    if let Expr::Const(x) = &a {
        if x.is_finite() {
            return Expr::Const(-x);
        }
    }
    Expr::Neg(Box::new(a))
}

fn fold_unary(a: Expr, f: fn(f64) -> f64, wrap: fn(Box<Expr>) -> Expr) -> Expr {
    if let Expr::Const(x) = &a {
        let v = f(*x);
        if v.is_finite() {
            return Expr::Const(v);
        }
    }
    wrap(Box::new(a))
}

pub fn sin(a: Expr) -> Expr {
    fold_unary(a, f64::sin, Expr::Sin)
}
pub fn cos(a: Expr) -> Expr {
    fold_unary(a, f64::cos, Expr::Cos)
}
pub fn exp(a: Expr) -> Expr {
    fold_unary(a, f64::exp, Expr::Exp)
}
pub fn log(a: Expr) -> Expr {
    fold_unary(a, f64::ln, Expr::Log)
}
pub fn sqrt(a: Expr) -> Expr {
    fold_unary(a, f64::sqrt, Expr::Sqrt)
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
}

fn perr<T>(offset: usize, message: impl Into<String>) -> Result<T, ExprError> {
    Err(ExprError::Parse {
        offset,
        message: message.into(),
    })
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Parser {
            src,
            bytes: src.as_bytes(),
            pos: 0,
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = add(lhs, rhs);
                }
                Some(b'-') => {
                    self.pos += 1;
                    let rhs = self.term()?;
                    lhs = sub(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = mul(lhs, rhs);
                }
                Some(b'/') => {
                    self.pos += 1;
                    let rhs = self.factor()?;
                    lhs = div(lhs, rhs);
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        if self.peek() == Some(b'-') {
            self.pos += 1;
            let inner = self.factor()?;
            return Ok(neg(inner));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let k = self.exponent()?;
            return Ok(pow(base, k));
        }
        Ok(base)
    }

    /// Exponents are nonnegative integer literals; chains associate to the
    /// right and are folded immediately, so `x1^2^3` is `x1^8`.
    fn exponent(&mut self) -> Result<u32, ExprError> {
        let start = match self.peek() {
            Some(c) if c.is_ascii_digit() => self.pos,
            _ => {
                return perr(
                    self.pos,
                    "exponent must be a nonnegative integer literal",
                )
            }
        };
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        // A '.' or exponent marker here means the literal is not an integer.
        if let Some(c) = self.bytes.get(self.pos) {
            if *c == b'.' || *c == b'e' || *c == b'E' {
                return perr(start, "exponent must be a nonnegative integer literal");
            }
        }
        let text = &self.src[start..self.pos];
        let base: u32 = match text.parse() {
            Ok(v) => v,
            Err(_) => return perr(start, "exponent too large"),
        };
        if self.peek() == Some(b'^') {
            self.pos += 1;
            let rhs = self.exponent()?;
            match base.checked_pow(rhs) {
                Some(v) => Ok(v),
                None => perr(start, "exponent too large"),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'(') => {
                let open = self.pos;
                self.pos += 1;
                let inner = self.expr()?;
                if self.peek() == Some(b')') {
                    self.pos += 1;
                    Ok(inner)
                } else {
                    perr(open, "unclosed parenthesis")
                }
            }
            Some(c) if c.is_ascii_digit() => self.number(),
            Some(c) if c.is_ascii_alphabetic() || c == b'_' => self.ident(),
            Some(c) => perr(self.pos, format!("unexpected character `{}`", c as char)),
            None => perr(self.pos, "unexpected end of input"),
        }
    }

    fn number(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if self.bytes.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        if matches!(self.bytes.get(self.pos), Some(b'e') | Some(b'E')) {
            let mark = self.pos;
            self.pos += 1;
            if matches!(self.bytes.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            if !self
                .bytes
                .get(self.pos)
                .is_some_and(|c| c.is_ascii_digit())
            {
                return perr(mark, "malformed numeric literal");
            }
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
        }
        let text = &self.src[start..self.pos];
        match text.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
            _ => perr(start, "numeric literal out of range"),
        }
    }

    fn ident(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self
            .bytes
            .get(self.pos)
            .is_some_and(|c| c.is_ascii_alphanumeric() || *c == b'_')
        {
            self.pos += 1;
        }
        let name = &self.src[start..self.pos];
        let func: Option<fn(Expr) -> Expr> = match name {
            "sin" => Some(sin),
            "cos" => Some(cos),
            "exp" => Some(exp),
            "log" => Some(log),
            "sqrt" => Some(sqrt),
            _ => None,
        };
        if let Some(wrap) = func {
            if self.peek() != Some(b'(') {
                return perr(self.pos, format!("`{name}` must be followed by `(`"));
            }
            let open = self.pos;
            self.pos += 1;
            let inner = self.expr()?;
            if self.peek() == Some(b')') {
                self.pos += 1;
                return Ok(wrap(inner));
            }
            return perr(open, "unclosed parenthesis");
        }
        // Variables are `x` followed by a 1-based index without leading zeros.
        if let Some(digits) = name.strip_prefix('x') {
            if !digits.is_empty()
                && !digits.starts_with('0')
                && digits.bytes().all(|c| c.is_ascii_digit())
            {
                if let Ok(idx) = digits.parse::<usize>() {
                    return Ok(Expr::Var(idx - 1));
                }
            }
        }
        perr(start, format!("unknown identifier `{name}`"))
    }
}

/// Parses a source string into an expression, folding constants.
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    let mut p = Parser::new(src);
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.bytes.len() {
        return perr(p.pos, "trailing input");
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Canonical printing
// ---------------------------------------------------------------------------

impl Expr {
    fn fmt_pow_base(&self, out: &mut String) {
        // A bare `^` binds tighter than unary minus and is left-grouped by
        // the printer, so negative constants and nested powers need parens.
        let needs_parens = matches!(self, Expr::Pow(_, _))
            || matches!(self, Expr::Const(c) if *c < 0.0 || c.is_sign_negative());
        if needs_parens {
            out.push('(');
            self.fmt_into(out);
            out.push(')');
        } else {
            self.fmt_into(out);
        }
    }

    fn fmt_into(&self, out: &mut String) {
        use std::fmt::Write;
        match self {
            Expr::Const(c) => {
                let _ = write!(out, "{c}");
            }
            Expr::Var(i) => {
                let _ = write!(out, "x{}", i + 1);
            }
            Expr::Add(a, b) => {
                out.push('(');
                a.fmt_into(out);
                out.push('+');
                b.fmt_into(out);
                out.push(')');
            }
            Expr::Sub(a, b) => {
                out.push('(');
                a.fmt_into(out);
                out.push('-');
                b.fmt_into(out);
                out.push(')');
            }
            Expr::Mul(a, b) => {
                out.push('(');
                a.fmt_into(out);
                out.push('*');
                b.fmt_into(out);
                out.push(')');
            }
            Expr::Div(a, b) => {
                out.push('(');
                a.fmt_into(out);
                out.push('/');
                b.fmt_into(out);
                out.push(')');
            }
            Expr::Pow(a, k) => {
                a.fmt_pow_base(out);
                let _ = write!(out, "^{k}");
            }
            Expr::Neg(a) => {
                out.push_str("(-");
                a.fmt_into(out);
                out.push(')');
            }
            Expr::Sin(a) | Expr::Cos(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sqrt(a) => {
                out.push_str(match self {
                    Expr::Sin(_) => "sin(",
                    Expr::Cos(_) => "cos(",
                    Expr::Exp(_) => "exp(",
                    Expr::Log(_) => "log(",
                    _ => "sqrt(",
                });
                a.fmt_into(out);
                out.push(')');
            }
        }
    }
}

impl std::fmt::Display for Expr {
    /// Canonical form: fully parenthesized binary operations, `x{i}`
    /// variables, shortest round-tripping float literals. Parsing the output
    /// reproduces the tree exactly.
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut s = String::new();
        self.fmt_into(&mut s);
        f.write_str(&s)
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

fn everr<T>(message: impl Into<String>, node: &Expr) -> Result<T, ExprError> {
    Err(ExprError::Eval {
        message: message.into(),
        subterm: node.to_string(),
    })
}

impl Expr {
    /// Evaluates at `x` (0-based coordinates). Domain violations (division by
    /// zero, `log` of a nonpositive value, `sqrt` of a negative value) and
    /// non-finite intermediate results are reported as errors carrying the
    /// offending subterm; `0^0` evaluates to `1`.
    pub fn eval(&self, x: &[f64]) -> Result<f64, ExprError> {
        let v = match self {
            Expr::Const(c) => *c,
            Expr::Var(i) => match x.get(*i) {
                Some(v) => *v,
                None => return everr(format!("x{} out of range", i + 1), self),
            },
            Expr::Add(a, b) => a.eval(x)? + b.eval(x)?,
            Expr::Sub(a, b) => a.eval(x)? - b.eval(x)?,
            Expr::Mul(a, b) => a.eval(x)? * b.eval(x)?,
            Expr::Div(a, b) => {
                let d = b.eval(x)?;
                if d == 0.0 {
                    return everr("division by zero", self);
                }
                a.eval(x)? / d
            }
            Expr::Pow(a, k) => a.eval(x)?.powi(*k as i32),
            Expr::Neg(a) => -a.eval(x)?,
            Expr::Sin(a) => a.eval(x)?.sin(),
            Expr::Cos(a) => a.eval(x)?.cos(),
            Expr::Exp(a) => a.eval(x)?.exp(),
            Expr::Log(a) => {
                let v = a.eval(x)?;
                if v <= 0.0 {
                    return everr("log of a nonpositive value", self);
                }
                v.ln()
            }
            Expr::Sqrt(a) => {
                let v = a.eval(x)?;
                if v < 0.0 {
                    return everr("sqrt of a negative value", self);
                }
                v.sqrt()
            }
        };
        if !v.is_finite() {
            return everr("non-finite result", self);
        }
        Ok(v)
    }

    /// Largest 1-based variable index used, or 0 for constant expressions.
    pub fn max_var(&self) -> usize {
        match self {
            Expr::Const(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.max_var().max(b.max_var())
            }
            Expr::Pow(a, _)
            | Expr::Neg(a)
            | Expr::Sin(a)
            | Expr::Cos(a)
            | Expr::Exp(a)
            | Expr::Log(a)
            | Expr::Sqrt(a) => a.max_var(),
        }
    }

    /// Rebuilds the tree, replacing `Var(i)` by `map(i)` where provided.
    pub fn substitute(&self, map: &dyn Fn(usize) -> Option<Expr>) -> Expr {
        match self {
            Expr::Const(c) => Expr::Const(*c),
            Expr::Var(i) => map(*i).unwrap_or(Expr::Var(*i)),
            Expr::Add(a, b) => add(a.substitute(map), b.substitute(map)),
            Expr::Sub(a, b) => sub(a.substitute(map), b.substitute(map)),
            Expr::Mul(a, b) => mul(a.substitute(map), b.substitute(map)),
            Expr::Div(a, b) => div(a.substitute(map), b.substitute(map)),
            Expr::Pow(a, k) => pow(a.substitute(map), *k),
            Expr::Neg(a) => neg(a.substitute(map)),
            Expr::Sin(a) => sin(a.substitute(map)),
            Expr::Cos(a) => cos(a.substitute(map)),
            Expr::Exp(a) => exp(a.substitute(map)),
            Expr::Log(a) => log(a.substitute(map)),
            Expr::Sqrt(a) => sqrt(a.substitute(map)),
        }
    }
}

// ---------------------------------------------------------------------------
// Symbolic differentiation
// ---------------------------------------------------------------------------

fn is_zero(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 0.0)
}

fn is_one(e: &Expr) -> bool {
    matches!(e, Expr::Const(c) if *c == 1.0)
}

// Simplifying constructors used only while building derivative trees, so the
// results stay compact. Parsed user input is never rewritten with these.
fn add_s(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return b;
    }
    if is_zero(&b) {
        return a;
    }
    add(a, b)
}

fn sub_s(a: Expr, b: Expr) -> Expr {
    if is_zero(&b) {
        return a;
    }
    if is_zero(&a) {
        return neg(b);
    }
    sub(a, b)
}

fn mul_s(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) || is_zero(&b) {
        return Expr::Const(0.0);
    }
    if is_one(&a) {
        return b;
    }
    if is_one(&b) {
        return a;
    }
    mul(a, b)
}

fn div_s(a: Expr, b: Expr) -> Expr {
    if is_zero(&a) {
        return Expr::Const(0.0);
    }
    if is_one(&b) {
        return a;
    }
    div(a, b)
}

fn neg_s(a: Expr) -> Expr {
    if is_zero(&a) {
        return a;
    }
    neg(a)
}

fn pow_s(a: Expr, k: u32) -> Expr {
    match k {
        0 => Expr::Const(1.0),
        1 => a,
        _ => pow(a, k),
    }
}

/// Exact partial derivative with respect to the 0-based variable `var`.
pub fn diff(e: &Expr, var: usize) -> Expr {
    match e {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(i) => Expr::Const(if *i == var { 1.0 } else { 0.0 }),
        Expr::Add(a, b) => add_s(diff(a, var), diff(b, var)),
        Expr::Sub(a, b) => sub_s(diff(a, var), diff(b, var)),
        Expr::Mul(a, b) => add_s(
            mul_s(diff(a, var), (**b).clone()),
            mul_s((**a).clone(), diff(b, var)),
        ),
        Expr::Div(a, b) => {
            let num = sub_s(
                mul_s(diff(a, var), (**b).clone()),
                mul_s((**a).clone(), diff(b, var)),
            );
            div_s(num, pow_s((**b).clone(), 2))
        }
        Expr::Pow(a, k) => {
            if *k == 0 {
                return Expr::Const(0.0);
            }
            mul_s(
                Expr::Const(*k as f64),
                mul_s(pow_s((**a).clone(), k - 1), diff(a, var)),
            )
        }
        Expr::Neg(a) => neg_s(diff(a, var)),
        Expr::Sin(a) => mul_s(cos((**a).clone()), diff(a, var)),
        Expr::Cos(a) => neg_s(mul_s(sin((**a).clone()), diff(a, var))),
        Expr::Exp(a) => mul_s(exp((**a).clone()), diff(a, var)),
        Expr::Log(a) => div_s(diff(a, var), (**a).clone()),
        Expr::Sqrt(a) => div_s(
            diff(a, var),
            mul_s(Expr::Const(2.0), sqrt((**a).clone())),
        ),
    }
}

/// Value, gradient, and Hessian of an expression at one point.
#[derive(Debug, Clone)]
pub struct DiffBundle {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// An expression bundled with symbolic gradient and Hessian trees, built once
/// and evaluated repeatedly. The Hessian trees are kept for the upper
/// triangle and mirrored on evaluation, so the returned matrix is symmetric
/// to the bit.
#[derive(Debug, Clone)]
pub struct DiffExpr {
    n: usize,
    expr: Expr,
    grad: Vec<Expr>,
    hess: Vec<Vec<Expr>>, // hess[i][j-i] = d2/dxi dxj for j >= i
}

impl DiffExpr {
    pub fn new(expr: Expr, n: usize) -> Result<Self, ExprError> {
        let used = expr.max_var();
        if used > n {
            return Err(ExprError::VarOutOfRange { index: used, n });
        }
        let grad: Vec<Expr> = (0..n).map(|i| diff(&expr, i)).collect();
        let hess: Vec<Vec<Expr>> = (0..n)
            .map(|i| (i..n).map(|j| diff(&grad[i], j)).collect())
            .collect();
        Ok(DiffExpr {
            n,
            expr,
            grad,
            hess,
        })
    }

    pub fn parse(src: &str, n: usize) -> Result<Self, ExprError> {
        DiffExpr::new(parse(src)?, n)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn expr(&self) -> &Expr {
        &self.expr
    }

    pub fn value(&self, x: &[f64]) -> Result<f64, ExprError> {
        self.expr.eval(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Result<DVector<f64>, ExprError> {
        let mut g = DVector::zeros(self.n);
        for i in 0..self.n {
            g[i] = self.grad[i].eval(x)?;
        }
        Ok(g)
    }

    pub fn hessian(&self, x: &[f64]) -> Result<DMatrix<f64>, ExprError> {
        let mut h = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for j in i..self.n {
                let v = self.hess[i][j - i].eval(x)?;
                h[(i, j)] = v;
                h[(j, i)] = v;
            }
        }
        Ok(h)
    }

    pub fn bundle(&self, x: &[f64]) -> Result<DiffBundle, ExprError> {
        Ok(DiffBundle {
            value: self.value(x)?,
            gradient: self.gradient(x)?,
            hessian: self.hessian(x)?,
        })
    }
}

/// One-shot value/gradient/Hessian of `e` at `x`.
pub fn differentiate(e: &Expr, x: &[f64]) -> Result<DiffBundle, ExprError> {
    DiffExpr::new(e.clone(), x.len())?.bundle(x)
}
