//! The small expression language used for coefficient functions, initial
//! functions, delay maps and vector-field components.
//!
//! Grammar, loosest binding first:
//!
//! ```text
//! expr     := term (('+' | '-') term)*
//! term     := unary (('*' | '/') unary)*
//! unary    := '-' unary | power
//! power    := atom ('^' exponent)?
//! exponent := '-' exponent | power
//! atom     := number | name | func '(' expr ')' | '(' expr ')'
//! ```
//!
//! `^` is right-associative and binds tighter than unary minus, so `-x^2`
//! is `-(x^2)` while `2^-x` is `2^(-x)`. There is no unary plus. The names
//! `pi` and `e` are reserved constants.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

/// Unary operators. `Neg` is prefix minus, the rest are function calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Neg,
    Exp,
    Ln,
    Sin,
    Cos,
    Tan,
    Atan,
    Sqrt,
    Abs,
    Sign,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "exp" => Func::Exp,
            "ln" => Func::Ln,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "tan" => Func::Tan,
            "atan" => Func::Atan,
            "sqrt" => Func::Sqrt,
            "abs" => Func::Abs,
            "sign" => Func::Sign,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Func::Neg => "-",
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Atan => "atan",
            Func::Sqrt => "sqrt",
            Func::Abs => "abs",
            Func::Sign => "sign",
        }
    }

    fn apply(self, v: f64) -> Result<f64, EvalError> {
        let out = match self {
            Func::Neg => -v,
            Func::Exp => v.exp(),
            Func::Ln => {
                if v <= 0.0 {
                    return Err(EvalError::domain("ln", v));
                }
                v.ln()
            }
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Tan => v.tan(),
            Func::Atan => v.atan(),
            Func::Sqrt => {
                if v < 0.0 {
                    return Err(EvalError::domain("sqrt", v));
                }
                v.sqrt()
            }
            Func::Abs => v.abs(),
            Func::Sign => {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
        };
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Constant {
    Pi,
    E,
}

impl Constant {
    pub fn value(self) -> f64 {
        match self {
            Constant::Pi => std::f64::consts::PI,
            Constant::E => std::f64::consts::E,
        }
    }
}

/// Expression tree. Immutable once built; every operation returns a new tree.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Const(Constant),
    Variable(String),
    Unary(Func, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at {position}: {message}")]
pub struct ParseError {
    /// Character index into the input.
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {op} undefined at {arg}")]
    Domain { op: &'static str, arg: f64 },
    #[error("unbound variable `{0}`")]
    UnboundVariable(String),
}

impl EvalError {
    fn domain(op: &'static str, arg: f64) -> Self {
        EvalError::Domain { op, arg }
    }
}

/// Formats a real as an expression literal; negative values are wrapped in
/// parentheses so the text can be spliced anywhere.
pub fn literal(v: f64) -> String {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        format!("(-{})", -v)
    } else {
        format!("{v}")
    }
}

// ---------------------------------------------------------------- lexing

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    End,
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(v) => format!("number {v}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Plus => "'+'".into(),
        Tok::Minus => "'-'".into(),
        Tok::Star => "'*'".into(),
        Tok::Slash => "'/'".into(),
        Tok::Caret => "'^'".into(),
        Tok::LParen => "'('".into(),
        Tok::RParen => "')'".into(),
        Tok::End => "end of input".into(),
    }
}

fn lex(chars: &[char]) -> Result<Vec<(Tok, usize)>, ParseError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        let tok = match c {
            '+' => Tok::Plus,
            '-' => Tok::Minus,
            '*' => Tok::Star,
            '/' => Tok::Slash,
            '^' => Tok::Caret,
            '(' => Tok::LParen,
            ')' => Tok::RParen,
            c if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < chars.len() && chars[j].is_ascii_digit() {
                    j += 1;
                }
                if j < chars.len() && chars[j] == '.' {
                    j += 1;
                    while j < chars.len() && chars[j].is_ascii_digit() {
                        j += 1;
                    }
                }
                // exponent only when digits follow, so `2*e` style stays unambiguous
                if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                    let mut k = j + 1;
                    if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                        k += 1;
                    }
                    if k < chars.len() && chars[k].is_ascii_digit() {
                        while k < chars.len() && chars[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text: String = chars[i..j].iter().collect();
                let v: f64 = text.parse().map_err(|_| ParseError {
                    position: start,
                    message: format!("malformed number `{text}`"),
                })?;
                i = j;
                out.push((Tok::Num(v), start));
                continue;
            }
            c if c.is_alphabetic() || c == '_' => {
                let mut j = i;
                while j < chars.len() && (chars[j].is_alphanumeric() || chars[j] == '_') {
                    j += 1;
                }
                let name: String = chars[i..j].iter().collect();
                i = j;
                out.push((Tok::Ident(name), start));
                continue;
            }
            other => {
                return Err(ParseError {
                    position: start,
                    message: format!("unexpected character `{other}`"),
                })
            }
        };
        out.push((tok, start));
        i += 1;
    }
    out.push((Tok::End, chars.len().saturating_sub(1)));
    Ok(out)
}

// ---------------------------------------------------------------- parsing

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    vars: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn error<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError {
            position: self.pos(),
            message: message.into(),
        })
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Star => BinOp::Mul,
                Tok::Slash => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.unary()?;
            return Ok(Expr::Unary(Func::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Caret {
            self.bump();
            let exp = self.exponent()?;
            return Ok(Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn exponent(&mut self) -> Result<Expr, ParseError> {
        if *self.peek() == Tok::Minus {
            self.bump();
            let inner = self.exponent()?;
            return Ok(Expr::Unary(Func::Neg, Box::new(inner)));
        }
        self.power()
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(v) => {
                self.bump();
                Ok(Expr::Number(v))
            }
            Tok::LParen => {
                self.bump();
                let inner = self.expr()?;
                if *self.peek() != Tok::RParen {
                    return self.error(format!("expected ')', found {}", describe(self.peek())));
                }
                self.bump();
                Ok(inner)
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(f) = Func::from_name(&name) {
                    if *self.peek() != Tok::LParen {
                        return self.error(format!("function `{name}` needs an argument in parentheses"));
                    }
                    self.bump();
                    let arg = self.expr()?;
                    if *self.peek() != Tok::RParen {
                        return self.error(format!("expected ')', found {}", describe(self.peek())));
                    }
                    self.bump();
                    return Ok(Expr::Unary(f, Box::new(arg)));
                }
                if self.vars.contains(&name.as_str()) {
                    return Ok(Expr::Variable(name));
                }
                match name.as_str() {
                    "pi" => Ok(Expr::Const(Constant::Pi)),
                    "e" => Ok(Expr::Const(Constant::E)),
                    _ => Err(ParseError {
                        position: pos,
                        message: format!("unknown identifier `{name}`"),
                    }),
                }
            }
            other => self.error(format!("unexpected {}", describe(&other))),
        }
    }
}

// ---------------------------------------------------------------- smart constructors

fn as_const(e: &Expr) -> Option<f64> {
    match e {
        Expr::Number(v) => Some(*v),
        Expr::Unary(Func::Neg, inner) => match **inner {
            Expr::Number(v) => Some(-v),
            _ => None,
        },
        _ => None,
    }
}

/// Number node with the sign carried by a `Neg` so printing reparses to
/// the same tree.
pub fn num(v: f64) -> Expr {
    if v < 0.0 {
        Expr::Unary(Func::Neg, Box::new(Expr::Number(-v)))
    } else {
        Expr::Number(v)
    }
}

fn is_val(e: &Expr, v: f64) -> bool {
    as_const(e) == Some(v)
}

fn fold(v: f64) -> Option<Expr> {
    v.is_finite().then(|| num(v))
}

pub fn add(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if let Some(e) = fold(x + y) {
            return e;
        }
    }
    if is_val(&a, 0.0) {
        return b;
    }
    if is_val(&b, 0.0) {
        return a;
    }
    if let Some(c) = as_const(&b).filter(|c| *c < 0.0) {
        return Expr::Binary(BinOp::Sub, Box::new(a), Box::new(Expr::Number(-c)));
    }
    Expr::Binary(BinOp::Add, Box::new(a), Box::new(b))
}

pub fn sub(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if let Some(e) = fold(x - y) {
            return e;
        }
    }
    if is_val(&b, 0.0) {
        return a;
    }
    if is_val(&a, 0.0) {
        return neg(b);
    }
    Expr::Binary(BinOp::Sub, Box::new(a), Box::new(b))
}

pub fn mul(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if let Some(e) = fold(x * y) {
            return e;
        }
    }
    if is_val(&a, 0.0) || is_val(&b, 0.0) {
        return Expr::Number(0.0);
    }
    if is_val(&a, 1.0) {
        return b;
    }
    if is_val(&b, 1.0) {
        return a;
    }
    if is_val(&a, -1.0) {
        return neg(b);
    }
    if is_val(&b, -1.0) {
        return neg(a);
    }
    Expr::Binary(BinOp::Mul, Box::new(a), Box::new(b))
}

pub fn div(a: Expr, b: Expr) -> Expr {
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if y != 0.0 {
            if let Some(e) = fold(x / y) {
                return e;
            }
        }
    }
    if is_val(&b, 1.0) {
        return a;
    }
    if is_val(&a, 0.0) && !is_val(&b, 0.0) {
        return Expr::Number(0.0);
    }
    Expr::Binary(BinOp::Div, Box::new(a), Box::new(b))
}

pub fn pow(a: Expr, b: Expr) -> Expr {
    if is_val(&b, 0.0) {
        return Expr::Number(1.0);
    }
    if is_val(&b, 1.0) {
        return a;
    }
    if let (Some(x), Some(y)) = (as_const(&a), as_const(&b)) {
        if let Ok(v) = eval_pow(x, y) {
            if let Some(e) = fold(v) {
                return e;
            }
        }
    }
    Expr::Binary(BinOp::Pow, Box::new(a), Box::new(b))
}

pub fn neg(a: Expr) -> Expr {
    match a {
        Expr::Number(v) if v == 0.0 => Expr::Number(0.0),
        Expr::Number(v) => num(-v),
        Expr::Unary(Func::Neg, inner) => *inner,
        other => Expr::Unary(Func::Neg, Box::new(other)),
    }
}

pub fn call(f: Func, a: Expr) -> Expr {
    if f == Func::Neg {
        return neg(a);
    }
    if let Some(x) = as_const(&a) {
        if let Ok(v) = f.apply(x) {
            if let Some(e) = fold(v) {
                return e;
            }
        }
    }
    Expr::Unary(f, Box::new(a))
}

fn eval_pow(base: f64, exp: f64) -> Result<f64, EvalError> {
    if base == 0.0 && exp < 0.0 {
        return Err(EvalError::domain("^", base));
    }
    if base < 0.0 && exp.fract() != 0.0 {
        return Err(EvalError::domain("^", base));
    }
    Ok(base.powf(exp))
}

// ---------------------------------------------------------------- API

impl Expr {
    /// Parses `text`, accepting only the names in `variables` plus `pi`/`e`.
    pub fn parse(text: &str, variables: &[&str]) -> Result<Expr, ParseError> {
        let chars: Vec<char> = text.chars().collect();
        if chars.iter().all(|c| c.is_whitespace()) {
            return Err(ParseError {
                position: 0,
                message: "empty expression".into(),
            });
        }
        let toks = lex(&chars)?;
        let mut p = Parser {
            toks,
            at: 0,
            vars: variables,
        };
        let e = p.expr()?;
        if *p.peek() != Tok::End {
            return p.error(format!("unexpected {}", describe(p.peek())));
        }
        Ok(e)
    }

    pub fn var(name: &str) -> Expr {
        Expr::Variable(name.to_string())
    }

    /// IEEE double evaluation. Out-of-domain arguments are errors rather
    /// than NaN.
    pub fn eval(&self, bindings: &[(&str, f64)]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Number(v) => *v,
            Expr::Const(c) => c.value(),
            Expr::Variable(name) => bindings
                .iter()
                .find(|(n, _)| *n == name)
                .map(|(_, v)| *v)
                .ok_or_else(|| EvalError::UnboundVariable(name.clone()))?,
            Expr::Unary(f, a) => f.apply(a.eval(bindings)?)?,
            Expr::Binary(op, a, b) => {
                let x = a.eval(bindings)?;
                let y = b.eval(bindings)?;
                match op {
                    BinOp::Add => x + y,
                    BinOp::Sub => x - y,
                    BinOp::Mul => x * y,
                    BinOp::Div => {
                        if y == 0.0 {
                            return Err(EvalError::domain("/", x));
                        }
                        x / y
                    }
                    BinOp::Pow => eval_pow(x, y)?,
                }
            }
        };
        if v.is_nan() {
            return Err(EvalError::domain("nan", v));
        }
        Ok(v)
    }

    /// Evaluates an expression in the single variable `x`.
    pub fn at(&self, x: f64) -> Result<f64, EvalError> {
        self.eval(&[("x", x)])
    }

    /// Exact derivative by structural recursion, lightly simplified.
    /// `abs` differentiates to `sign` and `sign` to 0; both are only valid
    /// away from the kink at 0.
    pub fn differentiate(&self, var: &str) -> Expr {
        match self {
            Expr::Number(_) | Expr::Const(_) => Expr::Number(0.0),
            Expr::Variable(n) => Expr::Number(if n == var { 1.0 } else { 0.0 }),
            Expr::Unary(f, a) => {
                let u = (**a).clone();
                let du = a.differentiate(var);
                if is_val(&du, 0.0) {
                    return Expr::Number(0.0);
                }
                match f {
                    Func::Neg => neg(du),
                    Func::Exp => mul(call(Func::Exp, u), du),
                    Func::Ln => div(du, u),
                    Func::Sin => mul(call(Func::Cos, u), du),
                    Func::Cos => neg(mul(call(Func::Sin, u), du)),
                    Func::Tan => div(du, pow(call(Func::Cos, u), num(2.0))),
                    Func::Atan => div(du, add(num(1.0), pow(u, num(2.0)))),
                    Func::Sqrt => div(du, mul(num(2.0), call(Func::Sqrt, u))),
                    Func::Abs => mul(call(Func::Sign, u), du),
                    Func::Sign => Expr::Number(0.0),
                }
            }
            Expr::Binary(op, a, b) => {
                let (u, v) = ((**a).clone(), (**b).clone());
                let du = a.differentiate(var);
                let dv = b.differentiate(var);
                match op {
                    BinOp::Add => add(du, dv),
                    BinOp::Sub => sub(du, dv),
                    BinOp::Mul => add(mul(du, v), mul(u, dv)),
                    BinOp::Div => div(sub(mul(du, v.clone()), mul(u, dv)), pow(v, num(2.0))),
                    BinOp::Pow => {
                        if !b.contains_var(var) {
                            mul(mul(v.clone(), pow(u, sub(v, num(1.0)))), du)
                        } else if !a.contains_var(var) {
                            mul(mul(pow(u.clone(), v), call(Func::Ln, u)), dv)
                        } else {
                            mul(
                                pow(u.clone(), v.clone()),
                                add(mul(dv, call(Func::Ln, u.clone())), div(mul(v, du), u)),
                            )
                        }
                    }
                }
            }
        }
    }

    pub fn contains_var(&self, var: &str) -> bool {
        match self {
            Expr::Number(_) | Expr::Const(_) => false,
            Expr::Variable(n) => n == var,
            Expr::Unary(_, a) => a.contains_var(var),
            Expr::Binary(_, a, b) => a.contains_var(var) || b.contains_var(var),
        }
    }

    pub fn variables(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut BTreeSet<String>) {
        match self {
            Expr::Number(_) | Expr::Const(_) => {}
            Expr::Variable(n) => {
                out.insert(n.clone());
            }
            Expr::Unary(_, a) => a.collect_vars(out),
            Expr::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// True when the tree has no variables at all.
    pub fn is_constant(&self) -> bool {
        self.variables().is_empty()
    }

    /// Replaces each bound variable by its value and folds constants.
    pub fn substitute(&self, bindings: &[(&str, f64)]) -> Expr {
        match self {
            Expr::Variable(n) => match bindings.iter().find(|(b, _)| b == n) {
                Some((_, v)) => num(*v),
                None => self.clone(),
            },
            Expr::Number(_) | Expr::Const(_) => self.clone(),
            Expr::Unary(f, a) => call(*f, a.substitute(bindings)),
            Expr::Binary(op, a, b) => rebuild(*op, a.substitute(bindings), b.substitute(bindings)),
        }
    }

    /// Replaces a variable by another expression.
    pub fn replace(&self, var: &str, with: &Expr) -> Expr {
        match self {
            Expr::Variable(n) if n == var => with.clone(),
            Expr::Variable(_) | Expr::Number(_) | Expr::Const(_) => self.clone(),
            Expr::Unary(f, a) => Expr::Unary(*f, Box::new(a.replace(var, with))),
            Expr::Binary(op, a, b) => Expr::Binary(*op, Box::new(a.replace(var, with)), Box::new(b.replace(var, with))),
        }
    }

    /// Constant folding and identity removal (`0+u`, `1*u`, `u^1`, ...).
    pub fn simplify(&self) -> Expr {
        match self {
            Expr::Number(_) | Expr::Const(_) | Expr::Variable(_) => self.clone(),
            Expr::Unary(f, a) => call(*f, a.simplify()),
            Expr::Binary(op, a, b) => rebuild(*op, a.simplify(), b.simplify()),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 1,
            Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 2,
            Expr::Unary(Func::Neg, _) => 3,
            Expr::Binary(BinOp::Pow, ..) => 4,
            _ => 5,
        }
    }
}

fn rebuild(op: BinOp, a: Expr, b: Expr) -> Expr {
    match op {
        BinOp::Add => add(a, b),
        BinOp::Sub => sub(a, b),
        BinOp::Mul => mul(a, b),
        BinOp::Div => div(a, b),
        BinOp::Pow => pow(a, b),
    }
}

fn write_child(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    if e.precedence() < min {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Number(v) => {
                if *v < 0.0 {
                    write!(f, "(-{})", -v)
                } else {
                    write!(f, "{v}")
                }
            }
            Expr::Const(Constant::Pi) => f.write_str("pi"),
            Expr::Const(Constant::E) => f.write_str("e"),
            Expr::Variable(n) => f.write_str(n),
            Expr::Unary(Func::Neg, a) => {
                f.write_str("-")?;
                write_child(f, a, 3)
            }
            Expr::Unary(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Binary(op, a, b) => {
                let (sym, lmin, rmin) = match op {
                    BinOp::Add => (" + ", 1, 2),
                    BinOp::Sub => (" - ", 1, 2),
                    BinOp::Mul => ("*", 2, 3),
                    BinOp::Div => ("/", 2, 3),
                    BinOp::Pow => ("^", 5, 3),
                };
                write_child(f, a, lmin)?;
                f.write_str(sym)?;
                write_child(f, b, rmin)
            }
        }
    }
}
