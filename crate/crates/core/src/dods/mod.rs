//! Delay ordinary differential systems: a first-order DODE `ẏ = f(x, y, y₋)`
//! paired with a delay relation `x₋ = g(x)`.

pub mod catalog;
pub mod specfile;

use std::fmt;

use thiserror::Error;

use crate::delay::{DelayError, DelayRelation};
use crate::expr::{self, EvalError, Expr};

/// Variables of the right-hand side `f`.
pub const RHS_VARS: [&str; 3] = ["x", "y", "ym"];
/// Variables of the jet space: `x, y, x₋, y₋, ẏ`.
pub const JET_VARS: [&str; 5] = ["x", "y", "xm", "ym", "yd"];

const SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DodsError {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("the delayed term vanishes identically (df/dym == 0 on all samples)")]
    NoDelayedTerm,
    #[error("invalid domain ({lo}, {hi})")]
    InvalidDomain { lo: f64, hi: f64 },
    #[error("expression uses `{0}`, which is not allowed here")]
    ForeignVariable(String),
    #[error("operation needs a linear right-hand side")]
    NotLinear,
}

/// Right-hand side of the DODE.
#[derive(Debug, Clone, PartialEq)]
pub enum Rhs {
    /// `ẏ = f(x, y, ym)`.
    General { f: Expr },
    /// `ẏ = α(x)·y + β(x)·y₋ + γ(x)`.
    Linear { alpha: Expr, beta: Expr, gamma: Expr },
    /// `ẏ = c(x)·(y − y₋)/(x − x₋) + γ(x)`, the form every catalog case takes.
    DifferenceQuotient { coef: Expr, forcing: Expr },
}

/// Open interval of admissible x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self, DodsError> {
        if lo.is_nan() || hi.is_nan() || !(lo < hi) {
            return Err(DodsError::InvalidDomain { lo, hi });
        }
        Ok(Interval { lo, hi })
    }

    pub fn all() -> Self {
        Interval {
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
        }
    }

    pub fn positive() -> Self {
        Interval { lo: 0.0, hi: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lo && x < self.hi
    }

    /// Finite closed window inside the interval used for random sampling.
    pub fn sample_window(&self) -> (f64, f64) {
        match (self.lo.is_finite(), self.hi.is_finite()) {
            (false, false) => (-3.0, 3.0),
            (true, false) => (self.lo + 0.1, self.lo + 4.1),
            (false, true) => (self.hi - 4.1, self.hi - 0.1),
            (true, true) => {
                let m = 0.05 * (self.hi - self.lo);
                (self.lo + m, self.hi - m)
            }
        }
    }

    /// `n` evenly spaced points of the sample window.
    pub fn grid(&self, n: usize) -> Vec<f64> {
        let (a, b) = self.sample_window();
        if n <= 1 {
            return vec![0.5 * (a + b)];
        }
        (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect()
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let show = |v: f64| {
            if v == f64::INFINITY {
                "inf".to_string()
            } else if v == f64::NEG_INFINITY {
                "-inf".to_string()
            } else {
                v.to_string()
            }
        };
        write!(f, "({}, {})", show(self.lo), show(self.hi))
    }
}

/// A DODS with its residuals `F₁ = ẏ − f`, `F₂ = x₋ − g(x)` and their
/// first partials precomputed.
#[derive(Debug, Clone)]
pub struct Dods {
    rhs: Rhs,
    delay: DelayRelation,
    domain: Interval,
    /// F₁ over the jet variables, with x₋ kept independent.
    f1: Expr,
    /// ∂F₁ with respect to each jet variable, in `JET_VARS` order.
    f1_partials: [Expr; 5],
    /// f over (x, y, ym) with x₋ = g(x) substituted.
    f: Expr,
    /// ∂f/∂x, ∂f/∂y, ∂f/∂ym of the substituted f.
    f_partials: [Expr; 3],
}

fn check_vars(e: &Expr, allowed: &[&str]) -> Result<(), DodsError> {
    match e.variables().into_iter().find(|v| !allowed.contains(&v.as_str())) {
        Some(v) => Err(DodsError::ForeignVariable(v)),
        None => Ok(()),
    }
}

fn parse_jet(text: &str) -> Expr {
    Expr::parse(text, &JET_VARS).expect("jet templates are well formed")
}

impl Dods {
    pub fn new(rhs: Rhs, delay: DelayRelation, domain: Interval) -> Result<Self, DodsError> {
        let (f1, f) = match &rhs {
            Rhs::General { f } => {
                check_vars(f, &RHS_VARS)?;
                (expr::sub(Expr::var("yd"), f.clone()), f.clone())
            }
            Rhs::Linear { alpha, beta, gamma } => {
                for e in [alpha, beta, gamma] {
                    check_vars(e, &["x"])?;
                }
                let f = parse_jet(&format!("({alpha})*y + ({beta})*ym + ({gamma})"));
                (expr::sub(Expr::var("yd"), f.clone()), f)
            }
            Rhs::DifferenceQuotient { coef, forcing } => {
                check_vars(coef, &["x"])?;
                check_vars(forcing, &["x"])?;
                let f1 = parse_jet(&format!("yd - ({coef})*(y - ym)/(x - xm) - ({forcing})"));
                let f = parse_jet(&format!("({coef})*(y - ym)/({}) + ({forcing})", delay.delta_expr()));
                (f1, f)
            }
        };
        let f1 = f1.simplify();
        let f = f.simplify();
        let f1_partials = JET_VARS.map(|v| f1.differentiate(v));
        let f_partials = RHS_VARS.map(|v| f.differentiate(v));
        let d = Dods {
            rhs,
            delay,
            domain,
            f1,
            f1_partials,
            f,
            f_partials,
        };
        d.validate()?;
        Ok(d)
    }

    fn validate(&self) -> Result<(), DodsError> {
        let mut seen_delay_term = false;
        for x in self.domain.grid(SAMPLES) {
            self.delay.delayed_point(x)?;
            if !seen_delay_term {
                for (y, ym) in [(0.3, -0.7), (1.1, 0.4)] {
                    if let Ok(v) = self.f_partials[2].eval(&[("x", x), ("y", y), ("ym", ym)]) {
                        if v.abs() > 1e-14 {
                            seen_delay_term = true;
                        }
                    }
                }
            }
        }
        if !seen_delay_term {
            return Err(DodsError::NoDelayedTerm);
        }
        Ok(())
    }

    pub fn rhs(&self) -> &Rhs {
        &self.rhs
    }

    pub fn delay(&self) -> &DelayRelation {
        &self.delay
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    /// F₁ as an expression over `JET_VARS`.
    pub fn f1(&self) -> &Expr {
        &self.f1
    }

    /// ∂F₁/∂v for v in `JET_VARS` order.
    pub fn f1_partials(&self) -> &[Expr; 5] {
        &self.f1_partials
    }

    /// `(r1, r2) = (ẏ − f(x, y, y₋), x₋ − g(x))`.
    pub fn residual(&self, x: f64, y: f64, xm: f64, ym: f64, ydot: f64) -> Result<(f64, f64), DodsError> {
        let r1 = self.f1.eval(&jet(x, y, xm, ym, ydot))?;
        let r2 = xm - self.delay.delayed_point(x)?;
        Ok((r1, r2))
    }

    /// ∂F₂/∂x and ∂F₂/∂x₋ at x.
    pub fn f2_partials(&self, x: f64) -> Result<(f64, f64), DodsError> {
        Ok((-self.delay.derivative(x)?, 1.0))
    }

    /// `f(x, y, y₋)` with `x₋ = g(x)`.
    pub fn rhs_value(&self, x: f64, y: f64, ym: f64) -> Result<f64, DodsError> {
        Ok(self.f.eval(&[("x", x), ("y", y), ("ym", ym)])?)
    }

    /// `(∂f/∂x, ∂f/∂y, ∂f/∂y₋)` with `x₋ = g(x)` substituted before differentiating.
    pub fn rhs_partials(&self, x: f64, y: f64, ym: f64) -> Result<[f64; 3], DodsError> {
        let b = [("x", x), ("y", y), ("ym", ym)];
        Ok([
            self.f_partials[0].eval(&b)?,
            self.f_partials[1].eval(&b)?,
            self.f_partials[2].eval(&b)?,
        ])
    }

    /// `(α, β, γ)` of the linear form, if the right-hand side is linear.
    pub fn linear_coeffs(&self) -> Option<(Expr, Expr, Expr)> {
        match &self.rhs {
            Rhs::General { .. } => None,
            Rhs::Linear { alpha, beta, gamma } => Some((alpha.clone(), beta.clone(), gamma.clone())),
            Rhs::DifferenceQuotient { coef, forcing } => {
                let alpha = expr::div(coef.clone(), self.delay.delta_expr());
                let beta = expr::neg(alpha.clone());
                Some((alpha, beta, forcing.clone()))
            }
        }
    }

    pub fn is_linear(&self) -> bool {
        !matches!(self.rhs, Rhs::General { .. })
    }

    /// True for linear systems whose forcing term is the literal zero.
    pub fn is_homogeneous(&self) -> bool {
        match &self.rhs {
            Rhs::General { .. } => false,
            Rhs::Linear { gamma, .. } => gamma.simplify() == Expr::Number(0.0),
            Rhs::DifferenceQuotient { forcing, .. } => forcing.simplify() == Expr::Number(0.0),
        }
    }

    /// The same system with the forcing term removed.
    pub fn homogeneous(&self) -> Result<Dods, DodsError> {
        let zero = Expr::Number(0.0);
        let rhs = match &self.rhs {
            Rhs::General { .. } => return Err(DodsError::NotLinear),
            Rhs::Linear { alpha, beta, .. } => Rhs::Linear {
                alpha: alpha.clone(),
                beta: beta.clone(),
                gamma: zero,
            },
            Rhs::DifferenceQuotient { coef, .. } => Rhs::DifferenceQuotient {
                coef: coef.clone(),
                forcing: zero,
            },
        };
        Dods::new(rhs, self.delay.clone(), self.domain)
    }

    /// Invariance under x-translation: constant delay and no explicit x.
    pub fn is_autonomous(&self) -> bool {
        matches!(self.delay, DelayRelation::Constant { .. }) && !self.f.contains_var("x")
    }

    /// Deterministic sample grid over the domain.
    pub fn sample_points(&self, n: usize) -> Vec<f64> {
        self.domain.grid(n)
    }
}

impl fmt::Display for Dods {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.rhs {
            Rhs::General { f: rhs } => write!(f, "y' = {rhs}")?,
            Rhs::Linear { alpha, beta, gamma } => write!(f, "y' = ({alpha})*y + ({beta})*ym + ({gamma})")?,
            Rhs::DifferenceQuotient { coef, forcing } => {
                write!(f, "y' = ({coef})*(y - ym)/(x - xm)")?;
                if *forcing != Expr::Number(0.0) {
                    write!(f, " + {forcing}")?;
                }
            }
        }
        write!(f, ", xm = {}, x in {}", self.delay.g_expr(), self.domain)
    }
}

/// Bindings for a jet point.
pub fn jet(x: f64, y: f64, xm: f64, ym: f64, yd: f64) -> [(&'static str, f64); 5] {
    [("x", x), ("y", y), ("xm", xm), ("ym", ym), ("yd", yd)]
}

/// Initial function φ on `[x₋₁, x₀]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialCondition {
    pub phi: Expr,
    pub x_minus1: f64,
    pub x0: f64,
}

impl InitialCondition {
    pub fn new(phi: Expr, x0: f64, delay: &DelayRelation) -> Result<Self, DodsError> {
        check_vars(&phi, &["x"])?;
        let x_minus1 = delay.delayed_point(x0)?;
        Ok(InitialCondition { phi, x_minus1, x0 })
    }
}
