//! Delay relations `x₋ = g(x)` and the interval sequences they induce.

use std::fmt;

use thiserror::Error;

use crate::expr::{literal, EvalError, Expr};

/// Relative tolerance used when checking `g(x_{n+1}) = x_n` on a mesh.
pub const MESH_TOL: f64 = 1e-12;

const GUARD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DelayError {
    #[error("invalid delay parameter: {0}")]
    InvalidParameter(String),
    #[error("delay condition violated at x = {x}: {reason}")]
    Domain { x: f64, reason: String },
    #[error("no forward point from x = {x}: {reason}")]
    NoForwardPoint { x: f64, reason: String },
    #[error("delay map is not increasing on [{lo}, {hi}]")]
    NotMonotone { lo: f64, hi: f64 },
    #[error("mesh needs at least one interval")]
    EmptyMesh,
    #[error("mesh invariant broken between {a} and {b}")]
    BrokenMesh { a: f64, b: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// `x₋ = g(x)` in one of the closed-form families or as a user expression.
#[derive(Debug, Clone, PartialEq)]
pub enum DelayRelation {
    /// `x₋ = x − τ`, τ > 0.
    Constant { tau: f64 },
    /// `x₋ = q·x − τ`, q > 0, (q, τ) ≠ (1, 0).
    Affine { q: f64, tau: f64 },
    /// `x₋ = q·x`, 0 < q < 1.
    QScale { q: f64 },
    /// `x₋ = (x − C)/(1 + C·x)`, C ≠ 0.
    Moebius { c: f64 },
    /// `x₋ = g(x)` with g strictly increasing where used.
    General { g: Expr, dg: Expr },
}

impl DelayRelation {
    pub fn constant(tau: f64) -> Result<Self, DelayError> {
        if !(tau > 0.0) || !tau.is_finite() {
            return Err(DelayError::InvalidParameter(format!("constant delay needs tau > 0, got {tau}")));
        }
        Ok(DelayRelation::Constant { tau })
    }

    pub fn affine(q: f64, tau: f64) -> Result<Self, DelayError> {
        if !(q > 0.0) || !q.is_finite() || !tau.is_finite() {
            return Err(DelayError::InvalidParameter(format!("affine delay needs q > 0, got q = {q}")));
        }
        if q == 1.0 && tau == 0.0 {
            return Err(DelayError::InvalidParameter("affine delay with q = 1, tau = 0 is no delay".into()));
        }
        Ok(DelayRelation::Affine { q, tau })
    }

    pub fn qscale(q: f64) -> Result<Self, DelayError> {
        if !(q > 0.0 && q < 1.0) {
            return Err(DelayError::InvalidParameter(format!("q-delay needs 0 < q < 1, got {q}")));
        }
        Ok(DelayRelation::QScale { q })
    }

    pub fn moebius(c: f64) -> Result<Self, DelayError> {
        if c == 0.0 || !c.is_finite() {
            return Err(DelayError::InvalidParameter(format!("Moebius delay needs C != 0, got {c}")));
        }
        Ok(DelayRelation::Moebius { c })
    }

    pub fn general(g: Expr) -> Result<Self, DelayError> {
        if let Some(bad) = g.variables().into_iter().find(|v| v != "x") {
            return Err(DelayError::InvalidParameter(format!("delay map may only use x, found `{bad}`")));
        }
        let dg = g.differentiate("x");
        Ok(DelayRelation::General { g, dg })
    }

    /// `(q, τ)` for the affine family `x₋ = q·x − τ`, if this is one of them.
    pub fn affine_params(&self) -> Option<(f64, f64)> {
        match *self {
            DelayRelation::Constant { tau } => Some((1.0, tau)),
            DelayRelation::Affine { q, tau } => Some((q, tau)),
            DelayRelation::QScale { q } => Some((q, 0.0)),
            _ => None,
        }
    }

    fn raw(&self, x: f64) -> Result<f64, DelayError> {
        Ok(match self {
            DelayRelation::Constant { tau } => x - tau,
            DelayRelation::Affine { q, tau } => q * x - tau,
            DelayRelation::QScale { q } => q * x,
            DelayRelation::Moebius { c } => {
                let den = 1.0 + c * x;
                if den == 0.0 || c / den <= 0.0 {
                    return Err(DelayError::Domain {
                        x,
                        reason: format!("Moebius validity C/(1 + Cx) > 0 fails for C = {c}"),
                    });
                }
                (x - c) / den
            }
            DelayRelation::General { g, .. } => g.at(x)?,
        })
    }

    /// `g(x)`, checked against the delay condition `g(x) < x`.
    pub fn delayed_point(&self, x: f64) -> Result<f64, DelayError> {
        let xm = self.raw(x)?;
        if !(xm < x) {
            return Err(DelayError::Domain {
                x,
                reason: format!("g(x) = {xm} is not below x"),
            });
        }
        Ok(xm)
    }

    /// `x − g(x)`.
    pub fn delta(&self, x: f64) -> Result<f64, DelayError> {
        Ok(match self {
            DelayRelation::Constant { tau } => *tau,
            DelayRelation::Affine { q, tau } => (1.0 - q) * x + tau,
            DelayRelation::QScale { q } => (1.0 - q) * x,
            DelayRelation::Moebius { c } => {
                self.raw(x)?;
                c * (1.0 + x * x) / (1.0 + c * x)
            }
            DelayRelation::General { g, .. } => x - g.at(x)?,
        })
    }

    /// `g'(x)`.
    pub fn derivative(&self, x: f64) -> Result<f64, DelayError> {
        Ok(match self {
            DelayRelation::Constant { .. } => 1.0,
            DelayRelation::Affine { q, .. } | DelayRelation::QScale { q } => *q,
            DelayRelation::Moebius { c } => {
                let den = 1.0 + c * x;
                (1.0 + c * c) / (den * den)
            }
            DelayRelation::General { dg, .. } => dg.at(x)?,
        })
    }

    /// `g` as an expression in `x`.
    pub fn g_expr(&self) -> Expr {
        let text = match self {
            DelayRelation::Constant { tau } => format!("x - {}", literal(*tau)),
            DelayRelation::Affine { q, tau } => format!("{}*x - {}", literal(*q), literal(*tau)),
            DelayRelation::QScale { q } => format!("{}*x", literal(*q)),
            DelayRelation::Moebius { c } => format!("(x - {c})/(1 + {c}*x)", c = literal(*c)),
            DelayRelation::General { g, .. } => return g.clone(),
        };
        Expr::parse(&text, &["x"]).expect("delay templates are well formed")
    }

    /// `Δx = x − g(x)` as an expression in `x`, in the simplest closed form.
    pub fn delta_expr(&self) -> Expr {
        let text = match self {
            DelayRelation::Constant { tau } => literal(*tau),
            DelayRelation::Affine { q, tau } => format!("{}*x + {}", literal(1.0 - q), literal(*tau)),
            DelayRelation::QScale { q } => format!("{}*x", literal(1.0 - q)),
            DelayRelation::Moebius { c } => format!("{c}*(1 + x^2)/(1 + {c}*x)", c = literal(*c)),
            DelayRelation::General { g, .. } => format!("x - ({g})"),
        };
        Expr::parse(&text, &["x"]).expect("delay templates are well formed")
    }

    /// The forward point `x⁺` with `g(x⁺) = x`.
    pub fn advance(&self, x: f64) -> Result<f64, DelayError> {
        let fwd = match self {
            DelayRelation::Constant { tau } => x + tau,
            DelayRelation::Affine { q, tau } => (x + tau) / q,
            DelayRelation::QScale { q } => x / q,
            DelayRelation::Moebius { c } => {
                let den = 1.0 - c * x;
                if den.abs() <= GUARD {
                    return Err(DelayError::NoForwardPoint {
                        x,
                        reason: "pole of the inverse Moebius map (1 - Cx = 0)".into(),
                    });
                }
                (x + c) / den
            }
            DelayRelation::General { g, .. } => return self.advance_general(g, x),
        };
        if !(fwd > x) || !fwd.is_finite() || self.delayed_point(fwd).is_err() {
            return Err(DelayError::NoForwardPoint {
                x,
                reason: format!("inverse map gives {fwd}, which is not a valid point beyond x"),
            });
        }
        Ok(fwd)
    }

    fn advance_general(&self, g: &Expr, x: f64) -> Result<f64, DelayError> {
        let eval = |t: f64| {
            g.at(t).map_err(|e| DelayError::NoForwardPoint {
                x,
                reason: format!("g undefined at {t}: {e}"),
            })
        };
        let lo0 = x;
        let g_lo = eval(lo0)?;
        if !(g_lo < x) {
            return Err(DelayError::Domain {
                x,
                reason: format!("g(x) = {g_lo} is not below x"),
            });
        }
        let mut width = 1.0;
        let mut hi = x + width;
        let mut g_hi = eval(hi)?;
        let mut doublings = 0;
        while g_hi < x {
            if g_hi < g_lo {
                return Err(DelayError::NotMonotone { lo: lo0, hi });
            }
            doublings += 1;
            if doublings > 60 {
                return Err(DelayError::NoForwardPoint {
                    x,
                    reason: format!("no bracket found up to x + {width}"),
                });
            }
            width *= 2.0;
            hi = x + width;
            g_hi = eval(hi)?;
        }
        let mut lo = lo0;
        let mut g_l = g_lo;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            let gm = eval(mid)?;
            if gm < g_l || gm > g_hi {
                return Err(DelayError::NotMonotone { lo, hi });
            }
            if gm < x {
                lo = mid;
                g_l = gm;
            } else {
                hi = mid;
                g_hi = gm;
            }
        }
        // pick the endpoint whose image is closer to x
        let fwd = if (g_hi - x).abs() <= (x - g_l).abs() { hi } else { lo };
        if !(fwd > x) {
            return Err(DelayError::NoForwardPoint {
                x,
                reason: "bisection collapsed onto x".into(),
            });
        }
        Ok(fwd)
    }

    /// Mesh `[g(x0), x0, x1, …, x_N]`. Fails rather than truncating.
    pub fn build_mesh(&self, x0: f64, n: usize) -> Result<Mesh, DelayError> {
        if n == 0 {
            return Err(DelayError::EmptyMesh);
        }
        let mut points = Vec::with_capacity(n + 2);
        points.push(self.delayed_point(x0)?);
        points.push(x0);
        let mut x = x0;
        for _ in 0..n {
            x = self.advance(x)?;
            points.push(x);
        }
        Mesh::new(points, self.clone())
    }
}

impl fmt::Display for DelayRelation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DelayRelation::Constant { tau } => write!(f, "constant({tau})"),
            DelayRelation::Affine { q, tau } => write!(f, "affine({q}, {tau})"),
            DelayRelation::QScale { q } => write!(f, "qscale({q})"),
            DelayRelation::Moebius { c } => write!(f, "moebius({c})"),
            DelayRelation::General { g, .. } => write!(f, "general(\"{g}\")"),
        }
    }
}

/// `x_n` for the affine relation `x₋ = q·x − τ` started at `x0`, without
/// iterating. `n` may be negative (`n = −1` gives `g(x0)`).
pub fn closed_form_point(rel: &DelayRelation, x0: f64, n: i32) -> Option<f64> {
    let (q, tau) = rel.affine_params()?;
    if q == 1.0 {
        return Some(x0 + n as f64 * tau);
    }
    // q^{-n} - 1, accurate also for q close to 1
    let r = (-(n as f64) * (q - 1.0).ln_1p()).exp_m1();
    Some(x0 + x0 * r + tau * r / (1.0 - q))
}

/// Parses the textual form used on the command line and in spec files:
/// `constant(τ)`, `affine(q, τ)`, `qscale(q)`, `moebius(C)`, `general("g")`.
pub fn parse_relation(text: &str) -> Result<DelayRelation, DelayError> {
    let text = text.trim();
    let bad = |why: &str| DelayError::InvalidParameter(format!("cannot read delay `{text}`: {why}"));
    let open = text.find('(').ok_or_else(|| bad("expected name(args)"))?;
    if !text.ends_with(')') {
        return Err(bad("missing closing parenthesis"));
    }
    let name = text[..open].trim();
    let inner = text[open + 1..text.len() - 1].trim();
    let number = |s: &str| -> Result<f64, DelayError> {
        let e = Expr::parse(s.trim(), &[]).map_err(|e| bad(&e.to_string()))?;
        Ok(e.eval(&[])?)
    };
    let args: Vec<&str> = inner.split(',').collect();
    let want = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(bad(&format!("expected {n} argument(s)")))
        }
    };
    match name {
        "constant" => {
            want(1)?;
            DelayRelation::constant(number(args[0])?)
        }
        "affine" => {
            want(2)?;
            DelayRelation::affine(number(args[0])?, number(args[1])?)
        }
        "qscale" => {
            want(1)?;
            DelayRelation::qscale(number(args[0])?)
        }
        "moebius" => {
            want(1)?;
            DelayRelation::moebius(number(args[0])?)
        }
        "general" => {
            let body = inner.trim_matches('"');
            let g = Expr::parse(body, &["x"]).map_err(|e| bad(&e.to_string()))?;
            DelayRelation::general(g)
        }
        _ => Err(bad("unknown relation kind")),
    }
}

/// Points `x₋₁ < x₀ < … < x_N` with `g(x_{n+1}) = x_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    points: Vec<f64>,
    relation: DelayRelation,
}

impl Mesh {
    /// Validates an externally supplied point list against `relation`.
    pub fn new(points: Vec<f64>, relation: DelayRelation) -> Result<Self, DelayError> {
        if points.len() < 3 {
            return Err(DelayError::EmptyMesh);
        }
        for w in points.windows(2) {
            let (a, b) = (w[0], w[1]);
            if !(a < b) {
                return Err(DelayError::BrokenMesh { a, b });
            }
            let ga = relation.raw(b)?;
            if (ga - a).abs() > MESH_TOL * a.abs().max(1.0) {
                return Err(DelayError::BrokenMesh { a, b });
            }
        }
        Ok(Mesh { points, relation })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn relation(&self) -> &DelayRelation {
        &self.relation
    }

    /// Number of forward intervals N.
    pub fn intervals(&self) -> usize {
        self.points.len() - 2
    }

    /// `x_n` for `n ≥ −1`.
    pub fn x(&self, n: i64) -> f64 {
        self.points[(n + 1) as usize]
    }

    pub fn start(&self) -> f64 {
        self.points[0]
    }

    pub fn end(&self) -> f64 {
        *self.points.last().expect("mesh is never empty")
    }
}
