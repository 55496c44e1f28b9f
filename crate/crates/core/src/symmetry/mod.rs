//! Vector fields `ξ(x)∂x + η(x, y)∂y`, their prolongation to the jet
//! `(x, y, x₋, y₋, ẏ)`, invariance checks and the closed-form flows.

mod roots;

pub use roots::{bernoulli_gf, bernoulli_numbers, char_roots, exp_symmetry_fields, CharacteristicRoot};

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::delay::{DelayError, Mesh};
use crate::dods::{jet, Dods, DodsError};
use crate::expr::{literal, EvalError, Expr, ParseError};
use crate::steps::{PiecewiseSolution, Segment, Side, StepsError};

/// Default threshold for the scaled prolongation.
pub const INVARIANCE_TOL: f64 = 1e-7;
/// Samples closer than this to a break of a piecewise coefficient are skipped.
const BREAK_GAP: f64 = 1e-6;
const SEED: u64 = 0x5eed_d0d5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SymmetryError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dods(#[from] DodsError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error("piecewise coefficient: {0}")]
    MeshRange(StepsError),
    #[error("xi must depend on x only")]
    XiDependsOnY,
    #[error("not a solution of the homogeneous system (residual {residual:e})")]
    NotASolution { residual: f64 },
    #[error("no closed-form flow for this field: {0}")]
    UnsupportedFlow(String),
    #[error("could not draw {wanted} admissible sample points")]
    Sampling { wanted: usize },
    #[error("root finding for branch {k} did not converge (last iterate {re} + {im}i)")]
    NonConvergence { k: u32, re: f64, im: f64 },
    #[error("characteristic root with zero imaginary part gives a degenerate sine field")]
    DegenerateRoot,
    #[error("series diverges: |z| = {0} is not below 2 pi")]
    Divergence(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

impl From<StepsError> for SymmetryError {
    fn from(e: StepsError) -> Self {
        SymmetryError::MeshRange(e)
    }
}

/// A scalar function of x: an expression or a scaled piecewise solution.
#[derive(Debug, Clone)]
pub enum ScalarFn {
    Expr { e: Expr, de: Expr },
    Piecewise { sol: Arc<PiecewiseSolution>, scale: f64 },
}

impl ScalarFn {
    pub fn expr(e: Expr) -> Self {
        let de = e.differentiate("x");
        ScalarFn::Expr { e, de }
    }

    /// `(r, r')`; piecewise functions report the limit from `side`.
    pub fn eval(&self, x: f64, side: Side) -> Result<(f64, f64), SymmetryError> {
        match self {
            ScalarFn::Expr { e, de } => Ok((e.at(x)?, de.at(x)?)),
            ScalarFn::Piecewise { sol, scale } => {
                let (y, dy, _) = sol.eval_side(x, side)?;
                Ok((scale * y, scale * dy))
            }
        }
    }

    /// `(r, r', r'')`.
    fn eval2(&self, x: f64, side: Side) -> Result<(f64, f64, f64), SymmetryError> {
        match self {
            ScalarFn::Expr { e, de } => Ok((e.at(x)?, de.at(x)?, de.differentiate("x").at(x)?)),
            ScalarFn::Piecewise { sol, scale } => {
                let (y, dy, d2y) = sol.eval_side(x, side)?;
                Ok((scale * y, scale * dy, scale * d2y))
            }
        }
    }

    fn mesh(&self) -> Option<&Mesh> {
        match self {
            ScalarFn::Expr { .. } => None,
            ScalarFn::Piecewise { sol, .. } => Some(sol.mesh()),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            ScalarFn::Expr { e, .. } => *e == Expr::Number(0.0),
            ScalarFn::Piecewise { scale, .. } => *scale == 0.0,
        }
    }
}

/// The ∂y coefficient.
#[derive(Debug, Clone)]
pub enum Eta {
    General { e: Expr, ex: Expr, ey: Expr },
    /// `η = p(x)·y + r(x)`.
    Affine { p: Expr, dp: Expr, r: ScalarFn },
}

/// `ξ(x)∂x + η(x, y)∂y`.
#[derive(Debug, Clone)]
pub struct VectorField {
    xi: Expr,
    dxi: Expr,
    eta: Eta,
}

impl VectorField {
    pub fn new(xi: Expr, eta: Expr) -> Result<Self, SymmetryError> {
        if xi.contains_var("y") {
            return Err(SymmetryError::XiDependsOnY);
        }
        let dxi = xi.differentiate("x");
        let ex = eta.differentiate("x");
        let ey = eta.differentiate("y");
        Ok(VectorField {
            xi,
            dxi,
            eta: Eta::General { e: eta, ex, ey },
        })
    }

    /// Parses `ξ` (in x) and `η` (in x, y).
    pub fn parse(xi: &str, eta: &str) -> Result<Self, SymmetryError> {
        let xi = Expr::parse(xi, &["x", "y"])?;
        let eta = Expr::parse(eta, &["x", "y"])?;
        Self::new(xi, eta)
    }

    /// `(p(x)·y + r(x))∂y`.
    pub fn affine(p: Expr, r: ScalarFn) -> Self {
        let dp = p.differentiate("x");
        VectorField {
            xi: Expr::Number(0.0),
            dxi: Expr::Number(0.0),
            eta: Eta::Affine { p, dp, r },
        }
    }

    /// `ρ(x)∂y`.
    pub fn vertical(r: ScalarFn) -> Self {
        Self::affine(Expr::Number(0.0), r)
    }

    /// `(y − σ(x))∂y`.
    pub fn scaling_about(sigma: ScalarFn) -> Self {
        let neg = match sigma {
            ScalarFn::Expr { e, .. } => ScalarFn::expr(crate::expr::neg(e)),
            ScalarFn::Piecewise { sol, scale } => ScalarFn::Piecewise { sol, scale: -scale },
        };
        Self::affine(Expr::Number(1.0), neg)
    }

    pub fn xi(&self) -> &Expr {
        &self.xi
    }

    pub fn eta(&self) -> &Eta {
        &self.eta
    }

    /// ξ at x.
    pub fn xi_at(&self, x: f64) -> Result<f64, SymmetryError> {
        Ok(self.xi.at(x)?)
    }

    /// `(η, η_x, η_y)` at (x, y).
    pub fn eta_at(&self, x: f64, y: f64, side: Side) -> Result<(f64, f64, f64), SymmetryError> {
        match &self.eta {
            Eta::General { e, ex, ey } => {
                let b = [("x", x), ("y", y)];
                Ok((e.eval(&b)?, ex.eval(&b)?, ey.eval(&b)?))
            }
            Eta::Affine { p, dp, r } => {
                let (pv, dpv) = (p.at(x)?, dp.at(x)?);
                let (rv, drv) = r.eval(x, side)?;
                Ok((pv * y + rv, dpv * y + drv, pv))
            }
        }
    }

    fn breaks(&self) -> Option<&Mesh> {
        match &self.eta {
            Eta::Affine { r, .. } => r.mesh(),
            Eta::General { .. } => None,
        }
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let eta = match &self.eta {
            Eta::General { e, .. } => e.to_string(),
            Eta::Affine { p, r, .. } => {
                let r = match r {
                    ScalarFn::Expr { e, .. } => e.to_string(),
                    ScalarFn::Piecewise { scale, .. } => format!("{}*rho(x)", literal(*scale)),
                };
                format!("({p})*y + {r}")
            }
        };
        write!(f, "({})*d/dx + ({eta})*d/dy", self.xi)
    }
}

/// `pr v` applied to F₁ and F₂ at one jet point, with the largest single
/// term of each sum for scaling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prolonged {
    pub pr_f1: f64,
    pub pr_f2: f64,
    pub scale_f1: f64,
    pub scale_f2: f64,
}

impl Prolonged {
    /// `|pr F| / (1 + max |term|)`, the larger over F₁ and F₂.
    pub fn scaled(&self) -> f64 {
        (self.pr_f1.abs() / (1.0 + self.scale_f1)).max(self.pr_f2.abs() / (1.0 + self.scale_f2))
    }
}

/// First prolongation of `v` applied to F₁ = ẏ − f and F₂ = x₋ − g(x):
/// `ξF_x + ηF_y + ξ⁻F_{x₋} + η⁻F_{y₋} + ζF_ẏ` with `ζ = η_x + η_y·ẏ − ẏ·ξ_x`.
pub fn prolong(v: &VectorField, d: &Dods, x: f64, y: f64, xm: f64, ym: f64, yd: f64) -> Result<Prolonged, SymmetryError> {
    let b = jet(x, y, xm, ym, yd);
    let mut p = [0.0; 5];
    for (slot, e) in p.iter_mut().zip(d.f1_partials()) {
        *slot = e.eval(&b)?;
    }
    let xi = v.xi.at(x)?;
    let xi_m = v.xi.at(xm)?;
    let dxi = v.dxi.at(x)?;
    let (eta, eta_x, eta_y) = v.eta_at(x, y, Side::Right)?;
    let (eta_m, _, _) = v.eta_at(xm, ym, Side::Right)?;
    let zeta = eta_x + eta_y * yd - yd * dxi;
    let t1 = [xi * p[0], eta * p[1], xi_m * p[2], eta_m * p[3], zeta * p[4]];
    let (f2x, f2xm) = d.f2_partials(x)?;
    let t2 = [xi * f2x, xi_m * f2xm];
    let max_abs = |t: &[f64]| t.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    Ok(Prolonged {
        pr_f1: t1.iter().sum(),
        pr_f2: t2.iter().sum(),
        scale_f1: max_abs(&t1),
        scale_f2: max_abs(&t2),
    })
}

/// `(pr F₁, pr F₂)` at a jet point.
pub fn prolong_apply(v: &VectorField, d: &Dods, x: f64, y: f64, xm: f64, ym: f64, yd: f64) -> Result<(f64, f64), SymmetryError> {
    let p = prolong(v, d, x, y, xm, ym, yd)?;
    Ok((p.pr_f1, p.pr_f2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    /// Annihilates F₁, F₂ everywhere sampled.
    Strong,
    /// Annihilates them only on the solution manifold.
    Weak,
    NotInvariant,
}

impl fmt::Display for Classification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Classification::Strong => "strong",
            Classification::Weak => "weak",
            Classification::NotInvariant => "not invariant",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariance {
    /// Largest scaled prolongation over manifold samples.
    pub max_on_manifold: f64,
    /// Largest scaled prolongation over the perturbed samples.
    pub max_off_manifold: f64,
    pub classification: Classification,
}

impl Invariance {
    pub fn is_symmetry(&self) -> bool {
        self.classification != Classification::NotInvariant
    }
}

/// Samples `samples` manifold points (x random in the domain window, y and
/// y₋ in [−2, 2], x₋ = g(x), ẏ from the DODE) plus one perturbed copy of
/// each, and classifies `v` with the default threshold.
pub fn check_invariance(v: &VectorField, d: &Dods, samples: usize) -> Result<Invariance, SymmetryError> {
    check_invariance_tol(v, d, samples, INVARIANCE_TOL)
}

pub fn check_invariance_tol(v: &VectorField, d: &Dods, samples: usize, tol: f64) -> Result<Invariance, SymmetryError> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut lo, mut hi) = d.domain().sample_window();
    let breaks = v.breaks();
    if let Some(mesh) = breaks {
        // x₋ must stay inside the piecewise function's range
        let dom = d.domain();
        lo = mesh.x(0).max(dom.lo);
        hi = mesh.end().min(dom.hi);
        if !(lo < hi) {
            return Err(SymmetryError::Sampling { wanted: samples });
        }
    }
    let near_break = |t: f64| breaks.is_some_and(|m| m.points().iter().any(|p| (p - t).abs() < BREAK_GAP));
    let mut on = 0.0f64;
    let mut off = 0.0f64;
    let mut taken = 0;
    let mut attempts = 0;
    while taken < samples {
        attempts += 1;
        if attempts > 20 * samples.max(1) {
            return Err(SymmetryError::Sampling { wanted: samples });
        }
        let x = rng.gen_range(lo..=hi);
        let y = rng.gen_range(-2.0..=2.0);
        let ym = rng.gen_range(-2.0..=2.0);
        let signs: [f64; 3] = [rng.gen_bool(0.5), rng.gen_bool(0.5), rng.gen_bool(0.5)].map(|b| if b { 1.0 } else { -1.0 });
        if !d.domain().contains(x) || near_break(x) {
            continue;
        }
        let xm = d.delay().delayed_point(x)?;
        if near_break(xm) {
            continue;
        }
        let yd = -d.f1().eval(&jet(x, y, xm, ym, 0.0))?;
        on = on.max(prolong(v, d, x, y, xm, ym, yd)?.scaled());
        off = off.max(prolong(v, d, x, y + signs[0], xm, ym + signs[1], yd + signs[2])?.scaled());
        taken += 1;
    }
    let classification = if on > tol {
        Classification::NotInvariant
    } else if off <= tol {
        Classification::Strong
    } else {
        Classification::Weak
    };
    Ok(Invariance {
        max_on_manifold: on,
        max_off_manifold: off,
        classification,
    })
}

/// `ρ∂y` from a solution ρ of the homogeneous system.
pub fn vertical_from_solution(s: Arc<PiecewiseSolution>, d: &Dods) -> Result<VectorField, SymmetryError> {
    let h = d.homogeneous()?;
    let residual = s.residual_scan(&h, 16)?;
    if !(residual <= 1e-8) {
        return Err(SymmetryError::NotASolution { residual });
    }
    Ok(VectorField::vertical(ScalarFn::Piecewise { sol: s, scale: 1.0 }))
}

/// Maps the solution `s` along the flow of `v` for parameter `eps`.
/// Supported: vertical affine fields with constant p, and constant ξ with
/// η = 0 on an x-autonomous system.
pub fn flow(v: &VectorField, eps: f64, s: &PiecewiseSolution, d: &Dods) -> Result<PiecewiseSolution, SymmetryError> {
    if eps == 0.0 {
        return Ok(s.clone());
    }
    let xi_zero = v.xi == Expr::Number(0.0);
    match &v.eta {
        Eta::Affine { p, r, .. } if xi_zero => {
            if !p.is_constant() {
                return Err(SymmetryError::UnsupportedFlow("p(x) is not constant".into()));
            }
            let p = p.eval(&[])?;
            let ep = (eps * p).exp();
            let c = if p == 0.0 { eps } else { (eps * p).exp_m1() / p };
            let mut segments = Vec::with_capacity(s.segments().len());
            for seg in s.segments() {
                let last = seg.nodes.len() - 1;
                let mut nodes = seg.nodes.clone();
                for (i, n) in nodes.iter_mut().enumerate() {
                    let side = if i == last { Side::Left } else { Side::Right };
                    let (rv, dr, d2r) = r.eval2(n.x, side)?;
                    n.y = ep * n.y + c * rv;
                    n.dy = ep * n.dy + c * dr;
                    n.d2y = ep * n.d2y + c * d2r;
                }
                segments.push(Segment { nodes });
            }
            Ok(PiecewiseSolution::from_parts(s.mesh().clone(), segments)?)
        }
        eta => {
            let eta_zero = match eta {
                Eta::General { e, .. } => *e == Expr::Number(0.0),
                Eta::Affine { p, r, .. } => *p == Expr::Number(0.0) && r.is_zero(),
            };
            if !(eta_zero && v.xi.is_constant()) {
                return Err(SymmetryError::UnsupportedFlow("only vertical affine fields and x-translations".into()));
            }
            if !d.is_autonomous() {
                return Err(SymmetryError::UnsupportedFlow("the system is not invariant under x-translation".into()));
            }
            let shift = eps * v.xi.eval(&[])?;
            let points = s.mesh().points().iter().map(|p| p + shift).collect();
            let mesh = Mesh::new(points, s.mesh().relation().clone())?;
            let segments = s
                .segments()
                .iter()
                .map(|seg| Segment {
                    nodes: seg
                        .nodes
                        .iter()
                        .map(|n| crate::steps::Node { x: n.x + shift, ..*n })
                        .collect(),
                })
                .collect();
            Ok(PiecewiseSolution::from_parts(mesh, segments)?)
        }
    }
}
