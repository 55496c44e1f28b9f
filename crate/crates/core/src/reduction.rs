//! Invariant solutions: each one-dimensional subalgebra with ξ ≢ 0 gives a
//! reduction `y = h(x, A, …)`, `x₋ = k(x, B)`. Substituting it into the DODS
//! leaves scalar constraints on the parameters, solved here in closed form
//! or by bracketed root finding.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::delay::DelayError;
use crate::dods::catalog::{CaseId, CatalogCase, CatalogError};
use crate::dods::{Dods, DodsError};
use crate::expr::{EvalError, Expr, ParseError};
use crate::symmetry::{SymmetryError, VectorField};

/// Solved constraints hold to this absolute residual.
pub const CONSTRAINT_TOL: f64 = 1e-12;
/// Acceptance threshold of [`verify`].
pub const VERIFY_TOL: f64 = 1e-10;
const SCAN_POINTS: usize = 4000;
/// Closest approach of a scan to the excluded root at zero.
const SCAN_GAP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReductionError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Dods(#[from] DodsError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
    #[error("no sign change of {what} on the scan range {ranges}")]
    BracketNotFound { what: String, ranges: String },
    #[error("constraints have status {0}; a closed-form solution needs `solved`")]
    Status(Status),
    #[error("family {family} has no parameter `{name}`")]
    UnknownParameter { family: String, name: String },
    #[error("invalid value: {0}")]
    InvalidValue(String),
    #[error("delay parameter B = {b} does not match the system, which has {want}")]
    DelayMismatch { b: f64, want: f64 },
}

/// Shape of the reduced delay relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DelayForm {
    /// `x₋ = x − B`.
    Translation,
    /// `x₋ = B·x`.
    Scaling,
    /// `x₋ = (x − B)/(1 + B·x)`.
    Moebius,
}

impl DelayForm {
    pub fn text(self) -> &'static str {
        match self {
            DelayForm::Translation => "xm = x - B",
            DelayForm::Scaling => "xm = B*x",
            DelayForm::Moebius => "xm = (x - B)/(1 + B*x)",
        }
    }

    /// The B for which `x₋ = k(x, B)`.
    pub fn parameter(self, x: f64, xm: f64) -> f64 {
        match self {
            DelayForm::Translation => x - xm,
            DelayForm::Scaling => xm / x,
            DelayForm::Moebius => (x - xm) / (1.0 + x * xm),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamClass {
    Free,
    Determined,
    /// Solutions exist only where a scalar condition on this parameter holds.
    ExistenceCondition,
}

/// Which version of a constraint to impose.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ConstraintSource {
    #[default]
    Derived,
    /// The form as printed in the source derivation, kept where it
    /// disagrees with direct substitution (A3_14, A4_12).
    AsPrinted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    A3_1Quadratic,
    A3_3Power,
    A3_5Exp,
    A3_7Arctan,
    A3_13Line,
    A3_13Exp,
    A3_14Log,
    A4_12Const,
    A4_12Quadratic,
    A4_12Exp,
    A4_14Arctan,
    A4_21Const,
    A4_21Log,
    A4_21Power,
}

const TEMPLATE_VARS: [&str; 7] = ["x", "y", "A", "B", "a", "b", "s"];

/// One optimal-system element with its reduction formulas.
#[derive(Debug, Clone)]
pub struct InvariantFamily {
    case: CaseId,
    label: &'static str,
    kind: Kind,
    h: Expr,
    k: DelayForm,
    xi: Expr,
    eta: Expr,
    params: Vec<(&'static str, ParamClass)>,
    case_params: BTreeMap<String, f64>,
    /// B of the system's own delay.
    delay_b: f64,
}

impl InvariantFamily {
    pub fn case(&self) -> CaseId {
        self.case
    }

    /// Subalgebra label in the case's own basis, e.g. `aX1+X3`.
    pub fn label(&self) -> &'static str {
        self.label
    }

    /// `h` in `y = h(x, …)` with its parameters as free symbols.
    pub fn h(&self) -> &Expr {
        &self.h
    }

    pub fn k(&self) -> DelayForm {
        self.k
    }

    pub fn params(&self) -> &[(&'static str, ParamClass)] {
        &self.params
    }

    pub fn case_params(&self) -> &BTreeMap<String, f64> {
        &self.case_params
    }

    /// True when a printed constraint differs from the derived one.
    pub fn has_printed_variant(&self) -> bool {
        matches!(self.kind, Kind::A3_14Log | Kind::A4_12Exp)
    }

    /// Generating field for the given parameter values.
    pub fn generator(&self, values: &BTreeMap<String, f64>) -> Result<VectorField, ReductionError> {
        let bind = bindings(values, &self.case_params);
        let xi = self.xi.substitute(&bind);
        let eta = self.eta.substitute(&bind);
        Ok(VectorField::new(xi, eta)?)
    }

    fn c1(&self) -> f64 {
        self.case_params.get("C1").copied().unwrap_or(0.0)
    }

    /// Residuals of every constraint at the given values; B's own equation
    /// comes last.
    pub fn constraint_residuals(
        &self,
        values: &BTreeMap<String, f64>,
        source: ConstraintSource,
    ) -> Result<Vec<f64>, ReductionError> {
        let get = |n: &str| {
            values
                .get(n)
                .or_else(|| self.case_params.get(n))
                .copied()
                .ok_or_else(|| ReductionError::UnknownParameter {
                    family: self.label.to_string(),
                    name: n.to_string(),
                })
        };
        let b = get("B")?;
        let c1 = self.c1();
        let mut out = match self.kind {
            Kind::A3_1Quadratic => vec![get("a")? * b / 2.0 - c1],
            Kind::A3_3Power => vec![get("A")? * power_factor(1.0 / (1.0 - get("a")?), b) - c1],
            Kind::A3_5Exp => vec![get("A")? * exp_factor(b) - c1],
            Kind::A3_7Arctan => vec![get("A")? * arctan_factor(get("b")?, b) - c1],
            Kind::A3_13Line => vec![get("s")? * (1.0 - c1)],
            Kind::A3_13Exp => {
                let a = get("a")?;
                vec![get("A")? * (a - c1 * exp_m1_ratio(a, b))]
            }
            Kind::A3_14Log => vec![get("a")? * log_factor(b, source) - c1],
            Kind::A4_12Const | Kind::A4_21Const => vec![],
            Kind::A4_12Quadratic => vec![get("s")? * b / 2.0],
            Kind::A4_12Exp => vec![get("A")? * a4_12_condition(get("a")?, b, source)],
            Kind::A4_14Arctan => vec![get("A")? * arctan_factor(get("a")?, b)],
            Kind::A4_21Log => vec![get("s")? * (b.abs().ln() - b + 1.0)],
            Kind::A4_21Power => vec![get("A")? * power_factor(1.0 / get("a")?, b)],
        };
        out.push(b - self.delay_b);
        Ok(out)
    }
}

impl fmt::Display for InvariantFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}: y = {}, {}", self.case, self.label, self.h, self.k.text())
    }
}

fn bindings<'a>(values: &'a BTreeMap<String, f64>, case: &'a BTreeMap<String, f64>) -> Vec<(&'a str, f64)> {
    let mut out: Vec<(&str, f64)> = case.iter().map(|(k, v)| (k.as_str(), *v)).collect();
    out.extend(values.iter().map(|(k, v)| (k.as_str(), *v)));
    out
}

/// `p − (1 − |B|^p)/(1 − B)`, from `y = A|x|^p`, `x₋ = Bx`.
fn power_factor(p: f64, b: f64) -> f64 {
    p - (1.0 - b.abs().powf(p)) / (1.0 - b)
}

/// `(1 − e^{−aB})/B`, with the limit a at B·a = 0.
fn exp_m1_ratio(a: f64, b: f64) -> f64 {
    -(-a * b).exp_m1() / b
}

/// `1 − (1 − e^{−B})/B`, from `y = A e^x`, `x₋ = x − B`.
fn exp_factor(b: f64) -> f64 {
    1.0 - exp_m1_ratio(1.0, b)
}

/// `c − 1/B + √(1 + B²) e^{−c·arctan B}/B`, from `y = A√(1 + x²) e^{c·arctan x}`
/// with a Möbius delay, valid where 1 + Bx > 0.
fn arctan_factor(c: f64, b: f64) -> f64 {
    c - 1.0 / b + (1.0 + b * b).sqrt() * (-c * b.atan()).exp() / b
}

/// Coefficient of a in `a·(…) = C₁` for `y = a x ln|x| + A x`, `x₋ = Bx`.
fn log_factor(b: f64, source: ConstraintSource) -> f64 {
    let t = b * b.abs().ln() / (1.0 - b);
    match source {
        ConstraintSource::Derived => 1.0 + t,
        ConstraintSource::AsPrinted => 1.0 - t,
    }
}

/// `1/a − (1 − e^{−B/a})/B`; the printed variant has `e^{−Ba}`.
fn a4_12_condition(a: f64, b: f64, source: ConstraintSource) -> f64 {
    match source {
        ConstraintSource::Derived => 1.0 / a - exp_m1_ratio(1.0 / a, b),
        ConstraintSource::AsPrinted => 1.0 / a + (-b * a).exp_m1() / b,
    }
}

/// The optimal-system families of a case that carry invariant solutions.
pub fn families(case: &CatalogCase) -> Result<Vec<InvariantFamily>, ReductionError> {
    let dods = case.dods()?;
    Ok(families_for(case, &dods)?)
}

pub(crate) fn families_for(case: &CatalogCase, dods: &Dods) -> Result<Vec<InvariantFamily>, CatalogError> {
    use ParamClass::*;
    let case_params = case.params();
    let probe = dods.domain().grid(3)[1];
    let xm = dods.delay().delayed_point(probe)?;
    let make = |label: &'static str,
                kind: Kind,
                h: &str,
                k: DelayForm,
                xi: &str,
                eta: &str,
                params: Vec<(&'static str, ParamClass)>|
     -> Result<InvariantFamily, CatalogError> {
        Ok(InvariantFamily {
            case: case.id,
            label,
            kind,
            h: Expr::parse(h, &TEMPLATE_VARS)?,
            k,
            xi: Expr::parse(xi, &TEMPLATE_VARS)?,
            eta: Expr::parse(eta, &TEMPLATE_VARS)?,
            params,
            case_params: case_params.clone(),
            delay_b: k.parameter(probe, xm),
        })
    };
    use DelayForm::*;
    Ok(match case.id {
        CaseId::A3_1 => vec![make(
            "aX2+X3",
            Kind::A3_1Quadratic,
            "a/2*x^2 + A",
            Translation,
            "1",
            "a*x",
            vec![("a", Determined), ("A", Free), ("B", Determined)],
        )?],
        CaseId::A3_3 if case.param("a") != 1.0 => vec![make(
            "X3",
            Kind::A3_3Power,
            "A*abs(x)^(1/(1-a))",
            Scaling,
            "(1-a)*x",
            "y",
            vec![("A", Determined), ("B", Determined)],
        )?],
        CaseId::A3_5 => vec![make(
            "X3",
            Kind::A3_5Exp,
            "A*exp(x)",
            Translation,
            "1",
            "y",
            vec![("A", Determined), ("B", Determined)],
        )?],
        CaseId::A3_7 => vec![make(
            "X3",
            Kind::A3_7Arctan,
            "A*sqrt(1+x^2)*exp(b*atan(x))",
            Moebius,
            "1+x^2",
            "(x+b)*y",
            vec![("A", Determined), ("B", Determined)],
        )?],
        CaseId::A3_13 => vec![
            make(
                "X1±X2",
                Kind::A3_13Line,
                "s*x + A",
                Translation,
                "1",
                "s",
                vec![("s", Determined), ("A", Free), ("B", Determined), ("C1", ExistenceCondition)],
            )?,
            make(
                "X1+aX3",
                Kind::A3_13Exp,
                "A*exp(a*x)",
                Translation,
                "1",
                "a*y",
                vec![("a", ExistenceCondition), ("A", Free), ("B", Determined)],
            )?,
        ],
        CaseId::A3_14 => vec![make(
            "aX1+X3",
            Kind::A3_14Log,
            "a*x*ln(abs(x)) + A*x",
            Scaling,
            "x",
            "a*x + y",
            vec![("a", Determined), ("A", Free), ("B", Determined)],
        )?],
        // basis X1 = ∂x, X2 = x∂y, X3 = ∂y, X4 = y∂y
        CaseId::A4_12 => vec![
            make("X1", Kind::A4_12Const, "A", Translation, "1", "0", vec![("A", Free), ("B", Determined)])?,
            make(
                "X1±X2",
                Kind::A4_12Quadratic,
                "s/2*x^2 + A",
                Translation,
                "1",
                "s*x",
                vec![("s", Determined), ("A", Free), ("B", Determined)],
            )?,
            make(
                "aX1+X4",
                Kind::A4_12Exp,
                "A*exp(x/a)",
                Translation,
                "a",
                "y",
                vec![("a", ExistenceCondition), ("A", Free), ("B", Determined)],
            )?,
        ],
        CaseId::A4_14 => vec![make(
            "aX3+X4",
            Kind::A4_14Arctan,
            "A*sqrt(1+x^2)*exp(a*atan(x))",
            Moebius,
            "1+x^2",
            "(a+x)*y",
            vec![("a", ExistenceCondition), ("A", Free), ("B", Determined)],
        )?],
        // basis Y1 = x∂x, Y2 = ∂y, Y3 = x∂y, Y4 = y∂y
        CaseId::A4_21 => vec![
            make("Y1", Kind::A4_21Const, "A", Scaling, "x", "0", vec![("A", Free), ("B", Determined)])?,
            make(
                "Y1±Y2",
                Kind::A4_21Log,
                "s*ln(abs(x)) + A",
                Scaling,
                "x",
                "s",
                vec![("s", Determined), ("A", Free), ("B", Determined), ("C", ExistenceCondition)],
            )?,
            make(
                "aY1+Y4",
                Kind::A4_21Power,
                "A*abs(x)^(1/a)",
                Scaling,
                "a*x",
                "y",
                vec![("a", ExistenceCondition), ("A", Free), ("B", Determined)],
            )?,
        ],
        _ => vec![],
    })
}

/// Looks a family up by label; `X1+X2` and `X1-X2` select `X1±X2` with the
/// sign returned.
pub fn find_family<'a>(families: &'a [InvariantFamily], label: &str) -> Option<(&'a InvariantFamily, Option<f64>)> {
    let label = label.replace(' ', "");
    if let Some(f) = families.iter().find(|f| f.label == label) {
        return Some((f, None));
    }
    families.iter().find_map(|f| {
        let plus = f.label.replace('±', "+");
        let minus = f.label.replace('±', "-");
        if !f.label.contains('±') {
            None
        } else if plus == label {
            Some((f, Some(1.0)))
        } else if minus == label {
            Some((f, Some(-1.0)))
        } else {
            None
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Solved,
    /// Only `y = 0` is invariant.
    TrivialOnly,
    NoSolution,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Solved => "solved",
            Status::TrivialOnly => "trivial_only",
            Status::NoSolution => "no_solution",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintSolution {
    pub status: Status,
    /// Values of every non-free parameter.
    pub params: BTreeMap<String, f64>,
    pub free: Vec<String>,
    /// Constraint residuals at `params` with free parameters at 1.
    pub residuals: Vec<f64>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolveOptions {
    /// Parameters pinned by the caller (`a`, `s`, `A`).
    pub fixed: BTreeMap<String, f64>,
    pub source: ConstraintSource,
}

impl SolveOptions {
    pub fn fix(mut self, name: &str, value: f64) -> Self {
        self.fixed.insert(name.to_string(), value);
        self
    }

    pub fn printed(mut self) -> Self {
        self.source = ConstraintSource::AsPrinted;
        self
    }
}

/// Half-open scan ranges `[lo, hi]` for an existence condition.
type Ranges = &'static [(f64, f64)];

const SYMMETRIC: Ranges = &[(SCAN_GAP, 10.0), (-10.0, -SCAN_GAP)];
const WIDE: Ranges = &[(-50.0, 50.0)];

fn describe(ranges: &[(f64, f64)]) -> String {
    let parts: Vec<String> = ranges.iter().map(|(a, b)| format!("[{a}, {b}]")).collect();
    parts.join(" ∪ ")
}

/// First root of `h` over the ranges, in order: scan for a sign change,
/// then secant steps safeguarded by bisection.
pub fn find_root(h: &dyn Fn(f64) -> f64, ranges: &[(f64, f64)], what: &str) -> Result<f64, ReductionError> {
    for &(lo, hi) in ranges {
        let step = (hi - lo) / SCAN_POINTS as f64;
        let mut a = lo;
        let mut ha = h(a);
        for i in 1..=SCAN_POINTS {
            let b = if i == SCAN_POINTS { hi } else { lo + step * i as f64 };
            let hb = h(b);
            if ha == 0.0 {
                return Ok(a);
            }
            if ha.is_finite() && hb.is_finite() && (ha < 0.0) != (hb < 0.0) {
                return Ok(refine(h, a, b, ha, hb));
            }
            a = b;
            ha = hb;
        }
        if ha == 0.0 {
            return Ok(a);
        }
    }
    Err(ReductionError::BracketNotFound {
        what: what.to_string(),
        ranges: describe(ranges),
    })
}

fn refine(h: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64, mut ha: f64, mut hb: f64) -> f64 {
    for _ in 0..200 {
        let secant = b - hb * (b - a) / (hb - ha);
        let mid = 0.5 * (a + b);
        // secant when it lands well inside the bracket, bisection otherwise
        let lo = a.min(b);
        let hi = a.max(b);
        let margin = 0.05 * (hi - lo);
        let x = if secant.is_finite() && secant > lo + margin && secant < hi - margin {
            secant
        } else {
            mid
        };
        if x <= lo || x >= hi {
            break;
        }
        let hx = h(x);
        if hx == 0.0 {
            return x;
        }
        if (hx < 0.0) == (ha < 0.0) {
            a = x;
            ha = hx;
        } else {
            b = x;
            hb = hx;
        }
    }
    if ha.abs() <= hb.abs() {
        a
    } else {
        b
    }
}

/// The C on (−1/e, 0) with `ln(−C) = C − 1`, where the `Y1±Y2` family of
/// A4_21 has solutions.
pub fn a4_21_log_root() -> Result<f64, ReductionError> {
    let lo = -(-1.0f64).exp() + 1e-9;
    find_root(&|c: f64| (-c).ln() - c + 1.0, &[(lo, -1e-9)], "ln(-C) - C + 1")
}

/// Solves a family's constraints for the case parameters it was built with.
pub fn solve_constraints(fam: &InvariantFamily, opts: &SolveOptions) -> Result<ConstraintSolution, ReductionError> {
    for name in opts.fixed.keys() {
        let allowed = fam.params.iter().any(|(p, class)| {
            p == name && (name == "A" || name == "s" || (name == "a" && *class == ParamClass::ExistenceCondition))
        });
        if !allowed {
            return Err(ReductionError::UnknownParameter {
                family: fam.label.to_string(),
                name: name.clone(),
            });
        }
    }
    let b = fam.delay_b;
    let c1 = fam.c1();
    let source = opts.source;
    let mut params = BTreeMap::new();
    params.insert("B".to_string(), b);
    let mut free: Vec<String> = vec![];
    let mut note = None;
    let sign = match opts.fixed.get("s") {
        Some(&s) if s == 1.0 || s == -1.0 => s,
        Some(&s) => return Err(ReductionError::InvalidValue(format!("sign s must be +1 or -1, got {s}"))),
        None => 1.0,
    };
    let status = match fam.kind {
        Kind::A3_1Quadratic => {
            params.insert("a".into(), 2.0 * c1 / b);
            free.push("A".into());
            Status::Solved
        }
        Kind::A3_3Power | Kind::A3_5Exp | Kind::A3_7Arctan => {
            let k = match fam.kind {
                Kind::A3_3Power => power_factor(1.0 / (1.0 - fam.case_params["a"]), b),
                Kind::A3_5Exp => exp_factor(b),
                _ => arctan_factor(fam.case_params["b"], b),
            };
            linear_amplitude(k, c1, &mut params, &mut free)
        }
        Kind::A3_13Line | Kind::A4_21Log => {
            params.insert("s".into(), sign);
            free.push("A".into());
            let condition = match fam.kind {
                Kind::A3_13Line => 1.0 - c1,
                _ => b.abs().ln() - b + 1.0,
            };
            if condition.abs() <= CONSTRAINT_TOL {
                Status::Solved
            } else {
                note = Some(format!("existence condition fails by {condition:e}"));
                params.insert("A".into(), 0.0);
                free.clear();
                Status::NoSolution
            }
        }
        Kind::A4_12Quadratic => {
            params.insert("s".into(), sign);
            note = Some(format!("needs B = 0, but the system has B = {b}"));
            Status::NoSolution
        }
        Kind::A4_12Const | Kind::A4_21Const => {
            free.push("A".into());
            Status::Solved
        }
        Kind::A3_14Log => {
            let k = log_factor(b, source);
            if k != 0.0 {
                params.insert("a".into(), c1 / k);
                free.push("A".into());
                Status::Solved
            } else if c1 == 0.0 {
                params.insert("a".into(), 0.0);
                free.push("A".into());
                Status::Solved
            } else {
                Status::NoSolution
            }
        }
        Kind::A3_13Exp | Kind::A4_12Exp | Kind::A4_14Arctan | Kind::A4_21Power => {
            // h(v) in a scan variable v, and a as a function of v
            let (h, to_a, ranges, what): (Box<dyn Fn(f64) -> f64>, fn(f64) -> f64, Ranges, &str) = match (fam.kind, source) {
                (Kind::A3_13Exp, _) => (
                    Box::new(move |a| a - c1 * exp_m1_ratio(a, b)),
                    |v| v,
                    SYMMETRIC,
                    "a - C1(1 - e^(-aC2))/C2",
                ),
                (Kind::A4_12Exp, ConstraintSource::Derived) => (
                    Box::new(move |l| l - exp_m1_ratio(l, b)),
                    |v| 1.0 / v,
                    SYMMETRIC,
                    "1/a - (1 - e^(-C/a))/C over 1/a",
                ),
                (Kind::A4_12Exp, ConstraintSource::AsPrinted) => (
                    Box::new(move |a| a4_12_condition(a, b, ConstraintSource::AsPrinted)),
                    |v| v,
                    SYMMETRIC,
                    "1/a - (1 - e^(-Ca))/C",
                ),
                (Kind::A4_14Arctan, _) => (Box::new(move |a| arctan_factor(a, b)), |v| v, WIDE, "a - 1/C + sqrt(1+C^2)e^(-a atan C)/C"),
                _ => (
                    Box::new(move |p| power_factor(p, b)),
                    |v| 1.0 / v,
                    SYMMETRIC,
                    "p(1 - C) - 1 + |C|^p over p = 1/a",
                ),
            };
            let condition = |a: f64| -> f64 {
                match fam.kind {
                    Kind::A3_13Exp => a - c1 * exp_m1_ratio(a, b),
                    Kind::A4_12Exp => a4_12_condition(a, b, source),
                    Kind::A4_14Arctan => arctan_factor(a, b),
                    _ => power_factor(1.0 / a, b),
                }
            };
            let found = match opts.fixed.get("a") {
                Some(&a) if a == 0.0 && matches!(fam.kind, Kind::A4_12Exp | Kind::A4_21Power) => {
                    return Err(ReductionError::InvalidValue("a = 0 is excluded for this family".into()));
                }
                Some(&a) => Some(a).filter(|&a| condition(a).abs() <= CONSTRAINT_TOL),
                None => match find_root(&*h, ranges, what) {
                    Ok(v) => Some(to_a(v)).filter(|&a| condition(a).abs() <= CONSTRAINT_TOL),
                    Err(_) => {
                        note = Some(format!("no nonzero root of {what} on {}", describe(ranges)));
                        None
                    }
                },
            };
            match found {
                Some(a) => {
                    params.insert("a".into(), a);
                    free.push("A".into());
                    Status::Solved
                }
                None => {
                    if let Some(&a) = opts.fixed.get("a") {
                        params.insert("a".into(), a);
                        note.get_or_insert_with(|| format!("a = {a} violates the existence condition"));
                    }
                    params.insert("A".into(), 0.0);
                    Status::TrivialOnly
                }
            }
        }
    };
    // a pinned amplitude turns a free A into a checked one
    if let Some(&a_val) = opts.fixed.get("A") {
        free.retain(|f| f != "A");
        let had = params.insert("A".into(), a_val);
        if let Some(want) = had.filter(|_| status == Status::Solved) {
            if (want - a_val).abs() > CONSTRAINT_TOL * want.abs().max(1.0) {
                return finish(fam, Status::NoSolution, params, free, source, Some(format!("A must be {want}")));
            }
        }
    }
    finish(fam, status, params, free, source, note)
}

/// `A·k = C₁`.
fn linear_amplitude(k: f64, c1: f64, params: &mut BTreeMap<String, f64>, free: &mut Vec<String>) -> Status {
    if k != 0.0 {
        params.insert("A".into(), c1 / k);
        if c1 == 0.0 {
            Status::TrivialOnly
        } else {
            Status::Solved
        }
    } else if c1 == 0.0 {
        free.push("A".into());
        Status::Solved
    } else {
        Status::NoSolution
    }
}

fn finish(
    fam: &InvariantFamily,
    mut status: Status,
    params: BTreeMap<String, f64>,
    free: Vec<String>,
    source: ConstraintSource,
    note: Option<String>,
) -> Result<ConstraintSolution, ReductionError> {
    let mut values = params.clone();
    for f in &free {
        values.insert(f.clone(), 1.0);
    }
    let residuals = if status == Status::Solved {
        let r = fam.constraint_residuals(&values, source)?;
        if r.iter().any(|v| !(v.abs() <= CONSTRAINT_TOL)) {
            status = Status::NoSolution;
        }
        r
    } else {
        vec![]
    };
    Ok(ConstraintSolution {
        status,
        params,
        free,
        residuals,
        note,
    })
}

/// Closed-form `y(x)` and B for a solved family. Free parameters not in
/// `free_values` default to 1.
pub fn build_solution(
    fam: &InvariantFamily,
    sol: &ConstraintSolution,
    free_values: &BTreeMap<String, f64>,
) -> Result<(Expr, f64), ReductionError> {
    if sol.status != Status::Solved {
        return Err(ReductionError::Status(sol.status));
    }
    let mut values = sol.params.clone();
    for f in &sol.free {
        values.insert(f.clone(), free_values.get(f).copied().unwrap_or(1.0));
    }
    for name in free_values.keys() {
        if !sol.free.contains(name) {
            return Err(ReductionError::UnknownParameter {
                family: fam.label.to_string(),
                name: name.clone(),
            });
        }
    }
    let b = values["B"];
    if (b - fam.delay_b).abs() > 1e-12 * fam.delay_b.abs().max(1.0) {
        return Err(ReductionError::DelayMismatch { b, want: fam.delay_b });
    }
    let y = fam.h.substitute(&bindings(&values, &fam.case_params)).simplify();
    if let Some(v) = y.variables().into_iter().find(|v| v != "x") {
        return Err(ReductionError::UnknownParameter {
            family: fam.label.to_string(),
            name: v,
        });
    }
    Ok((y, b))
}

/// `max |ẏ − f(x, y, y₋)|` over `samples` grid points of the domain, with
/// `y₋ = y(g(x))` and ẏ differentiated symbolically.
pub fn verify(y: &Expr, d: &Dods, samples: usize) -> Result<f64, ReductionError> {
    let dy = y.differentiate("x");
    let mut worst = 0.0f64;
    for x in d.sample_points(samples) {
        let xm = d.delay().delayed_point(x)?;
        let (r1, _) = d.residual(x, y.at(x)?, xm, y.at(xm)?, dy.at(x)?)?;
        worst = worst.max(r1.abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symmetry::prolong_apply;

    fn case(id: CaseId, params: &[(&str, f64)]) -> CatalogCase {
        params.iter().fold(CatalogCase::new(id), |c, (k, v)| c.with(k, *v))
    }

    fn solve(c: &CatalogCase, label: &str, opts: SolveOptions) -> (InvariantFamily, ConstraintSolution) {
        let fams = families(c).unwrap();
        let (fam, sign) = find_family(&fams, label).unwrap();
        let opts = match sign {
            Some(s) => opts.fix("s", s),
            None => opts,
        };
        let sol = solve_constraints(fam, &opts).unwrap();
        (fam.clone(), sol)
    }

    fn built(c: &CatalogCase, label: &str) -> (Expr, f64) {
        let (fam, sol) = solve(c, label, SolveOptions::default());
        build_solution(&fam, &sol, &BTreeMap::new()).unwrap()
    }

    #[test]
    fn family_counts() {
        let n = |c: CatalogCase| families(&c).unwrap().len();
        assert_eq!(n(case(CaseId::A3_13, &[])), 2);
        assert_eq!(n(case(CaseId::A4_21, &[])), 3);
        assert_eq!(n(case(CaseId::A4_12, &[])), 3);
        let linear = CatalogCase::new(CaseId::A3_3).with("a", 1.0).with_fn("g", Expr::parse("x-1", &["x"]).unwrap());
        assert_eq!(n(linear), 0);
    }

    #[test]
    fn a3_1_pinned_values() {
        let c = case(CaseId::A3_1, &[("C1", 1.0), ("C2", 2.0)]);
        let (_, sol) = solve(&c, "aX2+X3", SolveOptions::default());
        assert_eq!(sol.params["a"], 1.0);
        assert_eq!(sol.params["B"], 2.0);
        assert_eq!(sol.free, ["A"]);
        let (y, _) = built(&c, "aX2+X3");
        let d = c.dods().unwrap();
        assert!(verify(&y, &d, 50).unwrap() <= 1e-12);
    }

    #[test]
    fn a3_5_amplitude_is_e() {
        let c = case(CaseId::A3_5, &[]);
        let (_, sol) = solve(&c, "X3", SolveOptions::default());
        assert!((sol.params["A"] - std::f64::consts::E).abs() <= 1e-12);
    }

    #[test]
    fn a3_3_amplitude() {
        let c = case(CaseId::A3_3, &[("a", 0.5), ("C2", 0.5)]);
        let (_, sol) = solve(&c, "X3", SolveOptions::default());
        assert!((sol.params["A"] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn a3_13_exponential_rate() {
        let c = case(CaseId::A3_13, &[("C1", 2.0), ("C2", 1.0)]);
        let (_, sol) = solve(&c, "X1+aX3", SolveOptions::default());
        let a = sol.params["a"];
        assert!((a - 1.59362).abs() < 1e-5, "{a}");
        assert!((a - 2.0 * (1.0 - (-a).exp())).abs() <= 1e-12);
        let (_, line) = solve(&c, "X1+X2", SolveOptions::default());
        assert_eq!(line.status, Status::NoSolution);
    }

    #[test]
    fn a3_14_sign() {
        let c = case(CaseId::A3_14, &[("C2", 0.5)]);
        let d = c.dods().unwrap();
        let (fam, derived) = solve(&c, "aX1+X3", SolveOptions::default());
        let y = build_solution(&fam, &derived, &BTreeMap::new()).unwrap().0;
        assert!(verify(&y, &d, 50).unwrap() <= 1e-10);
        let (_, printed) = solve(&c, "aX1+X3", SolveOptions::default().printed());
        assert!((printed.params["a"] - 1.0 / (1.0 + 2f64.ln())).abs() < 1e-14);
        let y = build_solution(&fam, &printed, &BTreeMap::new()).unwrap().0;
        assert!(verify(&y, &d, 50).unwrap() >= 0.1);
    }

    #[test]
    fn a4_12_outcomes() {
        let c = case(CaseId::A4_12, &[]);
        assert_eq!(solve(&c, "X1", SolveOptions::default()).1.status, Status::Solved);
        assert_eq!(solve(&c, "X1-X2", SolveOptions::default()).1.status, Status::NoSolution);
        assert_eq!(solve(&c, "aX1+X4", SolveOptions::default()).1.status, Status::TrivialOnly);
        let fixed = solve(&c, "aX1+X4", SolveOptions::default().fix("a", 5.0)).1;
        assert_eq!(fixed.status, Status::TrivialOnly);
        assert_eq!(fixed.params["A"], 0.0);
        let (fam, printed) = solve(&c, "aX1+X4", SolveOptions::default().printed());
        assert_eq!(printed.status, Status::Solved);
        assert!((printed.params["a"] - 1.3499).abs() < 1e-3);
        let y = build_solution(&fam, &printed, &BTreeMap::new()).unwrap().0;
        assert!(verify(&y, &c.dods().unwrap(), 50).unwrap() > 1e-3);
    }

    #[test]
    fn a4_14_has_only_the_trivial_solution() {
        for c in [0.3, 1.0, 4.0] {
            let (_, sol) = solve(&case(CaseId::A4_14, &[("C", c)]), "aX3+X4", SolveOptions::default());
            assert_eq!(sol.status, Status::TrivialOnly);
        }
    }

    #[test]
    fn a4_21_families() {
        let root = a4_21_log_root().unwrap();
        assert!((root + 0.2785).abs() < 1e-3);
        assert!(((-root).ln() - root + 1.0).abs() <= 1e-12);
        let c = case(CaseId::A4_21, &[("C", root)]);
        let d = c.dods().unwrap();
        for label in ["Y1+Y2", "Y1-Y2", "Y1"] {
            let (y, b) = built(&c, label);
            assert_eq!(b, root);
            assert!(verify(&y, &d, 50).unwrap() <= 1e-10, "{label}");
        }
        // ln|C| = C − 1 makes p = 0 a double root, leaving nothing else
        let (_, sol) = solve(&c, "aY1+Y4", SolveOptions::default());
        assert_eq!(sol.status, Status::TrivialOnly);
        let (_, sol) = solve(&case(CaseId::A4_21, &[("C", -0.5)]), "aY1+Y4", SolveOptions::default());
        assert!((sol.params["a"] + 0.5).abs() < 1e-12, "{sol:?}");
        let half = case(CaseId::A4_21, &[("C", 0.5)]);
        let (_, sol) = solve(&half, "aY1+Y4", SolveOptions::default());
        assert!((sol.params["a"] - 1.0).abs() < 1e-12);
        assert_eq!(solve(&half, "Y1+Y2", SolveOptions::default()).1.status, Status::NoSolution);
    }

    #[test]
    fn status_errors_and_mismatches() {
        let c = case(CaseId::A4_12, &[]);
        let (fam, sol) = solve(&c, "X1-X2", SolveOptions::default());
        assert_eq!(
            build_solution(&fam, &sol, &BTreeMap::new()).unwrap_err(),
            ReductionError::Status(Status::NoSolution)
        );
        let (fam, mut sol) = solve(&c, "X1", SolveOptions::default());
        sol.params.insert("B".into(), 2.0);
        assert!(matches!(
            build_solution(&fam, &sol, &BTreeMap::new()),
            Err(ReductionError::DelayMismatch { .. })
        ));
        assert!(matches!(
            find_root(&|x| x * x + 1.0, &[(-1.0, 1.0)], "x^2 + 1"),
            Err(ReductionError::BracketNotFound { .. })
        ));
    }

    #[test]
    fn solutions_are_deterministic() {
        let c = case(CaseId::A3_13, &[("C1", 2.0)]);
        let a = solve(&c, "X1+aX3", SolveOptions::default()).1.params["a"];
        let b = solve(&c, "X1+aX3", SolveOptions::default()).1.params["a"];
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn generators_fix_their_solutions() {
        let cases = [
            (case(CaseId::A3_1, &[("C2", 2.0)]), "aX2+X3"),
            (case(CaseId::A3_3, &[("a", -1.0), ("C2", 0.5)]), "X3"),
            (case(CaseId::A3_5, &[]), "X3"),
            (case(CaseId::A3_7, &[("b", 1.0)]), "X3"),
            (case(CaseId::A3_13, &[("C1", 2.0)]), "X1+aX3"),
            (case(CaseId::A3_14, &[]), "aX1+X3"),
            (case(CaseId::A4_21, &[]), "aY1+Y4"),
        ];
        for (c, label) in cases {
            let d = c.dods().unwrap();
            let (fam, sol) = solve(&c, label, SolveOptions::default());
            let (y, _) = build_solution(&fam, &sol, &BTreeMap::new()).unwrap();
            let mut values = sol.params.clone();
            values.insert("A".into(), sol.params.get("A").copied().unwrap_or(1.0));
            let v = fam.generator(&values).unwrap();
            let dy = y.differentiate("x");
            for x in d.sample_points(10) {
                assert!(v.xi_at(x).unwrap().abs() > 1e-14);
                let xm = d.delay().delayed_point(x).unwrap();
                let (p1, p2) = prolong_apply(&v, &d, x, y.at(x).unwrap(), xm, y.at(xm).unwrap(), dy.at(x).unwrap()).unwrap();
                assert!(p1.abs() <= 1e-8 && p2.abs() <= 1e-8, "{c} {label}: {p1} {p2}");
            }
            assert!(verify(&y, &d, 50).unwrap() <= 1e-10, "{c} {label}");
        }
    }
}
