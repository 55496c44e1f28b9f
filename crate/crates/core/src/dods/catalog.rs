//! The invariant linear DODS families and the symmetry algebras they admit.
//!
//! Every case is a difference-quotient system `ẏ = c·Δy/Δx + γ(x)` with a
//! delay that does not depend on the solution.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{Dods, DodsError, Interval, Rhs};
use crate::delay::{DelayError, DelayRelation};
use crate::expr::{self, Expr, ParseError};
use crate::reduction::{self, InvariantFamily};
use crate::symmetry::{SymmetryError, VectorField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum CaseId {
    A2_1,
    A2_3,
    A3_1,
    A3_3,
    A3_5,
    A3_7,
    A3_13,
    A3_14,
    A3_15,
    A4_5,
    A4_12,
    A4_14,
    A4_21,
}

/// Realizations with two linearly connected fields that admit no DODS.
const NO_DODS: [&str; 18] = [
    "A3_11", "A4_1", "A4_2", "A4_3", "A4_4", "A4_6", "A4_7", "A4_8", "A4_9", "A4_10", "A4_11", "A4_15", "A4_16",
    "A4_17", "A4_18", "A4_19", "A4_20", "A4_22",
];

impl CaseId {
    pub const ALL: [CaseId; 13] = [
        CaseId::A2_1,
        CaseId::A2_3,
        CaseId::A3_1,
        CaseId::A3_3,
        CaseId::A3_5,
        CaseId::A3_7,
        CaseId::A3_13,
        CaseId::A3_14,
        CaseId::A3_15,
        CaseId::A4_5,
        CaseId::A4_12,
        CaseId::A4_14,
        CaseId::A4_21,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CaseId::A2_1 => "A2_1",
            CaseId::A2_3 => "A2_3",
            CaseId::A3_1 => "A3_1",
            CaseId::A3_3 => "A3_3",
            CaseId::A3_5 => "A3_5",
            CaseId::A3_7 => "A3_7",
            CaseId::A3_13 => "A3_13",
            CaseId::A3_14 => "A3_14",
            CaseId::A3_15 => "A3_15",
            CaseId::A4_5 => "A4_5",
            CaseId::A4_12 => "A4_12",
            CaseId::A4_14 => "A4_14",
            CaseId::A4_21 => "A4_21",
        }
    }

    pub fn descriptor(self) -> &'static CaseDescriptor {
        DESCRIPTORS.iter().find(|d| d.id == self).expect("every case has a descriptor")
    }
}

impl fmt::Display for CaseId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CaseId {
    type Err = CatalogError;

    /// Accepts `A3_5`, `a3_5` and `A3,5`.
    fn from_str(s: &str) -> Result<Self, CatalogError> {
        let norm = s.trim().to_ascii_uppercase().replace(',', "_");
        if let Some(id) = CaseId::ALL.iter().find(|c| c.name() == norm) {
            return Ok(*id);
        }
        if NO_DODS.contains(&norm.as_str()) {
            return Err(CatalogError::NoDods(norm));
        }
        Err(CatalogError::UnknownCase(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CatalogError {
    #[error("{0}: no invariant DODS exists for this realization")]
    NoDods(String),
    #[error("unknown case `{0}`")]
    UnknownCase(String),
    #[error("{case}: parameter domain violated: {message}")]
    ParameterDomain { case: CaseId, message: String },
    #[error("{case} has no parameter `{name}`")]
    UnknownParameter { case: CaseId, name: String },
    #[error("{case} needs the function `{name}`")]
    MissingFunction { case: CaseId, name: &'static str },
    #[error("{case} takes no function `{name}`")]
    UnknownFunction { case: CaseId, name: String },
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Dods(#[from] DodsError),
    #[error(transparent)]
    Symmetry(#[from] SymmetryError),
}

/// A real parameter of a case with its default and admissible range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSpec {
    pub name: &'static str,
    pub default: f64,
    pub domain: &'static str,
}

/// Static description of a case for listing.
#[derive(Debug, Clone, PartialEq)]
pub struct CaseDescriptor {
    pub id: CaseId,
    pub params: &'static [ParamSpec],
    /// User functions: `f` in the DODE, `g` as the delay map.
    pub functions: &'static [&'static str],
    pub dode: &'static str,
    pub delay: &'static str,
}

impl CaseDescriptor {
    pub fn formula(&self) -> String {
        format!("{}, {}", self.dode, self.delay)
    }
}

const C1: ParamSpec = ParamSpec {
    name: "C1",
    default: 1.0,
    domain: "real",
};
const C2_SHIFT: ParamSpec = ParamSpec {
    name: "C2",
    default: 1.0,
    domain: "C2 > 0",
};
const C2_SCALE: ParamSpec = ParamSpec {
    name: "C2",
    default: 0.5,
    domain: "C2 < 1, C2 != 0 (x > 0)",
};
const C_SHIFT: ParamSpec = ParamSpec {
    name: "C",
    default: 1.0,
    domain: "C > 0",
};
const C_SCALE: ParamSpec = ParamSpec {
    name: "C",
    default: 0.5,
    domain: "C < 1, C != 0 (x > 0)",
};

static DESCRIPTORS: [CaseDescriptor; 13] = [
    CaseDescriptor {
        id: CaseId::A2_1,
        params: &[],
        functions: &["f", "g"],
        dode: "ẏ = f(x)·Δy/Δx",
        delay: "x₋ = g(x)",
    },
    CaseDescriptor {
        id: CaseId::A2_3,
        params: &[],
        functions: &["f", "g"],
        dode: "ẏ = Δy/Δx + f(x)",
        delay: "x₋ = g(x)",
    },
    CaseDescriptor {
        id: CaseId::A3_1,
        params: &[C1, C2_SHIFT],
        functions: &[],
        dode: "ẏ = Δy/Δx + C₁",
        delay: "Δx = C₂",
    },
    CaseDescriptor {
        id: CaseId::A3_3,
        params: &[
            ParamSpec {
                name: "a",
                default: 0.5,
                domain: "0 < |a| <= 1",
            },
            C1,
            C2_SCALE,
        ],
        functions: &["g"],
        dode: "ẏ = Δy/Δx + C₁·x^(a/(1 − a)) if a ≠ 1; ẏ = Δy/Δx if a = 1",
        delay: "x₋ = C₂·x if a ≠ 1; x₋ = g(x) if a = 1",
    },
    CaseDescriptor {
        id: CaseId::A3_5,
        params: &[C1, C2_SHIFT],
        functions: &[],
        dode: "ẏ = Δy/Δx + C₁·e^x",
        delay: "Δx = C₂",
    },
    CaseDescriptor {
        id: CaseId::A3_7,
        params: &[
            ParamSpec {
                name: "b",
                default: 0.0,
                domain: "b >= 0",
            },
            C1,
            ParamSpec {
                name: "C2",
                default: 1.0,
                domain: "C2 > 0",
            },
        ],
        functions: &[],
        dode: "ẏ = Δy/Δx + C₁·e^(b·arctan x)/√(1 + x²)",
        delay: "x₋ = (x − C₂)/(1 + C₂x)",
    },
    CaseDescriptor {
        id: CaseId::A3_13,
        params: &[
            ParamSpec {
                name: "C1",
                default: 1.0,
                domain: "C1 != 0",
            },
            C2_SHIFT,
        ],
        functions: &[],
        dode: "ẏ = C₁·Δy/Δx",
        delay: "Δx = C₂",
    },
    CaseDescriptor {
        id: CaseId::A3_14,
        params: &[C1, C2_SCALE],
        functions: &[],
        dode: "ẏ = Δy/Δx + C₁",
        delay: "x₋ = C₂·x",
    },
    CaseDescriptor {
        id: CaseId::A3_15,
        params: &[],
        functions: &["f", "g"],
        dode: "ẏ = Δy/Δx + f(x)",
        delay: "χ̇ = (χ − χ₋)/(x − x₋), x₋ = g(x) given explicitly",
    },
    CaseDescriptor {
        id: CaseId::A4_5,
        params: &[],
        functions: &["g"],
        dode: "ẏ = Δy/Δx",
        delay: "χ̇ = (χ − χ₋)/(x − x₋), x₋ = g(x) given explicitly",
    },
    CaseDescriptor {
        id: CaseId::A4_12,
        params: &[C_SHIFT],
        functions: &[],
        dode: "ẏ = Δy/Δx",
        delay: "Δx = C",
    },
    CaseDescriptor {
        id: CaseId::A4_14,
        params: &[C_SHIFT],
        functions: &[],
        dode: "ẏ = Δy/Δx",
        delay: "x₋ = (x − C)/(1 + Cx)",
    },
    CaseDescriptor {
        id: CaseId::A4_21,
        params: &[C_SCALE],
        functions: &[],
        dode: "ẏ = Δy/Δx",
        delay: "x₋ = C·x",
    },
];

/// The 13 cases that carry an invariant DODS.
pub fn list_cases() -> &'static [CaseDescriptor] {
    &DESCRIPTORS
}

/// A case with its parameter values and user functions.
#[derive(Debug, Clone, PartialEq)]
pub struct CatalogCase {
    pub id: CaseId,
    params: BTreeMap<String, f64>,
    functions: BTreeMap<String, Expr>,
    delay: Option<DelayRelation>,
    domain: Option<Interval>,
}

impl CatalogCase {
    pub fn new(id: CaseId) -> Self {
        CatalogCase {
            id,
            params: BTreeMap::new(),
            functions: BTreeMap::new(),
            delay: None,
            domain: None,
        }
    }

    pub fn with(mut self, name: &str, value: f64) -> Self {
        self.params.insert(name.to_string(), value);
        self
    }

    /// `f` (an expression in x) or `g` (the delay map).
    pub fn with_fn(mut self, name: &str, e: Expr) -> Self {
        self.functions.insert(name.to_string(), e);
        self
    }

    /// Delay relation for the cases whose delay is user-chosen; takes
    /// precedence over a `g` function.
    pub fn with_delay(mut self, delay: DelayRelation) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn with_domain(mut self, domain: Interval) -> Self {
        self.domain = Some(domain);
        self
    }

    /// Value of a declared parameter, falling back to its default.
    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or_else(|| {
            self.id
                .descriptor()
                .params
                .iter()
                .find(|p| p.name == name)
                .map_or(f64::NAN, |p| p.default)
        })
    }

    /// All declared parameters with defaults filled in.
    pub fn params(&self) -> BTreeMap<String, f64> {
        self.id
            .descriptor()
            .params
            .iter()
            .map(|p| (p.name.to_string(), self.param(p.name)))
            .collect()
    }

    fn domain_error(&self, message: String) -> CatalogError {
        CatalogError::ParameterDomain { case: self.id, message }
    }

    fn function(&self, name: &'static str) -> Result<Expr, CatalogError> {
        self.functions.get(name).cloned().ok_or(CatalogError::MissingFunction { case: self.id, name })
    }

    fn user_delay(&self) -> Result<DelayRelation, CatalogError> {
        if let Some(d) = &self.delay {
            return Ok(d.clone());
        }
        Ok(DelayRelation::general(self.function("g")?)?)
    }

    /// Checks names and parameter domains.
    pub fn validate(&self) -> Result<(), CatalogError> {
        let desc = self.id.descriptor();
        for name in self.params.keys() {
            if !desc.params.iter().any(|p| p.name == name) {
                return Err(CatalogError::UnknownParameter {
                    case: self.id,
                    name: name.clone(),
                });
            }
        }
        for name in self.functions.keys() {
            if !desc.functions.contains(&name.as_str()) {
                return Err(CatalogError::UnknownFunction {
                    case: self.id,
                    name: name.clone(),
                });
            }
        }
        for (name, v) in self.params() {
            if !v.is_finite() {
                return Err(self.domain_error(format!("{name} = {v} is not finite")));
            }
        }
        let positive = |name: &str| {
            let v = self.param(name);
            if v > 0.0 {
                Ok(())
            } else {
                Err(self.domain_error(format!("{name} = {v} must be positive")))
            }
        };
        match self.id {
            CaseId::A3_1 | CaseId::A3_5 => positive("C2"),
            CaseId::A3_3 => {
                let a = self.param("a");
                if !(a != 0.0 && a.abs() <= 1.0) {
                    return Err(self.domain_error(format!("a = {a} must satisfy 0 < |a| <= 1")));
                }
                Ok(())
            }
            CaseId::A3_7 => {
                let b = self.param("b");
                if !(b >= 0.0) {
                    return Err(self.domain_error(format!("b = {b} must be non-negative")));
                }
                positive("C2")
            }
            CaseId::A3_13 => {
                if self.param("C1") == 0.0 {
                    return Err(self.domain_error("C1 = 0 removes the delayed term".into()));
                }
                positive("C2")
            }
            CaseId::A4_12 | CaseId::A4_14 => positive("C"),
            _ => Ok(()),
        }
    }

    /// `x₋ = c·x` on x > 0: a q-delay for 0 < c < 1, a general map for c < 0.
    fn scaling_delay(&self, name: &str) -> Result<DelayRelation, CatalogError> {
        let c = self.param(name);
        if c > 0.0 && c < 1.0 {
            Ok(DelayRelation::qscale(c)?)
        } else if c < 0.0 {
            Ok(DelayRelation::general(expr::mul(expr::num(c), Expr::var("x")))?)
        } else {
            Err(self.domain_error(format!("{name} = {c}: (1 − {name})x > 0 on x > 0 needs {name} < 1 and {name} ≠ 0")))
        }
    }

    /// `(1 + Cx) > 0` and `C/(1 + Cx) > 0` meet in `x > −1/C` for C > 0.
    fn moebius(&self, name: &str) -> Result<(DelayRelation, Interval), CatalogError> {
        let c = self.param(name);
        Ok((DelayRelation::moebius(c)?, Interval::new(-1.0 / c, f64::INFINITY)?))
    }

    fn is_a3_3_linear(&self) -> bool {
        self.id == CaseId::A3_3 && self.param("a") == 1.0
    }

    /// The DODS of the case.
    pub fn dods(&self) -> Result<Dods, CatalogError> {
        self.validate()?;
        let p = self.params();
        let bind: Vec<(&str, f64)> = p.iter().map(|(k, v)| (k.as_str(), *v)).collect();
        let vars = ["x", "C1", "C2", "C", "a", "b"];
        let template = |text: &str| -> Result<Expr, CatalogError> { Ok(Expr::parse(text, &vars)?.substitute(&bind)) };
        let one = Expr::Number(1.0);
        let zero = Expr::Number(0.0);
        let user_domain = self.domain.unwrap_or_else(Interval::all);
        let (coef, forcing, delay, domain) = match self.id {
            CaseId::A2_1 => (self.function("f")?, zero, self.user_delay()?, user_domain),
            CaseId::A2_3 | CaseId::A3_15 => (one, self.function("f")?, self.user_delay()?, user_domain),
            CaseId::A4_5 => (one, zero, self.user_delay()?, user_domain),
            CaseId::A3_3 if self.is_a3_3_linear() => (one, zero, self.user_delay()?, user_domain),
            CaseId::A3_1 => (one, template("C1")?, DelayRelation::constant(p["C2"])?, Interval::all()),
            CaseId::A3_3 => (
                one,
                template("C1*x^(a/(1-a))")?,
                self.scaling_delay("C2")?,
                Interval::positive(),
            ),
            CaseId::A3_5 => (one, template("C1*exp(x)")?, DelayRelation::constant(p["C2"])?, Interval::all()),
            CaseId::A3_7 => {
                let (delay, domain) = self.moebius("C2")?;
                (one, template("C1*exp(b*atan(x))/sqrt(1+x^2)")?, delay, domain)
            }
            CaseId::A3_13 => (template("C1")?, zero, DelayRelation::constant(p["C2"])?, Interval::all()),
            CaseId::A3_14 => (one, template("C1")?, self.scaling_delay("C2")?, Interval::positive()),
            CaseId::A4_12 => (one, zero, DelayRelation::constant(p["C"])?, Interval::all()),
            CaseId::A4_14 => {
                let (delay, domain) = self.moebius("C")?;
                (one, zero, delay, domain)
            }
            CaseId::A4_21 => (one, zero, self.scaling_delay("C")?, Interval::positive()),
        };
        let domain = self.domain.unwrap_or(domain);
        Ok(Dods::new(Rhs::DifferenceQuotient { coef, forcing }, delay, domain)?)
    }

    /// Generating fields of the realization, in the order listed for the
    /// case. `χ∂y` has no closed form and is returned without a field.
    pub fn algebra(&self) -> Result<Vec<Generator>, CatalogError> {
        self.validate()?;
        let p = self.params();
        let field = |label: &str, xi: &str, eta: &str| -> Result<Generator, CatalogError> {
            let bind: Vec<(&str, f64)> = p.iter().map(|(k, v)| (k.as_str(), *v)).collect();
            let vars = ["x", "y", "a", "b"];
            let xi = Expr::parse(xi, &vars)?.substitute(&bind);
            let eta = Expr::parse(eta, &vars)?.substitute(&bind);
            let field = VectorField::new(xi, eta)?;
            Ok(Generator {
                label: label.to_string(),
                text: field.to_string(),
                field: Some(field),
            })
        };
        let chi = |label: &str| Generator {
            label: label.to_string(),
            text: "chi(x)*d/dy".to_string(),
            field: None,
        };
        Ok(match self.id {
            CaseId::A2_1 => vec![field("X1", "0", "1")?, field("X2", "0", "y")?],
            CaseId::A2_3 => vec![field("X1", "0", "1")?, field("X2", "0", "x")?],
            CaseId::A3_1 => vec![field("X1", "0", "1")?, field("X2", "0", "x")?, field("X3", "1", "0")?],
            CaseId::A3_3 => vec![
                field("X1", "0", "1")?,
                field("X2", "0", "x")?,
                field("X3", "(1-a)*x", "y")?,
            ],
            CaseId::A3_5 => vec![field("X1", "0", "1")?, field("X2", "0", "x")?, field("X3", "1", "y")?],
            CaseId::A3_7 => vec![
                field("X1", "0", "1")?,
                field("X2", "0", "x")?,
                field("X3", "1+x^2", "(x+b)*y")?,
            ],
            CaseId::A3_13 => vec![field("X1", "1", "0")?, field("X2", "0", "1")?, field("X3", "0", "y")?],
            CaseId::A3_14 => vec![field("X1", "0", "x")?, field("X2", "0", "1")?, field("X3", "x", "y")?],
            CaseId::A3_15 => vec![field("X1", "0", "1")?, field("X2", "0", "x")?, chi("X3")],
            CaseId::A4_5 => vec![
                field("X1", "0", "1")?,
                field("X2", "0", "x")?,
                chi("X3"),
                field("X4", "0", "y")?,
            ],
            CaseId::A4_12 => vec![
                field("X1", "0", "1")?,
                field("X2", "0", "x")?,
                field("X3", "1", "0")?,
                field("X4", "0", "y")?,
            ],
            CaseId::A4_14 => vec![
                field("X1", "0", "1")?,
                field("X2", "0", "x")?,
                field("X3", "0", "y")?,
                field("X4", "1+x^2", "x*y")?,
            ],
            CaseId::A4_21 => vec![
                field("X1", "0", "1")?,
                field("X2", "x", "y")?,
                field("X3", "0", "x")?,
                field("X4", "x", "0")?,
            ],
        })
    }
}

impl fmt::Display for CatalogCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.id)?;
        let p = self.params();
        if !p.is_empty() {
            let parts: Vec<String> = p.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write!(f, "({})", parts.join(", "))?;
        }
        Ok(())
    }
}

/// One generating field of a case's algebra.
#[derive(Debug, Clone)]
pub struct Generator {
    pub label: String,
    pub text: String,
    /// `None` for `χ∂y`, which needs a homogeneous solution χ.
    pub field: Option<VectorField>,
}

/// Everything the catalog knows about a case.
#[derive(Debug, Clone)]
pub struct CatalogEntry {
    pub case: CatalogCase,
    pub dods: Dods,
    pub algebra: Vec<Generator>,
    pub families: Vec<InvariantFamily>,
}

pub fn catalog(case: &CatalogCase) -> Result<CatalogEntry, CatalogError> {
    let dods = case.dods()?;
    let algebra = case.algebra()?;
    let families = reduction::families_for(case, &dods)?;
    Ok(CatalogEntry {
        case: case.clone(),
        dods,
        algebra,
        families,
    })
}
