//! Text format describing a DODS and optionally its initial data.
//!
//! ```text
//! # comment
//! rhs.kind = linear          # or: general
//! alpha    = "0"
//! beta     = "1"
//! gamma    = "0"
//! delay    = constant(1)
//! domain   = (-inf, inf)
//! phi      = "(x+1)^2"
//! x0       = 0
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

use super::{Dods, DodsError, Interval, Rhs, RHS_VARS};
use crate::delay::{parse_relation, DelayError};
use crate::expr::{Expr, ParseError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SpecError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("missing key `{0}`")]
    Missing(&'static str),
    #[error("key `{key}`: {source}")]
    Expr { key: String, source: ParseError },
    #[error("key `delay`: {0}")]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Dods(#[from] DodsError),
}

/// A parsed spec file.
#[derive(Debug, Clone)]
pub struct SpecFile {
    pub dods: Dods,
    pub phi: Option<Expr>,
    pub x0: Option<f64>,
}

fn unquote(v: &str) -> &str {
    let v = v.trim();
    if v.len() >= 2 && v.starts_with('"') && v.ends_with('"') {
        &v[1..v.len() - 1]
    } else {
        v
    }
}

fn strip_comment(line: &str) -> &str {
    let mut in_quotes = false;
    for (i, c) in line.char_indices() {
        match c {
            '"' => in_quotes = !in_quotes,
            '#' if !in_quotes => return &line[..i],
            _ => {}
        }
    }
    line
}

fn bound(text: &str) -> Option<f64> {
    match text.trim() {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        other => Expr::parse(other, &[]).ok()?.eval(&[]).ok(),
    }
}

/// Parses `(lo, hi)` with `inf` / `-inf` allowed.
pub fn parse_domain(text: &str) -> Option<Interval> {
    let t = text.trim();
    let inner = t.strip_prefix('(')?.strip_suffix(')')?;
    let (lo, hi) = inner.split_once(',')?;
    Interval::new(bound(lo)?, bound(hi)?).ok()
}

pub fn parse(text: &str) -> Result<SpecFile, SpecError> {
    let mut kv: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = strip_comment(raw).trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| SpecError::Syntax {
            line: i + 1,
            message: "expected `key = value`".into(),
        })?;
        let key = k.trim().to_string();
        const KNOWN: [&str; 9] = ["rhs.kind", "alpha", "beta", "gamma", "f", "delay", "domain", "phi", "x0"];
        if !KNOWN.contains(&key.as_str()) {
            return Err(SpecError::Syntax {
                line: i + 1,
                message: format!("unknown key `{key}`"),
            });
        }
        if kv.insert(key.clone(), (i + 1, v.trim().to_string())).is_some() {
            return Err(SpecError::Syntax {
                line: i + 1,
                message: format!("duplicate key `{key}`"),
            });
        }
    }
    let get = |k: &'static str| kv.get(k).map(|(_, v)| v.as_str());
    let expr = |k: &'static str, vars: &[&str]| -> Result<Expr, SpecError> {
        let v = get(k).ok_or(SpecError::Missing(k))?;
        Expr::parse(unquote(v), vars).map_err(|source| SpecError::Expr { key: k.into(), source })
    };
    let kind = unquote(get("rhs.kind").ok_or(SpecError::Missing("rhs.kind"))?);
    let rhs = match kind {
        "linear" => Rhs::Linear {
            alpha: expr("alpha", &["x"])?,
            beta: expr("beta", &["x"])?,
            gamma: match get("gamma") {
                Some(_) => expr("gamma", &["x"])?,
                None => Expr::Number(0.0),
            },
        },
        "general" => Rhs::General {
            f: expr("f", &RHS_VARS)?,
        },
        other => {
            let line = kv["rhs.kind"].0;
            return Err(SpecError::Syntax {
                line,
                message: format!("rhs.kind must be linear or general, got `{other}`"),
            });
        }
    };
    let delay = parse_relation(get("delay").ok_or(SpecError::Missing("delay"))?)?;
    let domain = match get("domain") {
        Some(v) => parse_domain(v).ok_or_else(|| SpecError::Syntax {
            line: kv["domain"].0,
            message: format!("cannot read domain `{v}`"),
        })?,
        None => Interval::all(),
    };
    let phi = match get("phi") {
        Some(_) => Some(expr("phi", &["x"])?),
        None => None,
    };
    let x0 = match get("x0") {
        Some(v) => Some(bound(unquote(v)).filter(|x| x.is_finite()).ok_or_else(|| SpecError::Syntax {
            line: kv["x0"].0,
            message: format!("cannot read x0 `{v}`"),
        })?),
        None => None,
    };
    let dods = Dods::new(rhs, delay, domain)?;
    Ok(SpecFile { dods, phi, x0 })
}
