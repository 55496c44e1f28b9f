//! Linear first-order delay ordinary differential systems (DODS): the
//! catalog of invariant families, Lie point symmetries by prolongation,
//! the method of steps and closed-form invariant solutions.

pub mod cli;
pub mod delay;
pub mod dods;
pub mod expr;
pub mod quad;
pub mod reduction;
pub mod steps;
pub mod symmetry;

use thiserror::Error;

/// Any library failure, labelled with the module whose contract failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("expr: {0}")]
    Parse(#[from] expr::ParseError),
    #[error("expr: {0}")]
    Eval(#[from] expr::EvalError),
    #[error("delay: {0}")]
    Delay(#[from] delay::DelayError),
    #[error("dods: {0}")]
    Dods(#[from] dods::DodsError),
    #[error("dods: spec file: {0}")]
    Spec(#[from] dods::specfile::SpecError),
    #[error("dods: catalog: {0}")]
    Catalog(#[from] dods::catalog::CatalogError),
    #[error("steps: {0}")]
    Steps(#[from] steps::StepsError),
    #[error("symmetry: {0}")]
    Symmetry(#[from] symmetry::SymmetryError),
    #[error("reduction: {0}")]
    Reduction(#[from] reduction::ReductionError),
    #[error("io: {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
}
