//! Command-line front end. Every command writes one JSON object with a
//! top-level `kind`, except `solve --format csv`.
//!
//! Exit codes: 0 success, 1 domain or validation error, 2 usage error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use crate::delay::parse_relation;
use crate::dods::catalog::{catalog, list_cases, CaseId, CatalogCase};
use crate::dods::specfile::{self, parse_domain};
use crate::dods::{Dods, InitialCondition};
use crate::expr::Expr;
use crate::reduction::{
    build_solution, find_family, solve_constraints, verify, ParamClass, SolveOptions, Status, VERIFY_TOL,
};
use crate::steps::{solve, PiecewiseSolution, Scheme, SolverConfig};
use crate::symmetry::char_roots;
use crate::Error;

/// Residual samples per interval for piecewise solutions.
const SCAN_SAMPLES: usize = 16;

#[derive(Debug, Parser)]
#[command(name = "lindods", version, about = "Linear delay ODE systems: catalog, solver, symmetries, invariant solutions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Browse the invariant DODS families.
    Catalog {
        #[command(subcommand)]
        action: CatalogAction,
    },
    /// Solve by the method of steps.
    Solve(SolveArgs),
    /// Build the mesh x₋₁ < x₀ < … of a delay relation.
    Mesh {
        /// e.g. `constant(1)`, `affine(2, 1)`, `qscale(0.5)`, `moebius(1)`, `general("x-1")`.
        #[arg(long)]
        delay: String,
        #[arg(long, allow_hyphen_values = true)]
        x0: f64,
        #[arg(long)]
        n: usize,
    },
    /// Roots of the characteristic equation λ = (1 − e^{−λC})/C.
    Roots {
        #[arg(long = "C", allow_hyphen_values = true)]
        c: f64,
        #[arg(long)]
        k: u32,
    },
    /// Invariant solution of one optimal-system element.
    Reduce(ReduceArgs),
    /// Residual of a candidate solution.
    Verify(VerifyArgs),
}

#[derive(Debug, Subcommand)]
enum CatalogAction {
    /// All cases with parameters and formulas.
    List,
    /// One case: its DODS, algebra and invariant-solution families.
    Show {
        case: String,
        #[command(flatten)]
        setup: CaseSetup,
    },
}

/// Parameters and user functions of a catalog case.
#[derive(Debug, Args, Default)]
struct CaseSetup {
    /// `name=value`, repeatable.
    #[arg(long = "params", value_name = "NAME=VALUE")]
    params: Vec<String>,
    /// `f=<expr>` or `g=<expr>`, repeatable.
    #[arg(long = "fn", value_name = "NAME=EXPR")]
    functions: Vec<String>,
    /// Delay relation for cases with a user-chosen delay.
    #[arg(long)]
    delay: Option<String>,
    /// Open interval `(lo, hi)`.
    #[arg(long, allow_hyphen_values = true)]
    domain: Option<String>,
}

#[derive(Debug, Args)]
#[group(id = "system", required = true, multiple = false, args = ["spec", "case"])]
struct SystemArgs {
    /// DODS spec file.
    #[arg(long)]
    spec: Option<String>,
    /// Catalog case id.
    #[arg(long)]
    case: Option<String>,
    #[command(flatten)]
    setup: CaseSetup,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SchemeArg {
    Exact,
    Rk4,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Initial function on [x₋₁, x₀].
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<f64>,
    #[arg(long)]
    intervals: usize,
    #[arg(long, value_enum, default_value = "exact")]
    scheme: SchemeArg,
    /// Steps per interval.
    #[arg(long, default_value_t = 64)]
    steps: usize,
    #[arg(long)]
    out: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
}

#[derive(Debug, Args)]
struct ReduceArgs {
    #[arg(long)]
    case: String,
    #[command(flatten)]
    setup: CaseSetup,
    /// Optimal-system element, e.g. `aX1+X3`, `X1+X2`, `Y1-Y2`.
    #[arg(long)]
    subalgebra: Option<String>,
    /// Pin `a`, `A` or `s`: `name=value`, repeatable.
    #[arg(long = "fix", value_name = "NAME=VALUE")]
    fix: Vec<String>,
    /// Impose the constraint as printed where it differs from the derived one.
    #[arg(long)]
    printed: bool,
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long)]
    out: Option<String>,
}

#[derive(Debug, Args)]
#[group(id = "candidate", required = true, multiple = false, args = ["solution", "solution_file"])]
struct VerifyArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Closed-form y(x).
    #[arg(long, allow_hyphen_values = true)]
    solution: Option<String>,
    /// JSON written by `solve --format json`.
    #[arg(long)]
    solution_file: Option<String>,
    #[arg(long, default_value_t = 200)]
    samples: usize,
}

/// Runs one command; `argv[0]` is the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                2
            } else {
                let _ = out.write_all(text.as_bytes());
                0
            };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Domain(e)) => {
            let _ = writeln!(err, "error: {e}");
            1
        }
    }
}

enum Failure {
    Usage(String),
    Domain(Error),
}

impl<E: Into<Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Failure> {
    match cmd {
        Command::Catalog { action } => match action {
            CatalogAction::List => emit_json(&catalog_list(), None, out),
            CatalogAction::Show { case, setup } => {
                let case = build_case(&case, &setup)?;
                emit_json(&catalog_show(&case)?, None, out)
            }
        },
        Command::Solve(args) => run_solve(args, out),
        Command::Mesh { delay, x0, n } => {
            let rel = parse_relation(&delay)?;
            let mesh = rel.build_mesh(x0, n)?;
            emit_json(
                &json!({"kind": "mesh", "relation": rel.to_string(), "points": mesh.points()}),
                None,
                out,
            )
        }
        Command::Roots { c, k } => {
            let roots = char_roots(c, k)?;
            let list: Vec<Value> = roots
                .iter()
                .map(|r| {
                    json!({
                        "k": r.k,
                        "re_z": r.z.re,
                        "im_z": r.z.im,
                        "re_lambda": r.lambda.re,
                        "im_lambda": r.lambda.im,
                        "residual": r.residual,
                    })
                })
                .collect();
            emit_json(&json!({"kind": "roots", "C": c, "roots": list}), None, out)
        }
        Command::Reduce(args) => run_reduce(args, out),
        Command::Verify(args) => run_verify(args, out),
    }
}

fn split_pair(text: &str, flag: &str) -> Result<(String, String), Failure> {
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(Failure::Usage(format!("{flag} expects NAME=VALUE, got `{text}`"))),
    }
}

fn number(text: &str) -> Result<f64, Failure> {
    let v = Expr::parse(text, &[])?.eval(&[])?;
    Ok(v)
}

fn pairs(list: &[String], flag: &str) -> Result<BTreeMap<String, f64>, Failure> {
    let mut map = BTreeMap::new();
    for item in list {
        let (k, v) = split_pair(item, flag)?;
        map.insert(k, number(&v)?);
    }
    Ok(map)
}

fn build_case(id: &str, setup: &CaseSetup) -> Result<CatalogCase, Failure> {
    let id: CaseId = id.parse().map_err(Error::from)?;
    let mut case = CatalogCase::new(id);
    for (k, v) in pairs(&setup.params, "--params")? {
        case = case.with(&k, v);
    }
    for item in &setup.functions {
        let (k, v) = split_pair(item, "--fn")?;
        case = case.with_fn(&k, Expr::parse(&v, &["x"])?);
    }
    if let Some(d) = &setup.delay {
        case = case.with_delay(parse_relation(d)?);
    }
    if let Some(d) = &setup.domain {
        let dom = parse_domain(d).ok_or_else(|| Error::Invalid(format!("cli: cannot read domain `{d}`")))?;
        case = case.with_domain(dom);
    }
    Ok(case)
}

fn case_setup_used(s: &CaseSetup) -> bool {
    !s.params.is_empty() || !s.functions.is_empty() || s.delay.is_some() || s.domain.is_some()
}

/// The system plus the initial data a spec file may carry.
fn load_system(sys: &SystemArgs) -> Result<(Dods, Option<Expr>, Option<f64>), Failure> {
    match (&sys.spec, &sys.case) {
        (Some(path), _) => {
            if case_setup_used(&sys.setup) {
                return Err(Failure::Usage("--params, --fn, --delay and --domain go with --case, not --spec".into()));
            }
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let spec = specfile::parse(&text)?;
            Ok((spec.dods, spec.phi, spec.x0))
        }
        (None, Some(id)) => Ok((build_case(id, &sys.setup)?.dods()?, None, None)),
        (None, None) => Err(Failure::Usage("one of --spec or --case is required".into())),
    }
}

fn run_solve(args: SolveArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (d, spec_phi, spec_x0) = load_system(&args.system)?;
    let phi = match (&args.phi, spec_phi) {
        (Some(p), _) => Expr::parse(p, &["x"])?,
        (None, Some(p)) => p,
        (None, None) => return Err(Failure::Usage("--phi is required unless the spec file sets phi".into())),
    };
    let x0 = match args.x0.or(spec_x0) {
        Some(x) => x,
        None => return Err(Failure::Usage("--x0 is required unless the spec file sets x0".into())),
    };
    let cfg = SolverConfig {
        scheme: match args.scheme {
            SchemeArg::Exact => Scheme::Exact,
            SchemeArg::Rk4 => Scheme::Rk4,
        },
        steps: args.steps,
        ..SolverConfig::default()
    };
    let init = InitialCondition::new(phi, x0, d.delay())?;
    let sol = solve(&d, &init, args.intervals, &cfg)?;
    match args.format {
        Format::Csv => emit_text(&sol.to_csv(), args.out.as_deref(), out),
        Format::Json => {
            let mut v = sol.to_json();
            let obj = v.as_object_mut().expect("solution JSON is an object");
            obj.insert("max_residual".into(), json!(sol.residual_scan(&d, SCAN_SAMPLES)?));
            obj.insert("scheme".into(), json!(cfg.scheme));
            obj.insert("steps".into(), json!(cfg.steps));
            emit_json(&v, args.out.as_deref(), out)
        }
    }
}

fn run_reduce(args: ReduceArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let case = build_case(&args.case, &args.setup)?;
    let entry = catalog(&case)?;
    let labels: Vec<&str> = entry.families.iter().map(|f| f.label()).collect();
    let wanted = match (&args.subalgebra, labels.as_slice()) {
        (Some(s), _) => s.clone(),
        (None, [only]) => only.to_string(),
        (None, []) => {
            return Err(Error::Invalid(format!("reduction: {} has no invariant solutions", case.id)).into());
        }
        (None, many) => {
            return Err(Error::Invalid(format!("reduction: {} has several families, pick one with --subalgebra: {}", case.id, many.join(", "))).into())
        }
    };
    let (fam, sign) = find_family(&entry.families, &wanted).ok_or_else(|| {
        Error::Invalid(format!("reduction: {} has no family `{wanted}`; choose from {}", case.id, labels.join(", ")))
    })?;
    let mut opts = SolveOptions::default();
    for (k, v) in pairs(&args.fix, "--fix")? {
        opts = opts.fix(&k, v);
    }
    if let Some(s) = sign {
        opts = opts.fix("s", s);
    }
    if args.printed {
        opts = opts.printed();
    }
    let sol = solve_constraints(fam, &opts)?;
    let (y, b, residual) = match sol.status {
        Status::Solved => {
            let (y, b) = build_solution(fam, &sol, &BTreeMap::new())?;
            let r = verify(&y, &entry.dods, args.samples)?;
            (Some(y.to_string()), Some(b), Some(r))
        }
        Status::TrivialOnly => {
            let zero = Expr::Number(0.0);
            (Some(zero.to_string()), sol.params.get("B").copied(), Some(verify(&zero, &entry.dods, args.samples)?))
        }
        Status::NoSolution => (None, sol.params.get("B").copied(), None),
    };
    let v = json!({
        "kind": "reduce",
        "case": case.id.name(),
        "case_params": case.params(),
        "subalgebra": wanted,
        "constraint": if args.printed { "printed" } else { "derived" },
        "status": sol.status.to_string(),
        "params": sol.params,
        "free": sol.free,
        "y": y,
        "B": b,
        "max_residual": residual,
        "note": sol.note,
    });
    emit_json(&v, args.out.as_deref(), out)
}

fn run_verify(args: VerifyArgs, out: &mut dyn Write) -> Result<(), Failure> {
    let (d, _, _) = load_system(&args.system)?;
    let residual = match (&args.solution, &args.solution_file) {
        (Some(text), _) => verify(&Expr::parse(text, &["x"])?, &d, args.samples)?,
        (None, Some(path)) => {
            let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
                path: path.clone(),
                source,
            })?;
            let v: Value = serde_json::from_str(&text)?;
            PiecewiseSolution::from_json(&v, d.delay())?.residual_scan(&d, SCAN_SAMPLES)?
        }
        (None, None) => return Err(Failure::Usage("one of --solution or --solution-file is required".into())),
    };
    emit_json(
        &json!({"kind": "verify", "max_residual": residual, "passes": residual <= VERIFY_TOL}),
        None,
        out,
    )
}

fn catalog_list() -> Value {
    let cases: Vec<Value> = list_cases()
        .iter()
        .map(|c| {
            let params: Vec<Value> = c
                .params
                .iter()
                .map(|p| json!({"name": p.name, "default": p.default, "domain": p.domain}))
                .collect();
            json!({
                "id": c.id.name(),
                "params": params,
                "functions": c.functions,
                "dode": c.dode,
                "delay": c.delay,
                "formula": c.formula(),
            })
        })
        .collect();
    json!({"kind": "catalog", "cases": cases})
}

fn catalog_show(case: &CatalogCase) -> Result<Value, Failure> {
    let entry = catalog(case)?;
    let algebra: Vec<Value> = entry
        .algebra
        .iter()
        .map(|g| json!({"label": g.label, "field": g.text, "deferred": g.field.is_none()}))
        .collect();
    let families: Vec<Value> = entry
        .families
        .iter()
        .map(|f| {
            let mut params = Map::new();
            for (name, class) in f.params() {
                let class = match class {
                    ParamClass::Free => "free",
                    ParamClass::Determined => "determined",
                    ParamClass::ExistenceCondition => "existence_condition",
                };
                params.insert((*name).to_string(), json!(class));
            }
            json!({"subalgebra": f.label(), "y": f.h().to_string(), "delay": f.k().text(), "params": params})
        })
        .collect();
    let desc = case.id.descriptor();
    Ok(json!({
        "kind": "case",
        "id": case.id.name(),
        "params": case.params(),
        "formula": desc.formula(),
        "system": entry.dods.to_string(),
        "domain": entry.dods.domain().to_string(),
        "algebra": algebra,
        "families": families,
    }))
}

fn emit_text(text: &str, path: Option<&str>, out: &mut dyn Write) -> Result<(), Failure> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|source| Error::Io {
            path: p.to_string(),
            source,
        })?,
        None => out.write_all(text.as_bytes()).map_err(|source| Error::Io {
            path: "<stdout>".into(),
            source,
        })?,
    }
    Ok(())
}

fn emit_json(v: &Value, path: Option<&str>, out: &mut dyn Write) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    emit_text(&text, path, out)
}
