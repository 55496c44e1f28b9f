//! Method of steps: march a DODS forward interval by interval from an
//! initial function, and interrogate the resulting piecewise solution.
//!
//! Nodes of segment n are the forward images of the nodes of segment n−1,
//! so the delayed value at every node is a stored value, never an
//! interpolated one. Between nodes the solution is the quintic Hermite
//! interpolant of (y, ẏ, ÿ).

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::delay::{DelayError, DelayRelation, Mesh};
use crate::dods::{Dods, DodsError, InitialCondition, Rhs};
use crate::expr::{EvalError, Expr};
use crate::quad::adaptive_simpson;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepsError {
    #[error(transparent)]
    Delay(#[from] DelayError),
    #[error(transparent)]
    Dods(#[from] DodsError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("the exact integrating-factor scheme needs a linear right-hand side")]
    SchemeMismatch,
    #[error("x = {x} lies outside the solution range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("step count must be positive")]
    ZeroSteps,
    #[error("initial point {got} does not match g(x0) = {want}")]
    InconsistentInitialCondition { got: f64, want: f64 },
    #[error("malformed solution: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// Integrating factor with adaptive quadrature; linear systems only.
    Exact,
    /// Classical fourth-order Runge–Kutta with fixed steps.
    Rk4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub scheme: Scheme,
    /// Steps per interval; every segment carries `steps + 1` nodes.
    pub steps: usize,
    pub quad_tol: f64,
    pub max_depth: u32,
    /// Use the closed-form integrating factor when the system allows it.
    pub fast_path: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            scheme: Scheme::Exact,
            steps: 64,
            quad_tol: 1e-12,
            max_depth: 30,
            fast_path: true,
        }
    }
}

impl SolverConfig {
    pub fn rk4(steps: usize) -> Self {
        SolverConfig {
            scheme: Scheme::Rk4,
            steps,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub x: f64,
    pub y: f64,
    pub dy: f64,
    pub d2y: f64,
}

/// One interval `[x_{n−1}, x_n]` of a piecewise solution.
#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub nodes: Vec<Node>,
}

impl Segment {
    pub fn from(&self) -> f64 {
        self.nodes[0].x
    }

    pub fn to(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].x
    }

    /// `(y, ẏ, ÿ)` of the interpolant at `x ∈ [from, to]`.
    pub fn eval(&self, x: f64) -> (f64, f64, f64) {
        let n = self.nodes.len();
        let k = self.nodes.partition_point(|nd| nd.x <= x).clamp(1, n - 1) - 1;
        hermite(&self.nodes[k], &self.nodes[k + 1], x)
    }
}

/// Quintic Hermite interpolation matching value, slope and curvature at
/// both ends.
fn hermite(a: &Node, b: &Node, x: f64) -> (f64, f64, f64) {
    let h = b.x - a.x;
    let t = (x - a.x) / h;
    let (t2, t3) = (t * t, t * t * t);
    let (t4, t5) = (t3 * t, t3 * t2);
    let w = [
        1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5,
        t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5,
        0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
        0.5 * t3 - t4 + 0.5 * t5,
        -4.0 * t3 + 7.0 * t4 - 3.0 * t5,
        10.0 * t3 - 15.0 * t4 + 6.0 * t5,
    ];
    let dw = [
        -30.0 * t2 + 60.0 * t3 - 30.0 * t4,
        1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4,
        t - 4.5 * t2 + 6.0 * t3 - 2.5 * t4,
        1.5 * t2 - 4.0 * t3 + 2.5 * t4,
        -12.0 * t2 + 28.0 * t3 - 15.0 * t4,
        30.0 * t2 - 60.0 * t3 + 30.0 * t4,
    ];
    let ddw = [
        -60.0 * t + 180.0 * t2 - 120.0 * t3,
        -36.0 * t + 96.0 * t2 - 60.0 * t3,
        1.0 - 9.0 * t + 18.0 * t2 - 10.0 * t3,
        3.0 * t - 12.0 * t2 + 10.0 * t3,
        -24.0 * t + 84.0 * t2 - 60.0 * t3,
        60.0 * t - 180.0 * t2 + 120.0 * t3,
    ];
    let c = [a.y, h * a.dy, h * h * a.d2y, h * h * b.d2y, h * b.dy, b.y];
    let dot = |v: &[f64; 6]| v.iter().zip(&c).map(|(p, q)| p * q).sum::<f64>();
    (dot(&w), dot(&dw) / h, dot(&ddw) / (h * h))
}

/// Position of residual samples within their cell: 2 − golden ratio.
const SAMPLE_OFFSET: f64 = 0.381_966_011_250_105_1;

/// Which one-sided limit to report at a mesh point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A C⁰ function on `[x₋₁, x_N]`, smooth on each mesh interval.
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseSolution {
    mesh: Mesh,
    segments: Vec<Segment>,
}

impl PiecewiseSolution {
    /// Assembles a solution, checking that segment ends coincide with the
    /// mesh and that nodes increase.
    pub fn from_parts(mesh: Mesh, segments: Vec<Segment>) -> Result<Self, StepsError> {
        let p = mesh.points();
        if segments.len() != p.len() - 1 {
            return Err(StepsError::Malformed(format!(
                "{} segments for {} mesh intervals",
                segments.len(),
                p.len() - 1
            )));
        }
        for (i, s) in segments.iter().enumerate() {
            if s.nodes.len() < 2 {
                return Err(StepsError::Malformed(format!("segment {i} has fewer than two nodes")));
            }
            if s.from() != p[i] || s.to() != p[i + 1] {
                return Err(StepsError::Malformed(format!("segment {i} does not span [{}, {}]", p[i], p[i + 1])));
            }
            if s.nodes.windows(2).any(|w| !(w[0].x < w[1].x)) {
                return Err(StepsError::Malformed(format!("segment {i} nodes are not increasing")));
            }
            if s.nodes.iter().any(|n| !(n.y.is_finite() && n.dy.is_finite() && n.d2y.is_finite())) {
                return Err(StepsError::Malformed(format!("segment {i} holds non-finite values")));
            }
        }
        Ok(PiecewiseSolution { mesh, segments })
    }

    /// Samples closed-form pieces onto `mesh`: either one expression for
    /// every segment or one per segment (segment 0 first).
    pub fn sample(mesh: Mesh, pieces: &[Expr], nodes: usize) -> Result<Self, StepsError> {
        let count = mesh.points().len() - 1;
        if pieces.len() != 1 && pieces.len() != count {
            return Err(StepsError::Malformed(format!("expected 1 or {count} pieces, got {}", pieces.len())));
        }
        if nodes == 0 {
            return Err(StepsError::ZeroSteps);
        }
        let p = mesh.points().to_vec();
        let mut segments = Vec::with_capacity(count);
        for i in 0..count {
            let e = &pieces[if pieces.len() == 1 { 0 } else { i }];
            segments.push(sample_segment(e, &uniform(p[i], p[i + 1], nodes))?);
        }
        Self::from_parts(mesh, segments)
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.mesh.start()
    }

    pub fn end(&self) -> f64 {
        self.mesh.end()
    }

    fn out_of_range(&self, x: f64) -> StepsError {
        StepsError::OutOfRange {
            x,
            lo: self.start(),
            hi: self.end(),
        }
    }

    /// Index of the segment that supplies the `side` limit at x.
    fn segment_for(&self, x: f64, side: Side) -> Result<usize, StepsError> {
        if !(x >= self.start() && x <= self.end()) {
            return Err(self.out_of_range(x));
        }
        let p = self.mesh.points();
        let last = self.segments.len() - 1;
        // number of mesh points strictly below / at-or-below x
        let below = p.partition_point(|&m| m < x);
        let at_or_below = p.partition_point(|&m| m <= x);
        let idx = match side {
            Side::Left => below.max(1) - 1,
            Side::Right => at_or_below.max(1) - 1,
        };
        Ok(idx.min(last))
    }

    /// `(y, ẏ, ÿ)` taking the one-sided limit from `side` at mesh points.
    pub fn eval_side(&self, x: f64, side: Side) -> Result<(f64, f64, f64), StepsError> {
        let i = self.segment_for(x, side)?;
        Ok(self.segments[i].eval(x))
    }

    /// `(y, ẏ₋, ẏ₊)`; the derivatives differ only at mesh points.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64), StepsError> {
        let (y, dl, _) = self.eval_side(x, Side::Left)?;
        let (_, dr, _) = self.eval_side(x, Side::Right)?;
        Ok((y, dl, dr))
    }

    pub fn value(&self, x: f64) -> Result<f64, StepsError> {
        Ok(self.eval_side(x, Side::Left)?.0)
    }

    /// `ẏ₊ − ẏ₋` at `x_n`, `0 ≤ n < N`.
    pub fn derivative_jump(&self, n: usize) -> Result<f64, StepsError> {
        if n >= self.mesh.intervals() {
            return Err(StepsError::OutOfRange {
                x: n as f64,
                lo: 0.0,
                hi: self.mesh.intervals() as f64 - 1.0,
            });
        }
        let (_, l, r) = self.eval(self.mesh.x(n as i64))?;
        Ok(r - l)
    }

    /// Max |r₁| per forward segment, one sample in each of `samples` equal
    /// cells, placed off the node grid (r₁ vanishes at nodes by construction).
    pub fn segment_residuals(&self, d: &Dods, samples: usize) -> Result<Vec<f64>, StepsError> {
        let samples = samples.max(1);
        let p = self.mesh.points();
        let mut out = Vec::with_capacity(self.segments.len() - 1);
        for n in 1..self.segments.len() {
            let (a, b) = (p[n], p[n + 1]);
            let mut worst = 0.0f64;
            for j in 0..samples {
                let x = a + (j as f64 + SAMPLE_OFFSET) * (b - a) / samples as f64;
                let (y, dy, _) = self.segments[n].eval(x);
                let xm = d.delay().delayed_point(x)?;
                let ym = self.value(xm)?;
                let (r1, _) = d.residual(x, y, xm, ym, dy)?;
                worst = worst.max(r1.abs());
            }
            out.push(worst);
        }
        Ok(out)
    }

    /// Max |r₁| over all forward segments; the project-wide oracle.
    pub fn residual_scan(&self, d: &Dods, samples: usize) -> Result<f64, StepsError> {
        Ok(self.segment_residuals(d, samples)?.into_iter().fold(0.0, f64::max))
    }

    /// Distinct node abscissae in order; mesh points appear once.
    pub fn node_xs(&self) -> Vec<f64> {
        let mut xs = Vec::new();
        for (i, s) in self.segments.iter().enumerate() {
            let skip = usize::from(i > 0);
            xs.extend(s.nodes.iter().skip(skip).map(|n| n.x));
        }
        xs
    }

    /// CSV with header `x,y,ydot_left,ydot_right`, one row per node.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y,ydot_left,ydot_right\n");
        for x in self.node_xs() {
            let (y, l, r) = self.eval(x).expect("node abscissae lie in range");
            out.push_str(&format!("{x:.16e},{y:.16e},{l:.16e},{r:.16e}\n"));
        }
        out
    }

    /// JSON `{kind, mesh, segments:[{from, to, nodes:[{x,y,dy,d2y}]}]}`.
    pub fn to_json(&self) -> Value {
        let segments: Vec<Value> = self
            .segments
            .iter()
            .map(|s| json!({"from": s.from(), "to": s.to(), "nodes": s.nodes}))
            .collect();
        json!({"kind": "solution", "mesh": self.mesh.points(), "segments": segments})
    }

    /// Reads the JSON written by [`to_json`](Self::to_json). Nodes without
    /// `d2y` get curvature from divided differences of `dy`.
    pub fn from_json(v: &Value, relation: &DelayRelation) -> Result<Self, StepsError> {
        let bad = |m: &str| StepsError::Malformed(m.to_string());
        let points: Vec<f64> = serde_json::from_value(v.get("mesh").cloned().ok_or_else(|| bad("missing mesh"))?)
            .map_err(|e| bad(&format!("mesh: {e}")))?;
        let mesh = Mesh::new(points, relation.clone())?;
        let segs = v.get("segments").and_then(Value::as_array).ok_or_else(|| bad("missing segments"))?;
        let mut segments = Vec::with_capacity(segs.len());
        for s in segs {
            #[derive(Deserialize)]
            struct Loose {
                x: f64,
                y: f64,
                dy: f64,
                d2y: Option<f64>,
            }
            let raw: Vec<Loose> = serde_json::from_value(s.get("nodes").cloned().ok_or_else(|| bad("missing nodes"))?)
                .map_err(|e| bad(&format!("nodes: {e}")))?;
            if raw.len() < 2 {
                return Err(bad("segment with fewer than two nodes"));
            }
            let mut nodes: Vec<Node> = raw
                .iter()
                .map(|n| Node {
                    x: n.x,
                    y: n.y,
                    dy: n.dy,
                    d2y: n.d2y.unwrap_or(f64::NAN),
                })
                .collect();
            for i in 0..nodes.len() {
                if raw[i].d2y.is_none() {
                    let (a, b) = (i.saturating_sub(1), (i + 1).min(nodes.len() - 1));
                    nodes[i].d2y = (raw[b].dy - raw[a].dy) / (raw[b].x - raw[a].x);
                }
            }
            segments.push(Segment { nodes });
        }
        Self::from_parts(mesh, segments)
    }
}

fn uniform(a: f64, b: f64, steps: usize) -> Vec<f64> {
    let mut xs: Vec<f64> = (0..=steps).map(|j| a + (b - a) * j as f64 / steps as f64).collect();
    xs[steps] = b;
    xs
}

fn sample_segment(e: &Expr, xs: &[f64]) -> Result<Segment, StepsError> {
    let d1 = e.differentiate("x");
    let d2 = d1.differentiate("x");
    let nodes = xs
        .iter()
        .map(|&x| {
            Ok(Node {
                x,
                y: e.at(x)?,
                dy: d1.at(x)?,
                d2y: d2.at(x)?,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    Ok(Segment { nodes })
}

/// Node data at x given y and the delayed node: ẏ from the DODE and ÿ from
/// its total derivative `f_x + f_y·ẏ + f_{y₋}·ẏ₋·g'(x)`.
fn complete_node(d: &Dods, x: f64, y: f64, prev: &Node) -> Result<Node, StepsError> {
    let dy = d.rhs_value(x, y, prev.y)?;
    let [fx, fy, fym] = d.rhs_partials(x, y, prev.y)?;
    let d2y = fx + fy * dy + fym * prev.dy * d.delay().derivative(x)?;
    Ok(Node { x, y, dy, d2y })
}

/// Integrating factor `E(s, t) = exp(∫_s^t α)`.
enum Factor {
    /// `ẏ = c·Δy/Δx` with `Δx = τ`: `E = exp(c(t − s)/τ)`.
    Uniform { rate: f64 },
    /// `Δx = (1 − q)x + τ`: `E = (Δx(t)/Δx(s))^{c/(1−q)}`.
    Power { q: f64, tau: f64, exponent: f64 },
    Quadrature(Expr),
}

impl Factor {
    fn new(d: &Dods, alpha: &Expr, fast: bool) -> Factor {
        if fast {
            if let (Rhs::DifferenceQuotient { coef, .. }, Some((q, tau))) = (d.rhs(), d.delay().affine_params()) {
                if let Ok(c) = coef.eval(&[]) {
                    if q == 1.0 {
                        return Factor::Uniform { rate: c / tau };
                    }
                    return Factor::Power {
                        q,
                        tau,
                        exponent: c / (1.0 - q),
                    };
                }
            }
        }
        Factor::Quadrature(alpha.clone())
    }

    fn eval(&self, s: f64, t: f64, tol: f64, depth: u32) -> Result<f64, StepsError> {
        Ok(match self {
            Factor::Uniform { rate } => (rate * (t - s)).exp(),
            Factor::Power { q, tau, exponent } => {
                let dt = (1.0 - q) * t + tau;
                let ds = (1.0 - q) * s + tau;
                (dt / ds).powf(*exponent)
            }
            Factor::Quadrature(alpha) => {
                let mut f = |u: f64| alpha.at(u);
                adaptive_simpson(&mut f, s, t, tol, depth)?.exp()
            }
        })
    }
}

/// Solves `d` forward over `n` intervals from `init`.
pub fn solve(d: &Dods, init: &InitialCondition, n: usize, cfg: &SolverConfig) -> Result<PiecewiseSolution, StepsError> {
    if cfg.steps == 0 {
        return Err(StepsError::ZeroSteps);
    }
    let linear = d.linear_coeffs();
    if cfg.scheme == Scheme::Exact && linear.is_none() {
        return Err(StepsError::SchemeMismatch);
    }
    let mesh = d.delay().build_mesh(init.x0, n)?;
    let want = mesh.x(-1);
    if (init.x_minus1 - want).abs() > 1e-12 * want.abs().max(1.0) {
        return Err(StepsError::InconsistentInitialCondition {
            got: init.x_minus1,
            want,
        });
    }
    let p = mesh.points().to_vec();
    let mut segments = vec![sample_segment(&init.phi, &uniform(p[0], p[1], cfg.steps))?];

    let factor = linear.as_ref().map(|(alpha, _, _)| Factor::new(d, alpha, cfg.fast_path));
    for seg in 1..p.len() - 1 {
        let prev = &segments[seg - 1];
        let m = prev.nodes.len() - 1;
        let mut xs = Vec::with_capacity(m + 1);
        xs.push(p[seg]);
        for node in &prev.nodes[1..m] {
            xs.push(d.delay().advance(node.x)?);
        }
        xs.push(p[seg + 1]);
        if xs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(StepsError::Delay(DelayError::NotMonotone {
                lo: p[seg],
                hi: p[seg + 1],
            }));
        }

        let mut nodes = Vec::with_capacity(m + 1);
        let start_y = prev.nodes[m].y;
        nodes.push(complete_node(d, xs[0], start_y, &prev.nodes[0])?);
        for k in 0..m {
            let (u0, u1) = (xs[k], xs[k + 1]);
            let y0 = nodes[k].y;
            let y1 = match (cfg.scheme, &linear, &factor) {
                (Scheme::Exact, Some((_, beta, gamma)), Some(factor)) => {
                    let e = factor.eval(u0, u1, cfg.quad_tol, cfg.max_depth)?;
                    let mut integrand = |s: f64| -> Result<f64, StepsError> {
                        let xm = d.delay().delayed_point(s)?;
                        let ym = prev.eval(xm).0;
                        let forcing = beta.at(s)? * ym + gamma.at(s)?;
                        Ok(factor.eval(s, u1, cfg.quad_tol, cfg.max_depth)? * forcing)
                    };
                    y0 * e + adaptive_simpson(&mut integrand, u0, u1, cfg.quad_tol, cfg.max_depth)?
                }
                _ => {
                    let h = u1 - u0;
                    let mid = u0 + 0.5 * h;
                    let ym_mid = prev.eval(d.delay().delayed_point(mid)?).0;
                    let k1 = d.rhs_value(u0, y0, prev.nodes[k].y)?;
                    let k2 = d.rhs_value(mid, y0 + 0.5 * h * k1, ym_mid)?;
                    let k3 = d.rhs_value(mid, y0 + 0.5 * h * k2, ym_mid)?;
                    let k4 = d.rhs_value(u1, y0 + h * k3, prev.nodes[k + 1].y)?;
                    y0 + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                }
            };
            nodes.push(complete_node(d, u1, y1, &prev.nodes[k + 1])?);
        }
        segments.push(Segment { nodes });
    }
    PiecewiseSolution::from_parts(mesh, segments)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dods::Interval;

    fn x(s: &str) -> Expr {
        Expr::parse(s, &["x"]).unwrap()
    }

    /// ẏ = Δy/Δx with Δx = τ.
    fn quotient(rel: DelayRelation, dom: Interval) -> Dods {
        Dods::new(
            Rhs::DifferenceQuotient {
                coef: x("1"),
                forcing: x("0"),
            },
            rel,
            dom,
        )
        .unwrap()
    }

    fn kink_instance(cfg: &SolverConfig) -> (Dods, PiecewiseSolution) {
        let d = quotient(DelayRelation::constant(1.0).unwrap(), Interval::all());
        let init = InitialCondition::new(x("(x+1)^2"), 0.0, d.delay()).unwrap();
        let s = solve(&d, &init, 3, cfg).unwrap();
        (d, s)
    }

    #[test]
    fn hermite_reproduces_quintics() {
        let e = x("1 - 2*x + 0.5*x^3 - x^5");
        let seg = sample_segment(&e, &[0.0, 0.7]).unwrap();
        for t in [0.1, 0.35, 0.6] {
            let (y, dy, d2y) = seg.eval(t);
            assert!((y - e.at(t).unwrap()).abs() < 1e-14);
            assert!((dy - e.differentiate("x").at(t).unwrap()).abs() < 1e-13);
            assert!((d2y - e.differentiate("x").differentiate("x").at(t).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn kink_instance_matches_hand_solution() {
        let (d, s) = kink_instance(&SolverConfig::default());
        let exact = x("-exp(x) + (x+1)^2 + 1");
        for i in 0..=20 {
            let t = i as f64 / 20.0;
            assert!((s.value(t).unwrap() - exact.at(t).unwrap()).abs() < 1e-10);
        }
        assert!((s.value(1.0).unwrap() - (5.0 - std::f64::consts::E)).abs() < 1e-10);
        let (y, l, r) = s.eval(0.0).unwrap();
        assert_eq!((y, l, r), (1.0, 2.0, 1.0));
        assert!((s.derivative_jump(0).unwrap() + 1.0).abs() < 1e-14);
        assert!(s.derivative_jump(1).unwrap().abs() < 1e-10);
        assert!(s.residual_scan(&d, 16).unwrap() < 1e-10);
        assert!(matches!(s.eval(4.0), Err(StepsError::OutOfRange { .. })));
    }

    #[test]
    fn fast_path_matches_quadrature_path() {
        for rel in [DelayRelation::constant(0.7).unwrap(), DelayRelation::qscale(0.5).unwrap()] {
            let dom = if matches!(rel, DelayRelation::QScale { .. }) {
                Interval::positive()
            } else {
                Interval::all()
            };
            let d = Dods::new(
                Rhs::DifferenceQuotient {
                    coef: x("1.5"),
                    forcing: x("sin(x)"),
                },
                rel,
                dom,
            )
            .unwrap();
            let init = InitialCondition::new(x("1 + x"), 1.0, d.delay()).unwrap();
            let fast = solve(&d, &init, 3, &SolverConfig::default()).unwrap();
            let slow = solve(
                &d,
                &init,
                3,
                &SolverConfig {
                    fast_path: false,
                    ..SolverConfig::default()
                },
            )
            .unwrap();
            for (a, b) in fast.segments().iter().zip(slow.segments()) {
                for (p, q) in a.nodes.iter().zip(&b.nodes) {
                    assert!((p.y - q.y).abs() <= 1e-10 * p.y.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn rk4_is_fourth_order() {
        let (d, s64) = kink_instance(&SolverConfig::rk4(64));
        let (_, s32) = kink_instance(&SolverConfig::rk4(32));
        let exact = x("-exp(x) + (x+1)^2 + 1");
        assert!((s64.value(0.5).unwrap() - exact.at(0.5).unwrap()).abs() < 1e-5);
        let r64 = s64.residual_scan(&d, 16).unwrap();
        let r32 = s32.residual_scan(&d, 16).unwrap();
        assert!(r64 < 1e-5);
        assert!(r32 / r64 >= 8.0, "{r32} / {r64}");
    }

    #[test]
    fn constants_stay_constant() {
        let d = quotient(DelayRelation::moebius(0.5).unwrap(), Interval::new(-2.0, f64::INFINITY).unwrap());
        let init = InitialCondition::new(x("3"), 0.0, d.delay()).unwrap();
        let s = solve(&d, &init, 3, &SolverConfig::default()).unwrap();
        for seg in s.segments() {
            for n in &seg.nodes {
                assert!((n.y - 3.0).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn exact_scheme_needs_linear_rhs() {
        let d = Dods::new(
            Rhs::General {
                f: Expr::parse("ym^3", &["x", "y", "ym"]).unwrap(),
            },
            DelayRelation::constant(1.0).unwrap(),
            Interval::all(),
        )
        .unwrap();
        let init = InitialCondition::new(x("1"), 0.0, d.delay()).unwrap();
        assert_eq!(solve(&d, &init, 2, &SolverConfig::default()), Err(StepsError::SchemeMismatch));
        let s = solve(&d, &init, 2, &SolverConfig::rk4(64)).unwrap();
        // on [0,1] the history is 1, so y = 1 + x
        assert!((s.value(1.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let (d, s) = kink_instance(&SolverConfig::default());
        let v: Value = serde_json::from_str(&s.to_json().to_string()).unwrap();
        let back = PiecewiseSolution::from_json(&v, d.delay()).unwrap();
        assert_eq!(back, s);
        let csv = s.to_csv();
        assert!(csv.starts_with("x,y,ydot_left,ydot_right\n"));
        assert_eq!(csv.lines().count(), 1 + s.node_xs().len());
        assert!(!csv.contains('\r'));
    }
}
