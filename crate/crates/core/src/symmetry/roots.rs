//! Roots of the characteristic equation `λ = (1 − e^{−λC})/C` via
//! `z = −λC`, which turns it into `e^z = 1 + z`.

use std::f64::consts::PI;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};

use super::{ScalarFn, SymmetryError, VectorField};
use crate::expr::{literal, Expr};

const ROOT_TOL: f64 = 1e-12;
const MAX_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharacteristicRoot {
    pub c: f64,
    pub k: u32,
    pub z: Complex64,
    pub lambda: Complex64,
    /// `|e^z − 1 − z|`.
    pub residual: f64,
}

fn residual(z: Complex64) -> f64 {
    (z.exp() - 1.0 - z).norm()
}

fn in_window(z: Complex64, k: u32) -> bool {
    let centre = 2.0 * PI * k as f64;
    z.im > centre - PI && z.im < centre + PI && z.is_finite()
}

/// Newton on `e^z − 1 − z`; `None` if it stalls or leaves the window.
fn newton(mut z: Complex64, k: u32) -> Option<Complex64> {
    for _ in 0..MAX_ITER {
        let ez = z.exp();
        let step = (ez - 1.0 - z) / (ez - 1.0);
        z -= step;
        if !in_window(z, k) {
            return None;
        }
        if step.norm() <= 1e-15 * z.norm().max(1.0) {
            break;
        }
    }
    (residual(z) <= ROOT_TOL).then_some(z)
}

/// Fixed point of `z ↦ Log(1 + z) + 2πki`, a contraction onto branch k
/// for k ≥ 1.
fn branch_iteration(mut z: Complex64, k: u32) -> Complex64 {
    let shift = Complex64::new(0.0, 2.0 * PI * k as f64);
    for _ in 0..MAX_ITER {
        let next = (z + 1.0).ln() + shift;
        let done = (next - z).norm() <= 1e-15 * next.norm();
        z = next;
        if done {
            break;
        }
    }
    z
}

fn branch_root(k: u32) -> Result<Complex64, SymmetryError> {
    if k == 0 {
        return Ok(Complex64::new(0.0, 0.0));
    }
    let two_pi_k = 2.0 * PI * k as f64;
    let seed = Complex64::new(two_pi_k.ln(), two_pi_k);
    if let Some(z) = newton(seed, k) {
        return Ok(z);
    }
    let z = branch_iteration(seed, k);
    newton(z, k).ok_or(SymmetryError::NonConvergence { k, re: z.re, im: z.im })
}

/// Roots for branches `k = 0..=k_max`; the conjugates are implied.
pub fn char_roots(c: f64, k_max: u32) -> Result<Vec<CharacteristicRoot>, SymmetryError> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(SymmetryError::InvalidParameter(format!("C must be positive, got {c}")));
    }
    (0..=k_max)
        .map(|k| {
            let z = branch_root(k)?;
            Ok(CharacteristicRoot {
                c,
                k,
                z,
                lambda: -z / c,
                residual: residual(z),
            })
        })
        .collect()
}

/// `e^{ax}cos(bx)∂y` and `e^{ax}sin(bx)∂y` for `λ = a + ib`.
pub fn exp_symmetry_fields(root: &CharacteristicRoot) -> Result<(VectorField, VectorField), SymmetryError> {
    let (a, b) = (root.lambda.re, root.lambda.im);
    if b == 0.0 {
        return Err(SymmetryError::DegenerateRoot);
    }
    let make = |trig: &str| -> Result<VectorField, SymmetryError> {
        let e = Expr::parse(&format!("exp({}*x)*{trig}({}*x)", literal(a), literal(b)), &["x"])?;
        Ok(VectorField::vertical(ScalarFn::expr(e)))
    };
    Ok((make("cos")?, make("sin")?))
}

/// `B_0 … B_n` with the convention `B_1 = −1/2`.
pub fn bernoulli_numbers(n: usize) -> Vec<BigRational> {
    let mut b: Vec<BigRational> = Vec::with_capacity(n + 1);
    b.push(BigRational::one());
    for m in 1..=n {
        // Σ_{k<m} C(m+1, k) B_k = −(m+1) B_m
        let mut binom = BigInt::one();
        let mut acc = BigRational::zero();
        for (k, bk) in b.iter().enumerate() {
            acc += BigRational::from_integer(binom.clone()) * bk;
            binom = binom * BigInt::from(m + 1 - k) / BigInt::from(k + 1);
        }
        b.push(-acc / BigRational::from_integer(BigInt::from(m + 1)));
    }
    b
}

/// Partial sum `Σ_{n ≤ N} B_n (−z)^n / n!` of the series of `z/(1 − e^{−z})`.
pub fn bernoulli_gf(z: f64, order: usize) -> Result<f64, SymmetryError> {
    if !(z.abs() < 2.0 * PI) {
        return Err(SymmetryError::Divergence(z.abs()));
    }
    if order > 40 {
        return Err(SymmetryError::InvalidParameter(format!("order {order} exceeds 40")));
    }
    let b = bernoulli_numbers(order);
    let mut factorial = BigInt::one();
    let mut sum = 0.0;
    for (n, bn) in b.iter().enumerate() {
        if n > 0 {
            factorial *= BigInt::from(n);
        }
        let coef = (bn / BigRational::from_integer(factorial.clone())).to_f64().unwrap_or(f64::NAN);
        sum += coef * (-z).powi(n as i32);
    }
    Ok(sum)
}
