//! Gauss–Legendre rules and an adaptive bisection integrator built on them.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Values that can be integrated: real or complex.
pub trait QuadValue:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Default
{
    fn magnitude(&self) -> f64;
    fn is_finite_value(&self) -> bool;
}

impl QuadValue for f64 {
    fn magnitude(&self) -> f64 {
        self.abs()
    }
    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

impl QuadValue for Complex64 {
    fn magnitude(&self) -> f64 {
        self.norm()
    }
    fn is_finite_value(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    /// Nodes are Newton-refined roots of `P_n`, started from the Tricomi estimate.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "Gauss-Legendre rule needs at least one node");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            dp = if d != 0.0 { d } else { dp };
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(move |(&x, &w)| (mid + half * x, half * w))
    }

    pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(&self, mut f: F, a: f64, b: f64) -> T {
        let mut acc = T::default();
        for (x, w) in self.mapped(a, b) {
            acc = acc + f(x) * w;
        }
        acc
    }

    /// Composite rule with `panels` equal panels on `[a, b]`.
    pub fn integrate_composite<T: QuadValue, F: FnMut(f64) -> T>(
        &self,
        mut f: F,
        a: f64,
        b: f64,
        panels: usize,
    ) -> T {
        let width = (b - a) / panels as f64;
        let mut acc = T::default();
        for k in 0..panels {
            let lo = a + k as f64 * width;
            acc = acc + self.integrate(&mut f, lo, lo + width);
        }
        acc
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p, dp)
}

/// Shared 12-point rule used by the adaptive integrator.
pub fn gl12() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(12))
}

/// Shared 16-point rule for fixed composite quadrature.
pub fn gl16() -> &'static GaussLegendre {
    static RULE: OnceLock<GaussLegendre> = OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(16))
}

/// Absolute and relative accuracy targets; the looser of the two wins.
#[derive(Clone, Copy, Debug)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
}

impl Tolerance {
    pub const fn new(abs: f64, rel: f64) -> Self {
        Self { abs, rel }
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Self::new(1e-12, 1e-10)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Integral<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

const MAX_EVALUATIONS: usize = 2_000_000;

struct Piece<T> {
    lo: f64,
    hi: f64,
    left: T,
    right: T,
    error: f64,
}

impl<T: QuadValue> Piece<T> {
    fn new<F: FnMut(f64) -> T>(f: &mut F, lo: f64, hi: f64, whole: T) -> Self {
        let rule = gl12();
        let mid = 0.5 * (lo + hi);
        let left = rule.integrate(&mut *f, lo, mid);
        let right = rule.integrate(&mut *f, mid, hi);
        let error = (left + right - whole).magnitude();
        Self { lo, hi, left, right, error }
    }

    fn value(&self) -> T {
        self.left + self.right
    }
}

/// Globally adaptive Gauss–Legendre quadrature.
///
/// Every piece carries the difference between its 12-point estimate and the
/// sum over its two halves; the piece with the largest difference is bisected
/// until the total falls below the tolerance.
pub fn integrate_adaptive<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Integral<T>> {
    if a == b {
        return Ok(Integral { value: T::default(), error: 0.0, evaluations: 0 });
    }
    let rule = gl12();
    let whole = rule.integrate(&mut f, a, b);
    let mut pieces = vec![Piece::new(&mut f, a, b, whole)];
    let mut evaluations = 3 * rule.len();
    // Pieces too narrow to bisect further; kept out of the refinement queue.
    let mut frozen: Vec<Piece<T>> = Vec::new();

    loop {
        let mut value = T::default();
        let mut error = 0.0;
        let mut worst = 0;
        for (i, p) in pieces.iter().enumerate() {
            value = value + p.value();
            error += p.error;
            if p.error > pieces[worst].error {
                worst = i;
            }
        }
        let mut frozen_error = 0.0;
        for p in &frozen {
            value = value + p.value();
            frozen_error += p.error;
        }
        if !value.is_finite_value() {
            return Err(Error::Numeric(format!("non-finite integrand on [{a}, {b}]")));
        }
        let target = tol.abs.max(tol.rel * value.magnitude());
        if error + frozen_error <= target || pieces.is_empty() || error <= f64::EPSILON * value.magnitude() {
            if frozen_error > target {
                return Err(Error::Numeric(format!(
                    "adaptive quadrature on [{a}, {b}] stalled at error {frozen_error:.3e}"
                )));
            }
            return Ok(Integral { value, error: error + frozen_error, evaluations });
        }
        if evaluations > MAX_EVALUATIONS {
            return Err(Error::Numeric(format!(
                "adaptive quadrature on [{a}, {b}] exceeded {MAX_EVALUATIONS} evaluations (error {error:.3e})"
            )));
        }
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.lo + p.hi);
        if !(mid > p.lo && mid < p.hi) || (p.hi - p.lo) <= 1e-15 * (p.lo.abs() + p.hi.abs()) {
            frozen.push(p);
            continue;
        }
        pieces.push(Piece::new(&mut f, p.lo, mid, p.left));
        pieces.push(Piece::new(&mut f, mid, p.hi, p.right));
        evaluations += 4 * rule.len();
    }
}

/// Adaptive integration over `[a, b]` split at the given interior breakpoints.
pub fn integrate_piecewise<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    tol: Tolerance,
) -> Result<Integral<T>> {
    let mut cuts: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|&x| x > a && x < b)
        .collect();
    cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    cuts.dedup();
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(a);
    edges.extend(cuts);
    edges.push(b);
    let pieces = (edges.len() - 1) as f64;
    let mut out = Integral { value: T::default(), error: 0.0, evaluations: 0 };
    for w in edges.windows(2) {
        let piece_tol = Tolerance::new(tol.abs / pieces, tol.rel);
        let r = integrate_adaptive(&mut f, w[0], w[1], piece_tol)?;
        out.value = out.value + r.value;
        out.error += r.error;
        out.evaluations += r.evaluations;
    }
    Ok(out)
}

/// `∫_a^∞ f`, through the map `x = a + s / (1 - s)` on `[0, 1)`.
pub fn integrate_to_infinity<T: QuadValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    tol: Tolerance,
) -> Result<Integral<T>> {
    integrate_adaptive(
        |s| {
            if s >= 1.0 {
                return T::default();
            }
            let one_minus = 1.0 - s;
            let x = a + s / one_minus;
            f(x) * (1.0 / (one_minus * one_minus))
        },
        0.0,
        1.0,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_polynomials_are_exact() {
        for n in [1, 2, 5, 12, 16, 33] {
            let rule = GaussLegendre::new(n);
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 2.0).abs() < 1e-14, "n={n}");
            let deg = 2 * n - 1;
            let approx: f64 = rule.integrate(|x| x.powi(deg as i32 - 1), 0.0, 1.0);
            assert!((approx - 1.0 / deg as f64).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn adaptive_handles_endpoint_singularity() {
        let r = integrate_adaptive(|x: f64| x.powf(-0.5), 0.0, 1.0, Tolerance::new(1e-10, 1e-10))
            .unwrap();
        assert!((r.value - 2.0).abs() < 1e-8);
    }

    #[test]
    fn complex_oscillatory_integrand() {
        let w = 40.0;
        let r = integrate_adaptive(
            |x: f64| Complex64::new(0.0, w * x).exp(),
            0.0,
            1.0,
            Tolerance::new(1e-13, 1e-13),
        )
        .unwrap();
        let exact = (Complex64::new(0.0, w).exp() - 1.0) / Complex64::new(0.0, w);
        assert!((r.value - exact).norm() < 1e-12);
    }

    #[test]
    fn semi_infinite_exponential() {
        let r = integrate_to_infinity(|x: f64| (-2.0 * x).exp(), 1.0, Tolerance::new(1e-14, 1e-12))
            .unwrap();
        assert!((r.value - 0.5 * (-2.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn piecewise_splits_at_kinks() {
        let r = integrate_piecewise(|x: f64| (x - 0.3).abs(), 0.0, 1.0, &[0.3], Tolerance::default())
            .unwrap();
        assert!((r.value - (0.045 + 0.245)).abs() < 1e-14);
    }
}
