//! Memory kernels and their resolvents.
//!
//! The resolvent `H` of a memory kernel `M` solves `H' = ∫₀ᵗ M(t−u) H(u) du`
//! with `H(0) = 1`. For power-law kernels it has a convergent power series;
//! for any kernel it solves the once-integrated Volterra equation
//! `H(t) = 1 + ∫₀ᵗ K(t−u) H(u) du`, `K(s) = ∫₀ˢ M`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quadrature::{gl16, integrate_adaptive, integrate_piecewise, Tolerance};
use crate::numerics::special::ln_gamma;

/// Most series coefficients ever generated.
pub const MAX_SERIES_TERMS: usize = 200;
/// Fewest series terms summed before the truncation test applies.
pub const MIN_SERIES_TERMS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum MemoryKernel {
    /// `M(s) = s^(−alpha)`. `alpha = 0` is the constant kernel 1.
    PowerLaw { alpha: f64 },
    Constant { level: f64 },
    /// Piecewise-linear through `(grid, values)`, flat after the last knot.
    Tabulated { grid: Vec<f64>, values: Vec<f64> },
}

impl MemoryKernel {
    pub fn power_law(alpha: f64) -> Result<Self> {
        let k = MemoryKernel::PowerLaw { alpha };
        k.validate()?;
        Ok(k)
    }

    pub fn tabulated(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let k = MemoryKernel::Tabulated { grid, values };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            MemoryKernel::PowerLaw { alpha } => check_alpha(*alpha),
            MemoryKernel::Constant { level } => {
                if level.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain("constant kernel level must be finite".into()))
                }
            }
            MemoryKernel::Tabulated { grid, values } => {
                if grid.len() < 2 || grid.len() != values.len() {
                    return Err(Error::Domain(
                        "tabulated kernel needs at least two knots and one value per knot".into(),
                    ));
                }
                if grid[0] != 0.0 {
                    return Err(Error::Domain("tabulated kernel grid must start at 0".into()));
                }
                if grid.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::Domain(
                        "tabulated kernel grid must be strictly increasing".into(),
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Domain("tabulated kernel values must be finite".into()));
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            MemoryKernel::PowerLaw { .. } => false,
            MemoryKernel::Constant { level } => *level == 0.0,
            MemoryKernel::Tabulated { values, .. } => values.iter().all(|&v| v == 0.0),
        }
    }

    /// `M(s)` for `s > 0`.
    pub fn eval(&self, s: f64) -> f64 {
        self.antiderivative(0, s)
    }

    /// `K_k(s)`: the `k`-fold antiderivative of `M` vanishing at 0, for `k ≤ 3`.
    pub fn antiderivative(&self, order: u32, s: f64) -> f64 {
        debug_assert!(order <= 3);
        match self {
            MemoryKernel::PowerLaw { alpha } => {
                if *alpha == 0.0 {
                    return s.powi(order as i32) / factorial(order);
                }
                let mut denom = 1.0;
                for i in 1..=order {
                    denom *= i as f64 - alpha;
                }
                s.powf(order as f64 - alpha) / denom
            }
            MemoryKernel::Constant { level } => level * s.powi(order as i32) / factorial(order),
            MemoryKernel::Tabulated { grid, values } => tabulated_antiderivative(grid, values, order, s),
        }
    }

    /// Points beyond 0 where `M` fails to be smooth.
    pub fn breakpoints(&self) -> &[f64] {
        match self {
            MemoryKernel::Tabulated { grid, .. } => &grid[1..],
            _ => &[],
        }
    }

    /// `∫₀ˢ M²`, finite exactly when the kernel is square-integrable near 0.
    pub fn squared_integral(&self, s: f64) -> Result<f64> {
        match self {
            MemoryKernel::PowerLaw { alpha } => {
                if *alpha >= 0.5 {
                    return Err(Error::Domain(format!(
                        "s^(-{alpha}) is not square-integrable at 0"
                    )));
                }
                Ok(s.powf(1.0 - 2.0 * alpha) / (1.0 - 2.0 * alpha))
            }
            MemoryKernel::Constant { level } => Ok(level * level * s),
            MemoryKernel::Tabulated { .. } => Ok(integrate_piecewise(
                |x| self.eval(x).powi(2),
                0.0,
                s,
                self.breakpoints(),
                Tolerance::new(1e-14, 1e-12),
            )?
            .value),
        }
    }
}

fn factorial(k: u32) -> f64 {
    (1..=k).map(f64::from).product()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..0.5).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "power-law exponent must satisfy 0 < alpha < 1/2 (0 allowed as the constant kernel), got {alpha}"
        )))
    }
}

fn tabulated_antiderivative(grid: &[f64], values: &[f64], order: u32, s: f64) -> f64 {
    // Antiderivatives of orders 1..3 at each knot, accumulated exactly.
    let mut f = [0.0f64; 4];
    let mut i = 0;
    while i + 1 < grid.len() && grid[i + 1] <= s {
        let d = grid[i + 1] - grid[i];
        let slope = (values[i + 1] - values[i]) / d;
        f = taylor_step(&f, values[i], slope, d);
        i += 1;
    }
    let slope = if i + 1 < grid.len() {
        (values[i + 1] - values[i]) / (grid[i + 1] - grid[i])
    } else {
        0.0
    };
    let g = taylor_step(&f, values[i], slope, s - grid[i]);
    if order == 0 {
        values[i] + slope * (s - grid[i])
    } else {
        g[order as usize]
    }
}

/// Advances the antiderivatives of `y + slope·d` across a segment of length `d`.
fn taylor_step(f: &[f64; 4], y: f64, slope: f64, d: f64) -> [f64; 4] {
    let d2 = d * d;
    let d3 = d2 * d;
    [
        0.0,
        f[1] + y * d + slope * d2 / 2.0,
        f[2] + f[1] * d + y * d2 / 2.0 + slope * d3 / 6.0,
        f[3] + f[2] * d + f[1] * d2 / 2.0 + y * d3 / 6.0 + slope * d3 * d / 24.0,
    ]
}

/// Power-series coefficients of the power-law resolvent, kept as logarithms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesCoefficients {
    pub alpha: f64,
    pub log_b: Vec<f64>,
}

impl SeriesCoefficients {
    pub fn b(&self, n: usize) -> f64 {
        self.log_b[n].exp()
    }

    pub fn len(&self) -> usize {
        self.log_b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_b.is_empty()
    }

    /// Exponent step `2 − alpha` of the series in `t`.
    pub fn power(&self) -> f64 {
        2.0 - self.alpha
    }
}

/// Coefficients `b_0 … b_{n_max}` of `H(t) = Σ b_n t^{n(2−α)}`.
pub fn series_coefficients(alpha: f64, n_max: usize) -> Result<SeriesCoefficients> {
    check_alpha(alpha)?;
    if n_max < 1 {
        return Err(Error::Domain("need at least one series coefficient beyond b_0".into()));
    }
    let beta = 2.0 - alpha;
    let ln_gamma_gap = ln_gamma(1.0 - alpha);
    let mut log_b = Vec::with_capacity(n_max + 1);
    log_b.push(0.0);
    for n in 1..=n_max {
        let prev = log_b[n - 1];
        let next = prev + ln_gamma(1.0 + (n - 1) as f64 * beta) - ln_gamma(1.0 + n as f64 * beta)
            + ln_gamma_gap;
        log_b.push(next);
    }
    Ok(SeriesCoefficients { alpha, log_b })
}

/// `H` sampled on a grid together with `g = H'`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Resolvent {
    pub grid: Vec<f64>,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
    /// When present, values off the grid come from the series itself.
    pub series: Option<SeriesCoefficients>,
}

/// Truncated series sum; returns `(H, g, terms used)`.
fn series_sum(coef: &SeriesCoefficients, t: f64, tol: f64) -> Result<(f64, f64, usize)> {
    if t == 0.0 {
        return Ok((1.0, 0.0, 1));
    }
    let beta = coef.power();
    let ln_t = t.ln();
    let mut h = 1.0;
    let mut g = 0.0;
    for n in 1..coef.len() {
        let log_term = coef.log_b[n] + n as f64 * beta * ln_t;
        let term = log_term.exp();
        h += term;
        g += n as f64 * beta * term / t;
        if n >= MIN_SERIES_TERMS && n + 1 < coef.len() {
            // The term ratio decreases in n, so once it is below one the
            // remaining tail is dominated by the next term.
            let next = (coef.log_b[n + 1] + (n + 1) as f64 * beta * ln_t).exp();
            if next < tol * h && next < term {
                return Ok((h, g, n + 1));
            }
        }
    }
    Err(Error::Numeric(format!(
        "resolvent series for alpha = {} did not converge at t = {t} within {} terms (partial sum {h:.6e})",
        coef.alpha,
        coef.len()
    )))
}

/// Resolvent of `s^(−alpha)` from its power series.
pub fn resolvent_series(alpha: f64, grid: &[f64], tol: f64) -> Result<Resolvent> {
    check_grid(grid, false)?;
    if !(tol > 0.0) {
        return Err(Error::Domain("series tolerance must be positive".into()));
    }
    let coef = series_coefficients(alpha, MAX_SERIES_TERMS)?;
    let mut h = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    for &t in grid {
        let (hv, gv, _) = series_sum(&coef, t, tol)?;
        h.push(hv);
        g.push(gv);
    }
    Ok(Resolvent { grid: grid.to_vec(), h, g, series: Some(coef) })
}

fn check_grid(grid: &[f64], uniform: bool) -> Result<()> {
    if grid.is_empty() || grid[0] != 0.0 {
        return Err(Error::Config("resolvent grid must start at 0".into()));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Config("resolvent grid must be strictly increasing".into()));
    }
    if uniform && grid.len() > 2 {
        let step = grid[1];
        for (i, &t) in grid.iter().enumerate() {
            if (t - i as f64 * step).abs() > 1e-9 * step.max(t) {
                return Err(Error::Config("resolvent_numeric needs a uniform grid".into()));
            }
        }
    }
    Ok(())
}

/// Moments `(∫ F(s)(s−a) ds, ∫ F(s)(b−s) ds) / (b−a)` over `[a, b]`, where `F`
/// is the `order`-th antiderivative of `M`.
fn cell_weights(kernel: &MemoryKernel, order: u32, a: f64, b: f64) -> (f64, f64) {
    let h = b - a;
    if a == 0.0 {
        // Integration by parts against the next two antiderivatives; exact
        // for the integrable singularity at the origin.
        let f1 = kernel.antiderivative(order + 1, b);
        let f2 = kernel.antiderivative(order + 2, b);
        let near = (h * f1 - f2) / h;
        let far = f2 / h;
        return (near, far);
    }
    let mut near = 0.0;
    let mut far = 0.0;
    let mut edges = vec![a];
    edges.extend(kernel.breakpoints().iter().copied().filter(|&x| x > a && x < b));
    edges.push(b);
    for w in edges.windows(2) {
        for (s, wt) in gl16().mapped(w[0], w[1]) {
            let f = kernel.antiderivative(order, s) * wt;
            near += f * (s - a);
            far += f * (b - s);
        }
    }
    (near / h, far / h)
}

/// Resolvent on a uniform grid from the once-integrated Volterra equation.
///
/// The equation is solved by product-trapezoidal integration on the grid and
/// on a grid of half the step; one Richardson step on the pair removes the
/// leading `O(h²)` error term.
pub fn resolvent_numeric(kernel: &MemoryKernel, grid: &[f64]) -> Result<Resolvent> {
    kernel.validate()?;
    check_grid(grid, true)?;
    let n = grid.len();
    if n == 1 {
        return Ok(Resolvent { grid: grid.to_vec(), h: vec![1.0], g: vec![0.0], series: None });
    }
    let step = grid[1];
    let (coarse_h, coarse_g) = product_trapezoid(kernel, step, n)?;
    let (fine_h, fine_g) = product_trapezoid(kernel, 0.5 * step, 2 * n - 1)?;
    let h = (0..n).map(|i| (4.0 * fine_h[2 * i] - coarse_h[i]) / 3.0).collect();
    let g = (0..n).map(|i| (4.0 * fine_g[2 * i] - coarse_g[i]) / 3.0).collect();
    Ok(Resolvent { grid: grid.to_vec(), h, g, series: None })
}

/// Product-trapezoidal solve on `n` points spaced `step` apart.
///
/// `H` is taken piecewise linear between grid points and the kernel weights
/// over each cell are computed exactly (first cell) or with a 16-point
/// Gauss rule (cells away from the origin, where the kernel is smooth).
/// `g` comes from the same rule applied to `∫ M(t−u) H(u) du`.
fn product_trapezoid(kernel: &MemoryKernel, step: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    // Lag-m weights: `near[m]` multiplies H at lag m, `far[m]` at lag m−1.
    let mut near_k = vec![0.0; n];
    let mut far_k = vec![0.0; n];
    let mut near_m = vec![0.0; n];
    let mut far_m = vec![0.0; n];
    for m in 1..n {
        let a = (m - 1) as f64 * step;
        let b = m as f64 * step;
        let (nk, fk) = cell_weights(kernel, 1, a, b);
        let (nm, fm) = cell_weights(kernel, 0, a, b);
        if !(nk.is_finite() && fk.is_finite() && nm.is_finite() && fm.is_finite()) {
            return Err(Error::Numeric(format!(
                "kernel weights not finite on [{a}, {b}]"
            )));
        }
        near_k[m] = nk;
        far_k[m] = fk;
        near_m[m] = nm;
        far_m[m] = fm;
    }

    let mut h = vec![0.0; n];
    let mut g = vec![0.0; n];
    h[0] = 1.0;
    let pivot = 1.0 - far_k[1];
    if pivot.abs() < 1e-12 {
        return Err(Error::Numeric("product rule singular: reduce the grid step".into()));
    }
    for k in 1..n {
        let mut acc = 1.0;
        for m in 1..=k {
            acc += near_k[m] * h[k - m];
        }
        for m in 2..=k {
            acc += far_k[m] * h[k - m + 1];
        }
        h[k] = acc / pivot;
        let mut dg = 0.0;
        for m in 1..=k {
            dg += near_m[m] * h[k - m] + far_m[m] * h[k - m + 1];
        }
        g[k] = dg;
        if !h[k].is_finite() || !g[k].is_finite() {
            return Err(Error::Numeric(format!("resolvent overflow at t = {}", k as f64 * step)));
        }
    }
    Ok((h, g))
}

impl Resolvent {
    pub fn horizon(&self) -> f64 {
        *self.grid.last().unwrap()
    }

    /// `(H(t), H'(t))`. Uses the series when available, otherwise cubic
    /// Hermite interpolation of the grid values.
    pub fn eval(&self, t: f64) -> Result<(f64, f64)> {
        if let Some(coef) = &self.series {
            if t < 0.0 {
                return Err(Error::Domain(format!("resolvent evaluated at negative time {t}")));
            }
            let (h, g, _) = series_sum(coef, t, 1e-16)?;
            return Ok((h, g));
        }
        let last = self.horizon();
        if t < 0.0 || t > last * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "t = {t} lies outside the resolvent grid [0, {last}]"
            )));
        }
        let t = t.min(last);
        let i = self.grid.partition_point(|&x| x <= t).clamp(1, self.grid.len() - 1) - 1;
        if self.grid.len() == 1 {
            return Ok((self.h[0], self.g[0]));
        }
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let d = t1 - t0;
        let s = (t - t0) / d;
        let (h0, h1, m0, m1) = (self.h[i], self.h[i + 1], self.g[i] * d, self.g[i + 1] * d);
        let s2 = s * s;
        let s3 = s2 * s;
        let h = (2.0 * s3 - 3.0 * s2 + 1.0) * h0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * h1
            + (s3 - s2) * m1;
        let dh = ((6.0 * s2 - 6.0 * s) * h0
            + (3.0 * s2 - 4.0 * s + 1.0) * m0
            + (-6.0 * s2 + 6.0 * s) * h1
            + (3.0 * s2 - 2.0 * s) * m1)
            / d;
        Ok((h, dh))
    }

    pub fn h_at(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.0)
    }

    /// `∫₀ᵗ M(t−u) H(u) du` by adaptive quadrature, with the weak
    /// singularity of a power-law kernel removed by a change of variables.
    pub fn memory_integral(&self, kernel: &MemoryKernel, t: f64) -> Result<f64> {
        if t == 0.0 {
            return Ok(0.0);
        }
        let tol = Tolerance::new(1e-14, 1e-13);
        match kernel {
            MemoryKernel::PowerLaw { alpha } if *alpha > 0.0 => {
                let e = 1.0 - alpha;
                let top = t.powf(e);
                let mut fail = None;
                let r = integrate_adaptive(
                    |v| {
                        let u = (t - v.powf(1.0 / e)).max(0.0);
                        match self.h_at(u) {
                            Ok(h) => h,
                            Err(err) => {
                                fail.get_or_insert(err);
                                0.0
                            }
                        }
                    },
                    0.0,
                    top,
                    tol,
                )?;
                if let Some(err) = fail {
                    return Err(err);
                }
                Ok(r.value / e)
            }
            _ => {
                let mut cuts: Vec<f64> = kernel.breakpoints().iter().map(|b| t - b).collect();
                if self.series.is_none() {
                    cuts.extend(self.grid.iter().copied().filter(|&x| x < t));
                }
                let mut fail = None;
                let r = integrate_piecewise(
                    |u| {
                        kernel.eval(t - u)
                            * match self.h_at(u) {
                                Ok(h) => h,
                                Err(err) => {
                                    fail.get_or_insert(err);
                                    0.0
                                }
                            }
                    },
                    0.0,
                    t,
                    &cuts,
                    tol,
                )?;
                if let Some(err) = fail {
                    return Err(err);
                }
                Ok(r.value)
            }
        }
    }

    /// Largest `|H'(t) − ∫₀ᵗ M(t−u) H(u) du|` over the grid.
    pub fn residual(&self, kernel: &MemoryKernel) -> Result<f64> {
        let mut worst = 0.0f64;
        for (i, &t) in self.grid.iter().enumerate() {
            let r = (self.g[i] - self.memory_integral(kernel, t)?).abs();
            worst = worst.max(r);
        }
        Ok(worst)
    }

    /// Writes `t,H` rows with 17 significant digits.
    pub fn write_h_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_columns(out, "t", "H", &self.grid, &self.h)
    }

    /// Writes `t,g` rows with 17 significant digits.
    pub fn write_g_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_columns(out, "t", "g", &self.grid, &self.g)
    }
}

fn write_columns<W: Write>(mut out: W, a: &str, b: &str, xs: &[f64], ys: &[f64]) -> std::io::Result<()> {
    writeln!(out, "{a},{b}")?;
    for (x, y) in xs.iter().zip(ys) {
        writeln!(out, "{x:.16e},{y:.16e}")?;
    }
    Ok(())
}

/// Upper estimate of `C² ∫₀ᵗ M²(t−u) ∫₀ᵘ H²(v) dv du`, maximised over `t`
/// on the resolvent grid up to `horizon`.
///
/// A finite return value means the square-integrability requirement for
/// the moving-average representation of the Langevin solution holds with
/// `χ` bounded by `chi_bound`.
pub fn check_fubini_condition(
    kernel: &MemoryKernel,
    resolvent: &Resolvent,
    chi_bound: f64,
    horizon: f64,
) -> Result<f64> {
    if !(chi_bound > 0.0) || !(horizon > 0.0) {
        return Err(Error::Domain("chi bound and horizon must be positive".into()));
    }
    if kernel.is_zero() {
        return Ok(0.0);
    }
    kernel.squared_integral(horizon)?;
    let tol = Tolerance::new(1e-13, 1e-11);
    let grid: Vec<f64> = resolvent.grid.iter().copied().filter(|&t| t <= horizon).collect();
    if grid.len() < 2 {
        return Err(Error::Config("resolvent grid does not cover the horizon".into()));
    }

    // Q(u) = ∫₀ᵘ H² on the grid, refined within each cell on demand.
    let mut q = vec![0.0; grid.len()];
    for i in 1..grid.len() {
        let cell = integrate_h_squared(resolvent, grid[i - 1], grid[i])?;
        q[i] = q[i - 1] + cell;
    }
    let q_at = |u: f64| -> Result<f64> {
        let i = grid.partition_point(|&x| x <= u).clamp(1, grid.len()) - 1;
        Ok(q[i] + integrate_h_squared(resolvent, grid[i], u)?)
    };

    let mut worst = 0.0f64;
    for &t in grid.iter().skip(1) {
        let mut fail = None;
        let mut guard = |u: f64| match q_at(u) {
            Ok(v) => v,
            Err(e) => {
                fail.get_or_insert(e);
                0.0
            }
        };
        let value = match kernel {
            MemoryKernel::PowerLaw { alpha } if *alpha > 0.0 => {
                let e = 1.0 - 2.0 * alpha;
                integrate_adaptive(|w| guard((t - w.powf(1.0 / e)).max(0.0)), 0.0, t.powf(e), tol)?
                    .value
                    / e
            }
            _ => {
                let cuts: Vec<f64> = kernel.breakpoints().iter().map(|b| t - b).collect();
                integrate_piecewise(|u| kernel.eval(t - u).powi(2) * guard(u), 0.0, t, &cuts, tol)?
                    .value
            }
        };
        if let Some(e) = fail {
            return Err(e);
        }
        if !value.is_finite() {
            return Err(Error::Numeric(format!("square-integrability check diverged at t = {t}")));
        }
        worst = worst.max(value);
    }
    Ok(chi_bound * chi_bound * worst)
}

fn integrate_h_squared(resolvent: &Resolvent, a: f64, b: f64) -> Result<f64> {
    if b <= a {
        return Ok(0.0);
    }
    let mut acc = 0.0;
    for (u, w) in gl16().mapped(a, b) {
        acc += resolvent.h_at(u)?.powi(2) * w;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(t_max: f64, n: usize) -> Vec<f64> {
        (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
    }

    #[test]
    fn first_coefficient_is_one_and_alpha_zero_is_factorial() {
        let c = series_coefficients(0.0, 20).unwrap();
        assert_eq!(c.b(0), 1.0);
        let mut fact = 1.0;
        for n in 1..=20 {
            fact *= (2 * n - 1) as f64 * (2 * n) as f64;
            assert!((c.log_b[n] + fact.ln()).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn b1_for_quarter_exponent() {
        let c = series_coefficients(0.25, 3).unwrap();
        let expect = (ln_gamma(0.75) - ln_gamma(2.75)).exp();
        assert!((c.b(1) - expect).abs() < 1e-14);
        // Γ(2.75) = 1.75 · 0.75 · Γ(0.75)
        assert!((c.b(1) - 16.0 / 21.0).abs() < 1e-14);
    }

    #[test]
    fn coefficients_survive_gamma_overflow_range() {
        let c = series_coefficients(0.4, MAX_SERIES_TERMS).unwrap();
        assert!(c.log_b.iter().all(|v| v.is_finite()));
        assert!(c.b(150) > 0.0 || c.log_b[150] < -700.0);
    }

    #[test]
    fn rejects_bad_alpha() {
        assert!(series_coefficients(0.5, 3).is_err());
        assert!(series_coefficients(-0.1, 3).is_err());
        assert!(MemoryKernel::power_law(0.7).is_err());
    }

    #[test]
    fn series_alpha_zero_is_cosh() {
        let grid = uniform(2.0, 40);
        let r = resolvent_series(0.0, &grid, 1e-16).unwrap();
        for (i, &t) in grid.iter().enumerate() {
            assert!((r.h[i] - t.cosh()).abs() < 1e-13, "t={t}");
            assert!((r.g[i] - t.sinh()).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn numeric_constant_kernel_is_cosh() {
        let grid = uniform(2.0, 1000);
        let r = resolvent_numeric(&MemoryKernel::Constant { level: 1.0 }, &grid).unwrap();
        let worst = grid
            .iter()
            .zip(&r.h)
            .map(|(t, h)| (h - t.cosh()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-8, "max error {worst:e}");
        assert_eq!(r.h[0], 1.0);
    }

    #[test]
    fn numeric_matches_series_for_power_law() {
        let grid = uniform(2.0, 2000);
        for alpha in [0.1, 0.25, 0.4] {
            let s = resolvent_series(alpha, &grid, 1e-15).unwrap();
            let v = resolvent_numeric(&MemoryKernel::PowerLaw { alpha }, &grid).unwrap();
            let worst = s.h.iter().zip(&v.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst < 1e-6, "alpha={alpha} gap {worst:e}");
        }
    }

    #[test]
    fn series_residual_is_tiny() {
        let grid = uniform(2.0, 20);
        let kernel = MemoryKernel::PowerLaw { alpha: 0.25 };
        let r = resolvent_series(0.25, &grid, 1e-15).unwrap();
        assert!(r.residual(&kernel).unwrap() < 1e-10);
    }

    #[test]
    fn tabulated_constant_matches_constant() {
        let tab = MemoryKernel::tabulated(vec![0.0, 0.7, 1.3], vec![1.0, 1.0, 1.0]).unwrap();
        for order in 0..=3 {
            for &s in &[0.2, 0.7, 1.0, 2.5] {
                let a = tab.antiderivative(order, s);
                let b = MemoryKernel::Constant { level: 1.0 }.antiderivative(order, s);
                assert!((a - b).abs() < 1e-14, "order {order} s {s}");
            }
        }
    }

    #[test]
    fn fubini_zero_kernel_is_zero() {
        let grid = uniform(1.0, 10);
        let r = resolvent_numeric(&MemoryKernel::Constant { level: 0.0 }, &grid).unwrap();
        assert_eq!(
            check_fubini_condition(&MemoryKernel::Constant { level: 0.0 }, &r, 1.0, 1.0).unwrap(),
            0.0
        );
    }

    #[test]
    fn csv_has_seventeen_digits() {
        let r = resolvent_series(0.0, &[0.0, 1.0], 1e-16).unwrap();
        let mut buf = Vec::new();
        r.write_h_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(2).unwrap();
        let value = row.split(',').nth(1).unwrap();
        let mantissa = value.split('e').next().unwrap().replace('.', "");
        assert_eq!(mantissa.len(), 17);
        assert_eq!(value.parse::<f64>().unwrap(), r.h[1]);
    }
}
