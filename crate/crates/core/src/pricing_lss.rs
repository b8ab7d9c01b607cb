//! Spot options, forwards and options on forwards when the log-spot `V` and
//! the premium `ρ` follow the pricing-measure dynamics
//!
//! ```text
//! dV = (ρ + ϖ₁) dt + χ c dW + χ ∫ z Ñ(dt, dz)
//! dρ = ϖ₂ dt + B̄ χ c dW + B̄ χ ∫ z Ñ(dt, dz)
//! ```
//!
//! with deterministic `r` and `χ`, and jump compensator `tilt(χz) ℓ(dz)`.

use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::affine::lss_phi_psi;
use crate::dynamics::levy::{JumpIntegrator, LevyModel, TiltedJumps};
use crate::dynamics::model::VolProcess;
use crate::error::{Error, Result};
use crate::numerics::quadrature::{gl16, integrate_piecewise};
use crate::numerics::special::{tilt, zeta};
use crate::numerics::stats::{monte_carlo, McEstimate};
use crate::numerics::{Curve, Tolerance};
use crate::rng::{path_rng, PathRng};

const SALT_SPOT: u64 = 0x4c53_5331;
const SALT_FORWARD_OPTION: u64 = 0x4c53_5332;

/// Serializable inputs of the pricing model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LssSpec {
    /// Deterministic short rate `r(t)`.
    pub rate: Curve,
    pub chi: VolProcess,
    pub levy: LevyModel,
    pub a_bar: Curve,
    /// Common value of the premium's memory and mean-reversion loadings.
    pub b_bar: Curve,
    pub b2_bar: Curve,
    /// Log-spot `V(t)` at the valuation time.
    pub v: f64,
    /// Premium `ρ(t)` at the valuation time.
    pub rho: f64,
    /// Last date the model is used on; `χ` is checked against its bounds up to here.
    pub horizon: f64,
}

/// Validated pricing model with its jump quadrature. Cheap to clone.
#[derive(Clone, Debug)]
pub struct LssPricingParams {
    spec: Arc<LssSpec>,
    jumps: Arc<JumpIntegrator>,
}

impl LssPricingParams {
    pub fn new(spec: LssSpec) -> Result<Self> {
        spec.levy.validate()?;
        spec.chi.validate(spec.horizon)?;
        for (name, c) in [("rate", &spec.rate), ("a_bar", &spec.a_bar), ("b_bar", &spec.b_bar), ("b2_bar", &spec.b2_bar)] {
            c.validate().map_err(|e| Error::Config(format!("{name}: {e}")))?;
        }
        if !spec.v.is_finite() || !spec.rho.is_finite() {
            return Err(Error::Config("state (v, rho) must be finite".into()));
        }
        let jumps = Arc::new(JumpIntegrator::new(&spec.levy));
        Ok(Self { spec: Arc::new(spec), jumps })
    }

    pub fn spec(&self) -> &LssSpec {
        &self.spec
    }

    pub fn levy(&self) -> &LevyModel {
        &self.spec.levy
    }

    pub fn jumps(&self) -> &Arc<JumpIntegrator> {
        &self.jumps
    }

    pub fn spot(&self) -> f64 {
        self.spec.v.exp()
    }

    /// Copy with a different state `(V, ρ)`.
    pub fn with_state(&self, v: f64, rho: f64) -> Self {
        let mut spec = (*self.spec).clone();
        spec.v = v;
        spec.rho = rho;
        Self { spec: Arc::new(spec), jumps: self.jumps.clone() }
    }

    pub fn rate(&self, t: f64) -> f64 {
        self.spec.rate.eval(t)
    }

    pub fn chi(&self, t: f64) -> f64 {
        self.spec.chi.eval(t)
    }

    pub fn b_bar(&self, t: f64) -> f64 {
        self.spec.b_bar.eval(t)
    }

    pub fn rate_integral(&self, t: f64, horizon: f64) -> f64 {
        self.spec.rate.integral(t, horizon)
    }

    /// `∫ z ζ(χz) ℓ(dz)`.
    pub fn zeta_mean(&self, chi: f64) -> f64 {
        self.jumps.integrate(0.0, |z| z * zeta(chi * z))
    }

    /// `ϖ₁ = r − χ²c²/2 − χ ∫ z ζ(χz) ℓ(dz)`.
    pub fn varpi1(&self, t: f64) -> f64 {
        let chi = self.chi(t);
        let c = self.spec.levy.c;
        self.rate(t) - 0.5 * chi * chi * c * c - chi * self.zeta_mean(chi)
    }

    /// `ϖ₂ = Ā + B̄ (ϖ₁ − χ b) − B̄₂ r`.
    pub fn varpi2(&self, t: f64) -> f64 {
        let chi = self.chi(t);
        self.spec.a_bar.eval(t) + self.b_bar(t) * (self.varpi1(t) - chi * self.spec.levy.drift())
            - self.spec.b2_bar.eval(t) * self.rate(t)
    }

    /// Times at which some coefficient curve has a kink or jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        let s = &self.spec;
        let mut v: Vec<f64> = [&s.rate, &s.chi.level, &s.a_bar, &s.b_bar, &s.b2_bar]
            .iter()
            .flat_map(|c| c.breakpoints().iter().copied())
            .collect();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v.dedup();
        v
    }

    /// Integrand of `φ(t, T, (u₁, u₂))` at time `s`.
    pub fn phi_integrand(&self, s: f64, horizon: f64, u1: Complex64, u2: Complex64) -> Complex64 {
        let chi = self.chi(s);
        let c = self.spec.levy.c;
        let psi2 = u2 + u1 * (horizon - s);
        let k = u1 + self.b_bar(s) * psi2;
        0.5 * chi * chi * c * c * k * k
            + self.varpi1(s) * u1
            + self.varpi2(s) * psi2
            + self.jumps.exp_compensated(k * chi, Some(chi))
    }

    /// `Σ(s, T) = (1 + B̄(s)(T − s)) χ(s)`.
    pub fn sigma(&self, s: f64, delivery: f64) -> f64 {
        (1.0 + self.b_bar(s) * (delivery - s)) * self.chi(s)
    }

    /// Drift of `log F(s, T)`: `−½c²Σ² − ∫ (e^{Σz} − 1 − Σz) tilt(χz) ℓ(dz)`.
    pub fn forward_log_drift(&self, s: f64, delivery: f64) -> f64 {
        let sig = self.sigma(s, delivery);
        let chi = self.chi(s);
        let c = self.spec.levy.c;
        -0.5 * c * c * sig * sig
            - self.jumps.exp_compensated(Complex64::new(sig, 0.0), Some(chi)).re
    }

    fn time_pieces(&self, t: f64, horizon: f64) -> Vec<(f64, f64)> {
        let mut edges = vec![t];
        edges.extend(self.breakpoints().into_iter().filter(|&b| b > t && b < horizon));
        edges.push(horizon);
        edges.windows(2).map(|w| (w[0], w[1])).collect()
    }

    /// Checks that `E[e^{ω V(T)}]` is finite so the damped transform exists.
    pub fn check_moment(&self, t: f64, horizon: f64, omega: f64, delivery: f64) -> Result<()> {
        if let Some(law) = self.jumps.law() {
            let (lo, hi) = law.exp_moment_strip();
            for (a, b) in self.time_pieces(t, horizon) {
                for (s, _) in gl16().mapped(a, b).chain([(a, 0.0), (b, 0.0)]) {
                    let w = omega * self.sigma(s, delivery);
                    if !(w > lo && w < hi + self.chi(s)) {
                        return Err(Error::Domain(format!(
                            "the damped moment E[S^ω] is infinite for ω = {omega}: exponent {w:.4} at t = {s:.4} \
                             leaves the jump law's exponential-moment strip"
                        )));
                    }
                }
            }
        }
        let (phi, _, _) = lss_phi_psi(self, t, horizon, Complex64::new(omega, 0.0), Complex64::new(0.0, 0.0))?;
        if !phi.re.is_finite() {
            return Err(Error::Domain(format!("E[S^ω] is not finite for ω = {omega}")));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    Call,
    Put,
}

impl OptionKind {
    pub fn sign(self) -> f64 {
        match self {
            OptionKind::Call => 1.0,
            OptionKind::Put => -1.0,
        }
    }

    pub fn default_omega(self) -> f64 {
        match self {
            OptionKind::Call => 2.0,
            OptionKind::Put => -1.0,
        }
    }
}

fn default_lambda_max() -> f64 {
    200.0
}

fn default_nodes() -> usize {
    2048
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSpec {
    pub strike: f64,
    /// Exercise date.
    pub maturity: f64,
    pub kind: OptionKind,
    /// Damping exponent; defaults to 2 for calls and −1 for puts.
    #[serde(default)]
    pub omega: Option<f64>,
    #[serde(default = "default_lambda_max")]
    pub lambda_max: f64,
    /// Nodes on `[−Λ, Λ]`; half of them are evaluated.
    #[serde(default = "default_nodes")]
    pub nodes: usize,
    /// Delivery date of the underlying forward, for options on forwards.
    #[serde(default)]
    pub delivery: Option<f64>,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Self {
        Self {
            strike,
            maturity,
            kind,
            omega: None,
            lambda_max: default_lambda_max(),
            nodes: default_nodes(),
            delivery: None,
        }
    }

    pub fn with_omega(mut self, omega: f64) -> Self {
        self.omega = Some(omega);
        self
    }

    pub fn omega(&self) -> f64 {
        self.omega.unwrap_or_else(|| self.kind.default_omega())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.strike > 0.0) || !self.strike.is_finite() {
            return Err(Error::Domain(format!("strike must be positive (got {})", self.strike)));
        }
        let w = self.omega();
        match self.kind {
            OptionKind::Call if !(w > 1.0) => {
                return Err(Error::Domain(format!(
                    "a call needs damping ω > 1 (got {w}); ω = 1 is a pole of the payoff transform"
                )))
            }
            OptionKind::Put if !(w < 0.0) => {
                return Err(Error::Domain(format!(
                    "a put needs damping ω < 0 (got {w}); ω = 0 is a pole of the payoff transform"
                )))
            }
            _ => {}
        }
        if !(self.lambda_max > 0.0) || self.nodes < 32 {
            return Err(Error::Domain("Fourier truncation needs Λ > 0 and at least 32 nodes".into()));
        }
        if let Some(d) = self.delivery {
            if !(d >= self.maturity) {
                return Err(Error::Domain(format!(
                    "delivery {d} precedes the exercise date {}",
                    self.maturity
                )));
            }
        }
        Ok(())
    }
}

/// `f̃(λ) = K^{−(ω−1+iλ)} / (2π (ω+iλ)(ω−1+iλ))`.
pub fn payoff_transform(lambda: f64, omega: f64, strike: f64) -> Result<Complex64> {
    if omega == 0.0 || omega == 1.0 {
        return Err(Error::Domain(format!("ω = {omega} is a pole of the payoff transform")));
    }
    if !(strike > 0.0) {
        return Err(Error::Domain("strike must be positive".into()));
    }
    let a = Complex64::new(omega, lambda);
    let b = Complex64::new(omega - 1.0, lambda);
    Ok((-b * strike.ln()).exp() / (2.0 * std::f64::consts::PI * a * b))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PriceDiagnostics {
    /// Largest `|g(−λ) − conj g(λ)|` over check nodes, times `Λ`.
    pub imag_residue: f64,
    /// `2Λ|g(Λ)|` discounted: size of the neglected tails.
    pub tail_estimate: f64,
    pub n_nodes: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriceReport {
    pub price: f64,
    pub method: String,
    pub diagnostics: PriceDiagnostics,
}

/// Precomputed time nodes of `[t, T]` for fast evaluation of `φ`.
struct TimeRule {
    weights: Vec<f64>,
    times: Vec<f64>,
    chi: Vec<f64>,
    b_bar: Vec<f64>,
    varpi1: Vec<f64>,
    varpi2: Vec<f64>,
}

impl TimeRule {
    fn new(params: &LssPricingParams, t: f64, horizon: f64, max_freq: f64) -> Self {
        let (_, chi_hi) = params.spec.chi.level.range_on(t, horizon);
        let (b_lo, b_hi) = params.spec.b_bar.range_on(t, horizon);
        let jump_scale = params.levy().jumps.as_ref().map_or(0.0, |j| j.law.second_moment().sqrt());
        let rate = max_freq * b_lo.abs().max(b_hi.abs()) * chi_hi * jump_scale;
        let mut rule = TimeRule {
            weights: Vec::new(),
            times: Vec::new(),
            chi: Vec::new(),
            b_bar: Vec::new(),
            varpi1: Vec::new(),
            varpi2: Vec::new(),
        };
        for (a, b) in params.time_pieces(t, horizon) {
            let panels = ((b - a) * (2.0f64).max(rate / 4.0)).ceil().max(2.0) as usize;
            let h = (b - a) / panels as f64;
            for p in 0..panels {
                let lo = a + p as f64 * h;
                for (s, w) in gl16().mapped(lo, lo + h) {
                    rule.weights.push(w);
                    rule.times.push(s);
                    rule.chi.push(params.chi(s));
                    rule.b_bar.push(params.b_bar(s));
                    rule.varpi1.push(params.varpi1(s));
                    rule.varpi2.push(params.varpi2(s));
                }
            }
        }
        rule
    }

    /// `φ(t, T, (u, 0))`.
    fn phi(&self, params: &LssPricingParams, horizon: f64, u: Complex64) -> Complex64 {
        let c2 = params.levy().c.powi(2);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.times.len() {
            let chi = self.chi[i];
            let psi2 = u * (horizon - self.times[i]);
            let k = u + self.b_bar[i] * psi2;
            let term = 0.5 * chi * chi * c2 * k * k
                + self.varpi1[i] * u
                + self.varpi2[i] * psi2
                + params.jumps.exp_compensated(k * chi, Some(chi));
            acc += term * self.weights[i];
        }
        acc
    }
}

/// `∫_ℝ g(λ) dλ = 2 Re ∫₀^Λ g` for `g(−λ) = conj g(λ)`, by graded Gauss–Legendre panels.
fn fourier_integral<G>(g: G, lambda_max: f64, nodes: usize) -> (f64, PriceDiagnostics)
where
    G: Fn(f64) -> Complex64 + Sync,
{
    let rule = gl16();
    let panels = (nodes / 2 / rule.len()).max(1);
    // Panels widen quadratically away from the origin, where the poles of
    // the payoff transform at distance |ω| and |ω − 1| make `g` sharply peaked.
    let edge = |p: usize| lambda_max * (p as f64 / panels as f64).powi(2);
    let parts: Vec<f64> = (0..panels)
        .into_par_iter()
        .map(|p| {
            rule.mapped(edge(p), edge(p + 1)).map(|(x, w)| w * g(x).re).sum::<f64>()
        })
        .collect();
    let value = 2.0 * parts.iter().sum::<f64>();
    let mut residue: f64 = 0.0;
    for k in 1..=8 {
        let x = lambda_max * k as f64 / 9.0;
        residue = residue.max((g(-x) - g(x).conj()).norm());
    }
    let diagnostics = PriceDiagnostics {
        imag_residue: residue * lambda_max,
        tail_estimate: 2.0 * lambda_max * g(lambda_max).norm(),
        n_nodes: 2 * panels * rule.len(),
    };
    (value, diagnostics)
}

fn finish(
    value: f64,
    mut diagnostics: PriceDiagnostics,
    discount: f64,
    scale: f64,
    opt: &OptionSpec,
    method: &str,
) -> Result<PriceReport> {
    let price = discount * value;
    diagnostics.tail_estimate *= discount;
    diagnostics.imag_residue *= discount;
    if !price.is_finite() {
        return Err(Error::Numeric("Fourier integral is not finite".into()));
    }
    if diagnostics.tail_estimate > 1e-9 * scale {
        return Err(Error::Numeric(format!(
            "Fourier tail {:.3e} beyond Λ = {} is too large; increase lambda_max",
            diagnostics.tail_estimate, opt.lambda_max
        )));
    }
    if diagnostics.imag_residue > 1e-8 * price.abs().max(1e-8 * scale) {
        return Err(Error::Numeric(format!(
            "transform lost conjugate symmetry (residue {:.3e})",
            diagnostics.imag_residue
        )));
    }
    Ok(PriceReport { price, method: method.into(), diagnostics })
}

/// Price at `t` of a European call or put on `S(T)` by damped Fourier inversion.
pub fn spot_option_price(params: &LssPricingParams, opt: &OptionSpec, t: f64) -> Result<PriceReport> {
    opt.validate()?;
    if opt.delivery.is_some() {
        return Err(Error::Domain("spot options have no delivery date".into()));
    }
    let horizon = opt.maturity;
    if t > horizon {
        return Err(Error::Domain(format!("valuation time {t} is after maturity {horizon}")));
    }
    if t == horizon {
        let s = params.spot();
        return Ok(PriceReport {
            price: (opt.kind.sign() * (s - opt.strike)).max(0.0),
            method: "intrinsic".into(),
            diagnostics: PriceDiagnostics::default(),
        });
    }
    let omega = opt.omega();
    params.check_moment(t, horizon, omega, horizon)?;
    let rule = TimeRule::new(params, t, horizon, opt.lambda_max);
    let state = params.spec.v + (horizon - t) * params.spec.rho;
    let g = |lambda: f64| {
        let u = Complex64::new(omega, lambda);
        let ft = payoff_transform(lambda, omega, opt.strike).expect("validated damping");
        (rule.phi(params, horizon, u) + u * state).exp() * ft
    };
    let (value, diag) = fourier_integral(g, opt.lambda_max, opt.nodes);
    let discount = (-params.rate_integral(t, horizon)).exp();
    finish(value, diag, discount, params.spot() + opt.strike, opt, "fourier")
}

/// `F(t, T)` with its factors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardQuote {
    pub t: f64,
    pub maturity: f64,
    pub price: f64,
    pub spot_factor: f64,
    pub rate_factor: f64,
    pub premium_factor: f64,
    /// `𝒜(t, T)`.
    pub cal_a: f64,
}

/// Deterministic part of the log-forward beyond carry:
///
/// ```text
/// 𝒜 = ½c² ∫ B̄²χ²(T−s)² + ½c² ∫ B̄χ²(T−s) + ∫ (T−s)[Ā + (B̄ − B̄₂) r]
///     − (b + ∫ z ℓ(dz)) ∫ B̄χ(T−s)
///     + ∫∫ χz e^{χz}/(e^{χz} − 1) · (e^{(T−s)B̄χz} − 1) ℓ(dz) ds
/// ```
pub fn cal_a(params: &LssPricingParams, t: f64, horizon: f64) -> Result<f64> {
    if t > horizon {
        return Err(Error::Domain(format!("need t ≤ T (got {t} > {horizon})")));
    }
    if t == horizon {
        return Ok(0.0);
    }
    let s = &params.spec;
    let c2 = s.levy.c * s.levy.c;
    let shift = s.levy.drift() + s.levy.jump_mean_rate();
    let integrand = |u: f64| {
        let tau = horizon - u;
        let chi = params.chi(u);
        let bb = params.b_bar(u);
        let jump = params.jumps.integrate(tau * bb * chi, |z| {
            tilt(-chi * z) * (tau * bb * chi * z).exp_m1()
        });
        0.5 * c2 * bb * bb * chi * chi * tau * tau + 0.5 * c2 * bb * chi * chi * tau
            + tau * (s.a_bar.eval(u) + (bb - s.b2_bar.eval(u)) * params.rate(u))
            - shift * bb * chi * tau
            + jump
    };
    integrate_piecewise(integrand, t, horizon, &params.breakpoints(), Tolerance::new(1e-14, 1e-12))
        .map(|r| r.value)
        .map_err(|e| Error::Numeric(format!("quadrature of 𝒜 failed: {e}")))
}

/// `F(t, T) = S(t) exp(𝒜(t, T) + ∫ₜᵀ r + (T − t) ρ(t))`.
pub fn forward_price(params: &LssPricingParams, t: f64, horizon: f64) -> Result<ForwardQuote> {
    let a = cal_a(params, t, horizon)?;
    let spot_factor = params.spot();
    let rate_factor = params.rate_integral(t, horizon).exp();
    let premium_factor = ((horizon - t) * params.spec.rho).exp();
    Ok(ForwardQuote {
        t,
        maturity: horizon,
        price: spot_factor * a.exp() * rate_factor * premium_factor,
        spot_factor,
        rate_factor,
        premium_factor,
        cal_a: a,
    })
}

/// Price at `t` of an option exercised at `opt.maturity` on the forward
/// with delivery `opt.delivery` (defaulting to the exercise date).
///
/// Calls are priced by Fourier inversion of the log-forward transform;
/// puts follow from parity on the forward.
pub fn option_on_forward_price(params: &LssPricingParams, opt: &OptionSpec, t: f64) -> Result<PriceReport> {
    let exercise = opt.maturity;
    let delivery = opt.delivery.unwrap_or(exercise);
    if opt.kind == OptionKind::Put {
        let call_spec = OptionSpec { kind: OptionKind::Call, omega: Some(opt.omega.filter(|&w| w > 1.0).unwrap_or(2.0)), ..opt.clone() };
        call_spec.validate()?;
        if opt.omega.is_some_and(|w| w >= 0.0) {
            opt.validate()?;
        }
        let call = option_on_forward_price(params, &call_spec, t)?;
        let fwd = forward_price(params, t, delivery)?.price;
        let discount = (-params.rate_integral(t, exercise)).exp();
        return Ok(PriceReport {
            price: call.price - discount * (fwd - opt.strike),
            method: "fourier+parity".into(),
            diagnostics: call.diagnostics,
        });
    }
    opt.validate()?;
    if t > exercise {
        return Err(Error::Domain(format!("valuation time {t} is after exercise {exercise}")));
    }
    let fwd = forward_price(params, t, delivery)?.price;
    if t == exercise {
        return Ok(PriceReport {
            price: (fwd - opt.strike).max(0.0),
            method: "intrinsic".into(),
            diagnostics: PriceDiagnostics::default(),
        });
    }
    let omega = opt.omega();
    params.check_moment(t, exercise, omega, delivery)?;
    let c2 = params.levy().c.powi(2);
    let mut nodes: Vec<(f64, f64, f64, f64)> = Vec::new();
    for (a, b) in params.time_pieces(t, exercise) {
        let panels = ((b - a) * 4.0).ceil().max(2.0) as usize;
        let h = (b - a) / panels as f64;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            for (s, w) in gl16().mapped(lo, lo + h) {
                nodes.push((w, params.sigma(s, delivery), params.forward_log_drift(s, delivery), params.chi(s)));
            }
        }
    }
    let log_f = fwd.ln();
    let g = |lambda: f64| {
        let u = Complex64::new(omega, lambda);
        let mut phi = Complex64::new(0.0, 0.0);
        for &(w, sig, drift, chi) in &nodes {
            phi += w * (0.5 * c2 * sig * sig * u * u + drift * u + params.jumps.exp_compensated(u * sig, Some(chi)));
        }
        let ft = payoff_transform(lambda, omega, opt.strike).expect("validated damping");
        (phi + u * log_f).exp() * ft
    };
    let (value, diag) = fourier_integral(g, opt.lambda_max, opt.nodes);
    let discount = (-params.rate_integral(t, exercise)).exp();
    finish(value, diag, discount, fwd + opt.strike, opt, "fourier")
}

/// Exact sampler of `X = ∫ₜ^{T_e} Σ(s, T_d) (c dW + ∫ z Ñ(ds, dz))` under the
/// pricing measure. `χ` is frozen on short segments; the sampler is exact in
/// distribution whenever `χ` is piecewise constant.
struct SigmaIntegral {
    segments: Vec<Segment>,
    delivery: f64,
}

struct Segment {
    start: f64,
    end: f64,
    std: f64,
    compensator: f64,
    jumps: TiltedJumps,
}

impl SigmaIntegral {
    fn new(params: &LssPricingParams, t: f64, exercise: f64, delivery: f64) -> Self {
        let c = params.levy().c;
        let split = !matches!(params.spec.chi.level, Curve::Constant(_) | Curve::Steps { .. });
        let mut segments = Vec::new();
        for (a, b) in params.time_pieces(t, exercise) {
            let pieces = if split { 64 } else { 1 };
            let h = (b - a) / pieces as f64;
            for k in 0..pieces {
                let (lo, hi) = (a + k as f64 * h, a + (k + 1) as f64 * h);
                let chi = params.chi(0.5 * (lo + hi));
                let jumps = TiltedJumps::new(&params.jumps, chi);
                let mut var = 0.0;
                let mut mean = 0.0;
                for (s, w) in gl16().mapped(lo, hi) {
                    let sig = (1.0 + params.b_bar(s) * (delivery - s)) * chi;
                    var += w * c * c * sig * sig;
                    mean += w * sig;
                }
                segments.push(Segment { start: lo, end: hi, std: var.sqrt(), compensator: mean * jumps.mean_rate, jumps });
            }
        }
        Self { segments, delivery }
    }

    fn sample(&self, params: &LssPricingParams, rng: &mut PathRng) -> f64 {
        let mut x = 0.0;
        for seg in &self.segments {
            let z: f64 = rng.sample(StandardNormal);
            x += seg.std * z - seg.compensator;
            let n = seg.jumps.count(seg.end - seg.start, rng);
            for _ in 0..n {
                let when = seg.start + (seg.end - seg.start) * rng.random::<f64>();
                let size = seg.jumps.size(rng);
                let sig = (1.0 + params.b_bar(when) * (self.delivery - when)) * seg.jumps.chi;
                x += sig * size;
            }
        }
        x
    }
}

/// `E[V(T)] − X` drift: `ρ(t)(T − t) + ∫ₜᵀ [ϖ₁(s) + (T − s) ϖ₂(s)] ds`.
fn log_spot_drift(params: &LssPricingParams, t: f64, horizon: f64) -> Result<f64> {
    let integral = integrate_piecewise(
        |s| params.varpi1(s) + (horizon - s) * params.varpi2(s),
        t,
        horizon,
        &params.breakpoints(),
        Tolerance::new(1e-14, 1e-12),
    )?
    .value;
    Ok(params.spec.rho * (horizon - t) + integral)
}

/// Samples of `V(T)` under the pricing measure.
fn terminal_log_spot(params: &LssPricingParams, t: f64, horizon: f64) -> Result<impl Fn(u64, u64) -> f64 + Sync + '_> {
    let base = params.spec.v + log_spot_drift(params, t, horizon)?;
    let sampler = SigmaIntegral::new(params, t, horizon, horizon);
    Ok(move |seed: u64, path: u64| {
        let mut rng = path_rng(seed, path, SALT_SPOT);
        base + sampler.sample(params, &mut rng)
    })
}

/// Monte Carlo price of the option in `opt` at time `t`.
pub fn mc_spot_option(
    params: &LssPricingParams,
    opt: &OptionSpec,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<McEstimate> {
    let discount = (-params.rate_integral(t, opt.maturity)).exp();
    let draw = terminal_log_spot(params, t, opt.maturity)?;
    let sign = opt.kind.sign();
    Ok(monte_carlo(n_paths, 1, |p, out| {
        out[0] = discount * (sign * (draw(seed, p).exp() - opt.strike)).max(0.0);
    })
    .remove(0))
}

/// Monte Carlo call and put prices from the same paths; their difference
/// carries its own standard error for parity checks.
pub fn mc_call_put(
    params: &LssPricingParams,
    strike: f64,
    maturity: f64,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<[McEstimate; 3]> {
    let discount = (-params.rate_integral(t, maturity)).exp();
    let draw = terminal_log_spot(params, t, maturity)?;
    let v = monte_carlo(n_paths, 3, |p, out| {
        let s = draw(seed, p).exp();
        out[0] = discount * (s - strike).max(0.0);
        out[1] = discount * (strike - s).max(0.0);
        out[2] = out[0] - out[1];
    });
    Ok([v[0], v[1], v[2]])
}

/// Monte Carlo forward `E[e^{−∫r} S(T)] / E[e^{−∫r}]`, which is `E[S(T)]`
/// for deterministic rates.
pub fn mc_forward(params: &LssPricingParams, t: f64, horizon: f64, n_paths: u64, seed: u64) -> Result<McEstimate> {
    let draw = terminal_log_spot(params, t, horizon)?;
    Ok(monte_carlo(n_paths, 1, |p, out| out[0] = draw(seed, p).exp()).remove(0))
}

/// Monte Carlo price of an option on a forward, sampling `log F` at exercise
/// from its pricing-measure dynamics started at the closed-form `F(t, T_d)`.
pub fn mc_option_on_forward(
    params: &LssPricingParams,
    opt: &OptionSpec,
    t: f64,
    n_paths: u64,
    seed: u64,
) -> Result<McEstimate> {
    let exercise = opt.maturity;
    let delivery = opt.delivery.unwrap_or(exercise);
    let start = forward_price(params, t, delivery)?.price.ln();
    let drift = integrate_piecewise(
        |s| params.forward_log_drift(s, delivery),
        t,
        exercise,
        &params.breakpoints(),
        Tolerance::new(1e-14, 1e-12),
    )?
    .value;
    let sampler = SigmaIntegral::new(params, t, exercise, delivery);
    let discount = (-params.rate_integral(t, exercise)).exp();
    let sign = opt.kind.sign();
    Ok(monte_carlo(n_paths, 1, |p, out| {
        let mut rng = path_rng(seed, p, SALT_FORWARD_OPTION);
        let f = (start + drift + sampler.sample(params, &mut rng)).exp();
        out[0] = discount * (sign * (f - opt.strike)).max(0.0);
    })
    .remove(0))
}
