//! Square-integrable Lévy drivers: Brownian part plus compound Poisson jumps.

use std::sync::{Arc, OnceLock};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::quadrature::{gl16, QuadValue};
use crate::numerics::special::{norm_cdf, norm_pdf, tilt};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum JumpLaw {
    Normal { mean: f64, std: f64 },
    /// Upward jumps with probability `p_up`, exponential with rate
    /// `eta_up`; downward jumps exponential with rate `eta_down`.
    DoubleExponential { p_up: f64, eta_up: f64, eta_down: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompoundPoisson {
    pub intensity: f64,
    pub law: JumpLaw,
}

/// Lévy driver `L(t) = b t + c W(t) + ∫ z Ñ(dt, dz)` with Lévy measure
/// `ℓ = intensity · law` and `b = varsigma + ∫_{|z|≥1} z ℓ(dz)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyModel {
    #[serde(default)]
    pub varsigma: f64,
    pub c: f64,
    #[serde(default)]
    pub jumps: Option<CompoundPoisson>,
}

impl JumpLaw {
    pub fn validate(&self) -> Result<()> {
        match *self {
            JumpLaw::Normal { mean, std } => {
                if !mean.is_finite() || !(std > 0.0) || !std.is_finite() {
                    return Err(Error::Domain(format!(
                        "normal jump law needs finite mean and positive std (got {mean}, {std})"
                    )));
                }
            }
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                if !(0.0..=1.0).contains(&p_up) || !(eta_up > 0.0) || !(eta_down > 0.0) {
                    return Err(Error::Domain(
                        "double-exponential law needs p_up in [0,1] and positive rates".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, .. } => mean,
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                p_up / eta_up - (1.0 - p_up) / eta_down
            }
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => mean * mean + std * std,
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                2.0 * p_up / (eta_up * eta_up) + 2.0 * (1.0 - p_up) / (eta_down * eta_down)
            }
        }
    }

    /// `E[Z; |Z| ≥ 1]`.
    pub fn large_jump_mean(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => {
                let lo = (-1.0 - mean) / std;
                let hi = (1.0 - mean) / std;
                mean * (1.0 - norm_cdf(hi) + norm_cdf(lo)) + std * (norm_pdf(hi) - norm_pdf(lo))
            }
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                p_up * (-eta_up).exp() * (1.0 + 1.0 / eta_up)
                    - (1.0 - p_up) * (-eta_down).exp() * (1.0 + 1.0 / eta_down)
            }
        }
    }

    pub fn density(&self, z: f64) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => norm_pdf((z - mean) / std) / std,
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                if z >= 0.0 {
                    p_up * eta_up * (-eta_up * z).exp()
                } else {
                    (1.0 - p_up) * eta_down * (eta_down * z).exp()
                }
            }
        }
    }

    /// Interval outside of which the law has negligible mass, split into
    /// pieces on which the density is smooth.
    fn support_pieces(&self) -> Vec<(f64, f64)> {
        match *self {
            JumpLaw::Normal { mean, std } => vec![(mean - 16.0 * std, mean + 16.0 * std)],
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                let mut v = Vec::new();
                if p_up < 1.0 {
                    v.push((-80.0 / eta_down, 0.0));
                }
                if p_up > 0.0 {
                    v.push((0.0, 80.0 / eta_up));
                }
                v
            }
        }
    }

    /// Open interval of real `w` with `∫ e^{wz} law(dz) < ∞`.
    pub fn exp_moment_strip(&self) -> (f64, f64) {
        match *self {
            JumpLaw::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => (
                if p_up < 1.0 { -eta_down } else { f64::NEG_INFINITY },
                if p_up > 0.0 { eta_up } else { f64::INFINITY },
            ),
        }
    }

    /// Smallest jump that is not negligible; used to bound tilting weights.
    pub fn effective_min(&self) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => mean - 12.0 * std,
            JumpLaw::DoubleExponential { p_up, eta_down, .. } => {
                if p_up >= 1.0 { 0.0 } else { -69.0 / eta_down }
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            JumpLaw::Normal { mean, std } => {
                Normal::new(mean, std).expect("validated normal law").sample(rng)
            }
            JumpLaw::DoubleExponential { p_up, eta_up, eta_down } => {
                if rng.random::<f64>() < p_up {
                    Exp::new(eta_up).expect("validated rate").sample(rng)
                } else {
                    -Exp::new(eta_down).expect("validated rate").sample(rng)
                }
            }
        }
    }

    /// Frequency scale above which `∫ e^{iωz} law(dz)` is negligible, if any.
    fn gaussian_width(&self) -> Option<f64> {
        match *self {
            JumpLaw::Normal { std, .. } => Some(std),
            JumpLaw::DoubleExponential { .. } => None,
        }
    }
}

impl LevyModel {
    pub fn brownian(c: f64) -> Self {
        Self { varsigma: 0.0, c, jumps: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0) || !self.c.is_finite() || !self.varsigma.is_finite() {
            return Err(Error::Domain("Lévy model needs finite varsigma and c ≥ 0".into()));
        }
        if let Some(j) = &self.jumps {
            if !(j.intensity > 0.0) || !j.intensity.is_finite() {
                return Err(Error::Domain("jump intensity must be positive".into()));
            }
            j.law.validate()?;
        }
        Ok(())
    }

    pub fn intensity(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.intensity)
    }

    /// `∫ z ℓ(dz)`.
    pub fn jump_mean_rate(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.intensity * j.law.mean())
    }

    /// `∫ z² ℓ(dz)`.
    pub fn jump_second_moment_rate(&self) -> f64 {
        self.jumps.as_ref().map_or(0.0, |j| j.intensity * j.law.second_moment())
    }

    /// Drift `b = varsigma + ∫_{|z|≥1} z ℓ(dz)` of the decomposition.
    pub fn drift(&self) -> f64 {
        self.varsigma
            + self
                .jumps
                .as_ref()
                .map_or(0.0, |j| j.intensity * j.law.large_jump_mean())
    }

    /// Variance of `L(1)`.
    pub fn variance_rate(&self) -> f64 {
        self.c * self.c + self.jump_second_moment_rate()
    }
}

/// Sums against the Lévy measure by composite Gauss–Legendre rules.
///
/// Rules with `8·2^k` panels are built lazily and shared.
#[derive(Debug)]
pub struct JumpIntegrator {
    law: Option<JumpLaw>,
    intensity: f64,
    pieces: Vec<(f64, f64)>,
    rules: [OnceLock<Arc<JumpRule>>; RULE_LEVELS],
}

const RULE_LEVELS: usize = 9;
const BASE_PANELS: usize = 8;

/// Nodes and weights with `Σ wᵢ f(zᵢ) ≈ ∫ f(z) ℓ(dz)`.
#[derive(Debug, Clone)]
pub struct JumpRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl JumpIntegrator {
    pub fn new(levy: &LevyModel) -> Self {
        let (law, intensity) = match &levy.jumps {
            Some(j) => (Some(j.law.clone()), j.intensity),
            None => (None, 0.0),
        };
        let pieces = law.as_ref().map_or_else(Vec::new, |l| l.support_pieces());
        Self { law, intensity, pieces, rules: Default::default() }
    }

    pub fn has_jumps(&self) -> bool {
        self.law.is_some()
    }

    pub fn law(&self) -> Option<&JumpLaw> {
        self.law.as_ref()
    }

    pub fn intensity(&self) -> f64 {
        self.intensity
    }

    /// Rule resolving oscillations `e^{iωz}` up to `|ω| = frequency`.
    pub fn rule(&self, frequency: f64) -> Arc<JumpRule> {
        let width: f64 = self.pieces.iter().map(|(a, b)| b - a).sum();
        // About one radian of phase per Gauss node.
        let need = (width * frequency.abs() / 8.0).ceil() as usize;
        let mut level = 0;
        while level + 1 < RULE_LEVELS && BASE_PANELS << level < need {
            level += 1;
        }
        self.rules[level].get_or_init(|| Arc::new(self.build_rule(BASE_PANELS << level))).clone()
    }

    fn build_rule(&self, panels: usize) -> JumpRule {
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let Some(law) = &self.law else {
            return JumpRule { nodes, weights };
        };
        let width: f64 = self.pieces.iter().map(|(a, b)| b - a).sum();
        for &(a, b) in &self.pieces {
            let n = ((panels as f64 * (b - a) / width).ceil() as usize).max(4);
            let h = (b - a) / n as f64;
            for k in 0..n {
                let lo = a + k as f64 * h;
                for (z, w) in gl16().mapped(lo, lo + h) {
                    let d = law.density(z);
                    if d > 0.0 {
                        nodes.push(z);
                        weights.push(w * d * self.intensity);
                    }
                }
            }
        }
        JumpRule { nodes, weights }
    }

    /// `∫ f(z) ℓ(dz)` for integrands oscillating at most at `frequency`.
    pub fn integrate<T: QuadValue, F: FnMut(f64) -> T>(&self, frequency: f64, mut f: F) -> T {
        if self.law.is_none() {
            return T::default();
        }
        let rule = self.rule(frequency);
        let mut acc = T::default();
        for (&z, &w) in rule.nodes.iter().zip(&rule.weights) {
            acc = acc + f(z) * w;
        }
        acc
    }

    /// `∫ (e^{wz} − 1 − wz) · tilt(χz) ℓ(dz)`, or with unit weight when
    /// `chi` is `None`.
    pub fn exp_compensated(&self, w: Complex64, chi: Option<f64>) -> Complex64 {
        if self.law.is_none() {
            return Complex64::new(0.0, 0.0);
        }
        let weight = |z: f64| chi.map_or(1.0, |x| tilt(x * z));
        let freq = w.im.abs();
        if let Some(s) = self.law.as_ref().and_then(JumpLaw::gaussian_width) {
            // Past this frequency the oscillatory part is below e^{-70}
            // relative to the weight; the pole-free strip of the tilt
            // (width 2π/χ) keeps the Gaussian decay valid.
            let strip = match chi {
                Some(x) if x != 0.0 => 2.0 * std::f64::consts::PI / x.abs(),
                _ => f64::INFINITY,
            };
            if freq * s > 12.0 && freq * s * s < 0.5 * strip && w.re.abs() * s < 2.0 {
                let base = self.integrate(0.0, |z| Complex64::new(weight(z), 0.0));
                let first = self.integrate(0.0, |z| Complex64::new(z * weight(z), 0.0));
                return -base - w * first;
            }
        }
        self.integrate(freq, |z| {
            let e = (w * z).exp() - 1.0 - w * z;
            e * weight(z)
        })
    }
}

/// Draws for one path: unit Brownian increments and the jump sizes of each
/// step in compressed form.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PathIncrements {
    /// `ΔW_k`, standard Brownian increments.
    pub dw: Vec<f64>,
    /// Jump sizes of step `k` are `jump_sizes[jump_offsets[k]..jump_offsets[k+1]]`.
    pub jump_offsets: Vec<u32>,
    pub jump_sizes: Vec<f64>,
    /// `Σ z − Δt ∫ z ℓ(dz)` per step.
    pub compensated_jumps: Vec<f64>,
}

impl PathIncrements {
    pub fn steps(&self) -> usize {
        self.dw.len()
    }

    pub fn jumps_in(&self, step: usize) -> &[f64] {
        let a = self.jump_offsets[step] as usize;
        let b = self.jump_offsets[step + 1] as usize;
        &self.jump_sizes[a..b]
    }

    /// Gaussian part `c ΔW_k`.
    pub fn gaussian(&self, levy: &LevyModel, step: usize) -> f64 {
        levy.c * self.dw[step]
    }

    /// Full increment `ΔL_k = b Δt + c ΔW_k + compensated jumps`.
    pub fn increment(&self, levy_drift: f64, c: f64, dt: f64, step: usize) -> f64 {
        levy_drift * dt + c * self.dw[step] + self.compensated_jumps[step]
    }
}

/// Samples the physical-measure increments of one path on `steps` steps of
/// length `dt`.
pub fn sample_path_increments<R: Rng + ?Sized>(
    levy: &LevyModel,
    dt: f64,
    steps: usize,
    rng: &mut R,
) -> PathIncrements {
    let sqdt = dt.sqrt();
    let mut out = PathIncrements {
        dw: Vec::with_capacity(steps),
        jump_offsets: Vec::with_capacity(steps + 1),
        jump_sizes: Vec::new(),
        compensated_jumps: Vec::with_capacity(steps),
    };
    out.jump_offsets.push(0);
    let poisson = levy
        .jumps
        .as_ref()
        .map(|j| Poisson::new(j.intensity * dt).expect("positive jump intensity"));
    let comp = dt * levy.jump_mean_rate();
    for _ in 0..steps {
        let z: f64 = StandardNormal.sample(rng);
        out.dw.push(sqdt * z);
        let mut sum = 0.0;
        if let (Some(p), Some(j)) = (&poisson, &levy.jumps) {
            let count = p.sample(rng) as usize;
            for _ in 0..count {
                let size = j.law.sample(rng);
                out.jump_sizes.push(size);
                sum += size;
            }
        }
        out.jump_offsets.push(out.jump_sizes.len() as u32);
        out.compensated_jumps.push(sum - comp);
    }
    out
}

/// Jump sampler under the pricing measure, whose jump compensator is
/// `tilt(χz) ℓ(dz)` for a fixed `χ`.
#[derive(Clone, Debug)]
pub struct TiltedJumps {
    pub chi: f64,
    /// Total intensity `∫ tilt(χz) ℓ(dz)`.
    pub intensity: f64,
    /// `∫ z tilt(χz) ℓ(dz)`.
    pub mean_rate: f64,
    bound: f64,
    law: Option<JumpLaw>,
    poisson_rate: f64,
}

impl TiltedJumps {
    pub fn new(integrator: &JumpIntegrator, chi: f64) -> Self {
        let Some(law) = integrator.law().cloned() else {
            return Self { chi, intensity: 0.0, mean_rate: 0.0, bound: 1.0, law: None, poisson_rate: 0.0 };
        };
        let intensity = integrator.integrate(0.0, |z| tilt(chi * z));
        let mean_rate = integrator.integrate(0.0, |z| z * tilt(chi * z));
        let bound = tilt(chi * law.effective_min()).max(1.0);
        Self { chi, intensity, mean_rate, bound, law: Some(law), poisson_rate: intensity }
    }

    pub fn has_jumps(&self) -> bool {
        self.law.is_some()
    }

    /// Number of jumps over a step of length `dt`.
    pub fn count<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> usize {
        if self.law.is_none() || self.poisson_rate * dt <= 0.0 {
            return 0;
        }
        Poisson::new(self.poisson_rate * dt).expect("positive rate").sample(rng) as usize
    }

    /// One jump size from the tilted law, by rejection from the base law.
    pub fn size<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let law = self.law.as_ref().expect("size drawn only when jumps exist");
        loop {
            let z = law.sample(rng);
            let accept = tilt(self.chi * z) / self.bound;
            if rng.random::<f64>() < accept {
                return z;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::quadrature::{integrate_adaptive, Tolerance};

    fn normal_model() -> LevyModel {
        LevyModel {
            varsigma: 0.0,
            c: 0.2,
            jumps: Some(CompoundPoisson {
                intensity: 1.0,
                law: JumpLaw::Normal { mean: 0.0, std: 0.2 },
            }),
        }
    }

    #[test]
    fn drift_without_jumps_is_varsigma() {
        let l = LevyModel { varsigma: 0.1, c: 0.3, jumps: None };
        assert_eq!(l.drift(), 0.1);
    }

    #[test]
    fn normal_large_jump_mean_matches_quadrature() {
        let law = JumpLaw::Normal { mean: 0.3, std: 0.7 };
        let tol = Tolerance::new(1e-14, 1e-13);
        let upper = integrate_adaptive(|z| z * law.density(z), 1.0, 15.0, tol).unwrap().value;
        let lower = integrate_adaptive(|z| z * law.density(z), -15.0, -1.0, tol).unwrap().value;
        let diff = (law.large_jump_mean() - (upper + lower)).abs();
        assert!(diff < 1e-12, "{diff} {} {}", law.large_jump_mean(), upper + lower);
    }

    #[test]
    fn symmetric_double_exponential_has_zero_drift() {
        let l = LevyModel {
            varsigma: 0.0,
            c: 0.0,
            jumps: Some(CompoundPoisson {
                intensity: 3.0,
                law: JumpLaw::DoubleExponential { p_up: 0.5, eta_up: 4.0, eta_down: 4.0 },
            }),
        };
        assert!(l.drift().abs() < 1e-16);
    }

    #[test]
    fn rule_reproduces_moments() {
        for law in [
            JumpLaw::Normal { mean: -0.05, std: 0.1 },
            JumpLaw::DoubleExponential { p_up: 0.3, eta_up: 25.0, eta_down: 10.0 },
        ] {
            let l = LevyModel {
                varsigma: 0.0,
                c: 0.0,
                jumps: Some(CompoundPoisson { intensity: 2.0, law: law.clone() }),
            };
            let q = JumpIntegrator::new(&l);
            let m0: f64 = q.integrate(0.0, |_| 1.0);
            let m1: f64 = q.integrate(0.0, |z| z);
            let m2: f64 = q.integrate(0.0, |z| z * z);
            assert!((m0 - 2.0).abs() < 1e-13, "{law:?}");
            assert!((m1 - 2.0 * law.mean()).abs() < 1e-13);
            assert!((m2 - 2.0 * law.second_moment()).abs() < 1e-13);
        }
    }

    #[test]
    fn normal_characteristic_function_at_high_frequency() {
        let l = normal_model();
        let q = JumpIntegrator::new(&l);
        for omega in [0.5, 10.0, 40.0, 150.0] {
            let w = Complex64::new(0.0, omega);
            let got = q.exp_compensated(w, None);
            // ∫ (e^{iωz} − 1 − iωz) N(0, s²)(dz) = e^{−ω²s²/2} − 1.
            let exact = Complex64::new((-0.5 * omega * omega * 0.04f64).exp() - 1.0, 0.0);
            assert!((got - exact).norm() < 1e-13, "ω={omega}: {got} vs {exact}");
        }
    }

    #[test]
    fn tilted_sampler_mean_matches_quadrature() {
        use rand::SeedableRng;
        let l = LevyModel {
            varsigma: 0.0,
            c: 0.0,
            jumps: Some(CompoundPoisson {
                intensity: 1.0,
                law: JumpLaw::Normal { mean: 0.0, std: 0.5 },
            }),
        };
        let q = JumpIntegrator::new(&l);
        let t = TiltedJumps::new(&q, 1.0);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let n = 200_000;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for _ in 0..n {
            let z = t.size(&mut rng);
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let se = ((sq / n as f64 - mean * mean) / n as f64).sqrt();
        let exact = t.mean_rate / t.intensity;
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }
}
