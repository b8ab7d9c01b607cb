//! The physical-measure market model: log-spot with memory, short rate and
//! risk premium, all driven by one Lévy process.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::dynamics::levy::{JumpIntegrator, LevyModel, TiltedJumps};
use crate::error::{Error, Result};
use crate::kernel::{resolvent_numeric, resolvent_series, MemoryKernel, Resolvent};
use crate::numerics::special::zeta;
use crate::numerics::Curve;

/// Uniform grid `t_k = k · horizon / steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() || steps == 0 {
            return Err(Error::Config(format!(
                "time grid needs a positive horizon and at least one step (got {horizon}, {steps})"
            )));
        }
        Ok(Self { horizon, steps })
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.dt()
        }
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }

    /// Index of the grid point equal to `t`, if there is one.
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = (t / self.dt()).round();
        if k < 0.0 || k as usize > self.steps {
            return None;
        }
        let k = k as usize;
        ((self.time(k) - t).abs() <= 1e-9 * self.dt()).then_some(k)
    }
}

/// Deterministic volatility `χ(t)` with the bounds it is declared to respect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolProcess {
    pub level: Curve,
    pub lower: f64,
    pub upper: f64,
}

impl VolProcess {
    pub fn constant(value: f64, lower: f64, upper: f64) -> Self {
        Self { level: Curve::Constant(value), lower, upper }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.level.eval(t)
    }

    /// Checks `0 < lower < χ(t) < upper` on `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<()> {
        self.level.validate()?;
        if !(self.lower > 0.0) || !(self.upper > self.lower) || !self.upper.is_finite() {
            return Err(Error::Model(format!(
                "volatility bounds must satisfy 0 < lower < upper < ∞ (got {}, {})",
                self.lower, self.upper
            )));
        }
        let (lo, hi) = self.level.range_on(0.0, horizon);
        if !(lo > self.lower && hi < self.upper) {
            return Err(Error::Model(format!(
                "volatility χ(t) ranges over [{lo}, {hi}] on [0, {horizon}] but must stay strictly \
                 inside its declared bounds ({}, {}); the bounded-χ assumption behind the change \
                 of measure does not hold",
                self.lower, self.upper
            )));
        }
        Ok(())
    }
}

/// `dr = (A − B₂ r) dt + B₁ χ (c dW + ∫ z Ñ)`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateCoefficients {
    pub a: Curve,
    #[serde(default)]
    pub b1: Curve,
    pub b2: Curve,
}

/// `dρ = (Ā + B̄₁ a − B̄₂ r − B̄₃ ρ) dt + B̄₁ χ (c dW + ∫ z Ñ)`, with `a` the
/// memory integral of the log-spot.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumCoefficients {
    pub a_bar: Curve,
    pub b1_bar: Curve,
    pub b2_bar: Curve,
    pub b3_bar: Curve,
}

/// Serializable description of the full model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    pub kernel: MemoryKernel,
    pub levy: LevyModel,
    pub chi: VolProcess,
    pub rate: RateCoefficients,
    pub premium: PremiumCoefficients,
    pub r0: f64,
    pub rho0: f64,
    #[serde(default)]
    pub xi0: f64,
    pub horizon: f64,
}

/// A validated model together with its resolvent and jump quadrature.
#[derive(Clone, Debug)]
pub struct MarketModel {
    pub kernel: MemoryKernel,
    pub resolvent: Resolvent,
    pub levy: LevyModel,
    pub chi: VolProcess,
    pub rate: RateCoefficients,
    pub premium: PremiumCoefficients,
    pub r0: f64,
    pub rho0: f64,
    pub xi0: f64,
    pub horizon: f64,
    pub jumps: Arc<JumpIntegrator>,
}

impl MarketModel {
    /// Validates `spec` and attaches `resolvent`, which must cover the horizon.
    pub fn new(spec: MarketSpec, resolvent: Resolvent) -> Result<Self> {
        spec.kernel.validate()?;
        spec.levy.validate()?;
        if !(spec.horizon > 0.0) {
            return Err(Error::Config("model horizon must be positive".into()));
        }
        spec.chi.validate(spec.horizon)?;
        for (name, curve) in [
            ("A", &spec.rate.a),
            ("B1", &spec.rate.b1),
            ("B2", &spec.rate.b2),
            ("Abar", &spec.premium.a_bar),
            ("B1bar", &spec.premium.b1_bar),
            ("B2bar", &spec.premium.b2_bar),
            ("B3bar", &spec.premium.b3_bar),
        ] {
            curve
                .validate()
                .map_err(|e| Error::Config(format!("coefficient {name}: {e}")))?;
        }
        for (name, v) in [("r0", spec.r0), ("rho0", spec.rho0), ("xi0", spec.xi0)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("initial value {name} must be finite")));
            }
        }
        if resolvent.series.is_none() && resolvent.horizon() < spec.horizon * (1.0 - 1e-12) {
            return Err(Error::Config(format!(
                "resolvent grid ends at {} before the model horizon {}",
                resolvent.horizon(),
                spec.horizon
            )));
        }
        let jumps = Arc::new(JumpIntegrator::new(&spec.levy));
        Ok(Self {
            kernel: spec.kernel,
            resolvent,
            levy: spec.levy,
            chi: spec.chi,
            rate: spec.rate,
            premium: spec.premium,
            r0: spec.r0,
            rho0: spec.rho0,
            xi0: spec.xi0,
            horizon: spec.horizon,
            jumps,
        })
    }

    /// Builds the resolvent itself: the power series for power-law kernels,
    /// otherwise the Volterra solver on a grid of `resolvent_steps` steps.
    pub fn from_spec(spec: MarketSpec, resolvent_steps: usize) -> Result<Self> {
        let n = resolvent_steps.max(1);
        let grid: Vec<f64> = (0..=n).map(|i| spec.horizon * i as f64 / n as f64).collect();
        let resolvent = match spec.kernel {
            MemoryKernel::PowerLaw { alpha } => resolvent_series(alpha, &grid, 1e-16)?,
            ref k => resolvent_numeric(k, &grid)?,
        };
        Self::new(spec, resolvent)
    }

    pub fn spec(&self) -> MarketSpec {
        MarketSpec {
            kernel: self.kernel.clone(),
            levy: self.levy.clone(),
            chi: self.chi.clone(),
            rate: self.rate.clone(),
            premium: self.premium.clone(),
            r0: self.r0,
            rho0: self.rho0,
            xi0: self.xi0,
            horizon: self.horizon,
        }
    }

    pub fn has_rate_feedback(&self) -> bool {
        !(self.rate.b1.is_constant() && self.rate.b1.eval(0.0) == 0.0)
    }
}

/// Jump-measure integrals that depend on the volatility level.
#[derive(Clone, Debug)]
pub struct TiltMoments {
    /// `∫ ζ(χz) ℓ(dz)`.
    pub zeta_rate: f64,
    /// `∫ z ζ(χz) ℓ(dz)`.
    pub zeta_mean: f64,
    pub tilted: TiltedJumps,
}

impl TiltMoments {
    pub fn new(jumps: &JumpIntegrator, chi: f64) -> Self {
        Self {
            zeta_rate: jumps.integrate(0.0, |z| zeta(chi * z)),
            zeta_mean: jumps.integrate(0.0, |z| z * zeta(chi * z)),
            tilted: TiltedJumps::new(jumps, chi),
        }
    }
}

/// Coefficients frozen at the left end of each step, the resolvent on the
/// grid and the memory quadrature weights.
#[derive(Clone, Debug)]
pub struct StepTable {
    pub grid: TimeGrid,
    pub chi: Vec<f64>,
    pub a: Vec<f64>,
    pub b1: Vec<f64>,
    pub b2: Vec<f64>,
    pub a_bar: Vec<f64>,
    pub b1_bar: Vec<f64>,
    pub b2_bar: Vec<f64>,
    pub b3_bar: Vec<f64>,
    /// `H(t_k)` for `k = 0..=steps`.
    pub h: Vec<f64>,
    /// `∫` of the kernel over the `m`-th cell back from the current time.
    pub memory_weights: Vec<f64>,
    /// Index into `moments` for each step.
    pub moment_index: Vec<usize>,
    pub moments: Vec<TiltMoments>,
    pub drift_b: f64,
}

impl StepTable {
    pub fn new(model: &MarketModel, grid: TimeGrid) -> Result<Self> {
        if grid.horizon > model.horizon * (1.0 + 1e-12) {
            return Err(Error::Config(format!(
                "simulation horizon {} exceeds the model horizon {}",
                grid.horizon, model.horizon
            )));
        }
        let n = grid.steps;
        let left: Vec<f64> = (0..n).map(|k| grid.time(k)).collect();
        let at = |c: &Curve| left.iter().map(|&t| c.eval(t)).collect::<Vec<_>>();
        let chi: Vec<f64> = left.iter().map(|&t| model.chi.eval(t)).collect();

        let mut h = Vec::with_capacity(n + 1);
        for k in 0..=n {
            let t = grid.time(k);
            let value = if model.resolvent.series.is_some() {
                model.resolvent.h_at(t)?
            } else {
                let idx = model
                    .resolvent
                    .grid
                    .iter()
                    .position(|&x| (x - t).abs() <= 1e-9 * grid.dt())
                    .ok_or_else(|| {
                        Error::Config(format!(
                            "resolvent grid has no point at simulation time {t}; the grids are misaligned"
                        ))
                    })?;
                model.resolvent.h[idx]
            };
            h.push(value);
        }

        let dt = grid.dt();
        let mut memory_weights = vec![0.0; n + 1];
        for (m, w) in memory_weights.iter_mut().enumerate().skip(1) {
            *w = model.kernel.antiderivative(1, m as f64 * dt)
                - model.kernel.antiderivative(1, (m - 1) as f64 * dt);
        }

        let mut moments: Vec<TiltMoments> = Vec::new();
        let mut levels: Vec<f64> = Vec::new();
        let mut moment_index = Vec::with_capacity(n);
        for &x in &chi {
            let idx = match levels.iter().position(|&l| l == x) {
                Some(i) => i,
                None => {
                    levels.push(x);
                    moments.push(TiltMoments::new(&model.jumps, x));
                    levels.len() - 1
                }
            };
            moment_index.push(idx);
        }

        Ok(Self {
            grid,
            a: at(&model.rate.a),
            b1: at(&model.rate.b1),
            b2: at(&model.rate.b2),
            a_bar: at(&model.premium.a_bar),
            b1_bar: at(&model.premium.b1_bar),
            b2_bar: at(&model.premium.b2_bar),
            b3_bar: at(&model.premium.b3_bar),
            chi,
            h,
            memory_weights,
            moment_index,
            moments,
            drift_b: model.levy.drift(),
        })
    }

    pub fn moments(&self, step: usize) -> &TiltMoments {
        &self.moments[self.moment_index[step]]
    }

    /// `∫₀^{t_k} M(t_k − u) ξ(u) du` with `ξ` frozen at the left end of
    /// each cell and the kernel integrated exactly over the cell.
    pub fn memory(&self, xi: &[f64], k: usize) -> f64 {
        xi[..k].iter().zip(self.memory_weights[1..=k].iter().rev()).map(|(x, w)| x * w).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn reference_spec() -> MarketSpec {
        MarketSpec {
            kernel: MemoryKernel::PowerLaw { alpha: 0.25 },
            levy: LevyModel::brownian(0.3),
            chi: VolProcess::constant(1.0, 0.5, 2.0),
            rate: RateCoefficients { a: 0.02.into(), b1: 0.0.into(), b2: 0.5.into() },
            premium: PremiumCoefficients {
                a_bar: 0.01.into(),
                b1_bar: 0.5.into(),
                b2_bar: 0.1.into(),
                b3_bar: 0.5.into(),
            },
            r0: 0.03,
            rho0: 0.02,
            xi0: 0.0,
            horizon: 1.0,
        }
    }

    #[test]
    fn chi_outside_bounds_is_rejected_with_reason() {
        let mut spec = reference_spec();
        spec.chi = VolProcess::constant(2.5, 0.5, 2.0);
        let err = MarketModel::from_spec(spec, 50).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("bounded-χ assumption"), "{text}");
    }

    #[test]
    fn memory_weights_sum_to_kernel_integral() {
        let model = MarketModel::from_spec(reference_spec(), 10).unwrap();
        let table = StepTable::new(&model, TimeGrid::new(1.0, 40).unwrap()).unwrap();
        let total: f64 = table.memory_weights.iter().sum();
        assert!((total - 1.0 / 0.75).abs() < 1e-12);
        let ones = vec![1.0; 41];
        assert!((table.memory(&ones, 40) - 1.0 / 0.75).abs() < 1e-12);
    }

    #[test]
    fn misaligned_numeric_resolvent_is_a_config_error() {
        let mut spec = reference_spec();
        spec.kernel = MemoryKernel::Constant { level: 0.5 };
        let model = MarketModel::from_spec(spec, 7).unwrap();
        let err = StepTable::new(&model, TimeGrid::new(1.0, 10).unwrap()).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn grid_lookup() {
        let g = TimeGrid::new(2.0, 8).unwrap();
        assert_eq!(g.index_of(0.5), Some(2));
        assert_eq!(g.index_of(0.6), None);
        assert_eq!(g.time(8), 2.0);
    }
}
