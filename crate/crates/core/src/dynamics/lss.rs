//! Semi-stationary moving averages `V(t) = ∫_{−∞}^t H(t−s) χ(s−) dL(s)`,
//! simulated from a finite start `−burn_in`.

use rayon::prelude::*;

use crate::dynamics::levy::{sample_path_increments, LevyModel};
use crate::dynamics::model::{TimeGrid, VolProcess};
use crate::dynamics::simulate::SALT_PHYSICAL;
use crate::error::{Error, Result};
use crate::numerics::quadrature::integrate_to_infinity;
use crate::numerics::Tolerance;
use crate::rng::path_rng;

#[derive(Clone, Debug, PartialEq)]
pub struct LssPaths {
    pub grid: TimeGrid,
    /// `V(t_k)` on `grid`, one row per path.
    pub v: Vec<Vec<f64>>,
    /// Burn-in actually used, a whole number of steps.
    pub burn_in: f64,
    /// `C² · Var L(1) · ∫_{burn_in}^∞ H²(s) ds` with `C` the upper volatility
    /// bound: a bound on the variance lost by truncation.
    pub tail_estimate: f64,
}

/// Variance bound for the part of the integral before `−burn_in`.
pub fn truncation_tail<F>(kernel: &F, chi: &VolProcess, levy: &LevyModel, burn_in: f64) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    let tail = integrate_to_infinity(|s| kernel(s).powi(2), burn_in, Tolerance::new(1e-14, 1e-9))?;
    Ok(chi.upper * chi.upper * levy.variance_rate() * tail.value)
}

/// Simulates `V` on `grid` with the driving noise started at `−burn_in`.
///
/// The kernel weight of each step is taken at the step midpoint, which makes
/// the variance of the discrete sum second-order accurate.
#[allow(clippy::too_many_arguments)]
pub fn lss_path<F>(
    kernel: &F,
    chi: &VolProcess,
    levy: &LevyModel,
    grid: TimeGrid,
    burn_in: f64,
    n_paths: usize,
    seed: u64,
    tail_tolerance: f64,
) -> Result<LssPaths>
where
    F: Fn(f64) -> f64 + Sync,
{
    if !(burn_in >= 0.0) {
        return Err(Error::Config("burn-in must be non-negative".into()));
    }
    let dt = grid.dt();
    let lead = (burn_in / dt).round() as usize;
    let burn_in = lead as f64 * dt;
    let tail_estimate = truncation_tail(kernel, chi, levy, burn_in)?;
    if !(tail_estimate <= tail_tolerance) {
        return Err(Error::Config(format!(
            "truncation tail {tail_estimate:.3e} exceeds {tail_tolerance:.3e}; increase the burn-in beyond {burn_in}"
        )));
    }
    let total = lead + grid.steps;
    let weights: Vec<f64> = (0..total).map(|m| kernel((m as f64 + 0.5) * dt)).collect();
    let b = levy.drift();
    let v = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = path_rng(seed, p, SALT_PHYSICAL);
            let inc = sample_path_increments(levy, dt, total, &mut rng);
            let driven: Vec<f64> = (0..total)
                .map(|j| {
                    let s = (j as f64 - lead as f64) * dt;
                    chi.eval(s.max(0.0)) * inc.increment(b, levy.c, dt, j)
                })
                .collect();
            (0..=grid.steps)
                .map(|k| {
                    let now = lead + k;
                    (0..now).map(|j| weights[now - 1 - j] * driven[j]).sum()
                })
                .collect()
        })
        .collect();
    Ok(LssPaths { grid, v, burn_in, tail_estimate })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::stats::Moments;

    #[test]
    fn empty_integral_at_origin() {
        let levy = LevyModel::brownian(1.0);
        let chi = VolProcess::constant(0.4, 0.1, 1.0);
        let out = lss_path(&|s: f64| (-s).exp(), &chi, &levy, TimeGrid::new(1.0, 10).unwrap(), 0.0, 3, 1, 1.0)
            .unwrap();
        assert!(out.v.iter().all(|row| row[0] == 0.0));
    }

    #[test]
    fn short_burn_in_is_rejected() {
        let levy = LevyModel::brownian(1.0);
        let chi = VolProcess::constant(0.4, 0.1, 1.0);
        let err = lss_path(&|s: f64| (-s).exp(), &chi, &levy, TimeGrid::new(1.0, 10).unwrap(), 0.5, 3, 1, 1e-6)
            .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn ou_kernel_has_stationary_variance() {
        let (kappa, sigma) = (2.0f64, 0.4f64);
        let levy = LevyModel::brownian(1.0);
        let chi = VolProcess::constant(sigma, 0.1, 1.0);
        let out = lss_path(
            &|s: f64| (-kappa * s).exp(),
            &chi,
            &levy,
            TimeGrid::new(1.0, 50).unwrap(),
            6.0,
            20_000,
            8,
            1e-8,
        )
        .unwrap();
        let mut m = Moments::default();
        let mut sq = Moments::default();
        for row in &out.v {
            m.push(row[50]);
            sq.push(row[50] * row[50]);
        }
        let target = sigma * sigma / (2.0 * kappa);
        assert!(m.estimate().within(0.0, 4.0));
        assert!(sq.estimate().within(target, 4.0), "{:?} vs {target}", sq.estimate());
    }
}
