//! Change of measure: market price of risk, the density process and
//! simulation under the pricing measure.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::dynamics::levy::{JumpIntegrator, PathIncrements};
use crate::dynamics::model::{MarketModel, StepTable, TimeGrid};
use crate::dynamics::simulate::{
    physical_path, LevyIncrements, Measure, PathSet, SALT_PRICING,
};
use crate::error::{Error, Result};
use crate::numerics::special::{ln_tilt, zeta as zeta_fn};
use crate::numerics::stats::{monte_carlo, McEstimate};
use crate::rng::path_rng;

/// `1 − χz / (e^{χz} − 1)`.
pub fn zeta(chi: f64, z: f64) -> f64 {
    zeta_fn(chi * z)
}

/// Market price of risk of the Brownian part at a state with memory
/// integral `memory`, rate `r` and premium `rho`.
pub fn varphi(model: &MarketModel, t: f64, memory: f64, r: f64, rho: f64) -> Result<f64> {
    let c = model.levy.c;
    if c <= 0.0 {
        return Err(Error::Model(
            "the market price of risk needs a Gaussian component (c > 0) to reweight".into(),
        ));
    }
    let chi = model.chi.eval(t);
    Ok((memory + chi * model.levy.drift() + 0.5 * chi * chi * c * c - r - rho) / (chi * c))
}

/// `γ = ∫ (e^{χz} − 1 − χz) ℓ(dz)`, the jump contribution to the
/// physical-measure drift of `dS/S`.
pub fn spot_jump_compensator(jumps: &JumpIntegrator, chi: f64) -> f64 {
    jumps.integrate(chi, |z| (chi * z).exp_m1() - chi * z)
}

/// Physical-measure drift of `dS/S`.
pub fn physical_spot_drift(model: &MarketModel, t: f64, memory: f64) -> f64 {
    let chi = model.chi.eval(t);
    let c = model.levy.c;
    memory + chi * model.levy.drift() + 0.5 * chi * chi * c * c + spot_jump_compensator(&model.jumps, chi)
}

/// Drift of `dS/S` after the change of measure: the physical drift minus
/// `χcφ` and minus the shift of the jump compensator from `ℓ` to the tilted
/// measure. Equals `r + ρ` when the model is consistent.
pub fn pricing_spot_drift(model: &MarketModel, t: f64, memory: f64, r: f64, rho: f64) -> Result<f64> {
    let chi = model.chi.eval(t);
    let phi = varphi(model, t, memory, r, rho)?;
    let shift = model.jumps.integrate(chi, |z| (chi * z).exp_m1() * zeta(chi, z));
    Ok(physical_spot_drift(model, t, memory) - chi * model.levy.c * phi - shift)
}

/// Density process `Z` on one physical path, accumulated in log space.
pub fn girsanov_path(
    model: &MarketModel,
    table: &StepTable,
    memory: &[f64],
    r: &[f64],
    rho: &[f64],
    inc: &PathIncrements,
) -> Result<Vec<f64>> {
    let n = table.grid.steps;
    let dt = table.grid.dt();
    let mut z = Vec::with_capacity(n + 1);
    let mut log_z = 0.0;
    z.push(1.0);
    for k in 0..n {
        let phi = varphi(model, table.grid.time(k), memory[k], r[k], rho[k])?;
        let chi = table.chi[k];
        log_z += -phi * inc.dw[k] - 0.5 * phi * phi * dt + dt * table.moments(k).zeta_rate;
        for &size in inc.jumps_in(k) {
            log_z += ln_tilt(chi * size);
        }
        if !log_z.is_finite() {
            return Err(Error::Numeric(format!("density process left the reals at step {k}")));
        }
        z.push(log_z.exp());
    }
    Ok(z)
}

/// Density process for every path of a physical simulation.
pub fn girsanov_density(
    model: &MarketModel,
    increments: &LevyIncrements,
    xi: &[Vec<f64>],
    r: &[Vec<f64>],
    rho: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let table = StepTable::new(model, increments.grid)?;
    (0..increments.n_paths())
        .into_par_iter()
        .map(|p| {
            let memory: Vec<f64> = (0..=table.grid.steps).map(|k| table.memory(&xi[p], k)).collect();
            girsanov_path(model, &table, &memory, &r[p], &rho[p], &increments.paths[p])
        })
        .collect()
}

/// One pricing-measure path.
#[derive(Clone, Debug, PartialEq)]
pub struct PricingPath {
    pub xi: Vec<f64>,
    pub r: Vec<f64>,
    pub rho: Vec<f64>,
    /// `∫₀^{t_k} (r + ρ) ds` by the left rule, matching the drift scheme.
    pub deflator_log: Vec<f64>,
}

/// Euler scheme under the pricing measure. The log-spot drift is
/// `r + ρ − κ` with `κ = χ²c²/2 + χ∫zζ(χz)ℓ(dz)`, which makes the deflated
/// spot an exact martingale of the discrete scheme.
pub fn pricing_path(model: &MarketModel, table: &StepTable, seed: u64, path: u64) -> PricingPath {
    let mut rng = path_rng(seed, path, SALT_PRICING);
    let n = table.grid.steps;
    let dt = table.grid.dt();
    let sqdt = dt.sqrt();
    let c = model.levy.c;
    let b = table.drift_b;
    let feedback = model.has_rate_feedback();
    let mut xi = Vec::with_capacity(n + 1);
    let mut r = Vec::with_capacity(n + 1);
    let mut rho = Vec::with_capacity(n + 1);
    let mut deflator_log = Vec::with_capacity(n + 1);
    xi.push(model.xi0);
    r.push(model.r0);
    rho.push(model.rho0);
    deflator_log.push(0.0);
    for k in 0..n {
        let chi = table.chi[k];
        let moments = table.moments(k);
        let dw: f64 = sqdt * rng.sample::<f64, _>(StandardNormal);
        let mut jump_sum = 0.0;
        for _ in 0..moments.tilted.count(dt, &mut rng) {
            jump_sum += moments.tilted.size(&mut rng);
        }
        let dj = jump_sum - dt * moments.tilted.mean_rate;
        let noise = chi * (c * dw + dj);
        let kappa = 0.5 * chi * chi * c * c + chi * moments.zeta_mean;
        let (x, rk, pk) = (xi[k], r[k], rho[k]);
        let carry = rk + pk - kappa;
        let memory = if feedback { table.memory(&xi, k) } else { 0.0 };
        xi.push(x + carry * dt + noise);
        r.push(rk + (table.a[k] - table.b2[k] * rk + table.b1[k] * (carry - memory - chi * b)) * dt + table.b1[k] * noise);
        rho.push(
            pk + (table.a_bar[k] - table.b2_bar[k] * rk - table.b3_bar[k] * pk
                + table.b1_bar[k] * (carry - chi * b))
                * dt
                + table.b1_bar[k] * noise,
        );
        deflator_log.push(deflator_log[k] + (rk + pk) * dt);
    }
    PricingPath { xi, r, rho, deflator_log }
}

/// Simulates `n_paths` paths under the pricing measure.
pub fn simulate_under_q(model: &MarketModel, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<PathSet> {
    let table = StepTable::new(model, grid)?;
    let paths: Vec<PricingPath> = (0..n_paths as u64)
        .into_par_iter()
        .map(|p| pricing_path(model, &table, seed, p))
        .collect();
    let mut set = PathSet {
        measure: Measure::Pricing,
        grid,
        master_seed: seed,
        xi: Vec::with_capacity(n_paths),
        r: Vec::with_capacity(n_paths),
        rho: Vec::with_capacity(n_paths),
        spot: Vec::with_capacity(n_paths),
        z: None,
    };
    for p in paths {
        set.spot.push(p.xi.iter().map(|x| x.exp()).collect());
        set.xi.push(p.xi);
        set.r.push(p.r);
        set.rho.push(p.rho);
    }
    Ok(set)
}

/// `E[Z(t)]` at each of `times`, which must lie on the grid.
pub fn density_means(
    model: &MarketModel,
    grid: TimeGrid,
    times: &[f64],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<McEstimate>> {
    varphi(model, 0.0, 0.0, model.r0, model.rho0)?;
    let table = StepTable::new(model, grid)?;
    let idx: Vec<usize> = times
        .iter()
        .map(|&t| {
            grid.index_of(t)
                .ok_or_else(|| Error::Config(format!("time {t} is not on the simulation grid")))
        })
        .collect::<Result<_>>()?;
    Ok(monte_carlo(n_paths as u64, idx.len(), |p, out| match physical_path(model, &table, seed, p) {
        Ok(path) => {
            for (o, &k) in out.iter_mut().zip(&idx) {
                *o = path.z[k];
            }
        }
        Err(_) => out.fill(f64::NAN),
    }))
}

/// `E^ℚ[e^{−∫₀ᵀ(r+ρ)ds} S(T)]`, to be compared with `S(0)`.
pub fn deflated_spot_mean(model: &MarketModel, grid: TimeGrid, n_paths: usize, seed: u64) -> Result<McEstimate> {
    let table = StepTable::new(model, grid)?;
    let n = grid.steps;
    Ok(monte_carlo(n_paths as u64, 1, |p, out| {
        let path = pricing_path(model, &table, seed, p);
        out[0] = (path.xi[n] - path.deflator_log[n]).exp();
    })
    .remove(0))
}

/// Estimates `E^ℙ[Z(T) D G(S(T))]` and `E^ℚ[D G(S(T))]` for a payoff `G`,
/// with `D = e^{−∫r}`.
pub fn measure_change_pair<G>(
    model: &MarketModel,
    grid: TimeGrid,
    payoff: G,
    n_paths: usize,
    seed: u64,
) -> Result<(McEstimate, McEstimate)>
where
    G: Fn(f64) -> f64 + Sync,
{
    varphi(model, 0.0, 0.0, model.r0, model.rho0)?;
    let table = StepTable::new(model, grid)?;
    let n = grid.steps;
    let dt = grid.dt();
    let discount = |r: &[f64]| (-(r[..n].iter().sum::<f64>()) * dt).exp();
    let physical = monte_carlo(n_paths as u64, 1, |p, out| {
        out[0] = match physical_path(model, &table, seed, p) {
            Ok(path) => path.z[n] * discount(&path.r) * payoff(path.xi[n].exp()),
            Err(_) => f64::NAN,
        };
    })
    .remove(0);
    let pricing = monte_carlo(n_paths as u64, 1, |p, out| {
        let path = pricing_path(model, &table, seed, p);
        out[0] = discount(&path.r) * payoff(path.xi[n].exp());
    })
    .remove(0);
    Ok((physical, pricing))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::levy::{CompoundPoisson, JumpLaw, LevyModel};
    use crate::dynamics::model::{MarketSpec, PremiumCoefficients, RateCoefficients, VolProcess};
    use crate::dynamics::simulate::{simulate_levy_increments, simulate_r_rho, simulate_xi_euler};
    use crate::kernel::MemoryKernel;

    fn model(c: f64, jumps: bool) -> MarketModel {
        MarketModel::from_spec(
            MarketSpec {
                kernel: MemoryKernel::PowerLaw { alpha: 0.25 },
                levy: LevyModel {
                    varsigma: 0.01,
                    c,
                    jumps: jumps.then(|| CompoundPoisson {
                        intensity: 2.0,
                        law: JumpLaw::Normal { mean: -0.05, std: 0.1 },
                    }),
                },
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
            },
            10,
        )
        .unwrap()
    }

    #[test]
    fn zeta_limits_and_value() {
        assert_eq!(zeta(1.0, 0.0), 0.0);
        assert!((zeta(1.0, 1.0) - (1.0 - 1.0 / (std::f64::consts::E - 1.0))).abs() < 1e-15);
        for i in 0..1000 {
            let z = -20.0 + 40.0 * i as f64 / 999.0;
            let v = zeta(0.7, z);
            assert!(v.abs() <= (0.7 * z).abs() + 1e-15 && v < 1.0);
        }
    }

    #[test]
    fn varphi_needs_gaussian_part() {
        assert!(matches!(varphi(&model(0.0, true), 0.0, 0.0, 0.0, 0.0), Err(Error::Model(_))));
    }

    #[test]
    fn varphi_balanced_drift_is_zero() {
        let mut m = model(0.3, false);
        m.levy.varsigma = 0.0;
        assert_eq!(varphi(&m, 0.0, 0.0, 0.045, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn pricing_drift_is_rate_plus_premium() {
        let m = model(0.3, true);
        let d = pricing_spot_drift(&m, 0.3, 0.17, 0.04, -0.01).unwrap();
        assert!((d - 0.03).abs() < 1e-12, "{d}");
    }

    #[test]
    fn spot_compensator_matches_normal_closed_form() {
        let m = model(0.3, true);
        let (mean, sd, chi) = (-0.05f64, 0.1f64, 1.3f64);
        let exact = 2.0 * ((chi * mean + 0.5 * chi * chi * sd * sd).exp() - 1.0 - chi * mean);
        assert!((spot_jump_compensator(&m.jumps, chi) - exact).abs() < 1e-13);
    }

    #[test]
    fn batch_density_matches_streaming() {
        let m = model(0.3, true);
        let grid = TimeGrid::new(1.0, 12).unwrap();
        let inc = simulate_levy_increments(&m.levy, grid, 4, 11);
        let xi = simulate_xi_euler(&m, &inc).unwrap();
        let (r, rho) = simulate_r_rho(&m, &xi, &inc).unwrap();
        let z = girsanov_density(&m, &inc, &xi, &r, &rho).unwrap();
        let table = StepTable::new(&m, grid).unwrap();
        for (p, expected) in z.iter().enumerate() {
            let path = physical_path(&m, &table, 11, p as u64).unwrap();
            assert_eq!(&path.z, expected);
        }
    }

    #[test]
    fn no_premium_no_jumps_gives_unit_density() {
        let mut m = model(0.3, false);
        m.levy.varsigma = 0.0;
        m.kernel = MemoryKernel::Constant { level: 0.0 };
        let mut spec = m.spec();
        spec.rate = RateCoefficients::default();
        spec.premium = PremiumCoefficients::default();
        spec.r0 = 0.045;
        spec.rho0 = 0.0;
        let m = MarketModel::from_spec(spec, 10).unwrap();
        let table = StepTable::new(&m, TimeGrid::new(1.0, 10).unwrap()).unwrap();
        let path = physical_path(&m, &table, 1, 0).unwrap();
        assert!(path.z.iter().all(|&z| z == 1.0));
    }

    #[test]
    fn pricing_set_is_reproducible() {
        let m = model(0.3, true);
        let grid = TimeGrid::new(1.0, 8).unwrap();
        assert_eq!(simulate_under_q(&m, grid, 5, 2).unwrap(), simulate_under_q(&m, grid, 5, 2).unwrap());
    }

    #[test]
    fn deflated_spot_small_run() {
        let m = model(0.3, true);
        let est = deflated_spot_mean(&m, TimeGrid::new(1.0, 20).unwrap(), 20_000, 4).unwrap();
        assert!(est.within(1.0, 4.0), "{est:?}");
    }
}
