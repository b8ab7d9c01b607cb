//! The acceptance battery. Every criterion compares an implementation against
//! an oracle computed here, independently of the code under test wherever a
//! closed form exists.

use std::time::Instant;

use langevin_core::affine::{lss_affine_spec, lss_phi_psi, solve_riccati};
use langevin_core::carma::{self, CarmaModel};
use langevin_core::dynamics::measure::{deflated_spot_mean, density_means};
use langevin_core::dynamics::TimeGrid;
use langevin_core::kernel::{resolvent_numeric, resolvent_series, MemoryKernel};
use langevin_core::numerics::quadrature::integrate_piecewise;
use langevin_core::numerics::special::norm_cdf;
use langevin_core::numerics::{Curve, McEstimate, Tolerance};
use langevin_core::pricing_lss::{
    cal_a, forward_price, mc_forward, mc_option_on_forward, mc_spot_option, option_on_forward_price,
    spot_option_price, LssPricingParams, LssSpec, OptionKind, OptionSpec,
};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Task};
use crate::error::AppError;
use crate::report::{RunReport, Timing};
use crate::run::{market_model, run, task_seed};

/// Criterion identifiers in battery order.
pub const CRITERIA: [&str; 11] = [
    "resolvent",
    "girsanov",
    "martingale",
    "black_scholes",
    "fourier_mc",
    "parity",
    "forward",
    "forward_option",
    "riccati",
    "carma",
    "reproducibility",
];

/// Result of one criterion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    /// One line per sub-check, or the error that stopped the criterion.
    pub detail: Vec<String>,
}

/// Number of the criterion called `name` (or given by its number).
pub fn criterion_id(name: &str) -> Option<u8> {
    if let Ok(n) = name.parse::<u8>() {
        return (1..=CRITERIA.len() as u8).contains(&n).then_some(n);
    }
    let wanted = name.replace('-', "_");
    CRITERIA.iter().position(|c| *c == wanted).map(|i| i as u8 + 1)
}

const FOURIER_MC_PATHS: u64 = 400_000;
const MEASURE_PATHS: usize = 200_000;
const MEASURE_STEPS: usize = 200;

/// Runs the full battery on `config` and wraps the outcomes in a report.
///
/// Model errors do not abort the battery: the affected criteria fail and
/// carry the error message.
pub fn validate_suite(config: &RunConfig) -> RunReport {
    let started = Instant::now();
    let (outcomes, criteria) = run_checks(config, &[]).unwrap_or_else(|e| {
        let outcome = CriterionOutcome { id: 0, name: "configuration".into(), passed: false, detail: vec![e.to_string()] };
        (vec![outcome], Vec::new())
    });
    let passed = outcomes.iter().all(|o| o.passed);
    let mut report_config = config.clone();
    report_config.tasks = vec![Task::Validate { checks: Vec::new() }];
    let elapsed = started.elapsed().as_secs_f64();
    let timing = Timing { wall_clock_seconds: elapsed, tasks: vec![elapsed], criteria };
    RunReport::new(report_config, vec![crate::report::TaskReport::Validate { passed, outcomes }], timing)
}

/// Outcomes together with seconds spent per criterion.
pub type CheckRun = (Vec<CriterionOutcome>, Vec<(String, f64)>);

/// Runs the named criteria (all when `names` is empty) in battery order.
pub fn run_checks(config: &RunConfig, names: &[String]) -> Result<CheckRun, AppError> {
    let mut ids = names
        .iter()
        .map(|n| criterion_id(n).ok_or_else(|| AppError::Invalid(vec![format!("unknown check `{n}`")])))
        .collect::<Result<Vec<u8>, _>>()?;
    if ids.is_empty() {
        ids = (1..=CRITERIA.len() as u8).collect();
    }
    ids.sort_unstable();
    ids.dedup();
    let mut outcomes = Vec::with_capacity(ids.len());
    let mut seconds = Vec::with_capacity(ids.len());
    for id in ids {
        let name = CRITERIA[id as usize - 1];
        let t0 = Instant::now();
        let seed = task_seed(config.seed, 1000 + id as usize);
        let result = match id {
            1 => resolvent(),
            2 => girsanov(config, seed),
            3 => martingale(config, seed),
            4 => black_scholes(config),
            5 => fourier_mc(config, seed),
            6 => parity(config),
            7 => forward(config, seed),
            8 => forward_option(config, seed),
            9 => riccati(config),
            10 => carma_checks(config, seed),
            _ => reproducibility(config),
        };
        let (passed, detail) = match result {
            Ok(tally) => (tally.passed, tally.lines),
            Err(e) => (false, vec![e.to_string()]),
        };
        seconds.push((name.to_string(), t0.elapsed().as_secs_f64()));
        outcomes.push(CriterionOutcome { id, name: name.to_string(), passed, detail });
    }
    Ok((outcomes, seconds))
}

#[derive(Default)]
struct Tally {
    passed: bool,
    lines: Vec<String>,
    started: bool,
}

impl Tally {
    fn check(&mut self, ok: bool, line: String) {
        self.passed = if self.started { self.passed && ok } else { ok };
        self.started = true;
        self.lines.push(format!("{} {line}", if ok { "ok  " } else { "FAIL" }));
    }

    fn mc(&mut self, label: &str, est: &McEstimate, target: f64, band: Band) {
        let z = est.z_score(target);
        let ok = match band {
            Band::Ci99 => est.in_ci99(target),
            Band::Sigmas(k) => est.within(target, k),
        };
        self.check(ok, format!("{label}: target {target:.8} mc {:.8} ± {:.2e} (z = {z:+.2})", est.mean, est.stderr));
    }
}

#[derive(Clone, Copy)]
enum Band {
    Ci99,
    Sigmas(f64),
}

type Checked = Result<Tally, AppError>;

fn core(context: &'static str) -> impl Fn(langevin_core::Error) -> AppError {
    move |e| AppError::core(context, e)
}

fn lss_params(config: &RunConfig) -> Result<LssPricingParams, AppError> {
    let spec = config
        .model
        .lss
        .clone()
        .ok_or_else(|| AppError::Invalid(vec!["model.lss is required".into()]))?;
    LssPricingParams::new(spec).map_err(core("model.lss"))
}

fn lss_with(config: &RunConfig, edit: impl FnOnce(&mut LssSpec)) -> Result<LssPricingParams, AppError> {
    let mut spec = lss_params(config)?.spec().clone();
    edit(&mut spec);
    LssPricingParams::new(spec).map_err(core("model.lss"))
}

fn maturity(params: &LssPricingParams) -> f64 {
    params.spec().horizon.min(1.0)
}

fn uniform(horizon: f64, steps: usize) -> Vec<f64> {
    (0..=steps).map(|i| horizon * i as f64 / steps as f64).collect()
}

fn resolvent() -> Checked {
    let mut tally = Tally::default();
    let grid = uniform(2.0, 200);
    let series = resolvent_series(0.0, &grid, 1e-16).map_err(core("resolvent"))?;
    let err = grid.iter().zip(&series.h).map(|(t, h)| (h - t.cosh()).abs()).fold(0.0, f64::max);
    tally.check(err < 1e-10, format!("alpha = 0 against cosh: max error {err:.2e}"));
    let grid = uniform(2.0, 2000);
    for alpha in [0.1, 0.25, 0.4] {
        let s = resolvent_series(alpha, &grid, 1e-15).map_err(core("resolvent series"))?;
        let kernel = MemoryKernel::PowerLaw { alpha };
        let v = resolvent_numeric(&kernel, &grid).map_err(core("resolvent solver"))?;
        let gap = s.h.iter().zip(&v.h).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        tally.check(gap < 1e-6, format!("alpha = {alpha}: series against Volterra solver {gap:.2e}"));
        let residual = s.residual(&kernel).map_err(core("resolvent residual"))?;
        tally.check(residual < 1e-6, format!("alpha = {alpha}: resolvent equation residual {residual:.2e}"));
    }
    Ok(tally)
}

fn market_grid(config: &RunConfig) -> Result<(langevin_core::dynamics::MarketModel, TimeGrid), AppError> {
    let spec = config
        .model
        .market
        .as_ref()
        .ok_or_else(|| AppError::Invalid(vec!["model.market is required".into()]))?;
    let model = market_model(spec, config.numerics.resolvent_steps, MEASURE_STEPS)?;
    let grid = TimeGrid::new(spec.horizon, MEASURE_STEPS).map_err(core("market grid"))?;
    Ok((model, grid))
}

fn girsanov(config: &RunConfig, seed: u64) -> Checked {
    let (model, grid) = market_grid(config)?;
    let times: Vec<f64> = (1..=4).map(|k| grid.time(k * MEASURE_STEPS / 4)).collect();
    let means = density_means(&model, grid, &times, MEASURE_PATHS, seed).map_err(core("density"))?;
    let mut tally = Tally::default();
    for (t, est) in times.iter().zip(&means) {
        tally.mc(&format!("E[Z({t:.3})]"), est, 1.0, Band::Sigmas(4.0));
    }
    Ok(tally)
}

fn martingale(config: &RunConfig, seed: u64) -> Checked {
    let (model, grid) = market_grid(config)?;
    let est = deflated_spot_mean(&model, grid, MEASURE_PATHS, seed).map_err(core("deflated spot"))?;
    let s0 = config.model.market.as_ref().map_or(1.0, |m| m.xi0.exp());
    let mut tally = Tally::default();
    tally.mc("deflated spot at the horizon", &est, s0, Band::Sigmas(4.0));
    Ok(tally)
}

fn integrate(params: &LssPricingParams, a: f64, b: f64, f: impl FnMut(f64) -> f64) -> Result<f64, AppError> {
    Ok(integrate_piecewise(f, a, b, &params.breakpoints(), Tolerance::new(1e-15, 1e-13))
        .map_err(core("oracle quadrature"))?
        .value)
}

/// Black-76 value of a call or put on a lognormal forward.
fn black(kind: OptionKind, forward: f64, strike: f64, variance: f64, discount: f64) -> f64 {
    let sd = variance.sqrt();
    let d1 = ((forward / strike).ln() + 0.5 * variance) / sd;
    let d2 = d1 - sd;
    match kind {
        OptionKind::Call => discount * (forward * norm_cdf(d1) - strike * norm_cdf(d2)),
        OptionKind::Put => discount * (strike * norm_cdf(-d2) - forward * norm_cdf(-d1)),
    }
}

fn black_scholes(config: &RunConfig) -> Checked {
    let params = lss_with(config, |s| {
        s.levy.jumps = None;
        s.a_bar = Curve::constant(0.0);
        s.b_bar = Curve::constant(0.0);
        s.b2_bar = Curve::constant(0.0);
        s.rho = 0.0;
    })?;
    let horizon = maturity(&params);
    let c = params.spec().levy.c;
    let variance = integrate(&params, 0.0, horizon, |s| (c * params.chi(s)).powi(2))?;
    let rate = integrate(&params, 0.0, horizon, |s| params.rate(s))?;
    let spot = params.spot();
    let fwd = spot * rate.exp();
    let mut tally = Tally::default();
    for moneyness in [0.8, 1.0, 1.2] {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let strike = moneyness * spot;
            let oracle = black(kind, fwd, strike, variance, (-rate).exp());
            let got = spot_option_price(&params, &OptionSpec::new(kind, strike, horizon), 0.0)
                .map_err(core("fourier price"))?
                .price;
            let rel = (got - oracle).abs() / oracle;
            tally.check(rel < 1e-6, format!("{kind:?} K/S = {moneyness}: fourier {got:.10} closed form {oracle:.10} rel {rel:.1e}"));
        }
    }
    Ok(tally)
}

fn strikes(params: &LssPricingParams) -> [f64; 3] {
    let s = params.spot();
    [0.9 * s, s, 1.1 * s]
}

fn fourier_mc(config: &RunConfig, seed: u64) -> Checked {
    let params = lss_params(config)?;
    let horizon = maturity(&params);
    let mut tally = Tally::default();
    for (i, strike) in strikes(&params).into_iter().enumerate() {
        let opt = OptionSpec::new(OptionKind::Call, strike, horizon);
        let price = spot_option_price(&params, &opt, 0.0).map_err(core("fourier price"))?.price;
        let est = mc_spot_option(&params, &opt, 0.0, FOURIER_MC_PATHS, seed.wrapping_add(i as u64))
            .map_err(core("monte carlo price"))?;
        tally.mc(&format!("call K = {strike:.4}"), &est, price, Band::Ci99);
    }
    Ok(tally)
}

fn parity(config: &RunConfig) -> Checked {
    let params = lss_params(config)?;
    let horizon = maturity(&params);
    let fwd = forward_price(&params, 0.0, horizon).map_err(core("forward"))?.price;
    let discount = (-params.rate_integral(0.0, horizon)).exp();
    let mut tally = Tally::default();
    for strike in strikes(&params) {
        let call = spot_option_price(&params, &OptionSpec::new(OptionKind::Call, strike, horizon).with_omega(2.0), 0.0)
            .map_err(core("call"))?
            .price;
        let put = spot_option_price(&params, &OptionSpec::new(OptionKind::Put, strike, horizon).with_omega(-1.0), 0.0)
            .map_err(core("put"))?
            .price;
        let gap = (call - put - discount * (fwd - strike)).abs() / fwd;
        tally.check(gap < 1e-8, format!("K = {strike:.4}: |C − P − D(F − K)| / F = {gap:.1e}"));
    }
    Ok(tally)
}

fn forward(config: &RunConfig, seed: u64) -> Checked {
    let params = lss_params(config)?;
    let horizon = maturity(&params);
    let quote = forward_price(&params, 0.0, horizon).map_err(core("forward"))?;
    let est = mc_forward(&params, 0.0, horizon, FOURIER_MC_PATHS, seed).map_err(core("monte carlo forward"))?;
    let mut tally = Tally::default();
    tally.mc(&format!("F(0, {horizon})"), &est, quote.price, Band::Ci99);
    for t in [0.0, 0.5 * horizon, horizon] {
        let a = cal_a(&params, t, t).map_err(core("forward"))?;
        tally.check(a == 0.0, format!("A({t}, {t}) = {a:e}"));
    }
    let at_delivery = forward_price(&params, horizon, horizon).map_err(core("forward"))?.price;
    let spot = params.spot();
    tally.check(at_delivery == spot, format!("F(T, T) = {at_delivery:.17} against S = {spot:.17}"));
    Ok(tally)
}

fn forward_option(config: &RunConfig, seed: u64) -> Checked {
    let delivery = maturity(&lss_params(config)?);
    let exercise = 0.5 * delivery;
    let mut tally = Tally::default();

    let smooth = lss_with(config, |s| s.levy.jumps = None)?;
    let c = smooth.spec().levy.c;
    let fwd = forward_price(&smooth, 0.0, delivery).map_err(core("forward"))?.price;
    let variance = integrate(&smooth, 0.0, exercise, |s| {
        (c * (1.0 + smooth.b_bar(s) * (delivery - s)) * smooth.chi(s)).powi(2)
    })?;
    let discount = (-smooth.rate_integral(0.0, exercise)).exp();
    for moneyness in [0.9, 1.0, 1.1] {
        for kind in [OptionKind::Call, OptionKind::Put] {
            let strike = moneyness * fwd;
            let mut opt = OptionSpec::new(kind, strike, exercise);
            opt.delivery = Some(delivery);
            let got = option_on_forward_price(&smooth, &opt, 0.0).map_err(core("forward option"))?.price;
            let oracle = black(kind, fwd, strike, variance, discount);
            let rel = (got - oracle).abs() / oracle;
            tally.check(rel < 1e-6, format!("no jumps {kind:?} K/F = {moneyness}: {got:.10} Black-76 {oracle:.10} rel {rel:.1e}"));
        }
    }

    let params = lss_params(config)?;
    let fwd = forward_price(&params, 0.0, delivery).map_err(core("forward"))?.price;
    let mut opt = OptionSpec::new(OptionKind::Call, fwd, exercise);
    opt.delivery = Some(delivery);
    let price = option_on_forward_price(&params, &opt, 0.0).map_err(core("forward option"))?.price;
    let est = mc_option_on_forward(&params, &opt, 0.0, FOURIER_MC_PATHS, seed).map_err(core("monte carlo"))?;
    tally.mc("jumps, at-the-money call", &est, price, Band::Ci99);
    Ok(tally)
}

fn riccati(config: &RunConfig) -> Checked {
    let params = lss_params(config)?;
    let horizon = maturity(&params);
    let t = 0.2 * horizon;
    let spec = lss_affine_spec(&params);
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let u1 = Complex64::new(-0.5 + 0.15 * i as f64, -3.0 + 0.3 * i as f64);
        let u2 = Complex64::new(0.1 * (i % 4) as f64, 0.5 - 0.05 * i as f64);
        let solution = solve_riccati(&spec, t, horizon, &[u1, u2], 1e-11).map_err(core("riccati solver"))?;
        let (phi, psi) = solution.initial();
        let (cphi, c1, c2) = lss_phi_psi(&params, t, horizon, u1, u2).map_err(core("closed form"))?;
        worst = worst.max((phi - cphi).norm()).max((psi[0] - c1).norm()).max((psi[1] - c2).norm());
    }
    let mut tally = Tally::default();
    tally.check(worst < 1e-8, format!("20 complex arguments: worst gap {worst:.2e}"));
    Ok(tally)
}

/// Random model of order `p` whose companion matrices have real negative
/// eigenvalues and whose spot has full moving-average order.
fn random_carma(p: usize, rng: &mut ChaCha8Rng) -> CarmaModel {
    let poly = |roots: Vec<f64>| {
        let mut coeffs = vec![1.0];
        for r in roots {
            let mut next = vec![0.0; coeffs.len() + 1];
            for (k, &a) in coeffs.iter().enumerate() {
                next[k] += a;
                next[k + 1] += a * r;
            }
            coeffs = next;
        }
        coeffs[1..].to_vec()
    };
    let alphas = poly((0..p).map(|_| rng.random_range(0.3..1.5)).collect());
    let betas = poly((0..p).map(|_| rng.random_range(0.3..1.5)).collect());
    let mut b: Vec<f64> = (0..p).map(|_| rng.random_range(-1.0..1.0)).collect();
    b[p - 1] = 1.0;
    CarmaModel {
        alphas,
        b,
        c: None,
        betas,
        vartheta: rng.random_range(0.1..0.5),
        mu: 0.0,
        xi: vec![0.0; p],
        theta: (0..p).map(|_| rng.random_range(-0.1..0.1)).collect(),
        r: 0.02,
        x0: None,
    }
}

fn carma_checks(config: &RunConfig, seed: u64) -> Checked {
    let mut tally = Tally::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for p in 2..=6 {
        for _ in 0..20 {
            let model = random_carma(p, &mut rng);
            worst = worst.max(carma::q_drift_identity_residual(&model).map_err(core("carma"))?);
        }
    }
    tally.check(worst <= 1e-14, format!("pricing drift identity, p = 2..6: worst residual {worst:.1e}"));

    let ou = CarmaModel {
        alphas: vec![1.3],
        b: vec![1.0],
        c: None,
        betas: vec![0.8],
        vartheta: 0.35,
        mu: 0.04,
        xi: vec![0.1],
        theta: vec![0.05],
        r: 0.03,
        x0: Some(vec![0.2]),
    };
    let (t, big_t, x) = (0.3, 1.7, 0.2);
    let beta = ou.betas[0];
    let level = ou.theta[0] + ou.r - ou.mu - 0.5 * ou.vartheta * ou.vartheta;
    let tau = big_t - t;
    let decay = (-beta * tau).exp();
    let mean = decay * x + (1.0 - decay) * level / beta;
    let var = ou.vartheta * ou.vartheta * (1.0 - decay * decay) / (2.0 * beta);
    let oracle = (ou.mu * big_t + mean + 0.5 * var).exp();
    let got = carma::carma_forward_price(&ou, t, big_t, &DVector::from_element(1, x)).map_err(core("carma forward"))?;
    let rel = (got - oracle).abs() / oracle;
    tally.check(rel < 1e-10, format!("p = 1 against the scalar OU forward: rel {rel:.1e}"));

    let model = config
        .model
        .carma
        .as_ref()
        .ok_or_else(|| AppError::Invalid(vec!["model.carma is required".into()]))?;
    let x0 = model.x0_vector();
    let closed = carma::carma_forward_price(model, 0.0, 1.0, &x0).map_err(core("carma forward"))?;
    let est = carma::mc_forward(model, 0.0, 1.0, &x0, FOURIER_MC_PATHS, seed).map_err(core("carma monte carlo"))?;
    tally.mc(&format!("p = {} forward F(0, 1)", model.p()), &est, closed, Band::Ci99);
    let grid = TimeGrid::new(1.0, 100).map_err(core("carma grid"))?;
    let ratio = carma::deflated_spot_ratio(model, grid, MEASURE_PATHS as u64, seed.wrapping_add(1))
        .map_err(core("carma deflated spot"))?;
    tally.mc("deflated spot over S(0)", &ratio, 1.0, Band::Sigmas(4.0));
    Ok(tally)
}

/// A small configuration exercising every model section with Monte Carlo.
fn mini_config(config: &RunConfig) -> RunConfig {
    let mut mini = config.clone();
    mini.output_dir = None;
    mini.tasks.clear();
    if let Some(m) = &config.model.market {
        mini.tasks.push(Task::Simulate { measure: langevin_core::dynamics::Measure::Pricing, steps: 40, n_paths: 2000 });
        mini.tasks.push(Task::Resolvent { horizon: m.horizon, steps: 40, method: Default::default() });
    }
    if let Some(l) = &config.model.lss {
        let horizon = l.horizon.min(1.0);
        let strike = l.v.exp();
        mini.tasks.push(Task::SpotOption {
            option: OptionSpec::new(OptionKind::Call, strike, horizon),
            t: 0.0,
            strikes: Vec::new(),
            mc_paths: Some(5000),
        });
        mini.tasks.push(Task::Forward { t: 0.0, maturities: vec![0.5 * horizon, horizon], mc_paths: Some(5000) });
    }
    if config.model.carma.is_some() {
        mini.tasks.push(Task::CarmaForwardCurve { t: 0.0, state: None, maturities: vec![0.5, 1.0], mc_paths: Some(5000) });
    }
    mini
}

fn reproducibility(config: &RunConfig) -> Checked {
    let mini = mini_config(config);
    let first = run(&mini)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| AppError::Io(format!("thread pool: {e}")))?;
    let second = pool.install(|| run(&mini))?;
    let mut tally = Tally::default();
    tally.check(
        first.hash == second.hash,
        format!("{} tasks, default pool against one thread: {} / {}", mini.tasks.len(), &first.hash[..16], &second.hash[..16]),
    );
    tally.check(first.hash == first.recompute_hash(), "hash covers the report contents".into());
    Ok(tally)
}
