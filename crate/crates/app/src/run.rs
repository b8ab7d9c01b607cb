//! Task dispatch and artifact writing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use langevin_core::carma::{self, structure_preserving_check, stationarity_check};
use langevin_core::dynamics::measure::{deflated_spot_mean, simulate_under_q};
use langevin_core::dynamics::simulate::simulate_physical;
use langevin_core::dynamics::{MarketModel, MarketSpec, Measure, TimeGrid};
use langevin_core::kernel::{resolvent_numeric, resolvent_series, MemoryKernel};
use langevin_core::numerics::stats::Moments;
use langevin_core::pricing_lss::{
    forward_price, mc_forward, mc_option_on_forward, mc_spot_option, option_on_forward_price, spot_option_price,
    LssPricingParams, OptionSpec,
};
use nalgebra::DVector;

use crate::config::{validate_config, ModelBlock, ResolventMethod, RunConfig, Task, TaskKind};
use crate::error::AppError;
use crate::report::{CurvePoint, ForwardRow, OptionQuote, RunReport, TaskReport, Timing};
use crate::suite;

/// Runs every task of `config` in order and writes artifacts when an output
/// directory is configured.
pub fn run(config: &RunConfig) -> Result<RunReport, AppError> {
    validate_config(config)?;
    if config.tasks.is_empty() {
        return Err(AppError::Invalid(vec!["tasks: nothing to run".into()]));
    }
    let started = Instant::now();
    let out = config.output_dir.as_deref();
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| AppError::Io(format!("{}: {e}", dir.display())))?;
    }
    let mut results = Vec::with_capacity(config.tasks.len());
    let mut timing = Timing::default();
    for (i, task) in config.tasks.iter().enumerate() {
        let t0 = Instant::now();
        let seed = task_seed(config.seed, i);
        let report = match task {
            Task::Validate { checks } => {
                let (outcomes, seconds) = suite::run_checks(config, checks)?;
                timing.criteria.extend(seconds);
                let passed = outcomes.iter().all(|o| o.passed);
                TaskReport::Validate { passed, outcomes }
            }
            other => {
                let dir = artifact_dir(out, i, other.kind());
                let report = run_task(config, other, seed, &dir)?;
                if let Some(d) = &dir {
                    // Leaves directories that received artifacts in place.
                    let _ = fs::remove_dir(d);
                }
                report
            }
        };
        timing.tasks.push(t0.elapsed().as_secs_f64());
        results.push(report);
    }
    timing.wall_clock_seconds = started.elapsed().as_secs_f64();
    let report = RunReport::new(config.clone(), results, timing);
    if let Some(dir) = out {
        let path = dir.join("report.json");
        fs::write(&path, report.to_json()).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}

/// Copy of `config` keeping only tasks of `kind`; an error when there are none.
pub fn select_tasks(config: &RunConfig, kind: TaskKind) -> Result<RunConfig, AppError> {
    let mut selected = config.clone();
    selected.tasks.retain(|t| t.kind() == kind);
    if selected.tasks.is_empty() {
        return Err(AppError::Invalid(vec![format!("tasks: the configuration has no `{}` task", kind.label())]));
    }
    Ok(selected)
}

/// Per-task seed so tasks draw from unrelated streams.
pub fn task_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_add((index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn artifact_dir(out: Option<&Path>, index: usize, kind: TaskKind) -> Option<PathBuf> {
    out.map(|d| d.join(format!("{index:02}_{}", kind.label())))
}

fn core_err(context: &str) -> impl Fn(langevin_core::Error) -> AppError + '_ {
    move |e| AppError::core(context, e)
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AppError + '_ {
    move |e| AppError::Io(format!("{}: {e}", path.display()))
}

fn require<'a, T>(section: &'a Option<T>, name: &str) -> Result<&'a T, AppError> {
    section.as_ref().ok_or_else(|| AppError::Invalid(vec![format!("model.{name} is required")]))
}

/// Builds the market model with a resolvent grid that lines up with `steps`.
pub fn market_model(spec: &MarketSpec, resolvent_steps: usize, steps: usize) -> Result<MarketModel, AppError> {
    let n = if matches!(spec.kernel, MemoryKernel::PowerLaw { .. }) {
        resolvent_steps
    } else {
        resolvent_steps.div_ceil(steps) * steps
    };
    MarketModel::from_spec(spec.clone(), n).map_err(core_err("model.market"))
}

fn relative(dir: &Path, file: &Path) -> String {
    let parent = dir.parent().unwrap_or(dir);
    file.strip_prefix(parent).unwrap_or(file).display().to_string()
}

fn run_task(config: &RunConfig, task: &Task, seed: u64, dir: &Option<PathBuf>) -> Result<TaskReport, AppError> {
    let model: &ModelBlock = &config.model;
    if let Some(d) = dir {
        fs::create_dir_all(d).map_err(io_err(d))?;
    }
    match task {
        Task::Resolvent { horizon, steps, method } => {
            let market = require(&model.market, "market")?;
            let grid: Vec<f64> = (0..=*steps).map(|i| horizon * i as f64 / *steps as f64).collect();
            let (name, res) = match (method, &market.kernel) {
                (ResolventMethod::Auto | ResolventMethod::Series, MemoryKernel::PowerLaw { alpha }) => {
                    ("series", resolvent_series(*alpha, &grid, config.numerics.series_tolerance))
                }
                (ResolventMethod::Series, _) => {
                    return Err(AppError::Invalid(vec!["resolvent: the series needs a power-law kernel".into()]))
                }
                (_, kernel) => ("volterra", resolvent_numeric(kernel, &grid)),
            };
            let res = res.map_err(core_err("resolvent"))?;
            let residual = res.residual(&market.kernel).map_err(core_err("resolvent residual"))?;
            let mut files = Vec::new();
            if let Some(d) = dir {
                for (file, g) in [("H.csv", false), ("g.csv", true)] {
                    let path = d.join(file);
                    let f = fs::File::create(&path).map_err(io_err(&path))?;
                    let w = std::io::BufWriter::new(f);
                    if g { res.write_g_csv(w) } else { res.write_h_csv(w) }.map_err(io_err(&path))?;
                    files.push(relative(d, &path));
                }
            }
            Ok(TaskReport::Resolvent {
                method: name.into(),
                horizon: *horizon,
                steps: *steps,
                h_at_horizon: *res.h.last().unwrap(),
                g_at_horizon: *res.g.last().unwrap(),
                residual,
                files,
            })
        }
        Task::Simulate { measure, steps, n_paths } => {
            let spec = require(&model.market, "market")?;
            let m = market_model(spec, config.numerics.resolvent_steps, *steps)?;
            let grid = TimeGrid::new(spec.horizon, *steps).map_err(core_err("simulate"))?;
            let set = match measure {
                Measure::Physical => simulate_physical(&m, grid, *n_paths, seed),
                Measure::Pricing => simulate_under_q(&m, grid, *n_paths, seed),
            }
            .map_err(core_err("simulate"))?;
            let terminal = |rows: &Vec<Vec<f64>>| {
                let mut acc = Moments::default();
                rows.iter().for_each(|r| acc.push(r[*steps]));
                acc.estimate()
            };
            let density = set.z.as_ref().map(terminal);
            let deflated_spot = match measure {
                Measure::Pricing => {
                    Some(deflated_spot_mean(&m, grid, *n_paths, seed).map_err(core_err("simulate"))?)
                }
                Measure::Physical => None,
            };
            let mut files = Vec::new();
            if let Some(d) = dir {
                let written = set.write_csv(d, config.numerics.csv_paths).map_err(core_err("simulate csv"))?;
                files = written.iter().map(|p| relative(d, p)).collect();
            }
            Ok(TaskReport::Simulate {
                measure: *measure,
                steps: *steps,
                n_paths: *n_paths,
                spot0: spec.xi0.exp(),
                terminal_spot: terminal(&set.spot),
                density,
                deflated_spot,
                files,
            })
        }
        Task::SpotOption { option, t, strikes, mc_paths } => {
            let params = pricing_params(model)?;
            let quotes = option_quotes(option, strikes, |opt| {
                let fourier = spot_option_price(&params, opt, *t).map_err(core_err("spot option"))?;
                let mc = mc_paths
                    .map(|n| mc_spot_option(&params, opt, *t, n, seed))
                    .transpose()
                    .map_err(core_err("spot option monte carlo"))?;
                Ok((fourier, mc))
            })?;
            let files = write_sweep(dir, "spot_option.csv", &quotes, strikes.is_empty())?;
            Ok(TaskReport::SpotOption { t: *t, maturity: option.maturity, quotes, files })
        }
        Task::ForwardOption { option, t, strikes, mc_paths } => {
            let params = pricing_params(model)?;
            let quotes = option_quotes(option, strikes, |opt| {
                let fourier = option_on_forward_price(&params, opt, *t).map_err(core_err("forward option"))?;
                let mc = mc_paths
                    .map(|n| mc_option_on_forward(&params, opt, *t, n, seed))
                    .transpose()
                    .map_err(core_err("forward option monte carlo"))?;
                Ok((fourier, mc))
            })?;
            let files = write_sweep(dir, "forward_option.csv", &quotes, strikes.is_empty())?;
            Ok(TaskReport::ForwardOption {
                t: *t,
                maturity: option.maturity,
                delivery: option.delivery.unwrap_or(option.maturity),
                quotes,
                files,
            })
        }
        Task::Forward { t, maturities, mc_paths } => {
            let params = pricing_params(model)?;
            let quotes = maturities
                .iter()
                .map(|&m| {
                    let quote = forward_price(&params, *t, m).map_err(core_err("forward"))?;
                    let monte_carlo = match mc_paths {
                        Some(n) if m > *t => {
                            Some(mc_forward(&params, *t, m, *n, seed).map_err(core_err("forward monte carlo"))?)
                        }
                        _ => None,
                    };
                    Ok(ForwardRow { quote, monte_carlo })
                })
                .collect::<Result<Vec<_>, AppError>>()?;
            Ok(TaskReport::Forward { t: *t, quotes })
        }
        Task::CarmaForwardCurve { t, state, maturities, mc_paths } => {
            let cm = require(&model.carma, "carma")?;
            let x = match state {
                Some(s) => DVector::from_column_slice(s),
                None => cm.x0_vector(),
            };
            let curve = carma::forward_curve(cm, *t, &x, maturities).map_err(core_err("carma forward curve"))?;
            let mut points = Vec::with_capacity(curve.len());
            for (m, f) in curve {
                let monte_carlo = match mc_paths {
                    Some(n) if m > *t => {
                        Some(carma::mc_forward(cm, *t, m, &x, *n, seed).map_err(core_err("carma monte carlo"))?)
                    }
                    _ => None,
                };
                points.push(CurvePoint { maturity: m, forward: f, monte_carlo });
            }
            let mut files = Vec::new();
            if let Some(d) = dir {
                let path = d.join("forward_curve.csv");
                let mut w = csv::Writer::from_path(&path).map_err(|e| AppError::Io(e.to_string()))?;
                w.write_record(["T", "F"]).map_err(|e| AppError::Io(e.to_string()))?;
                for p in &points {
                    w.write_record([format!("{:.16e}", p.maturity), format!("{:.16e}", p.forward)])
                        .map_err(|e| AppError::Io(e.to_string()))?;
                }
                w.flush().map_err(io_err(&path))?;
                files.push(relative(d, &path));
            }
            let a = cm.a_matrix().map_err(core_err("carma"))?;
            Ok(TaskReport::CarmaForwardCurve {
                t: *t,
                state: x.iter().copied().collect(),
                stationary: stationarity_check(&a).0,
                structure_preserving: structure_preserving_check(cm).map_err(core_err("carma"))?,
                curve: points,
                files,
            })
        }
        Task::Validate { .. } => unreachable!("validation tasks are dispatched by `run`"),
    }
}

fn pricing_params(model: &ModelBlock) -> Result<LssPricingParams, AppError> {
    let spec = require(&model.lss, "lss")?;
    LssPricingParams::new(spec.clone()).map_err(core_err("model.lss"))
}

type Priced = (langevin_core::pricing_lss::PriceReport, Option<langevin_core::numerics::McEstimate>);

fn option_quotes<F>(option: &OptionSpec, strikes: &[f64], price: F) -> Result<Vec<OptionQuote>, AppError>
where
    F: Fn(&OptionSpec) -> Result<Priced, AppError>,
{
    std::iter::once(option.strike)
        .chain(strikes.iter().copied())
        .map(|k| {
            let opt = OptionSpec { strike: k, ..option.clone() };
            let (fourier, monte_carlo) = price(&opt)?;
            Ok(OptionQuote { strike: k, fourier, monte_carlo })
        })
        .collect()
}

fn write_sweep(dir: &Option<PathBuf>, name: &str, quotes: &[OptionQuote], skip: bool) -> Result<Vec<String>, AppError> {
    let Some(d) = dir else { return Ok(Vec::new()) };
    if skip {
        return Ok(Vec::new());
    }
    let path = d.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| AppError::Io(e.to_string()))?;
    w.write_record(["strike", "price", "mc_mean", "mc_stderr"]).map_err(|e| AppError::Io(e.to_string()))?;
    for q in quotes {
        let (m, s) = q.monte_carlo.map_or((String::new(), String::new()), |e| {
            (format!("{:.16e}", e.mean), format!("{:.16e}", e.stderr))
        });
        w.write_record([format!("{:.16e}", q.strike), format!("{:.16e}", q.fourier.price), m, s])
            .map_err(|e| AppError::Io(e.to_string()))?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(vec![relative(d, &path)])
}
