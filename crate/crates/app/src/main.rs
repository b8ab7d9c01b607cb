use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use langevin_app::config::{load_config, validate_config};
use langevin_app::{run, select_tasks, AppError, RunConfig, RunReport, Task, TaskKind, TaskReport, EXIT_VALIDATION};

/// Simulation, pricing and validation for Langevin-type commodity models.
///
/// The number of worker threads is read from `LANGEVIN_THREADS`.
#[derive(Parser)]
#[command(name = "langevin", version)]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Verb {
    /// Resolvent of the memory kernel.
    Resolvent(Common),
    /// Path simulation of the market model.
    Simulate(Common),
    /// Pricing tasks.
    Price {
        #[command(subcommand)]
        what: PriceVerb,
    },
    /// CARMA tasks.
    Carma {
        #[command(subcommand)]
        what: CarmaVerb,
    },
    /// Acceptance checks; all of them when none is named.
    Validate {
        #[command(flatten)]
        common: Common,
        checks: Vec<String>,
    },
    /// Every task in the configuration.
    Run(Common),
}

#[derive(Subcommand)]
enum PriceVerb {
    SpotOption(Common),
    Forward(Common),
    ForwardOption(Common),
}

#[derive(Subcommand)]
enum CarmaVerb {
    ForwardCurve(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VALIDATION as u8);
    }
    match execute(cli.verb) {
        Ok(report) => {
            print_summary(&report);
            let failed = report.failed_criteria();
            if failed > 0 {
                eprintln!("error: {}", AppError::ValidationFailed(failed));
                ExitCode::from(EXIT_VALIDATION as u8)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn configure_threads() -> Result<(), AppError> {
    let Ok(value) = std::env::var("LANGEVIN_THREADS") else { return Ok(()) };
    let n: usize = value
        .trim()
        .parse()
        .map_err(|_| AppError::Invalid(vec![format!("LANGEVIN_THREADS must be a positive integer, got `{value}`")]))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| AppError::Io(format!("thread pool: {e}")))
}

fn prepare(common: &Common) -> Result<RunConfig, AppError> {
    let mut config = load_config(&common.config)?;
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    if let Some(out) = &common.out {
        config.output_dir = Some(out.clone());
    }
    Ok(config)
}

fn execute(verb: Verb) -> Result<RunReport, AppError> {
    let (common, kind) = match &verb {
        Verb::Resolvent(c) => (c, Some(TaskKind::Resolvent)),
        Verb::Simulate(c) => (c, Some(TaskKind::Simulate)),
        Verb::Price { what: PriceVerb::SpotOption(c) } => (c, Some(TaskKind::SpotOption)),
        Verb::Price { what: PriceVerb::Forward(c) } => (c, Some(TaskKind::Forward)),
        Verb::Price { what: PriceVerb::ForwardOption(c) } => (c, Some(TaskKind::ForwardOption)),
        Verb::Carma { what: CarmaVerb::ForwardCurve(c) } => (c, Some(TaskKind::CarmaForwardCurve)),
        Verb::Validate { common, .. } => (common, None),
        Verb::Run(c) => (c, None),
    };
    let config = prepare(common)?;
    let selected = match (&verb, kind) {
        (Verb::Validate { checks, .. }, _) => {
            let mut v = config.clone();
            v.tasks = vec![Task::Validate { checks: checks.clone() }];
            validate_config(&v)?;
            v
        }
        (_, Some(kind)) => select_tasks(&config, kind)?,
        (_, None) => config,
    };
    run(&selected)
}

fn print_summary(report: &RunReport) {
    for result in &report.results {
        match result {
            TaskReport::Validate { outcomes, .. } => {
                for o in outcomes {
                    println!("{} {:>2} {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name);
                    for line in &o.detail {
                        println!("         {line}");
                    }
                }
            }
            TaskReport::SpotOption { quotes, maturity, .. } | TaskReport::ForwardOption { quotes, maturity, .. } => {
                for q in quotes {
                    let mc = q.monte_carlo.map_or(String::new(), |m| format!("  mc {:.8} ± {:.2e}", m.mean, m.stderr));
                    println!("T = {maturity}  K = {:.6}  price {:.10}{mc}", q.strike, q.fourier.price);
                }
            }
            TaskReport::Forward { quotes, .. } => {
                for row in quotes {
                    let mc = row.monte_carlo.map_or(String::new(), |m| format!("  mc {:.8} ± {:.2e}", m.mean, m.stderr));
                    println!("T = {}  F = {:.10}{mc}", row.quote.maturity, row.quote.price);
                }
            }
            TaskReport::CarmaForwardCurve { curve, .. } => {
                println!("T,F");
                for p in curve {
                    println!("{},{:.12}", p.maturity, p.forward);
                }
            }
            TaskReport::Resolvent { method, h_at_horizon, residual, horizon, .. } => {
                println!("{method}: H({horizon}) = {h_at_horizon:.12}  residual {residual:.2e}");
            }
            TaskReport::Simulate { measure, terminal_spot, density, deflated_spot, .. } => {
                println!("{measure:?}: E[S(T)] = {:.8} ± {:.2e}", terminal_spot.mean, terminal_spot.stderr);
                if let Some(d) = density {
                    println!("  E[Z(T)] = {:.8} ± {:.2e}", d.mean, d.stderr);
                }
                if let Some(d) = deflated_spot {
                    println!("  deflated spot = {:.8} ± {:.2e}", d.mean, d.stderr);
                }
            }
        }
    }
    if let Some(dir) = &report.config.output_dir {
        println!("report: {}", dir.join("report.json").display());
    }
    println!("hash: {}", report.hash);
}
