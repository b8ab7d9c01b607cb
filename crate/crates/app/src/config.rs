//! Run configuration: strict JSON with every unknown key rejected.

use std::fs;
use std::path::{Path, PathBuf};

use langevin_core::carma::CarmaModel;
use langevin_core::dynamics::{MarketSpec, Measure};
use langevin_core::pricing_lss::{LssSpec, OptionSpec};
use serde::{Deserialize, Serialize};

use crate::error::AppError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Directory for the report and CSV artifacts; nothing is written when absent.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    pub model: ModelBlock,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub tasks: Vec<Task>,
}

/// Model definitions. Each task reads the section it needs.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    /// Langevin market model with stochastic rate and premium.
    #[serde(default)]
    pub market: Option<MarketSpec>,
    /// Deterministic-rate model used for closed-form pricing.
    #[serde(default)]
    pub lss: Option<LssSpec>,
    #[serde(default)]
    pub carma: Option<CarmaModel>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    /// Resolvent grid steps over the market horizon.
    pub resolvent_steps: usize,
    /// Truncation tolerance of the resolvent series.
    pub series_tolerance: f64,
    /// Paths written to CSV per simulated variable.
    pub csv_paths: usize,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { resolvent_steps: 400, series_tolerance: 1e-15, csv_paths: 20 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResolventMethod {
    /// Series for power-law kernels, the Volterra solver otherwise.
    #[default]
    Auto,
    Series,
    Volterra,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Task {
    Resolvent {
        horizon: f64,
        steps: usize,
        #[serde(default)]
        method: ResolventMethod,
    },
    Simulate {
        measure: Measure,
        steps: usize,
        n_paths: usize,
    },
    SpotOption {
        option: OptionSpec,
        #[serde(default)]
        t: f64,
        /// Extra strikes priced into a CSV sweep.
        #[serde(default)]
        strikes: Vec<f64>,
        #[serde(default)]
        mc_paths: Option<u64>,
    },
    Forward {
        #[serde(default)]
        t: f64,
        maturities: Vec<f64>,
        #[serde(default)]
        mc_paths: Option<u64>,
    },
    ForwardOption {
        option: OptionSpec,
        #[serde(default)]
        t: f64,
        #[serde(default)]
        strikes: Vec<f64>,
        #[serde(default)]
        mc_paths: Option<u64>,
    },
    CarmaForwardCurve {
        #[serde(default)]
        t: f64,
        /// State `X(t)`; the model's initial state when absent.
        #[serde(default)]
        state: Option<Vec<f64>>,
        maturities: Vec<f64>,
        #[serde(default)]
        mc_paths: Option<u64>,
    },
    Validate {
        /// Criterion names to run; all when empty.
        #[serde(default)]
        checks: Vec<String>,
    },
}

impl Task {
    pub fn kind(&self) -> TaskKind {
        match self {
            Task::Resolvent { .. } => TaskKind::Resolvent,
            Task::Simulate { .. } => TaskKind::Simulate,
            Task::SpotOption { .. } => TaskKind::SpotOption,
            Task::Forward { .. } => TaskKind::Forward,
            Task::ForwardOption { .. } => TaskKind::ForwardOption,
            Task::CarmaForwardCurve { .. } => TaskKind::CarmaForwardCurve,
            Task::Validate { .. } => TaskKind::Validate,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Resolvent,
    Simulate,
    SpotOption,
    Forward,
    ForwardOption,
    CarmaForwardCurve,
    Validate,
}

impl TaskKind {
    pub fn label(self) -> &'static str {
        match self {
            TaskKind::Resolvent => "resolvent",
            TaskKind::Simulate => "simulate",
            TaskKind::SpotOption => "spot_option",
            TaskKind::Forward => "forward",
            TaskKind::ForwardOption => "forward_option",
            TaskKind::CarmaForwardCurve => "carma_forward_curve",
            TaskKind::Validate => "validate",
        }
    }
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<RunConfig, AppError> {
    let text = fs::read_to_string(path).map_err(|e| AppError::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, AppError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| AppError::Schema {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    validate_config(&config)?;
    Ok(config)
}

/// Checks everything that can be checked without running a task.
pub fn validate_config(config: &RunConfig) -> Result<(), AppError> {
    let mut problems = Vec::new();
    let model = &config.model;
    if model.market.is_none() && model.lss.is_none() && model.carma.is_none() {
        problems.push("model: at least one of market, lss, carma is required".to_string());
    }
    if let Some(m) = &model.market {
        let check = m
            .kernel
            .validate()
            .and_then(|_| m.levy.validate())
            .and_then(|_| m.chi.validate(m.horizon));
        if let Err(e) = check {
            problems.push(format!("model.market: {e}"));
        }
    }
    if let Some(spec) = &model.lss {
        if let Err(e) = langevin_core::pricing_lss::LssPricingParams::new(spec.clone()) {
            problems.push(format!("model.lss: {e}"));
        }
    }
    if let Some(c) = &model.carma {
        if let Err(e) = c.validate() {
            problems.push(format!("model.carma: {e}"));
        }
    }
    let n = &config.numerics;
    if n.resolvent_steps == 0 {
        problems.push("numerics.resolvent_steps must be positive".into());
    }
    if !(n.series_tolerance > 0.0) {
        problems.push("numerics.series_tolerance must be positive".into());
    }
    for (i, task) in config.tasks.iter().enumerate() {
        let at = format!("tasks[{i}].{}", task.kind().label());
        let needs = |present: bool, section: &str, problems: &mut Vec<String>| {
            if !present {
                problems.push(format!("{at}: requires model.{section}"));
            }
        };
        match task {
            Task::Resolvent { horizon, steps, .. } => {
                needs(model.market.is_some(), "market", &mut problems);
                if !(*horizon > 0.0) || *steps == 0 {
                    problems.push(format!("{at}: horizon and steps must be positive"));
                }
            }
            Task::Simulate { steps, n_paths, .. } => {
                needs(model.market.is_some(), "market", &mut problems);
                if *steps == 0 || *n_paths == 0 {
                    problems.push(format!("{at}: steps and n_paths must be positive"));
                }
            }
            Task::SpotOption { option, strikes, .. } | Task::ForwardOption { option, strikes, .. } => {
                needs(model.lss.is_some(), "lss", &mut problems);
                if let Err(e) = option.validate() {
                    problems.push(format!("{at}.option: {e}"));
                }
                if strikes.iter().any(|&k| !(k > 0.0)) {
                    problems.push(format!("{at}.strikes: strikes must be positive"));
                }
            }
            Task::Forward { maturities, t, .. } => {
                needs(model.lss.is_some(), "lss", &mut problems);
                if maturities.is_empty() || maturities.iter().any(|&m| !(m >= *t)) {
                    problems.push(format!("{at}.maturities: need at least one maturity, none before t"));
                }
            }
            Task::CarmaForwardCurve { maturities, t, .. } => {
                needs(model.carma.is_some(), "carma", &mut problems);
                if maturities.is_empty() || maturities.iter().any(|&m| !(m >= *t)) {
                    problems.push(format!("{at}.maturities: need at least one maturity, none before t"));
                }
            }
            Task::Validate { checks } => {
                for c in checks {
                    if crate::suite::criterion_id(c).is_none() {
                        problems.push(format!("{at}.checks: unknown check `{c}`"));
                    }
                }
            }
        }
    }
    if problems.is_empty() {
        Ok(())
    } else {
        Err(AppError::Invalid(problems))
    }
}
