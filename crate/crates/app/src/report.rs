//! Run reports. Everything except `timing` is covered by `hash`, so two runs
//! of the same configuration produce equal hashes.

use langevin_core::dynamics::Measure;
use langevin_core::numerics::McEstimate;
use langevin_core::pricing_lss::{ForwardQuote, PriceReport};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::suite::CriterionOutcome;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub seed: u64,
    pub config: RunConfig,
    pub results: Vec<TaskReport>,
    /// SHA-256 of the report without `hash` and `timing`.
    pub hash: String,
    pub timing: Timing,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
    /// Seconds per task, in task order.
    pub tasks: Vec<f64>,
    /// Seconds per validation criterion, by name.
    pub criteria: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub strike: f64,
    pub fourier: PriceReport,
    pub monte_carlo: Option<McEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForwardRow {
    pub quote: ForwardQuote,
    pub monte_carlo: Option<McEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub maturity: f64,
    pub forward: f64,
    pub monte_carlo: Option<McEstimate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum TaskReport {
    Resolvent {
        method: String,
        horizon: f64,
        steps: usize,
        h_at_horizon: f64,
        g_at_horizon: f64,
        /// Largest violation of the resolvent equation on the grid.
        residual: f64,
        files: Vec<String>,
    },
    Simulate {
        measure: Measure,
        steps: usize,
        n_paths: usize,
        spot0: f64,
        terminal_spot: McEstimate,
        /// `E[Z(T)]` for physical runs.
        density: Option<McEstimate>,
        /// `E[e^{−∫(r+ρ)} S(T)]` for pricing runs.
        deflated_spot: Option<McEstimate>,
        files: Vec<String>,
    },
    SpotOption {
        t: f64,
        maturity: f64,
        quotes: Vec<OptionQuote>,
        files: Vec<String>,
    },
    Forward {
        t: f64,
        quotes: Vec<ForwardRow>,
    },
    ForwardOption {
        t: f64,
        maturity: f64,
        delivery: f64,
        quotes: Vec<OptionQuote>,
        files: Vec<String>,
    },
    CarmaForwardCurve {
        t: f64,
        state: Vec<f64>,
        stationary: bool,
        structure_preserving: bool,
        curve: Vec<CurvePoint>,
        files: Vec<String>,
    },
    Validate {
        passed: bool,
        outcomes: Vec<CriterionOutcome>,
    },
}

impl TaskReport {
    pub fn failed_criteria(&self) -> usize {
        match self {
            TaskReport::Validate { outcomes, .. } => outcomes.iter().filter(|o| !o.passed).count(),
            _ => 0,
        }
    }
}

#[derive(Serialize)]
struct Hashed<'a> {
    version: &'a str,
    seed: u64,
    config: &'a RunConfig,
    results: &'a [TaskReport],
}

impl RunReport {
    pub fn new(config: RunConfig, results: Vec<TaskReport>, timing: Timing) -> Self {
        let version = env!("CARGO_PKG_VERSION").to_string();
        let hash = content_hash(&version, config.seed, &config, &results);
        Self { version, seed: config.seed, config, results, hash, timing }
    }

    /// Recomputes the content hash; equal to `hash` unless the report was edited.
    pub fn recompute_hash(&self) -> String {
        content_hash(&self.version, self.seed, &self.config, &self.results)
    }

    pub fn failed_criteria(&self) -> usize {
        self.results.iter().map(TaskReport::failed_criteria).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports contain only serialisable data")
    }
}

fn content_hash(version: &str, seed: u64, config: &RunConfig, results: &[TaskReport]) -> String {
    let bytes = serde_json::to_vec(&Hashed { version, seed, config, results })
        .expect("reports contain only serialisable data");
    let digest = Sha256::digest(&bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}
