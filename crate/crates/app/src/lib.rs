//! Configuration, orchestration and reporting for the `langevin` command.

pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod suite;

pub use config::{load_config, parse_config, RunConfig, Task, TaskKind};
pub use error::{AppError, EXIT_NUMERIC, EXIT_OK, EXIT_VALIDATION};
pub use report::{RunReport, TaskReport};
pub use run::{run, select_tasks};
pub use suite::{validate_suite, CriterionOutcome, CRITERIA};
