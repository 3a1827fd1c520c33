//! CLI plumbing: run configuration, the end-to-end pipeline, report files and
//! the bundled verification scenarios.

use std::path::PathBuf;

use thiserror::Error;

pub mod config;
pub mod pipeline;
pub mod report;
pub mod scenarios;

pub use config::{load_model, load_source, RunConfig};
pub use pipeline::{
    build_problem, options_from_config, problem_from_config, run_pipeline, run_problem, solve_problem, PipelineOptions,
    PipelineRun,
};
pub use report::emit_report;
pub use scenarios::{find_scenario, run_scenario, scenarios, Provenance, Scenario, ScenarioContext};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),
    #[error("order {0} is not an element of the index set")]
    OrderNotInIndexSet(f64),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
