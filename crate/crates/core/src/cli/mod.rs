//! Scenario files, run reports and the command implementations behind the
//! `mtdc` binary.
//!
//! Every command returns a [`CliError`] whose [`exit_code`](CliError::exit_code)
//! follows a fixed contract: 1 for a failed verification, 2 for invalid input,
//! 3 for a numerical failure.

mod commands;
mod report;
mod scenario;

pub use commands::{
    cmd_analyze, cmd_bench, cmd_simulate, cmd_sweep, cmd_verify, load_scenario, write_csv, SweepRecord,
};
pub use report::{BoundsReport, Check, LadderPoint, RunReport, SimulationSummary};
pub use scenario::{
    benchmark, AreasSection, CommEdge, CommSection, Controller, EventSpec, GainsSection, GridSection,
    LineSpec, PerArea, ScenarioFile, SimSection, SCHEMA_VERSION,
};

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::plant::PlantError;
use crate::sim::SimError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Invalid(_) | CliError::Io { .. } => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::Invalid(m) => CliError::Invalid(m),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::Plant(p) => p.into(),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

impl From<PlantError> for CliError {
    fn from(e: PlantError) -> Self {
        match e {
            PlantError::VoltageCollapse { .. } => CliError::Numerical(e.to_string()),
            other => CliError::Invalid(other.to_string()),
        }
    }
}
