//! File formats and the command driver.

mod cli;
mod output;
mod scenario;
mod svg;

pub use cli::{run, Command, Flags, RunSummary, DEFAULT_SWEEP};
pub use output::{
    load_plan, trace_times, write_json, write_sweep, write_trace, AgentRecord, CertificateRecord, ObstaclePlane,
    ObstacleSelection, PairPlane, PairSelection, PlanFile, SweepRow, PLAN_VERSION,
};
pub use scenario::{load_scenario, parse_scenario, scenario_to_json, Scenario, DEFAULT_ORDER, SCENARIO_VERSION};
pub use svg::render;

use std::path::PathBuf;

use thiserror::Error;

use crate::arrangement::GeoError;
use crate::flatness::FlatError;
use crate::plan::PlanError;
use crate::verify::VerifyError;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Geometry(#[from] GeoError),
    #[error(transparent)]
    Plan(#[from] PlanError),
    #[error(transparent)]
    Flat(#[from] FlatError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
