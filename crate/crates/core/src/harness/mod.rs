//! Scenario runner: truth, sensors, target filter and detectors, attacker and
//! wire path wired into deterministic experiments, plus metrics and logs.

mod config;
mod csvlog;
mod metrics;
mod run;
mod suite;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::simcore::SimError;

pub use config::{
    AttackConfig, DetectorConfig, ScenarioConfig, SensorConfig, SuiteConfig, Variant,
    SCHEMA_VERSION,
};
pub use csvlog::{export_csv, parse_csv, read_csv, write_csv, COLUMNS};
pub use metrics::{compute_metrics, dominant_axis, Summary};
pub use run::{run_scenario, EpochRow, RunLog};
pub use suite::{run_batch, run_batch_sequential, run_suite, run_suite_logs, SuiteRow};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },
    #[error("numeric failure at step {step} (t={t}): {message}")]
    Numeric { step: u64, t: f64, message: String },
    #[error("wire path failure at t={t}: {message}")]
    Wire { t: f64, message: String },
    #[error("{path}: {inner}")]
    At {
        path: PathBuf,
        inner: Box<HarnessError>,
    },
}

impl HarnessError {
    pub(crate) fn at(self, path: &Path) -> Self {
        Self::At {
            path: path.to_path_buf(),
            inner: Box::new(self),
        }
    }

    /// The underlying error without file context.
    pub fn root(&self) -> &HarnessError {
        match self {
            Self::At { inner, .. } => inner.root(),
            e => e,
        }
    }
}

impl From<SimError> for HarnessError {
    fn from(e: SimError) -> Self {
        Self::Config(e.to_string())
    }
}
