//! Data ingestion, splitting, experiment orchestration and reporting.

mod config;
mod experiment;
mod ingest;
mod rank;
mod split;

pub use config::{DataSource, ExperimentConfig, ModelKind, SimSpec, VhvmSettings};
pub use experiment::{
    load_panel, portfolio_panels, run_experiment, run_portfolio, write_json, EvalReport, ExperimentOutput,
    ModelOutcome, PortfolioForecasts, PortfolioReport, PortfolioTiming, SegmentSizes, Timings,
};
pub use ingest::{drop_zero_rows, ingest, ingest_series, parse_prices, read_prices, PriceSeries, MIN_INGEST_ROWS};
pub use rank::{fractional_ranks, rank_report, PortfolioScores, RankTable};
pub use split::{split, Split, SplitRatios, MIN_SEGMENT_ROWS};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::panel::PanelError;
use crate::simlab::SimError;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Model(String),
}

/// Coarse error classes, used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Model,
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            HarnessError::Config(_) => ErrorClass::Usage,
            HarnessError::Data(_)
            | HarnessError::Io { .. }
            | HarnessError::Panel(_)
            | HarnessError::Json(_) => ErrorClass::Data,
            HarnessError::Sim(SimError::Config(_)) => ErrorClass::Usage,
            HarnessError::Sim(_) => ErrorClass::Data,
            HarnessError::Model(_) => ErrorClass::Model,
        }
    }
}
