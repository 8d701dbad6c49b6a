//! Classical covariance forecasters: GARCH(1,1), two-stage DCC-GARCH, EWMA
//! and the constant sample covariance.
//!
//! Forecast functions take three contiguous-in-time panels: `train` (fit
//! data), `warmup` (everything before the test window, usually train plus
//! validation) and `test`. Recursions start at the beginning of `warmup` and
//! return one covariance per test row, each conditioned only on earlier rows.

mod dcc;
mod garch;
pub mod optim;
mod simple;

pub use dcc::{
    dcc_correlation_loglik, dcc_fit, dcc_fit_forecast, DccFilter, DccFit, DccParams, DccPath,
};
pub use garch::{
    garch_filter, garch_fit, garch_loglik, sample_variance, GarchFit, GarchParams, GARCH_MIN_LEN, MAX_PERSISTENCE,
};
pub use simple::{constant_forecast, ewma_forecast, ewma_path, CONSTANT_JITTER, DEFAULT_EWMA_LAMBDA};

use thiserror::Error;

use crate::covparam::CovError;
use crate::panel::PanelError;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("invalid data: {0}")]
    InvalidData(String),
    #[error("series too short: need {need} rows, got {got}")]
    TooShort { need: usize, got: usize },
    #[error("asset {asset}: {source}")]
    Asset {
        asset: String,
        #[source]
        source: Box<BaselineError>,
    },
    #[error("{0} is not positive definite")]
    NotPositiveDefinite(String),
    #[error(transparent)]
    Cov(#[from] CovError),
    #[error(transparent)]
    Panel(#[from] PanelError),
}
