//! Sequential variational covariance model.
//!
//! A GRU shared by two MLP heads reads the return series. The generative
//! head maps `h_{t-1}` to a diagonal Gaussian prior over the latent `z_t`;
//! the inference head maps `h_t` (after consuming `r_t`) to the approximate
//! posterior. `z_t` is decoded by [`crate::covparam`] into the Cholesky
//! factor of the precision matrix of `r_t`.
//!
//! Returns are divided by a per-asset scale before they reach the networks,
//! and decoded factors are mapped back to raw units with
//! [`crate::covparam::LowerCholesky::unscale_rows`]. All reported likelihoods are on the raw
//! scale.

mod model;
mod seq;
pub mod toy;
mod train;

pub use model::{DiagGaussian, VhvmConfig, VhvmModel, MODEL_FORMAT, MODEL_FORMAT_VERSION};
pub use seq::{
    elbo_gradient, elbo_sequence, evaluate_sequence, forecast_factors, forecast_one_step, kl_diag_gaussians,
    posterior_step, prior_step, Noise, SequenceLogLik,
};
pub use train::{train, EpochRecord, TrainConfig, TrainLog};

use thiserror::Error;

use crate::autodiff::AutodiffError;
use crate::covparam::CovError;
use crate::nn::NnError;

#[derive(Debug, Error)]
pub enum VhvmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite objective at time index {time}")]
    NonFinite { time: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, log: TrainLog },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Cov(#[from] CovError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
