//! Multivariate volatility forecasting with a sequential variational model
//! that emits Cholesky factors of precision matrices, plus classical
//! baselines, simulators and an evaluation harness.

pub mod autodiff;
pub mod baselines;
pub mod covparam;
pub mod harness;
pub(crate) mod linalg;
pub mod nn;
pub mod panel;
pub mod simlab;
pub mod vhvm;

pub use covparam::{CovarianceMatrix, LatentVector, LowerCholesky};
pub use harness::{EvalReport, ExperimentConfig, HarnessError, ModelKind};
pub use panel::ReturnsPanel;
pub use vhvm::{TrainConfig, VhvmConfig, VhvmModel};
