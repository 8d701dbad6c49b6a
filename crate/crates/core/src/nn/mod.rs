//! MLP and GRU building blocks on top of [`crate::autodiff`].
//!
//! Parameters live in a [`ParamStore`] under fixed names (optionally behind a
//! prefix such as `"gen."`): MLP layers use `layer{i}.weight` with shape
//! `[out, in]` and `layer{i}.bias` with shape `[out]`; the GRU uses
//! `w_{z,r,h}` (`[hidden, input]`), `u_{z,r,h}` (`[hidden, hidden]`) and
//! `b_{z,r,h}` (`[hidden]`).

mod gru;
mod mlp;

pub use gru::{gru_step, GruBinding, GruSpec, GruState};
pub use mlp::{mlp_forward, Activation, MlpBinding, MlpSpec};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Uniform};
use thiserror::Error;

use crate::autodiff::{AutodiffError, ParamStore, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("{what}: expected length {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

/// Layer specs that know how to create their own parameters.
pub trait ParamSpec {
    /// Xavier-uniform weights, zero biases; deterministic in `seed`.
    fn init_params(&self, seed: u64) -> Result<ParamStore, NnError>;
}

pub fn init_params(spec: &impl ParamSpec, seed: u64) -> Result<ParamStore, NnError> {
    spec.init_params(seed)
}

/// Uniform `[-b, b]` with `b = sqrt(6 / (fan_in + fan_out))`, row-major `[out, in]`.
pub(crate) fn xavier(rng: &mut ChaCha8Rng, fan_out: usize, fan_in: usize) -> Tensor {
    let bound = xavier_bound(fan_in, fan_out);
    let dist = Uniform::new_inclusive(-bound, bound);
    let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
    Tensor::new(vec![fan_out, fan_in], data).expect("shape matches data")
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
