use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VhvmError;
use crate::autodiff::{softplus, Bound, ParamStore, Tape, Tensor, Var};
use crate::covparam::{tril_len, TrilLayout};
use crate::nn::{GruBinding, GruSpec, MlpBinding, MlpSpec, ParamSpec};

pub const MODEL_FORMAT: &str = "vhvm-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Diagonal Gaussian over the latent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagGaussian {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl DiagGaussian {
    /// Splits a head output into mean and `softplus(pre_std)`.
    pub fn from_head(out: &[f64]) -> Self {
        let d = out.len() / 2;
        Self {
            mean: out[..d].to_vec(),
            std: out[d..].iter().map(|&v| softplus(v)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VhvmConfig {
    pub n: usize,
    pub hidden: usize,
    pub mlp_hidden: Vec<usize>,
}

impl VhvmConfig {
    /// GRU width 64 and one hidden MLP layer of 64.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            hidden: 64,
            mlp_hidden: vec![64],
        }
    }

    pub fn latent_dim(&self) -> usize {
        tril_len(self.n)
    }

    pub fn gru_spec(&self) -> GruSpec {
        GruSpec {
            input_dim: self.n,
            hidden_dim: self.hidden,
        }
    }

    pub fn head_spec(&self) -> MlpSpec {
        MlpSpec::new(self.hidden, self.mlp_hidden.clone(), 2 * self.latent_dim())
    }

    pub fn validate(&self) -> Result<(), VhvmError> {
        if self.n == 0 || self.hidden == 0 {
            return Err(VhvmError::Config(format!("n and hidden must be >= 1: {self:?}")));
        }
        self.gru_spec().validate()?;
        self.head_spec().validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VhvmModel {
    config: VhvmConfig,
    seed: u64,
    scale: Vec<f64>,
    pub(super) params: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    n: usize,
    hidden: usize,
    mlp_hidden: Vec<usize>,
    seed: u64,
    scale: Vec<f64>,
    params: BTreeMap<String, Tensor>,
}

impl VhvmModel {
    /// Fresh model; the GRU and both heads draw from seeds derived from `seed`.
    pub fn new(config: VhvmConfig, seed: u64) -> Result<Self, VhvmError> {
        config.validate()?;
        let mut params = ParamStore::new();
        let head = config.head_spec();
        params.absorb("gru.", config.gru_spec().init_params(seed)?);
        params.absorb("gen.", head.init_params(seed.wrapping_add(1))?);
        params.absorb("inf.", head.init_params(seed.wrapping_add(2))?);
        Ok(Self {
            scale: vec![1.0; config.n],
            config,
            seed,
            params,
        })
    }

    pub fn config(&self) -> &VhvmConfig {
        &self.config
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// Per-asset divisor applied to returns before they enter the networks.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn set_scale(&mut self, scale: Vec<f64>) -> Result<(), VhvmError> {
        if scale.len() != self.n() {
            return Err(VhvmError::Dimension {
                what: "scale",
                expected: self.n(),
                got: scale.len(),
            });
        }
        if let Some(s) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(VhvmError::Config(format!("scale entries must be finite and > 0, got {s}")));
        }
        self.scale = scale;
        Ok(())
    }

    /// Sets every parameter entry to zero.
    pub fn zero_params(&mut self) {
        self.params
            .iter_mut()
            .for_each(|(_, t)| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
    }

    pub(super) fn standardize(&self, r: &[f64]) -> Vec<f64> {
        r.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }

    /// `sum_i log s_i`, the Jacobian term between raw and standardized likelihoods.
    pub(super) fn log_scale_sum(&self) -> f64 {
        self.scale.iter().map(|s| s.ln()).sum()
    }

    pub(super) fn check_width(&self, what: &'static str, got: usize) -> Result<(), VhvmError> {
        if got != self.n() {
            return Err(VhvmError::Dimension {
                what,
                expected: self.n(),
                got,
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, VhvmError> {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_FORMAT_VERSION,
            n: self.config.n,
            hidden: self.config.hidden,
            mlp_hidden: self.config.mlp_hidden.clone(),
            seed: self.seed,
            scale: self.scale.clone(),
            params: self.params.iter().map(|(k, t)| (k.to_string(), t.clone())).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, VhvmError> {
        let file: ModelFile = serde_json::from_str(text)?;
        if file.format != MODEL_FORMAT || file.version != MODEL_FORMAT_VERSION {
            return Err(VhvmError::Config(format!(
                "unsupported checkpoint {} v{}",
                file.format, file.version
            )));
        }
        let config = VhvmConfig {
            n: file.n,
            hidden: file.hidden,
            mlp_hidden: file.mlp_hidden,
        };
        let mut model = Self::new(config, file.seed)?;
        if file.params.len() != model.params.len() {
            return Err(VhvmError::Config(format!(
                "checkpoint has {} tensors, model needs {}",
                file.params.len(),
                model.params.len()
            )));
        }
        for (name, t) in file.params {
            let slot = model.params.get_mut(&name)?;
            if slot.shape() != t.shape() || t.data().len() != slot.numel() {
                return Err(VhvmError::Config(format!("tensor {name} has shape {:?}", t.shape())));
            }
            slot.data_mut().copy_from_slice(t.data());
        }
        model.set_scale(file.scale)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<(), VhvmError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, VhvmError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Model networks bound to one tape.
pub(super) struct Net {
    pub gru: GruBinding,
    pub gen: MlpBinding,
    pub inf: MlpBinding,
    pub layout: TrilLayout,
    pub d: usize,
}

/// Head output split into mean and std nodes.
#[derive(Clone, Copy)]
pub(super) struct GaussNode {
    pub mean: Var,
    pub std: Var,
}

impl Net {
    pub fn bind(model: &VhvmModel, bound: &Bound) -> Result<Self, VhvmError> {
        let head = model.config.head_spec();
        Ok(Self {
            gru: GruBinding::new(&model.config.gru_spec(), bound, "gru.")?,
            gen: MlpBinding::new(&head, bound, "gen.")?,
            inf: MlpBinding::new(&head, bound, "inf.")?,
            layout: TrilLayout::new(model.n()),
            d: model.latent_dim(),
        })
    }

    pub fn head(&self, tape: &mut Tape<'_>, head: &MlpBinding, h: Var) -> Result<GaussNode, VhvmError> {
        let out = head.forward(tape, h)?;
        let mean = tape.slice(out, 0, self.d)?;
        let pre = tape.slice(out, self.d, self.d)?;
        let std = tape.softplus(pre);
        Ok(GaussNode { mean, std })
    }

    pub fn gauss_value(tape: &Tape<'_>, g: GaussNode) -> DiagGaussian {
        DiagGaussian {
            mean: tape.value(g.mean).to_vec(),
            std: tape.value(g.std).to_vec(),
        }
    }
}

/// Runs `f` on a fresh tape with the model's networks bound.
pub(super) fn with_net<T>(
    model: &VhvmModel,
    f: impl FnOnce(&mut Tape<'_>, &Net) -> Result<T, VhvmError>,
) -> Result<T, VhvmError> {
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let net = Net::bind(model, &bound)?;
    f(&mut tape, &net)
}
