use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::split::SplitRatios;
use super::HarnessError;
use crate::baselines::{DccParams, GarchParams, DEFAULT_EWMA_LAMBDA};
use crate::simlab::{self, FactorSvConfig, SimOutput};
use crate::vhvm::{TrainConfig, VhvmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Vhvm,
    Dcc,
    Ewma,
    Constant,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [ModelKind::Vhvm, ModelKind::Dcc, ModelKind::Ewma, ModelKind::Constant];

    /// Key used in reports.
    pub fn key(self) -> &'static str {
        match self {
            ModelKind::Vhvm => "vhvm",
            ModelKind::Dcc => "dcc",
            ModelKind::Ewma => "ewma",
            ModelKind::Constant => "constant",
        }
    }

    /// Column label used in tables.
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::Vhvm => "VHVM",
            ModelKind::Dcc => "DCC-GARCH",
            ModelKind::Ewma => "EWMA",
            ModelKind::Constant => "Constant",
        }
    }
}

/// Synthetic data recipe.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum SimSpec {
    /// [`FactorSvConfig::standard`] with the given sizes.
    FactorSv {
        n: usize,
        m: usize,
        len: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Fully specified factor model.
    FactorSvCustom { config: FactorSvConfig },
    Garch {
        params: GarchParams,
        len: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
    Dcc {
        params: DccParams,
        garch: Vec<GarchParams>,
        len: usize,
        #[serde(default)]
        seed: Option<u64>,
    },
}

impl SimSpec {
    /// Runs the generator; `default_seed` applies where the spec has none.
    pub fn simulate(&self, default_seed: u64) -> Result<SimOutput, HarnessError> {
        Ok(match self {
            SimSpec::FactorSv { n, m, len, seed } => {
                simlab::simulate_factor_sv(&FactorSvConfig::standard(*n, *m, *len, seed.unwrap_or(default_seed)))?
            }
            SimSpec::FactorSvCustom { config } => simlab::simulate_factor_sv(config)?,
            SimSpec::Garch { params, len, seed } => simlab::simulate_garch(params, *len, seed.unwrap_or(default_seed))?,
            SimSpec::Dcc {
                params,
                garch,
                len,
                seed,
            } => simlab::simulate_dcc(params, garch, *len, seed.unwrap_or(default_seed))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// One `date,price` CSV per asset.
    Prices { paths: Vec<PathBuf> },
    /// A returns panel CSV as written by `ingest` or `simulate`.
    Panel { path: PathBuf },
    Simulate { spec: SimSpec },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VhvmSettings {
    pub hidden: usize,
    pub mlp_hidden: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for VhvmSettings {
    fn default() -> Self {
        let c = VhvmConfig::new(1);
        Self {
            hidden: c.hidden,
            mlp_hidden: c.mlp_hidden,
            train: TrainConfig::default(),
        }
    }
}

impl VhvmSettings {
    pub fn model_config(&self, n: usize) -> VhvmConfig {
        VhvmConfig {
            n,
            hidden: self.hidden,
            mlp_hidden: self.mlp_hidden.clone(),
        }
    }
}

fn default_models() -> Vec<ModelKind> {
    ModelKind::ALL.to_vec()
}

fn default_lambda() -> f64 {
    DEFAULT_EWMA_LAMBDA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Symbol lists, one per portfolio; empty means one portfolio with every
    /// column of the panel.
    #[serde(default)]
    pub portfolios: Vec<Vec<String>>,
    #[serde(default)]
    pub split: SplitRatios,
    #[serde(default = "default_models")]
    pub models: Vec<ModelKind>,
    #[serde(default)]
    pub vhvm: VhvmSettings,
    #[serde(default = "default_lambda")]
    pub ewma_lambda: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub include_2pi: bool,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(data: DataSource) -> Self {
        Self {
            data,
            portfolios: Vec::new(),
            split: SplitRatios::default(),
            models: default_models(),
            vhvm: VhvmSettings::default(),
            ewma_lambda: DEFAULT_EWMA_LAMBDA,
            seed: 0,
            include_2pi: false,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.split.validate()?;
        if self.models.is_empty() {
            return Err(HarnessError::Config("at least one model is required".into()));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(HarnessError::Config("model list has duplicates".into()));
        }
        if !(self.ewma_lambda > 0.0 && self.ewma_lambda < 1.0) {
            return Err(HarnessError::Config(format!("ewma_lambda must be in (0, 1), got {}", self.ewma_lambda)));
        }
        if self.portfolios.iter().any(Vec::is_empty) {
            return Err(HarnessError::Config("empty portfolio".into()));
        }
        self.vhvm
            .train
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    /// Parses JSON; relative data paths resolve against `base`.
    pub fn from_json(text: &str, base: Option<&Path>) -> Result<Self, HarnessError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| HarnessError::Config(format!("config: {e}")))?;
        if let Some(base) = base {
            match &mut cfg.data {
                DataSource::Prices { paths } => paths.iter_mut().for_each(|p| *p = base.join(&*p)),
                DataSource::Panel { path } => *path = base.join(&*path),
                DataSource::Simulate { .. } => {}
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::from_json(&text, path.parent())
    }
}
