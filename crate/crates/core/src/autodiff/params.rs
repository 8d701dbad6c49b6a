use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::tape::{Tape, Var};
use super::tensor::Tensor;
use super::AutodiffError;

pub const PARAM_FORMAT: &str = "vhvm-params";
pub const PARAM_FORMAT_VERSION: u32 = 1;

/// Named trainable tensors, iterated in lexicographic name order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

/// Parameters bound onto a tape, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    pub fn get(&self, name: &str) -> Result<Var, AutodiffError> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| AutodiffError::MissingParam(name.to_string()))
    }

    /// Copies leaf gradients off the tape so the store can be mutated after
    /// the tape is dropped.
    pub fn collect_grads(&self, tape: &Tape<'_>) -> Vec<(String, Vec<f64>)> {
        self.vars
            .iter()
            .filter_map(|(name, &v)| tape.grad(v).map(|g| (name.clone(), g.to_vec())))
            .collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ParamFile {
    format: String,
    version: u32,
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a trainable tensor, replacing any existing entry.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        self.params.insert(name.into(), tensor.with_grad());
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, AutodiffError> {
        self.params
            .get(name)
            .ok_or_else(|| AutodiffError::MissingParam(name.to_string()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, AutodiffError> {
        self.params
            .get_mut(name)
            .ok_or_else(|| AutodiffError::MissingParam(name.to_string()))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.params.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    /// Moves every entry of `other` in under `prefix`.
    pub fn absorb(&mut self, prefix: &str, other: ParamStore) {
        for (k, v) in other.params {
            self.params.insert(format!("{prefix}{k}"), v);
        }
    }

    /// Borrows every parameter onto `tape` as a gradient-tracking leaf.
    pub fn bind<'a>(&'a self, tape: &mut Tape<'a>) -> Bound {
        let vars = self
            .params
            .iter()
            .map(|(k, t)| (k.clone(), tape.leaf(t)))
            .collect();
        Bound { vars }
    }

    pub fn accumulate(&mut self, grads: &[(String, Vec<f64>)]) -> Result<(), AutodiffError> {
        for (name, g) in grads {
            self.get_mut(name)?.accumulate_grad(g)?;
        }
        Ok(())
    }

    pub fn zero_grad(&mut self) {
        self.params.values_mut().for_each(Tensor::zero_grad);
    }

    pub fn grads_finite(&self) -> bool {
        self.params
            .values()
            .all(|t| t.grad().map_or(true, |g| g.iter().all(|v| v.is_finite())))
    }

    pub fn to_json(&self) -> Result<String, AutodiffError> {
        let file = ParamFile {
            format: PARAM_FORMAT.to_string(),
            version: PARAM_FORMAT_VERSION,
            params: self.params.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self, AutodiffError> {
        let file: ParamFile = serde_json::from_str(text)?;
        if file.format != PARAM_FORMAT || file.version != PARAM_FORMAT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported parameter file {} v{}",
                file.format, file.version
            )));
        }
        let mut store = ParamStore::new();
        for (k, t) in file.params {
            // Re-validate: deserialization bypasses the shape check.
            let t = Tensor::new(t.shape().to_vec(), t.into_data())?;
            store.insert(k, t);
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), AutodiffError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, AutodiffError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
