use serde::{Deserialize, Serialize};

use super::{rng, xavier, NnError, ParamSpec};
use crate::autodiff::{Bound, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, tape: &mut Tape<'_>, x: Var) -> Var {
        match self {
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Identity => x,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub output_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl MlpSpec {
    /// Tanh hidden layers, identity output.
    pub fn new(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            input_dim,
            hidden_dims,
            output_dim,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.output_dim == 0 || self.hidden_dims.contains(&0) {
            return Err(NnError::InvalidSpec(format!("all MLP dims must be >= 1: {self:?}")));
        }
        if self.hidden_activation == Activation::Identity {
            return Err(NnError::InvalidSpec("hidden activation must be tanh or relu".into()));
        }
        if self.output_activation != Activation::Identity {
            return Err(NnError::InvalidSpec("output activation must be identity".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` per layer.
    pub fn layer_dims(&self) -> Vec<(usize, usize)> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 1);
        let mut prev = self.input_dim;
        for &h in self.hidden_dims.iter().chain(std::iter::once(&self.output_dim)) {
            dims.push((prev, h));
            prev = h;
        }
        dims
    }
}

impl ParamSpec for MlpSpec {
    fn init_params(&self, seed: u64) -> Result<ParamStore, NnError> {
        self.validate()?;
        let mut rng = rng(seed);
        let mut store = ParamStore::new();
        for (i, (fan_in, fan_out)) in self.layer_dims().into_iter().enumerate() {
            store.insert(format!("layer{i}.weight"), xavier(&mut rng, fan_out, fan_in));
            store.insert(format!("layer{i}.bias"), Tensor::zeros(&[fan_out]));
        }
        Ok(store)
    }
}

/// MLP parameters resolved to tape variables.
#[derive(Debug, Clone)]
pub struct MlpBinding {
    spec: MlpSpec,
    layers: Vec<(Var, Var)>,
}

impl MlpBinding {
    pub fn new(spec: &MlpSpec, bound: &Bound, prefix: &str) -> Result<Self, NnError> {
        spec.validate()?;
        let layers = (0..spec.layer_dims().len())
            .map(|i| {
                Ok((
                    bound.get(&format!("{prefix}layer{i}.weight"))?,
                    bound.get(&format!("{prefix}layer{i}.bias"))?,
                ))
            })
            .collect::<Result<_, NnError>>()?;
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var, NnError> {
        let got = tape.value(x).len();
        if tape.shape(x).len() != 1 || got != self.spec.input_dim {
            return Err(NnError::Dimension {
                what: "mlp input",
                expected: self.spec.input_dim,
                got,
            });
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let wx = tape.matmul(w, h)?;
            let pre = tape.add(wx, b)?;
            let act = if i == last {
                self.spec.output_activation
            } else {
                self.spec.hidden_activation
            };
            h = act.apply(tape, pre);
        }
        Ok(h)
    }
}

/// Evaluates an MLP whose parameters carry no name prefix.
pub fn mlp_forward(spec: &MlpSpec, params: &ParamStore, x: &[f64]) -> Result<Vec<f64>, NnError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let net = MlpBinding::new(spec, &bound, "")?;
    let xv = tape.constant_vec(x.to_vec());
    let y = net.forward(&mut tape, xv)?;
    Ok(tape.value(y).to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::xavier_bound;

    #[test]
    fn zero_parameters_give_zero_output() {
        let spec = MlpSpec::new(3, vec![4], 2);
        let mut p = spec.init_params(1).unwrap();
        p.iter_mut().for_each(|(_, t)| t.data_mut().iter_mut().for_each(|v| *v = 0.0));
        assert_eq!(mlp_forward(&spec, &p, &[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn identity_single_layer() {
        let spec = MlpSpec::new(2, vec![], 2);
        let mut p = ParamStore::new();
        p.insert("layer0.weight", Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        p.insert("layer0.bias", Tensor::zeros(&[2]));
        assert_eq!(mlp_forward(&spec, &p, &[1.0, 2.0]).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let spec = MlpSpec::new(3, vec![4], 2);
        let p = spec.init_params(0).unwrap();
        assert!(matches!(
            mlp_forward(&spec, &p, &[1.0]),
            Err(NnError::Dimension { expected: 3, got: 1, .. })
        ));
        assert!(MlpSpec::new(0, vec![], 1).validate().is_err());
        assert!(MlpSpec::new(1, vec![0], 1).validate().is_err());
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let spec = MlpSpec::new(5, vec![7, 3], 4);
        let a = spec.init_params(11).unwrap();
        let b = spec.init_params(11).unwrap();
        let c = spec.init_params(12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for ((fi, fo), i) in spec.layer_dims().into_iter().zip(0..) {
            let w = a.get(&format!("layer{i}.weight")).unwrap();
            assert_eq!(w.shape(), &[fo, fi]);
            let bound = xavier_bound(fi, fo);
            assert!(w.data().iter().all(|v| v.abs() <= bound));
            assert!(a.get(&format!("layer{i}.bias")).unwrap().data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn relu_hidden_layer() {
        let spec = MlpSpec {
            hidden_activation: Activation::Relu,
            ..MlpSpec::new(1, vec![2], 1)
        };
        let mut p = ParamStore::new();
        p.insert("layer0.weight", Tensor::matrix(2, 1, vec![1.0, -1.0]).unwrap());
        p.insert("layer0.bias", Tensor::zeros(&[2]));
        p.insert("layer1.weight", Tensor::matrix(1, 2, vec![1.0, 1.0]).unwrap());
        p.insert("layer1.bias", Tensor::zeros(&[1]));
        assert_eq!(mlp_forward(&spec, &p, &[3.0]).unwrap(), vec![3.0]);
        assert_eq!(mlp_forward(&spec, &p, &[-2.0]).unwrap(), vec![2.0]);
    }
}
