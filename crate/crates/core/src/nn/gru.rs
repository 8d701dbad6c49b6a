use serde::{Deserialize, Serialize};

use super::{rng, xavier, NnError, ParamSpec};
use crate::autodiff::{Bound, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GruSpec {
    pub input_dim: usize,
    pub hidden_dim: usize,
}

impl GruSpec {
    pub fn validate(&self) -> Result<(), NnError> {
        if self.input_dim == 0 || self.hidden_dim == 0 {
            return Err(NnError::InvalidSpec(format!("GRU dims must be >= 1: {self:?}")));
        }
        Ok(())
    }
}

const GATES: [&str; 3] = ["z", "r", "h"];

impl ParamSpec for GruSpec {
    fn init_params(&self, seed: u64) -> Result<ParamStore, NnError> {
        self.validate()?;
        let mut rng = rng(seed);
        let mut store = ParamStore::new();
        for g in GATES {
            store.insert(format!("w_{g}"), xavier(&mut rng, self.hidden_dim, self.input_dim));
            store.insert(format!("u_{g}"), xavier(&mut rng, self.hidden_dim, self.hidden_dim));
            store.insert(format!("b_{g}"), Tensor::zeros(&[self.hidden_dim]));
        }
        Ok(store)
    }
}

/// GRU hidden state; the initial state is the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GruState {
    pub h: Vec<f64>,
}

impl GruState {
    pub fn zeros(hidden_dim: usize) -> Self {
        Self {
            h: vec![0.0; hidden_dim],
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Gate {
    w: Var,
    u: Var,
    b: Var,
}

/// GRU parameters resolved to tape variables.
#[derive(Debug, Clone)]
pub struct GruBinding {
    spec: GruSpec,
    z: Gate,
    r: Gate,
    h: Gate,
}

impl GruBinding {
    pub fn new(spec: &GruSpec, bound: &Bound, prefix: &str) -> Result<Self, NnError> {
        spec.validate()?;
        let gate = |g: &str| -> Result<Gate, NnError> {
            Ok(Gate {
                w: bound.get(&format!("{prefix}w_{g}"))?,
                u: bound.get(&format!("{prefix}u_{g}"))?,
                b: bound.get(&format!("{prefix}b_{g}"))?,
            })
        };
        Ok(Self {
            spec: *spec,
            z: gate("z")?,
            r: gate("r")?,
            h: gate("h")?,
        })
    }

    /// One update:
    ///
    /// ```text
    /// z  = sigmoid(W_z x + U_z h + b_z)
    /// r  = sigmoid(W_r x + U_r h + b_r)
    /// h~ = tanh(W_h x + U_h (r * h) + b_h)
    /// h' = (1 - z) * h + z * h~
    /// ```
    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Result<Var, NnError> {
        let (xn, hn) = (tape.value(x).len(), tape.value(h).len());
        if xn != self.spec.input_dim {
            return Err(NnError::Dimension {
                what: "gru input",
                expected: self.spec.input_dim,
                got: xn,
            });
        }
        if hn != self.spec.hidden_dim {
            return Err(NnError::Dimension {
                what: "gru state",
                expected: self.spec.hidden_dim,
                got: hn,
            });
        }
        let pre = |tape: &mut Tape<'_>, g: Gate, hin: Var| -> Result<Var, NnError> {
            let wx = tape.matmul(g.w, x)?;
            let uh = tape.matmul(g.u, hin)?;
            let s = tape.add(wx, uh)?;
            Ok(tape.add(s, g.b)?)
        };
        let zp = pre(tape, self.z, h)?;
        let z = tape.sigmoid(zp);
        let rp = pre(tape, self.r, h)?;
        let r = tape.sigmoid(rp);
        let rh = tape.mul(r, h)?;
        let cp = pre(tape, self.h, rh)?;
        let cand = tape.tanh(cp);
        // h' = h + z * (h~ - h)
        let diff = tape.sub(cand, h)?;
        let upd = tape.mul(z, diff)?;
        Ok(tape.add(h, upd)?)
    }
}

/// One GRU update with unprefixed parameter names.
pub fn gru_step(spec: &GruSpec, params: &ParamStore, x: &[f64], state: &GruState) -> Result<GruState, NnError> {
    let mut tape = Tape::new();
    let bound = params.bind(&mut tape);
    let cell = GruBinding::new(spec, &bound, "")?;
    let xv = tape.constant_vec(x.to_vec());
    let hv = tape.constant_vec(state.h.clone());
    let out = cell.step(&mut tape, xv, hv)?;
    Ok(GruState {
        h: tape.value(out).to_vec(),
    })
}
