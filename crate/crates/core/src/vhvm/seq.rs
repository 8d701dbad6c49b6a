use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::model::{with_net, DiagGaussian, GaussNode, Net, VhvmModel};
use super::VhvmError;
use crate::autodiff::{Tape, Var};
use crate::covparam::{covariance, gaussian_loglik, vector_to_cholesky, CovarianceMatrix, LatentVector, LowerCholesky};
use crate::nn::GruState;
use crate::panel::ReturnsPanel;

/// Source of the reparameterization noise `eps` in `z = mean + std * eps`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Noise {
    /// `eps = 0`: the posterior mean is used as the sample.
    Zero,
    /// Standard normal draws from ChaCha8 seeded with the value.
    Seeded(u64),
}

pub(super) enum NoiseSource {
    Zero,
    Rng(ChaCha8Rng),
}

impl Noise {
    pub(super) fn source(self, stream: u64) -> NoiseSource {
        match self {
            Noise::Zero => NoiseSource::Zero,
            Noise::Seeded(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(stream);
                NoiseSource::Rng(rng)
            }
        }
    }
}

impl NoiseSource {
    fn draw(&mut self, d: usize) -> Vec<f64> {
        match self {
            NoiseSource::Zero => vec![0.0; d],
            NoiseSource::Rng(rng) => (0..d).map(|_| StandardNormal.sample(rng)).collect(),
        }
    }
}

/// Closed-form `KL(q || p)` between diagonal Gaussians.
pub fn kl_diag_gaussians(q: &DiagGaussian, p: &DiagGaussian) -> Result<f64, VhvmError> {
    if q.dim() != p.dim() || q.std.len() != q.dim() || p.std.len() != p.dim() {
        return Err(VhvmError::Dimension {
            what: "kl operands",
            expected: p.dim(),
            got: q.dim(),
        });
    }
    Ok((0..q.dim())
        .map(|i| {
            let (sq, sp) = (q.std[i], p.std[i]);
            let dm = q.mean[i] - p.mean[i];
            (sp / sq).ln() + (sq * sq + dm * dm) / (2.0 * sp * sp) - 0.5
        })
        .sum())
}

fn kl_node(tape: &mut Tape<'_>, q: GaussNode, p: GaussNode) -> Result<Var, VhvmError> {
    let lp = tape.log(p.std);
    let lq = tape.log(q.std);
    let m2 = tape.scale(lp, -2.0);
    let inv_var_p = tape.exp(m2);
    let dm = tape.sub(q.mean, p.mean)?;
    let dm2 = tape.square(dm);
    let vq = tape.square(q.std);
    let num = tape.add(vq, dm2)?;
    let ratio = tape.mul(num, inv_var_p)?;
    let half = tape.scale(ratio, 0.5);
    let logs = tape.sub(lp, lq)?;
    let s = tape.add(logs, half)?;
    let s = tape.add_scalar(s, -0.5);
    Ok(tape.sum(s))
}

/// Appends the ELBO terms of `rows` (raw returns) to the tape, starting the
/// GRU at `h0`. Returns the summed ELBO on the standardized scale and the
/// final hidden state.
pub(super) fn elbo_terms<'r>(
    model: &VhvmModel,
    tape: &mut Tape<'_>,
    net: &Net,
    rows: impl Iterator<Item = &'r [f64]>,
    h0: Var,
    noise: &mut NoiseSource,
    kl_weight: f64,
    t_offset: usize,
) -> Result<(Option<Var>, Var), VhvmError> {
    let mut h = h0;
    let mut total: Option<Var> = None;
    for (k, r) in rows.enumerate() {
        let rs = model.standardize(r);
        let prior = net.head(tape, &net.gen, h)?;
        let x = tape.constant_vec(rs.clone());
        let h_new = net.gru.step(tape, x, h)?;
        let post = net.head(tape, &net.inf, h_new)?;
        let eps = tape.constant_vec(noise.draw(net.d));
        let spread = tape.mul(post.std, eps)?;
        let z = tape.add(post.mean, spread)?;
        let ll = net.layout.loglik(tape, z, &rs)?;
        let kl = kl_node(tape, post, prior)?;
        debug_assert!(tape.scalar(kl) >= -1e-9, "negative KL {}", tape.scalar(kl));
        let wkl = tape.scale(kl, kl_weight);
        let term = tape.sub(ll, wkl)?;
        if !tape.scalar(term).is_finite() {
            return Err(VhvmError::NonFinite { time: t_offset + k });
        }
        total = Some(match total {
            None => term,
            Some(acc) => tape.add(acc, term)?,
        });
        h = h_new;
    }
    Ok((total, h))
}

fn check_panel(model: &VhvmModel, returns: &ReturnsPanel, min_len: usize) -> Result<(), VhvmError> {
    model.check_width("return width", returns.n())?;
    if returns.len() < min_len {
        return Err(VhvmError::Config(format!(
            "need at least {min_len} time steps, got {}",
            returns.len()
        )));
    }
    Ok(())
}

/// Full-sequence negative ELBO with one reparameterized sample per step and
/// its gradient w.r.t. every parameter (sorted by name).
pub fn elbo_gradient(
    model: &VhvmModel,
    returns: &ReturnsPanel,
    noise: Noise,
    kl_weight: f64,
) -> Result<(f64, Vec<(String, Vec<f64>)>), VhvmError> {
    check_panel(model, returns, 2)?;
    let mut tape = Tape::new();
    let bound = model.params.bind(&mut tape);
    let net = Net::bind(model, &bound)?;
    let h0 = tape.constant_vec(vec![0.0; model.config().hidden]);
    let mut src = noise.source(0);
    let (total, _) = elbo_terms(model, &mut tape, &net, returns.rows(), h0, &mut src, kl_weight, 0)?;
    let total = total.expect("at least two steps");
    let loss = tape.neg(total);
    let value = tape.scalar(loss) + returns.len() as f64 * model.log_scale_sum();
    tape.backward(loss)?;
    Ok((value, bound.collect_grads(&tape)))
}

/// Negative ELBO of a whole sequence on the raw return scale.
pub fn elbo_sequence(model: &VhvmModel, returns: &ReturnsPanel, noise: Noise) -> Result<f64, VhvmError> {
    check_panel(model, returns, 2)?;
    with_net(model, |tape, net| {
        let h0 = tape.constant_vec(vec![0.0; model.config().hidden]);
        let mut src = noise.source(0);
        let (total, _) = elbo_terms(model, tape, net, returns.rows(), h0, &mut src, 1.0, 0)?;
        let elbo = tape.scalar(total.expect("at least two steps"));
        Ok(-(elbo - returns.len() as f64 * model.log_scale_sum()))
    })
}

/// Learned prior `p(z_t | h_{t-1})`.
pub fn prior_step(model: &VhvmModel, h_prev: &GruState) -> Result<DiagGaussian, VhvmError> {
    head_step(model, h_prev, true)
}

/// Approximate posterior `q(z_t | h_t)`.
pub fn posterior_step(model: &VhvmModel, h_curr: &GruState) -> Result<DiagGaussian, VhvmError> {
    head_step(model, h_curr, false)
}

fn head_step(model: &VhvmModel, state: &GruState, prior: bool) -> Result<DiagGaussian, VhvmError> {
    if state.h.len() != model.config().hidden {
        return Err(VhvmError::Dimension {
            what: "hidden state",
            expected: model.config().hidden,
            got: state.h.len(),
        });
    }
    with_net(model, |tape, net| {
        let h = tape.constant_vec(state.h.clone());
        let g = net.head(tape, if prior { &net.gen } else { &net.inf }, h)?;
        Ok(Net::gauss_value(tape, g))
    })
}

/// Raw-scale precision factor decoded from a standardized latent vector.
fn decode(model: &VhvmModel, z: Vec<f64>) -> Result<LowerCholesky, VhvmError> {
    let l = vector_to_cholesky(&LatentVector::new(z)?);
    Ok(l.unscale_rows(model.scale())?)
}

/// One step: prior-mean factor from `h`, then `h` advanced by `r` if given.
fn forecast_and_advance(
    model: &VhvmModel,
    h: &[f64],
    r: Option<&[f64]>,
    want_factor: bool,
) -> Result<(Option<LowerCholesky>, Vec<f64>), VhvmError> {
    with_net(model, |tape, net| {
        let hv = tape.constant_vec(h.to_vec());
        let factor = if want_factor {
            let g = net.head(tape, &net.gen, hv)?;
            Some(decode(model, tape.value(g.mean).to_vec())?)
        } else {
            None
        };
        let next = match r {
            Some(r) => {
                let x = tape.constant_vec(model.standardize(r));
                let hn = net.gru.step(tape, x, hv)?;
                tape.value(hn).to_vec()
            }
            None => h.to_vec(),
        };
        Ok((factor, next))
    })
}

fn warm(model: &VhvmModel, history: &ReturnsPanel) -> Result<Vec<f64>, VhvmError> {
    let mut h = vec![0.0; model.config().hidden];
    for r in history.rows() {
        h = forecast_and_advance(model, &h, Some(r), false)?.1;
    }
    Ok(h)
}

/// Covariance forecast for the step after `history`, decoded from the prior mean.
pub fn forecast_one_step(model: &VhvmModel, history: &ReturnsPanel) -> Result<CovarianceMatrix, VhvmError> {
    check_panel(model, history, 1)?;
    let h = warm(model, history)?;
    let (l, _) = forecast_and_advance(model, &h, None, true)?;
    Ok(covariance(&l.expect("factor requested"))?)
}

/// One-step-ahead precision factors for every row of `test`, after warming
/// the GRU through `warmup`. Each factor only sees rows before its own.
pub fn forecast_factors(
    model: &VhvmModel,
    test: &ReturnsPanel,
    warmup: &ReturnsPanel,
) -> Result<Vec<LowerCholesky>, VhvmError> {
    check_panel(model, test, 1)?;
    model.check_width("warmup width", warmup.n())?;
    if let (Some(a), Some(b)) = (warmup.timestamps().last(), test.timestamps().first()) {
        if a >= b {
            return Err(VhvmError::Config(format!("warmup ends {a}, after test starts {b}")));
        }
    }
    let mut h = warm(model, warmup)?;
    let mut out = Vec::with_capacity(test.len());
    for r in test.rows() {
        let (l, next) = forecast_and_advance(model, &h, Some(r), true)?;
        out.push(l.expect("factor requested"));
        h = next;
    }
    Ok(out)
}

/// Per-step and cumulative predictive log likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceLogLik {
    pub total: f64,
    pub per_step: Vec<f64>,
}

impl SequenceLogLik {
    pub fn from_steps(per_step: Vec<f64>) -> Self {
        Self {
            total: per_step.iter().sum(),
            per_step,
        }
    }
}

/// Scores one-step-ahead prior-mean forecasts on `test`.
pub fn evaluate_sequence(
    model: &VhvmModel,
    test: &ReturnsPanel,
    warmup: &ReturnsPanel,
    include_2pi: bool,
) -> Result<SequenceLogLik, VhvmError> {
    let factors = forecast_factors(model, test, warmup)?;
    let steps = test
        .rows()
        .zip(&factors)
        .map(|(r, l)| gaussian_loglik(r, l, include_2pi))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SequenceLogLik::from_steps(steps))
}
