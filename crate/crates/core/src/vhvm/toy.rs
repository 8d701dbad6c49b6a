//! Linear-Gaussian toy with a tractable evidence.
//!
//! `z ~ N(0, 1)`, `r | z ~ N(z, s^2)`, so `r ~ N(0, 1 + s^2)`. An amortized
//! posterior `q(z | r) = N(a r + b, softplus(c)^2)` is fitted by maximizing
//! the analytic ELBO; the true posterior lies in this family.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{softplus, Adam, ParamStore, Tape, Tensor};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone)]
pub struct LinearGaussianToy {
    pub noise_std: f64,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyEpoch {
    pub epoch: usize,
    pub elbo: f64,
    pub log_evidence: f64,
}

impl LinearGaussianToy {
    pub fn simulate(noise_std: f64, len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = Normal::new(0.0, 1.0).expect("valid normal");
        let noise = Normal::new(0.0, noise_std).expect("valid normal");
        let data = (0..len)
            .map(|_| prior.sample(&mut rng) + noise.sample(&mut rng))
            .collect();
        Self { noise_std, data }
    }

    /// `sum_t log N(r_t; 0, 1 + s^2)`.
    pub fn log_evidence(&self) -> f64 {
        let v = 1.0 + self.noise_std * self.noise_std;
        self.data.iter().map(|r| -0.5 * (LN_2PI + v.ln() + r * r / v)).sum()
    }

    /// Analytic ELBO of the amortized posterior `(a, b, c)`.
    pub fn elbo(&self, a: f64, b: f64, c: f64) -> f64 {
        let s2 = self.noise_std * self.noise_std;
        let sd = softplus(c);
        self.data
            .iter()
            .map(|&r| {
                let m = a * r + b;
                let expected_ll = -0.5 * (LN_2PI + s2.ln()) - ((r - m).powi(2) + sd * sd) / (2.0 * s2);
                let kl = -sd.ln() + 0.5 * (sd * sd + m * m) - 0.5;
                expected_ll - kl
            })
            .sum()
    }

    /// Adam on the negated analytic ELBO, full batch; epoch 0 is the
    /// initialization. Returns the ELBO before each update and after the last.
    pub fn fit(&self, epochs: usize, lr: f64) -> (Vec<ToyEpoch>, [f64; 3]) {
        let mut params = ParamStore::new();
        params.insert("a", Tensor::scalar(0.0));
        params.insert("b", Tensor::scalar(0.5));
        params.insert("c", Tensor::scalar(-1.0));
        let s2 = self.noise_std * self.noise_std;
        let evidence = self.log_evidence();
        let mut adam = Adam::with_lr(lr);
        let mut out = Vec::with_capacity(epochs + 1);
        let r = Tensor::vector(self.data.clone());
        let k = self.data.len() as f64;
        for epoch in 0..=epochs {
            let grads = {
                let mut tape = Tape::new();
                let bound = params.bind(&mut tape);
                let (a, b, c) = (
                    bound.get("a").expect("a"),
                    bound.get("b").expect("b"),
                    bound.get("c").expect("c"),
                );
                let rv = tape.leaf(&r);
                let ar = tape.mul(rv, a).expect("broadcast");
                let m = tape.add(ar, b).expect("broadcast");
                let sd = tape.softplus(c);
                let var = tape.square(sd);
                let resid = tape.sub(rv, m).expect("same shape");
                let resid2 = tape.square(resid);
                let sq_sum = tape.sum(resid2);
                let var_total = tape.scale(var, k);
                let err = tape.add(sq_sum, var_total).expect("scalars");
                let ell = tape.scale(err, -0.5 / s2);
                let ell = tape.add_scalar(ell, -0.5 * k * (LN_2PI + s2.ln()));
                let m2 = tape.square(m);
                let m2_sum = tape.sum(m2);
                let log_sd = tape.log(sd);
                let kl_a = tape.scale(log_sd, -k);
                let kl_b = tape.add(var_total, m2_sum).expect("scalars");
                let kl_b = tape.scale(kl_b, 0.5);
                let kl = tape.add(kl_a, kl_b).expect("scalars");
                let kl = tape.add_scalar(kl, -0.5 * k);
                let elbo = tape.sub(ell, kl).expect("scalars");
                out.push(ToyEpoch {
                    epoch,
                    elbo: tape.scalar(elbo),
                    log_evidence: evidence,
                });
                let loss = tape.neg(elbo);
                tape.backward(loss).expect("scalar loss");
                bound.collect_grads(&tape)
            };
            if epoch < epochs {
                params.accumulate(&grads).expect("known names");
                adam.step(&mut params);
            }
        }
        let get = |n: &str| params.get(n).expect("param").data()[0];
        (out, [get("a"), get("b"), get("c")])
    }
}
