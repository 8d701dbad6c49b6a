#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use vhvm_core::autodiff::{OpKind, Tape, Tensor, Var};
use vhvm_core::covparam::{vector_to_cholesky, LatentVector, LowerCholesky};
use vhvm_core::panel::ReturnsPanel;
use vhvm_core::vhvm::{elbo_gradient, elbo_sequence, Noise, VhvmConfig, VhvmModel};

pub const FD_STEP: f64 = 1e-5;

/// `|a - b| / max(|a|, |b|, 1e-4)`: relative error, absolute below 1e-4.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-4)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

// ---- random autodiff graphs ----

#[derive(Debug, Clone, Copy)]
pub enum Unary {
    Sigmoid,
    Tanh,
    Softplus,
    /// `exp(tanh(x))`, kept bounded.
    Exp,
    /// `log(x^2 + 0.5)`, kept in the domain.
    Log,
    Negate,
    Square,
    Relu,
    Scale(f64),
}

#[derive(Debug, Clone, Copy)]
pub enum Step {
    Unary(Unary, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MatMul(usize, usize),
    /// Scalar node times any node.
    ScalarMul(usize, usize),
    Sum(usize),
    Concat(usize, usize),
    Slice(usize, usize, usize),
}

#[derive(Debug, Clone)]
pub struct Graph {
    pub leaves: Vec<Tensor>,
    pub steps: Vec<Step>,
    /// Loss weight for each step output.
    pub weights: Vec<f64>,
}

fn step_shape(shapes: &[Vec<usize>], step: &Step) -> Vec<usize> {
    match *step {
        Step::Unary(_, a) | Step::ScalarMul(_, a) => shapes[a].clone(),
        Step::Add(a, _) | Step::Sub(a, _) => shapes[a].clone(),
        Step::Mul(a, _) => shapes[a].clone(),
        Step::MatMul(a, b) => match (shapes[a].as_slice(), shapes[b].as_slice()) {
            ([m, _], [_, p]) => vec![*m, *p],
            ([m, _], [_]) => vec![*m],
            ([_], [_, p]) => vec![*p],
            _ => unreachable!(),
        },
        Step::Sum(_) => vec![],
        Step::Concat(a, b) => vec![shapes[a][0] + shapes[b][0]],
        Step::Slice(_, _, len) => vec![len],
    }
}

/// Random graph with depth at most `max_depth` over vector and matrix leaves
/// of size at most 8.
pub fn random_graph(rng: &mut ChaCha8Rng, max_depth: usize) -> Graph {
    let p = rng.gen_range(1..=8);
    let q = rng.gen_range(1..=8);
    let mut leaves = Vec::new();
    let leaf = |shape: Vec<usize>, rng: &mut ChaCha8Rng| {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-1.5..1.5)).collect();
        Tensor::new(shape, data).unwrap()
    };
    leaves.push(leaf(vec![p], rng));
    leaves.push(leaf(vec![p], rng));
    leaves.push(leaf(vec![q], rng));
    leaves.push(leaf(vec![q, p], rng));
    leaves.push(leaf(vec![p, q], rng));
    let mut shapes: Vec<Vec<usize>> = leaves.iter().map(|t| t.shape().to_vec()).collect();
    let mut depth = vec![0usize; leaves.len()];
    let mut steps = Vec::new();
    let target = rng.gen_range(4..=12);
    let mut attempts = 0;
    while steps.len() < target && attempts < 500 {
        attempts += 1;
        let avail: Vec<usize> = (0..shapes.len()).filter(|&i| depth[i] < max_depth).collect();
        let a = avail[rng.gen_range(0..avail.len())];
        let b = avail[rng.gen_range(0..avail.len())];
        let step = match rng.gen_range(0..9) {
            0 => {
                let u = match rng.gen_range(0..9) {
                    0 => Unary::Sigmoid,
                    1 => Unary::Tanh,
                    2 => Unary::Softplus,
                    3 => Unary::Exp,
                    4 => Unary::Log,
                    5 => Unary::Negate,
                    6 => Unary::Square,
                    7 => Unary::Relu,
                    _ => Unary::Scale(rng.gen_range(-2.0..2.0)),
                };
                Step::Unary(u, a)
            }
            1 if shapes[a] == shapes[b] => Step::Add(a, b),
            2 if shapes[a] == shapes[b] => Step::Sub(a, b),
            3 if shapes[a] == shapes[b] => Step::Mul(a, b),
            4 => match (shapes[a].as_slice(), shapes[b].as_slice()) {
                ([_, k], [k2, _]) | ([_, k], [k2]) | ([k], [k2, _]) if k == k2 => Step::MatMul(a, b),
                _ => continue,
            },
            5 if shapes[a].is_empty() => Step::ScalarMul(a, b),
            6 if !shapes[a].is_empty() => Step::Sum(a),
            7 if shapes[a].len() == 1 && shapes[b].len() == 1 => Step::Concat(a, b),
            8 if shapes[a].len() == 1 => {
                let n = shapes[a][0];
                let start = rng.gen_range(0..n);
                let len = rng.gen_range(1..=n - start);
                Step::Slice(a, start, len)
            }
            _ => continue,
        };
        let d = match step {
            Step::Unary(Unary::Exp | Unary::Log, x) => depth[x] + 2,
            Step::Unary(_, x) | Step::Sum(x) | Step::Slice(x, _, _) => depth[x] + 1,
            Step::Add(x, y)
            | Step::Sub(x, y)
            | Step::Mul(x, y)
            | Step::MatMul(x, y)
            | Step::ScalarMul(x, y)
            | Step::Concat(x, y) => depth[x].max(depth[y]) + 1,
        };
        if d > max_depth {
            continue;
        }
        shapes.push(step_shape(&shapes, &step));
        depth.push(d);
        steps.push(step);
    }
    let weights = steps.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
    Graph { leaves, steps, weights }
}

impl Graph {
    fn build<'a>(&self, tape: &mut Tape<'a>, leaves: &[Tensor]) -> (Vec<Var>, Var) {
        let mut nodes: Vec<Var> = leaves.iter().map(|t| tape.variable(t.clone())).collect();
        let leaf_vars = nodes.clone();
        let mut loss: Option<Var> = None;
        for (step, &w) in self.steps.iter().zip(&self.weights) {
            let v = match *step {
                Step::Unary(u, a) => {
                    let x = nodes[a];
                    match u {
                        Unary::Sigmoid => tape.forward_op(OpKind::Sigmoid, &[x]).unwrap(),
                        Unary::Tanh => tape.forward_op(OpKind::Tanh, &[x]).unwrap(),
                        Unary::Softplus => tape.forward_op(OpKind::Softplus, &[x]).unwrap(),
                        Unary::Exp => {
                            let t = tape.tanh(x);
                            tape.exp(t)
                        }
                        Unary::Log => {
                            let s = tape.square(x);
                            let s = tape.add_scalar(s, 0.5);
                            tape.log(s)
                        }
                        Unary::Negate => tape.forward_op(OpKind::Negate, &[x]).unwrap(),
                        Unary::Square => tape.forward_op(OpKind::Square, &[x]).unwrap(),
                        Unary::Relu => tape.relu(x),
                        Unary::Scale(c) => tape.scale(x, c),
                    }
                }
                Step::Add(a, b) => tape.add(nodes[a], nodes[b]).unwrap(),
                Step::Sub(a, b) => tape.sub(nodes[a], nodes[b]).unwrap(),
                Step::Mul(a, b) => tape.mul(nodes[a], nodes[b]).unwrap(),
                Step::MatMul(a, b) => tape.forward_op(OpKind::MatMul, &[nodes[a], nodes[b]]).unwrap(),
                Step::ScalarMul(s, a) => tape.mul(nodes[a], nodes[s]).unwrap(),
                Step::Sum(a) => tape.sum(nodes[a]),
                Step::Concat(a, b) => tape.concat(&[nodes[a], nodes[b]]).unwrap(),
                Step::Slice(a, start, len) => tape.slice(nodes[a], start, len).unwrap(),
            };
            nodes.push(v);
            let s = tape.sum(v);
            let s = tape.scale(s, w);
            loss = Some(match loss {
                Some(l) => tape.add(l, s).unwrap(),
                None => s,
            });
        }
        (leaf_vars, loss.expect("graph has steps"))
    }

    pub fn value(&self, leaves: &[Tensor]) -> f64 {
        let mut tape = Tape::new();
        let (_, loss) = self.build(&mut tape, leaves);
        tape.scalar(loss)
    }

    /// Analytic gradient of every leaf entry.
    pub fn gradient(&self) -> Vec<Vec<f64>> {
        let mut tape = Tape::new();
        let (leaves, loss) = self.build(&mut tape, &self.leaves);
        tape.backward(loss).unwrap();
        leaves
            .iter()
            .zip(&self.leaves)
            .map(|(&v, t)| tape.grad(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.numel()]))
            .collect()
    }

    /// Worst [`rel_err`] between analytic and central-difference gradients.
    pub fn fd_error(&self) -> f64 {
        let analytic = self.gradient();
        let mut worst = 0.0f64;
        for (li, g) in analytic.iter().enumerate() {
            for (k, &ga) in g.iter().enumerate() {
                let mut plus = self.leaves.clone();
                plus[li].data_mut()[k] += FD_STEP;
                let mut minus = self.leaves.clone();
                minus[li].data_mut()[k] -= FD_STEP;
                let fd = (self.value(&plus) - self.value(&minus)) / (2.0 * FD_STEP);
                worst = worst.max(rel_err(ga, fd));
            }
        }
        worst
    }
}

// ---- VHVM finite differences ----

pub fn small_vhvm(n: usize, hidden: usize, mlp: usize, seed: u64) -> VhvmModel {
    VhvmModel::new(
        VhvmConfig {
            n,
            hidden,
            mlp_hidden: vec![mlp],
        },
        seed,
    )
    .unwrap()
}

pub fn random_panel(rng: &mut ChaCha8Rng, len: usize, n: usize, scale: f64) -> ReturnsPanel {
    let rows: Vec<Vec<f64>> = (0..len).map(|_| (0..n).map(|_| scale * normal(rng)).collect()).collect();
    ReturnsPanel::from_rows(&rows).unwrap()
}

/// Worst [`rel_err`] of the negative-ELBO gradient over every parameter entry.
pub fn vhvm_fd_error(model: &VhvmModel, returns: &ReturnsPanel, noise: Noise) -> f64 {
    let (_, grads) = elbo_gradient(model, returns, noise, 1.0).unwrap();
    let mut worst = 0.0f64;
    for (name, g) in &grads {
        for (k, &ga) in g.iter().enumerate() {
            let mut m = model.clone();
            m.params_mut().get_mut(name).unwrap().data_mut()[k] += FD_STEP;
            let fp = elbo_sequence(&m, returns, noise).unwrap();
            m.params_mut().get_mut(name).unwrap().data_mut()[k] -= 2.0 * FD_STEP;
            let fm = elbo_sequence(&m, returns, noise).unwrap();
            worst = worst.max(rel_err(ga, (fp - fm) / (2.0 * FD_STEP)));
        }
    }
    worst
}

// ---- dense linear-algebra oracles ----

pub fn random_cholesky(rng: &mut ChaCha8Rng, n: usize) -> LowerCholesky {
    let z = (0..n * (n + 1) / 2).map(|_| normal(rng)).collect();
    vector_to_cholesky(&LatentVector::new(z).unwrap())
}

pub fn dense(n: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, n, data)
}

/// LU inverse polished by one Newton-Schulz step `X (2I - A X)`.
pub fn refined_inverse(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.clone().lu().try_inverse().expect("invertible")
}

/// `Sigma = (L L^T)^-1` by general LU inversion.
pub fn oracle_sigma(l: &LowerCholesky) -> DMatrix<f64> {
    let lm = dense(l.n(), l.data());
    refined_inverse(&(&lm * lm.transpose()))
}

/// `log|Sigma|` from the LU determinant of the explicitly inverted covariance.
pub fn oracle_log_det_sigma(l: &LowerCholesky) -> f64 {
    oracle_sigma(l).lu().determinant().ln()
}

/// `-0.5 (log|Sigma| + r^T Sigma^-1 r)` with `Sigma^-1` re-inverted from `Sigma`.
pub fn oracle_loglik(r: &[f64], l: &LowerCholesky) -> f64 {
    let sigma = oracle_sigma(l);
    let inv = refined_inverse(&sigma);
    let rv = DVector::from_column_slice(r);
    let maha = (rv.transpose() * inv * &rv)[(0, 0)];
    -0.5 * (sigma.lu().determinant().ln() + maha)
}
