//! Define-by-run tape.
//!
//! Every op evaluates eagerly and appends a node holding its output. Nodes
//! whose inputs all lack `requires_grad` are stored as plain constants, so
//! inference code can run on a tape without paying for backward bookkeeping.
//!
//! Shape rules:
//!
//! | op | accepted shapes | output |
//! |----|-----------------|--------|
//! | `matmul` | `[m,k]x[k,p]`, `[m,k]x[k]`, `[k]x[k,p]` | `[m,p]`, `[m]`, `[p]` |
//! | `add`, `mul` | equal shapes; `b` a scalar; `a=[m,k]`, `b=[k]` (row broadcast) | shape of `a` |
//! | `sum` | any | scalar `[]` |
//! | `concat`, `slice` | 1-D only | 1-D |
//! | unary ops, `relu`, `scale`, `add_scalar` | any | same as input |
//!
//! A tape supports exactly one `backward` call. Gradients stay readable on
//! leaves afterwards; interior gradients are released as they are consumed.

use super::tensor::{numel, Tensor};
use super::AutodiffError;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Operation selector for [`Tape::forward_op`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OpKind {
    MatMul,
    Add,
    Mul,
    Sigmoid,
    Tanh,
    Softplus,
    Exp,
    Log,
    Sum,
    Concat,
    Slice { start: usize, len: usize },
    Negate,
    Square,
    Relu,
    Scale(f64),
    AddScalar(f64),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Mul => "mul",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Tanh => "tanh",
            OpKind::Softplus => "softplus",
            OpKind::Exp => "exp",
            OpKind::Log => "log",
            OpKind::Sum => "sum",
            OpKind::Concat => "concat",
            OpKind::Slice { .. } => "slice",
            OpKind::Negate => "negate",
            OpKind::Square => "square",
            OpKind::Relu => "relu",
            OpKind::Scale(_) => "scale",
            OpKind::AddScalar(_) => "add_scalar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Broadcast {
    Same,
    Scalar,
    Rows { rows: usize, cols: usize },
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Add(usize, usize, Broadcast),
    Mul(usize, usize, Broadcast),
    Sigmoid(usize),
    Tanh(usize),
    Softplus(usize),
    Exp(usize),
    Log(usize),
    Sum(usize),
    Concat(Vec<usize>),
    Slice(usize, usize),
    Negate(usize),
    Square(usize),
    Relu(usize),
    Scale(usize, f64),
    AddScalar(usize),
}

enum Storage<'a> {
    Owned(Vec<f64>),
    Borrowed(&'a [f64]),
}

impl Storage<'_> {
    fn as_slice(&self) -> &[f64] {
        match self {
            Storage::Owned(v) => v,
            Storage::Borrowed(s) => s,
        }
    }
}

struct Node<'a> {
    shape: Vec<usize>,
    value: Storage<'a>,
    op: Op,
    requires_grad: bool,
}

/// Numerically stable `log(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Recording of a forward computation.
///
/// The lifetime ties borrowed leaves (see [`Tape::leaf`]) to their owner, so
/// parameters are never copied onto the tape.
pub struct Tape<'a> {
    nodes: Vec<Node<'a>>,
    grads: Vec<Option<Vec<f64>>>,
    consumed: bool,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Tape<'a> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
            consumed: false,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Storage<'a>, op: Op, requires_grad: bool) -> Var {
        let op = if requires_grad { op } else { Op::Leaf };
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Borrows a tensor as a leaf; it takes part in backward iff the tensor
    /// has `requires_grad` set.
    pub fn leaf(&mut self, tensor: &'a Tensor) -> Var {
        self.push(
            tensor.shape().to_vec(),
            Storage::Borrowed(tensor.data()),
            Op::Leaf,
            tensor.requires_grad(),
        )
    }

    /// Owned leaf that receives a gradient.
    pub fn variable(&mut self, tensor: Tensor) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, Storage::Owned(tensor.into_data()), Op::Leaf, true)
    }

    /// Owned leaf excluded from differentiation.
    pub fn constant(&mut self, tensor: Tensor) -> Var {
        let shape = tensor.shape().to_vec();
        self.push(shape, Storage::Owned(tensor.into_data()), Op::Leaf, false)
    }

    pub fn constant_vec(&mut self, data: Vec<f64>) -> Var {
        self.constant(Tensor::vector(data))
    }

    pub fn value(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.as_slice()
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    /// First element of a node's value; intended for scalars.
    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v)[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward call's loss w.r.t. a leaf.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    /// Detached copy of a node's value.
    pub fn detach(&mut self, v: Var) -> Var {
        let shape = self.shape(v).to_vec();
        let data = self.value(v).to_vec();
        self.push(shape, Storage::Owned(data), Op::Leaf, false)
    }

    /// Generic entry point dispatching on [`OpKind`].
    pub fn forward_op(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        let arity = match kind {
            OpKind::MatMul | OpKind::Add | OpKind::Mul => Some(2),
            OpKind::Concat => None,
            _ => Some(1),
        };
        if let Some(k) = arity {
            if inputs.len() != k {
                return Err(AutodiffError::Arity {
                    op: kind.name(),
                    expected: k,
                    got: inputs.len(),
                });
            }
        }
        match kind {
            OpKind::MatMul => self.matmul(inputs[0], inputs[1]),
            OpKind::Add => self.add(inputs[0], inputs[1]),
            OpKind::Mul => self.mul(inputs[0], inputs[1]),
            OpKind::Sigmoid => Ok(self.sigmoid(inputs[0])),
            OpKind::Tanh => Ok(self.tanh(inputs[0])),
            OpKind::Softplus => Ok(self.softplus(inputs[0])),
            OpKind::Exp => Ok(self.exp(inputs[0])),
            OpKind::Log => Ok(self.log(inputs[0])),
            OpKind::Sum => Ok(self.sum(inputs[0])),
            OpKind::Concat => self.concat(inputs),
            OpKind::Slice { start, len } => self.slice(inputs[0], start, len),
            OpKind::Negate => Ok(self.neg(inputs[0])),
            OpKind::Square => Ok(self.square(inputs[0])),
            OpKind::Relu => Ok(self.relu(inputs[0])),
            OpKind::Scale(c) => Ok(self.scale(inputs[0], c)),
            OpKind::AddScalar(c) => Ok(self.add_scalar(inputs[0], c)),
        }
    }

    fn shape_err(&self, op: &'static str, vars: &[Var]) -> AutodiffError {
        AutodiffError::ShapeMismatch {
            op,
            shapes: vars.iter().map(|&v| self.shape(v).to_vec()).collect(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        let (m, k, p, out_shape) = match (sa.len(), sb.len()) {
            (2, 2) if sa[1] == sb[0] => (sa[0], sa[1], sb[1], vec![sa[0], sb[1]]),
            (2, 1) if sa[1] == sb[0] => (sa[0], sa[1], 1, vec![sa[0]]),
            (1, 2) if sa[0] == sb[0] => (1, sa[0], sb[1], vec![sb[1]]),
            _ => return Err(self.shape_err("matmul", &[a, b])),
        };
        let (av, bv) = (self.value(a), self.value(b));
        let mut out = vec![0.0; m * p];
        for i in 0..m {
            let row = &av[i * k..(i + 1) * k];
            let dst = &mut out[i * p..(i + 1) * p];
            if p == 1 {
                dst[0] = row.iter().zip(bv).map(|(x, y)| x * y).sum();
            } else {
                for (kk, &aik) in row.iter().enumerate() {
                    if aik == 0.0 {
                        continue;
                    }
                    let brow = &bv[kk * p..(kk + 1) * p];
                    for (d, &bkj) in dst.iter_mut().zip(brow) {
                        *d += aik * bkj;
                    }
                }
            }
        }
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out_shape, Storage::Owned(out), Op::MatMul(a.0, b.0), rg))
    }

    fn broadcast(&self, op: &'static str, a: Var, b: Var) -> Result<Broadcast, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            Ok(Broadcast::Same)
        } else if numel(sb) == 1 && sb.len() <= 1 {
            Ok(Broadcast::Scalar)
        } else if sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0] {
            Ok(Broadcast::Rows {
                rows: sa[0],
                cols: sa[1],
            })
        } else {
            Err(self.shape_err(op, &[a, b]))
        }
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(usize, usize, Broadcast) -> Op,
    ) -> Result<Var, AutodiffError> {
        let bc = self.broadcast(name, a, b)?;
        let (av, bv) = (self.value(a), self.value(b));
        let out: Vec<f64> = match bc {
            Broadcast::Same => av.iter().zip(bv).map(|(&x, &y)| f(x, y)).collect(),
            Broadcast::Scalar => av.iter().map(|&x| f(x, bv[0])).collect(),
            Broadcast::Rows { cols, .. } => av
                .iter()
                .enumerate()
                .map(|(i, &x)| f(x, bv[i % cols]))
                .collect(),
        };
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(shape, Storage::Owned(out), make(a.0, b.0, bc), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("add", a, b, |x, y| x + y, Op::Add)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul)
    }

    /// `a - b`, composed from `negate` and `add`.
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let nb = self.neg(b);
        self.add(a, nb)
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out: Vec<f64> = self.value(a).iter().map(|&x| f(x)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.requires_grad(a);
        self.push(shape, Storage::Owned(out), op, rg)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(a, sigmoid, Op::Sigmoid(a.0))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(a, f64::tanh, Op::Tanh(a.0))
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        self.unary(a, softplus, Op::Softplus(a.0))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.unary(a, f64::exp, Op::Exp(a.0))
    }

    /// Natural log. Non-positive inputs yield `-inf`/NaN rather than an error.
    pub fn log(&mut self, a: Var) -> Var {
        self.unary(a, f64::ln, Op::Log(a.0))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.unary(a, |x| -x, Op::Negate(a.0))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.unary(a, |x| x * x, Op::Square(a.0))
    }

    /// `max(x, 0)`; the derivative at 0 is taken as 0.
    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, |x| x.max(0.0), Op::Relu(a.0))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| c * x, Op::Scale(a.0, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.unary(a, |x| x + c, Op::AddScalar(a.0))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).iter().sum();
        let rg = self.requires_grad(a);
        self.push(Vec::new(), Storage::Owned(vec![s]), Op::Sum(a.0), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var, AutodiffError> {
        if parts.is_empty() || parts.iter().any(|&p| self.shape(p).len() != 1) {
            return Err(self.shape_err("concat", parts));
        }
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            out.extend_from_slice(self.value(p));
            rg |= self.requires_grad(p);
        }
        let shape = vec![out.len()];
        let op = Op::Concat(parts.iter().map(|p| p.0).collect());
        Ok(self.push(shape, Storage::Owned(out), op, rg))
    }

    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        let shape = self.shape(a);
        if shape.len() != 1 || start + len > shape[0] || len == 0 {
            return Err(AutodiffError::SliceBounds {
                shape: shape.to_vec(),
                start,
                len,
            });
        }
        let out = self.value(a)[start..start + len].to_vec();
        let rg = self.requires_grad(a);
        Ok(self.push(vec![len], Storage::Owned(out), Op::Slice(a.0, start), rg))
    }

    /// Reverse sweep from a scalar `loss`.
    ///
    /// Fills gradients for every `requires_grad` leaf reachable from `loss`.
    /// A second call on the same tape is rejected.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        if self.consumed {
            return Err(AutodiffError::DoubleBackward);
        }
        let shape = self.shape(loss);
        if numel(shape) != 1 {
            return Err(AutodiffError::NonScalarLoss {
                shape: shape.to_vec(),
            });
        }
        self.consumed = true;
        self.grads = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.grads[loss.0] = Some(vec![1.0]);

        let nodes = &self.nodes;
        let grads = &mut self.grads;
        for i in (0..=loss.0).rev() {
            let node = &nodes[i];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            let y = node.value.as_slice();
            match node.op {
                Op::Leaf => unreachable!(),
                Op::MatMul(a, b) => backprop_matmul(nodes, grads, &g, a, b),
                Op::Add(a, b, bc) => {
                    if nodes[a].requires_grad {
                        add_into(slot(grads, a, g.len()), &g);
                    }
                    if nodes[b].requires_grad {
                        let nb = nodes[b].value.as_slice().len();
                        reduce_broadcast(slot(grads, b, nb), &g, bc, |gi, _| gi);
                    }
                }
                Op::Mul(a, b, bc) => {
                    let (av, bv) = (nodes[a].value.as_slice(), nodes[b].value.as_slice());
                    if nodes[a].requires_grad {
                        let ga = slot(grads, a, g.len());
                        for (idx, (d, gi)) in ga.iter_mut().zip(&g).enumerate() {
                            let bj = match bc {
                                Broadcast::Same => bv[idx],
                                Broadcast::Scalar => bv[0],
                                Broadcast::Rows { cols, .. } => bv[idx % cols],
                            };
                            *d += gi * bj;
                        }
                    }
                    if nodes[b].requires_grad {
                        reduce_broadcast(slot(grads, b, bv.len()), &g, bc, |gi, idx| gi * av[idx]);
                    }
                }
                Op::Sigmoid(a) => unary_back(grads, a, &g, |idx| y[idx] * (1.0 - y[idx])),
                Op::Tanh(a) => unary_back(grads, a, &g, |idx| 1.0 - y[idx] * y[idx]),
                Op::Softplus(a) => {
                    let x = nodes[a].value.as_slice();
                    unary_back(grads, a, &g, |idx| sigmoid(x[idx]))
                }
                Op::Exp(a) => unary_back(grads, a, &g, |idx| y[idx]),
                Op::Log(a) => {
                    let x = nodes[a].value.as_slice();
                    unary_back(grads, a, &g, |idx| 1.0 / x[idx])
                }
                Op::Negate(a) => unary_back(grads, a, &g, |_| -1.0),
                Op::Square(a) => {
                    let x = nodes[a].value.as_slice();
                    unary_back(grads, a, &g, |idx| 2.0 * x[idx])
                }
                Op::Relu(a) => {
                    let x = nodes[a].value.as_slice();
                    unary_back(grads, a, &g, |idx| if x[idx] > 0.0 { 1.0 } else { 0.0 })
                }
                Op::Scale(a, c) => unary_back(grads, a, &g, |_| c),
                Op::AddScalar(a) => unary_back(grads, a, &g, |_| 1.0),
                Op::Sum(a) => {
                    let n = nodes[a].value.as_slice().len();
                    slot(grads, a, n).iter_mut().for_each(|d| *d += g[0]);
                }
                Op::Concat(ref parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let n = nodes[p].value.as_slice().len();
                        if nodes[p].requires_grad {
                            add_into(slot(grads, p, n), &g[off..off + n]);
                        }
                        off += n;
                    }
                }
                Op::Slice(a, start) => {
                    let n = nodes[a].value.as_slice().len();
                    add_into(&mut slot(grads, a, n)[start..start + g.len()], &g);
                }
            }
        }
        // Interior gradients were taken above; leaves keep theirs.
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], idx: usize, len: usize) -> &mut Vec<f64> {
    grads[idx].get_or_insert_with(|| vec![0.0; len])
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn unary_back(grads: &mut [Option<Vec<f64>>], a: usize, g: &[f64], deriv: impl Fn(usize) -> f64) {
    let ga = slot(grads, a, g.len());
    for (idx, (d, gi)) in ga.iter_mut().zip(g).enumerate() {
        *d += gi * deriv(idx);
    }
}

fn reduce_broadcast(dst: &mut [f64], g: &[f64], bc: Broadcast, term: impl Fn(f64, usize) -> f64) {
    match bc {
        Broadcast::Same => {
            for (idx, (d, &gi)) in dst.iter_mut().zip(g).enumerate() {
                *d += term(gi, idx);
            }
        }
        Broadcast::Scalar => {
            dst[0] += g.iter().enumerate().map(|(idx, &gi)| term(gi, idx)).sum::<f64>();
        }
        Broadcast::Rows { rows, cols } => {
            for r in 0..rows {
                for c in 0..cols {
                    let idx = r * cols + c;
                    dst[c] += term(g[idx], idx);
                }
            }
        }
    }
}

fn backprop_matmul(nodes: &[Node<'_>], grads: &mut [Option<Vec<f64>>], g: &[f64], a: usize, b: usize) {
    let (sa, sb) = (&nodes[a].shape, &nodes[b].shape);
    let (av, bv) = (nodes[a].value.as_slice(), nodes[b].value.as_slice());
    let (m, k, p) = match (sa.len(), sb.len()) {
        (2, 2) => (sa[0], sa[1], sb[1]),
        (2, 1) => (sa[0], sa[1], 1),
        _ => (1, sa[0], sb[1]),
    };
    // dA = G B^T
    if nodes[a].requires_grad {
        let ga = slot(grads, a, m * k);
        for i in 0..m {
            let grow = &g[i * p..(i + 1) * p];
            let dst = &mut ga[i * k..(i + 1) * k];
            if p == 1 {
                let gi = grow[0];
                if gi != 0.0 {
                    for (d, &bj) in dst.iter_mut().zip(bv) {
                        *d += gi * bj;
                    }
                }
            } else {
                for (kk, d) in dst.iter_mut().enumerate() {
                    let brow = &bv[kk * p..(kk + 1) * p];
                    *d += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
    }
    // dB = A^T G
    if nodes[b].requires_grad {
        let gb = slot(grads, b, k * p);
        for i in 0..m {
            let arow = &av[i * k..(i + 1) * k];
            let grow = &g[i * p..(i + 1) * p];
            for (kk, &aik) in arow.iter().enumerate() {
                if aik == 0.0 {
                    continue;
                }
                let dst = &mut gb[kk * p..(kk + 1) * p];
                for (d, &gj) in dst.iter_mut().zip(grow) {
                    *d += aik * gj;
                }
            }
        }
    }
}
