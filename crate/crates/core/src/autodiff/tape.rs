//! Wengert-list recording of tensor primitives and the reverse sweep.
//!
//! Every primitive pushes one node holding its forward value and whatever
//! context its backward rule needs. Nodes are appended in evaluation order so
//! the tape is topologically sorted by construction, and [`Tape::backward`]
//! visits it once from the loss down to index 0.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::{gemm_acc, gemm_nt_acc, gemm_tn_acc, Tensor};
use crate::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => libm::tanh(x),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            // relu(x) > 0 iff x > 0, so the subgradient at 0 is 0
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Smallest probability passed to the logarithm in [`Tape::nll_loss`].
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine {
        x: Var,
        scale: f64,
    },
    AddRow {
        x: Var,
        bias: Var,
    },
    Act {
        x: Var,
        kind: Activation,
    },
    Softmax {
        x: Var,
        beta: f64,
    },
    Concat {
        inputs: Vec<Var>,
        axis: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    GatherRows {
        x: Var,
        index: Vec<Option<usize>>,
    },
    Dropout {
        x: Var,
        mask: Vec<f64>,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
        seq_len: usize,
        window: usize,
    },
    ScaleRows {
        x: Var,
        s: Var,
    },
    SumRowGroups {
        x: Var,
        group: usize,
    },
    Sum(Var),
    Reshape(Var),
    Nll {
        probs: Var,
        labels: Vec<usize>,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

/// Recorded forward computation.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Result of a reverse sweep: one optional gradient buffer per tape node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    /// ∂loss/∂`var`, zero-filled when `var` does not reach the loss.
    pub fn wrt(&self, tape: &Tape, var: Var) -> Tensor {
        let shape = tape.value(var).shape().to_vec();
        match &self.grads[var.0] {
            Some(g) => Tensor::new(shape, g.clone()).expect("gradient shape"),
            None => Tensor::zeros(&shape),
        }
    }

    pub fn reached(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn push(&mut self, value: Tensor, op: Op, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Distance of the recorded forward pass from the nearest point where it
    /// stops being differentiable: the smallest `|x|` fed to a relu and the
    /// smallest gap between the winner and runner-up of a max-pool window.
    /// Windows whose winner is exactly zero (all clipped by a relu) are flat
    /// and skipped, as are exact ties, which come from identical inputs such
    /// as padding and move together. `f64::INFINITY` when the tape has no
    /// such operation.
    pub fn kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for node in &self.nodes {
            match &node.op {
                Op::Act {
                    x,
                    kind: Activation::Relu,
                } => {
                    for &v in self.value(*x).data() {
                        margin = margin.min(v.abs());
                    }
                }
                Op::MaxPool {
                    x,
                    argmax,
                    seq_len,
                    window,
                } => {
                    let src = self.value(*x).data();
                    let c = self.value(*x).cols();
                    let pooled = seq_len.div_ceil(*window);
                    for (o, (&best, &top)) in argmax.iter().zip(node.value.data()).enumerate() {
                        if top == 0.0 {
                            continue;
                        }
                        let (row, ch) = (o / c, o % c);
                        let (b, j) = (row / pooled, row % pooled);
                        let lo = b * seq_len + j * window;
                        let hi = b * seq_len + ((j + 1) * window).min(*seq_len);
                        for t in lo..hi {
                            let k = t * c + ch;
                            if k != best && src[k] != top {
                                margin = margin.min(top - src[k]);
                            }
                        }
                    }
                }
                _ => {}
            }
        }
        margin
    }

    /// Differentiable input (a trainable parameter or anything checked by gradient).
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Constant, false)
    }

    fn matrix_dims(&self, op: &'static str, v: Var) -> Result<(usize, usize)> {
        let s = self.shape(v);
        if s.len() != 2 {
            return Err(Error::dim(op, s, &[0, 0]));
        }
        Ok((s[0], s[1]))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims("matmul", a)?;
        let (k2, n) = self.matrix_dims("matmul", b)?;
        if k != k2 {
            return Err(Error::dim("matmul", self.shape(a), self.shape(b)));
        }
        let mut out = vec![0.0; m * n];
        gemm_acc(
            self.value(a).data(),
            self.value(b).data(),
            &mut out,
            m,
            k,
            n,
        );
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(Tensor::matrix(m, n, out)?, Op::MatMul(a, b), needs))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::dim(op, self.shape(a), self.shape(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, op: Op, f: impl Fn(f64, f64) -> f64) -> Var {
        let av = self.value(a);
        let bv = self.value(b);
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        let value = Tensor::new(av.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(a) || self.needs(b);
        self.push(value, op, needs)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, Op::Add(a, b), |x, y| x + y))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, Op::Sub(a, b), |x, y| x - y))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, Op::Mul(a, b), |x, y| x * y))
    }

    /// `scale · x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Var {
        let value = self.value(x).map(|v| scale * v + shift);
        let needs = self.needs(x);
        self.push(value, Op::Affine { x, scale }, needs)
    }

    /// Adds a bias vector (length = column count) to every row of `x`.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims("add_row", x)?;
        if self.value(bias).len() != c {
            return Err(Error::dim("add_row", self.shape(x), self.shape(bias)));
        }
        let b = self.value(bias).data();
        let mut data = self.value(x).data().to_vec();
        for row in data.chunks_mut(c) {
            for (v, bv) in row.iter_mut().zip(b) {
                *v += bv;
            }
        }
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::AddRow { x, bias }, needs))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        let value = self.value(x).map(|v| kind.apply(v));
        let needs = self.needs(x);
        self.push(value, Op::Act { x, kind }, needs)
    }

    /// Row-wise `exp(x/β) / Σ exp(x/β)` with per-row max subtraction.
    pub fn softmax_rows(&mut self, x: Var, beta: f64) -> Result<Var> {
        self.softmax_impl(x, beta, None)
    }

    /// Like [`Tape::softmax_rows`] but entries whose mask is `false` are
    /// excluded from the normalisation and receive exactly zero.
    pub fn masked_softmax_rows(&mut self, x: Var, beta: f64, mask: &[bool]) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return Err(Error::dim(
                "masked_softmax_rows",
                self.shape(x),
                &[mask.len()],
            ));
        }
        self.softmax_impl(x, beta, Some(mask))
    }

    fn softmax_impl(&mut self, x: Var, beta: f64, mask: Option<&[bool]>) -> Result<Var> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::Parameter(format!(
                "softmax beta must be positive, got {beta}"
            )));
        }
        let (r, c) = self.matrix_dims("softmax_rows", x)?;
        let mut out = vec![0.0; r * c];
        let input = self.value(x).data();
        for i in 0..r {
            let row = &input[i * c..(i + 1) * c];
            let keep = |j: usize| mask.is_none_or(|m| m[i * c + j]);
            let mut max = f64::NEG_INFINITY;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) && v > max {
                    max = v;
                }
            }
            if max == f64::NEG_INFINITY {
                return Err(Error::Input(format!(
                    "softmax row {i} has no unmasked entries"
                )));
            }
            let o = &mut out[i * c..(i + 1) * c];
            let mut total = 0.0;
            for (j, &v) in row.iter().enumerate() {
                if keep(j) {
                    let e = libm::exp((v - max) / beta);
                    o[j] = e;
                    total += e;
                }
            }
            for v in o.iter_mut() {
                *v /= total;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(Tensor::matrix(r, c, out)?, Op::Softmax { x, beta }, needs))
    }

    /// Concatenates along `axis`; all other axes must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::Parameter("concat of zero tensors".into()))?;
        let base = self.shape(first).to_vec();
        if axis >= base.len() {
            return Err(Error::Parameter(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        let mut axis_len = 0;
        for &v in inputs {
            let s = self.shape(v);
            let compatible = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(Error::dim("concat", &base, s));
            }
            axis_len += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let mut shape = base.clone();
        shape[axis] = axis_len;
        let total: usize = shape.iter().product();
        let mut data = Vec::with_capacity(total);
        for o in 0..outer {
            for &v in inputs {
                let t = self.value(v);
                let chunk = t.len() / outer;
                data.extend_from_slice(&t.data()[o * chunk..(o + 1) * chunk]);
            }
        }
        let needs = inputs.iter().any(|&v| self.needs(v));
        Ok(self.push(
            Tensor::new(shape, data)?,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            needs,
        ))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims("slice_cols", x)?;
        if start >= end || end > c {
            return Err(Error::Parameter(format!(
                "column slice {start}..{end} of width {c}"
            )));
        }
        let w = end - start;
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(r * w);
        for i in 0..r {
            data.extend_from_slice(&src[i * c + start..i * c + end]);
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::matrix(r, w, data)?,
            Op::SliceCols { x, start },
            needs,
        ))
    }

    /// Selects rows of a matrix; `None` produces a zero row. Gradients
    /// scatter-add back into the selected rows.
    pub fn gather_rows(&mut self, x: Var, index: Vec<Option<usize>>) -> Result<Var> {
        let (r, c) = self.matrix_dims("gather_rows", x)?;
        if index.is_empty() {
            return Err(Error::Parameter("gather of zero rows".into()));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(index.len() * c);
        for (pos, idx) in index.iter().enumerate() {
            match *idx {
                Some(i) if i < r => data.extend_from_slice(&src[i * c..(i + 1) * c]),
                Some(i) => {
                    return Err(Error::Data(format!(
                        "row index {i} at position {pos} out of range for {r} rows"
                    )))
                }
                None => data.extend(core::iter::repeat_n(0.0, c)),
            }
        }
        let needs = self.needs(x);
        let value = Tensor::matrix(index.len(), c, data)?;
        Ok(self.push(value, Op::GatherRows { x, index }, needs))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: Var,
        rate: f64,
        rng: &mut R,
        training: bool,
    ) -> Result<Var> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Parameter(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    0.0
                } else {
                    keep
                }
            })
            .collect();
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Dropout { x, mask }, needs))
    }

    /// Non-overlapping max pooling over time.
    ///
    /// `x` stacks sequences of `seq_len` rows each. Every sequence is cut
    /// into windows of `window` rows (the last one may be shorter) and each
    /// column keeps its maximum; ties resolve to the earliest row.
    pub fn max_pool_rows(&mut self, x: Var, seq_len: usize, window: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims("max_pool", x)?;
        if window == 0 || seq_len == 0 {
            return Err(Error::Parameter(
                "pool window and sequence length must be positive".into(),
            ));
        }
        if r % seq_len != 0 {
            return Err(Error::dim("max_pool", self.shape(x), &[seq_len]));
        }
        let batch = r / seq_len;
        let pooled = seq_len.div_ceil(window);
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(batch * pooled * c);
        let mut argmax = Vec::with_capacity(batch * pooled * c);
        for b in 0..batch {
            for j in 0..pooled {
                let lo = b * seq_len + j * window;
                let hi = b * seq_len + ((j + 1) * window).min(seq_len);
                for ch in 0..c {
                    let mut best = lo * c + ch;
                    for t in lo + 1..hi {
                        let k = t * c + ch;
                        if src[k] > src[best] {
                            best = k;
                        }
                    }
                    data.push(src[best]);
                    argmax.push(best);
                }
            }
        }
        let needs = self.needs(x);
        let value = Tensor::matrix(batch * pooled, c, data)?;
        Ok(self.push(
            value,
            Op::MaxPool {
                x,
                argmax,
                seq_len,
                window,
            },
            needs,
        ))
    }

    /// Multiplies row `i` of `x` by the scalar `s[i]`; `s` has one entry per row.
    pub fn scale_rows(&mut self, x: Var, s: Var) -> Result<Var> {
        let (r, c) = self.matrix_dims("scale_rows", x)?;
        if self.value(s).len() != r {
            return Err(Error::dim("scale_rows", self.shape(x), self.shape(s)));
        }
        let sv = self.value(s).data();
        let mut data = self.value(x).data().to_vec();
        for (row, &k) in data.chunks_mut(c).zip(sv) {
            for v in row {
                *v *= k;
            }
        }
        let needs = self.needs(x) || self.needs(s);
        Ok(self.push(Tensor::matrix(r, c, data)?, Op::ScaleRows { x, s }, needs))
    }

    /// Sums consecutive groups of `group` rows: `[B·group × C] → [B × C]`.
    pub fn sum_row_groups(&mut self, x: Var, group: usize) -> Result<Var> {
        let (r, c) = self.matrix_dims("sum_row_groups", x)?;
        if group == 0 || r % group != 0 {
            return Err(Error::dim("sum_row_groups", self.shape(x), &[group]));
        }
        let src = self.value(x).data();
        let mut data = vec![0.0; (r / group) * c];
        for (i, row) in src.chunks(c).enumerate() {
            let out = &mut data[(i / group) * c..(i / group + 1) * c];
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        let needs = self.needs(x);
        Ok(self.push(
            Tensor::matrix(r / group, c, data)?,
            Op::SumRowGroups { x, group },
            needs,
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(total), Op::Sum(x), needs)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshaped(shape)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Reshape(x), needs))
    }

    /// Mean negative log-likelihood of `labels` under row distributions `probs`,
    /// with probabilities floored at [`PROB_FLOOR`].
    pub fn nll_loss(&mut self, probs: Var, labels: &[usize]) -> Result<Var> {
        let (b, c) = self.matrix_dims("nll_loss", probs)?;
        if labels.len() != b {
            return Err(Error::dim("nll_loss", self.shape(probs), &[labels.len()]));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= c) {
            return Err(Error::Data(format!("label {l} at row {i} outside 0..{c}")));
        }
        let p = self.value(probs);
        let total: f64 = labels
            .iter()
            .enumerate()
            .map(|(i, &l)| -libm::log(p.get(i, l).max(PROB_FLOOR)))
            .sum();
        let needs = self.needs(probs);
        Ok(self.push(
            Tensor::scalar(total / b as f64),
            Op::Nll {
                probs,
                labels: labels.to_vec(),
            },
            needs,
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            if node.needs_grad {
                self.backprop_node(node, &g, &mut grads);
            }
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn backprop_node(&self, node: &Node, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let out = node.value.data();
        match &node.op {
            Op::Leaf | Op::Constant => {}
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                if self.needs(*a) {
                    let ga = self.grad_buf(grads, *a);
                    gemm_nt_acc(g, self.value(*b).data(), ga, m, k, n);
                }
                if self.needs(*b) {
                    let gb = self.grad_buf(grads, *b);
                    gemm_tn_acc(self.value(*a).data(), g, gb, m, k, n);
                }
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, g.iter().copied());
                self.acc(grads, *b, g.iter().copied());
            }
            Op::Sub(a, b) => {
                self.acc(grads, *a, g.iter().copied());
                self.acc(grads, *b, g.iter().map(|v| -v));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.acc(grads, *a, g.iter().zip(bv).map(|(g, y)| g * y));
                self.acc(grads, *b, g.iter().zip(av).map(|(g, x)| g * x));
            }
            Op::Affine { x, scale } => self.acc(grads, *x, g.iter().map(|v| v * scale)),
            Op::AddRow { x, bias } => {
                self.acc(grads, *x, g.iter().copied());
                if self.needs(*bias) {
                    let c = self.value(*bias).len();
                    let gb = self.grad_buf(grads, *bias);
                    for row in g.chunks(c) {
                        for (o, v) in gb.iter_mut().zip(row) {
                            *o += v;
                        }
                    }
                }
            }
            Op::Act { x, kind } => self.acc(
                grads,
                *x,
                g.iter()
                    .zip(out)
                    .map(|(g, &y)| g * kind.derivative_from_output(y)),
            ),
            Op::Softmax { x, beta } => {
                let c = node.value.cols();
                let mut dx = vec![0.0; g.len()];
                for ((gr, yr), dr) in g.chunks(c).zip(out.chunks(c)).zip(dx.chunks_mut(c)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((d, &gv), &y) in dr.iter_mut().zip(gr).zip(yr) {
                        *d = y * (gv - dot) / beta;
                    }
                }
                self.acc(grads, *x, dx.into_iter());
            }
            Op::Concat { inputs, axis } => {
                let outer: usize = node.value.shape()[..*axis].iter().product();
                let row = g.len() / outer;
                let mut offset = 0;
                for &v in inputs {
                    let chunk = self.value(v).len() / outer;
                    if self.needs(v) {
                        let gv = self.grad_buf(grads, v);
                        for o in 0..outer {
                            let src = &g[o * row + offset..o * row + offset + chunk];
                            for (d, s) in gv[o * chunk..(o + 1) * chunk].iter_mut().zip(src) {
                                *d += s;
                            }
                        }
                    }
                    offset += chunk;
                }
            }
            Op::SliceCols { x, start } => {
                let w = node.value.cols();
                let c = self.value(*x).cols();
                let gx = self.grad_buf(grads, *x);
                for (i, row) in g.chunks(w).enumerate() {
                    for (d, s) in gx[i * c + start..i * c + start + w].iter_mut().zip(row) {
                        *d += s;
                    }
                }
            }
            Op::GatherRows { x, index } => {
                let c = node.value.cols();
                let gx = self.grad_buf(grads, *x);
                for (row, idx) in g.chunks(c).zip(index) {
                    if let Some(i) = *idx {
                        for (d, s) in gx[i * c..(i + 1) * c].iter_mut().zip(row) {
                            *d += s;
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => self.acc(grads, *x, g.iter().zip(mask).map(|(g, m)| g * m)),
            Op::MaxPool { x, argmax, .. } => {
                let gx = self.grad_buf(grads, *x);
                for (&src, &gv) in argmax.iter().zip(g) {
                    gx[src] += gv;
                }
            }
            Op::ScaleRows { x, s } => {
                let c = node.value.cols();
                let xv = self.value(*x).data();
                let sv = self.value(*s).data();
                if self.needs(*x) {
                    let gx = self.grad_buf(grads, *x);
                    for ((d, gr), &k) in gx.chunks_mut(c).zip(g.chunks(c)).zip(sv) {
                        for (dv, gv) in d.iter_mut().zip(gr) {
                            *dv += gv * k;
                        }
                    }
                }
                if self.needs(*s) {
                    let gs = self.grad_buf(grads, *s);
                    for ((d, gr), xr) in gs.iter_mut().zip(g.chunks(c)).zip(xv.chunks(c)) {
                        *d += gr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                    }
                }
            }
            Op::SumRowGroups { x, group } => {
                let c = node.value.cols();
                let gx = self.grad_buf(grads, *x);
                for (i, d) in gx.chunks_mut(c).enumerate() {
                    let src = &g[(i / group) * c..(i / group + 1) * c];
                    for (dv, s) in d.iter_mut().zip(src) {
                        *dv += s;
                    }
                }
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.acc(grads, *x, core::iter::repeat_n(g[0], n));
            }
            Op::Reshape(x) => self.acc(grads, *x, g.iter().copied()),
            Op::Nll { probs, labels } => {
                let p = self.value(*probs);
                let c = p.cols();
                let b = labels.len() as f64;
                let gp = self.grad_buf(grads, *probs);
                for (i, &l) in labels.iter().enumerate() {
                    let pv = p.get(i, l);
                    if pv > PROB_FLOOR {
                        gp[i * c + l] -= g[0] / (b * pv);
                    }
                }
            }
        }
    }

    fn grad_buf<'g>(&self, grads: &'g mut [Option<Vec<f64>>], v: Var) -> &'g mut Vec<f64> {
        let n = self.value(v).len();
        grads[v.0].get_or_insert_with(|| vec![0.0; n])
    }

    fn acc(&self, grads: &mut [Option<Vec<f64>>], v: Var, src: impl Iterator<Item = f64>) {
        if !self.needs(v) {
            return;
        }
        let buf = self.grad_buf(grads, v);
        for (d, s) in buf.iter_mut().zip(src) {
            *d += s;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn m(rows: &[&[f64]]) -> Tensor {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn matmul_identity_and_zero() {
        let mut t = Tape::new();
        let i = t.constant(m(&[&[1.0, 0.0], &[0.0, 1.0]]));
        let x = t.constant(m(&[&[3.0], &[4.0]]));
        let y = t.matmul(i, x).unwrap();
        assert_eq!(t.value(y).data(), &[3.0, 4.0]);

        let a = t.constant(m(&[&[1.0, 2.0]]));
        let z = t.constant(m(&[&[0.0], &[0.0]]));
        let y = t.matmul(a, z).unwrap();
        assert_eq!(t.value(y).data(), &[0.0]);
    }

    #[test]
    fn matmul_shape_error_names_both_shapes() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3]));
        let b = t.constant(Tensor::zeros(&[2, 3]));
        let err = t.matmul(a, b).unwrap_err();
        let msg = alloc::string::ToString::to_string(&err);
        assert!(msg.contains("[2, 3]"), "{msg}");
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn activations() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::new(vec![2], vec![-1.0, 2.0]).unwrap());
        let r = t.activation(x, Activation::Relu);
        assert_eq!(t.value(r).data(), &[0.0, 2.0]);
        assert_eq!(Activation::Tanh.apply(0.0), 0.0);

        let z = t.leaf(Tensor::scalar(0.0));
        let s = t.activation(z, Activation::Sigmoid);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(&t, z).data(), &[0.25]);
    }

    #[test]
    fn kink_margin_sees_relu_inputs_and_pool_gaps() {
        let mut t = Tape::new();
        assert_eq!(t.kink_margin(), f64::INFINITY);
        let x = t.leaf(m(&[&[0.5, -0.25], &[0.75, 2.0], &[0.7, 2.0]]));
        t.activation(x, Activation::Relu);
        assert_eq!(t.kink_margin(), 0.25);
        // column 0 winner 0.75 vs 0.7; column 1 is an exact tie and ignored
        let y = t.leaf(m(&[&[0.75, 2.0], &[0.7, 2.0]]));
        t.max_pool_rows(y, 2, 2).unwrap();
        assert!((t.kink_margin() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(0.0));
        let r = t.activation(x, Activation::Relu);
        let g = t.backward(r).unwrap();
        assert_eq!(g.wrt(&t, x).data(), &[0.0]);
    }

    #[test]
    fn softmax_examples() {
        let mut t = Tape::new();
        let x = t.constant(m(&[&[0.0, 0.0, 0.0], &[1000.0, 0.0, -1000.0]]));
        let s = t.softmax_rows(x, 1.0).unwrap();
        let v = t.value(s);
        for j in 0..3 {
            assert!((v.get(0, j) - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!((v.get(1, 0) - 1.0).abs() < 1e-12);
        assert!(v.get(1, 1) < 1e-12);

        let x = t.constant(m(&[&[1.0, 2.0, 3.0]]));
        let s = t.softmax_rows(x, 2.0).unwrap();
        let denom: f64 = [1.0f64, 2.0, 3.0].iter().map(|v| libm::exp(v / 2.0)).sum();
        for (j, v) in [1.0f64, 2.0, 3.0].iter().enumerate() {
            assert!((t.value(s).get(0, j) - libm::exp(v / 2.0) / denom).abs() < 1e-12);
        }
        assert!(matches!(t.softmax_rows(x, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(t.softmax_rows(x, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn masked_softmax_zeroes_masked_entries() {
        let mut t = Tape::new();
        let x = t.leaf(m(&[&[5.0, 1.0, 2.0]]));
        let s = t.masked_softmax_rows(x, 1.0, &[false, true, true]).unwrap();
        assert_eq!(t.value(s).get(0, 0), 0.0);
        let total: f64 = t.value(s).data().iter().sum();
        assert!((total - 1.0).abs() < 1e-15);
        assert!(matches!(
            t.masked_softmax_rows(x, 1.0, &[false; 3]),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn concat_examples() {
        let mut t = Tape::new();
        let a = t.constant(m(&[&[1.0]]));
        let b = t.constant(m(&[&[2.0]]));
        let c = t.concat(&[a, b], 1).unwrap();
        assert_eq!(t.value(c).shape(), &[1, 2]);
        assert_eq!(t.value(c).data(), &[1.0, 2.0]);

        let z = t.constant(Tensor::zeros(&[2, 3]));
        let c = t.concat(&[z, z, z, z], 1).unwrap();
        assert_eq!(t.value(c).shape(), &[2, 12]);
        assert!(t.value(c).data().iter().all(|&v| v == 0.0));

        let w = t.constant(Tensor::zeros(&[3, 3]));
        assert!(matches!(t.concat(&[z, w], 1), Err(Error::Dimension { .. })));
        assert!(t.concat(&[z, w], 0).is_ok());
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(&[100_000], 1.0));
        let same = t.dropout(x, 0.0, &mut rng, true).unwrap();
        assert_eq!(t.value(same), t.value(x));
        let inf = t.dropout(x, 0.9, &mut rng, false).unwrap();
        assert_eq!(t.value(inf), t.value(x));

        let d = t.dropout(x, 0.25, &mut rng, true).unwrap();
        let zeros = t.value(d).data().iter().filter(|&&v| v == 0.0).count();
        let frac = zeros as f64 / 100_000.0;
        assert!((frac - 0.25).abs() < 0.01, "{frac}");
        assert!(t
            .value(d)
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.0 / 0.75).abs() < 1e-15));

        assert!(t.dropout(x, 1.0, &mut rng, true).is_err());
        assert!(t.dropout(x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn backward_of_sum_is_ones_and_of_zero_scaling_is_zero() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(&[2, 3], 0.7));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert!(g.wrt(&t, x).data().iter().all(|&v| v == 1.0));

        let z = t.affine(x, 0.0, 0.0);
        let s = t.sum(z);
        let g = t.backward(s).unwrap();
        assert!(g.wrt(&t, x).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(&[2]));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn unreached_leaf_gets_zero_gradient() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::filled(&[3], 2.0));
        let unused = t.leaf(Tensor::filled(&[2], 5.0));
        let s = t.sum(x);
        let g = t.backward(s).unwrap();
        assert!(!g.reached(unused));
        assert_eq!(g.wrt(&t, unused).data(), &[0.0, 0.0]);
    }

    #[test]
    fn max_pool_examples() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::matrix(4, 1, alloc::vec![1.0, 5.0, 2.0, 0.0]).unwrap());
        let p = t.max_pool_rows(x, 4, 2).unwrap();
        assert_eq!(t.value(p).data(), &[5.0, 2.0]);
        let id = t.max_pool_rows(x, 4, 1).unwrap();
        assert_eq!(t.value(id), t.value(x));

        let tie = t.leaf(Tensor::matrix(2, 1, alloc::vec![3.0, 3.0]).unwrap());
        let p = t.max_pool_rows(tie, 2, 2).unwrap();
        let s = t.sum(p);
        let g = t.backward(s).unwrap();
        assert_eq!(g.wrt(&t, tie).data(), &[1.0, 0.0]);

        // a partial final window is kept
        let y = t.leaf(Tensor::matrix(5, 1, alloc::vec![1.0, 2.0, 3.0, 4.0, 9.0]).unwrap());
        let p = t.max_pool_rows(y, 5, 2).unwrap();
        assert_eq!(t.value(p).data(), &[2.0, 4.0, 9.0]);
    }

    #[test]
    fn nll_examples() {
        let mut t = Tape::new();
        let u = t.constant(m(&[&[0.5, 0.5]]));
        let l = t.nll_loss(u, &[1]).unwrap();
        assert!((t.value(l).data()[0] - core::f64::consts::LN_2).abs() < 1e-15);

        let one = t.constant(m(&[&[1.0, 0.0]]));
        let l = t.nll_loss(one, &[0]).unwrap();
        assert_eq!(t.value(l).data()[0], 0.0);

        let p = t.constant(m(&[&[0.7, 0.3]]));
        let l = t.nll_loss(p, &[0]).unwrap();
        assert!((t.value(l).data()[0] - 0.356_674_943_938_732_4).abs() < 1e-12);

        assert!(matches!(t.nll_loss(p, &[2]), Err(Error::Data(_))));
        // floor keeps the loss finite
        let l = t.nll_loss(one, &[1]).unwrap();
        assert!(t.value(l).data()[0].is_finite());
    }
}
