//! Tape-based reverse-mode autodiff over dense tensors.
//!
//! Every operation appends one node to an arena; node ids are handed out in
//! execution order, so reverse id order is already a topological order and
//! the backward pass is a single reverse sweep. Gradients accumulate
//! additively, which makes fan-out (one tensor feeding several ops) correct
//! without bookkeeping.
//!
//! Op set: matmul, conv2d (stride/zero-pad, cross-correlation), relu, add,
//! mul, scale, exp, clamp-log, row-wise log-softmax, row-sum, per-row pick,
//! global sum, bias-add, reshape. Everything else in the crate is composed
//! from these.

use crate::error::Error;
use crate::numeric::{self, Real};
use crate::tensor::Tensor;
use crate::Result;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Matmul(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        stride: usize,
        pad: usize,
    },
    Relu(Var),
    Add(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Exp(Var),
    ClampLog(Var, T),
    LogSoftmax(Var),
    RowSum(Var),
    Pick(Var, Vec<usize>),
    SumAll(Var),
    BiasAdd(Var, Var),
    Reshape(Var),
}

struct Node<T> {
    tensor: Tensor<T>,
    op: Op<T>,
}

/// Arena of computation nodes; owns every intermediate value of a forward
/// pass and, after [`Tape::backward`], the gradients.
pub struct Tape<T: Real> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as a leaf node. The tensor's `requires_grad` flag
    /// decides whether backward writes a gradient for it.
    pub fn leaf(&mut self, tensor: Tensor<T>) -> Var {
        let needs = tensor.requires_grad();
        self.push(tensor, Op::Leaf, needs)
    }

    /// Inserts a non-trainable constant.
    pub fn constant(&mut self, data: Vec<T>, shape: impl Into<Vec<usize>>) -> Result<Var> {
        Ok(self.leaf(Tensor::new(data, shape)?))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].tensor
    }

    /// Gradient of the most recent backward pass(es) with respect to `v`,
    /// when `v` requires gradients and is reachable from the loss.
    pub fn grad(&self, v: Var) -> Option<&[T]> {
        self.nodes[v.0].tensor.grad()
    }

    fn push(&mut self, mut tensor: Tensor<T>, op: Op<T>, needs: bool) -> Var {
        tensor.set_requires_grad(needs);
        // Inputs of a recorded op never become untracked.
        let op = if needs { op } else { Op::Leaf };
        self.nodes.push(Node { tensor, op });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].tensor.requires_grad()
    }

    // ── forward ops ──────────────────────────────────────────────────────

    /// `[m,k] x [k,n] -> [m,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.rank() != 2 || tb.rank() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shapes("matmul", ta.shape(), tb.shape()));
        }
        let (m, k) = (ta.shape()[0], ta.shape()[1]);
        let n = tb.shape()[1];
        let mut out = vec![T::zero(); m * n];
        let (da, db) = (ta.data(), tb.data());
        for i in 0..m {
            let out_row = &mut out[i * n..(i + 1) * n];
            for p in 0..k {
                let av = da[i * k + p];
                let b_row = &db[p * n..(p + 1) * n];
                for (o, &bv) in out_row.iter_mut().zip(b_row) {
                    *o += av * bv;
                }
            }
        }
        let needs = self.needs(a) || self.needs(b);
        let t = Tensor::new(out, [m, n])?;
        Ok(self.push(t, Op::Matmul(a, b), needs))
    }

    /// Batched 2-D cross-correlation: input `[N,C,H,W]`, kernel `[O,C,KH,KW]`,
    /// zero padding `pad` on all four sides, equal stride in both dimensions.
    /// `(H + 2*pad - KH)` must be a non-negative multiple of `stride` (same
    /// for width); a fractional output size is a configuration error, never a
    /// silent floor.
    pub fn conv2d(&mut self, input: Var, kernel: Var, stride: usize, pad: usize) -> Result<Var> {
        if stride == 0 {
            return Err(Error::config("conv2d stride must be >= 1"));
        }
        let (ti, tk) = (self.value(input), self.value(kernel));
        if ti.rank() != 4 || tk.rank() != 4 || ti.shape()[1] != tk.shape()[1] {
            return Err(Error::shapes("conv2d", ti.shape(), tk.shape()));
        }
        let (n, c, h, w) = (ti.shape()[0], ti.shape()[1], ti.shape()[2], ti.shape()[3]);
        let (o, kh, kw) = (tk.shape()[0], tk.shape()[2], tk.shape()[3]);
        let span_h = (h + 2 * pad).checked_sub(kh);
        let span_w = (w + 2 * pad).checked_sub(kw);
        let (span_h, span_w) = match (span_h, span_w) {
            (Some(a), Some(b)) if a % stride == 0 && b % stride == 0 => (a, b),
            _ => {
                return Err(Error::config(format!(
                    "conv2d output size is not a positive integer: input {h}x{w}, \
                     kernel {kh}x{kw}, stride {stride}, pad {pad}"
                )))
            }
        };
        let (oh, ow) = (span_h / stride + 1, span_w / stride + 1);
        let (di, dk) = (ti.data(), tk.data());
        let mut out = vec![T::zero(); n * o * oh * ow];
        for b in 0..n {
            for oc in 0..o {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = T::zero();
                        for ic in 0..c {
                            for u in 0..kh {
                                let ih = (i * stride + u) as isize - pad as isize;
                                if ih < 0 || ih >= h as isize {
                                    continue;
                                }
                                for v in 0..kw {
                                    let iw = (j * stride + v) as isize - pad as isize;
                                    if iw < 0 || iw >= w as isize {
                                        continue;
                                    }
                                    let x = di[((b * c + ic) * h + ih as usize) * w + iw as usize];
                                    let kv = dk[((oc * c + ic) * kh + u) * kw + v];
                                    acc += x * kv;
                                }
                            }
                        }
                        out[((b * o + oc) * oh + i) * ow + j] = acc;
                    }
                }
            }
        }
        let needs = self.needs(input) || self.needs(kernel);
        let t = Tensor::new(out, [n, o, oh, ow])?;
        Ok(self.push(
            t,
            Op::Conv2d {
                input,
                kernel,
                stride,
                pad,
            },
            needs,
        ))
    }

    /// Elementwise `max(x, 0)`. The gradient at exactly 0 is 0.
    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let data = tx
            .data()
            .iter()
            .map(|&v| if v > T::zero() { v } else { T::zero() })
            .collect();
        let t = Tensor::new(data, tx.shape())?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Relu(x), needs))
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shapes("add", ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x + y)
            .collect();
        let t = Tensor::new(data, ta.shape())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Add(a, b), needs))
    }

    /// Elementwise product of two same-shape tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shapes("mul", ta.shape(), tb.shape()));
        }
        let data = ta
            .data()
            .iter()
            .zip(tb.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let t = Tensor::new(data, ta.shape())?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(t, Op::Mul(a, b), needs))
    }

    /// Multiplies every element by the constant `c`.
    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v * c).collect();
        let t = Tensor::new(data, tx.shape())?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Scale(x, c), needs))
    }

    /// Elementwise `exp`.
    pub fn exp(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let data = tx.data().iter().map(|&v| v.exp()).collect();
        let t = Tensor::new(data, tx.shape())?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Exp(x), needs))
    }

    /// `ln(clamp(x, eps, 1))`: the probability-side log used by every
    /// cross-entropy in the crate. Outside `[eps, 1]` the clamp saturates and
    /// the gradient is 0.
    pub fn clamp_log(&mut self, x: Var, eps: T) -> Result<Var> {
        if !(eps > T::zero() && eps < T::one()) {
            return Err(Error::config(format!(
                "clamp_log eps must lie in (0, 1), got {eps}"
            )));
        }
        let tx = self.value(x);
        let data = tx
            .data()
            .iter()
            .map(|&v| numeric::clamp_prob(v, eps).ln())
            .collect();
        let t = Tensor::new(data, tx.shape())?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::ClampLog(x, eps), needs))
    }

    /// Row-wise shift-stabilized log-softmax of a `[m,n]` tensor. Rejects
    /// non-finite inputs.
    pub fn log_softmax(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::contract(format!(
                "log_softmax requires rank 2, shape is {:?}",
                tx.shape()
            )));
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let mut data = vec![T::zero(); m * n];
        for i in 0..m {
            let row = &tx.data()[i * n..(i + 1) * n];
            numeric::log_softmax_row(row, &mut data[i * n..(i + 1) * n])?;
        }
        let t = Tensor::new(data, [m, n])?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::LogSoftmax(x), needs))
    }

    /// Sums each row of a `[m,n]` tensor into a `[m]` vector.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::contract(format!(
                "row_sum requires rank 2, shape is {:?}",
                tx.shape()
            )));
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        let data = (0..m)
            .map(|i| tx.data()[i * n..(i + 1) * n].iter().copied().sum())
            .collect();
        let t = Tensor::new(data, [m])?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::RowSum(x), needs))
    }

    /// Gathers one element per row: `out[i] = x[i, index[i]]`.
    pub fn pick(&mut self, x: Var, indices: &[usize]) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() != 2 {
            return Err(Error::contract(format!(
                "pick requires rank 2, shape is {:?}",
                tx.shape()
            )));
        }
        let (m, n) = (tx.shape()[0], tx.shape()[1]);
        if indices.len() != m {
            return Err(Error::contract(format!(
                "pick got {} indices for {m} rows",
                indices.len()
            )));
        }
        let mut data = Vec::with_capacity(m);
        for (i, &j) in indices.iter().enumerate() {
            if j >= n {
                return Err(Error::contract(format!(
                    "pick index {j} out of range for {n} columns (row {i})"
                )));
            }
            data.push(tx.data()[i * n + j]);
        }
        let t = Tensor::new(data, [m])?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Pick(x, indices.into()), needs))
    }

    /// Sums every element into a rank-0 scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let total: T = tx.data().iter().copied().sum();
        let t = Tensor::scalar(total);
        let needs = self.needs(x);
        Ok(self.push(t, Op::SumAll(x), needs))
    }

    /// Adds a bias vector: `[m,n] + [n]` (per column) or `[N,C,H,W] + [C]`
    /// (per channel).
    pub fn bias_add(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        if tb.rank() != 1 {
            return Err(Error::shapes("bias_add", tx.shape(), tb.shape()));
        }
        let data = match tx.rank() {
            2 if tx.shape()[1] == tb.shape()[0] => {
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut out = Vec::with_capacity(m * n);
                for i in 0..m {
                    for j in 0..n {
                        out.push(tx.data()[i * n + j] + tb.data()[j]);
                    }
                }
                out
            }
            4 if tx.shape()[1] == tb.shape()[0] => {
                let (n, c, h, w) = (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
                let mut out = Vec::with_capacity(n * c * h * w);
                for b in 0..n {
                    for ch in 0..c {
                        let bias_v = tb.data()[ch];
                        let base = (b * c + ch) * h * w;
                        for p in 0..h * w {
                            out.push(tx.data()[base + p] + bias_v);
                        }
                    }
                }
                out
            }
            _ => return Err(Error::shapes("bias_add", tx.shape(), tb.shape())),
        };
        let t = Tensor::new(data, tx.shape())?;
        let needs = self.needs(x) || self.needs(bias);
        Ok(self.push(t, Op::BiasAdd(x, bias), needs))
    }

    /// Reinterprets `x` under a new shape with the same element count.
    pub fn reshape(&mut self, x: Var, shape: impl Into<Vec<usize>>) -> Result<Var> {
        let shape = shape.into();
        let tx = self.value(x);
        let numel: usize = shape.iter().product();
        if numel != tx.numel() {
            return Err(Error::shapes("reshape", tx.shape(), &shape));
        }
        let t = Tensor::new(tx.data().into(), shape)?;
        let needs = self.needs(x);
        Ok(self.push(t, Op::Reshape(x), needs))
    }

    // ── backward ─────────────────────────────────────────────────────────

    /// Reverse sweep from a scalar loss. Gradients of every reachable
    /// gradient-tracked tensor accumulate additively into the node tensors;
    /// calling backward twice doubles them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::contract(format!(
                "backward requires a scalar loss, shape is {:?}",
                self.value(loss).shape()
            )));
        }
        if !self.needs(loss) {
            return Ok(());
        }
        let mut adj: Vec<Option<Vec<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[loss.0] = Some(vec![T::one()]);
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if self.nodes[id].tensor.requires_grad() {
                self.nodes[id].tensor.accumulate_grad(&g);
            }
            self.propagate(id, &g, &mut adj);
        }
        Ok(())
    }

    fn adj_add(&self, adj: &mut [Option<Vec<T>>], v: Var, delta: &[T]) {
        if !self.needs(v) {
            return;
        }
        let slot = adj[v.0].get_or_insert_with(|| vec![T::zero(); delta.len()]);
        for (s, &d) in slot.iter_mut().zip(delta) {
            *s += d;
        }
    }

    fn propagate(&self, id: usize, g: &[T], adj: &mut [Option<Vec<T>>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                let (da, db) = (ta.data(), tb.data());
                if self.needs(*a) {
                    // dA = G x B^T
                    let mut ga = vec![T::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let mut acc = T::zero();
                            let b_row = &db[p * n..(p + 1) * n];
                            let g_row = &g[i * n..(i + 1) * n];
                            for (gv, bv) in g_row.iter().zip(b_row) {
                                acc += *gv * *bv;
                            }
                            ga[i * k + p] = acc;
                        }
                    }
                    self.adj_add(adj, *a, &ga);
                }
                if self.needs(*b) {
                    // dB = A^T x G
                    let mut gb = vec![T::zero(); k * n];
                    for i in 0..m {
                        for p in 0..k {
                            let av = da[i * k + p];
                            let g_row = &g[i * n..(i + 1) * n];
                            let gb_row = &mut gb[p * n..(p + 1) * n];
                            for (o, gv) in gb_row.iter_mut().zip(g_row) {
                                *o += av * *gv;
                            }
                        }
                    }
                    self.adj_add(adj, *b, &gb);
                }
            }
            Op::Conv2d {
                input,
                kernel,
                stride,
                pad,
            } => {
                let (ti, tk) = (self.value(*input), self.value(*kernel));
                let (n, c, h, w) = (ti.shape()[0], ti.shape()[1], ti.shape()[2], ti.shape()[3]);
                let (o, kh, kw) = (tk.shape()[0], tk.shape()[2], tk.shape()[3]);
                let out_shape = self.nodes[id].tensor.shape();
                let (oh, ow) = (out_shape[2], out_shape[3]);
                let (di, dk) = (ti.data(), tk.data());
                let mut gi = vec![T::zero(); di.len()];
                let mut gk = vec![T::zero(); dk.len()];
                for b in 0..n {
                    for oc in 0..o {
                        for i in 0..oh {
                            for j in 0..ow {
                                let gv = g[((b * o + oc) * oh + i) * ow + j];
                                if gv == T::zero() {
                                    continue;
                                }
                                for ic in 0..c {
                                    for u in 0..kh {
                                        let ih = (i * stride + u) as isize - *pad as isize;
                                        if ih < 0 || ih >= h as isize {
                                            continue;
                                        }
                                        for v in 0..kw {
                                            let iw = (j * stride + v) as isize - *pad as isize;
                                            if iw < 0 || iw >= w as isize {
                                                continue;
                                            }
                                            let xi =
                                                ((b * c + ic) * h + ih as usize) * w + iw as usize;
                                            let ki = ((oc * c + ic) * kh + u) * kw + v;
                                            gk[ki] += gv * di[xi];
                                            gi[xi] += gv * dk[ki];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                self.adj_add(adj, *input, &gi);
                self.adj_add(adj, *kernel, &gk);
            }
            Op::Relu(x) => {
                let tx = self.value(*x);
                let gx: Vec<T> = tx
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
                    .collect();
                self.adj_add(adj, *x, &gx);
            }
            Op::Add(a, b) => {
                self.adj_add(adj, *a, g);
                self.adj_add(adj, *b, g);
            }
            Op::Mul(a, b) => {
                if self.needs(*a) {
                    let gb: Vec<T> = self
                        .value(*b)
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&v, &gv)| v * gv)
                        .collect();
                    self.adj_add(adj, *a, &gb);
                }
                if self.needs(*b) {
                    let ga: Vec<T> = self
                        .value(*a)
                        .data()
                        .iter()
                        .zip(g)
                        .map(|(&v, &gv)| v * gv)
                        .collect();
                    self.adj_add(adj, *b, &ga);
                }
            }
            Op::Scale(x, c) => {
                let gx: Vec<T> = g.iter().map(|&gv| gv * *c).collect();
                self.adj_add(adj, *x, &gx);
            }
            Op::Exp(x) => {
                let out = self.nodes[id].tensor.data();
                let gx: Vec<T> = out.iter().zip(g).map(|(&y, &gv)| y * gv).collect();
                self.adj_add(adj, *x, &gx);
            }
            Op::ClampLog(x, eps) => {
                let tx = self.value(*x);
                let gx: Vec<T> = tx
                    .data()
                    .iter()
                    .zip(g)
                    .map(|(&v, &gv)| {
                        if v >= *eps && v <= T::one() {
                            gv / v
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.adj_add(adj, *x, &gx);
            }
            Op::LogSoftmax(x) => {
                // d/dz_j = g_j - softmax(z)_j * sum_i g_i, per row.
                let out = self.nodes[id].tensor.data();
                let shape = self.nodes[id].tensor.shape();
                let (m, n) = (shape[0], shape[1]);
                let mut gx = vec![T::zero(); m * n];
                for i in 0..m {
                    let g_row = &g[i * n..(i + 1) * n];
                    let row_sum: T = g_row.iter().copied().sum();
                    for j in 0..n {
                        let p = out[i * n + j].exp();
                        gx[i * n + j] = g_row[j] - p * row_sum;
                    }
                }
                self.adj_add(adj, *x, &gx);
            }
            Op::RowSum(x) => {
                let tx = self.value(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = vec![T::zero(); m * n];
                for i in 0..m {
                    for j in 0..n {
                        gx[i * n + j] = g[i];
                    }
                }
                self.adj_add(adj, *x, &gx);
            }
            Op::Pick(x, indices) => {
                let tx = self.value(*x);
                let (m, n) = (tx.shape()[0], tx.shape()[1]);
                let mut gx = vec![T::zero(); m * n];
                for (i, &j) in indices.iter().enumerate() {
                    gx[i * n + j] = g[i];
                }
                self.adj_add(adj, *x, &gx);
            }
            Op::SumAll(x) => {
                let numel = self.value(*x).numel();
                let gx = vec![g[0]; numel];
                self.adj_add(adj, *x, &gx);
            }
            Op::BiasAdd(x, bias) => {
                self.adj_add(adj, *x, g);
                if self.needs(*bias) {
                    let tx = self.value(*x);
                    let blen = self.value(*bias).numel();
                    let mut gb = vec![T::zero(); blen];
                    match tx.rank() {
                        2 => {
                            let (m, n) = (tx.shape()[0], tx.shape()[1]);
                            for i in 0..m {
                                for j in 0..n {
                                    gb[j] += g[i * n + j];
                                }
                            }
                        }
                        _ => {
                            let (n, c, h, w) =
                                (tx.shape()[0], tx.shape()[1], tx.shape()[2], tx.shape()[3]);
                            for b in 0..n {
                                for ch in 0..c {
                                    let base = (b * c + ch) * h * w;
                                    for p in 0..h * w {
                                        gb[ch] += g[base + p];
                                    }
                                }
                            }
                        }
                    }
                    self.adj_add(adj, *bias, &gb);
                }
            }
            Op::Reshape(x) => {
                self.adj_add(adj, *x, g);
            }
        }
    }
}
