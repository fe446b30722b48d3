//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! Every operation on a [`Var`] appends one node to its [`Tape`]. Nodes are
//! stored in execution order, so a single reverse sweep over the node list
//! visits each node exactly once, after all of its consumers.
//!
//! Leaves created with `requires_grad = true` accumulate gradients across
//! repeated [`Var::backward`] calls; intermediate gradients are reset at the
//! start of each sweep.

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    MatMulT(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    AddRow(usize, usize),
    Scale(usize, f64),
    Sigmoid(usize),
    Tanh(usize),
    Relu(usize),
    SoftmaxRows(usize),
    LogSoftmaxRows(usize),
    LayerNorm {
        x: usize,
        gain: usize,
        bias: usize,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<usize>),
    SliceCols {
        x: usize,
        start: usize,
    },
    MeanRows(usize),
    Column {
        x: usize,
        col: usize,
    },
    Pick {
        x: usize,
        row: usize,
        col: usize,
    },
    Sum(usize),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Ordered record of executed operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: usize,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn leaf(&self, value: Tensor, requires_grad: bool) -> Var<'_> {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// A leaf that takes part in differentiation.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, true)
    }

    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.leaf(value, false)
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    /// Resets every gradient accumulator, leaves included.
    pub fn zero_grad(&self) {
        for node in self.nodes.borrow_mut().iter_mut() {
            if let Some(g) = node.grad.as_mut() {
                g.fill(0.0);
            }
        }
    }

    fn push(&self, value: Tensor, op: Op, requires_grad: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let grad = (requires_grad && matches!(op, Op::Leaf)).then(|| vec![0.0; value.len()]);
        nodes.push(Node {
            value,
            grad,
            requires_grad,
            op,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn requires(&self, ids: &[usize]) -> bool {
        let nodes = self.nodes.borrow();
        ids.iter().any(|&i| nodes[i].requires_grad)
    }

    fn backward_from(&self, root: usize) -> Result<()> {
        let mut nodes = self.nodes.borrow_mut();
        if nodes[root].value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                nodes[root].value.shape()
            )));
        }
        for node in nodes.iter_mut() {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        if !nodes[root].requires_grad {
            return Ok(());
        }
        seed_grad(&mut nodes[root], &[1.0]);

        for i in (0..=root).rev() {
            if !nodes[i].requires_grad || matches!(nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = nodes[i].grad.take() else {
                continue;
            };
            let contribs = adjoints(&nodes, i, &g);
            nodes[i].grad = Some(g);
            for (input, delta) in contribs {
                if nodes[input].requires_grad {
                    seed_grad(&mut nodes[input], &delta);
                }
            }
        }
        Ok(())
    }
}

fn seed_grad(node: &mut Node, delta: &[f64]) {
    match node.grad.as_mut() {
        Some(g) => g.iter_mut().zip(delta).for_each(|(a, b)| *a += b),
        None => node.grad = Some(delta.to_vec()),
    }
}

// ---------------------------------------------------------------------------
// Kernels

/// `a (m×k) · b (k×n)`
fn mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

/// `a (m×k) · bᵀ` where `b` is `n×k`.
fn mm_t(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &b[j * k..(j + 1) * k];
            out[i * n + j] = arow.iter().zip(brow).map(|(x, y)| x * y).sum();
        }
    }
    out
}

/// `aᵀ · b` where `a` is `m×k` and `b` is `m×n`.
fn t_mm(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let brow = &b[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == 0.0 {
                continue;
            }
            let orow = &mut out[p * n..(p + 1) * n];
            for (o, bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    out
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn softmax_row(row: &[f64], out: &mut [f64]) {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
}

/// Row-wise softmax with max subtraction, as a plain function.
pub fn softmax(values: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    softmax_row(values, &mut out);
    out
}

/// Row-wise log-softmax, as a plain function.
pub fn log_softmax(values: &[f64]) -> Vec<f64> {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
    values.iter().map(|x| x - lse).collect()
}

fn broadcast_len(a: &Tensor, b: &Tensor) -> bool {
    a.dims2() == b.dims2() || b.len() == 1 || a.len() == 1
}

fn elementwise(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let (shape, n) = if a.len() >= b.len() {
        (a.shape().to_vec(), a.len())
    } else {
        (b.shape().to_vec(), b.len())
    };
    let ad = a.data();
    let bd = b.data();
    let data = (0..n)
        .map(|i| f(ad[if ad.len() == 1 { 0 } else { i }], bd[if bd.len() == 1 { 0 } else { i }]))
        .collect();
    Tensor::new(shape, data).expect("broadcast shape")
}

/// Reduces an output-shaped gradient back onto an operand that may have been
/// broadcast from a single element.
fn unbroadcast(g: Vec<f64>, len: usize) -> Vec<f64> {
    if len == 1 && g.len() != 1 {
        vec![g.iter().sum()]
    } else {
        g
    }
}

fn adjoints(nodes: &[Node], i: usize, g: &[f64]) -> Vec<(usize, Vec<f64>)> {
    let out = &nodes[i].value;
    let val = |id: usize| &nodes[id].value;
    match &nodes[i].op {
        Op::Leaf => vec![],
        Op::MatMul(a, b) => {
            let (m, k) = val(*a).dims2();
            let n = val(*b).cols();
            vec![
                (*a, mm_t(g, m, n, val(*b).data(), k)),
                (*b, t_mm(val(*a).data(), m, k, g, n)),
            ]
        }
        Op::MatMulT(a, b) => {
            let (m, k) = val(*a).dims2();
            let n = val(*b).rows();
            vec![
                (*a, mm(g, m, n, val(*b).data(), k)),
                (*b, t_mm(g, m, n, val(*a).data(), k)),
            ]
        }
        Op::Add(a, b) => vec![
            (*a, unbroadcast(g.to_vec(), val(*a).len())),
            (*b, unbroadcast(g.to_vec(), val(*b).len())),
        ],
        Op::Sub(a, b) => vec![
            (*a, unbroadcast(g.to_vec(), val(*a).len())),
            (*b, unbroadcast(g.iter().map(|x| -x).collect(), val(*b).len())),
        ],
        Op::Mul(a, b) => {
            let av = val(*a);
            let bv = val(*b);
            let pick = |t: &Tensor, j: usize| t.data()[if t.len() == 1 { 0 } else { j }];
            let ga = (0..g.len()).map(|j| g[j] * pick(bv, j)).collect();
            let gb = (0..g.len()).map(|j| g[j] * pick(av, j)).collect();
            vec![
                (*a, unbroadcast(ga, av.len())),
                (*b, unbroadcast(gb, bv.len())),
            ]
        }
        Op::AddRow(x, bias) => {
            let n = out.cols();
            let mut gb = vec![0.0; n];
            for row in g.chunks(n) {
                gb.iter_mut().zip(row).for_each(|(a, b)| *a += b);
            }
            vec![(*x, g.to_vec()), (*bias, gb)]
        }
        Op::Scale(x, s) => vec![(*x, g.iter().map(|v| v * s).collect())],
        Op::Sigmoid(x) => {
            let d = out.data().iter().zip(g).map(|(s, gv)| s * (1.0 - s) * gv);
            vec![(*x, d.collect())]
        }
        Op::Tanh(x) => {
            let d = out.data().iter().zip(g).map(|(t, gv)| (1.0 - t * t) * gv);
            vec![(*x, d.collect())]
        }
        Op::Relu(x) => {
            let d = val(*x).data().iter().zip(g).map(|(v, gv)| if *v > 0.0 { *gv } else { 0.0 });
            vec![(*x, d.collect())]
        }
        Op::SoftmaxRows(x) => {
            let n = out.cols();
            let mut dx = vec![0.0; g.len()];
            for ((s, gr), d) in out.data().chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                let dot: f64 = s.iter().zip(gr).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    d[j] = s[j] * (gr[j] - dot);
                }
            }
            vec![(*x, dx)]
        }
        Op::LogSoftmaxRows(x) => {
            let n = out.cols();
            let mut dx = vec![0.0; g.len()];
            for ((y, gr), d) in out.data().chunks(n).zip(g.chunks(n)).zip(dx.chunks_mut(n)) {
                let gsum: f64 = gr.iter().sum();
                for j in 0..n {
                    d[j] = gr[j] - y[j].exp() * gsum;
                }
            }
            vec![(*x, dx)]
        }
        Op::LayerNorm {
            x,
            gain,
            bias,
            xhat,
            inv_std,
        } => {
            let n = out.cols();
            let gamma = val(*gain).data();
            let mut dgain = vec![0.0; n];
            let mut dbias = vec![0.0; n];
            let mut dx = vec![0.0; g.len()];
            for (r, (gr, xh)) in g.chunks(n).zip(xhat.chunks(n)).enumerate() {
                let mut sum_d = 0.0;
                let mut sum_dx = 0.0;
                for j in 0..n {
                    dgain[j] += gr[j] * xh[j];
                    dbias[j] += gr[j];
                    let dxh = gr[j] * gamma[j];
                    sum_d += dxh;
                    sum_dx += dxh * xh[j];
                }
                let inv = inv_std[r];
                let nf = n as f64;
                for j in 0..n {
                    let dxh = gr[j] * gamma[j];
                    dx[r * n + j] = inv / nf * (nf * dxh - sum_d - xh[j] * sum_dx);
                }
            }
            vec![(*x, dx), (*gain, dgain), (*bias, dbias)]
        }
        Op::ConcatCols(parts) => {
            let rows = out.rows();
            let total = out.cols();
            let mut offset = 0;
            let mut res = Vec::with_capacity(parts.len());
            for &p in parts {
                let w = val(p).cols();
                let mut d = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    d.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                }
                res.push((p, d));
                offset += w;
            }
            res
        }
        Op::SliceCols { x, start } => {
            let (rows, total) = val(*x).dims2();
            let w = out.cols();
            let mut d = vec![0.0; rows * total];
            for r in 0..rows {
                d[r * total + start..r * total + start + w].copy_from_slice(&g[r * w..(r + 1) * w]);
            }
            vec![(*x, d)]
        }
        Op::MeanRows(x) => {
            let (k, n) = val(*x).dims2();
            let mut d = Vec::with_capacity(k * n);
            for _ in 0..k {
                d.extend(g.iter().map(|v| v / k as f64));
            }
            vec![(*x, d)]
        }
        Op::Column { x, col } => {
            let (rows, cols) = val(*x).dims2();
            let mut d = vec![0.0; rows * cols];
            for r in 0..rows {
                d[r * cols + col] = g[r];
            }
            vec![(*x, d)]
        }
        Op::Pick { x, row, col } => {
            let (rows, cols) = val(*x).dims2();
            let mut d = vec![0.0; rows * cols];
            d[row * cols + col] = g[0];
            vec![(*x, d)]
        }
        Op::Sum(x) => vec![(*x, vec![g[0]; val(*x).len()])],
    }
}

// ---------------------------------------------------------------------------
// Var operations

impl<'t> Var<'t> {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn node(&self) -> Ref<'t, Node> {
        Ref::map(self.tape.nodes.borrow(), |n| &n[self.id])
    }

    fn same_tape(&self, other: &Var<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "vars from different tapes cannot be combined"
        );
    }

    pub fn value(&self) -> Tensor {
        self.node().value.clone()
    }

    /// Runs `f` against the stored value without copying it.
    pub fn with_value<R>(&self, f: impl FnOnce(&Tensor) -> R) -> R {
        f(&self.node().value)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.node().value.shape().to_vec()
    }

    pub fn item(&self) -> f64 {
        self.node().value.item()
    }

    pub fn requires_grad(&self) -> bool {
        self.node().requires_grad
    }

    pub fn grad(&self) -> Option<Tensor> {
        let node = self.node();
        node.grad
            .as_ref()
            .map(|g| Tensor::new(node.value.shape().to_vec(), g.clone()).expect("grad shape"))
    }

    fn unary(self, op: Op, value: Tensor) -> Var<'t> {
        let rg = self.requires_grad();
        self.tape.push(value, op, rg)
    }

    fn binary(self, rhs: Var<'t>, op: Op, value: Tensor) -> Var<'t> {
        self.same_tape(&rhs);
        let rg = self.tape.requires(&[self.id, rhs.id]);
        self.tape.push(value, op, rg)
    }

    pub fn matmul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let a = self.node();
            let b = rhs.node();
            let (m, k) = a.value.dims2();
            let (k2, n) = b.value.dims2();
            if k != k2 {
                return Err(Error::dim("matmul", a.value.shape(), b.value.shape()));
            }
            Tensor::matrix(m, n, mm(a.value.data(), m, k, b.value.data(), n))?
        };
        Ok(self.binary(rhs, Op::MatMul(self.id, rhs.id), value))
    }

    /// `self · rhsᵀ`
    pub fn matmul_t(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let a = self.node();
            let b = rhs.node();
            let (m, k) = a.value.dims2();
            let (n, k2) = b.value.dims2();
            if k != k2 {
                return Err(Error::dim("matmul_t", a.value.shape(), b.value.shape()));
            }
            Tensor::matrix(m, n, mm_t(a.value.data(), m, k, b.value.data(), n))?
        };
        Ok(self.binary(rhs, Op::MatMulT(self.id, rhs.id), value))
    }

    fn zip_with(
        self,
        rhs: Var<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Tensor> {
        let a = self.node();
        let b = rhs.node();
        if !broadcast_len(&a.value, &b.value) {
            return Err(Error::dim(name, a.value.shape(), b.value.shape()));
        }
        Ok(elementwise(&a.value, &b.value, f))
    }

    pub fn add(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let value = self.zip_with(rhs, "add", |a, b| a + b)?;
        Ok(self.binary(rhs, Op::Add(self.id, rhs.id), value))
    }

    pub fn sub(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let value = self.zip_with(rhs, "sub", |a, b| a - b)?;
        Ok(self.binary(rhs, Op::Sub(self.id, rhs.id), value))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(self, rhs: Var<'t>) -> Result<Var<'t>> {
        let value = self.zip_with(rhs, "mul", |a, b| a * b)?;
        Ok(self.binary(rhs, Op::Mul(self.id, rhs.id), value))
    }

    /// Adds a length-`n` bias to every row of an `m×n` matrix.
    pub fn add_row(self, bias: Var<'t>) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            let b = bias.node();
            let (m, n) = x.value.dims2();
            if b.value.len() != n {
                return Err(Error::dim("add_row", x.value.shape(), b.value.shape()));
            }
            let mut data = x.value.data().to_vec();
            for r in 0..m {
                for (d, bv) in data[r * n..(r + 1) * n].iter_mut().zip(b.value.data()) {
                    *d += bv;
                }
            }
            Tensor::new(x.value.shape().to_vec(), data)?
        };
        Ok(self.binary(bias, Op::AddRow(self.id, bias.id), value))
    }

    pub fn scale(self, s: f64) -> Var<'t> {
        let value = self.map_value(|v| v * s);
        self.unary(Op::Scale(self.id, s), value)
    }

    fn map_value(&self, f: impl Fn(f64) -> f64) -> Tensor {
        let n = self.node();
        let data = n.value.data().iter().map(|&v| f(v)).collect();
        Tensor::new(n.value.shape().to_vec(), data).expect("same shape")
    }

    pub fn sigmoid(self) -> Var<'t> {
        let value = self.map_value(sigmoid);
        self.unary(Op::Sigmoid(self.id), value)
    }

    pub fn tanh(self) -> Var<'t> {
        let value = self.map_value(f64::tanh);
        self.unary(Op::Tanh(self.id), value)
    }

    pub fn relu(self) -> Var<'t> {
        let value = self.map_value(|v| v.max(0.0));
        self.unary(Op::Relu(self.id), value)
    }

    pub fn softmax_rows(self) -> Var<'t> {
        let value = {
            let x = self.node();
            let n = x.value.cols();
            let mut data = vec![0.0; x.value.len()];
            for (row, out) in x.value.data().chunks(n).zip(data.chunks_mut(n)) {
                softmax_row(row, out);
            }
            Tensor::new(x.value.shape().to_vec(), data).expect("same shape")
        };
        self.unary(Op::SoftmaxRows(self.id), value)
    }

    pub fn log_softmax_rows(self) -> Var<'t> {
        let value = {
            let x = self.node();
            let n = x.value.cols();
            let data = x.value.data().chunks(n).flat_map(log_softmax).collect();
            Tensor::new(x.value.shape().to_vec(), data).expect("same shape")
        };
        self.unary(Op::LogSoftmaxRows(self.id), value)
    }

    /// Per-row normalisation with population variance, followed by the
    /// affine map `gain ⊙ x̂ + bias`.
    pub fn layer_norm(self, gain: Var<'t>, bias: Var<'t>, eps: f64) -> Result<Var<'t>> {
        self.same_tape(&gain);
        self.same_tape(&bias);
        let (value, xhat, inv_std) = {
            let x = self.node();
            let (m, n) = x.value.dims2();
            let gv = gain.node();
            let bv = bias.node();
            if gv.value.len() != n || bv.value.len() != n {
                return Err(Error::dim("layer_norm", x.value.shape(), gv.value.shape()));
            }
            let mut out = vec![0.0; m * n];
            let mut xhat = vec![0.0; m * n];
            let mut inv_std = Vec::with_capacity(m);
            for r in 0..m {
                let row = &x.value.data()[r * n..(r + 1) * n];
                let mean = row.iter().sum::<f64>() / n as f64;
                let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
                let inv = 1.0 / (var + eps).sqrt();
                inv_std.push(inv);
                for j in 0..n {
                    let h = (row[j] - mean) * inv;
                    xhat[r * n + j] = h;
                    out[r * n + j] = h * gv.value.data()[j] + bv.value.data()[j];
                }
            }
            (Tensor::new(x.value.shape().to_vec(), out)?, xhat, inv_std)
        };
        let rg = self.tape.requires(&[self.id, gain.id, bias.id]);
        let op = Op::LayerNorm {
            x: self.id,
            gain: gain.id,
            bias: bias.id,
            xhat,
            inv_std,
        };
        Ok(self.tape.push(value, op, rg))
    }

    /// Columns `start..start + width`.
    pub fn slice_cols(self, start: usize, width: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            let (m, n) = x.value.dims2();
            if start + width > n || width == 0 {
                return Err(Error::dim("slice_cols", x.value.shape(), &[start, width]));
            }
            let mut data = Vec::with_capacity(m * width);
            for r in 0..m {
                data.extend_from_slice(&x.value.data()[r * n + start..r * n + start + width]);
            }
            Tensor::matrix(m, width, data)?
        };
        Ok(self.unary(Op::SliceCols { x: self.id, start }, value))
    }

    /// Splits the columns into `parts` equal contiguous blocks.
    pub fn split_cols(self, parts: usize) -> Result<Vec<Var<'t>>> {
        let shape = self.shape();
        let n = self.with_value(|t| t.cols());
        if parts == 0 || !n.is_multiple_of(parts) {
            return Err(Error::dim("split_cols", &shape, &[parts]));
        }
        let w = n / parts;
        (0..parts).map(|h| self.slice_cols(h * w, w)).collect()
    }

    /// Arithmetic mean over rows, as a `1×n` row.
    pub fn mean_rows(self) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            let (k, n) = x.value.dims2();
            if k == 0 || x.value.is_empty() {
                return Err(Error::EmptyInput("mean_rows"));
            }
            let mut mean = vec![0.0; n];
            for row in x.value.data().chunks(n) {
                mean.iter_mut().zip(row).for_each(|(m, v)| *m += v);
            }
            mean.iter_mut().for_each(|m| *m /= k as f64);
            Tensor::row(mean)
        };
        Ok(self.unary(Op::MeanRows(self.id), value))
    }

    /// Column `col` as a `1×rows` row.
    pub fn column(self, col: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            let (rows, cols) = x.value.dims2();
            if col >= cols {
                return Err(Error::dim("column", x.value.shape(), &[col]));
            }
            Tensor::row((0..rows).map(|r| x.value.data()[r * cols + col]).collect())
        };
        Ok(self.unary(Op::Column { x: self.id, col }, value))
    }

    /// Element `(row, col)` as a scalar.
    pub fn pick(self, row: usize, col: usize) -> Result<Var<'t>> {
        let value = {
            let x = self.node();
            let (rows, cols) = x.value.dims2();
            if row >= rows || col >= cols {
                return Err(Error::dim("pick", x.value.shape(), &[row, col]));
            }
            Tensor::scalar(x.value.at(row, col))
        };
        Ok(self.unary(Op::Pick { x: self.id, row, col }, value))
    }

    pub fn sum(self) -> Var<'t> {
        let value = Tensor::scalar(self.with_value(|t| t.data().iter().sum()));
        self.unary(Op::Sum(self.id), value)
    }

    /// Propagates `∂self/∂leaf` into every gradient-tracking leaf.
    pub fn backward(self) -> Result<()> {
        self.tape.backward_from(self.id)
    }
}

/// Joins matrices with equal row counts side by side.
pub fn concat_cols<'t>(parts: &[Var<'t>]) -> Result<Var<'t>> {
    let first = parts.first().ok_or(Error::EmptyInput("concat_cols"))?;
    let tape = first.tape;
    let value = {
        let nodes = tape.nodes.borrow();
        let rows = nodes[first.id].value.rows();
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            first.same_tape(p);
            let v = &nodes[p.id].value;
            if v.rows() != rows {
                return Err(Error::dim("concat_cols", nodes[first.id].value.shape(), v.shape()));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(nodes[p.id].value.row_slice(r));
            }
        }
        Tensor::matrix(rows, total, data)?
    };
    let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
    let rg = tape.requires(&ids);
    Ok(tape.push(value, Op::ConcatCols(ids), rg))
}

/// Sum of scalar vars.
pub fn sum_scalars<'t>(terms: &[Var<'t>]) -> Result<Var<'t>> {
    let mut iter = terms.iter();
    let mut acc = *iter.next().ok_or(Error::EmptyInput("sum_scalars"))?;
    for t in iter {
        acc = acc.add(*t)?;
    }
    Ok(acc)
}
