//! Dynamic reverse-mode tape.
//!
//! Every forward pass records its operations into a fresh [`Tape`]. Nodes are
//! appended in evaluation order, so a node's parents always have smaller
//! indices and reverse insertion order is a valid reverse topological order.

use std::sync::Arc;

use wide::f64x4;

use super::gemm::{gemm, MatRef};
use super::sparse::CsrMatrix;
use super::tensor::Tensor;
use crate::error::{shape_err, Error, Result};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Unary {
    Identity,
    /// `max(x, 0)`; the derivative at 0 is taken as 0.
    Relu,
    /// `sin(w0 * x)`
    Sin { w0: f64 },
    /// `exp(-x² / (2 s²))`
    Gaussian { s: f64 },
}

impl Unary {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Unary::Identity => x,
            Unary::Relu => x.max(0.0),
            Unary::Sin { w0 } => f64x4::splat(w0 * x).sin().to_array()[0],
            Unary::Gaussian { s } => (-x * x / (2.0 * s * s)).exp(),
        }
    }

    fn eval_all(self, xs: &[f64]) -> Vec<f64> {
        match self {
            Unary::Sin { w0 } => scaled_trig(xs, w0, f64x4::sin),
            _ => xs.iter().map(|&v| self.eval(v)).collect(),
        }
    }

    /// Derivative given the input `x` and the forward output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Identity => 1.0,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Sin { w0 } => w0 * f64x4::splat(w0 * x).cos().to_array()[0],
            Unary::Gaussian { s } => -x / (s * s) * y,
        }
    }
}

/// `f(w0 * x)` for every `x`, four lanes at a time. Lanes are independent, so
/// the result for an element does not depend on its position in the slice.
fn scaled_trig(xs: &[f64], w0: f64, f: fn(f64x4) -> f64x4) -> Vec<f64> {
    let w = f64x4::splat(w0);
    let mut out = Vec::with_capacity(xs.len());
    let chunks = xs.chunks_exact(4);
    let rest = chunks.remainder();
    for c in chunks {
        out.extend_from_slice(&f(w * f64x4::from([c[0], c[1], c[2], c[3]])).to_array());
    }
    let mut tail = [0.0; 4];
    tail[..rest.len()].copy_from_slice(rest);
    out.extend_from_slice(&f(w * f64x4::from(tail)).to_array()[..rest.len()]);
    out
}

/// Elementwise operation selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Hadamard,
    Unary(Unary),
}

/// Sinusoidal feature map `x -> [cos(F x), sin(F x)]` with a fixed frequency
/// matrix `F` (rows x in_dim, angular units).
#[derive(Clone, Debug, PartialEq)]
pub struct SinusoidPlan {
    pub freqs: Vec<f64>,
    pub n_freqs: usize,
    pub in_dim: usize,
    /// `true`: `[cos f0, sin f0, cos f1, sin f1, ..]`; `false`: all cosines then all sines.
    pub interleaved: bool,
}

impl SinusoidPlan {
    pub fn out_dim(&self) -> usize {
        2 * self.n_freqs
    }

    fn cos_index(&self, r: usize) -> usize {
        if self.interleaved {
            2 * r
        } else {
            r
        }
    }

    fn sin_index(&self, r: usize) -> usize {
        if self.interleaved {
            2 * r + 1
        } else {
            self.n_freqs + r
        }
    }
}

/// Weighted gather of table rows: output row `i`, group `g` is
/// `Σ_c weight[i,g,c] * table[row[i,g,c], :]`. Groups are concatenated.
#[derive(Clone, Debug, PartialEq)]
pub struct GatherPlan {
    pub n_rows: usize,
    pub groups: usize,
    pub taps: usize,
    pub rows: Vec<u32>,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Linear { x: Var, w: Var, b: Option<Var> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Unary(Var, Unary),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    Sinusoid(Var, Arc<SinusoidPlan>),
    Gather(Var, Arc<GatherPlan>),
    Sparse(Var, Arc<CsrMatrix>),
}

impl Op {
    fn parents(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) => vec![a, b],
            Op::Linear { x, w, b } => {
                let mut p = vec![x, w];
                p.extend(b);
                p
            }
            Op::Scale(a, _)
            | Op::Unary(a, _)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::Reshape(a)
            | Op::Sinusoid(a, _)
            | Op::Gather(a, _)
            | Op::Sparse(a, _) => vec![a],
        }
    }
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation graph built by a single forward pass.
#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    /// Accumulated gradients of leaf nodes.
    grads: Vec<Option<Tensor>>,
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

    /// Records a trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Records a leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a trainable leaf, if backward has reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient of `v`, or zeros when backward never reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        self.grad(v)
            .cloned()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape().to_vec()))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = op.parents().iter().any(|p| self.nodes[p.0].requires_grad);
        self.push(value, op, requires_grad)
    }

    // ---------------------------------------------------------------- ops

    /// Dense product of `m x k` and `k x n` matrices.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(shape_err("matmul", format!("{m}x{k} · {k2}x{n}")));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            MatRef::new(self.value(a).data(), m, k),
            MatRef::new(self.value(b).data(), k, n),
            &mut out,
            0.0,
        );
        Ok(self.push_op(Tensor::new(vec![m, n], out)?, Op::MatMul(a, b)))
    }

    /// Batched affine map `x Wᵀ + b` for `x: n x in`, `W: out x in`, `b: out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, d_in) = self.dims2(x, "linear")?;
        let (d_out, d_in2) = self.dims2(w, "linear")?;
        if d_in != d_in2 {
            return Err(shape_err("linear", format!("input width {d_in}, weight {d_out}x{d_in2}")));
        }
        let mut out = vec![0.0; n * d_out];
        if let Some(b) = b {
            let bias = self.value(b).data();
            if bias.len() != d_out {
                return Err(shape_err("linear", format!("bias len {} vs {d_out}", bias.len())));
            }
            for row in out.chunks_exact_mut(d_out) {
                row.copy_from_slice(bias);
            }
        }
        gemm(
            MatRef::new(self.value(x).data(), n, d_in),
            MatRef::new(self.value(w).data(), d_out, d_in).t(),
            &mut out,
            if b.is_some() { 1.0 } else { 0.0 },
        );
        Ok(self.push_op(Tensor::new(vec![n, d_out], out)?, Op::Linear { x, w, b }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push_op(t, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "sub", |x, y| x - y)?;
        Ok(self.push_op(t, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.binary(a, b, "hadamard", |x, y| x * y)?;
        Ok(self.push_op(t, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let src = self.value(a);
        let data = src.data().iter().map(|v| v * c).collect();
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push_op(t, Op::Scale(a, c))
    }

    pub fn unary(&mut self, a: Var, f: Unary) -> Var {
        let src = self.value(a);
        let data = f.eval_all(src.data());
        let t = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        self.push_op(t, Op::Unary(a, f))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(a, Unary::Relu)
    }

    pub fn sin_scaled(&mut self, a: Var, w0: f64) -> Var {
        self.unary(a, Unary::Sin { w0 })
    }

    pub fn gaussian(&mut self, a: Var, s: f64) -> Var {
        self.unary(a, Unary::Gaussian { s })
    }

    /// Dispatches an [`Elementwise`] kind over one (unary) or two (binary) inputs.
    pub fn elementwise(&mut self, kind: Elementwise, inputs: &[Var]) -> Result<Var> {
        match (kind, inputs) {
            (Elementwise::Add, &[a, b]) => self.add(a, b),
            (Elementwise::Sub, &[a, b]) => self.sub(a, b),
            (Elementwise::Hadamard, &[a, b]) => self.mul(a, b),
            (Elementwise::Unary(f), &[a]) => Ok(self.unary(a, f)),
            _ => Err(Error::Invalid(format!("{kind:?} given {} inputs", inputs.len()))),
        }
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data().iter().sum();
        self.push_op(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let src = self.value(a).data();
        let s = src.iter().sum::<f64>() / src.len() as f64;
        self.push_op(Tensor::scalar(s), Op::Mean(a))
    }

    pub fn reshape(&mut self, a: Var, shape: Vec<usize>) -> Result<Var> {
        let t = self.value(a).clone().reshape(shape)?;
        Ok(self.push_op(t, Op::Reshape(a)))
    }

    /// Mean squared difference of two equal-shape tensors.
    pub fn mse(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(shape_err(
                "mse",
                format!("{:?} vs {:?}", self.value(a).shape(), self.value(b).shape()),
            ));
        }
        let d = self.sub(a, b)?;
        let sq = self.mul(d, d)?;
        Ok(self.mean(sq))
    }

    /// Sinusoidal features of `x: n x in_dim`, producing `n x 2·n_freqs`.
    pub fn sinusoid(&mut self, x: Var, plan: Arc<SinusoidPlan>) -> Result<Var> {
        let (n, d) = self.dims2(x, "sinusoid")?;
        if d != plan.in_dim || plan.freqs.len() != plan.n_freqs * plan.in_dim {
            return Err(shape_err(
                "sinusoid",
                format!("input width {d}, frequency matrix {}x{}", plan.n_freqs, plan.in_dim),
            ));
        }
        let width = plan.out_dim();
        let mut out = vec![0.0; n * width];
        let xs = self.value(x).data();
        for (xi, row) in xs.chunks_exact(d).zip(out.chunks_exact_mut(width)) {
            for r in 0..plan.n_freqs {
                let f = &plan.freqs[r * d..(r + 1) * d];
                let phase: f64 = f.iter().zip(xi).map(|(a, b)| a * b).sum();
                row[plan.cos_index(r)] = phase.cos();
                row[plan.sin_index(r)] = phase.sin();
            }
        }
        let t = Tensor::new(vec![n, width], out)?;
        Ok(self.push_op(t, Op::Sinusoid(x, plan)))
    }

    /// Weighted row gather from `table: rows x features`.
    pub fn gather(&mut self, table: Var, plan: Arc<GatherPlan>) -> Result<Var> {
        let (t_rows, f) = self.dims2(table, "gather")?;
        let expected = plan.n_rows * plan.groups * plan.taps;
        if plan.rows.len() != expected || plan.weights.len() != expected {
            return Err(shape_err("gather", "plan tap count does not match its dimensions"));
        }
        if let Some(&bad) = plan.rows.iter().find(|&&r| r as usize >= t_rows) {
            return Err(shape_err("gather", format!("row {bad} outside table of {t_rows}")));
        }
        let tab = self.value(table).data();
        let width = plan.groups * f;
        let mut out = vec![0.0; plan.n_rows * width];
        for (g_idx, chunk) in out.chunks_exact_mut(f).enumerate() {
            let base = g_idx * plan.taps;
            for c in 0..plan.taps {
                let w = plan.weights[base + c];
                let r = plan.rows[base + c] as usize;
                for (o, v) in chunk.iter_mut().zip(&tab[r * f..(r + 1) * f]) {
                    *o += w * v;
                }
            }
        }
        let t = Tensor::new(vec![plan.n_rows, width], out)?;
        Ok(self.push_op(t, Op::Gather(table, plan)))
    }

    /// Applies a fixed sparse matrix to the flattened input, producing a vector.
    pub fn sparse_apply(&mut self, x: Var, matrix: Arc<CsrMatrix>) -> Result<Var> {
        let xs = self.value(x).data();
        if xs.len() != matrix.cols() {
            return Err(shape_err(
                "sparse_apply",
                format!("input of {} values, operator has {} columns", xs.len(), matrix.cols()),
            ));
        }
        let t = Tensor::vector(matrix.apply(xs));
        Ok(self.push_op(t, Op::Sparse(x, matrix)))
    }

    // ----------------------------------------------------------- backward

    /// Accumulates `∂loss/∂leaf` into every trainable leaf's gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let order: Vec<Var> = (0..=loss.0).rev().map(Var).collect();
        self.run_backward(loss, &order)
    }

    /// A reverse topological order of the nodes reachable from `loss`, found by
    /// depth-first search rather than by insertion index.
    pub fn reverse_topological_order(&self, loss: Var) -> Vec<Var> {
        let mut visited = vec![false; self.nodes.len()];
        let mut post = Vec::new();
        let mut stack = vec![(loss, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                post.push(v);
                continue;
            }
            if visited[v.0] {
                continue;
            }
            visited[v.0] = true;
            stack.push((v, true));
            for p in self.nodes[v.0].op.parents() {
                if !visited[p.0] {
                    stack.push((p, false));
                }
            }
        }
        post.reverse();
        post
    }

    /// Backward pass visiting nodes in a caller-supplied order, which must
    /// visit every consumer of a node before the node itself.
    pub fn backward_in_order(&mut self, loss: Var, order: &[Var]) -> Result<()> {
        let mut pending = vec![0usize; self.nodes.len()];
        let mut seen = vec![false; self.nodes.len()];
        for &v in order {
            if v.0 >= self.nodes.len() || seen[v.0] {
                return Err(Error::Invalid(format!("order repeats or overruns at node {}", v.0)));
            }
            seen[v.0] = true;
            for p in self.nodes[v.0].op.parents() {
                pending[p.0] += 1;
            }
        }
        for &v in order {
            if pending[v.0] != 0 {
                return Err(Error::Invalid(format!(
                    "node {} visited before all of its consumers",
                    v.0
                )));
            }
            for p in self.nodes[v.0].op.parents() {
                pending[p.0] -= 1;
            }
        }
        self.run_backward(loss, order)
    }

    fn run_backward(&mut self, loss: Var, order: &[Var]) -> Result<()> {
        let shape = self.value(loss).shape().to_vec();
        if self.value(loss).numel() != 1 {
            return Err(Error::NonScalarLoss(shape));
        }
        let mut pass: Vec<Contributions> = vec![Vec::new(); self.nodes.len()];
        pass[loss.0].push((usize::MAX, vec![1.0]));
        for &v in order {
            let Some(g) = sum_contributions(std::mem::take(&mut pass[v.0])) else { continue };
            let node = &self.nodes[v.0];
            if !node.requires_grad {
                continue;
            }
            if let Op::Leaf = node.op {
                let slot = &mut self.grads[v.0];
                match slot {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    None => *slot = Some(Tensor::new(node.value.shape().to_vec(), g)?),
                }
                continue;
            }
            self.propagate(v, &g, &mut pass);
        }
        Ok(())
    }

    /// Adds this node's contribution to each parent's pass gradient.
    fn propagate(&self, v: Var, g: &[f64], pass: &mut [Contributions]) {
        let node = &self.nodes[v.0];
        let out_shape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            &Op::MatMul(a, b) => {
                let (m, k) = self.value(a).dims2().unwrap();
                let n = out_shape[1];
                let gm = MatRef::new(g, m, n);
                if let Some(ga) = self.slot(a, v, pass) {
                    gemm(gm, MatRef::new(self.value(b).data(), k, n).t(), ga, 1.0);
                }
                if let Some(gb) = self.slot(b, v, pass) {
                    gemm(MatRef::new(self.value(a).data(), m, k).t(), gm, gb, 1.0);
                }
            }
            &Op::Linear { x, w, b } => {
                let (n, d_in) = self.value(x).dims2().unwrap();
                let d_out = out_shape[1];
                let gm = MatRef::new(g, n, d_out);
                if let Some(gx) = self.slot(x, v, pass) {
                    gemm(gm, MatRef::new(self.value(w).data(), d_out, d_in), gx, 1.0);
                }
                if let Some(gw) = self.slot(w, v, pass) {
                    gemm(gm.t(), MatRef::new(self.value(x).data(), n, d_in), gw, 1.0);
                }
                if let Some(b) = b {
                    if let Some(gb) = self.slot(b, v, pass) {
                        for row in g.chunks_exact(d_out) {
                            gb.iter_mut().zip(row).for_each(|(a, r)| *a += r);
                        }
                    }
                }
            }
            &Op::Add(a, b) => {
                self.broadcast_back(a, v, pass, g, |gi, _| gi);
                self.broadcast_back(b, v, pass, g, |gi, _| gi);
            }
            &Op::Sub(a, b) => {
                self.broadcast_back(a, v, pass, g, |gi, _| gi);
                self.broadcast_back(b, v, pass, g, |gi, _| -gi);
            }
            &Op::Mul(a, b) => {
                let bv = self.value(b).data();
                let av = self.value(a).data();
                self.broadcast_back(a, v, pass, g, |gi, i| gi * pick(bv, i));
                self.broadcast_back(b, v, pass, g, |gi, i| gi * pick(av, i));
            }
            &Op::Scale(a, c) => {
                if let Some(ga) = self.slot(a, v, pass) {
                    ga.iter_mut().zip(g).for_each(|(s, gi)| *s += c * gi);
                }
            }
            &Op::Unary(a, f) => {
                let xs = self.value(a).data();
                let ys = node.value.data();
                if let Some(ga) = self.slot(a, v, pass) {
                    if let Unary::Sin { w0 } = f {
                        let cos = scaled_trig(xs, w0, f64x4::cos);
                        for ((s, gi), c) in ga.iter_mut().zip(g).zip(cos) {
                            *s += gi * (w0 * c);
                        }
                    } else {
                        for i in 0..ga.len() {
                            ga[i] += g[i] * f.derivative(xs[i], ys[i]);
                        }
                    }
                }
            }
            &Op::Sum(a) => {
                if let Some(ga) = self.slot(a, v, pass) {
                    ga.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            &Op::Mean(a) => {
                if let Some(ga) = self.slot(a, v, pass) {
                    let scale = g[0] / ga.len() as f64;
                    ga.iter_mut().for_each(|s| *s += scale);
                }
            }
            &Op::Reshape(a) => {
                if let Some(ga) = self.slot(a, v, pass) {
                    ga.iter_mut().zip(g).for_each(|(s, gi)| *s += gi);
                }
            }
            Op::Sinusoid(x, plan) => {
                let out = node.value.data();
                let width = plan.out_dim();
                let d = plan.in_dim;
                if let Some(gx) = self.slot(*x, v, pass) {
                    for ((grow, orow), gxi) in
                        g.chunks_exact(width).zip(out.chunks_exact(width)).zip(gx.chunks_exact_mut(d))
                    {
                        for r in 0..plan.n_freqs {
                            let (ci, si) = (plan.cos_index(r), plan.sin_index(r));
                            let dphase = -grow[ci] * orow[si] + grow[si] * orow[ci];
                            for (gxj, fj) in gxi.iter_mut().zip(&plan.freqs[r * d..(r + 1) * d]) {
                                *gxj += dphase * fj;
                            }
                        }
                    }
                }
            }
            Op::Gather(table, plan) => {
                let f = self.value(*table).dims2().unwrap().1;
                if let Some(gt) = self.slot(*table, v, pass) {
                    for (g_idx, chunk) in g.chunks_exact(f).enumerate() {
                        let base = g_idx * plan.taps;
                        for c in 0..plan.taps {
                            let w = plan.weights[base + c];
                            let r = plan.rows[base + c] as usize;
                            for (t, gi) in gt[r * f..(r + 1) * f].iter_mut().zip(chunk) {
                                *t += w * gi;
                            }
                        }
                    }
                }
            }
            Op::Sparse(x, matrix) => {
                if let Some(gx) = self.slot(*x, v, pass) {
                    matrix.apply_transpose_into(g, gx);
                }
            }
        }
    }

    /// Fresh zeroed buffer for one contribution from `consumer` to `p`;
    /// `None` when `p` needs no gradient.
    fn slot<'p>(&self, p: Var, consumer: Var, pass: &'p mut [Contributions]) -> Option<&'p mut [f64]> {
        if !self.nodes[p.0].requires_grad {
            return None;
        }
        let n = self.nodes[p.0].value.numel();
        let list = &mut pass[p.0];
        list.push((consumer.0, vec![0.0; n]));
        Some(list.last_mut().unwrap().1.as_mut_slice())
    }

    fn broadcast_back(
        &self,
        p: Var,
        consumer: Var,
        pass: &mut [Contributions],
        g: &[f64],
        local: impl Fn(f64, usize) -> f64,
    ) {
        if let Some(gp) = self.slot(p, consumer, pass) {
            if gp.len() == g.len() {
                for (i, s) in gp.iter_mut().enumerate() {
                    *s += local(g[i], i);
                }
            } else {
                gp[0] += (0..g.len()).map(|i| local(g[i], i)).sum::<f64>();
            }
        }
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v)
            .dims2()
            .ok_or_else(|| shape_err(op, format!("expected a matrix, got {:?}", self.value(v).shape())))
    }

    fn binary(&self, a: Var, b: Var, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        let shape = if ta.shape() == tb.shape() || tb.is_scalar() {
            ta.shape().to_vec()
        } else if ta.is_scalar() {
            tb.shape().to_vec()
        } else {
            return Err(shape_err(op, format!("{:?} vs {:?}", ta.shape(), tb.shape())));
        };
        let n: usize = shape.iter().product();
        let data = (0..n).map(|i| f(pick(ta.data(), i), pick(tb.data(), i))).collect();
        Tensor::new(shape, data)
    }
}

/// Gradient contributions to one node, tagged with the consuming node.
type Contributions = Vec<(usize, Vec<f64>)>;

/// Sums contributions in consumer-index order, so the result does not depend
/// on which valid reverse order produced them.
fn sum_contributions(mut list: Contributions) -> Option<Vec<f64>> {
    list.sort_by_key(|(consumer, _)| *consumer);
    let mut iter = list.into_iter();
    let (_, mut acc) = iter.next()?;
    for (_, g) in iter {
        acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Some(acc)
}

/// Element `i`, or the lone element of a scalar.
#[inline]
fn pick(xs: &[f64], i: usize) -> f64 {
    if xs.len() == 1 {
        xs[0]
    } else {
        xs[i]
    }
}
