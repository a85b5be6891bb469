use statrs::function::gamma::{digamma, ln_gamma};

use super::{Tensor, TensorError};

/// Epsilon added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on a [`Tape`]. Only valid for the tape that issued it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// Elementwise add; rhs shape may be a suffix of lhs shape and is then
    /// broadcast over the leading dimensions.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    /// `[.., m, k] x [k, n]` with a 2-D rhs, or `[.., m, k] x [.., k, n]`
    /// with identical leading dimensions.
    Matmul(Var, Var),
    Relu(Var),
    Softplus(Var),
    Ln(Var),
    LnGamma(Var),
    Softmax { x: Var, axis: usize },
    LayerNorm { x: Var, gain: Var, bias: Var },
    Transpose { x: Var, a: usize, b: usize },
    Reshape(Var),
    Sum(Var),
}

struct Node {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
    op: Op,
}

/// Wengert list: nodes in execution order, inputs always before outputs.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Vec<f64>>>,
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

    /// Registers a tensor as a leaf. Gradient flows into it only when the
    /// tensor has `requires_grad` set.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        self.push(t.shape.clone(), t.data, t.requires_grad, Op::Leaf)
    }

    /// Registers a non-differentiable leaf (targets, masks, constants).
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.push(t.shape.clone(), t.data.clone(), false, Op::Leaf)
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        Tensor {
            shape: self.nodes[v.0].shape.clone(),
            data: self.nodes[v.0].data.clone(),
            requires_grad: false,
        }
    }

    /// Value of a single-element node.
    pub fn item(&self, v: Var) -> f64 {
        assert_eq!(self.nodes[v.0].data.len(), 1, "item() on non-scalar node");
        self.nodes[v.0].data[0]
    }

    /// Smallest `|x|` over every element feeding a relu on this tape,
    /// `f64::INFINITY` when no relus were recorded. Finite-difference
    /// gradient checks are only trustworthy when this margin comfortably
    /// exceeds the probe step, since a step straddling a kink makes central
    /// differences disagree with the subgradient.
    pub fn relu_kink_margin(&self) -> f64 {
        let mut margin = f64::INFINITY;
        for i in 0..self.nodes.len() {
            if let Op::Relu(x) = &self.nodes[i].op {
                for &v in &self.nodes[x.0].data {
                    margin = margin.min(v.abs());
                }
            }
        }
        margin
    }

    /// Gradient accumulated by the last `backward` call, if any reached `v`.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            shape,
            data,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs_grad(&self, inputs: &[Var]) -> bool {
        inputs.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    // ── elementwise ─────────────────────────────────────────────────────

    /// `a + b`. `b`'s shape must equal `a`'s or be a suffix of it, in which
    /// case `b` is broadcast over the leading dimensions.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (&self.nodes[a.0].shape, &self.nodes[b.0].shape);
        if !is_suffix(sb, sa) {
            return Err(TensorError::ShapeMismatch {
                op: "add",
                lhs: sa.clone(),
                rhs: sb.clone(),
            });
        }
        let bn = self.nodes[b.0].data.len().max(1);
        let mut out = self.nodes[a.0].data.clone();
        for chunk in out.chunks_mut(bn) {
            for (o, &bv) in chunk.iter_mut().zip(&self.nodes[b.0].data) {
                *o += bv;
            }
        }
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same_shape("sub", a, b, |x, y| x - y)?;
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same_shape("mul", a, b, |x, y| x * y)?;
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let out = self.zip_same_shape("div", a, b, |x, y| x / y)?;
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(self.nodes[a.0].shape.clone(), out, rg, Op::Div(a, b)))
    }

    fn zip_same_shape(
        &self,
        op: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Vec<f64>, TensorError> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if na.shape != nb.shape {
            return Err(TensorError::ShapeMismatch {
                op,
                lhs: na.shape.clone(),
                rhs: nb.shape.clone(),
            });
        }
        Ok(na
            .data
            .iter()
            .zip(&nb.data)
            .map(|(&x, &y)| f(x, y))
            .collect())
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x + s).collect();
        let rg = self.needs_grad(&[a]);
        self.push(self.nodes[a.0].shape.clone(), out, rg, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, s: f64) -> Var {
        let out: Vec<f64> = self.nodes[a.0].data.iter().map(|&x| x * s).collect();
        let rg = self.needs_grad(&[a]);
        self.push(self.nodes[a.0].shape.clone(), out, rg, Op::MulScalar(a, s))
    }

    // ── nonlinearities ──────────────────────────────────────────────────

    pub fn relu(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| v.max(0.0)).collect();
        let rg = self.needs_grad(&[x]);
        self.push(self.nodes[x.0].shape.clone(), out, rg, Op::Relu(x))
    }

    /// `ln(1 + exp(x))`, computed in the overflow-free form.
    pub fn softplus(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0]
            .data
            .iter()
            .map(|&v| v.max(0.0) + (-v.abs()).exp().ln_1p())
            .collect();
        let rg = self.needs_grad(&[x]);
        self.push(self.nodes[x.0].shape.clone(), out, rg, Op::Softplus(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| v.ln()).collect();
        let rg = self.needs_grad(&[x]);
        self.push(self.nodes[x.0].shape.clone(), out, rg, Op::Ln(x))
    }

    /// Log-gamma, elementwise; gradient is the digamma function.
    pub fn ln_gamma(&mut self, x: Var) -> Var {
        let out: Vec<f64> = self.nodes[x.0].data.iter().map(|&v| ln_gamma(v)).collect();
        let rg = self.needs_grad(&[x]);
        self.push(self.nodes[x.0].shape.clone(), out, rg, Op::LnGamma(x))
    }

    // ── matmul and linear ───────────────────────────────────────────────

    /// Matrix product. Either `[.., m, k] x [k, n]` (2-D rhs broadcast over
    /// the batch) or `[.., m, k] x [.., k, n]` with identical leading dims.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (sa, sb) = (
            self.nodes[a.0].shape.clone(),
            self.nodes[b.0].shape.clone(),
        );
        let mismatch = || TensorError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() < 2 {
            return Err(mismatch());
        }
        let (m, k) = (sa[sa.len() - 2], sa[sa.len() - 1]);
        let (da, db) = (&self.nodes[a.0].data, &self.nodes[b.0].data);
        let (out_shape, out) = if sb.len() == 2 {
            if sb[0] != k {
                return Err(mismatch());
            }
            let n = sb[1];
            let rows = da.len() / k;
            let mut out = vec![0.0; rows * n];
            matmul_acc(da, db, rows, k, n, &mut out);
            let mut shape = sa.clone();
            *shape.last_mut().unwrap() = n;
            (shape, out)
        } else {
            if sb.len() != sa.len() || sb[..sb.len() - 2] != sa[..sa.len() - 2] || sb[sb.len() - 2] != k
            {
                return Err(mismatch());
            }
            let n = sb[sb.len() - 1];
            let batches: usize = sa[..sa.len() - 2].iter().product();
            let mut out = vec![0.0; batches * m * n];
            for bi in 0..batches {
                matmul_acc(
                    &da[bi * m * k..(bi + 1) * m * k],
                    &db[bi * k * n..(bi + 1) * k * n],
                    m,
                    k,
                    n,
                    &mut out[bi * m * n..(bi + 1) * m * n],
                );
            }
            let mut shape = sa.clone();
            *shape.last_mut().unwrap() = n;
            (shape, out)
        };
        let rg = self.needs_grad(&[a, b]);
        Ok(self.push(out_shape, out, rg, Op::Matmul(a, b)))
    }

    /// Affine map `x @ w + b` with `w: [k, n]`, `b: [n]`, `x: [.., k]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var, TensorError> {
        let sw = &self.nodes[w.0].shape;
        let sb = &self.nodes[b.0].shape;
        if sw.len() != 2 || sb.len() != 1 || sb[0] != sw[1] {
            return Err(TensorError::ShapeMismatch {
                op: "linear",
                lhs: sw.clone(),
                rhs: sb.clone(),
            });
        }
        let xw = self.matmul(x, w)?;
        self.add(xw, b)
    }

    // ── structured ops ──────────────────────────────────────────────────

    /// Softmax along `axis`, stabilized by subtracting the per-row maximum.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        if axis >= shape.len() {
            return Err(TensorError::AxisOutOfRange {
                op: "softmax",
                axis,
                rank: shape.len(),
            });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        let mut out = self.nodes[x.0].data.clone();
        for o in 0..outer {
            for i in 0..inner {
                let base = o * len * inner + i;
                let mut max = f64::NEG_INFINITY;
                for j in 0..len {
                    max = max.max(out[base + j * inner]);
                }
                let mut sum = 0.0;
                for j in 0..len {
                    let e = (out[base + j * inner] - max).exp();
                    out[base + j * inner] = e;
                    sum += e;
                }
                for j in 0..len {
                    out[base + j * inner] /= sum;
                }
            }
        }
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape, out, rg, Op::Softmax { x, axis }))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        let d = *shape.last().ok_or(TensorError::AxisOutOfRange {
            op: "layer_norm",
            axis: 0,
            rank: 0,
        })?;
        for v in [gain, bias] {
            let s = &self.nodes[v.0].shape;
            if s.len() != 1 || s[0] != d {
                return Err(TensorError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape.clone(),
                    rhs: s.clone(),
                });
            }
        }
        let mut out = vec![0.0; self.nodes[x.0].data.len()];
        {
            let xd = &self.nodes[x.0].data;
            let gd = &self.nodes[gain.0].data;
            let bd = &self.nodes[bias.0].data;
            for (row_in, row_out) in xd.chunks_exact(d).zip(out.chunks_exact_mut(d)) {
                let mean = row_in.iter().sum::<f64>() / d as f64;
                let var = row_in.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
                for j in 0..d {
                    row_out[j] = (row_in[j] - mean) * inv * gd[j] + bd[j];
                }
            }
        }
        let rg = self.needs_grad(&[x, gain, bias]);
        Ok(self.push(shape, out, rg, Op::LayerNorm { x, gain, bias }))
    }

    /// Swaps two axes (copying).
    pub fn transpose(&mut self, x: Var, a: usize, b: usize) -> Result<Var, TensorError> {
        let shape = self.nodes[x.0].shape.clone();
        for ax in [a, b] {
            if ax >= shape.len() {
                return Err(TensorError::AxisOutOfRange {
                    op: "transpose",
                    axis: ax,
                    rank: shape.len(),
                });
            }
        }
        let (out_shape, out) = transpose_copy(&shape, &self.nodes[x.0].data, a, b);
        let rg = self.needs_grad(&[x]);
        Ok(self.push(out_shape, out, rg, Op::Transpose { x, a, b }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.nodes[x.0].data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.nodes[x.0].shape.clone(),
                rhs: shape.to_vec(),
            });
        }
        let data = self.nodes[x.0].data.clone();
        let rg = self.needs_grad(&[x]);
        Ok(self.push(shape.to_vec(), data, rg, Op::Reshape(x)))
    }

    /// Sum of all elements, as a scalar node.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.nodes[x.0].data.iter().sum::<f64>();
        let rg = self.needs_grad(&[x]);
        self.push(vec![], vec![s], rg, Op::Sum(x))
    }

    // ── backward ────────────────────────────────────────────────────────

    /// Accumulates `d loss / d node` for every gradient-tracking node
    /// reachable from `loss`. `loss` must be a single-element node.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(TensorError::NonScalarLoss {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        self.grads = vec![None; self.nodes.len()];
        self.grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            if self.grads[idx].is_none() || !self.nodes[idx].requires_grad {
                continue;
            }
            let g = self.grads[idx].take().unwrap();
            self.propagate(idx, &g);
            self.grads[idx] = Some(g);
        }
        Ok(())
    }

    fn accumulate(&mut self, v: Var, contribution: impl FnOnce(&mut [f64])) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let n = self.nodes[v.0].data.len();
        let slot = self.grads[v.0].get_or_insert_with(|| vec![0.0; n]);
        contribution(slot);
    }

    fn propagate(&mut self, idx: usize, g: &[f64]) {
        // `g` is d loss / d nodes[idx]; scatter into the inputs.
        let op = std::mem::replace(&mut self.nodes[idx].op, Op::Leaf);
        match &op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(*a, |ga| {
                    for (s, &v) in ga.iter_mut().zip(g) {
                        *s += v;
                    }
                });
                let bn = self.nodes[b.0].data.len();
                self.accumulate(*b, |gb| {
                    for chunk in g.chunks(bn) {
                        for (s, &v) in gb.iter_mut().zip(chunk) {
                            *s += v;
                        }
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accumulate(*a, |ga| {
                    for (s, &v) in ga.iter_mut().zip(g) {
                        *s += v;
                    }
                });
                self.accumulate(*b, |gb| {
                    for (s, &v) in gb.iter_mut().zip(g) {
                        *s -= v;
                    }
                });
            }
            Op::Mul(a, b) => {
                let bd = self.nodes[b.0].data.clone();
                self.accumulate(*a, |ga| {
                    for ((s, &v), &bv) in ga.iter_mut().zip(g).zip(&bd) {
                        *s += v * bv;
                    }
                });
                let ad = self.nodes[a.0].data.clone();
                self.accumulate(*b, |gb| {
                    for ((s, &v), &av) in gb.iter_mut().zip(g).zip(&ad) {
                        *s += v * av;
                    }
                });
            }
            Op::Div(a, b) => {
                let bd = self.nodes[b.0].data.clone();
                self.accumulate(*a, |ga| {
                    for ((s, &v), &bv) in ga.iter_mut().zip(g).zip(&bd) {
                        *s += v / bv;
                    }
                });
                let ad = self.nodes[a.0].data.clone();
                self.accumulate(*b, |gb| {
                    for (j, (s, &v)) in gb.iter_mut().zip(g).enumerate() {
                        *s -= v * ad[j] / (bd[j] * bd[j]);
                    }
                });
            }
            Op::AddScalar(a) => {
                self.accumulate(*a, |ga| {
                    for (s, &v) in ga.iter_mut().zip(g) {
                        *s += v;
                    }
                });
            }
            Op::MulScalar(a, c) => {
                let c = *c;
                self.accumulate(*a, |ga| {
                    for (s, &v) in ga.iter_mut().zip(g) {
                        *s += c * v;
                    }
                });
            }
            Op::Matmul(a, b) => self.backward_matmul(*a, *b, g),
            Op::Relu(x) => {
                // gradient passes only where the input is strictly positive
                let xd = self.nodes[x.0].data.clone();
                self.accumulate(*x, |gx| {
                    for ((s, &v), &xv) in gx.iter_mut().zip(g).zip(&xd) {
                        if xv > 0.0 {
                            *s += v;
                        }
                    }
                });
            }
            Op::Softplus(x) => {
                let xd = self.nodes[x.0].data.clone();
                self.accumulate(*x, |gx| {
                    for ((s, &v), &xv) in gx.iter_mut().zip(g).zip(&xd) {
                        let sig = if xv >= 0.0 {
                            1.0 / (1.0 + (-xv).exp())
                        } else {
                            let e = xv.exp();
                            e / (1.0 + e)
                        };
                        *s += v * sig;
                    }
                });
            }
            Op::Ln(x) => {
                let xd = self.nodes[x.0].data.clone();
                self.accumulate(*x, |gx| {
                    for ((s, &v), &xv) in gx.iter_mut().zip(g).zip(&xd) {
                        *s += v / xv;
                    }
                });
            }
            Op::LnGamma(x) => {
                let xd = self.nodes[x.0].data.clone();
                self.accumulate(*x, |gx| {
                    for ((s, &v), &xv) in gx.iter_mut().zip(g).zip(&xd) {
                        *s += v * digamma(xv);
                    }
                });
            }
            Op::Softmax { x, axis } => {
                let y = &self.nodes[idx].data;
                let shape = &self.nodes[idx].shape;
                let (outer, len, inner) = split_axis(shape, *axis);
                let mut gx_full = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let base = o * len * inner + i;
                        let mut dot = 0.0;
                        for j in 0..len {
                            dot += g[base + j * inner] * y[base + j * inner];
                        }
                        for j in 0..len {
                            let p = base + j * inner;
                            gx_full[p] = y[p] * (g[p] - dot);
                        }
                    }
                }
                self.accumulate(*x, |gx| {
                    for (s, v) in gx.iter_mut().zip(gx_full) {
                        *s += v;
                    }
                });
            }
            Op::LayerNorm { x, gain, bias } => self.backward_layer_norm(*x, *gain, *bias, g),
            Op::Transpose { x, a, b } => {
                let (_, gx) = transpose_copy(&self.nodes[idx].shape, g, *a, *b);
                self.accumulate(*x, |slot| {
                    for (s, v) in slot.iter_mut().zip(gx) {
                        *s += v;
                    }
                });
            }
            Op::Reshape(x) => {
                self.accumulate(*x, |slot| {
                    for (s, &v) in slot.iter_mut().zip(g) {
                        *s += v;
                    }
                });
            }
            Op::Sum(x) => {
                let v = g[0];
                self.accumulate(*x, |slot| {
                    for s in slot.iter_mut() {
                        *s += v;
                    }
                });
            }
        }
        self.nodes[idx].op = op;
    }

    fn backward_matmul(&mut self, a: Var, b: Var, g: &[f64]) {
        let sa = self.nodes[a.0].shape.clone();
        let sb = self.nodes[b.0].shape.clone();
        let k = sa[sa.len() - 1];
        let ad = self.nodes[a.0].data.clone();
        let bd = self.nodes[b.0].data.clone();
        if sb.len() == 2 {
            let n = sb[1];
            let rows = ad.len() / k;
            // da = g @ b^T
            self.accumulate(a, |ga| matmul_abt_acc(g, &bd, rows, n, k, ga));
            // db = a^T @ g over the flattened batch
            self.accumulate(b, |gb| matmul_atb_acc(&ad, g, rows, k, n, gb));
        } else {
            let m = sa[sa.len() - 2];
            let n = sb[sb.len() - 1];
            let batches: usize = sa[..sa.len() - 2].iter().product();
            self.accumulate(a, |ga| {
                for bi in 0..batches {
                    matmul_abt_acc(
                        &g[bi * m * n..(bi + 1) * m * n],
                        &bd[bi * k * n..(bi + 1) * k * n],
                        m,
                        n,
                        k,
                        &mut ga[bi * m * k..(bi + 1) * m * k],
                    );
                }
            });
            self.accumulate(b, |gb| {
                for bi in 0..batches {
                    matmul_atb_acc(
                        &ad[bi * m * k..(bi + 1) * m * k],
                        &g[bi * m * n..(bi + 1) * m * n],
                        m,
                        k,
                        n,
                        &mut gb[bi * k * n..(bi + 1) * k * n],
                    );
                }
            });
        }
    }

    fn backward_layer_norm(&mut self, x: Var, gain: Var, bias: Var, g: &[f64]) {
        let d = *self.nodes[x.0].shape.last().unwrap();
        let xd = self.nodes[x.0].data.clone();
        let gd = self.nodes[gain.0].data.clone();
        let rows = xd.len() / d;
        let mut gx = vec![0.0; xd.len()];
        let mut ggain = vec![0.0; d];
        let mut gbias = vec![0.0; d];
        for r in 0..rows {
            let row = &xd[r * d..(r + 1) * d];
            let grow = &g[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            let mut mean_dxhat = 0.0;
            let mut mean_dxhat_xhat = 0.0;
            for j in 0..d {
                let xhat = (row[j] - mean) * inv;
                let dxhat = grow[j] * gd[j];
                ggain[j] += grow[j] * xhat;
                gbias[j] += grow[j];
                mean_dxhat += dxhat;
                mean_dxhat_xhat += dxhat * xhat;
            }
            mean_dxhat /= d as f64;
            mean_dxhat_xhat /= d as f64;
            for j in 0..d {
                let xhat = (row[j] - mean) * inv;
                let dxhat = grow[j] * gd[j];
                gx[r * d + j] = inv * (dxhat - mean_dxhat - xhat * mean_dxhat_xhat);
            }
        }
        self.accumulate(x, |slot| {
            for (s, v) in slot.iter_mut().zip(gx) {
                *s += v;
            }
        });
        self.accumulate(gain, |slot| {
            for (s, v) in slot.iter_mut().zip(ggain) {
                *s += v;
            }
        });
        self.accumulate(bias, |slot| {
            for (s, v) in slot.iter_mut().zip(gbias) {
                *s += v;
            }
        });
    }
}

/// True when `suffix` equals the trailing dimensions of `shape`. A scalar
/// (empty shape) is a suffix of anything.
fn is_suffix(suffix: &[usize], shape: &[usize]) -> bool {
    suffix.len() <= shape.len() && shape[shape.len() - suffix.len()..] == *suffix
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, len, inner)
}

/// `out[i, j] += sum_k a[i, k] * b[k, j]`; all row-major, j innermost so the
/// compiler can vectorize the contiguous runs.
fn matmul_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (kk, &av) in arow.iter().enumerate() {
            let brow = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

/// `out[i, j] += sum_k a[i, k] * b[j, k]` (`a @ b^T`): rows of both operands
/// are contiguous, so each entry is a straight dot product.
fn matmul_abt_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for i in 0..m {
        let arow = &a[i * k..(i + 1) * k];
        let orow = &mut out[i * n..(i + 1) * n];
        for (j, o) in orow.iter_mut().enumerate() {
            let brow = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (&av, &bv) in arow.iter().zip(brow) {
                acc += av * bv;
            }
            *o += acc;
        }
    }
}

/// `out[i, j] += sum_k a[k, i] * b[k, j]` (`a^T @ b`).
fn matmul_atb_acc(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    for r in 0..m {
        let arow = &a[r * k..(r + 1) * k];
        let brow = &b[r * n..(r + 1) * n];
        for (i, &av) in arow.iter().enumerate() {
            let orow = &mut out[i * n..(i + 1) * n];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
}

fn transpose_copy(shape: &[usize], data: &[f64], a: usize, b: usize) -> (Vec<usize>, Vec<f64>) {
    if a == b {
        return (shape.to_vec(), data.to_vec());
    }
    let mut out_shape = shape.to_vec();
    out_shape.swap(a, b);
    let rank = shape.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank - 1).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let mut out_strides = vec![1usize; rank];
    for i in (0..rank - 1).rev() {
        out_strides[i] = out_strides[i + 1] * out_shape[i + 1];
    }
    // walk the output in order, gathering from the permuted input index
    let mut perm_strides = in_strides.clone();
    perm_strides.swap(a, b);
    let mut out = vec![0.0; data.len()];
    let mut idx = vec![0usize; rank];
    for slot in out.iter_mut() {
        let mut src = 0;
        for (i, &ix) in idx.iter().enumerate() {
            src += ix * perm_strides[i];
        }
        *slot = data[src];
        for i in (0..rank).rev() {
            idx[i] += 1;
            if idx[i] < out_shape[i] {
                break;
            }
            idx[i] = 0;
        }
    }
    (out_shape, out)
}
