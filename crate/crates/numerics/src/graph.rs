//! Tape-based reverse-mode differentiation.
//!
//! Every op appends a node to the tape, so node order is already a
//! topological order. [`Graph::backward`] walks the tape once in reverse.

use crate::error::{invalid, NumericsError, Result};
use crate::kernels::{col2im, gemm, im2col, ConvGeometry};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Sigmoid(Var),
    Cos(Var),
    Maximum(Var, Var),
    MatMul(Var, Var),
    AddBias(Var, Var),
    Conv2d {
        input: Var,
        kernel: Var,
        geo: ConvGeometry,
        cols: Option<Vec<f64>>,
    },
    Softmax(Var),
    ScaleCells(Var, Var),
    Concat(Vec<Var>),
    BroadcastCells(Var),
    MeanCells(Var),
    SumCells(Var),
    SumAll(Var),
    ChannelNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        normalized: Vec<f64>,
        inv_std: Vec<f64>,
    },
    AvgPool2(Var),
    Reshape(Var),
    BceWithLogits {
        logits: Var,
        target: Vec<f64>,
    },
    BilinearSplat {
        point: Var,
        affine: SplatAffine,
    },
}

/// Maps a 2-vector point to continuous grid coordinates:
/// `col = col_scale * p[0] + col_offset`, `row = row_scale * p[1] + row_offset`,
/// where cell `(r, c)` has its center at `(r + 0.5, c + 0.5)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplatAffine {
    pub height: usize,
    pub width: usize,
    pub col_scale: f64,
    pub col_offset: f64,
    pub row_scale: f64,
    pub row_offset: f64,
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Computation tape. Values are immutable once recorded.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `v`; `None` for nodes that do not
    /// require gradients or that the loss does not depend on.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return invalid(format!(
            "{what}: shape mismatch {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Bilinear weights of a point over the four nearest cell centers.
/// Returns `(row, col, weight, d_weight/d_row, d_weight/d_col)` for in-grid taps.
fn splat_taps(affine: &SplatAffine, p: &[f64]) -> Vec<(usize, usize, f64, f64, f64)> {
    let col = affine.col_scale * p[0] + affine.col_offset - 0.5;
    let row = affine.row_scale * p[1] + affine.row_offset - 0.5;
    let c0 = col.floor();
    let r0 = row.floor();
    let fc = col - c0;
    let fr = row - r0;
    let mut taps = Vec::with_capacity(4);
    for (dr, wr, dwr) in [(0.0, 1.0 - fr, -1.0), (1.0, fr, 1.0)] {
        for (dc, wc, dwc) in [(0.0, 1.0 - fc, -1.0), (1.0, fc, 1.0)] {
            let r = r0 + dr;
            let c = c0 + dc;
            if r < 0.0 || c < 0.0 || r >= affine.height as f64 || c >= affine.width as f64 {
                continue;
            }
            taps.push((r as usize, c as usize, wr * wc, dwr * wc, wr * dwc));
        }
    }
    taps
}

impl Graph {
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

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Result<Var> {
        if !value.is_finite() {
            return Err(NumericsError::NonFinite(format!("{op:?}")));
        }
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Records an input. Leaves created with `requires_grad` receive gradients.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<Var> {
        value.ensure_finite("leaf")?;
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<Var> {
        self.leaf(value, false)
    }

    /// Copy of `v` that is cut off from gradient flow.
    pub fn detach(&mut self, v: Var) -> Result<Var> {
        let value = self.value(v).clone();
        self.leaf(value, false)
    }

    fn zip_with(&mut self, a: Var, b: Var, what: &str, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, what)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "add", |x, y| x + y)?;
        self.push(out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "sub", |x, y| x - y)?;
        self.push(out, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "mul", |x, y| x * y)?;
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with(a, b, "maximum", f64::max)?;
        self.push(out, Op::Maximum(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x * s);
        self.push(out, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Result<Var> {
        let out = self.value(a).map(|x| x + s);
        self.push(out, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a), &[a])
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(f64::cos);
        self.push(out, Op::Cos(a), &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    /// `[n, k] x [k, m] -> [n, m]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (&[n, k], &[k2, m]) = (ta.shape(), tb.shape()) else {
            return invalid(format!(
                "matmul expects rank-2 operands, got {:?} and {:?}",
                ta.shape(),
                tb.shape()
            ));
        };
        if k != k2 {
            return invalid(format!("matmul inner extents differ: {k} vs {k2}"));
        }
        let mut out = vec![0.0; n * m];
        gemm(n, k, m, ta.data(), false, tb.data(), false, &mut out, false);
        let out = Tensor::new(vec![n, m], out)?;
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    /// Adds a `[c]` bias along the last axis of `x`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let c = *tx.shape().last().unwrap_or(&0);
        if tb.shape() != [c] {
            return invalid(format!(
                "bias of shape {:?} does not match last axis {c}",
                tb.shape()
            ));
        }
        let b = tb.data();
        let mut data = tx.data().to_vec();
        for row in data.chunks_mut(c.max(1)) {
            for (v, &bb) in row.iter_mut().zip(b) {
                *v += bb;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        self.push(out, Op::AddBias(x, bias), &[x, bias])
    }

    /// Same-padded 2-D convolution of a `[h, w, cin]` map with a
    /// `[kh, kw, cin, cout]` kernel.
    pub fn conv2d(&mut self, input: Var, kernel: Var, dilation: usize, stride: usize) -> Result<Var> {
        let (ti, tk) = (self.value(input), self.value(kernel));
        let geo = ConvGeometry::new(ti.shape(), tk.shape(), dilation, stride)?;
        let (p, kc, co) = (geo.out_cells(), geo.patch_len(), geo.out_c);
        let mut out = vec![0.0; p * co];
        let cols = if geo.is_pointwise() {
            gemm(p, kc, co, ti.data(), false, tk.data(), false, &mut out, false);
            None
        } else {
            let cols = im2col(&geo, ti.data());
            gemm(p, kc, co, &cols, false, tk.data(), false, &mut out, false);
            Some(cols)
        };
        let out = Tensor::new(vec![geo.out_h(), geo.out_w(), co], out)?;
        self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                geo,
                cols,
            },
            &[input, kernel],
        )
    }

    /// Softmax over every element of `x` (a spatial softmax for a `[h, w]` map).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.is_empty() {
            return invalid("softmax of an empty tensor");
        }
        let max = t.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut data: Vec<f64> = t.data().iter().map(|&v| (v - max).exp()).collect();
        let total: f64 = data.iter().sum();
        for v in &mut data {
            *v /= total;
        }
        let out = Tensor::new(t.shape().to_vec(), data)?;
        self.push(out, Op::Softmax(x), &[x])
    }

    /// Multiplies every feature vector `f[i, j, :]` by the scalar `alpha[i, j]`.
    pub fn scale_cells(&mut self, alpha: Var, features: Var) -> Result<Var> {
        let (ta, tf) = (self.value(alpha), self.value(features));
        let (l, d) = tf.cells_and_channels()?;
        if ta.len() != l {
            return invalid(format!(
                "attention of {} cells does not match feature map {:?}",
                ta.len(),
                tf.shape()
            ));
        }
        let mut data = tf.data().to_vec();
        for (row, &a) in data.chunks_mut(d.max(1)).zip(ta.data()) {
            for v in row {
                *v *= a;
            }
        }
        let out = Tensor::new(tf.shape().to_vec(), data)?;
        self.push(out, Op::ScaleCells(alpha, features), &[alpha, features])
    }

    /// Concatenates along the last axis; all leading extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return invalid("concat of zero tensors");
        };
        let lead = {
            let s = self.shape(first);
            s[..s.len() - 1].to_vec()
        };
        let rows: usize = lead.iter().product();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.shape(p);
            if s.len() != lead.len() + 1 || s[..s.len() - 1] != lead[..] {
                return invalid(format!(
                    "concat leading shape mismatch: {:?} vs {:?}",
                    s, lead
                ));
            }
            widths.push(s[s.len() - 1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut off = 0;
        for (&p, &w) in parts.iter().zip(&widths) {
            let src = self.value(p).data();
            for r in 0..rows {
                data[r * total + off..r * total + off + w].copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            off += w;
        }
        let mut shape = lead;
        shape.push(total);
        let out = Tensor::new(shape, data)?;
        self.push(out, Op::Concat(parts.to_vec()), parts)
    }

    /// Tiles a `[d]` vector over an `h x w` grid giving `[h, w, d]`.
    pub fn broadcast_cells(&mut self, v: Var, h: usize, w: usize) -> Result<Var> {
        let t = self.value(v);
        if t.rank() != 1 {
            return invalid(format!("broadcast_cells expects a vector, got {:?}", t.shape()));
        }
        let d = t.len();
        let mut data = Vec::with_capacity(h * w * d);
        for _ in 0..h * w {
            data.extend_from_slice(t.data());
        }
        let out = Tensor::new(vec![h, w, d], data)?;
        self.push(out, Op::BroadcastCells(v), &[v])
    }

    fn pool_cells(&mut self, x: Var, mean: bool) -> Result<Var> {
        let t = self.value(x);
        let (l, d) = t.cells_and_channels()?;
        if l == 0 {
            return invalid("pooling over an empty spatial extent");
        }
        let mut acc = vec![0.0; d];
        for row in t.data().chunks(d.max(1)) {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += v;
            }
        }
        if mean {
            for a in &mut acc {
                *a /= l as f64;
            }
        }
        let out = Tensor::from_vec(acc);
        let op = if mean { Op::MeanCells(x) } else { Op::SumCells(x) };
        self.push(out, op, &[x])
    }

    /// Per-channel arithmetic mean over all cells: `[h, w, d] -> [d]`.
    pub fn mean_cells(&mut self, x: Var) -> Result<Var> {
        self.pool_cells(x, true)
    }

    /// Per-channel sum over all cells: `[h, w, d] -> [d]`.
    pub fn sum_cells(&mut self, x: Var) -> Result<Var> {
        self.pool_cells(x, false)
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::SumAll(x), &[x])
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).len();
        if n == 0 {
            return invalid("mean of an empty tensor");
        }
        let s = self.sum_all(x)?;
        self.scale(s, 1.0 / n as f64)
    }

    /// Normalizes each channel over its spatial cells, then applies a learned
    /// per-channel scale and shift.
    pub fn channel_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let tx = self.value(x);
        let (l, c) = tx.cells_and_channels()?;
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return invalid(format!("channel_norm affine params must be [{c}]"));
        }
        if l == 0 {
            return invalid("channel_norm over an empty spatial extent");
        }
        let data = tx.data();
        let mut mean = vec![0.0; c];
        for row in data.chunks(c) {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= l as f64);
        let mut var = vec![0.0; c];
        for row in data.chunks(c) {
            for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let inv_std: Vec<f64> = var.iter().map(|s| 1.0 / (s / l as f64 + eps).sqrt()).collect();
        let mut normalized = data.to_vec();
        for row in normalized.chunks_mut(c) {
            for ((v, &m), &is) in row.iter_mut().zip(&mean).zip(&inv_std) {
                *v = (*v - m) * is;
            }
        }
        let (g, b) = (self.value(gamma).data(), self.value(beta).data());
        let mut out = normalized.clone();
        for row in out.chunks_mut(c) {
            for ((v, &gg), &bb) in row.iter_mut().zip(g).zip(b) {
                *v = *v * gg + bb;
            }
        }
        let out = Tensor::new(tx.shape().to_vec(), out)?;
        self.push(
            out,
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            },
            &[x, gamma, beta],
        )
    }

    /// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
    pub fn avg_pool2(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let &[h, w, c] = t.shape() else {
            return invalid(format!("avg_pool2 expects [h, w, c], got {:?}", t.shape()));
        };
        let (oh, ow) = (h / 2, w / 2);
        if oh == 0 || ow == 0 {
            return invalid("avg_pool2 input too small");
        }
        let src = t.data();
        let mut out = vec![0.0; oh * ow * c];
        for y in 0..oh {
            for xx in 0..ow {
                let dst = &mut out[(y * ow + xx) * c..][..c];
                for (dy, dx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                    let s = &src[((2 * y + dy) * w + 2 * xx + dx) * c..][..c];
                    for (o, &v) in dst.iter_mut().zip(s) {
                        *o += 0.25 * v;
                    }
                }
            }
        }
        let out = Tensor::new(vec![oh, ow, c], out)?;
        self.push(out, Op::AvgPool2(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        self.push(out, Op::Reshape(x), &[x])
    }

    /// Elementwise numerically stable binary cross-entropy against a fixed target.
    pub fn bce_with_logits(&mut self, logits: Var, target: &Tensor) -> Result<Var> {
        let tl = self.value(logits);
        same_shape(tl, target, "bce_with_logits")?;
        let data = tl
            .data()
            .iter()
            .zip(target.data())
            .map(|(&x, &t)| x.max(0.0) - x * t + (-x.abs()).exp().ln_1p())
            .collect();
        let out = Tensor::new(tl.shape().to_vec(), data)?;
        self.push(
            out,
            Op::BceWithLogits {
                logits,
                target: target.data().to_vec(),
            },
            &[logits],
        )
    }

    /// Renders a 2-vector point onto an `[h, w]` grid with bilinear weights.
    pub fn bilinear_splat(&mut self, point: Var, affine: SplatAffine) -> Result<Var> {
        let tp = self.value(point);
        if tp.len() != 2 {
            return invalid(format!("splat point must have 2 values, got {:?}", tp.shape()));
        }
        let mut out = vec![0.0; affine.height * affine.width];
        for (r, c, wgt, _, _) in splat_taps(&affine, tp.data()) {
            out[r * affine.width + c] += wgt;
        }
        let out = Tensor::new(vec![affine.height, affine.width], out)?;
        self.push(out, Op::BilinearSplat { point, affine }, &[point])
    }

    /// Reverse pass from a single-element `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.value(loss).len() != 1 {
            return invalid(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape(loss)
            ));
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[loss.0] = Some(Tensor::full(self.shape(loss), 1.0));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.requires_grad {
                continue;
            }
            let Some(go) = grads[i].take() else { continue };
            if !matches!(node.op, Op::Leaf) {
                self.propagate(node, &go, &mut grads)?;
            }
            grads[i] = Some(go);
        }
        // Only leaves that asked for gradients keep them.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad {
                *g = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, contrib: Vec<f64>) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        match &mut grads[v.0] {
            Some(g) => {
                for (a, b) in g.data_mut().iter_mut().zip(contrib) {
                    *a += b;
                }
            }
            slot @ None => {
                let shape = self.nodes[v.0].value.shape().to_vec();
                *slot = Some(Tensor::new(shape, contrib).expect("gradient shape"));
            }
        }
    }

    fn propagate(&self, node: &Node, go: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let g = go.data();
        let val = |v: Var| self.nodes[v.0].value.data();
        let wants = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.to_vec());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.to_vec());
                self.accumulate(grads, *b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                if wants(*a) {
                    let c = g.iter().zip(val(*b)).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *a, c);
                }
                if wants(*b) {
                    let c = g.iter().zip(val(*a)).map(|(x, y)| x * y).collect();
                    self.accumulate(grads, *b, c);
                }
            }
            Op::Maximum(a, b) => {
                // Ties route the gradient to the first operand.
                let (va, vb) = (val(*a), val(*b));
                let ca = g.iter().zip(va.iter().zip(vb)).map(|(&x, (&p, &q))| if p >= q { x } else { 0.0 });
                let cb = g.iter().zip(va.iter().zip(vb)).map(|(&x, (&p, &q))| if p >= q { 0.0 } else { x });
                self.accumulate(grads, *a, ca.collect());
                self.accumulate(grads, *b, cb.collect());
            }
            Op::Scale(a, s) => self.accumulate(grads, *a, g.iter().map(|x| x * s).collect()),
            Op::AddScalar(a) | Op::Reshape(a) => self.accumulate(grads, *a, g.to_vec()),
            Op::Relu(a) => {
                let c = g.iter().zip(val(*a)).map(|(&x, &v)| if v > 0.0 { x } else { 0.0 });
                self.accumulate(grads, *a, c.collect());
            }
            Op::Sigmoid(a) => {
                let y = node.value.data();
                let c = g.iter().zip(y).map(|(&x, &s)| x * s * (1.0 - s));
                self.accumulate(grads, *a, c.collect());
            }
            Op::Cos(a) => {
                let c = g.iter().zip(val(*a)).map(|(&x, &v)| -x * v.sin());
                self.accumulate(grads, *a, c.collect());
            }
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.nodes[a.0].value.shape(), self.nodes[b.0].value.shape());
                let (n, k, m) = (sa[0], sa[1], sb[1]);
                if wants(*a) {
                    let mut c = vec![0.0; n * k];
                    gemm(n, m, k, g, false, val(*b), true, &mut c, false);
                    self.accumulate(grads, *a, c);
                }
                if wants(*b) {
                    let mut c = vec![0.0; k * m];
                    gemm(k, n, m, val(*a), true, g, false, &mut c, false);
                    self.accumulate(grads, *b, c);
                }
            }
            Op::AddBias(x, b) => {
                self.accumulate(grads, *x, g.to_vec());
                if wants(*b) {
                    let c = self.nodes[b.0].value.len();
                    let mut acc = vec![0.0; c];
                    for row in g.chunks(c.max(1)) {
                        for (a, &v) in acc.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    self.accumulate(grads, *b, acc);
                }
            }
            Op::Conv2d {
                input,
                kernel,
                geo,
                cols,
            } => {
                let (p, kc, co) = (geo.out_cells(), geo.patch_len(), geo.out_c);
                let patches: &[f64] = match cols {
                    Some(c) => c,
                    None => val(*input),
                };
                if wants(*kernel) {
                    let mut dk = vec![0.0; kc * co];
                    gemm(kc, p, co, patches, true, g, false, &mut dk, false);
                    self.accumulate(grads, *kernel, dk);
                }
                if wants(*input) {
                    let mut dcols = vec![0.0; p * kc];
                    gemm(p, co, kc, g, false, val(*kernel), true, &mut dcols, false);
                    if cols.is_some() {
                        let mut di = vec![0.0; self.nodes[input.0].value.len()];
                        col2im(geo, &dcols, &mut di);
                        self.accumulate(grads, *input, di);
                    } else {
                        self.accumulate(grads, *input, dcols);
                    }
                }
            }
            Op::Softmax(x) => {
                let y = node.value.data();
                let dot: f64 = g.iter().zip(y).map(|(a, b)| a * b).sum();
                let c = g.iter().zip(y).map(|(&gi, &yi)| yi * (gi - dot));
                self.accumulate(grads, *x, c.collect());
            }
            Op::ScaleCells(alpha, feat) => {
                let d = *self.nodes[feat.0].value.shape().last().unwrap();
                let a = val(*alpha);
                if wants(*alpha) {
                    let f = val(*feat);
                    let c = g
                        .chunks(d.max(1))
                        .zip(f.chunks(d.max(1)))
                        .map(|(gr, fr)| gr.iter().zip(fr).map(|(x, y)| x * y).sum())
                        .collect();
                    self.accumulate(grads, *alpha, c);
                }
                if wants(*feat) {
                    let mut c = g.to_vec();
                    for (row, &ai) in c.chunks_mut(d.max(1)).zip(a) {
                        row.iter_mut().for_each(|v| *v *= ai);
                    }
                    self.accumulate(grads, *feat, c);
                }
            }
            Op::Concat(parts) => {
                let total = *node.value.shape().last().unwrap();
                let rows = node.value.len() / total.max(1);
                let mut off = 0;
                for &p in parts {
                    let w = *self.nodes[p.0].value.shape().last().unwrap();
                    if wants(p) {
                        let mut c = vec![0.0; rows * w];
                        for r in 0..rows {
                            c[r * w..(r + 1) * w].copy_from_slice(&g[r * total + off..r * total + off + w]);
                        }
                        self.accumulate(grads, p, c);
                    }
                    off += w;
                }
            }
            Op::BroadcastCells(v) => {
                let d = self.nodes[v.0].value.len();
                let mut acc = vec![0.0; d];
                for row in g.chunks(d.max(1)) {
                    for (a, &x) in acc.iter_mut().zip(row) {
                        *a += x;
                    }
                }
                self.accumulate(grads, *v, acc);
            }
            Op::MeanCells(x) | Op::SumCells(x) => {
                let (l, _) = self.nodes[x.0].value.cells_and_channels()?;
                let s = if matches!(node.op, Op::MeanCells(_)) { 1.0 / l as f64 } else { 1.0 };
                let row: Vec<f64> = g.iter().map(|v| v * s).collect();
                let mut c = Vec::with_capacity(l * row.len());
                for _ in 0..l {
                    c.extend_from_slice(&row);
                }
                self.accumulate(grads, *x, c);
            }
            Op::SumAll(x) => {
                let n = self.nodes[x.0].value.len();
                self.accumulate(grads, *x, vec![g[0]; n]);
            }
            Op::ChannelNorm {
                x,
                gamma,
                beta,
                normalized,
                inv_std,
            } => {
                let c = inv_std.len();
                let l = normalized.len() / c;
                let gam = val(*gamma);
                let mut sum_dy = vec![0.0; c];
                let mut sum_dy_xhat = vec![0.0; c];
                for (gr, xr) in g.chunks(c).zip(normalized.chunks(c)) {
                    for j in 0..c {
                        sum_dy[j] += gr[j];
                        sum_dy_xhat[j] += gr[j] * xr[j];
                    }
                }
                if wants(*x) {
                    let lf = l as f64;
                    let mut dx = vec![0.0; g.len()];
                    for ((dr, gr), xr) in dx.chunks_mut(c).zip(g.chunks(c)).zip(normalized.chunks(c)) {
                        for j in 0..c {
                            let scale = gam[j] * inv_std[j] / lf;
                            dr[j] = scale * (lf * gr[j] - sum_dy[j] - xr[j] * sum_dy_xhat[j]);
                        }
                    }
                    self.accumulate(grads, *x, dx);
                }
                self.accumulate(grads, *gamma, sum_dy_xhat);
                self.accumulate(grads, *beta, sum_dy);
            }
            Op::AvgPool2(x) => {
                let s = self.nodes[x.0].value.shape();
                let (w, c) = (s[1], s[2]);
                let (oh, ow) = (s[0] / 2, s[1] / 2);
                let mut dx = vec![0.0; self.nodes[x.0].value.len()];
                for y in 0..oh {
                    for xx in 0..ow {
                        let src = &g[(y * ow + xx) * c..][..c];
                        for (dy, ddx) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
                            let dst = &mut dx[((2 * y + dy) * w + 2 * xx + ddx) * c..][..c];
                            for (o, &v) in dst.iter_mut().zip(src) {
                                *o += 0.25 * v;
                            }
                        }
                    }
                }
                self.accumulate(grads, *x, dx);
            }
            Op::BceWithLogits { logits, target } => {
                let c = g
                    .iter()
                    .zip(val(*logits))
                    .zip(target)
                    .map(|((&gi, &x), &t)| gi * (sigmoid(x) - t));
                self.accumulate(grads, *logits, c.collect());
            }
            Op::BilinearSplat { point, affine } => {
                let mut dp = [0.0; 2];
                for (r, c, _, dw_drow, dw_dcol) in splat_taps(affine, val(*point)) {
                    let gi = g[r * affine.width + c];
                    dp[0] += gi * dw_dcol * affine.col_scale;
                    dp[1] += gi * dw_drow * affine.row_scale;
                }
                self.accumulate(grads, *point, dp.to_vec());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), data.to_vec()).unwrap()
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2, 2], &[1.0, -2.0, 3.0, 0.5]), true).unwrap();
        let s = g.sum_all(x).unwrap();
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn half_square_gradient_is_identity() {
        let mut g = Graph::new();
        let data = [1.0, -2.0, 3.0, 0.5];
        let x = g.leaf(t(&[4], &data), true).unwrap();
        let sq = g.square(x).unwrap();
        let s = g.sum_all(sq).unwrap();
        let loss = g.scale(s, 0.5).unwrap();
        let grads = g.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &data);
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
        let c = g.constant(t(&[2], &[3.0, 4.0])).unwrap();
        let y = g.mul(x, c).unwrap();
        let s = g.sum_all(y).unwrap();
        let grads = g.backward(s).unwrap();
        assert!(grads.get(c).is_none());
        assert_eq!(grads.get(x).unwrap().data(), &[3.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[2], &[1.0, 2.0]), true).unwrap();
        assert!(matches!(g.backward(x), Err(NumericsError::InvalidArgument(_))));
    }

    #[test]
    fn backward_is_repeatable() {
        let mut g = Graph::new();
        let x = g.leaf(t(&[3], &[0.3, -0.2, 0.9]), true).unwrap();
        let y = g.sigmoid(x).unwrap();
        let z = g.softmax(y).unwrap();
        let w = g.constant(t(&[3], &[1.0, 2.0, 3.0])).unwrap();
        let p = g.mul(z, w).unwrap();
        let s = g.sum_all(p).unwrap();
        let a = g.backward(s).unwrap();
        let b = g.backward(s).unwrap();
        assert_eq!(a.get(x), b.get(x));
    }

    #[test]
    fn non_finite_values_are_rejected() {
        let mut g = Graph::new();
        assert!(g.leaf(t(&[1], &[f64::NAN]), true).is_err());
        let x = g.leaf(t(&[1], &[1e300]), true).unwrap();
        let y = g.mul(x, x);
        assert!(matches!(y, Err(NumericsError::NonFinite(_))));
    }

    #[test]
    fn splat_distributes_unit_mass() {
        let mut g = Graph::new();
        let affine = SplatAffine {
            height: 4,
            width: 4,
            col_scale: 1.0,
            col_offset: 0.0,
            row_scale: 1.0,
            row_offset: 0.0,
        };
        let p = g.leaf(t(&[2], &[1.75, 2.5]), true).unwrap();
        let s = g.bilinear_splat(p, affine).unwrap();
        let v = g.value(s);
        assert!((v.sum() - 1.0).abs() < 1e-12);
        // col 1.25 -> cells 1 and 2 at 0.75/0.25; row 2.0 exactly on cell 2 center
        assert!((v.at(&[2, 1]) - 0.75).abs() < 1e-12);
        assert!((v.at(&[2, 2]) - 0.25).abs() < 1e-12);
    }
}
