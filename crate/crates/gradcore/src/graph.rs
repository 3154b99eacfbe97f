//! Tape-based reverse-mode differentiation.
//!
//! Every operation appends a node to the tape. Nodes only reference earlier
//! nodes, so the tape order is a topological order and a single reverse sweep
//! visits each node exactly once.

use crate::error::{GradError, Result};
use crate::linalg::{col2im, gemm, im2col, swap_outer, ConvGeom};
use crate::params::{ParamId, ParamStore};
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum BnMode<'a> {
    /// Normalize with batch statistics.
    Train,
    /// Normalize with frozen running statistics.
    Eval { mean: &'a [f64], var: &'a [f64] },
}

/// Per-channel statistics of a training-mode batch-norm call.
#[derive(Clone, Debug)]
pub struct BatchStats {
    pub mean: Vec<f64>,
    /// Biased (population) variance.
    pub var: Vec<f64>,
    /// Elements reduced per channel (`N·H·W`).
    pub count: usize,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Constant,
    Param(ParamId),
    Conv2d { input: Var, weight: Var, bias: Option<Var>, geom: ConvGeom },
    Dense { input: Var, weight: Var, bias: Option<Var> },
    BatchNorm { input: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool },
    GlobalAvgPool { input: Var },
    Act { input: Var, kind: Activation },
    Add { a: Var, b: Var },
    Scale { input: Var, factor: f64 },
    Modulate { features: Var, attention: Var },
    Concat { parts: Vec<Var> },
    Mix { weights: Var, parts: Vec<Var> },
    Softmax { input: Var },
    SoftmaxCrossEntropy { logits: Var, labels: Vec<f64>, probs: Vec<f64> },
    Sum { input: Var },
}

/// Patch matrix `[C·kh·kw, N·Ho·Wo]` of a whole batch.
fn patches(x: &[f64], geom: &ConvGeom, n: usize) -> Vec<f64> {
    let (rows, ncols) = (geom.rows(), geom.cols());
    let ld = n * ncols;
    let mut cols = vec![0.0; rows * ld];
    if geom.is_pointwise() {
        swap_outer(x, n, geom.c, ncols, &mut cols);
    } else {
        let img = geom.c * geom.h * geom.w;
        for s in 0..n {
            im2col(&x[s * img..(s + 1) * img], geom, &mut cols[s * ncols..], ld);
        }
    }
    cols
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf | Op::Constant | Op::Param(_) => Vec::new(),
            Op::Conv2d { input, weight, bias, .. } | Op::Dense { input, weight, bias, .. } => {
                [Some(*input), Some(*weight), *bias].into_iter().flatten().collect()
            }
            Op::BatchNorm { input, gamma, beta, .. } => vec![*input, *gamma, *beta],
            Op::GlobalAvgPool { input }
            | Op::Act { input, .. }
            | Op::Scale { input, .. }
            | Op::Softmax { input }
            | Op::Sum { input }
            | Op::SoftmaxCrossEntropy { logits: input, .. } => vec![*input],
            Op::Add { a, b } => vec![*a, *b],
            Op::Modulate { features, attention } => vec![*features, *attention],
            Op::Concat { parts } => parts.clone(),
            Op::Mix { weights, parts } => {
                let mut v = parts.clone();
                v.push(*weights);
                v
            }
        }
    }
}

struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
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

    /// Gradient of the last backward pass w.r.t. `v`; `None` when `v` was not
    /// reached.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let requires_grad = match &op {
            Op::Leaf | Op::Param(_) => true,
            Op::Constant => false,
            other => other.inputs().iter().any(|v| self.nodes[v.0].requires_grad),
        };
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn input(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    /// Input excluded from differentiation; [`Graph::grad`] stays `None` for it
    /// and for everything computed from constants alone.
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Constant)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn conv2d(&mut self, input: Var, weight: Var, bias: Option<Var>, stride: usize, pad: usize) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(GradError::shape("conv2d", format!("input {:?} and weight {:?} must both be rank 4", xs, ws)));
        }
        let (n, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (k, wc, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        if wc != c {
            return Err(GradError::shape("conv2d", format!("input has {} channels, weight expects {}", c, wc)));
        }
        if stride == 0 {
            return Err(GradError::shape("conv2d", "stride must be >= 1"));
        }
        if kh > h + 2 * pad || kw > w + 2 * pad {
            return Err(GradError::shape(
                "conv2d",
                format!("kernel {}x{} larger than padded input {}x{}", kh, kw, h + 2 * pad, w + 2 * pad),
            ));
        }
        if let Some(b) = bias {
            if self.shape(b) != [k] {
                return Err(GradError::shape("conv2d", format!("bias {:?} does not match {} output channels", self.shape(b), k)));
            }
        }
        let geom = ConvGeom { c, h, w, kh, kw, stride, pad, ho: (h + 2 * pad - kh) / stride + 1, wo: (w + 2 * pad - kw) / stride + 1 };
        let (rows, ncols) = (geom.rows(), geom.cols());
        let ld = n * ncols;
        let cols = patches(self.value(input).data(), &geom, n);
        let mut kmaj = vec![0.0; k * ld];
        gemm(k, rows, ld, self.value(weight).data(), false, &cols, false, 0.0, &mut kmaj);
        let mut out = vec![0.0; n * k * ncols];
        swap_outer(&kmaj, k, n, ncols, &mut out);
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for (chunk, &bk) in out.chunks_mut(ncols).zip(bv.iter().cycle()) {
                chunk.iter_mut().for_each(|v| *v += bk);
            }
        }
        let value = Tensor::new(vec![n, k, geom.ho, geom.wo], out)?;
        Ok(self.push(value, Op::Conv2d { input, weight, bias, geom }))
    }

    pub fn dense(&mut self, input: Var, weight: Var, bias: Option<Var>) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        let ws = self.shape(weight).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(GradError::shape("dense", format!("input {:?} incompatible with weight {:?}", xs, ws)));
        }
        let (n, d, e) = (xs[0], xs[1], ws[1]);
        if let Some(b) = bias {
            if self.shape(b) != [e] {
                return Err(GradError::shape("dense", format!("bias {:?} does not match output width {}", self.shape(b), e)));
            }
        }
        let mut out = vec![0.0; n * e];
        gemm(n, d, e, self.value(input).data(), false, self.value(weight).data(), false, 0.0, &mut out);
        if let Some(b) = bias {
            let bv = self.value(b).data();
            for row in out.chunks_mut(e) {
                row.iter_mut().zip(bv).for_each(|(v, b)| *v += b);
            }
        }
        let value = Tensor::new(vec![n, e], out)?;
        Ok(self.push(value, Op::Dense { input, weight, bias }))
    }

    /// Per-channel batch normalization of a `[N,C,H,W]` tensor. In train mode
    /// the batch statistics are returned so the caller can update its running
    /// estimates.
    pub fn batch_norm(&mut self, input: Var, gamma: Var, beta: Var, mode: BnMode<'_>, eps: f64) -> Result<(Var, Option<BatchStats>)> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 4 {
            return Err(GradError::shape("batch_norm", format!("input {:?} must be rank 4", xs)));
        }
        let (n, c, hw) = (xs[0], xs[1], xs[2] * xs[3]);
        if self.shape(gamma) != [c] || self.shape(beta) != [c] {
            return Err(GradError::shape("batch_norm", format!("gamma/beta must have shape [{}]", c)));
        }
        if eps <= 0.0 {
            return Err(GradError::shape("batch_norm", "eps must be positive"));
        }
        let x = self.value(input).data();
        let count = n * hw;
        let (mean, var, train) = match mode {
            BnMode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for ch in 0..c {
                    let mut s = 0.0;
                    for b in 0..n {
                        s += x[(b * c + ch) * hw..][..hw].iter().sum::<f64>();
                    }
                    let mu = s / count as f64;
                    let mut ss = 0.0;
                    for b in 0..n {
                        ss += x[(b * c + ch) * hw..][..hw].iter().map(|v| (v - mu) * (v - mu)).sum::<f64>();
                    }
                    mean[ch] = mu;
                    var[ch] = ss / count as f64;
                }
                (mean, var, true)
            }
            BnMode::Eval { mean, var } => {
                if mean.len() != c || var.len() != c {
                    return Err(GradError::shape("batch_norm", format!("running statistics must have {} entries", c)));
                }
                (mean.to_vec(), var.to_vec(), false)
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let g = self.value(gamma).data();
        let bt = self.value(beta).data();
        let mut xhat = vec![0.0; x.len()];
        let mut out = vec![0.0; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    let xh = (x[i] - mean[ch]) * inv_std[ch];
                    xhat[i] = xh;
                    out[i] = g[ch] * xh + bt[ch];
                }
            }
        }
        let stats = train.then_some(BatchStats { mean, var, count });
        let value = Tensor::new(xs, out)?;
        let v = self.push(value, Op::BatchNorm { input, gamma, beta, xhat, inv_std, train });
        Ok((v, stats))
    }

    pub fn global_avg_pool(&mut self, input: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 4 {
            return Err(GradError::shape("global_avg_pool", format!("input {:?} must be rank 4", xs)));
        }
        let hw = xs[2] * xs[3];
        let out: Vec<f64> = self.value(input).data().chunks(hw).map(|c| c.iter().sum::<f64>() / hw as f64).collect();
        let value = Tensor::new(vec![xs[0], xs[1]], out)?;
        Ok(self.push(value, Op::GlobalAvgPool { input }))
    }

    pub fn activation(&mut self, kind: Activation, input: Var) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|&v| apply_activation(kind, v)).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Act { input, kind })
    }

    /// On/off state of every ReLU unit in the graph, in node order.
    pub fn activation_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            if let Op::Act { input, kind: Activation::Relu } = node.op {
                out.extend(self.nodes[input.0].value.data().iter().map(|&v| v > 0.0));
            }
        }
        out
    }

    pub fn relu(&mut self, input: Var) -> Var {
        self.activation(Activation::Relu, input)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(Activation::Sigmoid, input)
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(Activation::Tanh, input)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(GradError::shape("add", format!("{:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x + y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let x = self.value(input);
        let data = x.data().iter().map(|v| v * factor).collect();
        let value = Tensor::new(x.shape().to_vec(), data).expect("same shape");
        self.push(value, Op::Scale { input, factor })
    }

    /// `(1 + a) ⊙ f` with a single-channel map `a: [N,1,H,W]` broadcast over
    /// the channels of `f: [N,C,H,W]`.
    pub fn modulate(&mut self, features: Var, attention: Var) -> Result<Var> {
        let fs = self.shape(features).to_vec();
        let as_ = self.shape(attention).to_vec();
        if fs.len() != 4 || as_.len() != 4 || as_[1] != 1 || fs[0] != as_[0] || fs[2..] != as_[2..] {
            return Err(GradError::shape("modulate", format!("features {:?} vs attention {:?}", fs, as_)));
        }
        let (n, c, hw) = (fs[0], fs[1], fs[2] * fs[3]);
        let f = self.value(features).data();
        let a = self.value(attention).data();
        let mut out = vec![0.0; f.len()];
        for b in 0..n {
            let am = &a[b * hw..(b + 1) * hw];
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                for i in 0..hw {
                    out[off + i] = (1.0 + am[i]) * f[off + i];
                }
            }
        }
        let value = Tensor::new(fs, out)?;
        Ok(self.push(value, Op::Modulate { features, attention }))
    }

    /// Concatenate `[N, D_i]` matrices along the feature axis.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let n = match parts.first() {
            Some(p) => self.shape(*p)[0],
            None => return Err(GradError::shape("concat", "no inputs")),
        };
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let s = self.shape(*p);
            if s.len() != 2 || s[0] != n {
                return Err(GradError::shape("concat", format!("part {:?} with batch {}", s, n)));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for r in 0..n {
            for (p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        let value = Tensor::new(vec![n, total], out)?;
        Ok(self.push(value, Op::Concat { parts: parts.to_vec() }))
    }

    /// Row-wise convex mix `m[n] = Σ_k weights[n,k] · parts[k][n]`.
    pub fn mix(&mut self, weights: Var, parts: &[Var]) -> Result<Var> {
        let ws = self.shape(weights).to_vec();
        if ws.len() != 2 || ws[1] != parts.len() || parts.is_empty() {
            return Err(GradError::shape("mix", format!("weights {:?} for {} parts", ws, parts.len())));
        }
        let ps = self.shape(parts[0]).to_vec();
        if ps.len() != 2 || ps[0] != ws[0] || parts.iter().any(|p| self.shape(*p) != ps.as_slice()) {
            return Err(GradError::shape("mix", "parts must share shape [N, D]"));
        }
        let (n, d, k) = (ps[0], ps[1], parts.len());
        let wv = self.value(weights).data();
        let mut out = vec![0.0; n * d];
        for (j, p) in parts.iter().enumerate() {
            let pv = self.value(*p).data();
            for r in 0..n {
                let a = wv[r * k + j];
                for i in 0..d {
                    out[r * d + i] += a * pv[r * d + i];
                }
            }
        }
        let value = Tensor::new(ps, out)?;
        Ok(self.push(value, Op::Mix { weights, parts: parts.to_vec() }))
    }

    /// Row-wise softmax of a `[N, M]` matrix.
    pub fn softmax(&mut self, input: Var) -> Result<Var> {
        let xs = self.shape(input).to_vec();
        if xs.len() != 2 {
            return Err(GradError::shape("softmax", format!("input {:?} must be rank 2", xs)));
        }
        let out = softmax_rows(self.value(input).data(), xs[1]);
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, Op::Softmax { input }))
    }

    /// `J = -Σ_n Σ_m y_nm · log softmax(z)_nm`, summed over the batch.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &Tensor) -> Result<Var> {
        let zs = self.shape(logits).to_vec();
        if zs.len() != 2 || zs[1] < 2 || labels.shape() != zs.as_slice() {
            return Err(GradError::shape("softmax_cross_entropy", format!("logits {:?} vs labels {:?}", zs, labels.shape())));
        }
        let m = zs[1];
        for (row, y) in labels.data().chunks(m).enumerate() {
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            let zeros = y.iter().filter(|&&v| v == 0.0).count();
            if ones != 1 || zeros != m - 1 {
                return Err(GradError::NotOneHot { row });
            }
        }
        let z = self.value(logits).data();
        let mut loss = 0.0;
        for (zr, yr) in z.chunks(m).zip(labels.data().chunks(m)) {
            let lse = log_sum_exp(zr);
            let dot: f64 = zr.iter().zip(yr).map(|(a, b)| a * b).sum();
            loss += lse - dot;
        }
        let probs = softmax_rows(z, m);
        let op = Op::SoftmaxCrossEntropy { logits, labels: labels.data().to_vec(), probs };
        Ok(self.push(Tensor::scalar(loss), op))
    }

    pub fn sum(&mut self, input: Var) -> Var {
        let s = self.value(input).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum { input })
    }

    /// Reverse sweep from a scalar `loss`. Parameter gradients are added into
    /// `store`; they are never cleared here, callers zero them explicitly.
    /// A graph supports exactly one backward pass.
    pub fn backward(&mut self, loss: Var, store: &mut ParamStore) -> Result<()> {
        if self.backward_done {
            return Err(GradError::BackwardTwice);
        }
        if self.value(loss).numel() != 1 {
            return Err(GradError::NotScalar { shape: self.shape(loss).to_vec() });
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(grad) = self.nodes[i].grad.take() else {
                continue;
            };
            let contributions = self.local_backward(i, &grad);
            self.nodes[i].grad = Some(grad);
            for (v, g) in contributions {
                if !self.nodes[v.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[v.0].grad {
                    Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                    slot @ None => *slot = Some(g),
                }
            }
        }
        for node in &self.nodes {
            if let (Op::Param(id), Some(g)) = (&node.op, &node.grad) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(())
    }

    fn local_backward(&self, i: usize, dy: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        match &node.op {
            Op::Leaf | Op::Constant | Op::Param(_) => Vec::new(),
            Op::Conv2d { input, weight, bias, geom } => {
                let n = self.shape(*input)[0];
                let k = self.shape(*weight)[0];
                let (rows, ncols) = (geom.rows(), geom.cols());
                let img = geom.c * geom.h * geom.w;
                let x = val(*input);
                let w = val(*weight);
                let ld = n * ncols;
                let cols = patches(x, geom, n);
                let mut dyk = vec![0.0; k * ld];
                swap_outer(dy, n, k, ncols, &mut dyk);
                let mut dw = vec![0.0; w.len()];
                gemm(k, ld, rows, &dyk, false, &cols, true, 0.0, &mut dw);
                let mut out = vec![(*weight, dw)];
                if self.nodes[input.0].requires_grad {
                    let mut dcols = cols;
                    gemm(rows, k, ld, w, true, &dyk, false, 0.0, &mut dcols);
                    let mut dx = vec![0.0; x.len()];
                    if geom.is_pointwise() {
                        swap_outer(&dcols, geom.c, n, ncols, &mut dx);
                    } else {
                        for s in 0..n {
                            col2im(&dcols[s * ncols..], geom, &mut dx[s * img..(s + 1) * img], ld);
                        }
                    }
                    out.push((*input, dx));
                }
                if let Some(b) = bias {
                    let mut db = vec![0.0; k];
                    for (chunk, j) in dy.chunks(ncols).zip((0..k).cycle()) {
                        db[j] += chunk.iter().sum::<f64>();
                    }
                    out.push((*b, db));
                }
                out
            }
            Op::Dense { input, weight, bias } => {
                let (n, d) = (self.shape(*input)[0], self.shape(*input)[1]);
                let e = self.shape(*weight)[1];
                let mut dx = vec![0.0; n * d];
                let mut dw = vec![0.0; d * e];
                gemm(n, e, d, dy, false, val(*weight), true, 0.0, &mut dx);
                gemm(d, n, e, val(*input), true, dy, false, 0.0, &mut dw);
                let mut out = vec![(*input, dx), (*weight, dw)];
                if let Some(b) = bias {
                    let mut db = vec![0.0; e];
                    for row in dy.chunks(e) {
                        db.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                    }
                    out.push((*b, db));
                }
                out
            }
            Op::BatchNorm { input, gamma, beta, xhat, inv_std, train } => {
                let xs = self.shape(*input);
                let (n, c, hw) = (xs[0], xs[1], xs[2] * xs[3]);
                let g = val(*gamma);
                let mut dgamma = vec![0.0; c];
                let mut dbeta = vec![0.0; c];
                let mut dx = vec![0.0; dy.len()];
                let m = (n * hw) as f64;
                for ch in 0..c {
                    let mut sum_dy = 0.0;
                    let mut sum_dy_xhat = 0.0;
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        for j in off..off + hw {
                            sum_dy += dy[j];
                            sum_dy_xhat += dy[j] * xhat[j];
                        }
                    }
                    dgamma[ch] = sum_dy_xhat;
                    dbeta[ch] = sum_dy;
                    let scale = g[ch] * inv_std[ch];
                    for b in 0..n {
                        let off = (b * c + ch) * hw;
                        for j in off..off + hw {
                            dx[j] = if *train { scale * (dy[j] - sum_dy / m - xhat[j] * sum_dy_xhat / m) } else { scale * dy[j] };
                        }
                    }
                }
                vec![(*input, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::GlobalAvgPool { input } => {
                let xs = self.shape(*input);
                let hw = xs[2] * xs[3];
                let inv = 1.0 / hw as f64;
                let dx = dy.iter().flat_map(|g| std::iter::repeat_n(g * inv, hw)).collect();
                vec![(*input, dx)]
            }
            Op::Act { input, kind } => {
                let y = node.value.data();
                let x = val(*input);
                let dx = dy
                    .iter()
                    .zip(x.iter().zip(y))
                    .map(|(g, (&xv, &yv))| {
                        g * match kind {
                            Activation::Relu => {
                                if xv > 0.0 {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            Activation::Sigmoid => yv * (1.0 - yv),
                            Activation::Tanh => 1.0 - yv * yv,
                        }
                    })
                    .collect();
                vec![(*input, dx)]
            }
            Op::Add { a, b } => vec![(*a, dy.to_vec()), (*b, dy.to_vec())],
            Op::Scale { input, factor } => {
                vec![(*input, dy.iter().map(|g| g * factor).collect())]
            }
            Op::Modulate { features, attention } => {
                let fs = self.shape(*features);
                let (n, c, hw) = (fs[0], fs[1], fs[2] * fs[3]);
                let f = val(*features);
                let a = val(*attention);
                let mut df = vec![0.0; f.len()];
                let mut da = vec![0.0; a.len()];
                for b in 0..n {
                    for ch in 0..c {
                        let off = (b * c + ch) * hw;
                        for j in 0..hw {
                            df[off + j] = (1.0 + a[b * hw + j]) * dy[off + j];
                            da[b * hw + j] += f[off + j] * dy[off + j];
                        }
                    }
                }
                vec![(*features, df), (*attention, da)]
            }
            Op::Concat { parts } => {
                let n = self.shape(parts[0])[0];
                let total: usize = node.value.shape()[1];
                let mut offset = 0;
                let mut out = Vec::with_capacity(parts.len());
                for p in parts {
                    let w = self.shape(*p)[1];
                    let mut g = Vec::with_capacity(n * w);
                    for r in 0..n {
                        g.extend_from_slice(&dy[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    out.push((*p, g));
                }
                out
            }
            Op::Mix { weights, parts } => {
                let (n, d) = (node.value.shape()[0], node.value.shape()[1]);
                let k = parts.len();
                let wv = val(*weights);
                let mut dwts = vec![0.0; n * k];
                let mut out = Vec::with_capacity(k + 1);
                for (j, p) in parts.iter().enumerate() {
                    let pv = val(*p);
                    let mut dp = vec![0.0; n * d];
                    for r in 0..n {
                        let a = wv[r * k + j];
                        let mut acc = 0.0;
                        for i in 0..d {
                            dp[r * d + i] = a * dy[r * d + i];
                            acc += pv[r * d + i] * dy[r * d + i];
                        }
                        dwts[r * k + j] = acc;
                    }
                    out.push((*p, dp));
                }
                out.push((*weights, dwts));
                out
            }
            Op::Softmax { input } => {
                let m = node.value.shape()[1];
                let p = node.value.data();
                let mut dx = vec![0.0; p.len()];
                for ((pr, gr), dr) in p.chunks(m).zip(dy.chunks(m)).zip(dx.chunks_mut(m)) {
                    let dot: f64 = pr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..m {
                        dr[j] = pr[j] * (gr[j] - dot);
                    }
                }
                vec![(*input, dx)]
            }
            Op::SoftmaxCrossEntropy { logits, labels, probs } => {
                let g = dy[0];
                let dz = probs.iter().zip(labels).map(|(p, y)| g * (p - y)).collect();
                vec![(*logits, dz)]
            }
            Op::Sum { input } => {
                let n = self.value(*input).numel();
                vec![(*input, vec![dy[0]; n])]
            }
        }
    }
}

pub fn apply_activation(kind: Activation, x: f64) -> f64 {
    match kind {
        Activation::Relu => x.max(0.0),
        Activation::Sigmoid => stable_sigmoid(x),
        Activation::Tanh => x.tanh(),
    }
}

/// Logistic function evaluated on the branch that never exponentiates a
/// large positive number.
pub fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn softmax_rows(z: &[f64], m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(z.len());
    for row in z.chunks(m) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut s = 0.0;
        for v in row {
            let e = (v - max).exp();
            s += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|v| *v /= s);
    }
    out
}
