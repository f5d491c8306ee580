//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! The forward pass records one [`OpRecord`] per operation into a [`Tape`];
//! [`Tape::backward`] replays the records in reverse, accumulating
//! vector-Jacobian products into per-node gradient buffers. All forward
//! values live in the tape arena, so backward routines read their saved
//! inputs from there instead of re-computing them.
//!
//! The operator set is exactly what the model needs: linear algebra, a
//! fixed 3×3/pad-1/stride-1 convolution, 2×2 max pooling, leaky ReLU,
//! column concatenation, log-softmax, per-sample masked NLL, elementwise
//! clamping, the usual reductions — and the gradient-reversal operator,
//! which is the identity forward and multiplies the upstream gradient by
//! −1 exactly on the way back.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::{matmul_nn, matmul_nt, matmul_tn, Tensor};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

impl NodeId {
    /// Position in the tape arena; indexes the buffers returned by
    /// [`Tape::backward_values`].
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum OpRecord {
    MatMul { a: NodeId, b: NodeId, out: NodeId },
    AddBias { x: NodeId, bias: NodeId, out: NodeId },
    Conv2d { x: NodeId, kernel: NodeId, bias: NodeId, out: NodeId },
    MaxPool2d { x: NodeId, out: NodeId, argmax: Vec<usize> },
    LeakyRelu { x: NodeId, out: NodeId, slope: f64 },
    Concat { parts: Vec<NodeId>, out: NodeId },
    LogSoftmax { x: NodeId, out: NodeId },
    NllLoss { log_probs: NodeId, out: NodeId, targets: Vec<usize>, mask: Vec<bool> },
    GradReverse { x: NodeId, out: NodeId },
    ClampMax { x: NodeId, out: NodeId, ceiling: f64 },
    Sum { x: NodeId, out: NodeId },
    Scale { x: NodeId, out: NodeId, factor: f64 },
    Add { a: NodeId, b: NodeId, out: NodeId },
    Reshape { x: NodeId, out: NodeId },
}

/// Per-parameter gradients produced by one backward traversal, keyed by
/// parameter name. Every named parameter on the tape gets an entry; leaves
/// the loss cannot reach get zeros of the parameter's shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    grads: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.grads.iter()
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

/// Recorded computation graph: a value arena plus op records in
/// topological (creation) order.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Tensor>,
    records: Vec<OpRecord>,
    params: Vec<(String, NodeId)>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    /// Registers a named parameter leaf. Parameters always receive an entry
    /// in the [`Gradients`] of a backward pass.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        let id = self.push(value.with_requires_grad(true));
        self.params.push((name.into(), id));
        id
    }

    /// Registers an anonymous input leaf (no gradient is reported for it).
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push(value.with_requires_grad(false))
    }

    /// Re-enters a value as a fresh leaf, cutting it off from its producers.
    /// Gradient flowing into the detached node stops there.
    pub fn detach(&mut self, x: NodeId) -> NodeId {
        let v = self.nodes[x.0].clone();
        self.input(v)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0]
    }

    pub fn num_records(&self) -> usize {
        self.records.len()
    }

    fn push(&mut self, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(value);
        id
    }

    // ── Operators ───────────────────────────────────────────────────

    /// Matrix product of a `m×k` and a `k×n` node.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dim("matmul", format!("{sa:?} · {sb:?}")));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_nn(self.value(a).data(), self.value(b).data(), m, k, n);
        let out = self.push(Tensor::new(vec![m, n], data)?);
        self.records.push(OpRecord::MatMul { a, b, out });
        Ok(out)
    }

    /// Adds a length-`n` bias row to every row of a `m×n` node.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (sx, sb) = (self.value(x).shape(), self.value(bias).shape());
        if sx.len() != 2 || sb.len() != 1 || sx[1] != sb[0] {
            return Err(Error::dim("add_bias", format!("{sx:?} + {sb:?}")));
        }
        let (m, n) = (sx[0], sx[1]);
        let mut data = self.value(x).data().to_vec();
        let b = self.value(bias).data();
        for i in 0..m {
            for j in 0..n {
                data[i * n + j] += b[j];
            }
        }
        let out = self.push(Tensor::new(vec![m, n], data)?);
        self.records.push(OpRecord::AddBias { x, bias, out });
        Ok(out)
    }

    /// 3×3 cross-correlation, padding 1, stride 1, plus per-channel bias.
    /// Input `b×c×h×w`, kernel `o×c×3×3`, bias `o`; output `b×o×h×w`.
    #[allow(clippy::needless_range_loop)]
    pub fn conv2d(&mut self, x: NodeId, kernel: NodeId, bias: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        let sk = self.value(kernel).shape().to_vec();
        let sb = self.value(bias).shape().to_vec();
        if sx.len() != 4 || sk.len() != 4 || sk[2] != 3 || sk[3] != 3 {
            return Err(Error::dim("conv2d", format!("input {sx:?}, kernel {sk:?}")));
        }
        if sx[1] != sk[1] {
            return Err(Error::dim(
                "conv2d",
                format!("input channels {} vs kernel channels {} ({sx:?}, {sk:?})", sx[1], sk[1]),
            ));
        }
        if sb.len() != 1 || sb[0] != sk[0] {
            return Err(Error::dim("conv2d", format!("bias {sb:?} vs kernel {sk:?}")));
        }
        let (bn, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        if h < 3 || w < 3 {
            return Err(Error::dim("conv2d", format!("spatial extent {h}×{w} below 3×3")));
        }
        let o = sk[0];
        let xd = self.value(x).data();
        let kd = self.value(kernel).data();
        let bd = self.value(bias).data();
        let mut data = vec![0.0; bn * o * h * w];
        for b in 0..bn {
            for oc in 0..o {
                let obase = (b * o + oc) * h * w;
                for i in 0..h {
                    for j in 0..w {
                        let mut acc = bd[oc];
                        for ic in 0..c {
                            let ibase = (b * c + ic) * h * w;
                            let kbase = (oc * c + ic) * 9;
                            for di in 0..3usize {
                                let ii = i as isize + di as isize - 1;
                                if ii < 0 || ii >= h as isize {
                                    continue;
                                }
                                for dj in 0..3usize {
                                    let jj = j as isize + dj as isize - 1;
                                    if jj < 0 || jj >= w as isize {
                                        continue;
                                    }
                                    acc += xd[ibase + ii as usize * w + jj as usize]
                                        * kd[kbase + di * 3 + dj];
                                }
                            }
                        }
                        data[obase + i * w + j] = acc;
                    }
                }
            }
        }
        let out = self.push(Tensor::new(vec![bn, o, h, w], data)?);
        self.records.push(OpRecord::Conv2d { x, kernel, bias, out });
        Ok(out)
    }

    /// 2×2 max pooling with stride 2. Ties go to the first occurrence in
    /// row-major scan order, and backward routes the whole gradient there.
    pub fn maxpool2d(&mut self, x: NodeId) -> Result<NodeId> {
        let sx = self.value(x).shape().to_vec();
        if sx.len() != 4 {
            return Err(Error::dim("maxpool2d", format!("{sx:?}")));
        }
        let (bn, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::dim("maxpool2d", format!("odd spatial extent {h}×{w}")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let xd = self.value(x).data();
        let mut data = vec![0.0; bn * c * oh * ow];
        let mut argmax = vec![0usize; bn * c * oh * ow];
        for bc in 0..bn * c {
            let ibase = bc * h * w;
            let obase = bc * oh * ow;
            for i in 0..oh {
                for j in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0usize;
                    for di in 0..2 {
                        for dj in 0..2 {
                            let idx = ibase + (2 * i + di) * w + (2 * j + dj);
                            if xd[idx] > best {
                                best = xd[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    data[obase + i * ow + j] = best;
                    argmax[obase + i * ow + j] = best_idx;
                }
            }
        }
        let out = self.push(Tensor::new(vec![bn, c, oh, ow], data)?);
        self.records.push(OpRecord::MaxPool2d { x, out, argmax });
        Ok(out)
    }

    /// `y = x` for `x ≥ 0`, `slope·x` otherwise.
    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        assert!(slope > 0.0 && slope < 1.0, "leaky_relu slope must lie in (0,1), got {slope}");
        let v = self.value(x);
        let data = v.data().iter().map(|&a| if a >= 0.0 { a } else { slope * a }).collect();
        let shape = v.shape().to_vec();
        let out = self.push(Tensor::new(shape, data).expect("shape preserved"));
        self.records.push(OpRecord::LeakyRelu { x, out, slope });
        out
    }

    /// Column-wise concatenation of `b×dᵢ` nodes, in argument order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no parts".to_string()));
        }
        let rows = self.value(parts[0]).shape()[0];
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let s = self.value(p).shape();
            if s.len() != 2 || s[0] != rows {
                return Err(Error::dim(
                    "concat",
                    format!("batch extent mismatch: first part has {rows} rows, part has shape {s:?}"),
                ));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut data = vec![0.0; rows * total];
        let mut col = 0;
        for (&p, &wd) in parts.iter().zip(&widths) {
            let pd = self.value(p).data();
            for r in 0..rows {
                data[r * total + col..r * total + col + wd]
                    .copy_from_slice(&pd[r * wd..(r + 1) * wd]);
            }
            col += wd;
        }
        let out = self.push(Tensor::new(vec![rows, total], data)?);
        self.records.push(OpRecord::Concat { parts: parts.to_vec(), out });
        Ok(out)
    }

    /// Row-wise `x − logsumexp(x)`, stabilized by max subtraction.
    pub fn log_softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 2 || s[1] < 2 {
            return Err(Error::dim("log_softmax", format!("{s:?} (need b×k with k ≥ 2)")));
        }
        let (b, k) = (s[0], s[1]);
        let xd = self.value(x).data();
        let mut data = vec![0.0; b * k];
        for r in 0..b {
            let row = &xd[r * k..(r + 1) * k];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
            for j in 0..k {
                data[r * k + j] = row[j] - lse;
            }
        }
        let out = self.push(Tensor::new(vec![b, k], data)?);
        self.records.push(OpRecord::LogSoftmax { x, out });
        Ok(out)
    }

    /// Per-sample negative log-likelihood: `ℓᵢ = −log_probs[i, targetᵢ]`
    /// where the mask is true, `0` otherwise. Returned unreduced so callers
    /// can clamp each term before averaging.
    pub fn nll_loss(&mut self, log_probs: NodeId, targets: &[usize], mask: &[bool]) -> Result<NodeId> {
        let s = self.value(log_probs).shape().to_vec();
        if s.len() != 2 {
            return Err(Error::dim("nll_loss", format!("{s:?}")));
        }
        let (b, k) = (s[0], s[1]);
        if targets.len() != b || mask.len() != b {
            return Err(Error::dim(
                "nll_loss",
                format!("{b} rows vs {} targets / {} mask entries", targets.len(), mask.len()),
            ));
        }
        if let Some(&t) = targets.iter().find(|&&t| t >= k) {
            return Err(Error::Label(format!("target {t} out of range for {k} classes")));
        }
        let lp = self.value(log_probs).data();
        let mut data = vec![0.0; b];
        for i in 0..b {
            if mask[i] {
                data[i] = -lp[i * k + targets[i]];
            }
        }
        let out = self.push(Tensor::new(vec![b], data)?);
        self.records.push(OpRecord::NllLoss {
            log_probs,
            out,
            targets: targets.to_vec(),
            mask: mask.to_vec(),
        });
        Ok(out)
    }

    /// Identity forward; multiplies the upstream gradient by −1 exactly.
    pub fn grad_reverse(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).clone();
        let out = self.push(v);
        self.records.push(OpRecord::GradReverse { x, out });
        out
    }

    /// Elementwise `min(x, ceiling)`. Values at or above the ceiling become
    /// the ceiling and block the gradient; values strictly below pass both
    /// value and gradient unchanged.
    pub fn clamp_max(&mut self, x: NodeId, ceiling: f64) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| a.min(ceiling)).collect();
        let shape = v.shape().to_vec();
        let out = self.push(Tensor::new(shape, data).expect("shape preserved"));
        self.records.push(OpRecord::ClampMax { x, out, ceiling });
        out
    }

    /// Sum of all entries, as a scalar node.
    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let total: f64 = self.value(x).data().iter().sum();
        let out = self.push(Tensor::scalar(total));
        self.records.push(OpRecord::Sum { x, out });
        out
    }

    /// Multiplication by a constant factor.
    pub fn scale(&mut self, x: NodeId, factor: f64) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&a| factor * a).collect();
        let shape = v.shape().to_vec();
        let out = self.push(Tensor::new(shape, data).expect("shape preserved"));
        self.records.push(OpRecord::Scale { x, out, factor });
        out
    }

    /// Elementwise sum of two same-shaped nodes.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::dim("add", format!("{sa:?} + {sb:?}")));
        }
        let shape = sa.to_vec();
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(x, y)| x + y)
            .collect();
        let out = self.push(Tensor::new(shape, data)?);
        self.records.push(OpRecord::Add { a, b, out });
        Ok(out)
    }

    /// View with a new shape over the same row-major data.
    pub fn reshape(&mut self, x: NodeId, shape: &[usize]) -> Result<NodeId> {
        let v = self.value(x);
        let numel: usize = shape.iter().product();
        if numel != v.numel() {
            return Err(Error::dim(
                "reshape",
                format!("{:?} ({} values) into {shape:?} ({numel} values)", v.shape(), v.numel()),
            ));
        }
        let data = v.data().to_vec();
        let out = self.push(Tensor::new(shape.to_vec(), data)?);
        self.records.push(OpRecord::Reshape { x, out });
        Ok(out)
    }

    // ── Backward ────────────────────────────────────────────────────

    /// Reverse traversal from a scalar loss: returns gradients for every
    /// named parameter, zeros for parameters the loss cannot reach.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let node_grads = self.backward_values(loss)?;
        let mut grads = BTreeMap::new();
        for (name, id) in &self.params {
            let g = match &node_grads[id.0] {
                Some(t) => t.clone(),
                None => Tensor::zeros(self.nodes[id.0].shape()),
            };
            grads.insert(name.clone(), g);
        }
        Ok(Gradients { grads })
    }

    /// Per-node gradient buffers from one reverse traversal. `None` for
    /// nodes the loss does not reach.
    pub fn backward_values(&self, loss: NodeId) -> Result<Vec<Option<Tensor>>> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for rec in self.records.iter().rev() {
            self.backward_record(rec, &mut grads);
        }

        Ok(grads
            .into_iter()
            .enumerate()
            .map(|(i, g)| g.map(|data| Tensor::new(self.nodes[i].shape().to_vec(), data).expect("gradient shape")))
            .collect())
    }

    fn accumulate(grads: &mut [Option<Vec<f64>>], id: NodeId, contrib: &[f64]) {
        match &mut grads[id.0] {
            Some(existing) => {
                for (e, c) in existing.iter_mut().zip(contrib) {
                    *e += c;
                }
            }
            None => grads[id.0] = Some(contrib.to_vec()),
        }
    }

    #[allow(clippy::needless_range_loop)]
    fn backward_record(&self, rec: &OpRecord, grads: &mut [Option<Vec<f64>>]) {
        macro_rules! upstream {
            ($out:expr) => {
                match &grads[$out.0] {
                    Some(g) => g.clone(),
                    None => return,
                }
            };
        }
        match rec {
            OpRecord::MatMul { a, b, out } => {
                let go = upstream!(out);
                let (m, k) = (self.nodes[a.0].shape()[0], self.nodes[a.0].shape()[1]);
                let n = self.nodes[b.0].shape()[1];
                // dA = dC·Bᵀ, dB = Aᵀ·dC
                let da = matmul_nt(&go, self.nodes[b.0].data(), m, n, k);
                let db = matmul_tn(self.nodes[a.0].data(), &go, k, m, n);
                Self::accumulate(grads, *a, &da);
                Self::accumulate(grads, *b, &db);
            }
            OpRecord::AddBias { x, bias, out } => {
                let go = upstream!(out);
                let (m, n) = (self.nodes[x.0].shape()[0], self.nodes[x.0].shape()[1]);
                Self::accumulate(grads, *x, &go);
                let mut db = vec![0.0; n];
                for i in 0..m {
                    for j in 0..n {
                        db[j] += go[i * n + j];
                    }
                }
                Self::accumulate(grads, *bias, &db);
            }
            OpRecord::Conv2d { x, kernel, bias, out } => {
                let go = upstream!(out);
                let sx = self.nodes[x.0].shape();
                let (bn, c, h, w) = (sx[0], sx[1], sx[2], sx[3]);
                let o = self.nodes[kernel.0].shape()[0];
                let xd = self.nodes[x.0].data();
                let kd = self.nodes[kernel.0].data();

                let mut dx = vec![0.0; bn * c * h * w];
                let mut dk = vec![0.0; o * c * 9];
                let mut db = vec![0.0; o];
                for b in 0..bn {
                    for oc in 0..o {
                        let obase = (b * o + oc) * h * w;
                        for i in 0..h {
                            for j in 0..w {
                                let g = go[obase + i * w + j];
                                if g == 0.0 {
                                    continue;
                                }
                                db[oc] += g;
                                for ic in 0..c {
                                    let ibase = (b * c + ic) * h * w;
                                    let kbase = (oc * c + ic) * 9;
                                    for di in 0..3usize {
                                        let ii = i as isize + di as isize - 1;
                                        if ii < 0 || ii >= h as isize {
                                            continue;
                                        }
                                        for dj in 0..3usize {
                                            let jj = j as isize + dj as isize - 1;
                                            if jj < 0 || jj >= w as isize {
                                                continue;
                                            }
                                            let xi = ibase + ii as usize * w + jj as usize;
                                            dx[xi] += g * kd[kbase + di * 3 + dj];
                                            dk[kbase + di * 3 + dj] += g * xd[xi];
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
                Self::accumulate(grads, *x, &dx);
                Self::accumulate(grads, *kernel, &dk);
                Self::accumulate(grads, *bias, &db);
            }
            OpRecord::MaxPool2d { x, out, argmax } => {
                let go = upstream!(out);
                let mut dx = vec![0.0; self.nodes[x.0].numel()];
                for (oi, &xi) in argmax.iter().enumerate() {
                    dx[xi] += go[oi];
                }
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::LeakyRelu { x, out, slope } => {
                let go = upstream!(out);
                let xd = self.nodes[x.0].data();
                let dx: Vec<f64> = go
                    .iter()
                    .zip(xd)
                    .map(|(&g, &v)| if v >= 0.0 { g } else { slope * g })
                    .collect();
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::Concat { parts, out } => {
                let go = upstream!(out);
                let rows = self.nodes[out.0].shape()[0];
                let total = self.nodes[out.0].shape()[1];
                let mut col = 0;
                for &p in parts {
                    let wd = self.nodes[p.0].shape()[1];
                    let mut dp = vec![0.0; rows * wd];
                    for r in 0..rows {
                        dp[r * wd..(r + 1) * wd]
                            .copy_from_slice(&go[r * total + col..r * total + col + wd]);
                    }
                    Self::accumulate(grads, p, &dp);
                    col += wd;
                }
            }
            OpRecord::LogSoftmax { x, out } => {
                let go = upstream!(out);
                let s = self.nodes[out.0].shape();
                let (b, k) = (s[0], s[1]);
                let yd = self.nodes[out.0].data();
                let mut dx = vec![0.0; b * k];
                for r in 0..b {
                    let gsum: f64 = go[r * k..(r + 1) * k].iter().sum();
                    for j in 0..k {
                        dx[r * k + j] = go[r * k + j] - yd[r * k + j].exp() * gsum;
                    }
                }
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::NllLoss { log_probs, out, targets, mask } => {
                let go = upstream!(out);
                let k = self.nodes[log_probs.0].shape()[1];
                let mut dlp = vec![0.0; self.nodes[log_probs.0].numel()];
                for (i, (&t, &m)) in targets.iter().zip(mask).enumerate() {
                    if m {
                        dlp[i * k + t] = -go[i];
                    }
                }
                Self::accumulate(grads, *log_probs, &dlp);
            }
            OpRecord::GradReverse { x, out } => {
                let go = upstream!(out);
                let dx: Vec<f64> = go.iter().map(|&g| -g).collect();
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::ClampMax { x, out, ceiling } => {
                let go = upstream!(out);
                let xd = self.nodes[x.0].data();
                let dx: Vec<f64> = go
                    .iter()
                    .zip(xd)
                    .map(|(&g, &v)| if v < *ceiling { g } else { 0.0 })
                    .collect();
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::Sum { x, out } => {
                let go = upstream!(out);
                let dx = vec![go[0]; self.nodes[x.0].numel()];
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::Scale { x, out, factor } => {
                let go = upstream!(out);
                let dx: Vec<f64> = go.iter().map(|&g| factor * g).collect();
                Self::accumulate(grads, *x, &dx);
            }
            OpRecord::Add { a, b, out } => {
                let go = upstream!(out);
                Self::accumulate(grads, *a, &go);
                Self::accumulate(grads, *b, &go);
            }
            OpRecord::Reshape { x, out } => {
                let go = upstream!(out);
                Self::accumulate(grads, *x, &go);
            }
        }
    }
}
