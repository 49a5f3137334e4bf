//! Record-and-replay reverse-mode differentiation.
//!
//! A [`Tape`] owns an arena of values. Each primitive op appends its result
//! to the arena and, while the tape is recording, pushes a [`TapeOp`] entry
//! holding the value ids involved plus whatever forward-pass state the
//! backward rule needs (batch-norm statistics, max-pool argmax indices).
//! [`Tape::backward`] walks the op list in reverse, scattering adjoints into
//! per-value gradient buffers.
//!
//! Evaluation passes build a non-recording tape: forward math is identical
//! but no op entries (and no saved state) accumulate.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::{check_finite, Element, Tensor};

/// Handle to a value stored on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ValueId(pub(crate) usize);

/// Stable identity of a trainable parameter, assigned at module build time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub u64);

/// Convolution geometry shared by the forward and backward rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvCfg {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for ConvCfg {
    fn default() -> Self {
        ConvCfg { stride: 1, padding: 0, dilation: 1, groups: 1 }
    }
}

/// Pooling geometry (square kernel).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolCfg {
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

/// One recorded primitive. Fields are value ids into the arena plus saved
/// forward state needed by the backward rule.
#[derive(Debug, Clone)]
pub enum TapeOp<E: Element> {
    Conv2d { x: ValueId, w: ValueId, out: ValueId, cfg: ConvCfg },
    Linear { x: ValueId, w: ValueId, b: ValueId, out: ValueId },
    Relu { x: ValueId, out: ValueId },
    /// `train` selects the full batch-statistics backward; in eval mode the
    /// normalisation statistics are constants and only a per-channel scale
    /// flows back.
    BatchNorm { x: ValueId, out: ValueId, mean: Vec<E>, inv_std: Vec<E>, train: bool },
    AvgPool { x: ValueId, out: ValueId, cfg: PoolCfg },
    MaxPool { x: ValueId, out: ValueId, argmax: Vec<usize> },
    GlobalAvgPool { x: ValueId, out: ValueId },
    /// Elementwise sum of same-shape inputs.
    Sum { inputs: Vec<ValueId>, out: ValueId },
    /// `out = s[index] * x` where `s` is a vector value (softmax weights).
    ScaleByElem { x: ValueId, s: ValueId, index: usize, out: ValueId },
    /// Multiply by a compile-time constant.
    Scale { x: ValueId, factor: E, out: ValueId },
    /// Softmax over a rank-1 value.
    SoftmaxVec { x: ValueId, out: ValueId },
    /// Mean softmax cross-entropy over rows of `logits`.
    CrossEntropy { logits: ValueId, labels: Vec<usize>, out: ValueId },
    /// Scalar readout `out = Σ_i weights[i]·x[i]` against constant weights.
    DotConst { x: ValueId, weights: Vec<E>, out: ValueId },
    /// Concatenate rank-4 inputs along the channel axis.
    ConcatChannels { inputs: Vec<ValueId>, out: ValueId },
}

struct Node<E> {
    data: Vec<E>,
    shape: Vec<usize>,
}

/// Arena of values plus the op log for one forward pass.
pub struct Tape<E: Element> {
    nodes: Vec<Node<E>>,
    ops: Vec<TapeOp<E>>,
    grads: Vec<Option<Vec<E>>>,
    params: Vec<(ParamId, ValueId)>,
    recording: bool,
}

impl<E: Element> Tape<E> {
    /// A recording tape for a training step.
    pub fn new() -> Self {
        Tape { nodes: Vec::new(), ops: Vec::new(), grads: Vec::new(), params: Vec::new(), recording: true }
    }

    /// A non-recording tape: forward math only, no backward possible.
    pub fn inference() -> Self {
        let mut t = Self::new();
        t.recording = false;
        t
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn num_values(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_ops(&self) -> usize {
        self.ops.len()
    }

    /// Insert a leaf value the backward pass treats as a constant.
    pub fn constant(&mut self, shape: Vec<usize>, data: Vec<E>) -> Result<ValueId> {
        let numel: usize = shape.iter().product();
        if data.len() != numel {
            return Err(Error::Dimension(format!(
                "constant data length {} does not match shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(self.push(shape, data))
    }

    pub fn constant_tensor(&mut self, t: &Tensor<E>) -> ValueId {
        self.push(t.shape().to_vec(), t.data().to_vec())
    }

    /// Insert a parameter leaf and remember its identity so gradients can be
    /// exported after `backward`. Registering the same parameter several
    /// times in one pass is allowed; exported gradients accumulate.
    pub fn param(&mut self, id: ParamId, value: &Tensor<E>) -> ValueId {
        let vid = self.push(value.shape().to_vec(), value.data().to_vec());
        self.params.push((id, vid));
        vid
    }

    pub(crate) fn push(&mut self, shape: Vec<usize>, data: Vec<E>) -> ValueId {
        check_finite("tape value", &data);
        let id = ValueId(self.nodes.len());
        self.nodes.push(Node { data, shape });
        self.grads.push(None);
        id
    }

    pub(crate) fn record(&mut self, op: TapeOp<E>) {
        if self.recording {
            self.ops.push(op);
        }
    }

    pub fn value(&self, id: ValueId) -> &[E] {
        &self.nodes[id.0].data
    }

    pub fn shape(&self, id: ValueId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Gradient of the last `backward` target with respect to `id`, if any
    /// adjoint reached it.
    pub fn grad(&self, id: ValueId) -> Option<&[E]> {
        self.grads[id.0].as_deref()
    }

    fn grad_buf(&mut self, id: ValueId) -> &mut Vec<E> {
        let numel = self.nodes[id.0].data.len();
        self.grads[id.0].get_or_insert_with(|| vec![E::zero(); numel])
    }

    /// Reverse sweep from a scalar `loss`. Clears any previous gradients.
    pub fn backward(&mut self, loss: ValueId) -> Result<()> {
        if !self.recording {
            return Err(Error::Measurement(
                "backward called on a non-recording tape".into(),
            ));
        }
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::Dimension(format!(
                "backward target must be scalar, got shape {:?}",
                self.nodes[loss.0].shape
            )));
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(vec![E::one()]);

        let ops = std::mem::take(&mut self.ops);
        for op in ops.iter().rev() {
            self.backward_op(op);
        }
        self.ops = ops;
        Ok(())
    }

    /// Accumulated parameter gradients after `backward`. Parameters whose
    /// values never influenced the loss get an all-zero gradient so the
    /// optimizer can treat every parameter uniformly.
    pub fn param_grads(&self) -> HashMap<ParamId, Vec<E>> {
        let mut out: HashMap<ParamId, Vec<E>> = HashMap::new();
        for &(pid, vid) in &self.params {
            let numel = self.nodes[vid.0].data.len();
            let entry = out.entry(pid).or_insert_with(|| vec![E::zero(); numel]);
            if let Some(g) = &self.grads[vid.0] {
                for (acc, gi) in entry.iter_mut().zip(g) {
                    *acc += *gi;
                }
            }
        }
        out
    }

    fn backward_op(&mut self, op: &TapeOp<E>) {
        match op {
            TapeOp::Conv2d { x, w, out, cfg } => self.bw_conv2d(*x, *w, *out, *cfg),
            TapeOp::Linear { x, w, b, out } => self.bw_linear(*x, *w, *b, *out),
            TapeOp::Relu { x, out } => self.bw_relu(*x, *out),
            TapeOp::BatchNorm { x, out, mean, inv_std, train } => {
                self.bw_batch_norm(*x, *out, mean, inv_std, *train)
            }
            TapeOp::AvgPool { x, out, cfg } => self.bw_avg_pool(*x, *out, *cfg),
            TapeOp::MaxPool { x, out, argmax } => self.bw_max_pool(*x, *out, argmax),
            TapeOp::GlobalAvgPool { x, out } => self.bw_global_avg_pool(*x, *out),
            TapeOp::Sum { inputs, out } => self.bw_sum(inputs, *out),
            TapeOp::ScaleByElem { x, s, index, out } => self.bw_scale_by_elem(*x, *s, *index, *out),
            TapeOp::Scale { x, factor, out } => self.bw_scale(*x, *factor, *out),
            TapeOp::SoftmaxVec { x, out } => self.bw_softmax_vec(*x, *out),
            TapeOp::CrossEntropy { logits, labels, out } => self.bw_cross_entropy(*logits, labels, *out),
            TapeOp::DotConst { x, weights, out } => self.bw_dot_const(*x, weights, *out),
            TapeOp::ConcatChannels { inputs, out } => self.bw_concat_channels(inputs, *out),
        }
    }

    fn take_out_grad(&mut self, out: ValueId) -> Option<Vec<E>> {
        self.grads[out.0].clone()
    }

    fn bw_conv2d(&mut self, x: ValueId, w: ValueId, out: ValueId, cfg: ConvCfg) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let xs = self.nodes[x.0].shape.clone();
        let ws = self.nodes[w.0].shape.clone();
        let os = self.nodes[out.0].shape.clone();
        let (b, cin, h, win) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, cinpg, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        let (oh, ow) = (os[2], os[3]);
        let ocpg = cout / cfg.groups;

        let xv = self.nodes[x.0].data.clone();
        let wv = self.nodes[w.0].data.clone();
        let mut dx = vec![E::zero(); b * cin * h * win];
        let mut dw = vec![E::zero(); wv.len()];

        for bi in 0..b {
            for oc in 0..cout {
                let g = oc / ocpg;
                for oy in 0..oh {
                    for ox in 0..ow {
                        let go = dout[((bi * cout + oc) * oh + oy) * ow + ox];
                        if go == E::zero() {
                            continue;
                        }
                        for icl in 0..cinpg {
                            let ic = g * cinpg + icl;
                            for ky in 0..kh {
                                let iy = (oy * cfg.stride + ky * cfg.dilation) as isize
                                    - cfg.padding as isize;
                                if iy < 0 || iy as usize >= h {
                                    continue;
                                }
                                for kx in 0..kw {
                                    let ix = (ox * cfg.stride + kx * cfg.dilation) as isize
                                        - cfg.padding as isize;
                                    if ix < 0 || ix as usize >= win {
                                        continue;
                                    }
                                    let xi =
                                        ((bi * cin + ic) * h + iy as usize) * win + ix as usize;
                                    let wi = ((oc * cinpg + icl) * kh + ky) * kw + kx;
                                    dx[xi] += wv[wi] * go;
                                    dw[wi] += xv[xi] * go;
                                }
                            }
                        }
                    }
                }
            }
        }
        self.accumulate(x, &dx);
        self.accumulate(w, &dw);
    }

    fn bw_linear(&mut self, x: ValueId, w: ValueId, b: ValueId, out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let xs = self.nodes[x.0].shape.clone();
        let ws = self.nodes[w.0].shape.clone();
        let (n, f) = (xs[0], xs[1]);
        let k = ws[0];
        let xv = self.nodes[x.0].data.clone();
        let wv = self.nodes[w.0].data.clone();

        let mut dx = vec![E::zero(); n * f];
        let mut dw = vec![E::zero(); k * f];
        let mut db = vec![E::zero(); k];
        for i in 0..n {
            for j in 0..k {
                let g = dout[i * k + j];
                if g == E::zero() {
                    continue;
                }
                db[j] += g;
                for l in 0..f {
                    dx[i * f + l] += wv[j * f + l] * g;
                    dw[j * f + l] += xv[i * f + l] * g;
                }
            }
        }
        self.accumulate(x, &dx);
        self.accumulate(w, &dw);
        self.accumulate(b, &db);
    }

    fn bw_relu(&mut self, x: ValueId, out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let xv = &self.nodes[x.0].data;
        let dx: Vec<E> = xv
            .iter()
            .zip(&dout)
            .map(|(xi, g)| if *xi > E::zero() { *g } else { E::zero() })
            .collect();
        self.accumulate(x, &dx);
    }

    fn bw_batch_norm(&mut self, x: ValueId, out: ValueId, mean: &[E], inv_std: &[E], train: bool) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let xs = self.nodes[x.0].shape.clone();
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let per_channel = b * h * w;
        let xv = self.nodes[x.0].data.clone();
        let mut dx = vec![E::zero(); xv.len()];

        if !train {
            // Statistics are constants: the op is an affine per-channel map.
            for bi in 0..b {
                for ci in 0..c {
                    for p in 0..h * w {
                        let idx = (bi * c + ci) * h * w + p;
                        dx[idx] = dout[idx] * inv_std[ci];
                    }
                }
            }
            self.accumulate(x, &dx);
            return;
        }

        let n = E::lit(per_channel as f64);
        for ci in 0..c {
            let mut sum_g = E::zero();
            let mut sum_gx = E::zero();
            for bi in 0..b {
                for p in 0..h * w {
                    let idx = (bi * c + ci) * h * w + p;
                    let xhat = (xv[idx] - mean[ci]) * inv_std[ci];
                    sum_g += dout[idx];
                    sum_gx += dout[idx] * xhat;
                }
            }
            for bi in 0..b {
                for p in 0..h * w {
                    let idx = (bi * c + ci) * h * w + p;
                    let xhat = (xv[idx] - mean[ci]) * inv_std[ci];
                    dx[idx] = inv_std[ci] / n * (n * dout[idx] - sum_g - xhat * sum_gx);
                }
            }
        }
        self.accumulate(x, &dx);
    }

    fn bw_avg_pool(&mut self, x: ValueId, out: ValueId, cfg: PoolCfg) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let xs = self.nodes[x.0].shape.clone();
        let os = self.nodes[out.0].shape.clone();
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (oh, ow) = (os[2], os[3]);
        let mut dx = vec![E::zero(); b * c * h * w];
        let area = E::lit((cfg.kernel * cfg.kernel) as f64);

        for bi in 0..b {
            for ci in 0..c {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let g = dout[((bi * c + ci) * oh + oy) * ow + ox] / area;
                        for ky in 0..cfg.kernel {
                            let iy = (oy * cfg.stride + ky) as isize - cfg.padding as isize;
                            if iy < 0 || iy as usize >= h {
                                continue;
                            }
                            for kx in 0..cfg.kernel {
                                let ix = (ox * cfg.stride + kx) as isize - cfg.padding as isize;
                                if ix < 0 || ix as usize >= w {
                                    continue;
                                }
                                dx[((bi * c + ci) * h + iy as usize) * w + ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
        self.accumulate(x, &dx);
    }

    fn bw_max_pool(&mut self, x: ValueId, out: ValueId, argmax: &[usize]) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let mut dx = vec![E::zero(); self.nodes[x.0].data.len()];
        for (o, &src) in argmax.iter().enumerate() {
            dx[src] += dout[o];
        }
        self.accumulate(x, &dx);
    }

    fn bw_global_avg_pool(&mut self, x: ValueId, out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let xs = self.nodes[x.0].shape.clone();
        let (b, c, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let area = E::lit((h * w) as f64);
        let mut dx = vec![E::zero(); b * c * h * w];
        for bi in 0..b {
            for ci in 0..c {
                let g = dout[bi * c + ci] / area;
                for p in 0..h * w {
                    dx[(bi * c + ci) * h * w + p] = g;
                }
            }
        }
        self.accumulate(x, &dx);
    }

    fn bw_sum(&mut self, inputs: &[ValueId], out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        for &inp in inputs {
            self.accumulate(inp, &dout);
        }
    }

    fn bw_scale_by_elem(&mut self, x: ValueId, s: ValueId, index: usize, out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let sv = self.nodes[s.0].data[index];
        let xv = self.nodes[x.0].data.clone();
        let dx: Vec<E> = dout.iter().map(|g| *g * sv).collect();
        self.accumulate(x, &dx);

        let mut ds = vec![E::zero(); self.nodes[s.0].data.len()];
        ds[index] = dout.iter().zip(&xv).map(|(g, xi)| *g * *xi).sum();
        self.accumulate(s, &ds);
    }

    fn bw_scale(&mut self, x: ValueId, factor: E, out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let dx: Vec<E> = dout.iter().map(|g| *g * factor).collect();
        self.accumulate(x, &dx);
    }

    fn bw_softmax_vec(&mut self, x: ValueId, out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let s = self.nodes[out.0].data.clone();
        let dot: E = dout.iter().zip(&s).map(|(g, si)| *g * *si).sum();
        let dx: Vec<E> = dout.iter().zip(&s).map(|(g, si)| *si * (*g - dot)).collect();
        self.accumulate(x, &dx);
    }

    fn bw_cross_entropy(&mut self, logits: ValueId, labels: &[usize], out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let g = dout[0];
        let ls = self.nodes[logits.0].shape.clone();
        let (n, k) = (ls[0], ls[1]);
        let lv = self.nodes[logits.0].data.clone();
        let inv_n = E::lit(1.0 / n as f64);
        let mut dl = vec![E::zero(); n * k];
        for i in 0..n {
            let row = &lv[i * k..(i + 1) * k];
            let max = row.iter().cloned().fold(E::neg_infinity(), E::max);
            let denom: E = row.iter().map(|v| (*v - max).exp()).sum();
            for j in 0..k {
                let p = (row[j] - max).exp() / denom;
                let y = if labels[i] == j { E::one() } else { E::zero() };
                dl[i * k + j] = g * inv_n * (p - y);
            }
        }
        self.accumulate(logits, &dl);
    }

    fn bw_dot_const(&mut self, x: ValueId, weights: &[E], out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let g = dout[0];
        let dx: Vec<E> = weights.iter().map(|w| *w * g).collect();
        self.accumulate(x, &dx);
    }

    fn bw_concat_channels(&mut self, inputs: &[ValueId], out: ValueId) {
        let Some(dout) = self.take_out_grad(out) else { return };
        let os = self.nodes[out.0].shape.clone();
        let (b, ctot, h, w) = (os[0], os[1], os[2], os[3]);
        let plane = h * w;
        let mut offset = 0usize;
        for &inp in inputs {
            let ci = self.nodes[inp.0].shape[1];
            let mut dx = vec![E::zero(); b * ci * plane];
            for bi in 0..b {
                for c in 0..ci {
                    let src = ((bi * ctot + offset + c) * plane)..((bi * ctot + offset + c + 1) * plane);
                    let dst = ((bi * ci + c) * plane)..((bi * ci + c + 1) * plane);
                    dx[dst].copy_from_slice(&dout[src]);
                }
            }
            self.accumulate(inp, &dx);
            offset += ci;
        }
    }

    fn accumulate(&mut self, id: ValueId, delta: &[E]) {
        let buf = self.grad_buf(id);
        debug_assert_eq!(buf.len(), delta.len());
        for (a, d) in buf.iter_mut().zip(delta) {
            *a += *d;
        }
    }
}

impl<E: Element> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}
