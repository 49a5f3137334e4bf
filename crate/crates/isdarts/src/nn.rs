//! Neural-network building blocks: parameters, conv/norm/linear layers and
//! the candidate operation vocabulary used on cell edges.
//!
//! Candidate operations are channel-preserving and stride-1; spatial
//! reduction happens in dedicated blocks between cell stacks (see the
//! supernet module). Convolutional candidates follow the ReLU → Conv →
//! Norm ordering; the norm is batch normalisation without affine
//! parameters, carrying running statistics for eval-mode passes.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ops;
use crate::tensor::{ConvCfg, Element, ParamId, PoolCfg, Tape, Tensor, ValueId};

/// Momentum of the running-statistics update: `new = m·old + (1−m)·batch`.
pub const BN_MOMENTUM: f64 = 0.9;
/// Variance floor inside the normalisation denominator.
pub const BN_EPS: f64 = 1e-5;

/// Hands out unique parameter ids within one model.
#[derive(Debug, Default)]
pub struct ParamAlloc {
    next: u64,
}

impl ParamAlloc {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn fresh(&mut self) -> ParamId {
        let id = ParamId(self.next);
        self.next += 1;
        id
    }
}

/// Trainable tensor plus its momentum state.
#[derive(Debug, Clone)]
pub struct Parameter<E: Element> {
    pub id: ParamId,
    pub value: Tensor<E>,
    pub momentum_buffer: Tensor<E>,
}

impl<E: Element> Parameter<E> {
    pub fn new(alloc: &mut ParamAlloc, mut value: Tensor<E>) -> Self {
        value.set_requires_grad(true);
        let momentum_buffer = Tensor::zeros(value.shape().to_vec());
        Parameter { id: alloc.fresh(), value, momentum_buffer }
    }

    /// Precision-change twin sharing the same id.
    pub fn cast<T: Element>(&self) -> Parameter<T> {
        Parameter {
            id: self.id,
            value: self.value.cast(),
            momentum_buffer: self.momentum_buffer.cast(),
        }
    }
}

/// Kaiming-uniform draw over `±sqrt(6 / fan_in)` (ReLU gain).
fn kaiming_uniform<E: Element>(
    alloc: &mut ParamAlloc,
    rng: &mut ChaCha8Rng,
    shape: Vec<usize>,
    fan_in: usize,
) -> Parameter<E> {
    let bound = (6.0 / fan_in as f64).sqrt();
    let numel: usize = shape.iter().product();
    let data: Vec<E> = (0..numel)
        .map(|_| E::lit(rng.random_range(-bound..bound)))
        .collect();
    Parameter::new(alloc, Tensor::new(shape, data).expect("init shape consistent"))
}

/// Bias-free 2-D convolution layer.
#[derive(Debug, Clone)]
pub struct ConvLayer<E: Element> {
    pub weight: Parameter<E>,
    pub cfg: ConvCfg,
}

impl<E: Element> ConvLayer<E> {
    #[allow(clippy::too_many_arguments)]
    pub fn build(
        alloc: &mut ParamAlloc,
        rng: &mut ChaCha8Rng,
        cin: usize,
        cout: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        dilation: usize,
        groups: usize,
    ) -> Self {
        let cinpg = cin / groups;
        let fan_in = cinpg * kernel * kernel;
        let weight = kaiming_uniform(alloc, rng, vec![cout, cinpg, kernel, kernel], fan_in);
        ConvLayer { weight, cfg: ConvCfg { stride, padding, dilation, groups } }
    }

    pub fn forward(&self, tape: &mut Tape<E>, x: ValueId) -> Result<ValueId> {
        let w = tape.param(self.weight.id, &self.weight.value);
        ops::conv2d(tape, x, w, self.cfg)
    }

    pub fn cast<T: Element>(&self) -> ConvLayer<T> {
        ConvLayer { weight: self.weight.cast(), cfg: self.cfg }
    }
}

/// Batch normalisation without affine parameters.
#[derive(Debug, Clone)]
pub struct BnLayer<E: Element> {
    pub running_mean: Vec<E>,
    pub running_var: Vec<E>,
}

impl<E: Element> BnLayer<E> {
    pub fn new(channels: usize) -> Self {
        BnLayer {
            running_mean: vec![E::zero(); channels],
            running_var: vec![E::one(); channels],
        }
    }

    /// Training mode normalises with batch statistics and folds them into
    /// the running estimates; eval mode normalises with the running
    /// estimates and leaves them untouched.
    pub fn forward(&mut self, tape: &mut Tape<E>, x: ValueId, train: bool) -> Result<ValueId> {
        let (out, stats) =
            ops::batch_norm(tape, x, &self.running_mean, &self.running_var, train, BN_EPS)?;
        if let Some((mean, var)) = stats {
            let m = E::lit(BN_MOMENTUM);
            let one_m = E::lit(1.0 - BN_MOMENTUM);
            for (r, b) in self.running_mean.iter_mut().zip(&mean) {
                *r = m * *r + one_m * *b;
            }
            for (r, b) in self.running_var.iter_mut().zip(&var) {
                *r = m * *r + one_m * *b;
            }
        }
        Ok(out)
    }

    pub fn cast<T: Element>(&self) -> BnLayer<T> {
        BnLayer {
            running_mean: self.running_mean.iter().map(|v| T::lit(v.as_f64())).collect(),
            running_var: self.running_var.iter().map(|v| T::lit(v.as_f64())).collect(),
        }
    }
}

/// Fully connected layer with bias.
#[derive(Debug, Clone)]
pub struct LinearLayer<E: Element> {
    pub weight: Parameter<E>,
    pub bias: Parameter<E>,
}

impl<E: Element> LinearLayer<E> {
    pub fn build(
        alloc: &mut ParamAlloc,
        rng: &mut ChaCha8Rng,
        in_features: usize,
        out_features: usize,
    ) -> Self {
        let weight = kaiming_uniform(alloc, rng, vec![out_features, in_features], in_features);
        let bias = Parameter::new(alloc, Tensor::zeros(vec![out_features]));
        LinearLayer { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape<E>, x: ValueId) -> Result<ValueId> {
        let w = tape.param(self.weight.id, &self.weight.value);
        let b = tape.param(self.bias.id, &self.bias.value);
        ops::linear(tape, x, w, b)
    }

    pub fn cast<T: Element>(&self) -> LinearLayer<T> {
        LinearLayer { weight: self.weight.cast(), bias: self.bias.cast() }
    }
}

/// The candidate operations that can sit on a cell edge. All preserve
/// channel count and spatial size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    Zero,
    Skip,
    Conv1x1,
    Conv3x3,
    AvgPool3x3,
    MaxPool3x3,
    SepConv3x3,
    SepConv5x5,
    DilConv3x3,
    DilConv5x5,
}

impl OpKind {
    /// True when the operation owns trainable weights.
    pub fn parameterized(self) -> bool {
        !matches!(
            self,
            OpKind::Zero | OpKind::Skip | OpKind::AvgPool3x3 | OpKind::MaxPool3x3
        )
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Zero => "zero",
            OpKind::Skip => "skip",
            OpKind::Conv1x1 => "conv1x1",
            OpKind::Conv3x3 => "conv3x3",
            OpKind::AvgPool3x3 => "avg_pool3x3",
            OpKind::MaxPool3x3 => "max_pool3x3",
            OpKind::SepConv3x3 => "sep_conv3x3",
            OpKind::SepConv5x5 => "sep_conv5x5",
            OpKind::DilConv3x3 => "dil_conv3x3",
            OpKind::DilConv5x5 => "dil_conv5x5",
        }
    }
}

impl std::fmt::Display for OpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One candidate operation instantiated with its own weights.
#[derive(Debug, Clone)]
pub struct OpInstance<E: Element> {
    pub kind: OpKind,
    convs: Vec<ConvLayer<E>>,
    norms: Vec<BnLayer<E>>,
    /// Test hook: skipping the norm turns conv blocks into plain ReLU→Conv.
    pub norm_enabled: bool,
}

impl<E: Element> OpInstance<E> {
    pub fn build(
        kind: OpKind,
        channels: usize,
        alloc: &mut ParamAlloc,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let c = channels;
        let mut convs = Vec::new();
        let mut norms = Vec::new();
        match kind {
            OpKind::Zero | OpKind::Skip | OpKind::AvgPool3x3 | OpKind::MaxPool3x3 => {}
            OpKind::Conv1x1 => {
                convs.push(ConvLayer::build(alloc, rng, c, c, 1, 1, 0, 1, 1));
                norms.push(BnLayer::new(c));
            }
            OpKind::Conv3x3 => {
                convs.push(ConvLayer::build(alloc, rng, c, c, 3, 1, 1, 1, 1));
                norms.push(BnLayer::new(c));
            }
            OpKind::SepConv3x3 | OpKind::SepConv5x5 => {
                let k = if kind == OpKind::SepConv3x3 { 3 } else { 5 };
                for _ in 0..2 {
                    convs.push(ConvLayer::build(alloc, rng, c, c, k, 1, (k - 1) / 2, 1, c));
                    convs.push(ConvLayer::build(alloc, rng, c, c, 1, 1, 0, 1, 1));
                    norms.push(BnLayer::new(c));
                }
            }
            OpKind::DilConv3x3 | OpKind::DilConv5x5 => {
                let k = if kind == OpKind::DilConv3x3 { 3 } else { 5 };
                convs.push(ConvLayer::build(alloc, rng, c, c, k, 1, k - 1, 2, c));
                convs.push(ConvLayer::build(alloc, rng, c, c, 1, 1, 0, 1, 1));
                norms.push(BnLayer::new(c));
            }
        }
        OpInstance { kind, convs, norms, norm_enabled: true }
    }

    pub fn forward(&mut self, tape: &mut Tape<E>, x: ValueId, train: bool) -> Result<ValueId> {
        let pool = PoolCfg { kernel: 3, stride: 1, padding: 1 };
        match self.kind {
            OpKind::Zero => {
                let shape = tape.shape(x).to_vec();
                let numel: usize = shape.iter().product();
                tape.constant(shape, vec![E::zero(); numel])
            }
            OpKind::Skip => Ok(x),
            OpKind::AvgPool3x3 => ops::avg_pool(tape, x, pool),
            OpKind::MaxPool3x3 => ops::max_pool(tape, x, pool),
            OpKind::Conv1x1 | OpKind::Conv3x3 => {
                let h = ops::relu(tape, x);
                let h = self.convs[0].forward(tape, h)?;
                self.norm(tape, 0, h, train)
            }
            OpKind::SepConv3x3 | OpKind::SepConv5x5 => {
                let mut h = x;
                for round in 0..2 {
                    h = ops::relu(tape, h);
                    h = self.convs[2 * round].forward(tape, h)?;
                    h = self.convs[2 * round + 1].forward(tape, h)?;
                    h = self.norm(tape, round, h, train)?;
                }
                Ok(h)
            }
            OpKind::DilConv3x3 | OpKind::DilConv5x5 => {
                let h = ops::relu(tape, x);
                let h = self.convs[0].forward(tape, h)?;
                let h = self.convs[1].forward(tape, h)?;
                self.norm(tape, 0, h, train)
            }
        }
    }

    fn norm(&mut self, tape: &mut Tape<E>, idx: usize, x: ValueId, train: bool) -> Result<ValueId> {
        if self.norm_enabled {
            self.norms[idx].forward(tape, x, train)
        } else {
            Ok(x)
        }
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Parameter<E>)) {
        for (i, conv) in self.convs.iter_mut().enumerate() {
            f(format!("{prefix}.conv{i}.weight"), &mut conv.weight);
        }
    }

    pub fn visit_norms(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut BnLayer<E>)) {
        for (i, bn) in self.norms.iter_mut().enumerate() {
            f(format!("{prefix}.norm{i}"), bn);
        }
    }

    /// Direct access for tests that need to overwrite weights.
    pub fn convs_mut(&mut self) -> &mut [ConvLayer<E>] {
        &mut self.convs
    }

    pub fn cast<T: Element>(&self) -> OpInstance<T> {
        OpInstance {
            kind: self.kind,
            convs: self.convs.iter().map(ConvLayer::cast).collect(),
            norms: self.norms.iter().map(BnLayer::cast).collect(),
            norm_enabled: self.norm_enabled,
        }
    }
}

/// Classification head: global average pool then a linear map to logits.
#[derive(Debug, Clone)]
pub struct Classifier<E: Element> {
    pub linear: LinearLayer<E>,
}

impl<E: Element> Classifier<E> {
    pub fn build(
        alloc: &mut ParamAlloc,
        rng: &mut ChaCha8Rng,
        channels: usize,
        classes: usize,
    ) -> Result<Self> {
        if classes < 2 {
            return Err(Error::Config(format!("classifier needs ≥2 classes, got {classes}")));
        }
        Ok(Classifier { linear: LinearLayer::build(alloc, rng, channels, classes) })
    }

    pub fn forward(&self, tape: &mut Tape<E>, x: ValueId) -> Result<ValueId> {
        let pooled = ops::global_avg_pool(tape, x)?;
        self.linear.forward(tape, pooled)
    }

    pub fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Parameter<E>)) {
        f(format!("{prefix}.weight"), &mut self.linear.weight);
        f(format!("{prefix}.bias"), &mut self.linear.bias);
    }

    pub fn cast<T: Element>(&self) -> Classifier<T> {
        Classifier { linear: self.linear.cast() }
    }
}
