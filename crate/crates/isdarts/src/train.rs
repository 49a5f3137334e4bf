//! Weight-training and evaluation driver for masked supernets and
//! materialized subnets.
//!
//! Everything here is deterministic given its RNG or seed argument: batch
//! order comes from a caller-owned stream, batches are assembled in index
//! order, and evaluation walks the split front to back.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{augment_batch, Split};
use crate::error::Result;
use crate::optim::{sgd_nesterov_step, TrainHyper};
use crate::space::Mask;
use crate::supernet::{EdgeMode, Supernet};
use crate::tensor::{ops, Element, Tape};

/// Image geometry of one sample, shared by every batch of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl BatchGeom {
    pub fn square(channels: usize, side: usize) -> Self {
        BatchGeom { channels, height: side, width: side }
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// Outcome of a fixed-step training run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainOutcome {
    pub steps_run: usize,
    pub last_loss: f64,
    /// False when training stopped early on a non-finite loss.
    pub finite: bool,
}

/// One SGD step on a batch: masked forward in training mode, backward,
/// Nesterov update. Returns the batch loss (possibly non-finite; callers
/// decide how to react).
pub fn train_step<E: Element>(
    net: &mut Supernet<E>,
    mask: &Mask,
    images: &[f64],
    labels: &[usize],
    geom: BatchGeom,
    hyper: &TrainHyper,
    lr: f64,
) -> Result<f64> {
    let batch = labels.len();
    let mut tape = Tape::<E>::new();
    let x = tape.constant(
        vec![batch, geom.channels, geom.height, geom.width],
        images.iter().map(|v| E::lit(*v)).collect(),
    )?;
    let logits = net.forward(&mut tape, x, &EdgeMode::Masked(mask), true, None)?;
    let loss = ops::softmax_cross_entropy(&mut tape, logits, labels)?;
    let loss_value = tape.value(loss)[0].as_f64();
    if !loss_value.is_finite() {
        return Ok(loss_value); // skip the update; the caller reports the epoch
    }
    tape.backward(loss)?;
    net.install_grads(&tape);
    sgd_nesterov_step(hyper, lr, |f| net.visit_params(&mut |_, p| f(p)))?;
    Ok(loss_value)
}

/// One pass over the training split in shuffled order. Returns the mean
/// batch loss; a non-finite batch loss aborts the epoch and is returned
/// as-is.
pub fn run_epoch<E: Element>(
    net: &mut Supernet<E>,
    mask: &Mask,
    split: &Split,
    geom: BatchGeom,
    hyper: &TrainHyper,
    lr: f64,
    rng: &mut ChaCha8Rng,
    augment: bool,
) -> Result<f64> {
    let mut order: Vec<usize> = (0..split.n).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    let mut batches = 0usize;
    for chunk in order.chunks(hyper.batch_size.max(1)) {
        let (mut images, labels) = split.gather(chunk, geom.sample_len());
        if augment {
            augment_batch(&mut images, labels.len(), geom.channels, geom.height, geom.width, rng);
        }
        let loss = train_step(net, mask, &images, &labels, geom, hyper, lr)?;
        if !loss.is_finite() {
            return Ok(loss);
        }
        total += loss;
        batches += 1;
    }
    Ok(total / batches.max(1) as f64)
}

/// Trains for a fixed number of optimizer steps, cycling through shuffled
/// epochs, with the cosine schedule stretched over the step budget. Stops
/// early (and says so) if the loss leaves the finite range.
pub fn train_steps<E: Element>(
    net: &mut Supernet<E>,
    mask: &Mask,
    split: &Split,
    geom: BatchGeom,
    hyper: &TrainHyper,
    total_steps: usize,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut step = 0usize;
    let mut last_loss = f64::NAN;
    while step < total_steps {
        let mut order: Vec<usize> = (0..split.n).collect();
        order.shuffle(&mut rng);
        for chunk in order.chunks(hyper.batch_size.max(1)) {
            if step >= total_steps {
                break;
            }
            let t = step as f64 / total_steps as f64;
            let lr = hyper.lr_min
                + 0.5 * (hyper.lr_max - hyper.lr_min) * (1.0 + (std::f64::consts::PI * t).cos());
            let (images, labels) = split.gather(chunk, geom.sample_len());
            last_loss = train_step(net, mask, &images, &labels, geom, hyper, lr)?;
            step += 1;
            if !last_loss.is_finite() {
                return Ok(TrainOutcome { steps_run: step, last_loss, finite: false });
            }
        }
    }
    Ok(TrainOutcome { steps_run: step, last_loss, finite: true })
}

/// Classification accuracy of the masked net on a split, in evaluation
/// mode (running norm statistics, no tape recording). Argmax ties break
/// toward the lower class index.
pub fn evaluate<E: Element>(
    net: &mut Supernet<E>,
    mask: &Mask,
    split: &Split,
    geom: BatchGeom,
    batch_size: usize,
) -> Result<f64> {
    let indices: Vec<usize> = (0..split.n).collect();
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size.max(1)) {
        let (images, labels) = split.gather(chunk, geom.sample_len());
        let mut tape = Tape::<E>::inference();
        let x = tape.constant(
            vec![labels.len(), geom.channels, geom.height, geom.width],
            images.iter().map(|v| E::lit(*v)).collect(),
        )?;
        let logits = net.forward(&mut tape, x, &EdgeMode::Masked(mask), false, None)?;
        let values = tape.value(logits);
        let classes = tape.shape(logits)[1];
        for (row, &label) in labels.iter().enumerate() {
            let scores = &values[row * classes..(row + 1) * classes];
            let mut best = 0usize;
            for (k, v) in scores.iter().enumerate() {
                if *v > scores[best] {
                    best = k;
                }
            }
            if best == label {
                correct += 1;
            }
        }
    }
    Ok(correct as f64 / split.n.max(1) as f64)
}
