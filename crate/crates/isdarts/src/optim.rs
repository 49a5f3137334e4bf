//! Training hyperparameters, the Nesterov-momentum SGD step and the cosine
//! learning-rate schedule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Parameter;
use crate::tensor::Element;

/// Weight-training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainHyper {
    pub lr_max: f64,
    pub lr_min: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            lr_max: 0.025,
            lr_min: 0.001,
            momentum: 0.9,
            weight_decay: 0.0005,
            grad_clip_norm: 5.0,
            batch_size: 16,
        }
    }
}

impl TrainHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr_min <= self.lr_max) {
            return Err(Error::Config(format!(
                "hyper.lr_min ({}) must not exceed hyper.lr_max ({})",
                self.lr_min, self.lr_max
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "hyper.momentum ({}) must lie in [0, 1)",
                self.momentum
            )));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!(
                "hyper.weight_decay ({}) must be non-negative",
                self.weight_decay
            )));
        }
        if !(self.grad_clip_norm > 0.0) {
            return Err(Error::Config(format!(
                "hyper.grad_clip_norm ({}) must be positive",
                self.grad_clip_norm
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("hyper.batch_size must be positive".into()));
        }
        Ok(())
    }
}

/// Cosine annealing: `lr_min + ½(lr_max − lr_min)(1 + cos(π·epoch/total))`.
pub fn cosine_lr(epoch: usize, total_epochs: usize, hyper: &TrainHyper) -> f64 {
    if total_epochs == 0 {
        return hyper.lr_max;
    }
    let t = epoch as f64 / total_epochs as f64;
    hyper.lr_min + 0.5 * (hyper.lr_max - hyper.lr_min) * (1.0 + (std::f64::consts::PI * t).cos())
}

/// One SGD step with Nesterov momentum over every parameter the visitor
/// yields. The visitor is called twice: once to measure the global
/// gradient norm, once to update.
///
/// Per parameter, with momentum `μ`, decay `wd` and clip scale `s`:
///
/// ```text
/// g   ← (grad + wd·w) · s
/// buf ← μ·buf − lr·g
/// w   ← w + buf
/// ```
///
/// The decay-augmented gradients are clipped as one global vector: if their
/// joint two-norm exceeds `grad_clip_norm`, every gradient is scaled by
/// `grad_clip_norm / norm` before the update.
pub fn sgd_nesterov_step<E: Element>(
    hyper: &TrainHyper,
    lr: f64,
    mut visit: impl FnMut(&mut dyn FnMut(&mut Parameter<E>)),
) -> Result<()> {
    let wd = E::lit(hyper.weight_decay);
    let mut missing: Option<Error> = None;
    let mut norm_sq = 0.0f64;
    visit(&mut |p: &mut Parameter<E>| {
        if missing.is_some() {
            return;
        }
        let Some(grad) = p.value.grad() else {
            missing = Some(Error::Usage(
                "sgd_nesterov_step called with a parameter whose grad is unset".into(),
            ));
            return;
        };
        for (g, w) in grad.iter().zip(p.value.data()) {
            let eff = (*g + wd * *w).as_f64();
            norm_sq += eff * eff;
        }
    });
    if let Some(err) = missing {
        return Err(err);
    }

    let norm = norm_sq.sqrt();
    let scale = if norm > hyper.grad_clip_norm {
        E::lit(hyper.grad_clip_norm / norm)
    } else {
        E::one()
    };
    let mu = E::lit(hyper.momentum);
    let lr = E::lit(lr);

    visit(&mut |p: &mut Parameter<E>| {
        let grad = p.value.grad().expect("checked in first pass").to_vec();
        let n = grad.len();
        for i in 0..n {
            let g = (grad[i] + wd * p.value.data()[i]) * scale;
            let buf = mu * p.momentum_buffer.data()[i] - lr * g;
            p.momentum_buffer.data_mut()[i] = buf;
            p.value.data_mut()[i] += buf;
        }
    });
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::ParamAlloc;
    use crate::tensor::Tensor;

    fn param(value: Vec<f64>) -> Parameter<f64> {
        let mut alloc = ParamAlloc::new();
        let n = value.len();
        Parameter::new(&mut alloc, Tensor::new(vec![n], value).unwrap())
    }

    fn step_one(p: &mut Parameter<f64>, hyper: &TrainHyper, lr: f64) {
        sgd_nesterov_step(hyper, lr, |f| f(p)).unwrap();
    }

    #[test]
    fn decay_only_step_shrinks_weights() {
        // Zero gradient, zero buffer: the whole step is the decay term.
        let mut p = param(vec![2.0]);
        p.value.set_grad(Some(vec![0.0]));
        let hyper = TrainHyper::default();
        step_one(&mut p, &hyper, 0.1);
        let expect = 2.0 - 0.1 * (0.0005 * 2.0);
        assert_eq!(p.value.data()[0], expect);
    }

    #[test]
    fn clip_scales_by_exactly_half_at_double_norm() {
        let mut p = param(vec![1.0]);
        p.value.set_grad(Some(vec![10.0]));
        let hyper = TrainHyper { weight_decay: 0.0, momentum: 0.0, ..TrainHyper::default() };
        step_one(&mut p, &hyper, 1.0);
        // norm 10 against clip 5 → gradient becomes exactly 5.
        assert_eq!(p.value.data()[0], 1.0 - 5.0);
    }

    #[test]
    fn two_steps_match_hand_simulated_recursion() {
        let mut p = param(vec![1.5]);
        let hyper = TrainHyper::default();
        let (mu, wd) = (hyper.momentum, hyper.weight_decay);

        // Hand-run the documented recursion with the same scalar ops.
        let mut w = 1.5f64;
        let mut buf = 0.0f64;
        for (grad, lr) in [(0.3f64, 0.025f64), (-0.2, 0.02)] {
            p.value.set_grad(Some(vec![grad]));
            step_one(&mut p, &hyper, lr);

            let g = grad + wd * w; // norm below clip, no scaling
            let g = g * 1.0;
            buf = mu * buf - lr * g;
            w += buf;
            assert_eq!(p.value.data()[0].to_bits(), w.to_bits());
            assert_eq!(p.momentum_buffer.data()[0].to_bits(), buf.to_bits());
        }
    }

    #[test]
    fn missing_grad_is_a_usage_error() {
        let mut p = param(vec![1.0]);
        let hyper = TrainHyper::default();
        let err = sgd_nesterov_step(&hyper, 0.1, |f| f(&mut p)).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn cosine_endpoints_and_midpoint() {
        let hyper = TrainHyper::default();
        assert_eq!(cosine_lr(0, 30, &hyper), 0.025);
        assert!((cosine_lr(30, 30, &hyper) - 0.001).abs() < 1e-15);
        assert!((cosine_lr(15, 30, &hyper) - 0.013).abs() < 1e-15);
    }

    #[test]
    fn cosine_is_monotone_non_increasing() {
        let hyper = TrainHyper::default();
        let total = 50;
        let mut prev = f64::INFINITY;
        for epoch in 0..=total {
            let lr = cosine_lr(epoch, total, &hyper);
            assert!(lr <= prev + 1e-15);
            prev = lr;
        }
    }

    #[test]
    fn validate_rejects_inverted_lr_range() {
        let hyper = TrainHyper { lr_min: 0.5, lr_max: 0.1, ..TrainHyper::default() };
        assert!(matches!(hyper.validate(), Err(Error::Config(_))));
        assert!(TrainHyper::default().validate().is_ok());
    }
}
