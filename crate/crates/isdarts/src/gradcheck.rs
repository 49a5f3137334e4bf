//! Central finite-difference gradient verification.
//!
//! The reference derivative of a scalar function is always computed in
//! `f64`. When the model under test runs in `f32`, its parameters are cast
//! exactly into an `f64` twin, so the finite-difference probe evaluates the
//! true function at the very point the low-precision backward pass saw.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{OpInstance, OpKind, ParamAlloc, Parameter};
use crate::tensor::{ops, Element, Tape};

/// Outcome of one finite-difference comparison.
#[derive(Debug, Clone, Copy)]
pub struct FdReport {
    /// Worst per-coordinate relative error, `|a−n| / max(1, |a|, |n|)`.
    pub max_rel_err: f64,
    /// Coordinate attaining the worst error.
    pub worst_index: usize,
    /// Number of coordinates compared.
    pub checked: usize,
}

impl FdReport {
    pub fn within(&self, tol: f64) -> bool {
        self.max_rel_err <= tol
    }
}

/// Central finite differences of `f` at `x` with step `eps`, one coordinate
/// at a time.
pub fn central_diff(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut point = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = point[i];
        point[i] = orig + eps;
        let plus = f(&point);
        point[i] = orig - eps;
        let minus = f(&point);
        point[i] = orig;
        grad[i] = (plus - minus) / (2.0 * eps);
    }
    grad
}

/// Elementwise comparison of analytic and numeric gradients.
pub fn compare_grads(analytic: &[f64], numeric: &[f64]) -> FdReport {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths must match");
    let mut worst = 0.0f64;
    let mut worst_index = 0;
    for (i, (a, n)) in analytic.iter().zip(numeric).enumerate() {
        let denom = a.abs().max(n.abs()).max(1.0);
        let rel = (a - n).abs() / denom;
        if rel > worst {
            worst = rel;
            worst_index = i;
        }
    }
    FdReport { max_rel_err: worst, worst_index, checked: analytic.len() }
}

/// Gradient-checks one candidate operation kind at precision `E`.
///
/// A seeded random input passes through a freshly built instance in
/// training mode; the loss is a fixed random weighted sum of the output, so
/// every output element carries its own adjoint. Both the input gradient
/// and all weight gradients are compared against central differences of the
/// `f64` twin.
pub fn check_op_kind<E: Element>(kind: OpKind, seed: u64, eps: f64) -> Result<FdReport> {
    let (b, c, h, w) = (2usize, 3usize, 4usize, 4usize);
    let shape = vec![b, c, h, w];
    let numel = b * c * h * w;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alloc = ParamAlloc::new();
    let op = OpInstance::<E>::build(kind, c, &mut alloc, &mut rng);
    let input: Vec<f64> = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
    let probe: Vec<f64> = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();

    // Analytic pass at precision E.
    let mut run = op.clone();
    let mut tape = Tape::<E>::new();
    let x = tape.constant(shape.clone(), input.iter().map(|v| E::lit(*v)).collect())?;
    let y = run.forward(&mut tape, x, true)?;
    let probe_e: Vec<E> = probe.iter().map(|v| E::lit(*v)).collect();
    let loss = ops::weighted_sum(&mut tape, y, &probe_e)?;
    tape.backward(loss)?;

    let mut analytic: Vec<f64> = tape
        .grad(x)
        .map(|g| g.iter().map(|v| v.as_f64()).collect())
        .unwrap_or_else(|| vec![0.0; numel]);
    let param_grads = tape.param_grads();
    let mut template = op.cast::<f64>();
    let mut param_order = Vec::new();
    template.visit_params("op", &mut |_, p: &mut Parameter<f64>| {
        param_order.push((p.id, p.value.numel()));
    });
    {
        let mut reindex = run.clone();
        reindex.visit_params("op", &mut |_, p| {
            let g = param_grads
                .get(&p.id)
                .map(|g| g.iter().map(|v| v.as_f64()).collect::<Vec<f64>>())
                .unwrap_or_else(|| vec![0.0; p.value.numel()]);
            analytic.extend(g);
        });
    }

    // Flattened point: input coordinates then parameters in visit order.
    // The E-precision values are exact in f64, so the twin evaluates the
    // true function at the point the backward pass linearised around.
    let mut theta: Vec<f64> = input.clone();
    {
        let mut probe_op = op.cast::<f64>();
        probe_op.visit_params("op", &mut |_, p| {
            theta.extend(p.value.data().iter().copied());
        });
    }

    let f = |point: &[f64]| -> f64 {
        let mut fresh = template.clone();
        let mut offset = numel;
        fresh.visit_params("op", &mut |_, p| {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&point[offset..offset + n]);
            offset += n;
        });
        let mut t = Tape::<f64>::new();
        let xv = t
            .constant(shape.clone(), point[..numel].to_vec())
            .expect("shape fixed");
        let yv = fresh.forward(&mut t, xv, true).expect("forward in probe");
        let lv = ops::weighted_sum(&mut t, yv, &probe).expect("probe readout");
        t.value(lv)[0]
    };
    let numeric = central_diff(f, &theta, eps);

    if analytic.len() != numeric.len() {
        return Err(Error::Measurement(format!(
            "gradient bookkeeping mismatch for {kind}: {} analytic vs {} numeric entries",
            analytic.len(),
            numeric.len()
        )));
    }
    Ok(compare_grads(&analytic, &numeric))
}

/// Gradient-checks a full supernet end to end at precision `E`: seeded
/// input batch, all candidates active, training-mode forward to a
/// cross-entropy loss. Compares the input gradient and every parameter
/// gradient against central differences of the exact `f64` twin.
pub fn check_supernet<E: Element>(
    space: &crate::space::SearchSpace,
    seed: u64,
    eps: f64,
) -> Result<FdReport> {
    use crate::space::Mask;
    use crate::supernet::{EdgeMode, Supernet};

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Supernet::<E>::build(space, seed)?;
    let twin = net.cast::<f64>();

    let (b, c) = (2usize, space.supernet.in_channels);
    let side = 8usize;
    let numel = b * c * side * side;
    let classes = space.supernet.classes;
    let input: Vec<f64> = (0..numel).map(|_| rng.random_range(-1.0..1.0)).collect();
    let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..classes)).collect();
    let mask = Mask::all_ones(net.subsets());

    // Analytic pass at precision E.
    let mut tape = Tape::<E>::new();
    let x = tape.constant(vec![b, c, side, side], input.iter().map(|v| E::lit(*v)).collect())?;
    let logits = net.forward(&mut tape, x, &EdgeMode::Masked(&mask), true, None)?;
    let loss = ops::softmax_cross_entropy(&mut tape, logits, &labels)?;
    tape.backward(loss)?;

    let mut analytic: Vec<f64> = tape
        .grad(x)
        .map(|g| g.iter().map(|v| v.as_f64()).collect())
        .unwrap_or_else(|| vec![0.0; numel]);
    let param_grads = tape.param_grads();
    net.visit_params(&mut |_, p| {
        let g = param_grads
            .get(&p.id)
            .map(|g| g.iter().map(|v| v.as_f64()).collect::<Vec<f64>>())
            .unwrap_or_else(|| vec![0.0; p.value.numel()]);
        analytic.extend(g);
    });

    // Flattened evaluation point: input, then parameters in visit order.
    let mut theta: Vec<f64> = input.clone();
    {
        let mut twin_probe = twin.clone();
        twin_probe.visit_params(&mut |_, p| theta.extend(p.value.data().iter().copied()));
    }

    let f = |point: &[f64]| -> f64 {
        let mut fresh = twin.clone();
        let mut offset = numel;
        fresh.visit_params(&mut |_, p| {
            let n = p.value.numel();
            p.value.data_mut().copy_from_slice(&point[offset..offset + n]);
            offset += n;
        });
        let mut t = Tape::<f64>::new();
        let xv = t.constant(vec![b, c, side, side], point[..numel].to_vec()).expect("shape fixed");
        let mask = Mask::all_ones(fresh.subsets());
        let logits = fresh
            .forward(&mut t, xv, &EdgeMode::Masked(&mask), true, None)
            .expect("probe forward");
        let lv = ops::softmax_cross_entropy(&mut t, logits, &labels).expect("probe loss");
        t.value(lv)[0]
    };
    let numeric = central_diff(f, &theta, eps);

    if analytic.len() != numeric.len() {
        return Err(Error::Measurement(format!(
            "supernet gradient bookkeeping mismatch: {} analytic vs {} numeric entries",
            analytic.len(),
            numeric.len()
        )));
    }
    Ok(compare_grads(&analytic, &numeric))
}

/// Every candidate kind, in a fixed order, for sweep-style checks.
pub const ALL_OP_KINDS: [OpKind; 10] = [
    OpKind::Zero,
    OpKind::Skip,
    OpKind::Conv1x1,
    OpKind::Conv3x3,
    OpKind::AvgPool3x3,
    OpKind::MaxPool3x3,
    OpKind::SepConv3x3,
    OpKind::SepConv5x5,
    OpKind::DilConv3x3,
    OpKind::DilConv5x5,
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn central_diff_matches_quadratic() {
        // f(x) = Σ i·x_i² has gradient 2·i·x_i.
        let f = |x: &[f64]| x.iter().enumerate().map(|(i, v)| i as f64 * v * v).sum();
        let x = [1.0, -2.0, 0.5, 3.0];
        let g = central_diff(f, &x, 1e-5);
        let expect: Vec<f64> = x.iter().enumerate().map(|(i, v)| 2.0 * i as f64 * v).collect();
        let rep = compare_grads(&expect, &g);
        assert!(rep.within(1e-9), "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn conv3x3_gradients_match_finite_differences() {
        let rep = check_op_kind::<f64>(OpKind::Conv3x3, 0, 1e-3).unwrap();
        assert!(rep.within(1e-5), "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn two_cell_supernet_gradients_match_in_both_precisions() {
        // The probe step must be small enough that no ReLU kink falls
        // inside the central-difference bracket; 3e-6 clears every seed
        // while staying far from f64 cancellation noise.
        let mut space = crate::space::SearchSpace::micro();
        space.supernet.cells_per_block = 2;
        let rep64 = check_supernet::<f64>(&space, 0, 3e-6).unwrap();
        assert!(rep64.within(1e-6), "f64 max rel err {}", rep64.max_rel_err);
        let rep32 = check_supernet::<f32>(&space, 0, 3e-6).unwrap();
        assert!(rep32.within(1e-4), "f32 max rel err {}", rep32.max_rel_err);
    }

    #[test]
    fn cross_entropy_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (n, k) = (4, 5);
        let logits: Vec<f64> = (0..n * k).map(|_| rng.random_range(-2.0..2.0)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();

        let mut tape = Tape::<f64>::new();
        let x = tape.constant(vec![n, k], logits.clone()).unwrap();
        let loss = ops::softmax_cross_entropy(&mut tape, x, &labels).unwrap();
        tape.backward(loss).unwrap();
        let analytic = tape.grad(x).unwrap().to_vec();

        let labels2 = labels.clone();
        let f = |point: &[f64]| {
            let mut t = Tape::<f64>::new();
            let xv = t.constant(vec![n, k], point.to_vec()).unwrap();
            let lv = ops::softmax_cross_entropy(&mut t, xv, &labels2).unwrap();
            t.value(lv)[0]
        };
        let numeric = central_diff(f, &logits, 1e-6);
        let rep = compare_grads(&analytic, &numeric);
        assert!(rep.within(1e-6), "max rel err {}", rep.max_rel_err);
    }

    #[test]
    fn skip_and_zero_kinds_have_exact_gradients() {
        for kind in [OpKind::Skip, OpKind::Zero] {
            let rep = check_op_kind::<f64>(kind, 1, 1e-5).unwrap();
            assert!(rep.within(1e-9), "{kind}: max rel err {}", rep.max_rel_err);
        }
    }

    #[test]
    fn every_kind_passes_in_both_precisions_smoke() {
        for kind in ALL_OP_KINDS {
            let rep = check_op_kind::<f64>(kind, 5, 1e-5).unwrap();
            assert!(rep.within(1e-6), "{kind} f64: max rel err {}", rep.max_rel_err);
            let rep = check_op_kind::<f32>(kind, 5, 1e-5).unwrap();
            assert!(rep.within(1e-4), "{kind} f32: max rel err {}", rep.max_rel_err);
        }
    }
}
