//! First-order DARTS baseline: architecture parameters α, softmax-mixed
//! edges, alternating bi-level updates, magnitude-based selection, and the
//! winner-for-loser swap experiment that probes whether the α ranking
//! actually tracks subnet quality.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::optim::{cosine_lr, sgd_nesterov_step, TrainHyper};
use crate::oracle::OracleTable;
use crate::space::{Mask, Subsets};
use crate::supernet::{EdgeMode, Supernet};
use crate::tensor::{ops, Element, ParamId, Tape, Tensor, ValueId};
use crate::train::{evaluate, BatchGeom};

/// Architecture-parameter ids live far above any weight id so the two
/// families can share a tape without colliding.
const ALPHA_ID_BASE: u64 = 1 << 40;

/// One α vector per comparison subset, all starting at zero (uniform
/// mixture).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchParams {
    pub vectors: Vec<Vec<f64>>,
}

impl ArchParams {
    pub fn new(subsets: &Subsets) -> Self {
        ArchParams { vectors: subsets.groups.iter().map(|s| vec![0.0; s.members.len()]).collect() }
    }

    pub fn param_id(h: usize) -> ParamId {
        ParamId(ALPHA_ID_BASE + h as u64)
    }

    pub fn validate(&self) -> Result<()> {
        for (h, v) in self.vectors.iter().enumerate() {
            if v.iter().any(|a| !a.is_finite()) {
                return Err(Error::Usage(format!("α vector {h} contains a non-finite entry")));
            }
        }
        Ok(())
    }

    /// Max-stable softmax of one subset's α vector.
    pub fn softmax(&self, h: usize) -> Vec<f64> {
        let v = &self.vectors[h];
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = v.iter().map(|a| (a - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }

    /// Puts each α vector on the tape as a trainable parameter and returns
    /// the per-subset softmax value ids for mixed forwarding.
    pub fn register_on_tape<E: Element>(&self, tape: &mut Tape<E>) -> Result<Vec<ValueId>> {
        let mut weights = Vec::with_capacity(self.vectors.len());
        for (h, v) in self.vectors.iter().enumerate() {
            let tensor = Tensor::<E>::new(vec![v.len()], v.iter().map(|a| E::lit(*a)).collect())?;
            let vid = tape.param(Self::param_id(h), &tensor);
            weights.push(ops::softmax_vec(tape, vid)?);
        }
        Ok(weights)
    }

    /// Same, but as frozen constants (no gradient wanted).
    pub fn constants_on_tape<E: Element>(&self, tape: &mut Tape<E>) -> Result<Vec<ValueId>> {
        let mut weights = Vec::with_capacity(self.vectors.len());
        for v in &self.vectors {
            let vid = tape.constant(vec![v.len()], v.iter().map(|a| E::lit(*a)).collect())?;
            weights.push(ops::softmax_vec(tape, vid)?);
        }
        Ok(weights)
    }
}

/// Losses of the two phases of one alternating step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BilevelOutcome {
    pub val_loss: f64,
    pub train_loss: f64,
}

/// One first-order bi-level step: α moves on the validation loss with
/// weights frozen (plain SGD, no momentum), then the weights move on the
/// training loss with the fresh α frozen.
#[allow(clippy::too_many_arguments)]
pub fn bilevel_step<E: Element>(
    net: &mut Supernet<E>,
    alpha: &mut ArchParams,
    train_batch: (&[f64], &[usize]),
    val_batch: (&[f64], &[usize]),
    geom: BatchGeom,
    hyper: &TrainHyper,
    w_lr: f64,
    alpha_lr: f64,
) -> Result<BilevelOutcome> {
    let (train_images, train_labels) = train_batch;
    let (val_images, val_labels) = val_batch;
    if train_labels.is_empty() || val_labels.is_empty() {
        return Err(Error::Usage("bilevel_step needs non-empty train and val batches".into()));
    }

    // Phase 1: α gradient on the validation batch.
    let mut tape = Tape::<E>::new();
    let x = tape.constant(
        vec![val_labels.len(), geom.channels, geom.height, geom.width],
        val_images.iter().map(|v| E::lit(*v)).collect(),
    )?;
    let weights = alpha.register_on_tape(&mut tape)?;
    let logits = net.forward(&mut tape, x, &EdgeMode::Mixed(&weights), true, None)?;
    let loss = ops::softmax_cross_entropy(&mut tape, logits, val_labels)?;
    let val_loss = tape.value(loss)[0].as_f64();
    tape.backward(loss)?;
    let grads = tape.param_grads();
    for (h, v) in alpha.vectors.iter_mut().enumerate() {
        if let Some(g) = grads.get(&ArchParams::param_id(h)) {
            for (a, gi) in v.iter_mut().zip(g) {
                *a -= alpha_lr * gi.as_f64();
            }
        }
    }
    alpha.validate()?;

    // Phase 2: weight step under the updated, frozen α.
    let mut tape = Tape::<E>::new();
    let x = tape.constant(
        vec![train_labels.len(), geom.channels, geom.height, geom.width],
        train_images.iter().map(|v| E::lit(*v)).collect(),
    )?;
    let weights = alpha.constants_on_tape(&mut tape)?;
    let logits = net.forward(&mut tape, x, &EdgeMode::Mixed(&weights), true, None)?;
    let loss = ops::softmax_cross_entropy(&mut tape, logits, train_labels)?;
    let train_loss = tape.value(loss)[0].as_f64();
    if train_loss.is_finite() {
        tape.backward(loss)?;
        net.install_grads(&tape);
        sgd_nesterov_step(hyper, w_lr, |f| net.visit_params(&mut |_, p| f(p)))?;
    }
    Ok(BilevelOutcome { val_loss, train_loss })
}

/// Magnitude selection: per subset, the C largest α entries become the
/// active candidates; ties keep the lower index.
pub fn select_by_alpha(alpha: &ArchParams, subsets: &Subsets, c: usize) -> Mask {
    debug_assert_eq!(alpha.vectors.len(), subsets.groups.len());
    let mut groups = Vec::with_capacity(alpha.vectors.len());
    for (v, subset) in alpha.vectors.iter().zip(&subsets.groups) {
        debug_assert_eq!(v.len(), subset.members.len());
        let mut order: Vec<usize> = (0..v.len()).collect();
        // Descending α; equal values fall back to ascending index.
        order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap().then(a.cmp(&b)));
        let mut bits = vec![false; v.len()];
        for &i in order.iter().take(c) {
            bits[i] = true;
        }
        groups.push(bits);
    }
    Mask { groups }
}

/// The cast of the swap experiment: selected candidates ranked by α
/// descending, and per subset the unselected candidates likewise.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapPlan {
    /// (subset, position, α) of each winner, highest α first.
    pub winners: Vec<(usize, usize, f64)>,
    /// Per subset: (position, α) of each loser, highest α first.
    pub losers: Vec<Vec<(usize, f64)>>,
}

impl SwapPlan {
    pub fn from_alpha(alpha: &ArchParams, selected: &Mask) -> Self {
        let mut winners = Vec::new();
        let mut losers = Vec::new();
        for (h, v) in alpha.vectors.iter().enumerate() {
            let mut subset_losers = Vec::new();
            for (pos, &a) in v.iter().enumerate() {
                if selected.groups[h][pos] {
                    winners.push((h, pos, a));
                } else {
                    subset_losers.push((pos, a));
                }
            }
            subset_losers
                .sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            losers.push(subset_losers);
        }
        winners.sort_by(|x, y| y.2.partial_cmp(&x.2).unwrap().then((x.0, x.1).cmp(&(y.0, y.1))));
        SwapPlan { winners, losers }
    }
}

/// Accuracy trajectory of cumulative winner→loser swaps.
#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    /// Oracle accuracies: start mask, then one entry per swap.
    pub accuracies: Vec<f64>,
    /// Masks matching each accuracy entry.
    pub masks: Vec<Mask>,
    /// Number of adjacent steps whose accuracy *rose* — each one a
    /// contradiction of the α ranking's claim to order importance.
    pub violations: usize,
}

/// Replaces, one swap at a time, the highest-α selected operation with the
/// highest-α unselected operation of the same subset, looking each
/// resulting subnet up in the oracle. If the α ranking were faithful,
/// accuracy would never rise along this sequence.
pub fn swap_experiment(
    start: &Mask,
    plan: &SwapPlan,
    table: &OracleTable,
    num_swaps: usize,
) -> Result<SwapOutcome> {
    if num_swaps > plan.winners.len() {
        return Err(Error::Usage(format!(
            "requested {num_swaps} swaps but only {} winners exist",
            plan.winners.len()
        )));
    }
    let mut masks = vec![start.clone()];
    let mut accuracies = vec![table.lookup(start)?.val_accuracy];
    let mut cursors = vec![0usize; plan.losers.len()];
    for s in 0..num_swaps {
        let (h, win_pos, _) = plan.winners[s];
        let cursor = &mut cursors[h];
        let (lose_pos, _) = *plan.losers[h].get(*cursor).ok_or_else(|| {
            Error::Usage(format!("subset {h} has no unselected candidate left to swap in"))
        })?;
        *cursor += 1;
        let mut mask = masks.last().expect("sequence starts non-empty").clone();
        mask.groups[h][win_pos] = false;
        mask.groups[h][lose_pos] = true;
        accuracies.push(table.lookup(&mask)?.val_accuracy);
        masks.push(mask);
    }
    let violations = accuracies.windows(2).filter(|w| w[1] > w[0]).count();
    Ok(SwapOutcome { accuracies, masks, violations })
}

/// One α snapshot row for CSV export.
#[derive(Debug, Clone, PartialEq)]
pub struct AlphaRow {
    pub step: usize,
    pub subset: String,
    pub candidate: usize,
    pub alpha: f64,
    pub softmax: f64,
}

pub fn write_alpha_csv(path: &Path, rows: &[AlphaRow]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "step,subset_id,candidate,alpha,softmax")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.17e},{:.17e}",
            r.step, r.subset, r.candidate, r.alpha, r.softmax
        )?;
    }
    Ok(())
}

/// Result of a full DARTS search run.
#[derive(Debug, Clone)]
pub struct DartsResult {
    pub alpha: ArchParams,
    pub selected: Mask,
    pub alpha_history: Vec<AlphaRow>,
    pub val_accuracy: f64,
    pub epochs_run: usize,
}

/// Runs first-order DARTS: the training split is cut into two fixed
/// halves (weights learn on the first, α on the second), stepped in
/// lockstep pairs each epoch. Writes `alpha.csv` and `final_mask.json`
/// when given a run directory.
pub fn run_darts<E: Element>(
    net: &mut Supernet<E>,
    data: &DatasetBundle,
    epochs: usize,
    hyper: &TrainHyper,
    alpha_lr: f64,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<DartsResult> {
    hyper.validate()?;
    if data.train.n < 2 {
        return Err(Error::Config("DARTS needs at least two training samples to split".into()));
    }
    let geom = BatchGeom::square(data.channels(), data.image_size());
    let subsets = net.subsets().clone();
    let c = subsets.c;
    let mut alpha = ArchParams::new(&subsets);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);

    let half = data.train.n / 2;
    let w_half: Vec<usize> = (0..half).collect();
    let a_half: Vec<usize> = (half..data.train.n).collect();
    let mut history = Vec::new();

    let snapshot = |alpha: &ArchParams, step: usize, history: &mut Vec<AlphaRow>| {
        for (h, v) in alpha.vectors.iter().enumerate() {
            let soft = alpha.softmax(h);
            for (pos, (&a, &s)) in v.iter().zip(&soft).enumerate() {
                history.push(AlphaRow {
                    step,
                    subset: subsets.groups[h].label.clone(),
                    candidate: subsets.groups[h].members[pos],
                    alpha: a,
                    softmax: s,
                });
            }
        }
    };
    snapshot(&alpha, 0, &mut history);

    for epoch in 0..epochs {
        let lr = cosine_lr(epoch, epochs, hyper);
        let mut w_order = w_half.clone();
        let mut a_order = a_half.clone();
        w_order.shuffle(&mut rng);
        a_order.shuffle(&mut rng);
        let pairs = w_order
            .chunks(hyper.batch_size.max(1))
            .zip(a_order.chunks(hyper.batch_size.max(1)));
        for (w_chunk, a_chunk) in pairs {
            let (w_images, w_labels) = data.train.gather(w_chunk, geom.sample_len());
            let (a_images, a_labels) = data.train.gather(a_chunk, geom.sample_len());
            let outcome = bilevel_step(
                net,
                &mut alpha,
                (&w_images, &w_labels),
                (&a_images, &a_labels),
                geom,
                hyper,
                lr,
                alpha_lr,
            )?;
            if !outcome.train_loss.is_finite() || !outcome.val_loss.is_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    detail: format!(
                        "bilevel losses train={} val={}",
                        outcome.train_loss, outcome.val_loss
                    ),
                });
            }
        }
        snapshot(&alpha, epoch + 1, &mut history);
        log::debug!("darts epoch {epoch}: lr {lr:.5}");
    }

    let selected = select_by_alpha(&alpha, &subsets, c);
    let val_accuracy = evaluate(net, &selected, &data.val, geom, hyper.batch_size)?;
    if let Some(dir) = out_dir {
        write_alpha_csv(&dir.join("alpha.csv"), &history)?;
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("final_mask.json"))?, &selected)?;
    }
    Ok(DartsResult { alpha, selected, alpha_history: history, val_accuracy, epochs_run: epochs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bars_preset, synth_generate};
    use crate::space::SearchSpace;
    use rand::Rng;

    fn quick_hyper() -> TrainHyper {
        TrainHyper { batch_size: 16, ..TrainHyper::default() }
    }

    /// Mixes constant "candidate outputs" on a bare tape exactly the way
    /// the supernet does (softmax → per-element scale → sum).
    fn mix_constants(alpha: &[f64], candidates: &[Vec<f32>]) -> Vec<f32> {
        let mut tape = Tape::<f32>::new();
        let a = tape
            .constant(vec![alpha.len()], alpha.iter().map(|v| *v as f32).collect())
            .unwrap();
        let weights = ops::softmax_vec(&mut tape, a).unwrap();
        let mut scaled = Vec::new();
        for (k, c) in candidates.iter().enumerate() {
            let x = tape.constant(vec![1, 2, 1, 2], c.clone()).unwrap();
            scaled.push(ops::scale_by_elem(&mut tape, x, weights, k).unwrap());
        }
        let total = ops::sum_all(&mut tape, &scaled).unwrap();
        tape.value(total).to_vec()
    }

    #[test]
    fn uniform_alpha_mixes_to_the_arithmetic_mean() {
        let candidates =
            vec![vec![1.0, 2.0, 3.0, 4.0], vec![5.0, 6.0, 7.0, 8.0], vec![0.0, 0.0, 3.0, 0.0]];
        let mixed = mix_constants(&[0.7, 0.7, 0.7], &candidates);
        for i in 0..4 {
            let mean = (candidates[0][i] + candidates[1][i] + candidates[2][i]) / 3.0;
            assert!((mixed[i] - mean).abs() < 1e-6, "pixel {i}: {} vs {mean}", mixed[i]);
        }
    }

    #[test]
    fn saturated_alpha_selects_one_candidate() {
        let candidates = vec![vec![1.0, -1.0, 0.5, 2.0], vec![9.0, 9.0, 9.0, 9.0]];
        let mixed = mix_constants(&[30.0, 0.0], &candidates);
        for i in 0..4 {
            assert!((mixed[i] - candidates[0][i]).abs() < 1e-6);
        }
    }

    #[test]
    fn mixing_matches_an_explicit_softmax_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..20 {
            let alpha: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let candidates: Vec<Vec<f32>> = (0..3)
                .map(|_| (0..4).map(|_| rng.random_range(-1.0f32..1.0)).collect())
                .collect();
            let mixed = mix_constants(&alpha, &candidates);

            let max = alpha.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = alpha.iter().map(|a| (a - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            for i in 0..4 {
                let expect: f64 = (0..3)
                    .map(|k| exps[k] / z * candidates[k][i] as f64)
                    .sum();
                assert!((mixed[i] as f64 - expect).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn zero_alpha_lr_reduces_to_plain_sgd_on_the_mixture() {
        let data = synth_generate(&bars_preset(21)).unwrap();
        let space = SearchSpace::micro();
        let geom = BatchGeom::square(1, 8);
        let hyper = quick_hyper();
        let (ti, tl) = data.train.gather(&(0..16).collect::<Vec<_>>(), 64);
        let (vi, vl) = data.train.gather(&(16..32).collect::<Vec<_>>(), 64);

        // Bilevel path with α frozen at zero.
        let mut bilevel_net = Supernet::<f32>::build(&space, 31).unwrap();
        let mut alpha = ArchParams::new(bilevel_net.subsets());
        for _ in 0..3 {
            bilevel_step(
                &mut bilevel_net,
                &mut alpha,
                (&ti, &tl),
                (&vi, &vl),
                geom,
                &hyper,
                0.01,
                0.0,
            )
            .unwrap();
        }
        assert_eq!(alpha.vectors, ArchParams::new(bilevel_net.subsets()).vectors);

        // Plain SGD on the uniform mixture, same batches.
        let mut plain_net = Supernet::<f32>::build(&space, 31).unwrap();
        let frozen = ArchParams::new(plain_net.subsets());
        for _ in 0..3 {
            let mut tape = Tape::<f32>::new();
            let x = tape
                .constant(vec![16, 1, 8, 8], ti.iter().map(|v| *v as f32).collect())
                .unwrap();
            let weights = frozen.constants_on_tape(&mut tape).unwrap();
            let logits =
                plain_net.forward(&mut tape, x, &EdgeMode::Mixed(&weights), true, None).unwrap();
            let loss = ops::softmax_cross_entropy(&mut tape, logits, &tl).unwrap();
            tape.backward(loss).unwrap();
            plain_net.install_grads(&tape);
            sgd_nesterov_step(&hyper, 0.01, |f| plain_net.visit_params(&mut |_, p| f(p))).unwrap();
        }

        let mut lhs = Vec::new();
        bilevel_net.visit_params(&mut |_, p| lhs.extend(p.value.data().iter().map(|v| v.to_bits())));
        let mut rhs = Vec::new();
        plain_net.visit_params(&mut |_, p| rhs.extend(p.value.data().iter().map(|v| v.to_bits())));
        assert_eq!(lhs, rhs, "weight trajectories must agree bitwise");
    }

    #[test]
    fn alpha_gradient_matches_finite_differences() {
        // One-cell variant of the micro space keeps the FD loop cheap.
        let mut space = SearchSpace::micro();
        space.supernet.cells_per_block = 1;
        let data = synth_generate(&bars_preset(22)).unwrap();
        let geom = BatchGeom::square(1, 8);
        let mut net = Supernet::<f64>::build(&space, 17).unwrap();
        let (vi, vl) = data.val.gather(&(0..8).collect::<Vec<_>>(), 64);

        let mut alpha = ArchParams::new(net.subsets());
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for v in &mut alpha.vectors {
            for a in v.iter_mut() {
                *a = rng.random_range(-0.5..0.5);
            }
        }

        let loss_of = |net: &mut Supernet<f64>, alpha: &ArchParams| -> f64 {
            let mut tape = Tape::<f64>::new();
            let x = tape.constant(vec![8, 1, 8, 8], vi.clone()).unwrap();
            let weights = alpha.constants_on_tape(&mut tape).unwrap();
            let logits = net.forward(&mut tape, x, &EdgeMode::Mixed(&weights), true, None).unwrap();
            let loss = ops::softmax_cross_entropy(&mut tape, logits, &vl).unwrap();
            tape.value(loss)[0]
        };

        // Analytic α gradient.
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(vec![8, 1, 8, 8], vi.clone()).unwrap();
        let weights = alpha.register_on_tape(&mut tape).unwrap();
        let logits = net.forward(&mut tape, x, &EdgeMode::Mixed(&weights), true, None).unwrap();
        let loss = ops::softmax_cross_entropy(&mut tape, logits, &vl).unwrap();
        tape.backward(loss).unwrap();
        let grads = tape.param_grads();

        let eps = 1e-5;
        let mut worst = 0.0f64;
        for h in 0..alpha.vectors.len() {
            let g = &grads[&ArchParams::param_id(h)];
            for pos in 0..alpha.vectors[h].len() {
                let saved = alpha.vectors[h][pos];
                alpha.vectors[h][pos] = saved + eps;
                let up = loss_of(&mut net, &alpha);
                alpha.vectors[h][pos] = saved - eps;
                let down = loss_of(&mut net, &alpha);
                alpha.vectors[h][pos] = saved;
                let numeric = (up - down) / (2.0 * eps);
                let rel = (g[pos] - numeric).abs() / g[pos].abs().max(numeric.abs()).max(1.0);
                worst = worst.max(rel);
            }
        }
        assert!(worst < 1e-4, "worst α relative error {worst}");
    }

    #[test]
    fn softmax_stays_normalized_across_steps() {
        let data = synth_generate(&bars_preset(23)).unwrap();
        let space = SearchSpace::micro();
        let geom = BatchGeom::square(1, 8);
        let hyper = quick_hyper();
        let mut net = Supernet::<f32>::build(&space, 7).unwrap();
        let mut alpha = ArchParams::new(net.subsets());
        let (ti, tl) = data.train.gather(&(0..16).collect::<Vec<_>>(), 64);
        let (vi, vl) = data.train.gather(&(128..144).collect::<Vec<_>>(), 64);
        for _ in 0..5 {
            bilevel_step(&mut net, &mut alpha, (&ti, &tl), (&vi, &vl), geom, &hyper, 0.01, 0.05)
                .unwrap();
            for h in 0..alpha.vectors.len() {
                let sum: f64 = alpha.softmax(h).iter().sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
        assert!(
            alpha.vectors.iter().flatten().any(|a| a.abs() > 1e-9),
            "α must actually move under a non-zero α learning rate"
        );
    }

    #[test]
    fn selection_takes_top_c_with_index_ties_and_shift_invariance() {
        let space = SearchSpace::micro();
        let subsets = space.subsets();
        let mut alpha = ArchParams::new(&subsets);
        alpha.vectors[0] = vec![0.9, 0.1, 0.5];
        alpha.vectors[1] = vec![0.5, 0.5, 0.1];
        alpha.vectors[2] = vec![-1.0, -0.5, -2.0];
        let mask = select_by_alpha(&alpha, &subsets, 1);
        assert_eq!(mask.groups[0], vec![true, false, false]);
        assert_eq!(mask.groups[1], vec![true, false, false], "tie keeps the lower index");
        assert_eq!(mask.groups[2], vec![false, true, false]);

        for v in &mut alpha.vectors {
            for a in v.iter_mut() {
                *a += 17.5;
            }
        }
        assert_eq!(select_by_alpha(&alpha, &subsets, 1), mask, "shift invariance");
    }


    #[test]
    fn swap_sequence_covers_self_swaps_lengths_and_lookup_errors() {
        let space = SearchSpace::micro();
        let subsets = space.subsets();
        let data = synth_generate(&bars_preset(17)).unwrap();
        let hyper = quick_hyper();
        let table = crate::oracle::build_oracle(&space, &data, &hyper, 8, 40, 256).unwrap();

        let mut alpha = ArchParams::new(&subsets);
        alpha.vectors[0] = vec![0.3, 0.9, 0.1];
        alpha.vectors[1] = vec![0.8, 0.2, 0.4];
        alpha.vectors[2] = vec![0.1, 0.6, 0.5];
        let selected = select_by_alpha(&alpha, &subsets, 1);
        let plan = SwapPlan::from_alpha(&alpha, &selected);
        assert_eq!(plan.winners.len(), 3);
        assert_eq!(plan.winners[0].2, 0.9, "winners ranked by alpha descending");
        assert!(plan.losers.iter().all(|l| l.len() == 2));

        let outcome = swap_experiment(&selected, &plan, &table, 3).unwrap();
        assert_eq!(outcome.accuracies.len(), 4, "start plus one entry per swap");
        assert!(outcome.violations <= 3);
        for m in &outcome.masks {
            assert_eq!(m.total_active(), 3);
        }

        // A degenerate plan that swaps a winner with itself changes nothing.
        let mut self_plan = plan.clone();
        let (h0, p0, a0) = self_plan.winners[0];
        self_plan.losers[h0].insert(0, (p0, a0));
        let noop = swap_experiment(&selected, &self_plan, &table, 1).unwrap();
        assert_eq!(noop.accuracies[0], noop.accuracies[1]);
        assert_eq!(noop.masks[0], noop.masks[1]);

        // Exhausting a subset's losers is a usage error, not a panic.
        let mut starved = plan.clone();
        starved.losers[plan.winners[0].0].clear();
        assert!(matches!(
            swap_experiment(&selected, &starved, &table, 1),
            Err(Error::Usage(_))
        ));
        assert!(matches!(swap_experiment(&selected, &plan, &table, 7), Err(Error::Usage(_))));
    }

    #[test]
    fn full_darts_run_selects_a_complete_mask_deterministically() {
        let data = synth_generate(&bars_preset(24)).unwrap();
        let space = SearchSpace::micro();
        let hyper = quick_hyper();
        let run = || {
            let mut net = Supernet::<f32>::build(&space, 51).unwrap();
            run_darts(&mut net, &data, 2, &hyper, 3e-4, 51, None).unwrap()
        };
        let a = run();
        for h in 0..3 {
            assert_eq!(a.selected.active_in_subset(h), 1);
        }
        assert_eq!(a.epochs_run, 2);
        // One snapshot before training plus one per epoch, 9 rows each.
        assert_eq!(a.alpha_history.len(), 3 * 9);
        let b = run();
        assert_eq!(a.selected, b.selected);
        assert_eq!(a.alpha, b.alpha);
    }

    #[test]
    fn alpha_csv_has_header_and_one_row_per_snapshot_entry() {
        let subsets = SearchSpace::micro().subsets();
        let alpha = ArchParams::new(&subsets);
        let mut rows = Vec::new();
        for (h, v) in alpha.vectors.iter().enumerate() {
            let soft = alpha.softmax(h);
            for (pos, (&a, &s)) in v.iter().zip(&soft).enumerate() {
                rows.push(AlphaRow {
                    step: 0,
                    subset: subsets.groups[h].label.clone(),
                    candidate: subsets.groups[h].members[pos],
                    alpha: a,
                    softmax: s,
                });
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("alpha.csv");
        write_alpha_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "step,subset_id,candidate,alpha,softmax");
        assert_eq!(lines.len(), 10);
        assert!(lines[1].contains("edge(0-1)"));
    }
}
