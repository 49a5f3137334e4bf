//! The IS-DARTS search loop: train the supernet, measure candidate IIM on
//! a fixed validation slice, discard the lowest-ranked candidates per
//! comparison subset, and repeat until every subset holds exactly C
//! operations.
//!
//! The shrink rate `r` controls how many measure-and-discard steps the
//! schedule takes (`round(1/r)`); `r = 1` collapses the whole search into
//! a single selection step (the one-shot ablation of the method).

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::iim::{accumulate_iim, IimReport};
use crate::optim::{cosine_lr, TrainHyper};
use crate::space::{Mask, SearchSpace, Subsets};
use crate::supernet::Supernet;
use crate::train::{evaluate, run_epoch, BatchGeom};

/// Shrink timetable: how long to warm up, how often to shrink, how much.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkSchedule {
    /// Fraction of the gap |φ|−C removed per step, in (0, 1].
    pub r: f64,
    pub warmup_epochs: usize,
    pub interval_epochs: usize,
}

impl ShrinkSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.r > 0.0 && self.r <= 1.0) {
            return Err(Error::Config(format!("shrink rate r must lie in (0, 1], got {}", self.r)));
        }
        if self.interval_epochs == 0 {
            return Err(Error::Config("interval_epochs must be positive".into()));
        }
        Ok(())
    }

    /// Number of measure-and-discard steps.
    pub fn total_steps(&self) -> usize {
        (1.0 / self.r).round().max(1.0) as usize
    }

    /// Epochs of the whole run: warmup plus one interval per step.
    pub fn total_epochs(&self) -> usize {
        self.warmup_epochs + self.interval_epochs * self.total_steps()
    }
}

/// Half-up rounding, the tie rule of the reserved-count schedule.
fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// How many candidates a subset of `size` keeps after `z` steps. The
/// linear descent from `size` to `c` is rounded half-up at every step, so
/// both endpoints are exact: `z = 0` gives `size`, `z = total_steps`
/// gives `c`.
pub fn reserved_count(z: usize, size: usize, c: usize, r: f64) -> usize {
    let total = (1.0 / r).round().max(1.0) as usize;
    if z == 0 {
        return size;
    }
    if z >= total {
        return c;
    }
    let ideal = size as f64 - z as f64 * r * (size as f64 - c as f64);
    (round_half_up(ideal) as usize).clamp(c, size)
}

/// The full reserved-count sequence for one subset, `z = 0 ..= total`.
pub fn schedule_counts(size: usize, c: usize, r: f64) -> Vec<usize> {
    let total = (1.0 / r).round().max(1.0) as usize;
    (0..=total).map(|z| reserved_count(z, size, c, r)).collect()
}

/// One discard round: per subset, move the lowest-IIM active candidates
/// out of the mask until the subset matches its reserved count for step
/// `z`. Ties rank the lower candidate index first (so it is discarded
/// first).
pub fn shrink_step(
    mask: &Mask,
    report: &IimReport,
    subsets: &Subsets,
    z: usize,
    c: usize,
    r: f64,
) -> Result<Mask> {
    let mut next = mask.clone();
    for (h, subset) in subsets.groups.iter().enumerate() {
        let active: Vec<(usize, usize)> = subset
            .members
            .iter()
            .enumerate()
            .filter(|(pos, _)| mask.groups[h][*pos])
            .map(|(pos, &g)| (pos, g))
            .collect();
        let target = reserved_count(z, subset.members.len(), c, r);
        if active.len() < target {
            return Err(Error::Usage(format!(
                "subset {h} holds {} active candidates but step {z} reserves {target}",
                active.len()
            )));
        }
        let discard = active.len() - target;
        if discard == 0 {
            continue;
        }
        let mut ranked: Vec<(f64, usize, usize)> = Vec::with_capacity(active.len());
        for (pos, g) in active {
            let value = report.values[g].ok_or_else(|| {
                Error::Usage(format!("report at step {} lacks a value for active candidate {g}", report.step))
            })?;
            ranked.push((value, pos, g));
        }
        // Increasing IIM; equal values fall back to the lower global index.
        ranked.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.2.cmp(&b.2)));
        for (_, pos, _) in ranked.into_iter().take(discard) {
            next.groups[h][pos] = false;
        }
    }
    Ok(next)
}

/// One line of the run log: an epoch of training or a shrink event.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum LogEvent {
    Epoch { epoch: usize, loss: f64, lr: f64, active: usize },
    Shrink { step: usize, epoch: usize, active: usize, mask: String },
}

/// Everything a finished search hands back.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub final_mask: Mask,
    pub reports: Vec<IimReport>,
    pub mask_history: Vec<Mask>,
    pub log: Vec<LogEvent>,
    pub epochs_run: usize,
    pub val_accuracy: f64,
}

/// Runs the full search on an already-built supernet and dataset.
///
/// Training covers warmup first (full supernet), then one interval per
/// shrink step on the current masked subnet, with the cosine schedule
/// spanning all epochs and weights carried across steps. Because no
/// architecture parameter is ever fitted, weights train on the union of
/// the train and validation splits; the IIM probe still reads a fixed
/// seed-selected slice of the validation split, chosen once.
/// When `out_dir` is set, the run directory receives `mask_step_{z}.json`,
/// `iim_step_{z}.csv`, `checkpoint_step_{z}`, `final_mask.json`, and
/// `log.jsonl`.
#[allow(clippy::too_many_arguments)]
pub fn run_search<E: crate::tensor::Element>(
    net: &mut Supernet<E>,
    data: &DatasetBundle,
    schedule: &ShrinkSchedule,
    hyper: &TrainHyper,
    iim_samples: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<RunResult> {
    schedule.validate()?;
    hyper.validate()?;
    let space: SearchSpace = net.space().clone();
    let subsets = net.subsets().clone();
    let c = subsets.c;
    let geom = BatchGeom::square(data.channels(), data.image_size());
    let total_epochs = schedule.total_epochs();
    let total_steps = schedule.total_steps();

    if iim_samples == 0 || iim_samples > data.val.n {
        return Err(Error::Config(format!(
            "iim_samples must lie in 1..={}, got {iim_samples}",
            data.val.n
        )));
    }
    for subset in &subsets.groups {
        // Every prefix of the schedule must be achievable: sizes only shrink.
        let counts = schedule_counts(subset.members.len(), c, schedule.r);
        for pair in counts.windows(2) {
            if pair[1] > pair[0] {
                return Err(Error::Config(format!(
                    "schedule for subset '{}' is not non-increasing: {counts:?}",
                    subset.label
                )));
            }
        }
    }

    let train_pool = data.train.concat(&data.val);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(1);
    let mut slice_rng = ChaCha8Rng::seed_from_u64(seed);
    slice_rng.set_stream(2);
    let mut val_indices: Vec<usize> = (0..data.val.n).collect();
    val_indices.shuffle(&mut slice_rng);
    val_indices.truncate(iim_samples);
    val_indices.sort_unstable();

    let mut mask = Mask::all_ones(&subsets);
    let mut log: Vec<LogEvent> = Vec::new();
    let mut reports: Vec<IimReport> = Vec::new();
    let mut mask_history: Vec<Mask> = vec![mask.clone()];
    let mut epoch = 0usize;

    let train_one = |net: &mut Supernet<E>,
                         mask: &Mask,
                         epoch: usize,
                         rng: &mut ChaCha8Rng,
                         log: &mut Vec<LogEvent>|
     -> Result<()> {
        let lr = cosine_lr(epoch, total_epochs, hyper);
        let loss =
            run_epoch(net, mask, &train_pool, geom, hyper, lr, rng, data.spec.augment)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                detail: format!("training loss became {loss}"),
            });
        }
        log::debug!("epoch {epoch}: loss {loss:.4}, lr {lr:.5}, {} active", mask.total_active());
        log.push(LogEvent::Epoch { epoch, loss, lr, active: mask.total_active() });
        Ok(())
    };

    for _ in 0..schedule.warmup_epochs {
        train_one(net, &mask, epoch, &mut batch_rng, &mut log)?;
        epoch += 1;
    }

    for z in 1..=total_steps {
        for _ in 0..schedule.interval_epochs {
            train_one(net, &mask, epoch, &mut batch_rng, &mut log)?;
            epoch += 1;
        }
        let report = accumulate_iim(net, &mask, &data.val, &val_indices, geom, z)?;
        mask = shrink_step(&mask, &report, &subsets, z, c, schedule.r)?;
        log::info!("shrink step {z}/{total_steps}: {} candidates remain", mask.total_active());
        log.push(LogEvent::Shrink {
            step: z,
            epoch,
            active: mask.total_active(),
            mask: mask.id_string(),
        });
        if let Some(dir) = out_dir {
            write_step_artifacts(dir, z, &mask, &report, &space, &subsets, net)?;
        }
        reports.push(report);
        mask_history.push(mask.clone());
    }

    for (h, subset) in subsets.groups.iter().enumerate() {
        debug_assert_eq!(mask.active_in_subset(h), c, "subset '{}' not fully shrunk", subset.label);
    }

    let val_accuracy = evaluate(net, &mask, &data.val, geom, hyper.batch_size)?;
    if let Some(dir) = out_dir {
        serde_json::to_writer_pretty(std::fs::File::create(dir.join("final_mask.json"))?, &mask)?;
        let mut logfile = std::io::BufWriter::new(std::fs::File::create(dir.join("log.jsonl"))?);
        for event in &log {
            writeln!(logfile, "{}", serde_json::to_string(event)?)?;
        }
    }

    Ok(RunResult { final_mask: mask, reports, mask_history, log, epochs_run: epoch, val_accuracy })
}

fn write_step_artifacts<E: crate::tensor::Element>(
    dir: &Path,
    z: usize,
    mask: &Mask,
    report: &IimReport,
    space: &SearchSpace,
    subsets: &Subsets,
    net: &mut Supernet<E>,
) -> Result<()> {
    let mask_path: PathBuf = dir.join(format!("mask_step_{z}.json"));
    serde_json::to_writer_pretty(std::fs::File::create(mask_path)?, mask)?;
    let kind_of = |g: usize| space.candidate_kind(g).as_str().to_string();
    report.write_csv(&dir.join(format!("iim_step_{z}.csv")), subsets, &kind_of)?;
    checkpoint::save_supernet(&dir.join(format!("checkpoint_step_{z}")), net)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bars_preset, synth_generate};

    #[test]
    fn five_candidate_quarter_rate_schedule() {
        assert_eq!(schedule_counts(5, 1, 0.25), vec![5, 4, 3, 2, 1]);
    }

    #[test]
    fn forty_candidate_sevenths_schedule() {
        assert_eq!(schedule_counts(40, 2, 1.0 / 7.0), vec![40, 35, 29, 24, 18, 13, 7, 2]);
    }

    #[test]
    fn endpoint_always_lands_on_c() {
        for size in 2..60 {
            for c in 1..3.min(size) {
                for r in [1.0, 0.5, 0.25, 1.0 / 3.0, 1.0 / 7.0, 0.2] {
                    let counts = schedule_counts(size, c, r);
                    assert_eq!(*counts.first().unwrap(), size);
                    assert_eq!(*counts.last().unwrap(), c, "size {size} c {c} r {r}");
                    for pair in counts.windows(2) {
                        assert!(pair[1] <= pair[0], "non-increasing: {counts:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn shrink_discards_the_minimum_with_index_ties() {
        let space = crate::space::SearchSpace::micro();
        let subsets = space.subsets();
        let mask = Mask::all_ones(&subsets);
        // Subset 0 gets a strict minimum at index 0; subset 1 a tie between
        // its first two members; subset 2 a minimum at its last member.
        let report = IimReport {
            step: 1,
            values: vec![
                Some(0.1), Some(0.5), Some(0.3),
                Some(0.2), Some(0.2), Some(0.9),
                Some(0.4), Some(0.3), Some(0.1),
            ],
            n_samples: 4,
        };
        let next = shrink_step(&mask, &report, &subsets, 1, 1, 0.5).unwrap();
        assert_eq!(next.groups[0], vec![false, true, true]);
        assert_eq!(next.groups[1], vec![false, true, true], "tie falls to the lower index");
        assert_eq!(next.groups[2], vec![true, true, false]);
    }

    #[test]
    fn shrink_outcome_ignores_positive_scaling() {
        let space = crate::space::SearchSpace::micro();
        let subsets = space.subsets();
        let mask = Mask::all_ones(&subsets);
        let values: Vec<Option<f64>> =
            [0.3, 0.1, 0.2, 0.5, 0.45, 0.6, 0.9, 0.2, 0.4].iter().map(|v| Some(*v)).collect();
        let report = IimReport { step: 1, values: values.clone(), n_samples: 2 };
        let scaled = IimReport {
            step: 1,
            values: values.iter().map(|v| v.map(|x| x * 137.0)).collect(),
            n_samples: 2,
        };
        let a = shrink_step(&mask, &report, &subsets, 1, 1, 1.0).unwrap();
        let b = shrink_step(&mask, &scaled, &subsets, 1, 1, 1.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn missing_report_value_is_a_usage_error() {
        let space = crate::space::SearchSpace::micro();
        let subsets = space.subsets();
        let mask = Mask::all_ones(&subsets);
        let mut values: Vec<Option<f64>> = vec![Some(1.0); 9];
        values[4] = None;
        let report = IimReport { step: 1, values, n_samples: 1 };
        assert!(matches!(
            shrink_step(&mask, &report, &subsets, 1, 1, 1.0),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn full_search_shrinks_to_c_and_is_deterministic() {
        let data = synth_generate(&bars_preset(11)).unwrap();
        let space = crate::space::SearchSpace::micro();
        let schedule = ShrinkSchedule { r: 0.5, warmup_epochs: 1, interval_epochs: 1 };
        let hyper = TrainHyper { batch_size: 32, ..TrainHyper::default() };

        let run = || {
            let mut net = Supernet::<f32>::build(&space, 21).unwrap();
            run_search(&mut net, &data, &schedule, &hyper, 16, 21, None).unwrap()
        };
        let a = run();
        assert_eq!(a.epochs_run, 3, "1 warmup + 2 steps × 1 interval");
        for h in 0..3 {
            assert_eq!(a.final_mask.active_in_subset(h), 1);
        }
        // Monotone trajectory: each mask is contained in its predecessor.
        for pair in a.mask_history.windows(2) {
            assert!(pair[1].is_subset_of(&pair[0]));
        }
        let b = run();
        assert_eq!(a.final_mask, b.final_mask);
        assert_eq!(a.reports, b.reports);
    }

    #[test]
    fn run_directory_holds_all_artifacts() {
        let data = synth_generate(&bars_preset(12)).unwrap();
        let space = crate::space::SearchSpace::micro();
        let schedule = ShrinkSchedule { r: 0.5, warmup_epochs: 0, interval_epochs: 1 };
        let hyper = TrainHyper { batch_size: 32, ..TrainHyper::default() };
        let dir = tempfile::tempdir().unwrap();
        let mut net = Supernet::<f32>::build(&space, 2).unwrap();
        run_search(&mut net, &data, &schedule, &hyper, 8, 2, Some(dir.path())).unwrap();
        for name in [
            "mask_step_1.json",
            "mask_step_2.json",
            "iim_step_1.csv",
            "iim_step_2.csv",
            "checkpoint_step_1",
            "checkpoint_step_2",
            "final_mask.json",
            "log.jsonl",
        ] {
            assert!(dir.path().join(name).exists(), "missing {name}");
        }
        let final_mask: Mask =
            serde_json::from_reader(std::fs::File::open(dir.path().join("final_mask.json")).unwrap())
                .unwrap();
        assert_eq!(final_mask.total_active(), 3);
        let log = std::fs::read_to_string(dir.path().join("log.jsonl")).unwrap();
        assert_eq!(log.lines().count(), 2 + 2, "2 epoch lines + 2 shrink lines");
        assert!(!log.contains("time"), "log lines carry no timestamps");
    }

    #[test]
    fn r_equal_one_is_single_step_selection() {
        let data = synth_generate(&bars_preset(13)).unwrap();
        let space = crate::space::SearchSpace::micro();
        let schedule = ShrinkSchedule { r: 1.0, warmup_epochs: 1, interval_epochs: 1 };
        assert_eq!(schedule.total_steps(), 1);
        let hyper = TrainHyper { batch_size: 32, ..TrainHyper::default() };
        let mut net = Supernet::<f32>::build(&space, 3).unwrap();
        let result = run_search(&mut net, &data, &schedule, &hyper, 8, 3, None).unwrap();
        assert_eq!(result.reports.len(), 1);
        assert_eq!(result.final_mask.total_active(), 3);
    }
}
