//! Brute-force ground truth for micro search spaces: train every subnet,
//! tabulate its accuracy, and score search outcomes (regret, rank
//! correlation) against the table.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::DatasetBundle;
use crate::error::{Error, Result};
use crate::optim::TrainHyper;
use crate::space::{Mask, SearchSpace};
use crate::supernet::Supernet;
use crate::train::{evaluate, train_steps, BatchGeom};

/// One fully trained subnet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub mask_id: String,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
    pub train_steps: usize,
    pub seed: u64,
    /// False when training hit a non-finite loss and stopped early; the
    /// record stays in the table, flagged rather than dropped.
    pub finite: bool,
}

/// Header line of the persisted table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OracleHeader {
    space_fingerprint: String,
    seed: u64,
    train_budget: usize,
}

/// Exhaustive accuracy table over every subnet of a search space.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTable {
    pub space_fingerprint: String,
    pub seed: u64,
    pub train_budget: usize,
    pub records: Vec<OracleRecord>,
    index: HashMap<String, usize>,
}

impl OracleTable {
    fn new(
        space_fingerprint: String,
        seed: u64,
        train_budget: usize,
        mut records: Vec<OracleRecord>,
    ) -> Result<Self> {
        // Canonical order: sort by mask id so the table is independent of
        // the enumeration order that produced it.
        records.sort_by(|a, b| a.mask_id.cmp(&b.mask_id));
        let mut index = HashMap::with_capacity(records.len());
        for (i, r) in records.iter().enumerate() {
            if !(0.0..=1.0).contains(&r.val_accuracy) || !(0.0..=1.0).contains(&r.test_accuracy) {
                return Err(Error::Format(format!(
                    "oracle record '{}' has accuracy outside [0,1]",
                    r.mask_id
                )));
            }
            if index.insert(r.mask_id.clone(), i).is_some() {
                return Err(Error::Format(format!("duplicate oracle record '{}'", r.mask_id)));
            }
        }
        Ok(OracleTable { space_fingerprint, seed, train_budget, records, index })
    }

    pub fn lookup(&self, mask: &Mask) -> Result<&OracleRecord> {
        self.lookup_id(&mask.id_string())
    }

    pub fn lookup_id(&self, mask_id: &str) -> Result<&OracleRecord> {
        self.index
            .get(mask_id)
            .map(|&i| &self.records[i])
            .ok_or_else(|| Error::Lookup(format!("mask '{mask_id}' is not in the oracle table")))
    }

    /// Record with the highest validation accuracy (ties: lowest mask id,
    /// which the canonical sort makes the first maximum).
    pub fn best(&self) -> &OracleRecord {
        self.records
            .iter()
            .reduce(|best, r| if r.val_accuracy > best.val_accuracy { r } else { best })
            .expect("oracle table is never empty")
    }

    pub fn max_val_accuracy(&self) -> f64 {
        self.best().val_accuracy
    }

    /// Ensures the table belongs to `space`.
    pub fn check_fingerprint(&self, space: &SearchSpace) -> Result<()> {
        let fp = space.fingerprint();
        if fp != self.space_fingerprint {
            return Err(Error::Fingerprint(format!(
                "oracle table was built for space {} but queried with {fp}",
                self.space_fingerprint
            )));
        }
        Ok(())
    }

    /// Shortfall of a mask against the best validation accuracy; ≥ 0, and
    /// 0 exactly for argmax masks.
    pub fn regret(&self, mask: &Mask) -> Result<f64> {
        let record = self.lookup(mask)?;
        Ok(self.max_val_accuracy() - record.val_accuracy)
    }

    /// JSON-lines persistence: one header line, then one record per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        let header = OracleHeader {
            space_fingerprint: self.space_fingerprint.clone(),
            seed: self.seed,
            train_budget: self.train_budget,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for r in &self.records {
            writeln!(out, "{}", serde_json::to_string(r)?)?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut lines = file.lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::Format("oracle file is empty".into()))??;
        let header: OracleHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::Format(format!("oracle header line is invalid: {e}")))?;
        let mut records = Vec::new();
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            records.push(
                serde_json::from_str::<OracleRecord>(&line)
                    .map_err(|e| Error::Format(format!("oracle record line is invalid: {e}")))?,
            );
        }
        if records.is_empty() {
            return Err(Error::Format("oracle file holds no records".into()));
        }
        OracleTable::new(header.space_fingerprint, header.seed, header.train_budget, records)
    }

    /// Flat CSV export for analysis tools.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "mask_id,val_accuracy,test_accuracy,train_steps,seed,finite")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{},{},{}",
                r.mask_id, r.val_accuracy, r.test_accuracy, r.train_steps, r.seed, r.finite
            )?;
        }
        Ok(())
    }
}

/// Derives the per-subnet training seed from the table seed and the mask
/// identity, so subnets are independently initialized yet reproducible.
pub fn subnet_seed(global_seed: u64, mask_id: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(global_seed.to_le_bytes());
    hasher.update(mask_id.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is long enough"))
}

/// Trains every enumerable subnet of `space` for `train_budget` optimizer
/// steps and tabulates validation/test accuracy. Spaces larger than `cap`
/// subnets are refused up front with the exact count.
pub fn build_oracle(
    space: &SearchSpace,
    data: &DatasetBundle,
    hyper: &TrainHyper,
    train_budget: usize,
    seed: u64,
    cap: u128,
) -> Result<OracleTable> {
    let masks = space.enumerate_subnets(cap)?;
    let geom = BatchGeom::square(data.channels(), data.image_size());
    let mut records = Vec::with_capacity(masks.len());
    for (i, mask) in masks.iter().enumerate() {
        let mask_id = mask.id_string();
        log::debug!("oracle subnet {}/{}: {mask_id}", i + 1, masks.len());
        let net_seed = subnet_seed(seed, &mask_id);
        let supernet = Supernet::<f32>::build(space, net_seed)?;
        let mut subnet = supernet.materialize(mask)?;
        let sub_mask = Mask::all_ones(subnet.subsets());
        let outcome =
            train_steps(&mut subnet, &sub_mask, &data.train, geom, hyper, train_budget, net_seed)?;
        let val_accuracy = evaluate(&mut subnet, &sub_mask, &data.val, geom, hyper.batch_size)?;
        let test_accuracy = evaluate(&mut subnet, &sub_mask, &data.test, geom, hyper.batch_size)?;
        records.push(OracleRecord {
            mask_id,
            val_accuracy,
            test_accuracy,
            train_steps: outcome.steps_run,
            seed: net_seed,
            finite: outcome.finite,
        });
    }
    log::info!("oracle table built: {} subnets, budget {train_budget} steps", records.len());
    OracleTable::new(space.fingerprint(), seed, train_budget, records)
}

/// Kendall rank correlation (tau-b, tie-aware) between two equally long
/// score lists. O(n log n): sort by the first list, then count inversions
/// in the second with a merge sort.
pub fn kendall_tau_b(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Dimension(format!(
            "kendall_tau_b got {} vs {} scores",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::Usage("rank correlation needs at least 2 entries".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        xs[a].partial_cmp(&xs[b]).unwrap().then(ys[a].partial_cmp(&ys[b]).unwrap())
    });

    let tie_sum = |sorted_key: &mut dyn FnMut(usize) -> (u64, u64), idx: &[usize]| -> u128 {
        // Counts Σ t(t−1)/2 over runs of equal keys.
        let mut total = 0u128;
        let mut run = 1u128;
        for w in idx.windows(2) {
            if sorted_key(w[0]) == sorted_key(w[1]) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };

    let n0 = (n as u128) * (n as u128 - 1) / 2;
    let n1 = tie_sum(&mut |i| (xs[i].to_bits(), 0), &order);
    let n3 = tie_sum(&mut |i| (xs[i].to_bits(), ys[i].to_bits()), &order);
    let mut by_y: Vec<usize> = (0..n).collect();
    by_y.sort_by(|&a, &b| ys[a].partial_cmp(&ys[b]).unwrap());
    let n2 = tie_sum(&mut |i| (ys[i].to_bits(), 0), &by_y);

    // Inversions of y in x-order = strictly discordant pairs.
    let mut seq: Vec<f64> = order.iter().map(|&i| ys[i]).collect();
    let q = count_inversions(&mut seq);

    let num = n0 as i128 - n1 as i128 - n2 as i128 + n3 as i128 - 2 * q as i128;
    let den = (((n0 - n1) as f64) * ((n0 - n2) as f64)).sqrt();
    if den == 0.0 {
        return Err(Error::Usage(
            "rank correlation is undefined when one list is entirely tied".into(),
        ));
    }
    Ok(num as f64 / den)
}

/// Merge-sort inversion count with strict comparison (equal neighbours are
/// not inversions).
fn count_inversions(values: &mut [f64]) -> u128 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = values.split_at_mut(mid);
    let mut inv = count_inversions(left) + count_inversions(right);
    let mut merged = Vec::with_capacity(n);
    let (mut i, mut j) = (0usize, 0usize);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            merged.push(left[i]);
            i += 1;
        } else {
            inv += (left.len() - i) as u128;
            merged.push(right[j]);
            j += 1;
        }
    }
    merged.extend_from_slice(&left[i..]);
    merged.extend_from_slice(&right[j..]);
    values.copy_from_slice(&merged);
    inv
}

/// Tau-b between externally produced per-mask scores and the oracle's
/// validation accuracies, over the masks both sides know.
pub fn rank_correlation(scores: &[(String, f64)], table: &OracleTable) -> Result<f64> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (mask_id, score) in scores {
        if let Ok(record) = table.lookup_id(mask_id) {
            xs.push(*score);
            ys.push(record.val_accuracy);
        }
    }
    if xs.len() < 2 {
        return Err(Error::Usage(format!(
            "rank correlation needs ≥ 2 oracle-covered entries, got {}",
            xs.len()
        )));
    }
    kendall_tau_b(&xs, &ys)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{bars_preset, synth_generate};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn tiny_hyper() -> TrainHyper {
        TrainHyper { batch_size: 32, ..TrainHyper::default() }
    }

    fn tiny_table(seed: u64, budget: usize) -> OracleTable {
        let space = crate::space::SearchSpace::micro();
        let data = synth_generate(&bars_preset(17)).unwrap();
        build_oracle(&space, &data, &tiny_hyper(), budget, seed, 256).unwrap()
    }

    #[test]
    fn micro_space_yields_27_records() {
        let table = tiny_table(5, 10);
        assert_eq!(table.records.len(), 27);
        assert!(table.records.iter().all(|r| r.finite && r.train_steps == 10));
        let ids: std::collections::HashSet<_> =
            table.records.iter().map(|r| r.mask_id.clone()).collect();
        assert_eq!(ids.len(), 27);
    }

    #[test]
    fn rebuild_with_same_seed_is_bitwise_identical() {
        let a = tiny_table(6, 8);
        let b = tiny_table(6, 8);
        assert_eq!(a, b);
        let c = tiny_table(7, 8);
        assert_ne!(
            a.records.iter().map(|r| r.seed).collect::<Vec<_>>(),
            c.records.iter().map(|r| r.seed).collect::<Vec<_>>()
        );
    }

    #[test]
    fn regret_of_best_is_zero_and_worst_spans_the_table() {
        let table = tiny_table(8, 8);
        let best = Mask::from_id_string(&table.best().mask_id).unwrap();
        assert_eq!(table.regret(&best).unwrap(), 0.0);

        let worst = table
            .records
            .iter()
            .reduce(|w, r| if r.val_accuracy < w.val_accuracy { r } else { w })
            .unwrap();
        let worst_mask = Mask::from_id_string(&worst.mask_id).unwrap();
        let span = table.max_val_accuracy() - worst.val_accuracy;
        assert_eq!(table.regret(&worst_mask).unwrap(), span);
        assert!(table.records.iter().all(|r| {
            let m = Mask::from_id_string(&r.mask_id).unwrap();
            table.regret(&m).unwrap() >= 0.0
        }));
    }

    #[test]
    fn missing_mask_is_a_lookup_error() {
        let table = tiny_table(9, 4);
        let mut foreign = Mask::from_id_string(&table.records[0].mask_id).unwrap();
        foreign.groups[0] = vec![true, true, false]; // two active: not enumerated at C=1
        assert!(matches!(table.regret(&foreign), Err(Error::Lookup(_))));
    }

    #[test]
    fn save_load_round_trip_preserves_the_table() {
        let table = tiny_table(10, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("oracle.jsonl");
        table.save(&path).unwrap();
        let loaded = OracleTable::load(&path).unwrap();
        assert_eq!(table, loaded);

        let csv = dir.path().join("oracle.csv");
        table.write_csv(&csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(text.lines().count(), 28);
        assert!(text.starts_with("mask_id,val_accuracy"));
    }

    #[test]
    fn fingerprint_gate_rejects_other_spaces() {
        let table = tiny_table(11, 4);
        table.check_fingerprint(&crate::space::SearchSpace::micro()).unwrap();
        assert!(matches!(
            table.check_fingerprint(&crate::space::SearchSpace::bench()),
            Err(Error::Fingerprint(_))
        ));
    }

    #[test]
    fn tau_matches_trivial_extremes() {
        let xs = [0.1, 0.4, 0.2, 0.9, 0.6];
        let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
        assert!((kendall_tau_b(&xs, &xs).unwrap() - 1.0).abs() < 1e-12);
        assert!((kendall_tau_b(&xs, &neg).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn tau_matches_naive_pair_counting_with_ties() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..50 {
            let n = rng.random_range(2..30usize);
            // Coarse grid values force plenty of ties.
            let xs: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.random_range(0..5) as f64).collect();

            // Note: f64::signum(0.0) is 1.0 in Rust, so the sign of a
            // difference must come from comparisons to classify ties.
            let sign = |d: f64| {
                if d > 0.0 {
                    1i64
                } else if d < 0.0 {
                    -1
                } else {
                    0
                }
            };
            let mut concordant = 0i64;
            let mut discordant = 0i64;
            let mut tx = 0i64;
            let mut ty = 0i64;
            for i in 0..n {
                for j in i + 1..n {
                    let dx = sign(xs[i] - xs[j]);
                    let dy = sign(ys[i] - ys[j]);
                    if dx == 0 && dy == 0 {
                        continue;
                    } else if dx == 0 {
                        tx += 1;
                    } else if dy == 0 {
                        ty += 1;
                    } else if dx == dy {
                        concordant += 1;
                    } else {
                        discordant += 1;
                    }
                }
            }
            let den = (((concordant + discordant + tx) as f64)
                * ((concordant + discordant + ty) as f64))
                .sqrt();
            if den == 0.0 {
                continue;
            }
            let naive = (concordant - discordant) as f64 / den;
            let fast = kendall_tau_b(&xs, &ys).unwrap();
            assert!(
                (fast - naive).abs() < 1e-12,
                "trial {trial}: fast {fast} vs naive {naive}\nxs={xs:?}\nys={ys:?}"
            );
        }
    }

    #[test]
    fn rank_correlation_needs_two_covered_entries() {
        let table = tiny_table(12, 4);
        let scores = vec![(table.records[0].mask_id.clone(), 0.5)];
        assert!(matches!(rank_correlation(&scores, &table), Err(Error::Usage(_))));

        let full: Vec<(String, f64)> =
            table.records.iter().map(|r| (r.mask_id.clone(), r.val_accuracy)).collect();
        assert!((rank_correlation(&full, &table).unwrap() - 1.0).abs() < 1e-12);
    }
}
