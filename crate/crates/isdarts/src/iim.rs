//! Information-based importance measurement (IIM) of candidate feature
//! maps: the per-pixel channel variance summed over pixels and scaled by
//! 1/3, averaged over cells and validation samples per candidate.
//!
//! All accumulation runs in 64-bit regardless of the model precision —
//! variance sums are cancellation-prone — and every reduction follows a
//! fixed order (pixels in row-major order, samples by ascending index,
//! cells by execution order), so reports are bitwise reproducible.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Split;
use crate::error::{Error, Result};
use crate::space::{Mask, Subsets};
use crate::supernet::{EdgeMode, ProbeRecord, Supernet};
use crate::tensor::{Element, Tape};
use crate::train::BatchGeom;

/// IIM of one `C×H×W` feature map: for each pixel, the population
/// variance of the C channel values, summed over pixels, divided by 3.
/// Needs at least two channels — a single value has no variance basis.
pub fn iim_of_feature_map<E: Element>(fm: &[E], c: usize, h: usize, w: usize) -> Result<f64> {
    if c < 2 {
        return Err(Error::Measurement(format!(
            "IIM needs ≥ 2 channels to form a variance, got {c}"
        )));
    }
    let plane = h * w;
    if fm.len() != c * plane {
        return Err(Error::Dimension(format!(
            "feature map has {} values, expected {c}×{h}×{w}",
            fm.len()
        )));
    }
    let mut total = 0.0f64;
    for m in 0..plane {
        let mut mean = 0.0f64;
        for ch in 0..c {
            mean += fm[ch * plane + m].as_f64();
        }
        mean /= c as f64;
        let mut var = 0.0f64;
        for ch in 0..c {
            let d = fm[ch * plane + m].as_f64() - mean;
            var += d * d;
        }
        total += var / c as f64;
    }
    Ok(total / 3.0)
}

/// Both sides of the node-additivity story: the IIM of the elementwise sum
/// of the maps, and the sum of their individual IIMs. Equal in expectation
/// for independent maps; very much not equal for correlated ones.
pub fn node_additivity_diagnostic<E: Element>(
    fms: &[&[E]],
    c: usize,
    h: usize,
    w: usize,
) -> Result<(f64, f64)> {
    let len = c * h * w;
    for fm in fms {
        if fm.len() != len {
            return Err(Error::Dimension(format!(
                "additivity diagnostic requires equal shapes; got {} values, expected {len}",
                fm.len()
            )));
        }
    }
    let mut summed = vec![E::zero(); len];
    let mut sum_of_iims = 0.0f64;
    for fm in fms {
        for (acc, v) in summed.iter_mut().zip(fm.iter()) {
            *acc += *v;
        }
        sum_of_iims += iim_of_feature_map(fm, c, h, w)?;
    }
    let iim_of_sum = iim_of_feature_map(&summed, c, h, w)?;
    Ok((iim_of_sum, sum_of_iims))
}

/// Averaged IIM per candidate at one shrink step. Inactive candidates
/// carry no value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IimReport {
    pub step: usize,
    /// Per global candidate index: `Some(mean IIM)` if active.
    pub values: Vec<Option<f64>>,
    pub n_samples: usize,
}

impl IimReport {
    /// The active candidates of one subset with their values, in subset
    /// member order.
    pub fn subset_values(&self, subsets: &Subsets, h: usize) -> Vec<(usize, f64)> {
        subsets.groups[h]
            .members
            .iter()
            .filter_map(|&g| self.values[g].map(|v| (g, v)))
            .collect()
    }

    /// Serializes as CSV with one row per active candidate.
    pub fn write_csv(
        &self,
        path: &Path,
        subsets: &Subsets,
        kind_of: &dyn Fn(usize) -> String,
    ) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "step,subset_id,edge,candidate_kind,iim,n_samples")?;
        for (g, value) in self.values.iter().enumerate() {
            if let Some(v) = value {
                let (subset, _) = subsets.position[g];
                let (edge, _) = subsets.edge_slot[g];
                writeln!(
                    out,
                    "{},{},{},{},{:.17e},{}",
                    self.step,
                    subsets.groups[subset].label,
                    edge,
                    kind_of(g),
                    v,
                    self.n_samples
                )?;
            }
        }
        Ok(())
    }
}

/// Measures every active candidate's mean IIM over a validation slice.
///
/// Samples go through one at a time in ascending index order, in
/// evaluation mode (running norm statistics, no gradient recording); each
/// candidate's per-sample value is the mean of its probe maps across all
/// cells, and the report averages those per-sample values.
pub fn accumulate_iim<E: Element>(
    net: &mut Supernet<E>,
    mask: &Mask,
    split: &Split,
    sample_indices: &[usize],
    geom: BatchGeom,
    step: usize,
) -> Result<IimReport> {
    if sample_indices.is_empty() {
        return Err(Error::Usage("IIM accumulation needs at least one sample".into()));
    }
    let num_candidates = net.subsets().edge_slot.len();
    let mut sums = vec![0.0f64; num_candidates];
    let mut active = vec![false; num_candidates];

    let mut ordered: Vec<usize> = sample_indices.to_vec();
    ordered.sort_unstable();

    for &idx in &ordered {
        let (images, _labels) = split.gather(&[idx], geom.sample_len());
        let mut tape = Tape::<E>::inference();
        let x = tape.constant(
            vec![1, geom.channels, geom.height, geom.width],
            images.iter().map(|v| E::lit(*v)).collect(),
        )?;
        let mut probes: Vec<ProbeRecord> = Vec::new();
        net.forward(&mut tape, x, &EdgeMode::Masked(mask), false, Some(&mut probes))?;

        // Mean over cells first, then accumulate per sample.
        let mut per_sample = vec![0.0f64; num_candidates];
        let mut cells_seen = vec![0usize; num_candidates];
        for probe in &probes {
            let shape = tape.shape(probe.value).to_vec();
            let (c, h, w) = (shape[1], shape[2], shape[3]);
            let value = iim_of_feature_map(tape.value(probe.value), c, h, w)?;
            per_sample[probe.candidate] += value;
            cells_seen[probe.candidate] += 1;
        }
        for g in 0..num_candidates {
            if cells_seen[g] > 0 {
                active[g] = true;
                sums[g] += per_sample[g] / cells_seen[g] as f64;
            }
        }
    }

    let n = ordered.len();
    let values = sums
        .into_iter()
        .zip(active)
        .map(|(s, a)| if a { Some(s / n as f64) } else { None })
        .collect();
    Ok(IimReport { step, values, n_samples: n })
}
