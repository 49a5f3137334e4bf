//! Deterministic synthetic image-classification tasks, plus an IDX binary
//! reader/writer.
//!
//! Both generators are built so the label never shows up in global pixel
//! statistics: every clean image of every class has *exactly* half its
//! pixels at 1.0, so per-channel global means carry no class information
//! and a global-average-pool → linear readout sits at chance. Only local
//! spatial filtering (orientation or frequency selectivity) can separate
//! the classes — which is precisely what parameter-free subnets cannot
//! learn.
//!
//! Generation is a pure function of the spec: each sample draws from its
//! own RNG stream indexed by a global sample counter, which also makes the
//! train/val/test splits disjoint by construction.

use std::io::Read;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Magic number of an IDX file holding unsigned-byte images (rank 3).
const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
/// Magic number of an IDX file holding unsigned-byte labels (rank 1).
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Class = stripe orientation (0°, 90°, 45°, 135°), random phase.
    OrientedBars,
    /// Class = checkerboard block size (1, 2, 4, …), random shift.
    CheckerFrequency,
}

/// Full description of a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: GeneratorKind,
    pub classes: usize,
    /// Square image side length.
    pub image_size: usize,
    pub channels: usize,
    pub train_samples: usize,
    pub val_samples: usize,
    pub test_samples: usize,
    /// Standard deviation of additive Gaussian pixel noise.
    pub noise: f64,
    pub seed: u64,
    /// Random crop/flip during weight training. Off by default: the desk
    /// runs favour exact reproducibility over augmentation gains.
    #[serde(default)]
    pub augment: bool,
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::Config(format!(
                "dataset.classes must be ≥ 2, got {}",
                self.classes
            )));
        }
        if self.channels == 0 {
            return Err(Error::Config("dataset.channels must be positive".into()));
        }
        if self.noise < 0.0 {
            return Err(Error::Config(format!(
                "dataset.noise must be non-negative, got {}",
                self.noise
            )));
        }
        match self.kind {
            GeneratorKind::OrientedBars => {
                if self.classes > 4 {
                    return Err(Error::Config(format!(
                        "oriented_bars supports at most 4 orientations, got {} classes",
                        self.classes
                    )));
                }
                if self.image_size % 4 != 0 {
                    return Err(Error::Config(format!(
                        "oriented_bars needs image_size divisible by 4 (stripe period), got {}",
                        self.image_size
                    )));
                }
            }
            GeneratorKind::CheckerFrequency => {
                let max_block = 1usize << (self.classes - 1);
                if self.image_size % (2 * max_block) != 0 {
                    return Err(Error::Config(format!(
                        "checker_frequency with {} classes needs image_size divisible by {}, got {}",
                        self.classes,
                        2 * max_block,
                        self.image_size
                    )));
                }
            }
        }
        for (name, n) in [
            ("train_samples", self.train_samples),
            ("val_samples", self.val_samples),
            ("test_samples", self.test_samples),
        ] {
            if n == 0 {
                return Err(Error::Config(format!("dataset.{name} must be positive")));
            }
            if n % self.classes != 0 {
                return Err(Error::Config(format!(
                    "dataset.{name} ({n}) must be divisible by classes ({}) for exact balance",
                    self.classes
                )));
            }
        }
        Ok(())
    }
}

/// One split: row-major images `(N, C, H, W)` in `[0, 1]` plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub images: Vec<f64>,
    pub labels: Vec<usize>,
    pub n: usize,
}

/// The three generated splits plus their common geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub spec: DatasetSpec,
    pub train: Split,
    pub val: Split,
    pub test: Split,
}

impl DatasetBundle {
    pub fn channels(&self) -> usize {
        self.spec.channels
    }

    pub fn image_size(&self) -> usize {
        self.spec.image_size
    }

    /// Elements per image.
    pub fn sample_len(&self) -> usize {
        self.spec.channels * self.spec.image_size * self.spec.image_size
    }
}

impl Split {
    /// Copies the requested samples into one contiguous batch.
    pub fn gather(&self, indices: &[usize], sample_len: usize) -> (Vec<f64>, Vec<usize>) {
        let mut images = Vec::with_capacity(indices.len() * sample_len);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            images.extend_from_slice(&self.images[i * sample_len..(i + 1) * sample_len]);
            labels.push(self.labels[i]);
        }
        (images, labels)
    }

    /// New split holding this split's samples followed by `other`'s. Used
    /// by the shrink search, which fits weights on the union of the train
    /// and validation splits.
    pub fn concat(&self, other: &Split) -> Split {
        let mut images = self.images.clone();
        images.extend_from_slice(&other.images);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Split { images, labels, n: self.n + other.n }
    }
}

/// Generates all three splits. Pure in the spec: identical specs yield
/// bitwise-identical arrays.
pub fn synth_generate(spec: &DatasetSpec) -> Result<DatasetBundle> {
    spec.validate()?;
    let mut offset = 0u64;
    let mut make = |count: usize| -> Split {
        let split = generate_split(spec, count, offset);
        offset += count as u64;
        split
    };
    let train = make(spec.train_samples);
    let val = make(spec.val_samples);
    let test = make(spec.test_samples);
    Ok(DatasetBundle { spec: spec.clone(), train, val, test })
}

fn generate_split(spec: &DatasetSpec, count: usize, stream_offset: u64) -> Split {
    let sample_len = spec.channels * spec.image_size * spec.image_size;
    let mut images = Vec::with_capacity(count * sample_len);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let class = i % spec.classes;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(stream_offset + i as u64);
        images.extend(render_sample(spec, class, &mut rng));
        labels.push(class);
    }
    Split { images, labels, n: count }
}

/// One clean pattern plus noise, quantized to the 8-bit grid `k/255` so a
/// round trip through the IDX byte format is lossless.
fn render_sample(spec: &DatasetSpec, class: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let h = spec.image_size;
    let plane: Vec<f64> = match spec.kind {
        GeneratorKind::OrientedBars => {
            let phase = rng.random_range(0..4usize);
            let mut out = Vec::with_capacity(h * h);
            for r in 0..h {
                for c in 0..h {
                    // Projections along the four orientations; each takes
                    // every residue mod 4 equally often on a 4k×4k grid, so
                    // the duty-1/2 stripe covers exactly half the pixels.
                    let proj = match class {
                        0 => c,
                        1 => r,
                        2 => r + c,
                        _ => r + 4 * h - c,
                    };
                    let on = (proj + phase) % 4 < 2;
                    out.push(if on { 1.0 } else { 0.0 });
                }
            }
            out
        }
        GeneratorKind::CheckerFrequency => {
            let block = 1usize << class;
            let dr = rng.random_range(0..2 * block);
            let dc = rng.random_range(0..2 * block);
            let mut out = Vec::with_capacity(h * h);
            for r in 0..h {
                for c in 0..h {
                    let on = (((r + dr) / block) + ((c + dc) / block)) % 2 == 0;
                    out.push(if on { 1.0 } else { 0.0 });
                }
            }
            out
        }
    };

    let noise = Normal::new(0.0, spec.noise.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let mut out = Vec::with_capacity(spec.channels * h * h);
    for _ in 0..spec.channels {
        for &v in &plane {
            let noisy = if spec.noise > 0.0 { v + noise.sample(rng) } else { v };
            let clamped = noisy.clamp(0.0, 1.0);
            out.push((clamped * 255.0).round() / 255.0);
        }
    }
    out
}

/// Random horizontal flip plus ±1-pixel shift with zero padding, applied
/// in place to a batch. Only used when the dataset spec opts in.
pub fn augment_batch(images: &mut [f64], n: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) {
    let sample_len = c * h * w;
    for i in 0..n {
        let flip = rng.random_range(0..2u8) == 1;
        let dy = rng.random_range(-1i64..=1);
        let dx = rng.random_range(-1i64..=1);
        let img = &mut images[i * sample_len..(i + 1) * sample_len];
        let orig = img.to_vec();
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let sx = if flip { w - 1 - x } else { x } as i64 + dx;
                    let sy = y as i64 + dy;
                    let v = if sx >= 0 && sx < w as i64 && sy >= 0 && sy < h as i64 {
                        orig[(ci * h + sy as usize) * w + sx as usize]
                    } else {
                        0.0
                    };
                    img[(ci * h + y) * w + x] = v;
                }
            }
        }
    }
}

/// Accuracy of the strongest classifier that only sees per-channel global
/// means: nearest class-mean in that feature space, fit on `train`,
/// scored on `test`. The generators are designed to hold this at chance.
pub fn global_mean_probe_accuracy(
    train: &Split,
    test: &Split,
    channels: usize,
    image_size: usize,
    classes: usize,
) -> f64 {
    let plane = image_size * image_size;
    let sample_len = channels * plane;
    let feat = |images: &[f64], i: usize| -> Vec<f64> {
        (0..channels)
            .map(|c| {
                let start = i * sample_len + c * plane;
                images[start..start + plane].iter().sum::<f64>() / plane as f64
            })
            .collect()
    };

    let mut means = vec![vec![0.0; channels]; classes];
    let mut counts = vec![0usize; classes];
    for i in 0..train.n {
        let f = feat(&train.images, i);
        let k = train.labels[i];
        counts[k] += 1;
        for (m, v) in means[k].iter_mut().zip(&f) {
            *m += *v;
        }
    }
    for (m, &cnt) in means.iter_mut().zip(&counts) {
        for v in m.iter_mut() {
            *v /= cnt.max(1) as f64;
        }
    }

    let mut correct = 0usize;
    for i in 0..test.n {
        let f = feat(&test.images, i);
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, m) in means.iter().enumerate() {
            let d: f64 = m.iter().zip(&f).map(|(a, b)| (a - b) * (a - b)).sum();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        if best == test.labels[i] {
            correct += 1;
        }
    }
    correct as f64 / test.n as f64
}

/// Writes single-channel images to an IDX byte file (`magic 0x00000803`,
/// dims N×H×W, one unsigned byte per pixel).
pub fn save_idx_images(path: &Path, images: &[f64], n: usize, h: usize, w: usize) -> Result<()> {
    if images.len() != n * h * w {
        return Err(Error::Dimension(format!(
            "save_idx_images got {} values for {}×{}×{}",
            images.len(),
            n,
            h,
            w
        )));
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_u32::<BigEndian>(IDX_IMAGES_MAGIC)?;
    file.write_u32::<BigEndian>(n as u32)?;
    file.write_u32::<BigEndian>(h as u32)?;
    file.write_u32::<BigEndian>(w as u32)?;
    for &v in images {
        file.write_u8((v.clamp(0.0, 1.0) * 255.0).round() as u8)?;
    }
    Ok(())
}

pub fn save_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_u32::<BigEndian>(IDX_LABELS_MAGIC)?;
    file.write_u32::<BigEndian>(labels.len() as u32)?;
    for &l in labels {
        if l > u8::MAX as usize {
            return Err(Error::Format(format!("label {l} does not fit in one byte")));
        }
        file.write_u8(l as u8)?;
    }
    Ok(())
}

/// Reads an IDX image file into `(images in [0,1], n, h, w)`; images come
/// back as a single-channel `(N, 1, H, W)` block.
pub fn load_idx_images(path: &Path) -> Result<(Vec<f64>, usize, usize, usize)> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let magic = file.read_u32::<BigEndian>()?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "IDX image magic mismatch: expected {IDX_IMAGES_MAGIC:#010x}, found {magic:#010x}"
        )));
    }
    let n = file.read_u32::<BigEndian>()? as usize;
    let h = file.read_u32::<BigEndian>()? as usize;
    let w = file.read_u32::<BigEndian>()? as usize;
    let expected = n * h * w;
    let mut bytes = Vec::with_capacity(expected);
    file.read_to_end(&mut bytes)?;
    if bytes.len() != expected {
        return Err(Error::Format(format!(
            "IDX image payload truncated: expected {expected} bytes, found {}",
            bytes.len()
        )));
    }
    Ok((bytes.iter().map(|b| *b as f64 / 255.0).collect(), n, h, w))
}

pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
    let magic = file.read_u32::<BigEndian>()?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "IDX label magic mismatch: expected {IDX_LABELS_MAGIC:#010x}, found {magic:#010x}"
        )));
    }
    let n = file.read_u32::<BigEndian>()? as usize;
    let mut bytes = Vec::with_capacity(n);
    file.read_to_end(&mut bytes)?;
    if bytes.len() != n {
        return Err(Error::Format(format!(
            "IDX label payload truncated: expected {n} bytes, found {}",
            bytes.len()
        )));
    }
    Ok(bytes.iter().map(|b| *b as usize).collect())
}

/// The micro-space default: 8×8 single-channel oriented bars, four
/// orientations, modest noise.
pub fn bars_preset(seed: u64) -> DatasetSpec {
    DatasetSpec {
        kind: GeneratorKind::OrientedBars,
        classes: 4,
        image_size: 8,
        channels: 1,
        train_samples: 256,
        val_samples: 128,
        test_samples: 128,
        noise: 0.05,
        seed,
        augment: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec_300() -> DatasetSpec {
        DatasetSpec {
            kind: GeneratorKind::OrientedBars,
            classes: 4,
            image_size: 8,
            channels: 1,
            train_samples: 300,
            val_samples: 100,
            test_samples: 100,
            noise: 0.1,
            seed: 7,
            augment: false,
        }
    }

    #[test]
    fn split_sizes_and_balance_are_exact() {
        let d = synth_generate(&spec_300()).unwrap();
        assert_eq!(d.train.n, 300);
        assert_eq!(d.val.n, 100);
        assert_eq!(d.test.n, 100);
        for split in [&d.train, &d.val, &d.test] {
            let mut counts = vec![0usize; 4];
            for &l in &split.labels {
                counts[l] += 1;
            }
            assert!(counts.iter().all(|&c| c == split.n / 4), "counts {counts:?}");
        }
    }

    #[test]
    fn same_spec_is_bitwise_identical() {
        let a = synth_generate(&spec_300()).unwrap();
        let b = synth_generate(&spec_300()).unwrap();
        assert_eq!(a, b);
        let mut other = spec_300();
        other.seed = 8;
        let c = synth_generate(&other).unwrap();
        assert_ne!(a.train.images, c.train.images);
    }

    #[test]
    fn clean_patterns_have_exactly_half_pixels_on() {
        for kind in [GeneratorKind::OrientedBars, GeneratorKind::CheckerFrequency] {
            let mut spec = spec_300();
            spec.kind = kind;
            spec.noise = 0.0;
            spec.classes = if kind == GeneratorKind::CheckerFrequency { 3 } else { 4 };
            spec.train_samples = 120;
            spec.val_samples = 60;
            spec.test_samples = 60;
            let d = synth_generate(&spec).unwrap();
            let plane = 64;
            for i in 0..d.train.n {
                let s: f64 = d.train.images[i * plane..(i + 1) * plane].iter().sum();
                assert_eq!(s, 32.0, "sample {i} of {kind:?} must have mean exactly 1/2");
            }
        }
    }

    #[test]
    fn global_mean_probe_sits_at_chance() {
        let d = synth_generate(&spec_300()).unwrap();
        let acc = global_mean_probe_accuracy(&d.train, &d.test, 1, 8, 4);
        assert!(acc <= 0.25 + 0.05, "probe accuracy {acc} should be near chance 0.25");
    }

    #[test]
    fn handcrafted_idx_file_parses_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("four.idx");
        // 4 images of 2×2, pixels 0..16 scaled ×16 to span the byte range.
        let mut bytes: Vec<u8> = vec![0, 0, 8, 3, 0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend((0..16u8).map(|v| v * 16));
        std::fs::write(&path, &bytes).unwrap();

        let (images, n, h, w) = load_idx_images(&path).unwrap();
        assert_eq!((n, h, w), (4, 2, 2));
        assert_eq!(images.len(), 16);
        for (i, v) in images.iter().enumerate() {
            assert_eq!(*v, (i as f64 * 16.0) / 255.0);
        }
    }

    #[test]
    fn wrong_magic_is_rejected_with_observed_value() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.idx");
        std::fs::write(&path, [0, 0, 9, 9, 0, 0, 0, 1]).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        match err {
            Error::Format(msg) => assert!(msg.contains("0x00000909"), "message: {msg}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_reports_byte_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.idx");
        let mut bytes: Vec<u8> = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        bytes.extend([1u8, 2, 3]); // 8 expected, 3 present
        std::fs::write(&path, &bytes).unwrap();
        let err = load_idx_images(&path).unwrap_err();
        match err {
            Error::Format(msg) => {
                assert!(msg.contains("expected 8") && msg.contains("found 3"), "message: {msg}")
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn generated_split_round_trips_through_idx() {
        let d = synth_generate(&spec_300()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let images = dir.path().join("val-images.idx");
        let labels = dir.path().join("val-labels.idx");
        save_idx_images(&images, &d.val.images, d.val.n, 8, 8).unwrap();
        save_idx_labels(&labels, &d.val.labels).unwrap();

        let (back, n, h, w) = load_idx_images(&images).unwrap();
        assert_eq!((n, h, w), (100, 8, 8));
        assert_eq!(back, d.val.images, "quantized generation must survive the byte format");
        assert_eq!(load_idx_labels(&labels).unwrap(), d.val.labels);
    }

    #[test]
    fn validation_rejects_unbalanced_and_oversized_specs() {
        let mut s = spec_300();
        s.val_samples = 99; // not divisible by 4
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = spec_300();
        s.classes = 5;
        assert!(matches!(s.validate(), Err(Error::Config(_))));
        let mut s = spec_300();
        s.kind = GeneratorKind::CheckerFrequency;
        s.classes = 4; // needs image_size % 16 == 0
        assert!(matches!(s.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn augmentation_keeps_values_in_range_and_is_seeded() {
        let d = synth_generate(&spec_300()).unwrap();
        let sample_len = 64;
        let mut a = d.train.images[..10 * sample_len].to_vec();
        let mut b = a.clone();
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        augment_batch(&mut a, 10, 1, 8, 8, &mut r1);
        augment_batch(&mut b, 10, 1, 8, 8, &mut r2);
        assert_eq!(a, b);
        assert!(a.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
