//! The importance measure on hand-built feature maps: the worked
//! arithmetic example, the zero/constant edge cases, quadratic scaling,
//! and the additivity diagnostic for independent versus duplicated maps.
//!
//! ```text
//! cargo run --example iim_basics
//! ```

use isdarts::iim::{iim_of_feature_map, node_additivity_diagnostic};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    // Two channels valued 0 and 2 at every pixel of a 2x2 map: per-pixel
    // population variance is 1, so the measure is 4/3.
    let two_level = [0.0, 0.0, 0.0, 0.0, 2.0, 2.0, 2.0, 2.0];
    println!("two-level 2x2 map: {}", iim_of_feature_map(&two_level, 2, 2, 2).unwrap());

    println!("constant map:      {}", iim_of_feature_map(&[0.5f64; 2 * 4], 2, 2, 2).unwrap());

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let fm: Vec<f64> = (0..8 * 4 * 4).map(|_| rng.random_range(-1.0..1.0)).collect();
    let base = iim_of_feature_map(&fm, 8, 4, 4).unwrap();
    let doubled: Vec<f64> = fm.iter().map(|v| 2.0 * v).collect();
    println!(
        "random 8x4x4: {base:.5}; doubled map: {:.5} (exactly 4x)",
        iim_of_feature_map(&doubled, 8, 4, 4).unwrap()
    );

    // Independent wide maps add almost exactly; a map added to itself
    // quadruples instead, because the summands are perfectly correlated.
    let (c, h, w) = (256usize, 4usize, 4usize);
    let a: Vec<f64> = (0..c * h * w).map(|_| rng.sample(StandardNormal)).collect();
    let b: Vec<f64> = (0..c * h * w).map(|_| rng.sample(StandardNormal)).collect();
    let (of_sum, sum_of) = node_additivity_diagnostic(&[&a, &b], c, h, w).unwrap();
    println!("independent 256-channel maps: iim(a+b) {of_sum:.3} vs iim(a)+iim(b) {sum_of:.3}");
    let (dup_sum, dup_parts) = node_additivity_diagnostic(&[&a, &a], c, h, w).unwrap();
    println!("duplicated map:               iim(a+a) {dup_sum:.3} vs 2*iim(a) {dup_parts:.3}");
}
