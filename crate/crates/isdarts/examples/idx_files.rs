//! The binary image-file format: generate a dataset split, save it as an
//! images/labels file pair, read both back, and show the error on a
//! corrupted magic number.
//!
//! ```text
//! cargo run --example idx_files
//! ```

use isdarts::data::{
    bars_preset, load_idx_images, load_idx_labels, save_idx_images, save_idx_labels,
    synth_generate,
};

fn main() {
    let data = synth_generate(&bars_preset(5)).expect("dataset");
    let dir = std::env::temp_dir().join(format!("isdarts_idx_{}", std::process::id()));
    std::fs::create_dir_all(&dir).expect("workdir");
    let images = dir.join("bars-images.idx");
    let labels = dir.join("bars-labels.idx");

    let side = data.image_size();
    save_idx_images(&images, &data.test.images, data.test.n, side, side).expect("save images");
    save_idx_labels(&labels, &data.test.labels).expect("save labels");
    println!(
        "wrote {} images ({side}x{side}) and labels: {} + {} bytes",
        data.test.n,
        std::fs::metadata(&images).unwrap().len(),
        std::fs::metadata(&labels).unwrap().len()
    );

    let (pixels, n, h, w) = load_idx_images(&images).expect("load images");
    let back_labels = load_idx_labels(&labels).expect("load labels");
    println!("read back {n} images of {h}x{w}; labels match: {}", back_labels == data.test.labels);
    let max_gap = pixels
        .iter()
        .zip(&data.test.images)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    // Exactly zero: the generator already snaps pixels to the 8-bit grid,
    // so the byte format loses nothing.
    println!("max pixel gap after the byte round trip: {max_gap:.5}");

    // Flip one magic byte and show the loader refusing cleanly.
    let mut bytes = std::fs::read(&images).unwrap();
    bytes[2] = 0x42;
    let broken = dir.join("broken.idx");
    std::fs::write(&broken, bytes).unwrap();
    match load_idx_images(&broken) {
        Err(e) => println!("corrupted magic rejected: {e}"),
        Ok(_) => println!("unexpected: corrupted file parsed"),
    }

    let _ = std::fs::remove_dir_all(&dir);
}
