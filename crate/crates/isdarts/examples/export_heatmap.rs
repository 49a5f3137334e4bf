//! Drives the command layer end to end: writes a run config, performs the
//! search with full artifacts, pivots the per-step importance files into a
//! step-by-candidate matrix, and prints the resulting CSV.
//!
//! ```text
//! cargo run --example export_heatmap
//! ```

use isdarts::cli::{cmd_export_heatmap, cmd_search};

fn main() {
    let work = std::env::temp_dir().join(format!("isdarts_heatmap_{}", std::process::id()));
    std::fs::create_dir_all(&work).expect("workdir");
    let config = work.join("run.json");
    std::fs::write(
        &config,
        r#"{
            "method": "is-darts",
            "space": "micro",
            "schedule": { "r": 0.5, "warmup_epochs": 4, "interval_epochs": 2 },
            "dataset": {
                "kind": "oriented_bars", "classes": 4, "image_size": 8,
                "channels": 1, "train_samples": 128, "val_samples": 64,
                "test_samples": 64, "noise": 0.05, "seed": 3
            },
            "iim_samples": 32,
            "seed": 0
        }"#,
    )
    .expect("config");

    let run_dir = work.join("run");
    let summary = cmd_search(&config, None, Some(&run_dir)).expect("search");
    println!("search done: final mask {}", summary.final_mask.id_string());

    let csv = work.join("heatmap.csv");
    let heatmap = cmd_export_heatmap(&run_dir, &csv).expect("export");
    println!(
        "exported {} steps x {} candidates to {}",
        heatmap.steps,
        heatmap.candidates,
        heatmap.out_file.display()
    );
    print!("{}", std::fs::read_to_string(&csv).expect("read back"));

    let _ = std::fs::remove_dir_all(&work);
}
