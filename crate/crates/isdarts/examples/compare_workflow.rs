//! The full comparison workflow in one sitting: run an IS-DARTS search and
//! a DARTS baseline under the same config, build the exhaustive oracle
//! table for the space, look the shrink result up by hand, then score both
//! run directories against the oracle in one report.
//!
//! ```text
//! cargo run --release --example compare_workflow
//! ```

use isdarts::cli::{cmd_compare, cmd_eval, cmd_oracle, cmd_search};

/// One config body per method; everything except `method` is shared so the
/// two runs and the oracle all see the same space, data, and timetable.
fn config_json(method: &str) -> String {
    format!(
        r#"{{
            "method": "{method}",
            "space": "micro",
            "schedule": {{ "r": 0.5, "warmup_epochs": 6, "interval_epochs": 2 }},
            "dataset": {{
                "kind": "oriented_bars", "classes": 4, "image_size": 8,
                "channels": 1, "train_samples": 256, "val_samples": 128,
                "test_samples": 128, "noise": 0.05, "seed": 1
            }},
            "iim_samples": 64,
            "seed": 0
        }}"#
    )
}

fn main() {
    let work = std::env::temp_dir().join(format!("isdarts_compare_{}", std::process::id()));
    let runs = work.join("runs");
    std::fs::create_dir_all(&runs).expect("workdir");

    for method in ["is-darts", "darts"] {
        let config = work.join(format!("{method}.json"));
        std::fs::write(&config, config_json(method)).expect("config");
        println!("== search ({method})");
        cmd_search(&config, None, Some(&runs.join(method))).expect("search");
        println!();
    }

    // The oracle only reads the space, dataset, and training sections, so
    // either config describes it; 27 subnets train in a few seconds.
    println!("== oracle");
    let oracle = work.join("oracle.json");
    cmd_oracle(&work.join("is-darts.json"), &oracle).expect("oracle");
    println!();

    println!("== eval (shrink result by itself)");
    cmd_eval(&runs.join("is-darts").join("final_mask.json"), &oracle).expect("eval");
    println!();

    // Pointing compare at the parent directory scores both runs at once.
    // The darts report additionally carries the α ranking diagnostics.
    println!("== compare (both runs)");
    cmd_compare(&runs, &oracle).expect("compare");

    let _ = std::fs::remove_dir_all(&work);
}
