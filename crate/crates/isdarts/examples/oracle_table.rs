//! Brute-force ground truth: trains all 27 subnets of the micro space,
//! prints the ranked table, and round-trips it through the JSON-lines
//! file format.
//!
//! ```text
//! cargo run --release --example oracle_table
//! ```

use isdarts::data::{bars_preset, synth_generate};
use isdarts::optim::TrainHyper;
use isdarts::oracle::{build_oracle, OracleTable};
use isdarts::space::SearchSpace;

fn main() {
    let space = SearchSpace::micro();
    let data = synth_generate(&bars_preset(1)).expect("dataset");
    let hyper = TrainHyper::default();

    let t0 = std::time::Instant::now();
    let table = build_oracle(&space, &data, &hyper, 200, 0, 256).expect("oracle");
    println!("trained {} subnets in {:.1}s", table.records.len(), t0.elapsed().as_secs_f64());

    let mut ranked: Vec<_> = table.records.iter().collect();
    ranked.sort_by(|a, b| b.val_accuracy.partial_cmp(&a.val_accuracy).unwrap());
    println!("{:<13} {:>8} {:>8}", "mask", "val", "test");
    for rec in &ranked {
        println!("{:<13} {:>8.4} {:>8.4}", rec.mask_id, rec.val_accuracy, rec.test_accuracy);
    }

    let path = std::env::temp_dir().join("isdarts_oracle_demo.jsonl");
    table.save(&path).expect("save");
    let back = OracleTable::load(&path).expect("load");
    println!(
        "saved to {} and reloaded: best {} at {:.4}",
        path.display(),
        back.best().mask_id,
        back.best().val_accuracy
    );
    let _ = std::fs::remove_file(&path);
}
