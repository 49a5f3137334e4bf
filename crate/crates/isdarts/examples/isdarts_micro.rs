//! A complete IS-DARTS shrink search on the micro space: warm up the
//! shared supernet, then alternate a couple of training epochs with an
//! importance measurement and a per-subset discard until one candidate
//! per edge remains.
//!
//! ```text
//! cargo run --example isdarts_micro
//! ```

use isdarts::data::{bars_preset, synth_generate};
use isdarts::optim::TrainHyper;
use isdarts::shrink::{run_search, ShrinkSchedule};
use isdarts::space::SearchSpace;
use isdarts::supernet::Supernet;

fn main() {
    let space = SearchSpace::micro();
    let data = synth_generate(&bars_preset(1)).expect("dataset");
    let hyper = TrainHyper::default();
    let schedule = ShrinkSchedule { r: 0.5, warmup_epochs: 6, interval_epochs: 2 };

    let mut net = Supernet::<f32>::build(&space, 0).expect("build");
    let result =
        run_search(&mut net, &data, &schedule, &hyper, 64, 0, None).expect("search");

    let subsets = space.subsets();
    for report in &result.reports {
        println!("-- measurement step {} ({} validation samples)", report.step, report.n_samples);
        for g in &subsets.groups {
            for &global in &g.members {
                if let Some(v) = report.values[global] {
                    println!(
                        "   {} {:<9} {v:.4}",
                        g.label,
                        space.candidate_kind(global).to_string()
                    );
                }
            }
        }
    }

    println!("mask trajectory:");
    for (z, mask) in result.mask_history.iter().enumerate() {
        println!("   step {z}: {}", mask.id_string());
    }
    println!(
        "final mask {} after {} epochs, validation accuracy {:.4}",
        result.final_mask.id_string(),
        result.epochs_run,
        result.val_accuracy
    );
}
