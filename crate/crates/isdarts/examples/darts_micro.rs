//! The first-order baseline on the same micro space: architecture
//! parameters fitted on held-out data, mixed-edge forwards weighted by
//! their softmax, and argmax selection at the end.
//!
//! ```text
//! cargo run --example darts_micro
//! ```

use isdarts::darts::run_darts;
use isdarts::data::{bars_preset, synth_generate};
use isdarts::optim::TrainHyper;
use isdarts::space::SearchSpace;
use isdarts::supernet::Supernet;

fn main() {
    let space = SearchSpace::micro();
    let data = synth_generate(&bars_preset(1)).expect("dataset");
    let hyper = TrainHyper::default();

    let mut net = Supernet::<f32>::build(&space, 0).expect("build");
    let result = run_darts(&mut net, &data, 10, &hyper, 0.05, 0, None).expect("baseline");

    let subsets = space.subsets();
    println!("final architecture weights:");
    for (h, g) in subsets.groups.iter().enumerate() {
        let soft = result.alpha.softmax(h);
        for (pos, &global) in g.members.iter().enumerate() {
            println!(
                "   {} {:<9} alpha {:+.4} softmax {:.4}",
                g.label,
                space.candidate_kind(global).to_string(),
                result.alpha.vectors[h][pos],
                soft[pos]
            );
        }
    }
    println!(
        "selected mask {} with validation accuracy {:.4}",
        result.selected.id_string(),
        result.val_accuracy
    );
}
