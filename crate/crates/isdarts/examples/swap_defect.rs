//! Shows why architecture weights are a poor importance signal: take the
//! baseline's ranking, swap the supposedly-best discarded candidates in
//! for the supposedly-worst kept ones, and watch the oracle accuracy
//! sequence wiggle instead of falling monotonically.
//!
//! ```text
//! cargo run --release --example swap_defect
//! ```

use isdarts::darts::{run_darts, swap_experiment, SwapPlan};
use isdarts::data::{bars_preset, synth_generate};
use isdarts::optim::TrainHyper;
use isdarts::oracle::build_oracle;
use isdarts::space::SearchSpace;
use isdarts::supernet::Supernet;

fn main() {
    let space = SearchSpace::micro();
    let data = synth_generate(&bars_preset(1)).expect("dataset");
    let hyper = TrainHyper::default();
    let table = build_oracle(&space, &data, &hyper, 200, 0, 256).expect("oracle");

    for seed in 0..5u64 {
        let mut net = Supernet::<f32>::build(&space, seed).expect("build");
        let result = run_darts(&mut net, &data, 10, &hyper, 0.05, seed, None).expect("baseline");

        // Swap k = 1, 2, 3: each step replaces the lowest-weighted kept
        // candidate with the highest-weighted discarded one. If the
        // weights ranked candidates faithfully, accuracy would only fall.
        let plan = SwapPlan::from_alpha(&result.alpha, &result.selected);
        let outcome = swap_experiment(&result.selected, &plan, &table, 3).expect("swaps");
        let pretty: Vec<String> =
            outcome.accuracies.iter().map(|a| format!("{a:.4}")).collect();
        println!(
            "seed {seed}: start {} -> accuracies [{}] with {} ordering violation(s)",
            result.selected.id_string(),
            pretty.join(", "),
            outcome.violations
        );
    }
}
