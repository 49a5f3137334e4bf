//! How many validation samples does a stable importance ranking need?
//! Measures every candidate with n and with 4n samples and reports the
//! rank correlation between the two, sweeping n upward.
//!
//! ```text
//! cargo run --example iim_stability
//! ```

use isdarts::data::{bars_preset, synth_generate};
use isdarts::iim::accumulate_iim;
use isdarts::optim::TrainHyper;
use isdarts::oracle::kendall_tau_b;
use isdarts::space::{Mask, SearchSpace};
use isdarts::supernet::Supernet;
use isdarts::train::{run_epoch, BatchGeom};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let space = SearchSpace::micro();
    let data = synth_generate(&bars_preset(1)).expect("dataset");
    let hyper = TrainHyper::default();
    let geom = BatchGeom::square(data.channels(), data.image_size());

    // A few epochs with every candidate active, so each one has a
    // meaningful output distribution to measure.
    let mut net = Supernet::<f32>::build(&space, 0).expect("build");
    let mask = Mask::all_ones(net.subsets());
    let pool = data.train.concat(&data.val);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..6 {
        run_epoch(&mut net, &mask, &pool, geom, &hyper, 0.02, &mut rng, false).expect("epoch");
    }

    let mut order: Vec<usize> = (0..data.val.n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(7));

    println!("{:>4} {:>5} {:>8}", "n", "4n", "tau");
    for n in [4usize, 8, 16, 32] {
        let small = accumulate_iim(&mut net, &mask, &data.val, &order[..n], geom, 1).unwrap();
        let large = accumulate_iim(&mut net, &mask, &data.val, &order[..4 * n], geom, 1).unwrap();
        let xs: Vec<f64> = small.values.iter().map(|v| v.unwrap()).collect();
        let ys: Vec<f64> = large.values.iter().map(|v| v.unwrap()).collect();
        println!("{n:>4} {:>5} {:>8.3}", 4 * n, kendall_tau_b(&xs, &ys).unwrap());
    }
    println!("rankings are stable once tau stays above 0.9");
}
