//! Trains one fixed subnet of the micro space on the oriented-bars task
//! and reports train/val/test accuracy — the smallest end-to-end use of
//! the tensor engine without any search on top.
//!
//! ```text
//! cargo run --example train_micro
//! ```

use isdarts::data::{bars_preset, synth_generate};
use isdarts::optim::{cosine_lr, TrainHyper};
use isdarts::space::{Mask, SearchSpace};
use isdarts::supernet::Supernet;
use isdarts::train::{evaluate, run_epoch, BatchGeom};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let space = SearchSpace::micro();
    let data = synth_generate(&bars_preset(1)).expect("dataset");
    let hyper = TrainHyper::default();
    let geom = BatchGeom::square(data.channels(), data.image_size());

    // Convolution on every edge: the strongest subnet of this space.
    let mask = Mask::from_id_string("001|001|001").expect("mask");
    let mut net = Supernet::<f32>::build(&space, 0).expect("build");

    let epochs = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for epoch in 0..epochs {
        let lr = cosine_lr(epoch, epochs, &hyper);
        let loss = run_epoch(&mut net, &mask, &data.train, geom, &hyper, lr, &mut rng, false)
            .expect("epoch");
        println!("epoch {epoch:>2}: lr {lr:.4} loss {loss:.4}");
    }

    for (name, split) in [("train", &data.train), ("val", &data.val), ("test", &data.test)] {
        let acc = evaluate(&mut net, &mask, split, geom, hyper.batch_size).expect("eval");
        println!("{name:>5} accuracy: {acc:.4}");
    }
}
