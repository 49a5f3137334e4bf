//! The binary checkpoint container: snapshot a trained supernet to disk,
//! load it into a freshly built twin, and confirm both produce identical
//! validation accuracy.
//!
//! ```text
//! cargo run --example checkpoints
//! ```

use isdarts::checkpoint::{load, load_into_supernet, save_supernet};
use isdarts::data::{bars_preset, synth_generate};
use isdarts::optim::TrainHyper;
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
    let mask = Mask::all_ones(&space.subsets());

    let mut net = Supernet::<f32>::build(&space, 0).expect("build");
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for _ in 0..4 {
        run_epoch(&mut net, &mask, &data.train, geom, &hyper, 0.02, &mut rng, false)
            .expect("epoch");
    }
    let acc = evaluate(&mut net, &mask, &data.val, geom, hyper.batch_size).expect("eval");

    let path = std::env::temp_dir().join(format!("isdarts_ckpt_{}.bin", std::process::id()));
    save_supernet(&path, &mut net).expect("save");

    // Peek at the manifest before restoring.
    let arrays = load(&path).expect("load raw");
    println!("checkpoint holds {} arrays; first entries:", arrays.len());
    for a in arrays.iter().take(4) {
        println!("   {:<28} {:?}", a.name, a.shape);
    }

    let mut twin = Supernet::<f32>::build(&space, 99).expect("twin build");
    load_into_supernet(&path, &mut twin).expect("restore");
    let twin_acc = evaluate(&mut twin, &mask, &data.val, geom, hyper.batch_size).expect("eval");
    println!("trained accuracy {acc:.4}; restored twin accuracy {twin_acc:.4}");
    assert_eq!(acc, twin_acc);

    let _ = std::fs::remove_file(&path);
}
