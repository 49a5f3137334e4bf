//! Finite-difference validation of the reverse-mode engine: every
//! candidate operation kind, then a full two-cell supernet end to end.
//!
//! ```text
//! cargo run --example gradient_check
//! ```

use isdarts::gradcheck::{check_op_kind, check_supernet, ALL_OP_KINDS};
use isdarts::space::SearchSpace;

fn main() {
    println!("{:<14} {:>12} {:>12}", "kind", "f64 rel err", "f32 rel err");
    for kind in ALL_OP_KINDS {
        let r64 = check_op_kind::<f64>(kind, 0, 1e-6).expect("f64 check");
        let r32 = check_op_kind::<f32>(kind, 0, 1e-6).expect("f32 check");
        println!("{:<14} {:>12.2e} {:>12.2e}", kind.to_string(), r64.max_rel_err, r32.max_rel_err);
    }

    // End to end through stacked cells, the classifier head, and the
    // cross-entropy loss: every parameter plus the input batch.
    let mut space = SearchSpace::micro();
    space.supernet.cells_per_block = 2;
    let rep = check_supernet::<f64>(&space, 0, 3e-6).expect("supernet check");
    println!(
        "2-cell supernet: {} coordinates, worst rel err {:.2e}",
        rep.checked, rep.max_rel_err
    );
}
