//! Randomized invariants over the core data structures: comparison
//! subsets, masks, the shrink schedule, the importance measure, and the
//! small numeric helpers. Each property states something that must hold
//! for *every* input, not just the worked examples in the unit tests.

use isdarts::iim::iim_of_feature_map;
use isdarts::optim::{cosine_lr, TrainHyper};
use isdarts::oracle::kendall_tau_b;
use isdarts::shrink::{reserved_count, schedule_counts, shrink_step};
use isdarts::space::{Mask, SearchSpace};
use isdarts::supernet::{EdgeMode, Supernet};
use isdarts::tensor::Tape;

use proptest::prelude::*;

fn preset(ix: usize) -> SearchSpace {
    match ix {
        0 => SearchSpace::micro(),
        1 => SearchSpace::bench(),
        _ => SearchSpace::wide(),
    }
}

/// A fully shrunk mask for `space`, as an id string, from per-subset
/// choice seeds.
fn shrunk_mask(space: &SearchSpace, choices: &[usize]) -> Mask {
    let subsets = space.subsets();
    let id: Vec<String> = subsets
        .groups
        .iter()
        .enumerate()
        .map(|(h, g)| {
            let mut keep: Vec<usize> =
                (0..g.members.len()).map(|i| (i + choices[h % choices.len()]) % g.members.len()).collect();
            keep.truncate(subsets.c);
            (0..g.members.len())
                .map(|i| if keep.contains(&i) { '1' } else { '0' })
                .collect()
        })
        .collect();
    Mask::from_id_string(&id.join("|")).expect("constructed id is valid")
}

proptest! {
    /// Comparison subsets partition the global candidate index space:
    /// every candidate appears in exactly one subset.
    #[test]
    fn subsets_partition_candidates(ix in 0usize..3) {
        let space = preset(ix);
        let subsets = space.subsets();
        let mut seen = vec![0usize; space.num_candidates()];
        for g in &subsets.groups {
            for &m in &g.members {
                seen[m] += 1;
            }
        }
        prop_assert!(seen.iter().all(|&c| c == 1));
    }

    /// Mask ids survive a round trip through their textual form.
    #[test]
    fn mask_id_string_round_trips(ix in 0usize..2, choices in prop::collection::vec(0usize..64, 6)) {
        let space = preset(ix);
        let mask = shrunk_mask(&space, &choices);
        let back = Mask::from_id_string(&mask.id_string()).unwrap();
        prop_assert_eq!(back, mask);
    }

    /// Subnet counting multiplies per-subset binomials, and enumeration
    /// agrees with the count.
    #[test]
    fn enumeration_matches_binomial_product(ix in 0usize..2) {
        let space = preset(ix);
        let subsets = space.subsets();
        let mut expect: u128 = 1;
        for g in &subsets.groups {
            let n = g.members.len() as u128;
            // C is 1 for the per-edge presets, so the binomial is just n;
            // keep the general product anyway.
            let mut binom = 1u128;
            for k in 0..subsets.c as u128 {
                binom = binom * (n - k) / (k + 1);
            }
            expect *= binom;
        }
        prop_assert_eq!(space.count_subnets().unwrap(), expect);
        let all = space.enumerate_subnets(expect).unwrap();
        prop_assert_eq!(all.len() as u128, expect);
    }

    /// A shrink trajectory driven by arbitrary positive measurements never
    /// reactivates a discarded candidate and lands every subset on its
    /// reserved count.
    #[test]
    fn shrink_never_reactivates(
        values in prop::collection::vec(0.0f64..100.0, 9),
        r_ix in 0usize..3,
    ) {
        let r = [0.25, 0.5, 1.0][r_ix];
        let space = SearchSpace::micro();
        let subsets = space.subsets();
        let total = (1.0f64 / r).round() as usize;
        let mut mask = Mask::all_ones(&subsets);
        for z in 1..=total {
            let report = isdarts::iim::IimReport {
                step: z,
                values: values.iter().map(|v| Some(*v)).collect(),
                n_samples: 1,
            };
            let next = shrink_step(&mask, &report, &subsets, z, subsets.c, r).unwrap();
            prop_assert!(next.is_subset_of(&mask));
            for (h, g) in subsets.groups.iter().enumerate() {
                prop_assert_eq!(
                    next.active_in_subset(h),
                    reserved_count(z, g.members.len(), subsets.c, r)
                );
            }
            mask = next;
        }
        prop_assert!(mask.groups.iter().all(|g| g.iter().filter(|b| **b).count() == subsets.c));
    }

    /// The reserved-count schedule starts full, ends at C, and never grows.
    #[test]
    fn reserved_counts_hit_endpoints(size in 2usize..40, c in 1usize..3, denom in 1usize..9) {
        prop_assume!(c < size);
        let r = 1.0 / denom as f64;
        let counts = schedule_counts(size, c, r);
        prop_assert_eq!(counts[0], size);
        prop_assert_eq!(*counts.last().unwrap(), c);
        prop_assert!(counts.windows(2).all(|p| p[1] <= p[0]));
        prop_assert!(counts.iter().all(|&v| (c..=size).contains(&v)));
    }

    /// The importance measure is non-negative and scales with the square
    /// of a global gain on the map.
    #[test]
    fn iim_nonnegative_and_quadratic(
        fm in prop::collection::vec(-3.0f64..3.0, 2 * 4 * 4),
        gain in -3.0f64..3.0,
    ) {
        let base = iim_of_feature_map(&fm, 2, 4, 4).unwrap();
        prop_assert!(base >= 0.0);
        let scaled_map: Vec<f64> = fm.iter().map(|v| gain * v).collect();
        let scaled = iim_of_feature_map(&scaled_map, 2, 4, 4).unwrap();
        let expect = gain * gain * base;
        prop_assert!((scaled - expect).abs() <= 1e-9 * expect.max(1.0));
    }

    /// Reordering channels or pixels leaves the measure unchanged (it
    /// sums symmetric per-pixel statistics).
    #[test]
    fn iim_permutation_invariant(
        fm in prop::collection::vec(-2.0f64..2.0, 3 * 3 * 3),
        chan_swap in 0usize..3,
        pix_a in 0usize..9,
        pix_b in 0usize..9,
    ) {
        let (c, h, w) = (3usize, 3usize, 3usize);
        let plane = h * w;
        let base = iim_of_feature_map(&fm, c, h, w).unwrap();

        let mut chan_perm = fm.clone();
        chan_perm[..plane].copy_from_slice(&fm[chan_swap * plane..(chan_swap + 1) * plane]);
        chan_perm[chan_swap * plane..(chan_swap + 1) * plane].copy_from_slice(&fm[..plane]);
        let swapped_c = iim_of_feature_map(&chan_perm, c, h, w).unwrap();
        prop_assert!((swapped_c - base).abs() <= 1e-12 * base.max(1.0));

        let mut pix_perm = fm.clone();
        for ch in 0..c {
            pix_perm.swap(ch * plane + pix_a, ch * plane + pix_b);
        }
        let swapped_p = iim_of_feature_map(&pix_perm, c, h, w).unwrap();
        prop_assert!((swapped_p - base).abs() <= 1e-12 * base.max(1.0));
    }

    /// Cosine annealing is non-increasing and meets both endpoints.
    #[test]
    fn cosine_lr_non_increasing(total in 1usize..120, lo in 0.0005f64..0.01, span in 0.0f64..0.1) {
        let hyper = TrainHyper { lr_min: lo, lr_max: lo + span, ..TrainHyper::default() };
        let seq: Vec<f64> = (0..=total).map(|e| cosine_lr(e, total, &hyper)).collect();
        prop_assert!((seq[0] - hyper.lr_max).abs() < 1e-12);
        prop_assert!((seq[total] - hyper.lr_min).abs() < 1e-12);
        prop_assert!(seq.windows(2).all(|p| p[1] <= p[0] + 1e-12));
    }

    /// Rank correlation lives in [-1, 1] and flips sign with the scores.
    #[test]
    fn kendall_tau_antisymmetric(
        xs in prop::collection::vec(-10.0f64..10.0, 2..20),
        shift in -5.0f64..5.0,
    ) {
        let ys: Vec<f64> = xs.iter().rev().map(|v| v + shift).collect();
        let tau = kendall_tau_b(&xs, &ys).unwrap();
        prop_assert!((-1.0..=1.0).contains(&tau));
        let neg: Vec<f64> = xs.iter().map(|v| -v).collect();
        let tau_neg = kendall_tau_b(&neg, &ys).unwrap();
        prop_assert!((tau + tau_neg).abs() <= 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Forwarding any fully shrunk mask through the shared supernet or
    /// through its materialized subnet gives the same logits.
    #[test]
    fn masked_matches_materialized(
        choices in prop::collection::vec(0usize..64, 6),
        seed in 0u64..16,
    ) {
        let space = SearchSpace::micro();
        let net = Supernet::<f32>::build(&space, seed).unwrap();
        let mask = shrunk_mask(&space, &choices);

        let mut rng_input: Vec<f32> =
            (0..2 * 8 * 8).map(|i| ((i * 2654435761usize) % 1000) as f32 / 500.0 - 1.0).collect();
        rng_input[0] = seed as f32 / 16.0;

        let mut masked = net.clone();
        let mut tape_a = Tape::<f32>::inference();
        let xa = tape_a.constant(vec![2, 1, 8, 8], rng_input.clone()).unwrap();
        let ya = masked.forward(&mut tape_a, xa, &EdgeMode::Masked(&mask), false, None).unwrap();

        let mut sub = net.materialize(&mask).unwrap();
        let mut tape_b = Tape::<f32>::inference();
        let xb = tape_b.constant(vec![2, 1, 8, 8], rng_input).unwrap();
        let yb = sub.forward_full(&mut tape_b, xb, false, None).unwrap();

        let worst = tape_a
            .value(ya)
            .iter()
            .zip(tape_b.value(yb))
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        prop_assert!(worst <= 1e-6, "max logit gap {worst}");
    }
}
