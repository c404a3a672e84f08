//! Randomized properties over the pure algorithmic kernels.

use proptest::prelude::*;

use uds_cascade::augment::TrigramLm;
use uds_cascade::eval::attributes::{binary_f1, pearson, sweep_threshold};
use uds_cascade::syntax::{decode_tree, DecodeMode};
use uds_cascade::tensor::Tensor;
use uds_cascade::training::composite;

fn is_tree(heads0: &[usize]) -> bool {
    let n = heads0.len();
    let roots: Vec<usize> = (0..n).filter(|&i| heads0[i] == i).collect();
    if roots.len() != 1 {
        return false;
    }
    for start in 0..n {
        let mut cur = start;
        for _ in 0..=n {
            if cur == roots[0] {
                break;
            }
            cur = heads0[cur];
        }
        if cur != roots[0] {
            return false;
        }
    }
    true
}

proptest! {
    /// Chu-Liu/Edmonds always yields a valid tree and, on sizes small
    /// enough to enumerate, the maximum-scoring one.
    #[test]
    fn mst_is_valid_and_optimal(scores in prop::collection::vec(-10.0f64..10.0, 1..=25)) {
        let k = (scores.len() as f64).sqrt() as usize;
        prop_assume!(k >= 1);
        let arc = &scores[..k * k];
        let tree = decode_tree(arc, k, DecodeMode::Mst, |_, _| 0);
        prop_assert!(tree.valid, "mst produced a non-tree: {:?}", tree.issues);
        let decoded: f64 = (0..k).map(|i| arc[i * k + (tree.heads[i] - 1)]).sum();
        let mut best = f64::NEG_INFINITY;
        let mut assign = vec![0usize; k];
        loop {
            if is_tree(&assign) {
                let s: f64 = (0..k).map(|i| arc[i * k + assign[i]]).sum();
                best = best.max(s);
            }
            let mut pos = 0;
            loop {
                if pos == k {
                    break;
                }
                assign[pos] += 1;
                if assign[pos] < k {
                    break;
                }
                assign[pos] = 0;
                pos += 1;
            }
            if pos == k {
                break;
            }
        }
        prop_assert!((decoded - best).abs() < 1e-9, "mst {decoded} vs exhaustive {best}");
    }

    /// Greedy decoding never panics and flags exactly the non-trees.
    #[test]
    fn greedy_flags_non_trees(scores in prop::collection::vec(-10.0f64..10.0, 1..=64)) {
        let k = (scores.len() as f64).sqrt() as usize;
        prop_assume!(k >= 1);
        let arc = &scores[..k * k];
        let tree = decode_tree(arc, k, DecodeMode::Greedy, |_, _| 0);
        let heads0: Vec<usize> = tree.heads.iter().map(|&h| h - 1).collect();
        prop_assert_eq!(tree.valid, is_tree(&heads0));
    }

    /// Eq. 6 composite stays between its two inputs and is symmetric.
    #[test]
    fn composite_bounds_and_symmetry(a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let c = composite(&Tensor::scalar(a), &Tensor::scalar(b)).unwrap().value();
        let d = composite(&Tensor::scalar(b), &Tensor::scalar(a)).unwrap().value();
        prop_assert!((c - d).abs() < 1e-12);
        prop_assert!(c >= a.min(b) - 1e-12 && c <= a.max(b) + 1e-12);
    }

    /// The swept threshold is at least as good on the sweep data as any
    /// fixed cutoff, and F1 stays in [0, 1].
    #[test]
    fn swept_threshold_dominates(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..40),
        theta in -3.0f64..3.0,
    ) {
        let best = binary_f1(&pairs, sweep_threshold(&pairs));
        let fixed = binary_f1(&pairs, theta);
        prop_assert!(best + 1e-12 >= fixed);
        prop_assert!((0.0..=1.0).contains(&best));
    }

    /// Pearson is bounded and scale invariant.
    #[test]
    fn pearson_bounded_and_scale_invariant(
        pairs in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 3..30),
        scale in 0.1f64..10.0,
    ) {
        if let Some(r) = pearson(&pairs) {
            prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&r));
            let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(p, g)| (p * scale, g)).collect();
            if let Some(r2) = pearson(&scaled) {
                prop_assert!((r - r2).abs() < 1e-6);
            }
        }
    }

    /// Concatenating a sentence with itself leaves per-token trigram
    /// cross entropy unchanged, for any model and any sentence.
    #[test]
    fn trigram_ce_duplication_invariant(
        corpus in prop::collection::vec(
            prop::collection::vec(0u8..5, 1..8), 1..8),
        probe in prop::collection::vec(0u8..7, 1..10),
    ) {
        let words: Vec<Vec<String>> = corpus
            .iter()
            .map(|s| s.iter().map(|w| format!("w{w}")).collect())
            .collect();
        let lm = TrigramLm::train(&words);
        let probe: Vec<String> = probe.iter().map(|w| format!("w{w}")).collect();
        let mut doubled = probe.clone();
        doubled.extend(probe.clone());
        let a = lm.cross_entropy(&probe).unwrap();
        let b = lm.cross_entropy(&doubled).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
    }
}
