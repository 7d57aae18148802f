mod common;

use std::collections::BTreeSet;

use interlace_core::lattice::Point;
use interlace_core::rng::StreamId;
use interlace_core::sampler::LabeledTrajectory;
use interlace_core::schemes::{
    condition_iii_check, count_schemes, enumerate_schemes, reduce_tree, scheme_from_witness, tree_sum, validate_scheme, LengthedTree, RewriteKind,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
#[test]
fn catalogs_match_exhaustive_search() {
    for (k, n) in [(2, 1), (2, 2), (3, 1), (2, 3), (3, 2)] {
        let (oriented, canonical) = common::brute_force_schemes(k, n);
        let cat = enumerate_schemes(k, n).unwrap();
        assert_eq!(cat.counts.oriented, oriented, "(k, n) = ({k}, {n})");
        assert_eq!(cat.counts.labeled as usize, canonical.len());
        let got: BTreeSet<Vec<(usize, usize, usize)>> = cat
            .schemes
            .iter()
            .map(|s| {
                let mut e: Vec<(usize, usize, usize)> = s.edges.iter().map(|e| (e.from, e.to, e.ty)).collect();
                e.sort_unstable();
                e
            })
            .collect();
        assert_eq!(got, canonical);
        assert_eq!(count_schemes(k, n).unwrap(), cat.counts);
    }
}

#[test]
fn witness_schemes_validate() {
    for (trajs, pts) in common::strict_fixtures(100, 3) {
        let refs: Vec<&LabeledTrajectory> = trajs.iter().collect();
        let marked = interlace_core::connectivity::MarkedPoints::new(pts).unwrap();
        let (s, anchors) = scheme_from_witness(&refs, &marked).unwrap();
        assert!(validate_scheme(&s).passed(), "{s:?}");
        assert!(condition_iii_check(&s, &anchors, &refs));
        assert_eq!(s.n, trajs.len());
    }
}

fn leaves(k: usize, d: usize, sep: i32) -> Vec<Point> {
    (0..k)
        .map(|i| {
            let mut c = vec![0; d];
            c[0] = i as i32 * sep;
            c[1] = (i % 2) as i32;
            Point::new(&c).unwrap()
        })
        .collect()
}

#[test]
fn tree_sum_ignores_internal_labels() {
    let trees = [
        (LengthedTree::new(3, 2, 3, vec![(0, 3, 0.5), (1, 3, 1.0), (3, 4, 0.5), (4, 2, 1.5)]).unwrap(), vec![1, 0]),
        (LengthedTree::new(4, 3, 3, vec![(0, 4, 0.5), (1, 4, 1.0), (4, 5, 0.5), (5, 2, 1.5), (5, 6, 0.2), (6, 3, 0.7)]).unwrap(), vec![2, 0, 1]),
    ];
    for (t, perm) in trees {
        let ls = leaves(t.k(), 3, 2);
        let base = tree_sum(&t, &ls, 16).unwrap().value;
        let v = tree_sum(&t.relabel_internal(&perm).unwrap(), &ls, 16).unwrap().value;
        assert!((v - base).abs() <= 1e-9 * base, "{v} vs {base}");
    }
}

#[test]
fn doubling_the_truncation_stays_within_the_tail_estimate() {
    // Two-leaf trees in d = 5 use the exact profile method; the others run the
    // box convolution in d = 3 to keep the box small.
    let fixtures = [
        LengthedTree::new(2, 0, 5, vec![(0, 1, 2.0)]).unwrap(),
        LengthedTree::new(2, 1, 5, vec![(0, 2, 2.0), (1, 2, 2.0)]).unwrap(),
        LengthedTree::new(2, 1, 5, vec![(0, 2, 0.5), (1, 2, 3.0)]).unwrap(),
        LengthedTree::new(2, 1, 3, vec![(0, 2, 0.5), (1, 2, 1.0)]).unwrap(),
        LengthedTree::new(3, 1, 3, vec![(0, 3, 0.5), (1, 3, 0.5), (2, 3, 0.5)]).unwrap(),
        LengthedTree::new(3, 2, 3, vec![(0, 3, 0.5), (1, 3, 0.5), (3, 4, 0.5), (4, 2, 0.5)]).unwrap(),
    ];
    for t in fixtures {
        let ls = leaves(t.k(), t.d(), 3);
        let a = tree_sum(&t, &ls, 16).unwrap();
        let b = tree_sum(&t, &ls, 32).unwrap();
        assert!(!a.diverging);
        assert!(b.value - a.value <= a.tail_estimate, "{t:?}: {} -> {} with tail {}", a.value, b.value, a.tail_estimate);
    }
}

#[test]
fn divergence_is_detected() {
    // Two internal vertices joined by long edges: the pair (5, leaves 2, 3)
    // violates the subtree condition in d = 3.
    let t = LengthedTree::new(4, 2, 3, vec![(0, 4, 0.5), (1, 4, 0.5), (4, 5, 2.5), (5, 2, 2.5), (5, 3, 2.5)]).unwrap();
    assert!(!interlace_core::schemes::check_subtree_condition(&t).unwrap().passed());
    let ls = [Point::new(&[0, 0, 0]).unwrap(), Point::new(&[2, 0, 0]).unwrap(), Point::new(&[0, 3, 0]).unwrap(), Point::new(&[2, 3, 1]).unwrap()];
    let r = tree_sum(&t, &ls, 64).unwrap();
    assert!(r.diverging);
    let v: Vec<f64> = r.profile.iter().map(|p| p.1).collect();
    assert!(v[1] >= 1.5 * v[0] && v[2] >= 1.5 * v[1], "{:?}", r.profile);
}

fn random_tree(seed: u64) -> Option<LengthedTree> {
    let mut rng = StreamId::new(seed, 0).rng();
    let d = 5;
    let k = rng.random_range(2..=5);
    let internal = rng.random_range(1..=3);
    let mut edges = Vec::new();
    for j in 1..internal {
        edges.push((k + rng.random_range(0..j), k + j, 0.0));
    }
    let mut slots: Vec<usize> = (0..k).collect();
    slots.shuffle(&mut rng);
    for (i, &leaf) in slots.iter().enumerate() {
        // Each internal vertex gets a leaf first, then the rest land anywhere.
        let v = if i < internal { k + i } else { k + rng.random_range(0..internal) };
        edges.push((leaf, v, 0.0));
    }
    for e in &mut edges {
        e.2 = (rng.random_range(0..40) as f64) / 10.0;
    }
    LengthedTree::new(k, internal, d, edges).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn reduction_bookkeeping(seed in any::<u64>()) {
        let Some(t) = random_tree(seed) else { return Ok(()) };
        let delta = 0.05;
        let Ok(steps) = reduce_tree(&t, delta) else { return Ok(()) };
        let (mut total, mut k) = (t.total_length(), t.k());
        for s in &steps {
            match s.kind {
                RewriteKind::Contract { .. } => {
                    prop_assert!((s.total_length - (total + delta)).abs() < 1e-9);
                    prop_assert_eq!(s.tree.k(), k);
                }
                RewriteKind::LeafSplit { .. } => {
                    prop_assert!((s.total_length - (total - 5.0)).abs() < 1e-9);
                    prop_assert_eq!(s.tree.k(), k - 1);
                }
            }
            total = s.total_length;
            k = s.tree.k();
            prop_assert_eq!(s.leaves.len(), k);
            prop_assert!((s.exponent - (5.0 * (k - 1) as f64 - total)).abs() < 1e-9);
        }
    }
}

#[test]
fn random_trees_exercise_both_rewrites() {
    let (mut contracts, mut splits) = (0, 0);
    for seed in 0..300 {
        let Some(t) = random_tree(seed) else { continue };
        if let Ok(steps) = reduce_tree(&t, 0.05) {
            contracts += steps.iter().filter(|s| matches!(s.kind, RewriteKind::Contract { .. })).count();
            splits += steps.iter().filter(|s| matches!(s.kind, RewriteKind::LeafSplit { .. })).count();
        }
    }
    assert!(contracts >= 20 && splits >= 20, "{contracts} contractions, {splits} splits");
}
