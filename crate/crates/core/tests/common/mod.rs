//! Fixtures and brute-force oracles shared by the integration tests.
#![allow(dead_code)]

use std::collections::{BTreeSet, HashSet, VecDeque};

use interlace_core::connectivity::{extract_strict, Adjacency, MarkedPoints};
use interlace_core::lattice::Point;
use interlace_core::rng::{Rng, StreamId};
use interlace_core::sampler::LabeledTrajectory;
use interlace_core::schemes::{validate_scheme, Scheme};
use interlace_core::walk::srw_path;
use rand::Rng as _;

pub fn random_point(rng: &mut Rng, d: usize, half: i32) -> Point {
    let c: Vec<i32> = (0..d).map(|_| rng.random_range(-half..=half)).collect();
    Point::new(&c).unwrap()
}

/// `n` short walks started uniformly in a small box, ids `0..n`.
pub fn random_walks(rng: &mut Rng, n: usize, d: usize, half: i32, steps: usize) -> Vec<LabeledTrajectory> {
    (0..n)
        .map(|i| {
            let start = random_point(rng, d, half);
            let pts = srw_path(start, steps, rng).to_points();
            let label = 1.0 - rng.random::<f64>();
            LabeledTrajectory::from_sequence(i as u64, label, pts, 0).unwrap()
        })
        .collect()
}

/// `k` marked points drawn from the union of the traces.
pub fn points_on(rng: &mut Rng, trajs: &[LabeledTrajectory], k: usize) -> Vec<Point> {
    (0..k)
        .map(|_| {
            let t = &trajs[rng.random_range(0..trajs.len())];
            let pts = t.trace.points();
            pts[rng.random_range(0..pts.len())]
        })
        .collect()
}

/// Connectivity by breadth-first search over trajectories, two of them linked
/// when their traces share a site (shared mode) or have sites at distance at
/// most one (adjacent mode). A trajectory is one unit even when its clipped
/// trace is split into pieces.
pub fn bfs_connects(trajs: &[&LabeledTrajectory], points: &[Point], mode: Adjacency) -> bool {
    let sets: Vec<HashSet<Point>> = trajs.iter().map(|t| t.trace.points().iter().copied().collect()).collect();
    if !points.iter().all(|p| sets.iter().any(|s| s.contains(p))) {
        return false;
    }
    let linked = |i: usize, j: usize| match mode {
        Adjacency::Shared => !sets[i].is_disjoint(&sets[j]),
        Adjacency::Adjacent => sets[i].iter().any(|p| sets[j].contains(p) || p.neighbors().any(|q| sets[j].contains(&q))),
    };
    let n = sets.len();
    let start: Vec<usize> = (0..n).filter(|&i| sets[i].contains(&points[0])).collect();
    let mut seen: HashSet<usize> = start.iter().copied().collect();
    let mut queue: VecDeque<usize> = start.into();
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen.contains(&j) && linked(i, j) {
                seen.insert(j);
                queue.push_back(j);
            }
        }
    }
    points.iter().all(|p| seen.iter().any(|&i| sets[i].contains(p)))
}

pub fn brute_min(trajs: &[&LabeledTrajectory], points: &[Point], limit: usize, mode: Adjacency) -> Option<usize> {
    let n = trajs.len();
    assert!(n <= 16);
    let mut best: Option<usize> = None;
    for mask in 1u32..(1 << n) {
        let size = mask.count_ones() as usize;
        if size > limit || best.is_some_and(|b| size >= b) {
            continue;
        }
        let sub: Vec<&LabeledTrajectory> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| trajs[i]).collect();
        if bfs_connects(&sub, points, mode) {
            best = Some(size);
        }
    }
    best
}

/// A strictly connecting family with its marked points, or `None` when the
/// random draw does not connect.
pub fn strict_fixture(seed: u64, d: usize) -> Option<(Vec<LabeledTrajectory>, Vec<Point>)> {
    let mut rng = StreamId::new(seed, 0).rng();
    let n = rng.random_range(2..=6);
    let k = rng.random_range(2..=3);
    let trajs = random_walks(&mut rng, n, d, 3, 40);
    let pts = points_on(&mut rng, &trajs, k);
    let refs: Vec<&LabeledTrajectory> = trajs.iter().collect();
    let marked = MarkedPoints::new(pts.clone()).ok()?;
    let keep = extract_strict(&refs, &marked, Adjacency::Shared)?;
    Some((keep.into_iter().map(|i| trajs[i].clone()).collect(), pts))
}

/// Strict fixtures from the first seeds that give one.
pub fn strict_fixtures(count: usize, d: usize) -> Vec<(Vec<LabeledTrajectory>, Vec<Point>)> {
    (0u64..).filter_map(|s| strict_fixture(s, d)).take(count).collect()
}

/// Oriented count and canonical edge lists of every set of m-1 typed
/// directed edges on m vertices that validates.
pub fn brute_force_schemes(k: usize, n: usize) -> (u64, BTreeSet<Vec<(usize, usize, usize)>>) {
    let m = n + k - 1;
    let all: Vec<(usize, usize, usize)> =
        (0..m).flat_map(|a| (0..m).flat_map(move |b| (0..n).map(move |t| (a, b, t)))).filter(|e| e.0 != e.1).collect();
    let mut oriented = 0;
    let mut canonical = BTreeSet::new();
    let mut idx: Vec<usize> = (0..m - 1).collect();
    loop {
        let edges: Vec<(usize, usize, usize)> = idx.iter().map(|&i| all[i]).collect();
        let s = Scheme::new(k, n, m, edges.clone());
        if validate_scheme(&s).passed() {
            oriented += 1;
            let forward = (0..n).all(|h| s.type_path(h).is_some_and(|p| p[0] < *p.last().unwrap()));
            if forward {
                canonical.insert(edges);
            }
        }
        // Next combination.
        let mut i = idx.len();
        loop {
            if i == 0 {
                return (oriented, canonical);
            }
            i -= 1;
            if idx[i] < all.len() - (idx.len() - i) {
                idx[i] += 1;
                for j in i + 1..idx.len() {
                    idx[j] = idx[j - 1] + 1;
                }
                break;
            }
        }
    }
}
