use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use interlace_core::capacity::{capacity, Backend, CapacityParams};
use interlace_core::connectivity::{min_connect, Adjacency, MarkedPoints, SearchOptions};
use interlace_core::green::{green_estimate, EstimateParams};
use interlace_core::lattice::{FiniteSet, Point};
use interlace_core::rng::StreamId;
use interlace_core::sampler::{sample_hitting_process, LabeledTrajectory, SamplerParams};
use interlace_core::schemes::{enumerate_schemes, tree_sum, LengthedTree};
use interlace_core::walk::srw_path;

fn walks(c: &mut Criterion) {
    let mut rng = StreamId::new(1, 0).rng();
    c.bench_function("srw_path d=5 10^4 steps", |b| b.iter(|| srw_path(Point::origin(5), 10_000, &mut rng)));
    let y = Point::axis(5, 0, 8);
    c.bench_function("green_estimate |x-y|=8, 10^3 walks", |b| {
        b.iter_batched(
            || StreamId::new(2, 0).rng(),
            |mut r| green_estimate(&Point::origin(5), &y, &EstimateParams::new(1000), &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn potential(c: &mut Criterion) {
    let k = FiniteSet::ball(Point::origin(5), 3);
    c.bench_function("exact capacity B(3) d=5", |b| {
        b.iter_batched(
            || StreamId::new(3, 0).rng(),
            |mut r| capacity(&k, Backend::Exact, &CapacityParams::default(), &mut r).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

fn sampling(c: &mut Criterion) {
    let k = FiniteSet::ball(Point::origin(5), 2);
    let mut g = c.benchmark_group("sampler");
    g.sample_size(20);
    g.bench_function("hitting process B(2) u=1", |b| {
        let mut i = 0;
        b.iter(|| {
            i += 1;
            sample_hitting_process(&k, 1.0, &SamplerParams::default(), StreamId::new(4, i)).unwrap()
        })
    });
    g.finish();

    let pts = vec![Point::origin(5), Point::axis(5, 0, 3)];
    let s = sample_hitting_process(&FiniteSet::new(pts.clone()).unwrap(), 4.0, &SamplerParams::default(), StreamId::new(5, 0)).unwrap();
    let refs: Vec<&LabeledTrajectory> = s.trajectories.iter().collect();
    let marked = MarkedPoints::new(pts).unwrap();
    c.bench_function("min_connect limit 3", |b| b.iter(|| min_connect(&refs, &marked, SearchOptions::new(3), Adjacency::Shared).unwrap()));
}

fn schemes(c: &mut Criterion) {
    c.bench_function("enumerate_schemes(3,3)", |b| b.iter(|| enumerate_schemes(3, 3).unwrap()));
    let t = LengthedTree::new(2, 1, 5, vec![(0, 2, 2.0), (1, 2, 2.0)]).unwrap();
    let leaves = [Point::origin(5), Point::axis(5, 0, 8)];
    let mut g = c.benchmark_group("tree_sum");
    g.sample_size(10);
    g.bench_function("vee D=8 rho=16", |b| b.iter(|| tree_sum(&t, &leaves, 16).unwrap()));
    g.finish();
}

criterion_group!(benches, walks, potential, sampling, schemes);
criterion_main!(benches);
