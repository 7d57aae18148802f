//! Interlacement trajectories hitting a finite window.
//!
//! A trajectory is stored as its first entry point into the window plus two
//! finite legs: the forward leg is a free walk, the backward leg a walk
//! conditioned not to return to the window (realized by rejection against the
//! truncation box). Reading the backward leg reversed and then the forward leg
//! gives the trajectory in time order, with the entry at index
//! `backward.steps()`.

mod cascade;
mod io;
mod view;

pub use cascade::{cascade, cascade_adaptive, first_level, CascadeMode, CascadeParams};
pub use io::{read_jsonl, write_jsonl, TrajectoryRecord};
pub use view::{count_hitting, interlacement_set, psi_set, restrict_labels, restrict_spatial, ProcessView, ViewPredicate};

use rand::Rng as _;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{equilibrium_measure, geometry, Backend, CapacityParams};
use crate::error::{Error, Result};
use crate::green::RawSet;
use crate::lattice::{check_dim, Ball, BoxRegion, FiniteSet, PathSegment, Point, Region};
use crate::rng::{Rng, StreamId};
use crate::walk::random_code;

/// Sorted set of lattice points.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Trace(Vec<Point>);

impl Trace {
    pub fn from_points(mut v: Vec<Point>) -> Trace {
        v.sort_unstable();
        v.dedup();
        Trace(v)
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.0.binary_search(p).is_ok()
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn intersects(&self, other: &Trace) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return true,
            }
        }
        false
    }
}

impl Region for Trace {
    fn contains(&self, p: &Point) -> bool {
        Trace::contains(self, p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledTrajectory {
    pub id: u64,
    pub label: f64,
    pub entry: Point,
    pub forward: PathSegment,
    pub backward: PathSegment,
    pub trace: Trace,
}

impl LabeledTrajectory {
    /// Builds a trajectory from its legs; the trace keeps the points inside
    /// `observation` (all points when `None`).
    pub fn new(id: u64, label: f64, forward: PathSegment, backward: PathSegment, observation: Option<&Ball>) -> Result<LabeledTrajectory> {
        if forward.start() != backward.start() {
            return Err(Error::InvalidArgument(format!(
                "legs start at {:?} and {:?}",
                forward.start(),
                backward.start()
            )));
        }
        let entry = forward.start();
        let pts: Vec<Point> = forward
            .points()
            .chain(backward.points().skip(1))
            .filter(|p| observation.is_none_or(|b| b.contains(p)))
            .collect();
        Ok(LabeledTrajectory { id, label, entry, forward, backward, trace: Trace::from_points(pts) })
    }

    /// A trajectory given as a time-ordered point sequence with the entry at
    /// `entry_index`; used for synthetic fixtures.
    pub fn from_sequence(id: u64, label: f64, points: Vec<Point>, entry_index: usize) -> Result<LabeledTrajectory> {
        if entry_index >= points.len() {
            return Err(Error::InvalidArgument("entry index out of range".into()));
        }
        let mut back: Vec<Point> = points[..=entry_index].to_vec();
        back.reverse();
        let forward = PathSegment::new(points[entry_index..].to_vec())?;
        let backward = PathSegment::new(back)?;
        LabeledTrajectory::new(id, label, forward, backward, None)
    }

    /// Points in time order (backward leg reversed, then forward leg).
    pub fn sequence(&self) -> Vec<Point> {
        let mut v: Vec<Point> = self.backward.points().skip(1).collect();
        v.reverse();
        v.extend(self.forward.points());
        v
    }

    pub fn entry_index(&self) -> usize {
        self.backward.steps()
    }

    /// Same trajectory with the trace cut down to `ball`.
    pub fn clipped(&self, ball: &Ball) -> LabeledTrajectory {
        let trace = Trace(self.trace.points().iter().copied().filter(|p| ball.contains(p)).collect());
        LabeledTrajectory { trace, ..self.clone() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMethod {
    /// N ~ Poisson(u cap(K)) entries drawn from the normalized equilibrium
    /// measure; backward legs conditioned by rejection.
    #[default]
    CapacityPoisson,
    /// Poisson(u) candidate trajectories at every site of K, each kept iff its
    /// backward walk leaves the box without returning to K. Same law, no
    /// capacity needed.
    SiteThinning,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub leg_length: Option<usize>,
    pub observation: Option<Ball>,
    /// l-infinity radius of the escape box around the window center.
    pub truncation: Option<u64>,
    pub method: SamplingMethod,
    pub capacity_backend: Backend,
    pub rejection_budget: u64,
    /// Trajectories meeting any of these points are discarded (thinning).
    pub avoid: Option<Vec<Point>>,
    /// Drop leg steps after the last visit to the observation ball.
    pub trim_to_observation: bool,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            leg_length: None,
            observation: None,
            truncation: None,
            method: SamplingMethod::CapacityPoisson,
            capacity_backend: Backend::Exact,
            rejection_budget: 10_000,
            avoid: None,
            trim_to_observation: false,
        }
    }
}

impl SamplerParams {
    pub fn observation(mut self, b: Ball) -> Self {
        self.observation = Some(b);
        self
    }

    pub fn leg_length(mut self, n: usize) -> Self {
        self.leg_length = Some(n);
        self
    }

    pub fn truncation(mut self, t: u64) -> Self {
        self.truncation = Some(t);
        self
    }

    pub fn method(mut self, m: SamplingMethod) -> Self {
        self.method = m;
        self
    }
}

#[derive(Clone, Debug)]
pub struct InterlacementSample {
    pub window: FiniteSet,
    pub intensity: f64,
    pub trajectories: Vec<LabeledTrajectory>,
    pub leg_length: usize,
    pub observation: Option<Ball>,
    pub truncation: u64,
    pub stream: StreamId,
    pub method: SamplingMethod,
}

impl InterlacementSample {
    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.window.dim()
    }
}

pub fn default_observation(k: &FiniteSet) -> Ball {
    let c = k.center();
    Ball::new(c, 2 * k.radius_about(&c) + 4)
}

struct Ctx<'a> {
    raw: RawSet,
    bx: BoxRegion,
    leg: usize,
    budget: u64,
    obs: Option<&'a Ball>,
    avoid: Option<rustc_hash::FxHashSet<Point>>,
    trim: bool,
}

enum Attempt {
    Escaped(Vec<u8>),
    Returned,
}

/// One backward attempt: walk until the first return to K (failure) or until
/// leaving the box (success). Keeps at most `leg` codes.
fn backward_attempt(x: &Point, ctx: &Ctx, rng: &mut Rng) -> Attempt {
    let d = x.dim();
    let mut p = *x.raw();
    let bc = *ctx.bx.center.raw();
    let rho = ctx.bx.radius as i64;
    let mut codes = Vec::new();
    loop {
        let c = random_code(rng, d);
        let a = (c / 2) as usize;
        p[a] += if c % 2 == 0 { 1 } else { -1 };
        if ctx.raw.contains(&p) {
            return Attempt::Returned;
        }
        if codes.len() < ctx.leg {
            codes.push(c);
        }
        if ((p[a] - bc[a]) as i64).abs() > rho {
            return Attempt::Escaped(codes);
        }
    }
}

/// Extends an escaped backward leg to full length with segments avoiding K.
fn complete_backward(x: &Point, mut codes: Vec<u8>, ctx: &Ctx, rng: &mut Rng) -> Result<PathSegment> {
    let d = x.dim();
    let mut end = codes.iter().fold(*x, |p, &c| p.step(c));
    let mut tries = 0u64;
    while codes.len() < ctx.leg {
        let remaining = ctx.leg - codes.len();
        let mut seg = Vec::with_capacity(remaining);
        let mut p = end;
        let mut ok = true;
        for _ in 0..remaining {
            let c = random_code(rng, d);
            p = p.step(c);
            if ctx.raw.contains(p.raw()) {
                ok = false;
                break;
            }
            seg.push(c);
        }
        if ok {
            codes.extend_from_slice(&seg);
            end = p;
        } else {
            tries += 1;
            if tries >= ctx.budget {
                return Err(Error::RejectionBudget { entry: *x, attempts: tries });
            }
        }
    }
    Ok(PathSegment::from_codes_unchecked(*x, codes))
}

fn trim_leg(leg: PathSegment, obs: &Ball) -> PathSegment {
    let last = leg.points().enumerate().filter(|(_, p)| obs.contains(p)).map(|(i, _)| i).last().unwrap_or(0);
    leg.prefix(last)
}

fn finish(id: u64, label: f64, x: &Point, backward: PathSegment, ctx: &Ctx, rng: &mut Rng) -> Result<Option<LabeledTrajectory>> {
    let d = x.dim();
    let codes: Vec<u8> = (0..ctx.leg).map(|_| random_code(rng, d)).collect();
    let mut forward = PathSegment::from_codes_unchecked(*x, codes);
    let mut backward = backward;
    if let Some(av) = &ctx.avoid {
        if forward.points().chain(backward.points()).any(|p| av.contains(&p)) {
            return Ok(None);
        }
    }
    if let (true, Some(obs)) = (ctx.trim, ctx.obs) {
        forward = trim_leg(forward, obs);
        backward = trim_leg(backward, obs);
    }
    LabeledTrajectory::new(id, label, forward, backward, ctx.obs).map(Some)
}

fn label(u: f64, rng: &mut Rng) -> f64 {
    // (0, u]
    u * (1.0 - rng.random::<f64>())
}

/// Samples the trajectories of the interlacement at level `u` that hit `k`.
pub fn sample_hitting_process(k: &FiniteSet, u: f64, params: &SamplerParams, stream: StreamId) -> Result<InterlacementSample> {
    sample_hitting_process_filtered(k, u, params, stream, |_| true)
}

/// As [`sample_hitting_process`], keeping only trajectories accepted by
/// `keep`. Rejected ones are dropped as soon as they are built, and the
/// random streams of the kept ones are unchanged.
pub fn sample_hitting_process_filtered<F>(k: &FiniteSet, u: f64, params: &SamplerParams, stream: StreamId, keep: F) -> Result<InterlacementSample>
where
    F: Fn(&LabeledTrajectory) -> bool + Sync,
{
    check_dim(k.dim())?;
    if !(u > 0.0 && u.is_finite()) {
        return Err(Error::InvalidArgument(format!("intensity must be positive, got {u}")));
    }
    if k.is_empty() {
        return Err(Error::EmptySet);
    }
    let cparams = CapacityParams { truncation: params.truncation, ..CapacityParams::default() };
    let geo = geometry(k, &cparams)?;
    let observation = params.observation.or_else(|| Some(default_observation(k)));
    let leg = params
        .leg_length
        .unwrap_or_else(|| observation.map_or(1024, |b| 4 * (b.radius as usize).pow(2)));
    let ctx = Ctx {
        raw: RawSet::new(k),
        bx: geo.bx,
        leg,
        budget: params.rejection_budget.max(1),
        obs: observation.as_ref(),
        avoid: params.avoid.as_ref().map(|v| v.iter().copied().collect()),
        trim: params.trim_to_observation,
    };
    let mut rng = stream.rng();
    let base: u64 = rng.random();

    let built: Vec<Option<LabeledTrajectory>> = match params.method {
        SamplingMethod::CapacityPoisson => {
            let e = equilibrium_measure(k, params.capacity_backend, &cparams, &mut rng)?;
            let cap = e.total();
            let n = poisson(u * cap, &mut rng);
            let mut cum = Vec::with_capacity(e.weights.len());
            let mut acc = 0.0;
            for (_, w) in &e.weights {
                acc += w;
                cum.push(acc);
            }
            let entries: Vec<Point> = (0..n)
                .map(|_| {
                    let t = rng.random::<f64>() * acc;
                    let i = cum.partition_point(|&c| c <= t).min(cum.len() - 1);
                    e.weights[i].0
                })
                .collect();
            entries
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut r = StreamId::new(base, i as u64).rng();
                    let lab = label(u, &mut r);
                    let mut tries = 0u64;
                    let codes = loop {
                        match backward_attempt(x, &ctx, &mut r) {
                            Attempt::Escaped(c) => break c,
                            Attempt::Returned => {
                                tries += 1;
                                if tries >= ctx.budget {
                                    return Err(Error::RejectionBudget { entry: *x, attempts: tries });
                                }
                            }
                        }
                    };
                    let back = complete_backward(x, codes, &ctx, &mut r)?;
                    Ok(finish(i as u64, lab, x, back, &ctx, &mut r)?.filter(|t| keep(t)))
                })
                .collect::<Result<Vec<_>>>()?
        }
        SamplingMethod::SiteThinning => {
            let mut cands = Vec::new();
            for x in k.points() {
                for _ in 0..poisson(u, &mut rng) {
                    cands.push(*x);
                }
            }
            cands
                .par_iter()
                .enumerate()
                .map(|(i, x)| {
                    let mut r = StreamId::new(base, i as u64).rng();
                    let lab = label(u, &mut r);
                    match backward_attempt(x, &ctx, &mut r) {
                        Attempt::Returned => Ok(None),
                        Attempt::Escaped(c) => {
                            let back = complete_backward(x, c, &ctx, &mut r)?;
                            Ok(finish(i as u64, lab, x, back, &ctx, &mut r)?.filter(|t| keep(t)))
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    let mut trajectories: Vec<LabeledTrajectory> = built.into_iter().flatten().collect();
    for (i, t) in trajectories.iter_mut().enumerate() {
        t.id = i as u64;
    }
    Ok(InterlacementSample {
        window: k.clone(),
        intensity: u,
        trajectories,
        leg_length: leg,
        observation,
        truncation: geo.bx.radius,
        stream,
        method: params.method,
    })
}

pub(crate) fn poisson(mean: f64, rng: &mut Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as u64
}
