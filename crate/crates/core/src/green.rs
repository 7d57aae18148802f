//! Monte Carlo estimates of Green's function and hitting probabilities for
//! the walk killed on leaving a truncation box.
//!
//! The splitting estimator uses a weight window on a distance ladder: a walker
//! that halves its l1 distance to the target is split into `2^(d-2)` copies of
//! proportionally smaller weight, and one that doubles its distance survives
//! with probability `2^-(d-2)` carrying the reciprocal weight. Every root walk
//! yields an unbiased score, so standard errors come from the per-root scores.

use rand::Rng as _;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{check_dim, l1, BoxRegion, FiniteSet, Point, MAX_DIM};
use crate::rng::Rng;
use crate::walk::random_code;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum VarianceReduction {
    None,
    #[default]
    Splitting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateParams {
    pub samples: usize,
    /// l-infinity radius of the killing box; a default is derived from the geometry.
    pub truncation: Option<u64>,
    /// Box center; defaults to the starting point.
    pub center: Option<Point>,
    pub variance_reduction: VarianceReduction,
}

impl EstimateParams {
    pub fn new(samples: usize) -> EstimateParams {
        EstimateParams { samples, truncation: None, center: None, variance_reduction: VarianceReduction::Splitting }
    }

    pub fn truncation(mut self, t: u64) -> Self {
        self.truncation = Some(t);
        self
    }

    pub fn center(mut self, c: Point) -> Self {
        self.center = Some(c);
        self
    }

    pub fn crude(mut self) -> Self {
        self.variance_reduction = VarianceReduction::None;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
    pub samples: usize,
    pub truncation: u64,
    /// Order of the relative error caused by killing at the box boundary.
    pub bias_bound: f64,
}

pub fn default_truncation(scale: u64) -> u64 {
    (8 * scale).max(32)
}

/// Membership test on raw coordinates with a bounding-box prefilter.
pub(crate) struct RawSet {
    dim: usize,
    lo: [i32; MAX_DIM],
    hi: [i32; MAX_DIM],
    set: FxHashSet<Point>,
}

impl RawSet {
    pub(crate) fn new(k: &FiniteSet) -> RawSet {
        let (lo, hi) = k.bounds();
        RawSet { dim: k.dim(), lo: *lo.raw(), hi: *hi.raw(), set: k.hash_set().clone() }
    }

    #[inline]
    pub(crate) fn contains(&self, c: &[i32; MAX_DIM]) -> bool {
        for i in 0..self.dim {
            if c[i] < self.lo[i] || c[i] > self.hi[i] {
                return false;
            }
        }
        self.set.contains(&Point::from_raw(self.dim, *c))
    }
}

/// Levels of the weight window as a function of l1 distance to `center`.
pub(crate) struct Ladder {
    center: [i32; MAX_DIM],
    levels: Vec<i32>,
    split: u32,
}

impl Ladder {
    /// Level `floor(log2(reference / max(dist, floor)))`; `split == 1` disables it.
    pub(crate) fn new(center: &Point, reference: f64, floor: u64, max_dist: u64, split: u32) -> Ladder {
        let floor = floor.max(1);
        let levels = (0..=max_dist + 1)
            .map(|dist| {
                if split <= 1 {
                    0
                } else {
                    let r = reference / dist.max(floor) as f64;
                    (r.log2().floor() as i32).clamp(-40, 40)
                }
            })
            .collect();
        Ladder { center: *center.raw(), levels, split }
    }

    #[inline]
    fn level(&self, dist: u64) -> i32 {
        self.levels[(dist as usize).min(self.levels.len() - 1)]
    }
}

pub(crate) fn split_factor(d: usize, vr: VarianceReduction) -> u32 {
    match vr {
        VarianceReduction::None => 1,
        VarianceReduction::Splitting => 1 << (d - 2),
    }
}

/// What to do at a visited site: score weight times the returned factor and
/// whether to stop the particle.
pub(crate) trait Observer {
    fn visit(&mut self, c: &[i32; MAX_DIM], time_zero: bool) -> (f64, bool);
}

struct Particle {
    pos: [i32; MAX_DIM],
    dist: u64,
    level: i32,
    weight: f64,
}

/// Runs one root walk from `start` with splitting and roulette, killed on
/// leaving `bx`. Returns the total scored weight.
pub(crate) fn run_root<O: Observer>(start: &Point, bx: &BoxRegion, ladder: &Ladder, obs: &mut O, rng: &mut Rng) -> f64 {
    let d = start.dim();
    let bc = *bx.center.raw();
    let rho = bx.radius as i64;
    let s = ladder.split as f64;
    let mut total = 0.0;

    let (sc, stop) = obs.visit(start.raw(), true);
    total += sc;
    if stop {
        return total;
    }
    let dist0 = l1(start, &Point::from_raw(d, ladder.center));
    let mut stack = vec![Particle { pos: *start.raw(), dist: dist0, level: ladder.level(dist0), weight: 1.0 }];

    while let Some(mut p) = stack.pop() {
        loop {
            let code = random_code(rng, d);
            let a = (code / 2) as usize;
            let old = (p.pos[a] - ladder.center[a]).unsigned_abs() as u64;
            p.pos[a] += if code % 2 == 0 { 1 } else { -1 };
            if ((p.pos[a] - bc[a]) as i64).abs() > rho {
                break;
            }
            let new = (p.pos[a] - ladder.center[a]).unsigned_abs() as u64;
            p.dist = p.dist + new - old;

            let (sc, stop) = obs.visit(&p.pos, false);
            if sc != 0.0 {
                total += p.weight * sc;
            }
            if stop {
                break;
            }

            let lv = ladder.level(p.dist);
            if lv > p.level {
                p.weight /= s;
                p.level = lv;
                for _ in 1..ladder.split {
                    stack.push(Particle { pos: p.pos, dist: p.dist, level: lv, weight: p.weight });
                }
            } else if lv < p.level {
                if rng.random::<f64>() * s >= 1.0 {
                    break;
                }
                p.weight *= s;
                p.level = lv;
            }
        }
    }
    total
}

pub(crate) fn mean_se(scores: &[f64]) -> (f64, f64) {
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    if scores.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = scores.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn max_box_distance(bx: &BoxRegion, c: &Point) -> u64 {
    (0..c.dim())
        .map(|i| bx.radius + (bx.center.coords()[i] - c.coords()[i]).unsigned_abs() as u64)
        .sum()
}

struct SiteCounter {
    target: [i32; MAX_DIM],
    dim: usize,
}

impl Observer for SiteCounter {
    #[inline]
    fn visit(&mut self, c: &[i32; MAX_DIM], _t0: bool) -> (f64, bool) {
        if c[..self.dim] == self.target[..self.dim] {
            (1.0, false)
        } else {
            (0.0, false)
        }
    }
}

struct Hitter<'a> {
    k: &'a RawSet,
    from_time_one: bool,
}

impl Observer for Hitter<'_> {
    #[inline]
    fn visit(&mut self, c: &[i32; MAX_DIM], t0: bool) -> (f64, bool) {
        if t0 && self.from_time_one {
            return (0.0, false);
        }
        if self.k.contains(c) {
            (1.0, true)
        } else {
            (0.0, false)
        }
    }
}

/// Expected number of visits to `y` by the walk from `x` before it leaves the
/// truncation box.
pub fn green_estimate(x: &Point, y: &Point, params: &EstimateParams, rng: &mut Rng) -> Result<Estimate> {
    let dist = crate::lattice::l1_distance(x, y)?;
    let d = x.dim();
    check_dim(d)?;
    if params.samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let center = params.center.unwrap_or(*x);
    let offset = l1(x, &center).max(l1(y, &center));
    let rho = params.truncation.unwrap_or_else(|| default_truncation(dist.max(offset)));
    if rho <= dist.max(offset) {
        return Err(Error::TruncationTooSmall { truncation: rho, required: dist.max(offset) });
    }
    let bx = BoxRegion::new(center, rho);
    let ladder = Ladder::new(
        y,
        dist.max(1) as f64,
        1,
        max_box_distance(&bx, y),
        split_factor(d, params.variance_reduction),
    );
    let mut obs = SiteCounter { target: *y.raw(), dim: d };
    let scores: Vec<f64> = (0..params.samples).map(|_| run_root(x, &bx, &ladder, &mut obs, rng)).collect();
    let (value, std_error) = mean_se(&scores);
    Ok(Estimate {
        value,
        std_error,
        samples: params.samples,
        truncation: rho,
        bias_bound: (dist.max(1) as f64 / rho as f64).powi(d as i32 - 2),
    })
}

/// Probability that the walk from `x` enters `k` (at some time `n >= 0`)
/// before leaving the truncation box.
pub fn hitting_probability(x: &Point, k: &FiniteSet, params: &EstimateParams, rng: &mut Rng) -> Result<Estimate> {
    hitting_impl(x, k, params, false, rng)
}

/// As [`hitting_probability`] but only times `n >= 1` count.
pub fn return_probability(x: &Point, k: &FiniteSet, params: &EstimateParams, rng: &mut Rng) -> Result<Estimate> {
    hitting_impl(x, k, params, true, rng)
}

fn hitting_impl(x: &Point, k: &FiniteSet, params: &EstimateParams, from_one: bool, rng: &mut Rng) -> Result<Estimate> {
    if x.dim() != k.dim() {
        return Err(Error::DimensionMismatch { left: x.dim(), right: k.dim() });
    }
    let d = x.dim();
    check_dim(d)?;
    if params.samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let center = params.center.unwrap_or(*x);
    let reach = k.radius_about(&center).max(l1(x, &center));
    let rho = params.truncation.unwrap_or_else(|| default_truncation(reach + k.diameter()));
    if rho <= reach {
        return Err(Error::TruncationTooSmall { truncation: rho, required: reach });
    }
    if !from_one && k.contains(x) {
        return Ok(Estimate { value: 1.0, std_error: 0.0, samples: params.samples, truncation: rho, bias_bound: 0.0 });
    }
    let bx = BoxRegion::new(center, rho);
    let kc = k.center();
    let floor = k.radius_about(&kc).max(1);
    let reference = l1(x, &kc).max(floor) as f64;
    let ladder = Ladder::new(&kc, reference, floor, max_box_distance(&bx, &kc), split_factor(d, params.variance_reduction));
    let raw = RawSet::new(k);
    let mut obs = Hitter { k: &raw, from_time_one: from_one };
    let scores: Vec<f64> = (0..params.samples).map(|_| run_root(x, &bx, &ladder, &mut obs, rng)).collect();
    let (value, std_error) = mean_se(&scores);
    let scale = (l1(x, &kc).max(1)) as f64;
    Ok(Estimate {
        value,
        std_error,
        samples: params.samples,
        truncation: rho,
        bias_bound: (scale / rho as f64).powi(d as i32 - 2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::StreamId;

    fn p(c: &[i32]) -> Point {
        Point::new(c).unwrap()
    }

    #[test]
    fn hitting_own_set_is_one() {
        let k = FiniteSet::new([p(&[0, 0, 0])]).unwrap();
        let e = hitting_probability(&p(&[0, 0, 0]), &k, &EstimateParams::new(10), &mut StreamId::new(1, 0).rng()).unwrap();
        assert_eq!(e.value, 1.0);
    }

    #[test]
    fn green_rejects_small_truncation() {
        let r = green_estimate(&p(&[0, 0, 0]), &p(&[5, 0, 0]), &EstimateParams::new(10).truncation(5), &mut StreamId::new(1, 0).rng());
        assert!(matches!(r, Err(Error::TruncationTooSmall { .. })));
        let r = green_estimate(&p(&[0, 0, 0]), &p(&[5, 0, 0]), &EstimateParams::new(0), &mut StreamId::new(1, 0).rng());
        assert!(matches!(r, Err(Error::ZeroSamples)));
    }

    #[test]
    fn splitting_and_crude_agree_on_a_neighbour() {
        // g(0, e1) = g(0,0) - 1 in the full lattice; both estimators see the same box.
        let x = p(&[0, 0, 0, 0, 0]);
        let y = p(&[1, 0, 0, 0, 0]);
        let prm = EstimateParams::new(20_000).truncation(20);
        let a = green_estimate(&x, &y, &prm, &mut StreamId::new(2, 0).rng()).unwrap();
        let b = green_estimate(&x, &y, &prm.clone().crude(), &mut StreamId::new(2, 1).rng()).unwrap();
        let z = (a.value - b.value) / (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!(z.abs() < 4.0, "{a:?} {b:?}");
    }

    #[test]
    fn one_dimensional_ladder_steps_by_at_most_one() {
        let l = Ladder::new(&p(&[0, 0, 0]), 1000.0, 1, 5000, 2);
        for w in l.levels.windows(2) {
            assert!(w[0] - w[1] <= 1 && w[0] >= w[1]);
        }
    }
}
