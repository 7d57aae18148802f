//! Equilibrium measure and capacity of finite sets for the walk killed on
//! leaving a truncation box.
//!
//! Both backends compute the same truncated quantity
//! e_K(x) = P_x[walk leaves the box before returning to K]:
//! the Monte Carlo backend by escape walks, the exact backend by solving
//! `G e = 1` on the inner boundary of K, where `G` is the box-killed Green
//! function restricted to K. Interior points of K carry no mass.

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::green::{default_truncation, mean_se, run_root, split_factor, Ladder, Observer, RawSet, VarianceReduction};
use crate::lattice::{check_dim, BoxRegion, FiniteSet, Point, MAX_DIM};
use crate::rng::{Rng, StreamId};
use crate::spectral::{BoxGreen, DEFAULT_ORDER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Mc,
    Exact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    /// l-infinity radius of the killing box; default max(8 diam, 32).
    pub truncation: Option<u64>,
    /// Box center; default is the midpoint of the bounding box of K.
    pub center: Option<Point>,
    /// Escape walks per boundary point (MC backend).
    pub samples: usize,
    pub variance_reduction: VarianceReduction,
    /// MC capacity only: estimate from this many uniformly drawn boundary
    /// points instead of all of them.
    pub point_sample: Option<usize>,
}

impl Default for CapacityParams {
    fn default() -> Self {
        CapacityParams { truncation: None, center: None, samples: 2000, variance_reduction: VarianceReduction::Splitting, point_sample: None }
    }
}

impl CapacityParams {
    pub fn truncation(mut self, t: u64) -> Self {
        self.truncation = Some(t);
        self
    }

    pub fn center(mut self, c: Point) -> Self {
        self.center = Some(c);
        self
    }

    pub fn samples(mut self, n: usize) -> Self {
        self.samples = n;
        self
    }

    pub fn point_sample(mut self, n: usize) -> Self {
        self.point_sample = Some(n);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumMeasure {
    /// Sorted by point; every point of K appears.
    pub weights: Vec<(Point, f64)>,
    /// Per-point standard errors (zero for the exact backend).
    pub std_errors: Vec<f64>,
    pub backend: Backend,
    pub truncation: u64,
}

impl EquilibriumMeasure {
    pub fn weight(&self, p: &Point) -> f64 {
        match self.weights.binary_search_by(|(q, _)| q.cmp(p)) {
            Ok(i) => self.weights[i].1,
            Err(_) => 0.0,
        }
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().map(|(_, w)| w).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacityEstimate {
    pub value: f64,
    pub std_error: f64,
    pub truncation: u64,
}

pub(crate) struct Geometry {
    pub bx: BoxRegion,
}

pub(crate) fn geometry(k: &FiniteSet, params: &CapacityParams) -> Result<Geometry> {
    let center = params.center.unwrap_or_else(|| k.center());
    if center.dim() != k.dim() {
        return Err(Error::DimensionMismatch { left: k.dim(), right: center.dim() });
    }
    let reach = k.inf_radius_about(&center);
    let rho = params.truncation.unwrap_or_else(|| default_truncation(k.diameter()).max(reach + 1));
    if rho <= reach {
        return Err(Error::TruncationTooSmall { truncation: rho, required: reach });
    }
    Ok(Geometry { bx: BoxRegion::new(center, rho) })
}

pub fn equilibrium_measure(k: &FiniteSet, backend: Backend, params: &CapacityParams, rng: &mut Rng) -> Result<EquilibriumMeasure> {
    check_dim(k.dim())?;
    if k.is_empty() {
        return Ok(EquilibriumMeasure {
            weights: Vec::new(),
            std_errors: Vec::new(),
            backend,
            truncation: params.truncation.unwrap_or(0),
        });
    }
    let geo = geometry(k, params)?;
    match backend {
        Backend::Exact => exact_measure(k, &geo.bx),
        Backend::Mc => mc_measure(k, &geo.bx, params, rng),
    }
}

pub fn capacity(k: &FiniteSet, backend: Backend, params: &CapacityParams, rng: &mut Rng) -> Result<CapacityEstimate> {
    check_dim(k.dim())?;
    if k.is_empty() {
        return Ok(CapacityEstimate { value: 0.0, std_error: 0.0, truncation: params.truncation.unwrap_or(0) });
    }
    if let (Backend::Mc, Some(m)) = (backend, params.point_sample) {
        let geo = geometry(k, params)?;
        return mc_sampled_capacity(k, &geo.bx, params, m, rng);
    }
    let e = equilibrium_measure(k, backend, params, rng)?;
    let var: f64 = e.std_errors.iter().map(|s| s * s).sum();
    Ok(CapacityEstimate { value: e.total(), std_error: var.sqrt(), truncation: e.truncation })
}

pub fn normalized_equilibrium_measure(k: &FiniteSet, backend: Backend, params: &CapacityParams, rng: &mut Rng) -> Result<EquilibriumMeasure> {
    if k.is_empty() {
        return Err(Error::EmptySet);
    }
    let mut e = equilibrium_measure(k, backend, params, rng)?;
    let total = e.total();
    if total <= 0.0 {
        return Err(Error::Numerical("capacity estimate is zero".into()));
    }
    for (_, w) in e.weights.iter_mut() {
        *w /= total;
    }
    for s in e.std_errors.iter_mut() {
        *s /= total;
    }
    Ok(e)
}

struct Returner<'a> {
    k: &'a RawSet,
}

impl Observer for Returner<'_> {
    #[inline]
    fn visit(&mut self, c: &[i32; MAX_DIM], t0: bool) -> (f64, bool) {
        if !t0 && self.k.contains(c) {
            (1.0, true)
        } else {
            (0.0, false)
        }
    }
}

fn escape_ladder(k: &FiniteSet, bx: &BoxRegion, vr: VarianceReduction) -> Ladder {
    let kc = k.center();
    let floor = k.radius_about(&kc) + 1;
    let max_dist: u64 = (0..k.dim())
        .map(|i| bx.radius + (bx.center.coords()[i] - kc.coords()[i]).unsigned_abs() as u64)
        .sum();
    Ladder::new(&kc, floor as f64, floor, max_dist, split_factor(k.dim(), vr))
}

/// Escape probability estimate from `x` (mean, standard error).
fn escape_estimate(x: &Point, raw: &RawSet, bx: &BoxRegion, ladder: &Ladder, samples: usize, rng: &mut Rng) -> (f64, f64) {
    let mut obs = Returner { k: raw };
    let scores: Vec<f64> = (0..samples).map(|_| run_root(x, bx, ladder, &mut obs, rng)).collect();
    let (ret, se) = mean_se(&scores);
    ((1.0 - ret).clamp(0.0, 1.0), if samples > 1 { se } else { 0.0 })
}

fn is_interior(k: &FiniteSet, p: &Point) -> bool {
    p.neighbors().all(|q| k.contains(&q))
}

fn mc_measure(k: &FiniteSet, bx: &BoxRegion, params: &CapacityParams, rng: &mut Rng) -> Result<EquilibriumMeasure> {
    if params.samples == 0 {
        return Err(Error::ZeroSamples);
    }
    let raw = RawSet::new(k);
    let ladder = escape_ladder(k, bx, params.variance_reduction);
    let base: u64 = rng.random();
    let est: Vec<(f64, f64)> = k
        .points()
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            if is_interior(k, p) {
                (0.0, 0.0)
            } else {
                let mut r = StreamId::new(base, i as u64).rng();
                escape_estimate(p, &raw, bx, &ladder, params.samples, &mut r)
            }
        })
        .collect();
    Ok(EquilibriumMeasure {
        weights: k.points().iter().zip(&est).map(|(p, e)| (*p, e.0)).collect(),
        std_errors: est.iter().map(|e| e.1).collect(),
        backend: Backend::Mc,
        truncation: bx.radius,
    })
}

fn mc_sampled_capacity(k: &FiniteSet, bx: &BoxRegion, params: &CapacityParams, m: usize, rng: &mut Rng) -> Result<CapacityEstimate> {
    if params.samples == 0 || m == 0 {
        return Err(Error::ZeroSamples);
    }
    let boundary = k.inner_boundary();
    let raw = RawSet::new(k);
    let ladder = escape_ladder(k, bx, params.variance_reduction);
    let picks: Vec<usize> = (0..m).map(|_| rng.random_range(0..boundary.len())).collect();
    let base: u64 = rng.random();
    let vals: Vec<f64> = picks
        .par_iter()
        .enumerate()
        .map(|(i, &j)| {
            let mut r = StreamId::new(base, i as u64).rng();
            escape_estimate(&boundary[j], &raw, bx, &ladder, params.samples, &mut r).0
        })
        .collect();
    let (mean, se) = mean_se(&vals);
    let nb = boundary.len() as f64;
    Ok(CapacityEstimate { value: nb * mean, std_error: if m > 1 { nb * se } else { f64::INFINITY }, truncation: bx.radius })
}

/// Signed coordinate permutation: `g(v)_i = sign_i * v_{perm_i}`.
#[derive(Clone, Copy)]
struct Signed {
    perm: [u8; MAX_DIM],
    sign: [i8; MAX_DIM],
}

impl Signed {
    fn apply(&self, v: &[i32; MAX_DIM], d: usize) -> [i32; MAX_DIM] {
        let mut out = [0; MAX_DIM];
        for i in 0..d {
            out[i] = self.sign[i] as i32 * v[self.perm[i] as usize];
        }
        out
    }

    fn identity() -> Signed {
        let mut perm = [0u8; MAX_DIM];
        for (i, p) in perm.iter_mut().enumerate() {
            *p = i as u8;
        }
        Signed { perm, sign: [1; MAX_DIM] }
    }
}

fn all_signed_perms(d: usize) -> Vec<Signed> {
    let mut perms: Vec<Vec<u8>> = vec![vec![]];
    for _ in 0..d {
        let mut next = Vec::new();
        for p in &perms {
            for c in 0..d as u8 {
                if !p.contains(&c) {
                    let mut q = p.clone();
                    q.push(c);
                    next.push(q);
                }
            }
        }
        perms = next;
    }
    let mut out = Vec::new();
    for p in perms {
        for mask in 0u32..(1 << d) {
            let mut g = Signed::identity();
            for i in 0..d {
                g.perm[i] = p[i];
                g.sign[i] = if mask >> i & 1 == 1 { -1 } else { 1 };
            }
            out.push(g);
        }
    }
    out
}

const GROUP_SCAN_LIMIT: u64 = 50_000_000;
const MAX_ORBITS: usize = 4000;
const MAX_GREEN_EVALS: u64 = 200_000_000;

/// Groups the offsets into orbits of the largest signed-permutation group
/// (about the box center) that maps the offset set of K to itself.
fn orbits(offsets: &[[i32; MAX_DIM]], kset: &FiniteSet, center: &Point, d: usize) -> Vec<Vec<usize>> {
    let rel: rustc_hash::FxHashSet<[i32; MAX_DIM]> = kset
        .points()
        .iter()
        .map(|p| {
            let mut v = [0; MAX_DIM];
            for i in 0..d {
                v[i] = p.coords()[i] - center.coords()[i];
            }
            v
        })
        .collect();
    let preserves = |g: &Signed| rel.iter().all(|v| rel.contains(&g.apply(v, d)));

    let mut gens = Vec::new();
    for i in 0..d {
        let mut g = Signed::identity();
        g.sign[i] = -1;
        gens.push(g);
    }
    for i in 0..d - 1 {
        let mut g = Signed::identity();
        g.perm.swap(i, i + 1);
        gens.push(g);
    }
    let mut groups: FxHashMap<Vec<i32>, Vec<usize>> = FxHashMap::default();
    if gens.iter().all(preserves) {
        for (idx, v) in offsets.iter().enumerate() {
            let mut key: Vec<i32> = v[..d].iter().map(|x| x.abs()).collect();
            key.sort_unstable();
            groups.entry(key).or_default().push(idx);
        }
    } else {
        let order: u64 = (1..=d as u64).product::<u64>() << d;
        let stab: Vec<Signed> = if order * rel.len() as u64 <= GROUP_SCAN_LIMIT {
            all_signed_perms(d).into_iter().filter(preserves).collect()
        } else {
            vec![Signed::identity()]
        };
        for (idx, v) in offsets.iter().enumerate() {
            let key = stab.iter().map(|g| g.apply(v, d)).min().unwrap();
            groups.entry(key[..d].to_vec()).or_default().push(idx);
        }
    }
    let mut out: Vec<Vec<usize>> = groups.into_values().collect();
    out.sort_by_key(|o| o[0]);
    out
}

fn exact_measure(k: &FiniteSet, bx: &BoxRegion) -> Result<EquilibriumMeasure> {
    let d = k.dim();
    let c = bx.center;
    let boundary = k.inner_boundary();
    let offsets: Vec<[i32; MAX_DIM]> = boundary
        .iter()
        .map(|p| {
            let mut v = [0; MAX_DIM];
            for i in 0..d {
                v[i] = p.coords()[i] - c.coords()[i];
            }
            v
        })
        .collect();
    let orb = orbits(&offsets, k, &c, d);
    let n = orb.len();
    if n > MAX_ORBITS {
        return Err(Error::Guard { what: "symmetry-reduced boundary size", value: n as u64, limit: MAX_ORBITS as u64 });
    }
    let evals = n as u64 * boundary.len() as u64;
    if evals > MAX_GREEN_EVALS {
        return Err(Error::Guard { what: "Green function evaluations", value: evals, limit: MAX_GREEN_EVALS });
    }
    let lo = offsets.iter().flat_map(|v| v[..d].iter().copied()).min().unwrap();
    let hi = offsets.iter().flat_map(|v| v[..d].iter().copied()).max().unwrap();
    let g = BoxGreen::new(d, bx.radius, lo, hi, DEFAULT_ORDER)?;

    let rows: Vec<Vec<f64>> = orb
        .par_iter()
        .map(|o| {
            let x = &offsets[o[0]];
            orb.iter().map(|o2| o2.iter().map(|&j| g.green(&x[..d], &offsets[j][..d])).sum()).collect()
        })
        .collect();
    let m = DMatrix::from_fn(n, n, |i, j| rows[i][j]);
    let ones = DVector::from_element(n, 1.0);
    let lu = m.clone().lu();
    let mut e = lu.solve(&ones).ok_or_else(|| Error::Numerical("singular Green matrix".into()))?;
    for _ in 0..8 {
        let r = &ones - &m * &e;
        if r.amax() < 1e-12 {
            break;
        }
        let de = lu.solve(&r).ok_or_else(|| Error::Numerical("singular Green matrix".into()))?;
        e += de;
    }
    let r = &ones - &m * &e;
    if r.amax() >= 1e-10 {
        return Err(Error::Numerical(format!("residual {} above 1e-10", r.amax())));
    }

    let mut by_point: FxHashMap<Point, f64> = FxHashMap::default();
    for (oi, o) in orb.iter().enumerate() {
        for &j in o {
            by_point.insert(boundary[j], e[oi].clamp(0.0, 1.0));
        }
    }
    Ok(EquilibriumMeasure {
        weights: k.points().iter().map(|p| (*p, by_point.get(p).copied().unwrap_or(0.0))).collect(),
        std_errors: vec![0.0; k.len()],
        backend: Backend::Exact,
        truncation: bx.radius,
    })
}
