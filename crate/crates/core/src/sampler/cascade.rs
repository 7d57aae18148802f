use serde::{Deserialize, Serialize};

use super::view::{psi_set, ProcessView};
use super::{sample_hitting_process, InterlacementSample, SamplerParams, SamplingMethod};
use crate::error::{Error, Result};
use crate::lattice::{l1, Ball, FiniteSet, PathSegment, Point};
use crate::rng::StreamId;
use crate::walk::{first_exit, srw_path, walk_until_exit};

/// A^(1): the walk after its first exit from B(R), steps 1..=floor(R^2/8),
/// clipped to the ball of radius R/2 around the exit point.
pub fn first_level(x: &PathSegment, big_r: u64) -> Result<FiniteSet> {
    let d = x.start().dim();
    let ball = Ball::new(Point::origin(d), big_r);
    let steps = (big_r * big_r / 8) as usize;
    let t = first_exit(x, &ball).ok_or(Error::NoExit { steps: x.steps() })?;
    if t + steps > x.steps() {
        return Err(Error::NoExit { steps: x.steps() });
    }
    let pts: Vec<Point> = x.points().skip(t).take(steps + 1).collect();
    let y0 = pts[0];
    let out = pts[1..].iter().copied().filter(|p| l1(p, &y0) * 2 <= big_r);
    FiniteSet::with_dim(d, out)
}

/// A^(1), ..., A^(depth) from caller-provided independent samples; level j
/// (j >= 2) uses the trajectories of `samples[j-2]` that avoid B(r).
pub fn cascade(samples: &[&InterlacementSample], x: &PathSegment, big_r: u64, r: u64, depth: usize) -> Result<Vec<FiniteSet>> {
    if depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if samples.len() + 1 < depth {
        return Err(Error::InvalidArgument(format!("depth {depth} needs {} samples", depth - 1)));
    }
    let mut levels = vec![first_level(x, big_r)?];
    for s in samples.iter().take(depth - 1) {
        let view = ProcessView::all(s).restrict_spatial(Some(r), None)?;
        let next = psi_set(&view, levels.last().unwrap(), big_r)?;
        levels.push(next);
    }
    Ok(levels)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CascadeMode {
    /// Level j uses label band ((j-2)ū, (j-1)ū] of one process at intensity (depth-1)ū.
    #[default]
    Bands,
    FreshSeeds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CascadeParams {
    pub d: usize,
    pub big_r: u64,
    pub r: u64,
    pub depth: usize,
    pub u_bar: f64,
    pub mode: CascadeMode,
    /// Escape box radius for the samplers; default 4R.
    pub truncation: Option<u64>,
    pub walk_budget: usize,
}

impl CascadeParams {
    pub fn new(d: usize, big_r: u64, depth: usize) -> CascadeParams {
        CascadeParams { d, big_r, r: 1, depth, u_bar: 1.0, mode: CascadeMode::Bands, truncation: None, walk_budget: 1 << 30 }
    }
}

/// Runs the cascade from a fresh walk at the origin, sampling each level's
/// trajectories on the previous level's set.
pub fn cascade_adaptive(p: &CascadeParams, stream: StreamId) -> Result<Vec<FiniteSet>> {
    if p.depth == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if p.r >= p.big_r {
        return Err(Error::InvalidRadii { r: p.r as f64, big_r: p.big_r as f64 });
    }
    let o = Point::origin(p.d);
    let mut rng = stream.child(0).rng();
    let mut x = walk_until_exit(o, &Ball::new(o, p.big_r), p.walk_budget, &mut rng)?;
    let steps = (p.big_r * p.big_r / 8) as usize;
    let tail = srw_path(x.end(), steps, &mut rng);
    x.extend(tail.codes());
    let mut levels = vec![first_level(&x, p.big_r)?];
    for j in 2..=p.depth {
        let prev = levels.last().unwrap();
        if prev.is_empty() {
            levels.push(FiniteSet::empty(p.d));
            continue;
        }
        let sp = SamplerParams {
            leg_length: Some(steps.max(1)),
            observation: Some(Ball::new(o, 3 * p.big_r)),
            truncation: Some(p.truncation.unwrap_or(4 * p.big_r).max(prev.inf_radius_about(&prev.center()) + 1)),
            method: SamplingMethod::SiteThinning,
            ..SamplerParams::default()
        };
        let s = stream.child(j as u64);
        let next = match p.mode {
            CascadeMode::FreshSeeds => {
                let sample = sample_hitting_process(prev, p.u_bar, &sp, s)?;
                let view = ProcessView::all(&sample).restrict_spatial(Some(p.r), None)?;
                psi_set(&view, prev, p.big_r)?
            }
            CascadeMode::Bands => {
                let total = p.u_bar * (p.depth - 1) as f64;
                let sample = sample_hitting_process(prev, total, &sp, s)?;
                let lo = p.u_bar * (j - 2) as f64;
                let hi = if j == p.depth { total } else { p.u_bar * (j - 1) as f64 };
                let view = ProcessView::all(&sample).restrict_labels(lo, hi)?.restrict_spatial(Some(p.r), None)?;
                psi_set(&view, prev, p.big_r)?
            }
        };
        levels.push(next);
    }
    Ok(levels)
}
