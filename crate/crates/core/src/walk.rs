//! Simple random walk paths and stopping times.

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::lattice::{PathSegment, Point, Region};
use crate::rng::Rng;

#[inline]
pub(crate) fn random_code(rng: &mut Rng, d: usize) -> u8 {
    rng.random_range(0..2 * d as u32) as u8
}

/// A simple random walk path with `steps` steps.
pub fn srw_path(start: Point, steps: usize, rng: &mut Rng) -> PathSegment {
    let d = start.dim();
    let codes = (0..steps).map(|_| random_code(rng, d)).collect();
    PathSegment::from_codes_unchecked(start, codes)
}

/// First index `n >= 0` with `path[n]` in `k`.
pub fn first_entrance<R: Region>(path: &PathSegment, k: &R) -> Option<usize> {
    path.points().position(|p| k.contains(&p))
}

/// First index `n >= 1` with `path[n]` in `k`.
pub fn first_return<R: Region>(path: &PathSegment, k: &R) -> Option<usize> {
    path.points().skip(1).position(|p| k.contains(&p)).map(|i| i + 1)
}

/// First index `n >= 0` with `path[n]` outside `k`.
pub fn first_exit<R: Region>(path: &PathSegment, k: &R) -> Option<usize> {
    path.points().position(|p| !k.contains(&p))
}

/// Run a walk from `start` until it first leaves `region`; the returned path
/// ends at the exit point.
pub fn walk_until_exit<R: Region>(start: Point, region: &R, max_steps: usize, rng: &mut Rng) -> Result<PathSegment> {
    let d = start.dim();
    let mut codes = Vec::new();
    let mut p = start;
    while region.contains(&p) {
        if codes.len() >= max_steps {
            return Err(Error::NoExit { steps: max_steps });
        }
        let c = random_code(rng, d);
        p = p.step(c);
        codes.push(c);
    }
    Ok(PathSegment::from_codes_unchecked(start, codes))
}
