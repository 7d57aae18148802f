//! Points, paths and finite sets of the integer lattice.

use std::fmt;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};

pub const MAX_DIM: usize = 8;

/// Dimensions supported by the estimators. Points themselves accept 1..=MAX_DIM.
pub const MIN_TRANSIENT_DIM: usize = 3;

pub fn check_dim(d: usize) -> Result<()> {
    if (MIN_TRANSIENT_DIM..=MAX_DIM).contains(&d) {
        Ok(())
    } else {
        Err(Error::InvalidDimension(d))
    }
}

/// A lattice point. Coordinates past `dim` are always zero, so derived
/// equality, hashing and ordering only see the live coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Point {
    dim: u8,
    c: [i32; MAX_DIM],
}

impl Point {
    pub fn new(coords: &[i32]) -> Result<Point> {
        if coords.is_empty() || coords.len() > MAX_DIM {
            return Err(invalid(format!("point dimension {} not in 1..={MAX_DIM}", coords.len())));
        }
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Ok(Point { dim: coords.len() as u8, c })
    }

    pub fn origin(d: usize) -> Point {
        assert!((1..=MAX_DIM).contains(&d));
        Point { dim: d as u8, c: [0; MAX_DIM] }
    }

    /// `scale * e_axis`.
    pub fn axis(d: usize, axis: usize, scale: i32) -> Point {
        let mut p = Point::origin(d);
        p.c[axis] = scale;
        p
    }

    pub(crate) fn from_raw(dim: usize, c: [i32; MAX_DIM]) -> Point {
        Point { dim: dim as u8, c }
    }

    pub(crate) fn raw(&self) -> &[i32; MAX_DIM] {
        &self.c
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[i32] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn step(&self, code: u8) -> Point {
        let mut p = *self;
        let axis = (code / 2) as usize;
        debug_assert!(axis < self.dim());
        p.c[axis] += if code % 2 == 0 { 1 } else { -1 };
        p
    }

    pub fn neighbors(&self) -> impl Iterator<Item = Point> + '_ {
        (0..2 * self.dim).map(move |c| self.step(c))
    }

    pub fn add(&self, other: &Point) -> Result<Point> {
        same_dim(self, other)?;
        let mut p = *self;
        for i in 0..self.dim() {
            p.c[i] += other.c[i];
        }
        Ok(p)
    }

    pub fn sub(&self, other: &Point) -> Result<Point> {
        same_dim(self, other)?;
        let mut p = *self;
        for i in 0..self.dim() {
            p.c[i] -= other.c[i];
        }
        Ok(p)
    }

    #[inline]
    pub fn norm1(&self) -> u64 {
        self.coords().iter().map(|&x| x.unsigned_abs() as u64).sum()
    }

    #[inline]
    pub fn norm_inf(&self) -> u64 {
        self.coords().iter().map(|&x| x.unsigned_abs() as u64).max().unwrap_or(0)
    }
}

impl fmt::Debug for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, x) in self.coords().iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{x}")?;
        }
        write!(f, ")")
    }
}

impl Serialize for Point {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Point, D::Error> {
        let v = Vec::<i32>::deserialize(d)?;
        Point::new(&v).map_err(serde::de::Error::custom)
    }
}

fn same_dim(a: &Point, b: &Point) -> Result<()> {
    if a.dim == b.dim {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left: a.dim(), right: b.dim() })
    }
}

pub fn l1_distance(a: &Point, b: &Point) -> Result<u64> {
    same_dim(a, b)?;
    Ok(l1(a, b))
}

#[inline]
pub(crate) fn l1(a: &Point, b: &Point) -> u64 {
    let mut s = 0u64;
    for i in 0..a.dim() {
        s += (a.c[i] - b.c[i]).unsigned_abs() as u64;
    }
    s
}

/// Direction code of the unit step from `a` to `b`, if they are neighbours.
pub fn step_code(a: &Point, b: &Point) -> Option<u8> {
    if a.dim != b.dim || l1(a, b) != 1 {
        return None;
    }
    (0..a.dim()).find_map(|i| match b.c[i] - a.c[i] {
        1 => Some(2 * i as u8),
        -1 => Some(2 * i as u8 + 1),
        _ => None,
    })
}

/// Anything that can answer membership queries.
pub trait Region {
    fn contains(&self, p: &Point) -> bool;
}

impl<R: Region + ?Sized> Region for &R {
    fn contains(&self, p: &Point) -> bool {
        (**self).contains(p)
    }
}

impl Region for FxHashSet<Point> {
    fn contains(&self, p: &Point) -> bool {
        FxHashSet::contains(self, p)
    }
}

/// Closed l1 ball.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ball {
    pub center: Point,
    pub radius: u64,
}

impl Ball {
    pub fn new(center: Point, radius: u64) -> Ball {
        Ball { center, radius }
    }

    pub fn points(&self) -> Vec<Point> {
        l1_ball_points(&self.center, self.radius)
    }
}

impl Region for Ball {
    fn contains(&self, p: &Point) -> bool {
        p.dim == self.center.dim && l1(p, &self.center) <= self.radius
    }
}

/// Closed l-infinity box `center + [-radius, radius]^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxRegion {
    pub center: Point,
    pub radius: u64,
}

impl BoxRegion {
    pub fn new(center: Point, radius: u64) -> BoxRegion {
        BoxRegion { center, radius }
    }
}

impl Region for BoxRegion {
    fn contains(&self, p: &Point) -> bool {
        p.dim == self.center.dim
            && (0..p.dim()).all(|i| ((p.c[i] - self.center.c[i]).unsigned_abs() as u64) <= self.radius)
    }
}

/// All points of the closed l1 ball, in lexicographic order.
pub fn l1_ball_points(center: &Point, radius: u64) -> Vec<Point> {
    let d = center.dim();
    let mut out = Vec::new();
    let mut cur = [0i32; MAX_DIM];
    fn rec(i: usize, d: usize, left: i64, cur: &mut [i32; MAX_DIM], center: &Point, out: &mut Vec<Point>) {
        if i == d {
            let mut c = [0; MAX_DIM];
            for j in 0..d {
                c[j] = center.c[j] + cur[j];
            }
            out.push(Point::from_raw(d, c));
            return;
        }
        for x in -left..=left {
            cur[i] = x as i32;
            rec(i + 1, d, left - x.abs(), cur, center, out);
        }
        cur[i] = 0;
    }
    rec(0, d, radius as i64, &mut cur, center, &mut out);
    out
}

/// A nearest-neighbour path, stored as a start point and one direction code
/// per step, so the nearest-neighbour invariant holds by construction.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathSegment {
    start: Point,
    end: Point,
    codes: Vec<u8>,
}

impl PathSegment {
    pub fn new(points: Vec<Point>) -> Result<PathSegment> {
        let Some(&start) = points.first() else {
            return Err(invalid("path needs at least one point"));
        };
        let mut codes = Vec::with_capacity(points.len() - 1);
        for w in points.windows(2) {
            same_dim(&w[0], &w[1])?;
            match step_code(&w[0], &w[1]) {
                Some(c) => codes.push(c),
                None => return Err(invalid(format!("points {:?} and {:?} are not neighbours", w[0], w[1]))),
            }
        }
        Ok(PathSegment { start, end: *points.last().unwrap(), codes })
    }

    pub fn single(p: Point) -> PathSegment {
        PathSegment { start: p, end: p, codes: Vec::new() }
    }

    pub fn from_codes(start: Point, codes: &[u8]) -> Result<PathSegment> {
        if let Some(&c) = codes.iter().find(|&&c| (c as usize) >= 2 * start.dim()) {
            return Err(invalid(format!("direction code {c} out of range for d={}", start.dim())));
        }
        Ok(PathSegment::from_codes_unchecked(start, codes.to_vec()))
    }

    pub(crate) fn from_codes_unchecked(start: Point, codes: Vec<u8>) -> PathSegment {
        let end = codes.iter().fold(start, |p, &c| p.step(c));
        PathSegment { start, end, codes }
    }

    pub fn points(&self) -> PathPoints<'_> {
        PathPoints { next: Some(self.start), codes: self.codes.iter() }
    }

    pub fn to_points(&self) -> Vec<Point> {
        self.points().collect()
    }

    pub fn start(&self) -> Point {
        self.start
    }

    pub fn end(&self) -> Point {
        self.end
    }

    /// Number of steps.
    pub fn steps(&self) -> usize {
        self.codes.len()
    }

    pub fn codes(&self) -> &[u8] {
        &self.codes
    }

    /// The first `steps` steps.
    pub fn prefix(&self, steps: usize) -> PathSegment {
        PathSegment::from_codes_unchecked(self.start, self.codes[..steps.min(self.codes.len())].to_vec())
    }

    pub fn extend(&mut self, codes: &[u8]) {
        for &c in codes {
            self.end = self.end.step(c);
        }
        self.codes.extend_from_slice(codes);
    }
}

pub struct PathPoints<'a> {
    next: Option<Point>,
    codes: std::slice::Iter<'a, u8>,
}

impl Iterator for PathPoints<'_> {
    type Item = Point;

    fn next(&mut self) -> Option<Point> {
        let cur = self.next?;
        self.next = self.codes.next().map(|&c| cur.step(c));
        Some(cur)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.codes.len() + usize::from(self.next.is_some());
        (n, Some(n))
    }
}

impl ExactSizeIterator for PathPoints<'_> {}

impl fmt::Debug for PathSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.points()).finish()
    }
}

/// A nonempty finite subset of Z^d with cached geometry.
#[derive(Clone)]
pub struct FiniteSet {
    dim: usize,
    points: Vec<Point>,
    index: FxHashSet<Point>,
    diameter: u64,
    lo: [i32; MAX_DIM],
    hi: [i32; MAX_DIM],
}

impl FiniteSet {
    /// A nonempty set; the dimension is taken from the points.
    pub fn new(points: impl IntoIterator<Item = Point>) -> Result<FiniteSet> {
        let points: Vec<Point> = points.into_iter().collect();
        match points.first() {
            None => Err(Error::EmptySet),
            Some(p) => FiniteSet::with_dim(p.dim(), points),
        }
    }

    pub fn empty(d: usize) -> FiniteSet {
        FiniteSet { dim: d, points: Vec::new(), index: FxHashSet::default(), diameter: 0, lo: [0; MAX_DIM], hi: [0; MAX_DIM] }
    }

    /// A possibly empty set in dimension `d`.
    pub fn with_dim(d: usize, points: impl IntoIterator<Item = Point>) -> Result<FiniteSet> {
        let mut points: Vec<Point> = points.into_iter().collect();
        if points.is_empty() {
            return Ok(FiniteSet::empty(d));
        }
        for p in &points {
            if p.dim() != d {
                return Err(Error::DimensionMismatch { left: d, right: p.dim() });
            }
        }
        points.sort_unstable();
        points.dedup();
        let index: FxHashSet<Point> = points.iter().copied().collect();
        let mut lo = [0; MAX_DIM];
        let mut hi = [0; MAX_DIM];
        for i in 0..d {
            lo[i] = points.iter().map(|p| p.c[i]).min().unwrap();
            hi[i] = points.iter().map(|p| p.c[i]).max().unwrap();
        }
        let diameter = l1_diameter(&points);
        Ok(FiniteSet { dim: d, points, index, diameter, lo, hi })
    }

    pub fn ball(center: Point, radius: u64) -> FiniteSet {
        FiniteSet::new(l1_ball_points(&center, radius)).expect("ball is nonempty")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points in lexicographic order.
    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn contains(&self, p: &Point) -> bool {
        self.index.contains(p)
    }

    pub fn diameter(&self) -> u64 {
        self.diameter
    }

    /// Integer midpoint of the bounding box.
    pub fn center(&self) -> Point {
        let d = self.dim();
        let mut c = [0; MAX_DIM];
        for i in 0..d {
            c[i] = (self.lo[i] + self.hi[i]).div_euclid(2);
        }
        Point::from_raw(d, c)
    }

    /// Largest l1 distance from `c` to a point of the set (0 if empty).
    pub fn radius_about(&self, c: &Point) -> u64 {
        self.points.iter().map(|p| l1(p, c)).max().unwrap_or(0)
    }

    /// Largest l-infinity distance from `c` to a point of the set.
    pub fn inf_radius_about(&self, c: &Point) -> u64 {
        if self.is_empty() {
            return 0;
        }
        let d = self.dim();
        (0..d)
            .map(|i| {
                let a = (self.lo[i] - c.c[i]).unsigned_abs() as u64;
                let b = (self.hi[i] - c.c[i]).unsigned_abs() as u64;
                a.max(b)
            })
            .max()
            .unwrap()
    }

    pub fn bounds(&self) -> (Point, Point) {
        (Point::from_raw(self.dim(), self.lo), Point::from_raw(self.dim(), self.hi))
    }

    /// Points with at least one neighbour outside the set.
    pub fn inner_boundary(&self) -> Vec<Point> {
        self.points
            .iter()
            .copied()
            .filter(|p| p.neighbors().any(|q| !self.index.contains(&q)))
            .collect()
    }

    pub fn hash_set(&self) -> &FxHashSet<Point> {
        &self.index
    }
}

impl Region for FiniteSet {
    fn contains(&self, p: &Point) -> bool {
        self.index.contains(p)
    }
}

impl fmt::Debug for FiniteSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.points.iter()).finish()
    }
}

impl PartialEq for FiniteSet {
    fn eq(&self, other: &Self) -> bool {
        self.points == other.points
    }
}

/// l1 diameter via the 2^(d-1) sign-vector projections.
fn l1_diameter(points: &[Point]) -> u64 {
    let d = points[0].dim();
    let mut best = 0i64;
    for mask in 0u32..(1 << (d - 1)) {
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for p in points {
            let mut s = p.c[0] as i64;
            for i in 1..d {
                let x = p.c[i] as i64;
                s += if mask >> (i - 1) & 1 == 1 { -x } else { x };
            }
            lo = lo.min(s);
            hi = hi.max(s);
        }
        best = best.max(hi - lo);
    }
    best as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_sizes_match_the_delannoy_count() {
        // |B_1(r)| in d=3 is (2r+1)(2r^2+2r+3)/3.
        for r in 0..6u64 {
            let n = Ball::new(Point::origin(3), r).points().len() as u64;
            assert_eq!(n, (2 * r + 1) * (2 * r * r + 2 * r + 3) / 3);
        }
    }

    #[test]
    fn codes_round_trip() {
        let p = Point::new(&[0, 0, 0]).unwrap();
        let path = PathSegment::from_codes(p, &[0, 3, 5, 1, 2]).unwrap();
        assert_eq!(path.codes(), vec![0, 3, 5, 1, 2]);
        assert_eq!(path.end(), Point::new(&[0, 0, -1]).unwrap());
    }

    #[test]
    fn non_adjacent_points_are_rejected() {
        let a = Point::new(&[0, 0, 0]).unwrap();
        let b = Point::new(&[1, 1, 0]).unwrap();
        assert!(PathSegment::new(vec![a, b]).is_err());
    }

    #[test]
    fn diameter_matches_pairwise_maximum() {
        let pts: Vec<Point> = [[0, 0, 0], [3, -1, 2], [-2, 4, 1], [1, 1, -5]]
            .iter()
            .map(|c| Point::new(c).unwrap())
            .collect();
        let brute = pts
            .iter()
            .flat_map(|a| pts.iter().map(move |b| l1(a, b)))
            .max()
            .unwrap();
        assert_eq!(FiniteSet::new(pts).unwrap().diameter(), brute);
    }

    #[test]
    fn mixed_dimensions_fail() {
        let a = Point::new(&[0, 0, 0]).unwrap();
        let b = Point::new(&[0, 0, 0, 0]).unwrap();
        assert!(matches!(l1_distance(&a, &b), Err(Error::DimensionMismatch { .. })));
        assert!(FiniteSet::new([a, b]).is_err());
    }

    #[test]
    fn inner_boundary_of_ball_is_the_sphere() {
        let s = FiniteSet::ball(Point::origin(3), 3);
        let b = s.inner_boundary();
        assert!(b.iter().all(|p| p.norm1() == 3));
        assert_eq!(b.len(), s.len() - FiniteSet::ball(Point::origin(3), 2).len());
    }
}
