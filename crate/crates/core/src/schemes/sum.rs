//! Truncated diagrammatic sums over a lengthed tree.
//!
//! Internal vertices range over the l-infinity box of radius rho around the
//! midpoint of the leaves; each edge contributes (|y_i - y_j|_1 + 1)^(l - d).

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::tree::LengthedTree;
use crate::error::{Error, Result};
use crate::lattice::Point;

/// Largest box (in cells) held as a field.
pub const CELL_LIMIT: u64 = 1 << 24;
/// Largest padded transform (in cells).
const FFT_LIMIT: u64 = 1 << 25;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SumMethod {
    /// No internal vertex.
    Direct,
    /// One internal vertex between two leaves: joint histogram of the two
    /// distances, built coordinate by coordinate.
    Profile,
    /// Fields over the box, eliminating internal vertices leaf-first.
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeSumReport {
    pub value: f64,
    pub truncation: u64,
    pub method: SumMethod,
    /// Values at rho/4, rho/2, rho.
    pub profile: Vec<(u64, f64)>,
    /// Extrapolated remainder beyond rho, infinite when diverging.
    pub tail_estimate: f64,
    /// Increments do not shrink under doubling of rho.
    pub diverging: bool,
    /// log2 of value(rho) / value(rho/2).
    pub growth_exponent: f64,
    pub total_length: f64,
    /// d(k-1) - l(T).
    pub bound_exponent: f64,
}

fn pow_table(exp: f64, max: usize) -> Vec<f64> {
    (0..=max).map(|r| ((r + 1) as f64).powf(exp)).collect()
}

fn l1(a: &[i64], b: &[i64]) -> usize {
    a.iter().zip(b).map(|(x, y)| (x - y).unsigned_abs() as usize).sum()
}

struct Setup<'a> {
    t: &'a LengthedTree,
    leaves: Vec<Vec<i64>>,
    center: Vec<i64>,
    /// Upper bound on any distance between a leaf and a box point.
    reach: usize,
}

fn direct(s: &Setup) -> f64 {
    s.t.edges().iter().map(|&(a, b, l)| ((l1(&s.leaves[a], &s.leaves[b]) + 1) as f64).powf(l - s.t.d() as f64)).product()
}

fn profile(s: &Setup, rho: i64) -> f64 {
    let d = s.t.d();
    let es = s.t.edges();
    let la = if es[0].0 < 2 { es[0].0 } else { es[0].1 };
    let (ea, eb) = if la == 0 { (es[0], es[1]) } else { (es[1], es[0]) };
    let (a, b) = (&s.leaves[0], &s.leaves[1]);
    // hist[u][v] counts box points at distance u from a and v from b.
    let mut su = 0usize;
    let mut sv = 0usize;
    let mut hist = vec![1.0f64];
    let mut width = 1usize;
    for i in 0..d {
        let pairs: Vec<(usize, usize)> = (s.center[i] - rho..=s.center[i] + rho)
            .map(|t| ((t - a[i]).unsigned_abs() as usize, (t - b[i]).unsigned_abs() as usize))
            .collect();
        let mu = pairs.iter().map(|p| p.0).max().unwrap();
        let mv = pairs.iter().map(|p| p.1).max().unwrap();
        let (nu, nv) = (su + mu, sv + mv);
        let nw = nv + 1;
        let mut next = vec![0.0f64; (nu + 1) * nw];
        for u in 0..=su {
            for v in 0..=sv {
                let h = hist[u * width + v];
                if h == 0.0 {
                    continue;
                }
                for &(p, q) in &pairs {
                    next[(u + p) * nw + v + q] += h;
                }
            }
        }
        hist = next;
        su = nu;
        sv = nv;
        width = nw;
    }
    let ta = pow_table(ea.2 - d as f64, su);
    let tb = pow_table(eb.2 - d as f64, sv);
    let mut total = 0.0;
    for u in 0..=su {
        let mut row = 0.0;
        for v in 0..=sv {
            row += hist[u * width + v] * tb[v];
        }
        total += row * ta[u];
    }
    total
}

fn next_smooth(n: usize) -> usize {
    (n..).find(|&x| {
        let mut y = x;
        for p in [2, 3, 5, 7] {
            while y % p == 0 {
                y /= p;
            }
        }
        y == 1
    })
    .unwrap()
}

fn fft_all_axes(buf: &mut [Complex64], p: usize, d: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let fft = if inverse { planner.plan_fft_inverse(p) } else { planner.plan_fft_forward(p) };
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    fft.process_with_scratch(buf, &mut scratch);
    let total = buf.len();
    let mut line = vec![Complex64::default(); p];
    for axis in 1..d {
        let stride = p.pow(axis as u32);
        let block = stride * p;
        for hi in 0..total / block {
            for lo in 0..stride {
                let base = hi * block + lo;
                for (i, c) in line.iter_mut().enumerate() {
                    *c = buf[base + i * stride];
                }
                fft.process_with_scratch(&mut line, &mut scratch);
                for (i, c) in line.iter().enumerate() {
                    buf[base + i * stride] = *c;
                }
            }
        }
    }
}

/// Linear convolution of a box field with a kernel depending on the l1 norm
/// of the offset, restricted back to the box.
fn convolve(field: &[f64], n: usize, d: usize, table: &[f64], planner: &mut FftPlanner<f64>) -> Result<Vec<f64>> {
    let p = next_smooth(2 * n - 1);
    let cells = (p as u64).pow(d as u32);
    if cells > FFT_LIMIT {
        return Err(Error::Memory { cells, limit: FFT_LIMIT });
    }
    let total = cells as usize;
    let mut fa = vec![Complex64::default(); total];
    let mut fk = vec![Complex64::default(); total];
    let mut idx = vec![0usize; d];
    for (j, c) in fk.iter_mut().enumerate() {
        let mut r = j;
        let mut norm = 0usize;
        let mut inside = true;
        for _ in 0..d {
            let x = r % p;
            r /= p;
            let w = if x < n { x } else if x > p - n { p - x } else { inside = false; break };
            norm += w;
        }
        if inside {
            *c = Complex64::new(table[norm], 0.0);
        }
    }
    for (i, &v) in field.iter().enumerate() {
        let mut r = i;
        let mut off = 0;
        let mut s = 1;
        for slot in idx.iter_mut() {
            *slot = r % n;
            r /= n;
            off += *slot * s;
            s *= p;
        }
        fa[off] = Complex64::new(v, 0.0);
    }
    fft_all_axes(&mut fa, p, d, false, planner);
    fft_all_axes(&mut fk, p, d, false, planner);
    for (a, k) in fa.iter_mut().zip(&fk) {
        *a *= *k;
    }
    drop(fk);
    fft_all_axes(&mut fa, p, d, true, planner);
    let scale = 1.0 / total as f64;
    let mut out = vec![0.0; field.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let mut r = i;
        let mut off = 0;
        let mut s = 1;
        for _ in 0..d {
            off += (r % n) * s;
            r /= n;
            s *= p;
        }
        *o = (fa[off].re * scale).max(0.0);
    }
    Ok(out)
}

fn boxed(s: &Setup, rho: i64) -> Result<f64> {
    let t = s.t;
    let d = t.d();
    let k = t.k();
    let n = (2 * rho + 1) as usize;
    let cells = (n as u64).pow(d as u32);
    if cells > CELL_LIMIT {
        return Err(Error::Memory { cells, limit: CELL_LIMIT });
    }
    let cells = cells as usize;
    let df = d as f64;
    let m = t.internal();
    let mut fields: Vec<Vec<f64>> = vec![vec![1.0; cells]; m];
    let mut y = vec![0i64; d];
    for &(a, b, l) in t.edges() {
        let (leaf, v) = if a < k { (a, b) } else if b < k { (b, a) } else { continue };
        let table = pow_table(l - df, s.reach);
        let f = &mut fields[v - k];
        for (i, c) in f.iter_mut().enumerate() {
            let mut r = i;
            for (j, yj) in y.iter_mut().enumerate() {
                *yj = s.center[j] - rho + (r % n) as i64;
                r /= n;
            }
            *c *= table[l1(&y, &s.leaves[leaf])];
        }
    }
    // Internal tree rooted at the first internal vertex; children before parents.
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for &(a, b, l) in t.edges() {
        if a >= k && b >= k {
            adj[a - k].push((b - k, l));
            adj[b - k].push((a - k, l));
        }
    }
    let mut order = Vec::with_capacity(m);
    let mut parent = vec![(usize::MAX, 0.0); m];
    let mut stack = vec![0usize];
    let mut seen = vec![false; m];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        order.push(v);
        for &(u, l) in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                parent[u] = (v, l);
                stack.push(u);
            }
        }
    }
    let mut planner = FftPlanner::new();
    for &v in order.iter().rev().filter(|&&v| v != 0) {
        let (p, l) = parent[v];
        let table = pow_table(l - df, d * (n - 1));
        let g = convolve(&fields[v], n, d, &table, &mut planner)?;
        fields[v] = Vec::new();
        for (c, x) in fields[p].iter_mut().zip(&g) {
            *c *= x;
        }
    }
    Ok(fields[0].iter().sum())
}

/// Sum over the internal vertices in the box of the product of edge factors,
/// with leaves at the given positions.
pub fn tree_sum(t: &LengthedTree, leaves: &[Point], truncation: u64) -> Result<TreeSumReport> {
    let d = t.d();
    if leaves.len() != t.k() {
        return Err(Error::InvalidArgument(format!("{} leaf positions for {} leaves", leaves.len(), t.k())));
    }
    if let Some(p) = leaves.iter().find(|p| p.dim() != d) {
        return Err(Error::DimensionMismatch { left: d, right: p.dim() });
    }
    let lv: Vec<Vec<i64>> = leaves.iter().map(|p| p.coords().iter().map(|&c| c as i64).collect()).collect();
    let mut maxd = 0;
    for a in &lv {
        for b in &lv {
            maxd = maxd.max(l1(a, b));
        }
    }
    let required = 2 * maxd as u64;
    if truncation < required {
        return Err(Error::TruncationTooSmall { truncation, required });
    }
    let center: Vec<i64> = (0..d)
        .map(|i| {
            let lo = lv.iter().map(|p| p[i]).min().unwrap();
            let hi = lv.iter().map(|p| p[i]).max().unwrap();
            (lo + hi).div_euclid(2)
        })
        .collect();
    let spread = lv.iter().map(|p| p.iter().zip(&center).map(|(a, c)| (a - c).unsigned_abs() as usize).max().unwrap()).max().unwrap();
    let s = Setup { t, leaves: lv, center, reach: d * (truncation as usize + spread) };
    let method = if t.internal() == 0 {
        SumMethod::Direct
    } else if t.internal() == 1 && t.k() == 2 {
        SumMethod::Profile
    } else {
        SumMethod::Box
    };
    let radii = [truncation / 4, truncation / 2, truncation];
    let mut profile_vals = Vec::with_capacity(3);
    for &r in &radii {
        let v = match method {
            SumMethod::Direct => direct(&s),
            SumMethod::Profile => profile(&s, r as i64),
            SumMethod::Box => boxed(&s, r as i64)?,
        };
        profile_vals.push((r, v));
    }
    let (v1, v2, v3) = (profile_vals[0].1, profile_vals[1].1, profile_vals[2].1);
    let (d1, d2) = (v2 - v1, v3 - v2);
    let (tail, diverging) = if method == SumMethod::Direct || d2 <= 0.0 {
        (0.0, false)
    } else if d1 <= 0.0 || d2 >= d1 {
        (f64::INFINITY, true)
    } else {
        let q = d2 / d1;
        // Geometric continuation of the doubling increments, doubled for slack
        // in the pre-asymptotic ratio.
        (2.0 * d2 * q / (1.0 - q), false)
    };
    let total_length = t.total_length();
    Ok(TreeSumReport {
        value: v3,
        truncation,
        method,
        profile: profile_vals,
        tail_estimate: tail,
        diverging,
        growth_exponent: if v2 > 0.0 { (v3 / v2).log2() } else { 0.0 },
        total_length,
        bound_exponent: (d * (t.k() - 1)) as f64 - total_length,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i32]) -> Point {
        Point::new(c).unwrap()
    }

    /// Plain loops over every internal configuration in the box.
    fn brute(t: &LengthedTree, leaves: &[Point], rho: i64, center: &[i64]) -> f64 {
        let d = t.d();
        let k = t.k();
        let m = t.internal();
        let n = (2 * rho + 1) as usize;
        let cells = n.pow(d as u32);
        let pos = |i: usize| -> Vec<i64> {
            let mut r = i;
            (0..d)
                .map(|j| {
                    let x = center[j] - rho + (r % n) as i64;
                    r /= n;
                    x
                })
                .collect()
        };
        let mut total = 0.0;
        for combo in 0..cells.pow(m as u32) {
            let mut r = combo;
            let ys: Vec<Vec<i64>> = (0..m)
                .map(|_| {
                    let c = r % cells;
                    r /= cells;
                    pos(c)
                })
                .collect();
            let at = |v: usize| -> Vec<i64> { if v < k { leaves[v].coords().iter().map(|&c| c as i64).collect() } else { ys[v - k].clone() } };
            total += t.edges().iter().map(|&(a, b, l)| ((l1(&at(a), &at(b)) + 1) as f64).powf(l - d as f64)).product::<f64>();
        }
        total
    }

    #[test]
    fn single_edge_is_closed_form() {
        let t = LengthedTree::new(2, 0, 5, vec![(0, 1, 2.0)]).unwrap();
        let r = tree_sum(&t, &[p(&[0; 5]), p(&[3, 2, 0, 0, 0])], 10).unwrap();
        assert_eq!(r.value, 6f64.powi(-3));
        assert_eq!(r.tail_estimate, 0.0);
    }

    #[test]
    fn profile_matches_brute_force() {
        let t = LengthedTree::new(2, 1, 3, vec![(0, 2, 1.5), (1, 2, 0.5)]).unwrap();
        let leaves = [p(&[0, 0, 0]), p(&[3, 1, 0])];
        let r = tree_sum(&t, &leaves, 8).unwrap();
        assert_eq!(r.method, SumMethod::Profile);
        let b = brute(&t, &leaves, 8, &[1, 0, 0]);
        assert!((r.value - b).abs() < 1e-12 * b, "{} vs {b}", r.value);
    }

    #[test]
    fn fft_matches_brute_force() {
        let t = LengthedTree::new(3, 2, 3, vec![(0, 3, 1.0), (1, 3, 2.0), (3, 4, 0.5), (4, 2, 1.5)]).unwrap();
        let leaves = [p(&[0, 0, 0]), p(&[2, 0, 0]), p(&[0, 1, 1])];
        let r = tree_sum(&t, &leaves, 8).unwrap();
        assert_eq!(r.method, SumMethod::Box);
        let b = brute(&t, &leaves, 8, &[1, 0, 0]);
        assert!((r.value - b).abs() < 1e-9 * b, "{} vs {b}", r.value);
        assert!(r.profile.windows(2).all(|w| w[0].1 <= w[1].1));
    }

    #[test]
    fn too_small_truncation() {
        let t = LengthedTree::new(2, 0, 5, vec![(0, 1, 2.0)]).unwrap();
        assert!(matches!(tree_sum(&t, &[p(&[0; 5]), p(&[4, 0, 0, 0, 0])], 7), Err(Error::TruncationTooSmall { .. })));
    }
}
