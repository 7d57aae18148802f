//! Green's function of the walk killed on leaving an l-infinity box, from the
//! spectral decomposition of the one-dimensional killed generator.
//!
//! The discrete-time Green function equals the time integral of the
//! continuous-time (rate 1) transition kernel, whose coordinates move
//! independently at rate 1/d. In a box of side N = 2ρ+1 each coordinate has
//! eigenpairs φ_k(j) = sqrt(2/(N+1)) sin(πk(j+1)/(N+1)),
//! λ_k = (1 - cos(πk/(N+1)))/d, so the d-dimensional kernel is a product of
//! one-dimensional tables evaluated at quadrature nodes in time.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for j in 2..=n {
                let p2 = ((2 * j - 1) as f64 * z * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Time nodes: [0,1] and doubling panels up to where the slowest mode has
/// decayed by `e^-decay`.
fn time_nodes(slowest_rate: f64, order: usize, decay: f64) -> (Vec<f64>, Vec<f64>) {
    let (gx, gw) = gauss_legendre(order);
    let t_max = decay / slowest_rate;
    let mut edges = vec![0.0, 1.0];
    while *edges.last().unwrap() < t_max {
        let e = *edges.last().unwrap() * 2.0;
        edges.push(e);
    }
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        let h = 0.5 * (b - a);
        for (x, wt) in gx.iter().zip(&gw) {
            nodes.push(a + h * (x + 1.0));
            weights.push(h * wt);
        }
    }
    (nodes, weights)
}

pub struct BoxGreen {
    d: usize,
    lo: i32,
    width: usize,
    nodes: usize,
    weights: Vec<f64>,
    /// `table[(a - lo) * width + (b - lo)]` holds the 1D kernel at every node.
    table: Vec<f64>,
}

pub const DEFAULT_ORDER: usize = 24;
const DECAY: f64 = 42.0;
const TABLE_LIMIT: u64 = 1 << 27;

impl BoxGreen {
    /// Kernel for offsets (relative to the box center) in `[lo, hi]` on every axis.
    pub fn new(d: usize, rho: u64, lo: i32, hi: i32, order: usize) -> Result<BoxGreen> {
        let rho_i = rho as i32;
        if lo < -rho_i || hi > rho_i || lo > hi {
            return Err(Error::InvalidArgument(format!("offset range [{lo},{hi}] outside box of radius {rho}")));
        }
        let n = 2 * rho as usize + 1;
        let np1 = (n + 1) as f64;
        let slowest = 1.0 - (PI / np1).cos();
        let (nodes, weights) = time_nodes(slowest, order, DECAY);
        let width = (hi - lo + 1) as usize;
        let cells = (width * width * nodes.len()) as u64;
        if cells > TABLE_LIMIT {
            return Err(Error::Memory { cells, limit: TABLE_LIMIT });
        }
        let norm = (2.0 / np1).sqrt();
        let lambda: Vec<f64> = (1..=n).map(|k| (1.0 - (PI * k as f64 / np1).cos()) / d as f64).collect();
        let phi: Vec<Vec<f64>> = (lo..=hi)
            .map(|off| {
                let j = (off + rho_i) as f64;
                (1..=n).map(|k| norm * (PI * k as f64 * (j + 1.0) / np1).sin()).collect()
            })
            .collect();
        let nn = nodes.len();
        let mut table = vec![0.0; width * width * nn];
        let mut decay = vec![0.0; n];
        let mut scaled = vec![0.0; n];
        for (m, &t) in nodes.iter().enumerate() {
            for k in 0..n {
                decay[k] = (-lambda[k] * t).exp();
            }
            for a in 0..width {
                for k in 0..n {
                    scaled[k] = phi[a][k] * decay[k];
                }
                for b in a..width {
                    let v: f64 = scaled.iter().zip(&phi[b]).map(|(x, y)| x * y).sum();
                    table[(a * width + b) * nn + m] = v;
                    table[(b * width + a) * nn + m] = v;
                }
            }
        }
        Ok(BoxGreen { d, lo, width, nodes: nn, weights, table })
    }

    /// g(a, b) for offsets relative to the box center.
    pub fn green(&self, a: &[i32], b: &[i32]) -> f64 {
        let nn = self.nodes;
        let mut rows = [0usize; crate::lattice::MAX_DIM];
        for i in 0..self.d {
            let ia = (a[i] - self.lo) as usize;
            let ib = (b[i] - self.lo) as usize;
            rows[i] = (ia * self.width + ib) * nn;
        }
        let mut s = 0.0;
        for m in 0..nn {
            let mut p = self.weights[m];
            for &r in &rows[..self.d] {
                p *= self.table[r + m];
            }
            s += p;
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_rule_integrates_polynomials() {
        let (x, w) = gauss_legendre(10);
        let s: f64 = w.iter().sum();
        assert!((s - 2.0).abs() < 1e-14);
        let m4: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(4)).sum();
        assert!((m4 - 0.4).abs() < 1e-14);
        let m18: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(18)).sum();
        assert!((m18 - 2.0 / 19.0).abs() < 1e-13);
    }

    #[test]
    fn one_dimensional_box_matches_linear_algebra() {
        // (I - P)^{-1} on the 5^3 box.
        let rho = 2u64;
        let g = BoxGreen::new(3, rho, -2, 2, DEFAULT_ORDER).unwrap();
        let n = 5usize;
        let idx = |v: [i32; 3]| -> usize {
            ((v[0] + 2) as usize * n + (v[1] + 2) as usize) * n + (v[2] + 2) as usize
        };
        let size = n * n * n;
        let mut m = nalgebra::DMatrix::<f64>::identity(size, size);
        for x in -2..=2 {
            for y in -2..=2 {
                for z in -2..=2 {
                    let v = [x, y, z];
                    for a in 0..3 {
                        for s in [-1, 1] {
                            let mut w: [i32; 3] = v;
                            w[a] += s;
                            if w[a].abs() <= 2 {
                                m[(idx(v), idx(w))] -= 1.0 / 6.0;
                            }
                        }
                    }
                }
            }
        }
        let inv = m.try_inverse().unwrap();
        for (a, b) in [([0, 0, 0], [0, 0, 0]), ([1, -1, 0], [0, 2, -2]), ([2, 2, 2], [-2, -2, -2])] {
            let exact = inv[(idx(a), idx(b))];
            let spec = g.green(&a, &b);
            assert!((exact - spec).abs() < 1e-12 * exact.max(1.0), "{a:?} {b:?}: {exact} vs {spec}");
        }
    }

    #[test]
    fn large_box_recovers_the_lattice_return_constant() {
        // d=5 return probability 0.135178..., so g(0,0) = 1/(1-p).
        let g = BoxGreen::new(5, 400, 0, 0, DEFAULT_ORDER).unwrap();
        let g00 = g.green(&[0; 5], &[0; 5]);
        assert!((g00 - 1.0 / (1.0 - 0.135178)).abs() < 2e-4, "{g00}");
    }

    #[test]
    fn order_refinement_is_stable() {
        let a = BoxGreen::new(5, 64, -6, 6, DEFAULT_ORDER).unwrap();
        let b = BoxGreen::new(5, 64, -6, 6, 2 * DEFAULT_ORDER).unwrap();
        for (x, y) in [([0; 5], [0; 5]), ([6, 0, 0, 0, 0], [-6, 0, 0, 0, 0]), ([1, 2, 3, 0, 0], [-1, 0, 0, 0, 4])] {
            let (p, q) = (a.green(&x, &y), b.green(&x, &y));
            assert!((p - q).abs() < 1e-12 * q, "{p} {q}");
        }
    }
}
