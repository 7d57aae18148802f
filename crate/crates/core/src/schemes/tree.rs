//! Trees with real edge lengths, their subtree condition, and the rewrite
//! sequence that reduces them to a two-leaf tree.

use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::error::{Error, Result};

const TOL: f64 = 1e-9;

/// Vertices `0..k` are the leaves, `k..k + internal` the summed vertices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LengthedTree {
    k: usize,
    internal: usize,
    d: usize,
    edges: Vec<(usize, usize, f64)>,
}

fn ill(msg: String) -> Error {
    Error::IllFormedTree(msg)
}

impl LengthedTree {
    pub fn new(k: usize, internal: usize, d: usize, edges: Vec<(usize, usize, f64)>) -> Result<LengthedTree> {
        if k < 2 {
            return Err(ill(format!("need at least two leaves, got {k}")));
        }
        if d == 0 {
            return Err(Error::InvalidDimension(d));
        }
        let nv = k + internal;
        if edges.len() + 1 != nv {
            return Err(ill(format!("{} edges on {nv} vertices", edges.len())));
        }
        let mut parent: Vec<usize> = (0..nv).collect();
        fn root(p: &[usize], mut x: usize) -> usize {
            while p[x] != x {
                x = p[x];
            }
            x
        }
        for &(a, b, l) in &edges {
            if a >= nv || b >= nv || a == b {
                return Err(ill(format!("bad edge ({a}, {b})")));
            }
            if !(l.is_finite() && (0.0..d as f64).contains(&l)) {
                return Err(ill(format!("edge ({a}, {b}) has length {l}, outside [0, {d})")));
            }
            let (ra, rb) = (root(&parent, a), root(&parent, b));
            if ra == rb {
                return Err(ill(format!("cycle through ({a}, {b})")));
            }
            parent[ra] = rb;
        }
        let t = LengthedTree { k, internal, d, edges };
        for v in 0..nv {
            let deg = t.degree(v);
            if v < k && deg != 1 {
                return Err(ill(format!("leaf {v} has degree {deg}")));
            }
            if v >= k && deg < 2 {
                return Err(ill(format!("internal vertex {v} has degree {deg}")));
            }
        }
        Ok(t)
    }

    /// Same tree as the scheme with every edge of the given length. The
    /// anchors must all be leaves.
    pub fn from_scheme(s: &Scheme, length: f64, d: usize) -> Result<LengthedTree> {
        LengthedTree::new(s.k, s.m - s.k, d, s.edges.iter().map(|e| (e.from, e.to, length)).collect())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn internal(&self) -> usize {
        self.internal
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn vertices(&self) -> usize {
        self.k + self.internal
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.0 == v || e.1 == v).count()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }

    /// Same tree with internal vertices relabeled by `perm`.
    pub fn relabel_internal(&self, perm: &[usize]) -> Result<LengthedTree> {
        let mut seen = vec![false; self.internal];
        for &p in perm {
            if p >= self.internal || std::mem::replace(&mut seen[p], true) {
                return Err(Error::InvalidArgument("not a permutation of the internal vertices".into()));
            }
        }
        if perm.len() != self.internal {
            return Err(Error::InvalidArgument("not a permutation of the internal vertices".into()));
        }
        let f = |v: usize| if v < self.k { v } else { self.k + perm[v - self.k] };
        LengthedTree::new(self.k, self.internal, self.d, self.edges.iter().map(|&(a, b, l)| (f(a), f(b), l)).collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubtreeCheck {
    pub total_length: f64,
    /// Total length below d(k-1).
    pub total_ok: bool,
    /// Smallest subtree, as edge indices, shorter than d(k1-1) for its k1 leaves.
    pub violation: Option<Vec<usize>>,
    pub violation_leaves: usize,
    pub violation_length: f64,
}

impl SubtreeCheck {
    pub fn passed(&self) -> bool {
        self.total_ok && self.violation.is_none()
    }
}

pub const SUBTREE_GUARD: usize = 16;

/// Checks the total length and every proper subtree (connected, leaves among
/// the original leaves, not the whole tree) carrying at least two leaves.
pub fn check_subtree_condition(t: &LengthedTree) -> Result<SubtreeCheck> {
    let nv = t.vertices();
    if nv > SUBTREE_GUARD {
        return Err(Error::Guard { what: "tree vertices", value: nv as u64, limit: SUBTREE_GUARD as u64 });
    }
    let d = t.d as f64;
    let total = t.total_length();
    let ne = t.edges.len();
    let mut best: Option<(usize, Vec<usize>, usize, f64)> = None;
    for mask in 1u32..(1u32 << ne) - 1 {
        let es: Vec<usize> = (0..ne).filter(|i| mask >> i & 1 == 1).collect();
        let mut deg = vec![0usize; nv];
        for &i in &es {
            deg[t.edges[i].0] += 1;
            deg[t.edges[i].1] += 1;
        }
        let verts = deg.iter().filter(|&&x| x > 0).count();
        if verts != es.len() + 1 {
            continue;
        }
        // A forest with |V| = |E| + 1 on the touched vertices is connected.
        if (0..nv).any(|v| deg[v] == 1 && v >= t.k) {
            continue;
        }
        let k1 = (0..t.k).filter(|&v| deg[v] > 0).count();
        let len: f64 = es.iter().map(|&i| t.edges[i].2).sum();
        if k1 >= 2 && len < d * (k1 - 1) as f64 - TOL && best.as_ref().is_none_or(|b| es.len() < b.0) {
            best = Some((es.len(), es, k1, len));
        }
    }
    let (violation, violation_leaves, violation_length) = match best {
        Some((_, es, k1, len)) => (Some(es), k1, len),
        None => (None, 0, 0.0),
    };
    Ok(SubtreeCheck { total_length: total, total_ok: total < d * (t.k - 1) as f64, violation, violation_leaves, violation_length })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RewriteKind {
    /// A degree-two internal vertex replaced by one edge of length l + l' + delta.
    Contract { vertex: usize, new_length: f64 },
    /// Two leaves on a common vertex replaced by one edge of length l1 + l2 - d
    /// to the kept leaf. Leaves are given by their original labels.
    LeafSplit { kept: usize, dropped: usize, new_length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionStep {
    pub kind: RewriteKind,
    pub tree: LengthedTree,
    /// Original labels of the remaining leaves.
    pub leaves: Vec<usize>,
    pub total_length: f64,
    /// d(k-1) minus the total length.
    pub exponent: f64,
    /// Subtree condition on the rewritten tree, when small enough to check.
    pub conditions_hold: Option<bool>,
}

fn remove_vertex(edges: &mut [(usize, usize, f64)], v: usize) {
    for e in edges.iter_mut() {
        if e.0 > v {
            e.0 -= 1;
        }
        if e.1 > v {
            e.1 -= 1;
        }
    }
}

/// Rewrites the tree down to a single edge between two leaves. Degree-two
/// vertices are contracted first; otherwise two leaves on a common vertex are
/// merged, keeping the lower label.
pub fn reduce_tree(t: &LengthedTree, delta: f64) -> Result<Vec<ReductionStep>> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidArgument(format!("delta must be positive, got {delta}")));
    }
    let d = t.d;
    let df = d as f64;
    let mut cur = t.clone();
    let mut leaves: Vec<usize> = (0..t.k).collect();
    let mut steps = Vec::new();
    loop {
        let kind;
        let mut edges = cur.edges.clone();
        let (mut k, mut internal) = (cur.k, cur.internal);
        if let Some(v) = (k..k + internal).find(|&v| cur.degree(v) == 2) {
            let inc: Vec<usize> = (0..edges.len()).filter(|&i| edges[i].0 == v || edges[i].1 == v).collect();
            let other = |i: usize| if edges[i].0 == v { edges[i].1 } else { edges[i].0 };
            let (a, b) = (other(inc[0]), other(inc[1]));
            let len = edges[inc[0]].2 + edges[inc[1]].2 + delta;
            if len >= df {
                return Err(Error::Reduction(format!("contracting vertex {v} gives length {len} >= {d}")));
            }
            edges.remove(inc[1]);
            edges.remove(inc[0]);
            edges.push((a, b, len));
            remove_vertex(&mut edges, v);
            internal -= 1;
            kind = RewriteKind::Contract { vertex: v, new_length: len };
        } else if k >= 3 {
            let mut found = None;
            'outer: for v in k..k + internal {
                let ls: Vec<usize> = (0..edges.len()).filter(|&i| (edges[i].0 == v && edges[i].1 < k) || (edges[i].1 == v && edges[i].0 < k)).collect();
                for x in 0..ls.len() {
                    for y in x + 1..ls.len() {
                        let len = edges[ls[x]].2 + edges[ls[y]].2 - df;
                        if len >= 0.0 {
                            found = Some((v, ls[x], ls[y], len));
                            break 'outer;
                        }
                    }
                }
            }
            let Some((v, ea, eb, len)) = found else {
                return Err(Error::Reduction("no contraction or admissible leaf split applies".into()));
            };
            let leaf_of = |i: usize| if edges[i].0 == v { edges[i].1 } else { edges[i].0 };
            let (la, lb) = (leaf_of(ea), leaf_of(eb));
            let (keep, drop) = (la.min(lb), la.max(lb));
            edges.retain(|e| !((e.0 == v || e.1 == v) && (e.0 == la || e.1 == la || e.0 == lb || e.1 == lb)));
            edges.push((keep, v, len));
            remove_vertex(&mut edges, drop);
            kind = RewriteKind::LeafSplit { kept: leaves[keep], dropped: leaves[drop], new_length: len };
            leaves.remove(drop);
            k -= 1;
        } else {
            break;
        }
        cur = LengthedTree::new(k, internal, d, edges)?;
        let total = cur.total_length();
        if total >= df * (k - 1) as f64 {
            return Err(Error::Reduction(format!("total length {total} reached d(k-1) = {}; delta too large", df * (k - 1) as f64)));
        }
        let conditions_hold = (cur.vertices() <= SUBTREE_GUARD).then(|| check_subtree_condition(&cur).map(|c| c.passed()).unwrap_or(false));
        steps.push(ReductionStep {
            kind,
            tree: cur.clone(),
            leaves: leaves.clone(),
            total_length: total,
            exponent: df * (k - 1) as f64 - total,
            conditions_hold,
        });
    }
    Ok(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_d() {
        assert!(LengthedTree::new(2, 0, 5, vec![(0, 1, 5.0)]).is_err());
        assert!(LengthedTree::new(2, 0, 5, vec![(0, 1, 4.99)]).is_ok());
    }

    #[test]
    fn chain_contracts_to_one_edge() {
        let t = LengthedTree::new(2, 1, 5, vec![(0, 2, 1.0), (2, 1, 1.0)]).unwrap();
        let steps = reduce_tree(&t, 0.1).unwrap();
        assert_eq!(steps.len(), 1);
        assert!((steps[0].tree.edges()[0].2 - 2.1).abs() < 1e-12);
    }

    #[test]
    fn two_leaf_path_passes() {
        let t = LengthedTree::new(2, 1, 5, vec![(0, 2, 2.0), (2, 1, 2.0)]).unwrap();
        assert!(check_subtree_condition(&t).unwrap().passed());
    }

    #[test]
    fn star_split_bookkeeping() {
        // Three leaves on one vertex, lengths 3.5, 3.5, 2.5 in d = 5: total 9.5 < 10.
        let t = LengthedTree::new(3, 1, 5, vec![(0, 3, 3.5), (1, 3, 3.5), (2, 3, 2.5)]).unwrap();
        assert!(check_subtree_condition(&t).unwrap().passed());
        let steps = reduce_tree(&t, 0.05).unwrap();
        let mut prev = t.total_length();
        let mut k = 3;
        for s in &steps {
            match s.kind {
                RewriteKind::Contract { .. } => {
                    assert_eq!(s.tree.k(), k);
                    assert!((s.total_length - prev - 0.05).abs() < 1e-12);
                }
                RewriteKind::LeafSplit { .. } => {
                    assert_eq!(s.tree.k(), k - 1);
                    assert!((s.total_length - prev + 5.0).abs() < 1e-12);
                    k -= 1;
                }
            }
            assert_eq!(s.conditions_hold, Some(true));
            prev = s.total_length;
        }
        let last = steps.last().unwrap();
        assert_eq!(last.tree.k(), 2);
        assert_eq!(last.tree.internal(), 0);
    }

    #[test]
    fn short_pair_is_a_violation() {
        // Leaves 0 and 1 hang on vertex 4 with total 1 < d.
        let t = LengthedTree::new(4, 2, 3, vec![(0, 4, 0.5), (1, 4, 0.5), (4, 5, 2.5), (5, 2, 2.5), (5, 3, 2.5)]).unwrap();
        let c = check_subtree_condition(&t).unwrap();
        assert!(c.total_ok);
        assert_eq!(c.violation.as_deref(), Some(&[0, 1][..]));
        assert_eq!(c.violation_leaves, 2);
    }
}
