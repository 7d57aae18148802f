//! Connection schemes: labeled trees with typed, oriented edges recording
//! which trajectory carries each link of a connection.
//!
//! Vertices are `0..m`; vertices `0..k` are the anchors of the marked points.
//! Types are `0..n`, type `h` standing for the `h`-th trajectory.

mod sum;
mod tree;

pub use sum::{tree_sum, TreeSumReport, SumMethod, CELL_LIMIT};
pub use tree::{check_subtree_condition, reduce_tree, LengthedTree, ReductionStep, RewriteKind, SubtreeCheck};

use std::collections::BTreeSet;
use std::fmt;

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::connectivity::{connects_strictly, extract_strict, Adjacency, MarkedPoints};
use crate::error::{Error, Result};
use crate::lattice::Point;
use crate::sampler::LabeledTrajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SchemeEdge {
    pub from: usize,
    pub to: usize,
    #[serde(rename = "type")]
    pub ty: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Scheme {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    pub edges: Vec<SchemeEdge>,
}

impl Scheme {
    pub fn new(k: usize, n: usize, m: usize, edges: Vec<(usize, usize, usize)>) -> Scheme {
        Scheme { k, n, m, edges: edges.into_iter().map(|(from, to, ty)| SchemeEdge { from, to, ty }).collect() }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.edges.iter().filter(|e| e.from == v || e.to == v).count()
    }

    /// Vertices of the oriented path formed by type `h`, or `None` if those
    /// edges do not form one.
    pub fn type_path(&self, h: usize) -> Option<Vec<usize>> {
        let es: Vec<&SchemeEdge> = self.edges.iter().filter(|e| e.ty == h).collect();
        if es.is_empty() {
            return None;
        }
        let mut next = vec![usize::MAX; self.m];
        let mut has_in = vec![false; self.m];
        for e in &es {
            if e.from >= self.m || e.to >= self.m || next[e.from] != usize::MAX || has_in[e.to] {
                return None;
            }
            next[e.from] = e.to;
            has_in[e.to] = true;
        }
        let start = es.iter().map(|e| e.from).find(|&v| !has_in[v])?;
        let mut path = vec![start];
        let mut v = start;
        while next[v] != usize::MAX {
            v = next[v];
            path.push(v);
            if path.len() > es.len() + 1 {
                return None;
            }
        }
        (path.len() == es.len() + 1).then_some(path)
    }

    /// Orients every type path from its smaller endpoint to the larger one.
    fn canonical_orientation(&mut self) {
        for h in 0..self.n {
            let idx: Vec<usize> = (0..self.edges.len()).filter(|&i| self.edges[i].ty == h).collect();
            let mut deg = vec![0usize; self.m];
            for &i in &idx {
                deg[self.edges[i].from] += 1;
                deg[self.edges[i].to] += 1;
            }
            let Some(start) = (0..self.m).find(|&v| deg[v] == 1) else { continue };
            let mut v = start;
            let mut left = idx.clone();
            while let Some(pos) = left.iter().position(|&i| self.edges[i].from == v || self.edges[i].to == v) {
                let e = &mut self.edges[left.swap_remove(pos)];
                if e.from != v {
                    std::mem::swap(&mut e.from, &mut e.to);
                }
                v = e.to;
            }
        }
    }

    fn key(&self) -> Vec<SchemeEdge> {
        let mut v = self.edges.clone();
        v.sort_unstable();
        v
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "violation", rename_all = "snake_case")]
pub enum Violation {
    VertexCount { m: usize, expected: usize },
    EdgeOutOfRange { edge: usize },
    NotATree { reason: String },
    /// Condition (i): edges of one type are not a single oriented path.
    TypeNotPath { ty: usize, vertices: Vec<usize> },
    /// Condition (ii) at an anchor: incident edges carry several types.
    AnchorTypes { vertex: usize, types: Vec<usize> },
    /// Condition (ii) at a non-anchor: incident edges do not carry exactly two types.
    InternalTypes { vertex: usize, types: Vec<usize> },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::VertexCount { m, expected } => write!(f, "vertex count {m}, expected n + k - 1 = {expected}"),
            Violation::EdgeOutOfRange { edge } => write!(f, "edge {edge} has an out-of-range endpoint or type"),
            Violation::NotATree { reason } => write!(f, "not a tree: {reason}"),
            Violation::TypeNotPath { ty, vertices } => write!(f, "condition (i): type {ty} does not form an oriented path (vertices {vertices:?})"),
            Violation::AnchorTypes { vertex, types } => write!(f, "condition (ii): anchor {vertex} has types {types:?}"),
            Violation::InternalTypes { vertex, types } => write!(f, "condition (ii): vertex {vertex} needs exactly two types, has {types:?}"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeValidation {
    pub violations: Vec<Violation>,
}

impl SchemeValidation {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn validate_scheme(s: &Scheme) -> SchemeValidation {
    let mut out = Vec::new();
    if s.m != s.n + s.k - 1 || s.k == 0 {
        out.push(Violation::VertexCount { m: s.m, expected: (s.n + s.k).saturating_sub(1) });
    }
    let mut ok_range = true;
    for (i, e) in s.edges.iter().enumerate() {
        if e.from >= s.m || e.to >= s.m || e.ty >= s.n || e.from == e.to {
            out.push(Violation::EdgeOutOfRange { edge: i });
            ok_range = false;
        }
    }
    if !ok_range {
        return SchemeValidation { violations: out };
    }
    if s.edges.len() + 1 != s.m {
        out.push(Violation::NotATree { reason: format!("{} edges on {} vertices", s.edges.len(), s.m) });
    } else {
        let mut parent: Vec<usize> = (0..s.m).collect();
        fn root(p: &mut [usize], mut x: usize) -> usize {
            while p[x] != x {
                x = p[x];
            }
            x
        }
        for e in &s.edges {
            let (a, b) = (root(&mut parent, e.from), root(&mut parent, e.to));
            if a == b {
                out.push(Violation::NotATree { reason: format!("cycle through {} and {}", e.from, e.to) });
                break;
            }
            parent[a] = b;
        }
    }
    for h in 0..s.n {
        if s.type_path(h).is_none() {
            let vs: BTreeSet<usize> = s.edges.iter().filter(|e| e.ty == h).flat_map(|e| [e.from, e.to]).collect();
            out.push(Violation::TypeNotPath { ty: h, vertices: vs.into_iter().collect() });
        }
    }
    for v in 0..s.m {
        let types: BTreeSet<usize> = s.edges.iter().filter(|e| e.from == v || e.to == v).map(|e| e.ty).collect();
        let types: Vec<usize> = types.into_iter().collect();
        if v < s.k {
            if types.len() > 1 {
                out.push(Violation::AnchorTypes { vertex: v, types });
            }
        } else if types.len() != 2 {
            out.push(Violation::InternalTypes { vertex: v, types });
        }
    }
    SchemeValidation { violations: out }
}

pub const ENUM_GUARD: usize = 10;
pub const MAX_CATALOG: usize = 2_000_000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCounts {
    pub k: usize,
    pub n: usize,
    pub m: usize,
    /// Labeled trees with labeled types, each type path in one orientation.
    pub labeled: u64,
    /// Counting both orientations of every type path.
    pub oriented: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemeCatalog {
    pub counts: SchemeCounts,
    /// Classes under relabeling of non-anchor vertices and of types, when
    /// small enough to compute.
    pub iso_classes: Option<u64>,
    /// One scheme per labeled tree and type function, canonically oriented.
    pub schemes: Vec<Scheme>,
}

fn check_enum_args(k: usize, n: usize) -> Result<usize> {
    if k < 2 || n < 1 {
        return Err(Error::InvalidArgument(format!("schemes need k >= 2 and n >= 1, got k={k}, n={n}")));
    }
    if k + n > ENUM_GUARD {
        return Err(Error::Guard { what: "k + n", value: (k + n) as u64, limit: ENUM_GUARD as u64 });
    }
    Ok(n + k - 1)
}

fn prufer_trees(m: usize, k: usize, visit: &mut dyn FnMut(&[(usize, usize)])) {
    if m == 2 {
        visit(&[(0, 1)]);
        return;
    }
    // Degree is one plus the multiplicity in the sequence: anchors at most
    // two, other vertices between two and four.
    fn rec(seq: &mut Vec<usize>, cnt: &mut [usize], m: usize, k: usize, visit: &mut dyn FnMut(&[(usize, usize)])) {
        if seq.len() == m - 2 {
            if (k..m).all(|v| cnt[v] >= 1) {
                visit(&decode_prufer(seq, m));
            }
            return;
        }
        let left = m - 2 - seq.len();
        let missing = (k..m).filter(|&v| cnt[v] == 0).count();
        if missing > left {
            return;
        }
        for v in 0..m {
            let cap = if v < k { 1 } else { 3 };
            if cnt[v] < cap {
                cnt[v] += 1;
                seq.push(v);
                rec(seq, cnt, m, k, visit);
                seq.pop();
                cnt[v] -= 1;
            }
        }
    }
    let mut cnt = vec![0; m];
    rec(&mut Vec::new(), &mut cnt, m, k, visit);
}

fn decode_prufer(seq: &[usize], m: usize) -> Vec<(usize, usize)> {
    let mut deg = vec![1usize; m];
    for &v in seq {
        deg[v] += 1;
    }
    let mut edges = Vec::with_capacity(m - 1);
    for &v in seq {
        let leaf = (0..m).find(|&u| deg[u] == 1).unwrap();
        edges.push((leaf.min(v), leaf.max(v)));
        deg[leaf] -= 1;
        deg[v] -= 1;
    }
    let rest: Vec<usize> = (0..m).filter(|&u| deg[u] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Type assignments satisfying (i) and (ii) on a fixed tree. With
/// `canonical`, types appear in increasing order along the edge list, which
/// picks one representative per relabeling of types.
fn type_assignments(tree: &[(usize, usize)], m: usize, k: usize, n: usize, canonical: bool, visit: &mut dyn FnMut(&[usize])) {
    struct St<'a> {
        tree: &'a [(usize, usize)],
        m: usize,
        k: usize,
        n: usize,
        canonical: bool,
        ty: Vec<usize>,
        at: Vec<Vec<usize>>,
    }
    fn ok_at(st: &St, v: usize, t: usize) -> bool {
        let cur = &st.at[v];
        if v < st.k {
            return cur.iter().all(|&x| x == t);
        }
        let same = cur.iter().filter(|&&x| x == t).count();
        if same >= 2 {
            return false;
        }
        let mut distinct: Vec<usize> = cur.clone();
        distinct.push(t);
        distinct.sort_unstable();
        distinct.dedup();
        distinct.len() <= 2
    }
    fn finish(st: &St) -> bool {
        for v in st.k..st.m {
            let mut d = st.at[v].clone();
            d.sort_unstable();
            d.dedup();
            if d.len() != 2 {
                return false;
            }
        }
        // Every type a nonempty connected edge set; with at most two edges of a
        // type per vertex that makes it a path.
        for h in 0..st.n {
            let es: Vec<(usize, usize)> = st.tree.iter().zip(&st.ty).filter(|(_, &t)| t == h).map(|(e, _)| *e).collect();
            if es.is_empty() {
                return false;
            }
            let mut seen = vec![es[0].0, es[0].1];
            let mut grew = true;
            let mut used = vec![false; es.len()];
            used[0] = true;
            while grew {
                grew = false;
                for (i, &(a, b)) in es.iter().enumerate() {
                    if !used[i] && (seen.contains(&a) || seen.contains(&b)) {
                        used[i] = true;
                        seen.push(a);
                        seen.push(b);
                        grew = true;
                    }
                }
            }
            if used.iter().any(|u| !u) {
                return false;
            }
        }
        true
    }
    fn rec(st: &mut St, i: usize, next_new: usize, visit: &mut dyn FnMut(&[usize])) {
        if i == st.tree.len() {
            if (!st.canonical || next_new == st.n) && finish(st) {
                visit(&st.ty);
            }
            return;
        }
        let (a, b) = st.tree[i];
        let hi = if st.canonical { (next_new + 1).min(st.n) } else { st.n };
        for t in 0..hi {
            if ok_at(st, a, t) && ok_at(st, b, t) {
                st.ty.push(t);
                st.at[a].push(t);
                st.at[b].push(t);
                rec(st, i + 1, next_new.max(t + 1), visit);
                st.at[b].pop();
                st.at[a].pop();
                st.ty.pop();
            }
        }
    }
    let mut st = St { tree, m, k, n, canonical, ty: Vec::new(), at: vec![Vec::new(); m] };
    rec(&mut st, 0, 0, visit);
}

fn build_scheme(tree: &[(usize, usize)], ty: &[usize], k: usize, n: usize, m: usize) -> Scheme {
    let mut s = Scheme::new(k, n, m, tree.iter().zip(ty).map(|(&(a, b), &t)| (a, b, t)).collect());
    s.canonical_orientation();
    s
}

fn factorial(n: usize) -> u64 {
    (1..=n as u64).product()
}

/// Counts schemes without materializing them.
pub fn count_schemes(k: usize, n: usize) -> Result<SchemeCounts> {
    let m = check_enum_args(k, n)?;
    let mut reps: u64 = 0;
    prufer_trees(m, k, &mut |tree| type_assignments(tree, m, k, n, true, &mut |_| reps += 1));
    let labeled = reps * factorial(n);
    Ok(SchemeCounts { k, n, m, labeled, oriented: labeled << n })
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if cur.len() == used.len() {
            out.push(cur.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                cur.push(i);
                rec(cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

fn iso_key(s: &Scheme, perm: &[usize]) -> Vec<(usize, usize, usize)> {
    let relabel = |v: usize| if v < s.k { v } else { s.k + perm[v - s.k] };
    let mut es: Vec<(usize, usize, usize)> = s
        .edges
        .iter()
        .map(|e| {
            let (a, b) = (relabel(e.from), relabel(e.to));
            (a.min(b), a.max(b), e.ty)
        })
        .collect();
    es.sort_unstable();
    let mut map = vec![usize::MAX; s.n];
    let mut next = 0;
    for e in es.iter_mut() {
        if map[e.2] == usize::MAX {
            map[e.2] = next;
            next += 1;
        }
        e.2 = map[e.2];
    }
    es
}

/// All labeled schemes with `k` anchors and `n` types.
pub fn enumerate_schemes(k: usize, n: usize) -> Result<SchemeCatalog> {
    let counts = count_schemes(k, n)?;
    if counts.labeled > MAX_CATALOG as u64 {
        return Err(Error::Guard { what: "scheme catalog size", value: counts.labeled, limit: MAX_CATALOG as u64 });
    }
    let m = counts.m;
    let mut reps = Vec::new();
    prufer_trees(m, k, &mut |tree| type_assignments(tree, m, k, n, true, &mut |ty| reps.push(build_scheme(tree, ty, k, n, m))));

    let perms = permutations(n);
    let mut seen: FxHashSet<Vec<SchemeEdge>> = FxHashSet::default();
    let mut schemes = Vec::with_capacity(counts.labeled as usize);
    for r in &reps {
        for p in &perms {
            let mut s = r.clone();
            for e in s.edges.iter_mut() {
                e.ty = p[e.ty];
            }
            s.canonical_orientation();
            if seen.insert(s.key()) {
                schemes.push(s);
            }
        }
    }
    debug_assert_eq!(schemes.len() as u64, counts.labeled);

    let internal = m - k;
    let iso_classes = (internal <= 6 && reps.len() <= 100_000).then(|| {
        let vperms = permutations(internal);
        let keys: FxHashSet<Vec<(usize, usize, usize)>> =
            reps.iter().map(|r| vperms.iter().map(|p| iso_key(r, p)).min().unwrap()).collect();
        keys.len() as u64
    });
    Ok(SchemeCatalog { counts, iso_classes, schemes })
}

/// Total-length exponent of the all-lengths-2 tree of a scheme.
pub fn scheme_bound_exponent(s: &Scheme, d: usize, eps: f64) -> f64 {
    (d * (s.k - 1)) as f64 - 2.0 * (s.m - 1) as f64 + eps
}

/// Anchor positions for every vertex, and for every type the position in the
/// trajectory list of the trajectory carrying it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorAssignment {
    pub y: Vec<Point>,
    pub carriers: Vec<usize>,
}

/// Condition (iii): every type path is visited in order by its trajectory.
/// Indices are matched greedily at the earliest admissible time.
pub fn condition_iii_check(s: &Scheme, anchors: &AnchorAssignment, trajs: &[&LabeledTrajectory]) -> bool {
    if anchors.y.len() != s.m || anchors.carriers.len() != s.n {
        return false;
    }
    (0..s.n).all(|h| {
        let Some(path) = s.type_path(h) else { return false };
        let Some(t) = trajs.get(anchors.carriers[h]) else { return false };
        visit_times(&t.sequence(), &path.iter().map(|&a| anchors.y[a]).collect::<Vec<_>>()).is_some()
    })
}

fn visit_times(seq: &[Point], targets: &[Point]) -> Option<Vec<usize>> {
    let mut pos = 0;
    let mut out = Vec::with_capacity(targets.len());
    for y in targets {
        pos += seq[pos..].iter().position(|p| p == y)?;
        out.push(pos);
    }
    Some(out)
}

struct Build {
    y: Vec<Point>,
    edges: Vec<SchemeEdge>,
    carriers: Vec<usize>,
}

impl Build {
    fn scheme(&self, k: usize) -> Scheme {
        Scheme { k, n: self.carriers.len(), m: self.y.len(), edges: self.edges.clone() }
    }

    fn push_edge(&mut self, a: usize, b: usize, ty: usize, seqs: &[Vec<Point>]) {
        let seq = &seqs[self.carriers[ty]];
        let first = seq.iter().position(|p| *p == self.y[a]).unwrap();
        let last = seq.iter().rposition(|p| *p == self.y[b]).unwrap();
        let (from, to) = if first <= last { (a, b) } else { (b, a) };
        self.edges.push(SchemeEdge { from, to, ty });
    }
}

fn common_point(a: &LabeledTrajectory, b: &LabeledTrajectory) -> Option<Point> {
    a.trace.points().iter().find(|p| b.trace.contains(p)).copied()
}

/// Shortest chain through `pool` from trajectories containing `from` to any
/// trajectory satisfying `goal`, as positions in `trajs`.
fn chain(trajs: &[&LabeledTrajectory], pool: &[usize], from: &Point, goal: &dyn Fn(usize) -> bool) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; trajs.len()];
    let mut frontier: Vec<usize> = pool.iter().copied().filter(|&i| trajs[i].trace.contains(from)).collect();
    for &i in &frontier {
        prev[i] = i;
    }
    while !frontier.is_empty() {
        if let Some(&hit) = frontier.iter().find(|&&i| goal(i)) {
            let mut out = vec![hit];
            let mut v = hit;
            while prev[v] != v {
                v = prev[v];
                out.push(v);
            }
            out.reverse();
            return Some(out);
        }
        let mut next = Vec::new();
        for &i in &frontier {
            for &j in pool {
                if prev[j] == usize::MAX && trajs[i].trace.intersects(&trajs[j].trace) {
                    prev[j] = i;
                    next.push(j);
                }
            }
        }
        frontier = next;
    }
    None
}

fn not_strict(what: &str) -> Error {
    Error::NotStrictlyConnected(what.to_string())
}

fn build(trajs: &[&LabeledTrajectory], seqs: &[Vec<Point>], pts: &[Point], family: &[usize]) -> Result<Build> {
    let k = pts.len();
    if k == 2 {
        let goal = |i: usize| trajs[i].trace.contains(&pts[1]);
        let path = chain(trajs, family, &pts[0], &goal).ok_or_else(|| not_strict("marked points are not connected"))?;
        if path.len() != family.len() {
            return Err(not_strict("a shorter chain connects the two points"));
        }
        let mut b = Build { y: vec![pts[0], pts[1]], edges: Vec::new(), carriers: path.clone() };
        let mut verts = vec![0];
        for w in path.windows(2) {
            let y = common_point(trajs[w[0]], trajs[w[1]]).unwrap();
            verts.push(b.y.len());
            b.y.push(y);
        }
        verts.push(1);
        for (t, w) in verts.windows(2).enumerate() {
            b.push_edge(w[0], w[1], t, seqs);
        }
        return Ok(b);
    }

    let sub: Vec<&LabeledTrajectory> = family.iter().map(|&i| trajs[i]).collect();
    let head = MarkedPoints::new(pts[..k - 1].to_vec())?;
    let keep = extract_strict(&sub, &head, Adjacency::Shared).ok_or_else(|| not_strict("leading points are not connected"))?;
    let inner: Vec<usize> = keep.iter().map(|&j| family[j]).collect();
    let prev = build(trajs, seqs, &pts[..k - 1], &inner)?;

    // Re-index: anchor k-1 is the new marked point, old non-anchors shift up.
    let shift = |v: usize| if v < k - 1 { v } else { v + 1 };
    let mut b = Build {
        y: pts[..k - 1].iter().copied().chain([pts[k - 1]]).chain(prev.y[k - 1..].iter().copied()).collect(),
        edges: prev.edges.iter().map(|e| SchemeEdge { from: shift(e.from), to: shift(e.to), ty: e.ty }).collect(),
        carriers: prev.carriers.clone(),
    };
    let rest: Vec<usize> = family.iter().copied().filter(|i| !inner.contains(i)).collect();

    let (plug, host) = if rest.is_empty() {
        let h = (0..b.carriers.len())
            .find(|&h| trajs[b.carriers[h]].trace.contains(&pts[k - 1]))
            .ok_or_else(|| not_strict("last point is on no trajectory"))?;
        (k - 1, h)
    } else {
        let goal = |i: usize| inner.iter().any(|&g| trajs[i].trace.intersects(&trajs[g].trace));
        let path = chain(trajs, &rest, &pts[k - 1], &goal).ok_or_else(|| not_strict("last point is not connected"))?;
        if path.len() != rest.len() {
            return Err(not_strict("a shorter chain reaches the last point"));
        }
        // path runs from the trajectory at x_k to the one meeting the old family.
        let last = *path.last().unwrap();
        let (y_new, host_traj) = trajs[last]
            .trace
            .points()
            .iter()
            .find_map(|p| inner.iter().find(|&&g| trajs[g].trace.contains(p)).map(|&g| (*p, g)))
            .unwrap();
        let host = b.carriers.iter().position(|&c| c == host_traj).unwrap();
        let start = b.y.len();
        b.y.push(y_new);
        let mut verts = vec![start];
        for w in path.windows(2).rev() {
            verts.push(b.y.len());
            b.y.push(common_point(trajs[w[1]], trajs[w[0]]).unwrap());
        }
        verts.push(k - 1);
        for (i, w) in verts.windows(2).enumerate() {
            let t = b.carriers.len();
            b.carriers.push(path[path.len() - 1 - i]);
            b.push_edge(w[0], w[1], t, seqs);
        }
        (start, host)
    };

    // Splice the plug vertex into the host type's oriented path.
    let s = b.scheme(k);
    let hp = s.type_path(host).ok_or_else(|| Error::Reduction("host type is not a path".into()))?;
    let seq = &seqs[b.carriers[host]];
    let times = visit_times(seq, &hp.iter().map(|&a| b.y[a]).collect::<Vec<_>>())
        .ok_or_else(|| Error::Reduction(format!("no parametrization of trajectory {}", trajs[b.carriers[host]].id)))?;
    let t_new = seq.iter().position(|p| *p == b.y[plug]).unwrap();
    if t_new <= times[0] {
        b.edges.push(SchemeEdge { from: plug, to: hp[0], ty: host });
    } else if t_new > *times.last().unwrap() {
        b.edges.push(SchemeEdge { from: *hp.last().unwrap(), to: plug, ty: host });
    } else {
        let i = (0..times.len() - 1).find(|&i| times[i] < t_new && t_new <= times[i + 1]).unwrap();
        let at = b.edges.iter().position(|e| e.ty == host && e.from == hp[i] && e.to == hp[i + 1]).unwrap();
        b.edges[at] = SchemeEdge { from: hp[i], to: plug, ty: host };
        b.edges.push(SchemeEdge { from: plug, to: hp[i + 1], ty: host });
    }
    Ok(b)
}

/// Builds a scheme and anchors from trajectories that strictly connect the
/// marked points, inserting one marked point at a time.
pub fn scheme_from_witness(trajs: &[&LabeledTrajectory], points: &MarkedPoints) -> Result<(Scheme, AnchorAssignment)> {
    if points.k() < 2 {
        return Err(Error::InvalidArgument("a scheme needs at least two marked points".into()));
    }
    let ids: FxHashSet<u64> = trajs.iter().map(|t| t.id).collect();
    if ids.len() != trajs.len() {
        return Err(Error::InvalidArgument("trajectories must be distinct".into()));
    }
    if !connects_strictly(trajs, points, Adjacency::Shared)? {
        return Err(not_strict("trajectory list does not connect the points strictly"));
    }
    let seqs: Vec<Vec<Point>> = trajs.iter().map(|t| t.sequence()).collect();
    let family: Vec<usize> = (0..trajs.len()).collect();
    let b = build(trajs, &seqs, points.points(), &family)?;
    let s = b.scheme(points.k());
    let a = AnchorAssignment { y: b.y, carriers: b.carriers };
    let v = validate_scheme(&s);
    if !v.passed() {
        return Err(Error::Reduction(format!("constructed scheme is invalid: {}", v.violations[0])));
    }
    if !condition_iii_check(&s, &a, trajs) {
        return Err(Error::Reduction("constructed scheme fails the visit-order condition".into()));
    }
    Ok((s, a))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i32]) -> Point {
        Point::new(c).unwrap()
    }

    fn line(id: u64, from: [i32; 3], to: [i32; 3]) -> LabeledTrajectory {
        // Axis-by-axis walk between two points.
        let mut pts = vec![p(&from)];
        let mut c = from;
        for ax in 0..3 {
            while c[ax] != to[ax] {
                c[ax] += (to[ax] - c[ax]).signum();
                pts.push(p(&c));
            }
        }
        LabeledTrajectory::from_sequence(id, 0.1, pts, 0).unwrap()
    }

    #[test]
    fn small_validation_cases() {
        assert!(validate_scheme(&Scheme::new(2, 1, 2, vec![(0, 1, 0)])).passed());
        let bad = validate_scheme(&Scheme::new(2, 2, 3, vec![(0, 2, 0), (2, 1, 0)]));
        assert!(bad.violations.iter().any(|v| matches!(v, Violation::InternalTypes { vertex: 2, .. })));
        assert!(validate_scheme(&Scheme::new(2, 2, 3, vec![(0, 2, 0), (2, 1, 1)])).passed());
        let broken = validate_scheme(&Scheme::new(2, 2, 3, vec![(0, 2, 0), (1, 2, 0)]));
        assert!(broken.violations.iter().any(|v| matches!(v, Violation::TypeNotPath { ty: 0, .. })));
    }

    #[test]
    fn small_catalogs() {
        let c = enumerate_schemes(2, 1).unwrap();
        assert_eq!(c.schemes.len(), 1);
        let c = enumerate_schemes(2, 2).unwrap();
        assert_eq!(c.counts.labeled, 2);
        assert_eq!(c.counts.oriented, 8);
        assert_eq!(c.iso_classes, Some(1));
        for s in enumerate_schemes(3, 3).unwrap().schemes {
            assert!(validate_scheme(&s).passed(), "{s:?}");
        }
        assert!(enumerate_schemes(5, 6).is_err());
    }

    #[test]
    fn counting_matches_materializing() {
        for (k, n) in [(2, 3), (3, 2), (3, 3), (4, 2)] {
            let c = enumerate_schemes(k, n).unwrap();
            assert_eq!(c.schemes.len() as u64, c.counts.labeled, "k={k} n={n}");
        }
    }

    #[test]
    fn exponent_arithmetic() {
        let s = Scheme::new(2, 2, 3, vec![(0, 2, 0), (2, 1, 1)]);
        assert!((scheme_bound_exponent(&s, 5, 0.1) - 1.1).abs() < 1e-12);
        let c = enumerate_schemes(3, 3).unwrap();
        assert!((scheme_bound_exponent(&c.schemes[0], 5, 0.1) - 2.1).abs() < 1e-12);
    }

    #[test]
    fn two_trajectories_base_case() {
        let a = line(7, [0, 0, 0], [4, 0, 0]);
        let b = line(9, [4, 0, 0], [4, 4, 0]);
        let pts = MarkedPoints::new(vec![p(&[0, 0, 0]), p(&[4, 4, 0])]).unwrap();
        let (s, anc) = scheme_from_witness(&[&a, &b], &pts).unwrap();
        assert_eq!(s.m, 3);
        assert_eq!(anc.y[2], p(&[4, 0, 0]));
        assert!(condition_iii_check(&s, &anc, &[&a, &b]));
    }

    #[test]
    fn reversed_anchors_fail_visit_order() {
        let a = line(0, [0, 0, 0], [6, 0, 0]);
        let s = Scheme::new(2, 1, 2, vec![(0, 1, 0)]);
        let fwd = AnchorAssignment { y: vec![p(&[1, 0, 0]), p(&[5, 0, 0])], carriers: vec![0] };
        let rev = AnchorAssignment { y: vec![p(&[5, 0, 0]), p(&[1, 0, 0])], carriers: vec![0] };
        assert!(condition_iii_check(&s, &fwd, &[&a]));
        assert!(!condition_iii_check(&s, &rev, &[&a]));
    }

    #[test]
    fn non_strict_input_is_rejected() {
        let a = line(0, [0, 0, 0], [8, 0, 0]);
        let b = line(1, [2, 0, 0], [2, 5, 0]);
        let pts = MarkedPoints::new(vec![p(&[0, 0, 0]), p(&[8, 0, 0])]).unwrap();
        assert!(scheme_from_witness(&[&a, &b], &pts).is_err());
    }
}
