//! Connection of marked points by trajectory traces, and the exact minimal
//! number of trajectories needed.
//!
//! Each trajectory is one unit: its full trace is connected in Z^d even when
//! the observed (clipped) trace is not. In shared-vertex mode two trajectories
//! are linked when their observed traces share a site, in lattice-adjacent
//! mode also when they contain neighbouring sites. Observed links are real
//! links, so an observed minimum is never below the true one.

use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Point, MAX_DIM};
use crate::sampler::LabeledTrajectory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Adjacency {
    #[default]
    Shared,
    Adjacent,
}

impl std::str::FromStr for Adjacency {
    type Err = Error;
    fn from_str(s: &str) -> Result<Adjacency> {
        match s {
            "shared" => Ok(Adjacency::Shared),
            "adjacent" => Ok(Adjacency::Adjacent),
            _ => Err(Error::InvalidArgument(format!("unknown adjacency mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MarkedPoints(Vec<Point>);

impl MarkedPoints {
    pub fn new(points: Vec<Point>) -> Result<MarkedPoints> {
        let Some(first) = points.first() else {
            return Err(Error::InvalidArgument("need at least one marked point".into()));
        };
        if let Some(p) = points.iter().find(|p| p.dim() != first.dim()) {
            return Err(Error::DimensionMismatch { left: first.dim(), right: p.dim() });
        }
        Ok(MarkedPoints(points))
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn k(&self) -> usize {
        self.0.len()
    }
}

pub fn n_kd(k: u64, d: u64) -> Result<u64> {
    if k < 2 || d < 3 {
        return Err(Error::InvalidArgument(format!("n(k,d) needs k >= 2 and d >= 3, got k={k}, d={d}")));
    }
    if d <= 4 {
        return Ok(k);
    }
    Ok((d * (k - 1)).div_ceil(2) - (k - 2))
}

fn linked(a: &LabeledTrajectory, b: &LabeledTrajectory, mode: Adjacency) -> bool {
    if a.trace.intersects(&b.trace) {
        return true;
    }
    mode == Adjacency::Adjacent
        && a.trace.points().iter().any(|p| p.neighbors().any(|q| b.trace.contains(&q)))
}

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

fn connects_impl(trajs: &[&LabeledTrajectory], points: &MarkedPoints, mode: Adjacency) -> bool {
    let mut cover = Vec::with_capacity(points.k());
    for x in points.points() {
        match trajs.iter().position(|t| t.trace.contains(x)) {
            Some(i) => cover.push(i),
            None => return false,
        }
    }
    let n = trajs.len();
    let mut parent: Vec<usize> = (0..n).collect();
    for i in 0..n {
        for j in i + 1..n {
            if find(&mut parent, i) != find(&mut parent, j) && linked(trajs[i], trajs[j], mode) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                parent[a] = b;
            }
        }
    }
    let root = find(&mut parent, cover[0]);
    cover.iter().all(|&c| find(&mut parent, c) == root)
}

/// Whether the union of the traces contains every marked point inside one
/// connected component.
pub fn connects(trajs: &[&LabeledTrajectory], points: &MarkedPoints, mode: Adjacency) -> bool {
    let r = connects_impl(trajs, points, mode);
    if r && mode == Adjacency::Shared {
        debug_assert!(connects_impl(trajs, points, Adjacency::Adjacent));
    }
    r
}

pub const STRICT_GUARD: usize = 12;

/// Connects, and no proper subfamily connects. Connection is monotone under
/// adding trajectories, so it suffices that no single removal connects.
pub fn connects_strictly(trajs: &[&LabeledTrajectory], points: &MarkedPoints, mode: Adjacency) -> Result<bool> {
    if trajs.len() > STRICT_GUARD {
        return Err(Error::Guard { what: "strict-connection subset size", value: trajs.len() as u64, limit: STRICT_GUARD as u64 });
    }
    if !connects(trajs, points, mode) {
        return Ok(false);
    }
    for skip in 0..trajs.len() {
        let rest: Vec<&LabeledTrajectory> = trajs.iter().enumerate().filter(|(i, _)| *i != skip).map(|(_, t)| *t).collect();
        if connects(&rest, points, mode) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Removes trajectories one at a time (last first) while the rest still
/// connects; the result connects strictly. Returns positions in `trajs`.
pub fn extract_strict(trajs: &[&LabeledTrajectory], points: &MarkedPoints, mode: Adjacency) -> Option<Vec<usize>> {
    if !connects(trajs, points, mode) {
        return None;
    }
    let mut keep: Vec<usize> = (0..trajs.len()).collect();
    let mut i = keep.len();
    while i > 0 {
        i -= 1;
        let trial: Vec<usize> = keep.iter().copied().filter(|&j| j != keep[i]).collect();
        let sub: Vec<&LabeledTrajectory> = trial.iter().map(|&j| trajs[j]).collect();
        if connects(&sub, points, mode) {
            keep = trial;
            i = i.min(keep.len());
        }
    }
    Some(keep)
}

/// Graph on trajectory positions with sorted adjacency lists.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntersectionGraph {
    pub ids: Vec<u64>,
    adj: Vec<Vec<usize>>,
}

impl IntersectionGraph {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adj[v]
    }

    /// Edges as id pairs with the smaller id first, sorted.
    pub fn edges(&self) -> Vec<(u64, u64)> {
        let mut e: Vec<(u64, u64)> = Vec::new();
        for (i, ns) in self.adj.iter().enumerate() {
            for &j in ns {
                if i < j {
                    let (a, b) = (self.ids[i], self.ids[j]);
                    e.push((a.min(b), a.max(b)));
                }
            }
        }
        e.sort_unstable();
        e
    }

    pub fn edge_count(&self) -> usize {
        self.adj.iter().map(Vec::len).sum::<usize>() / 2
    }
}

/// Mixed-radix packing of points inside a bounding box.
struct Packer {
    d: usize,
    lo: [i64; MAX_DIM],
    size: [u64; MAX_DIM],
    stride: [u64; MAX_DIM],
}

impl Packer {
    fn new(trajs: &[&LabeledTrajectory]) -> Option<Packer> {
        let first = trajs.iter().find_map(|t| t.trace.points().first())?;
        let d = first.dim();
        let mut lo = [i64::MAX; MAX_DIM];
        let mut hi = [i64::MIN; MAX_DIM];
        for t in trajs {
            for p in t.trace.points() {
                for i in 0..d {
                    lo[i] = lo[i].min(p.coords()[i] as i64);
                    hi[i] = hi[i].max(p.coords()[i] as i64);
                }
            }
        }
        let mut size = [0u64; MAX_DIM];
        let mut stride = [0u64; MAX_DIM];
        let mut acc: u128 = 1;
        for i in 0..d {
            lo[i] -= 1;
            size[i] = (hi[i] - lo[i] + 2) as u64;
            stride[i] = acc as u64;
            acc *= size[i] as u128;
            if acc > u64::MAX as u128 {
                return None;
            }
        }
        Some(Packer { d, lo, size, stride })
    }

    fn key(&self, p: &Point) -> u64 {
        (0..self.d).map(|i| (p.coords()[i] as i64 - self.lo[i]) as u64 * self.stride[i]).sum()
    }

    fn neighbor_keys(&self, p: &Point) -> impl Iterator<Item = u64> + '_ {
        let k = self.key(p);
        let c: Vec<u64> = (0..self.d).map(|i| (p.coords()[i] as i64 - self.lo[i]) as u64).collect();
        (0..self.d).flat_map(move |i| {
            let up = (c[i] + 1 < self.size[i]).then_some(k + self.stride[i]);
            let down = (c[i] > 0).then(|| k - self.stride[i]);
            up.into_iter().chain(down)
        })
    }
}

pub fn build_intersection_graph(trajs: &[&LabeledTrajectory], mode: Adjacency) -> IntersectionGraph {
    let n = trajs.len();
    let ids = trajs.iter().map(|t| t.id).collect();
    let mut edges: FxHashSet<(u32, u32)> = FxHashSet::default();
    if let Some(pk) = Packer::new(trajs) {
        let mut owners: Vec<(u64, u32)> = Vec::with_capacity(trajs.iter().map(|t| t.trace.len()).sum());
        for (i, t) in trajs.iter().enumerate() {
            owners.extend(t.trace.points().iter().map(|p| (pk.key(p), i as u32)));
        }
        owners.sort_unstable();
        let group = |key: u64| -> &[(u64, u32)] {
            let a = owners.partition_point(|e| e.0 < key);
            let b = owners[a..].partition_point(|e| e.0 == key) + a;
            &owners[a..b]
        };
        let mut i = 0;
        while i < owners.len() {
            let mut j = i;
            while j < owners.len() && owners[j].0 == owners[i].0 {
                j += 1;
            }
            for a in i..j {
                for b in a + 1..j {
                    let (x, y) = (owners[a].1, owners[b].1);
                    if x != y {
                        edges.insert((x.min(y), x.max(y)));
                    }
                }
            }
            i = j;
        }
        if mode == Adjacency::Adjacent {
            for (ti, t) in trajs.iter().enumerate() {
                for p in t.trace.points() {
                    for nk in pk.neighbor_keys(p) {
                        for &(_, o) in group(nk) {
                            if o as usize != ti {
                                let (x, y) = (ti as u32, o);
                                edges.insert((x.min(y), x.max(y)));
                            }
                        }
                    }
                }
            }
        }
    } else {
        for i in 0..n {
            for j in i + 1..n {
                if linked(trajs[i], trajs[j], mode) {
                    edges.insert((i as u32, j as u32));
                }
            }
        }
    }
    let mut adj = vec![Vec::new(); n];
    for (a, b) in edges {
        adj[a as usize].push(b as usize);
        adj[b as usize].push(a as usize);
    }
    for ns in adj.iter_mut() {
        ns.sort_unstable();
    }
    IntersectionGraph { ids, adj }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConnectionWitness {
    pub ids: Vec<u64>,
    pub mode: Adjacency,
    /// Spanning tree of the witness in the intersection graph, as id pairs.
    pub spanning: Vec<(u64, u64)>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchStats {
    pub expansions: u64,
    pub largest_size_searched: usize,
    pub uncovered_points: usize,
    pub graph_nodes: usize,
    pub graph_edges: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinConnectResult {
    /// `None` when no subset of size at most the limit connects.
    pub value: Option<usize>,
    pub witness: Option<ConnectionWitness>,
    pub stats: SearchStats,
}

impl MinConnectResult {
    pub fn exceeds_limit(&self) -> bool {
        self.value.is_none()
    }
}

pub const HARD_LIMIT: usize = 10;
pub const DEFAULT_BUDGET: u64 = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub limit: usize,
    pub budget: u64,
}

impl SearchOptions {
    pub fn new(limit: usize) -> SearchOptions {
        SearchOptions { limit, budget: DEFAULT_BUDGET }
    }
}

struct Esu<'a> {
    g: &'a IntersectionGraph,
    order: Vec<usize>,
    cov: Vec<u64>,
    full: u64,
    size: usize,
    budget: u64,
    expansions: u64,
    best: Option<Vec<u64>>,
}

impl Esu<'_> {
    fn extend(&mut self, set: &mut Vec<usize>, ext: Vec<usize>, root: usize, mask: u64) -> Result<()> {
        self.expansions += 1;
        if self.expansions > self.budget {
            return Err(Error::SearchBudget { budget: self.budget, size: self.size });
        }
        if set.len() == self.size {
            if mask == self.full {
                let mut ids: Vec<u64> = set.iter().map(|&v| self.g.ids[v]).collect();
                ids.sort_unstable();
                if self.best.as_ref().is_none_or(|b| ids < *b) {
                    self.best = Some(ids);
                }
            }
            return Ok(());
        }
        let mut ext = ext;
        while let Some(w) = ext.pop() {
            let mut next = ext.clone();
            for &u in self.g.neighbors(w) {
                if self.order[u] > self.order[root]
                    && !set.contains(&u)
                    && !next.contains(&u)
                    && !set.iter().any(|&s| self.g.neighbors(s).binary_search(&u).is_ok())
                {
                    next.push(u);
                }
            }
            set.push(w);
            self.extend(set, next, root, mask | self.cov[w])?;
            set.pop();
        }
        Ok(())
    }
}

/// Exact minimum number of trajectories connecting the marked points, by
/// increasing subset size, enumerating connected subgraphs of the
/// intersection graph that meet the smallest point-covering class.
pub fn min_connect(trajs: &[&LabeledTrajectory], points: &MarkedPoints, opts: SearchOptions, mode: Adjacency) -> Result<MinConnectResult> {
    if opts.limit > HARD_LIMIT {
        return Err(Error::Guard { what: "search limit", value: opts.limit as u64, limit: HARD_LIMIT as u64 });
    }
    if points.k() > 64 {
        return Err(Error::Guard { what: "marked points", value: points.k() as u64, limit: 64 });
    }
    let n = trajs.len();
    let mut cov = vec![0u64; n];
    let mut classes: Vec<Vec<usize>> = vec![Vec::new(); points.k()];
    for (i, t) in trajs.iter().enumerate() {
        for (j, x) in points.points().iter().enumerate() {
            if t.trace.contains(x) {
                cov[i] |= 1 << j;
                classes[j].push(i);
            }
        }
    }
    let full: u64 = if points.k() == 64 { u64::MAX } else { (1u64 << points.k()) - 1 };
    let mut stats = SearchStats { uncovered_points: classes.iter().filter(|c| c.is_empty()).count(), ..Default::default() };
    if stats.uncovered_points > 0 || opts.limit == 0 {
        return Ok(MinConnectResult { value: None, witness: None, stats });
    }
    let g = build_intersection_graph(trajs, mode);
    stats.graph_nodes = g.len();
    stats.graph_edges = g.edge_count();

    let root_class = classes.iter().min_by_key(|c| c.len()).unwrap().clone();
    let mut order = vec![usize::MAX; n];
    let mut rank = 0;
    for &v in &root_class {
        order[v] = rank;
        rank += 1;
    }
    for (v, o) in order.iter_mut().enumerate() {
        if *o == usize::MAX && !root_class.contains(&v) {
            *o = rank;
            rank += 1;
        }
    }

    let mut esu = Esu { g: &g, order, cov: cov.clone(), full, size: 0, budget: opts.budget, expansions: 0, best: None };
    for size in 1..=opts.limit {
        esu.size = size;
        stats.largest_size_searched = size;
        for &v in &root_class {
            let ext: Vec<usize> = g.neighbors(v).iter().copied().filter(|&u| esu.order[u] > esu.order[v]).collect();
            let mut set = vec![v];
            if let Err(e) = esu.extend(&mut set, ext, v, cov[v]) {
                return Err(e);
            }
        }
        stats.expansions = esu.expansions;
        if let Some(ids) = esu.best.take() {
            let chosen: Vec<&LabeledTrajectory> = ids.iter().map(|id| *trajs.iter().find(|t| t.id == *id).unwrap()).collect();
            assert!(connects(&chosen, points, mode), "witness failed verification");
            let witness = ConnectionWitness { spanning: spanning_tree(&g, &ids), ids, mode };
            return Ok(MinConnectResult { value: Some(size), witness: Some(witness), stats });
        }
    }
    Ok(MinConnectResult { value: None, witness: None, stats })
}

fn spanning_tree(g: &IntersectionGraph, ids: &[u64]) -> Vec<(u64, u64)> {
    let members: Vec<usize> = ids.iter().map(|id| g.ids.iter().position(|x| x == id).unwrap()).collect();
    let mut seen = vec![members[0]];
    let mut queue = vec![members[0]];
    let mut out = Vec::new();
    while let Some(v) = queue.pop() {
        for &u in g.neighbors(v) {
            if members.contains(&u) && !seen.contains(&u) {
                seen.push(u);
                queue.push(u);
                out.push((g.ids[v], g.ids[u]));
            }
        }
    }
    out
}
