//! Seeded experiment drivers emitting CSV tables.
//!
//! Replica `i` draws from streams derived from `(seed, i)`, so tables do not
//! depend on thread count or on which replicas were resumed.

mod config;
mod connect;
mod stats;

pub use config::{
    CapacityConfig, CascadeConfig, ConnectivityConfig, ExperimentConfig, Overrides, PlacementConfig, PlacementRule, Shape, TreeSpec,
    TreeSumConfig, SEED_ENV,
};
pub use connect::{connectivity_from_samples, realize_replica, run_connectivity, write_samples, ConnectivityOutput, ReplicaSample, ROWS_FILE, SAMPLES_FILE};
pub use stats::{fit_slope, wilson, SlopeFit};

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;

use crate::capacity::{capacity, Backend, CapacityParams};
use crate::error::{Error, Result};
use crate::lattice::{FiniteSet, Point};
use crate::rng::StreamId;
use crate::sampler::{cascade_adaptive, CascadeParams};
use crate::schemes::{tree_sum, LengthedTree};

/// A named table; cells are already formatted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Table {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }

    /// Values of one column, in row order.
    pub fn get(&self, name: &str) -> Vec<&str> {
        let i = self.column(name).unwrap_or_else(|| panic!("no column {name}"));
        self.rows.iter().map(|r| r[i].as_str()).collect()
    }

    /// CSV with a comment header carrying the config hash.
    pub fn write_csv<W: Write>(&self, hash: &str, w: W) -> Result<()> {
        let mut w = w;
        writeln!(w, "# table={}", self.name)?;
        writeln!(w, "# config_hash={hash}")?;
        let mut cw = csv::Writer::from_writer(w);
        cw.write_record(&self.columns)?;
        for r in &self.rows {
            cw.write_record(r)?;
        }
        cw.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self, hash: &str) -> String {
        let mut buf = Vec::new();
        self.write_csv(hash, &mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf8")
    }

    pub fn save(&self, dir: &Path, hash: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let f = std::fs::File::create(dir.join(format!("{}.csv", self.name)))?;
        self.write_csv(hash, std::io::BufWriter::new(f))
    }

    /// Reads a table written by [`Table::write_csv`], returning it and its hash.
    pub fn read_csv(path: &Path) -> Result<(Table, String)> {
        let text = std::fs::read_to_string(path)?;
        let mut name = String::new();
        let mut hash = String::new();
        let mut body = String::new();
        for line in text.lines() {
            if let Some(v) = line.strip_prefix("# table=") {
                name = v.to_string();
            } else if let Some(v) = line.strip_prefix("# config_hash=") {
                hash = v.to_string();
            } else {
                body.push_str(line);
                body.push('\n');
            }
        }
        let mut rd = csv::Reader::from_reader(body.as_bytes());
        let columns = rd.headers()?.iter().map(String::from).collect();
        let rows = rd.records().map(|r| r.map(|r| r.iter().map(String::from).collect())).collect::<std::result::Result<_, _>>()?;
        Ok((Table { name, columns, rows }, hash))
    }
}

pub(crate) fn fmt_f(x: f64) -> String {
    format!("{x}")
}

fn box_set(d: usize, r: u64) -> Result<FiniteSet> {
    let r = r as i32;
    let side = (2 * r + 1) as usize;
    let pts = (0..side.pow(d as u32)).map(|mut i| {
        let mut c = [0i32; crate::lattice::MAX_DIM];
        for slot in c.iter_mut().take(d) {
            *slot = (i % side) as i32 - r;
            i /= side;
        }
        Point::new(&c[..d]).unwrap()
    });
    FiniteSet::with_dim(d, pts)
}

/// Capacities of balls or boxes at the origin, one row per radius.
pub fn run_capacity(cfg: &ExperimentConfig) -> Result<Table> {
    cfg.validate()?;
    let c = &cfg.capacity;
    let mut t = Table::new("capacity", &["set", "points", "backend", "value", "std_error", "truncation"]);
    let backend_name = match c.backend {
        Backend::Exact => "exact",
        Backend::Mc => "mc",
    };
    if c.include_empty {
        t.push(vec!["empty".into(), "0".into(), backend_name.into(), "0".into(), "0".into(), "0".into()]);
    }
    for (i, &r) in c.radii.iter().enumerate() {
        let (k, name) = match c.shape {
            Shape::Ball => (FiniteSet::ball(Point::origin(cfg.d), r), format!("ball(r={r})")),
            Shape::Box => (box_set(cfg.d, r)?, format!("box(r={r})")),
        };
        let mut params = CapacityParams::default().samples(c.samples);
        params.truncation = c.truncation;
        let mut rng = StreamId::new(cfg.seed, i as u64).rng();
        let e = capacity(&k, c.backend, &params, &mut rng)?;
        t.push(vec![name, k.len().to_string(), backend_name.into(), fmt_f(e.value), fmt_f(e.std_error), e.truncation.to_string()]);
    }
    Ok(t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CascadeOutput {
    pub rows: Table,
    /// Per depth: slope of log mean capacity against log R.
    pub fits: Table,
}

/// Capacities of the cascade levels over replicas and outer radii.
pub fn run_cascade(cfg: &ExperimentConfig) -> Result<CascadeOutput> {
    cfg.validate()?;
    if cfg.d < 5 {
        return Err(Error::Config { field: "d".into(), message: "cascade scaling needs d >= 5".into() });
    }
    let c = &cfg.cascade;
    let mut rows = Table::new("cascade", &["big_r", "depth", "replica", "size", "capacity", "std_error"]);
    let mut means = vec![vec![0.0; c.radii.len()]; c.depth];
    for (ri, &big_r) in c.radii.iter().enumerate() {
        let reps: Vec<Result<Vec<(usize, f64, f64)>>> = (0..cfg.replicas as u64)
            .into_par_iter()
            .map(|rep| {
                let stream = StreamId::new(cfg.seed, rep).child(ri as u64);
                let mut p = CascadeParams::new(cfg.d, big_r, c.depth);
                p.r = c.r;
                p.u_bar = cfg.u;
                p.mode = c.mode;
                let levels = cascade_adaptive(&p, stream)?;
                levels
                    .iter()
                    .enumerate()
                    .map(|(j, a)| {
                        let mut rng = stream.child(100 + j as u64).rng();
                        let params = CapacityParams::default().samples(c.walks_per_point).point_sample(c.point_sample);
                        let e = capacity(a, Backend::Mc, &params, &mut rng)?;
                        Ok((a.len(), e.value, if a.is_empty() { 0.0 } else { e.std_error }))
                    })
                    .collect()
            })
            .collect();
        for (rep, r) in reps.into_iter().enumerate() {
            for (j, (size, v, se)) in r?.into_iter().enumerate() {
                means[j][ri] += v / cfg.replicas as f64;
                rows.push(vec![big_r.to_string(), (j + 1).to_string(), rep.to_string(), size.to_string(), fmt_f(v), fmt_f(se)]);
            }
        }
    }
    let mut fits = Table::new("cascade_fit", &["depth", "slope", "std_error", "target", "radii"]);
    let xs: Vec<f64> = c.radii.iter().map(|&r| (r as f64).ln()).collect();
    for (j, m) in means.iter().enumerate() {
        let target = ((cfg.d - 2) as f64).min(2.0 * (j + 1) as f64);
        let (slope, se) = if m.iter().all(|&v| v > 0.0) {
            let f = fit_slope(&xs, &m.iter().map(|v| v.ln()).collect::<Vec<_>>());
            (fmt_f(f.slope), fmt_f(f.std_error))
        } else {
            ("nan".into(), "nan".into())
        };
        let radii = c.radii.iter().map(|r| r.to_string()).collect::<Vec<_>>().join(";");
        fits.push(vec![(j + 1).to_string(), slope, se, fmt_f(target), radii]);
    }
    Ok(CascadeOutput { rows, fits })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TreeSumOutput {
    pub rows: Table,
    /// Per tree: slope of log value against log separation.
    pub fits: Table,
}

/// Tree sums with leaves on the first axis at growing separations.
pub fn run_tree_sum(cfg: &ExperimentConfig) -> Result<TreeSumOutput> {
    cfg.validate()?;
    let ts = &cfg.tree_sum;
    let mut rows = Table::new(
        "tree_sum",
        &["tree", "separation", "truncation", "method", "value", "tail_estimate", "diverging", "growth_exponent", "bound_exponent"],
    );
    let mut fits = Table::new("tree_sum_fit", &["tree", "slope", "std_error", "bound_exponent"]);
    for (ti, spec) in ts.trees.iter().enumerate() {
        let t = LengthedTree::new(spec.k, spec.internal, cfg.d, spec.edges.clone())
            .map_err(|e| Error::Config { field: format!("tree_sum.trees[{ti}]"), message: e.to_string() })?;
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        let mut bound = 0.0;
        for &sep in &ts.separations {
            let leaves: Vec<Point> = (0..spec.k).map(|i| Point::axis(cfg.d, 0, (i as u64 * sep) as i32)).collect();
            let trunc = ts.truncation_factor * (spec.k as u64 - 1) * sep;
            let r = tree_sum(&t, &leaves, trunc)?;
            bound = r.bound_exponent;
            xs.push((sep as f64).ln());
            ys.push(r.value.ln());
            rows.push(vec![
                spec.id.clone(),
                sep.to_string(),
                trunc.to_string(),
                format!("{:?}", r.method).to_lowercase(),
                fmt_f(r.value),
                fmt_f(r.tail_estimate),
                r.diverging.to_string(),
                fmt_f(r.growth_exponent),
                fmt_f(r.bound_exponent),
            ]);
        }
        let f = fit_slope(&xs, &ys);
        fits.push(vec![spec.id.clone(), fmt_f(f.slope), fmt_f(f.std_error), fmt_f(-bound)]);
    }
    Ok(TreeSumOutput { rows, fits })
}
