//! Experiment configuration: one JSON document, every field defaulted.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::capacity::Backend;
use crate::connectivity::{Adjacency, HARD_LIMIT};
use crate::error::{Error, Result};
use crate::lattice::{check_dim, Point};
use crate::sampler::CascadeMode;

/// Environment variable overriding the master seed.
pub const SEED_ENV: &str = "INTERLACE_SEED";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    /// l1 ball.
    #[default]
    Ball,
    /// l-infinity box.
    Box,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapacityConfig {
    pub shape: Shape,
    pub radii: Vec<u64>,
    pub backend: Backend,
    pub truncation: Option<u64>,
    /// Walks per boundary point (Monte Carlo backend).
    pub samples: usize,
    /// Adds a row for the empty set.
    pub include_empty: bool,
}

impl Default for CapacityConfig {
    fn default() -> Self {
        CapacityConfig { shape: Shape::Ball, radii: (2..=12).collect(), backend: Backend::Exact, truncation: None, samples: 2000, include_empty: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PlacementRule {
    /// The listed points, as given.
    Explicit,
    /// k points on the first axis, consecutive ones at the separation.
    Antipodal,
    /// As `Antipodal`, resampling until every point lies in the interlacement set.
    #[default]
    Conditioned,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlacementConfig {
    pub rule: PlacementRule,
    pub k: usize,
    pub points: Vec<Vec<i32>>,
    pub retry_budget: u64,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        PlacementConfig { rule: PlacementRule::Conditioned, k: 2, points: Vec::new(), retry_budget: 100_000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConnectivityConfig {
    pub separations: Vec<u64>,
    /// Observation radii as multiples of the separation; the largest sets the
    /// sampling window, smaller ones are nested clips of it.
    pub radius_factors: Vec<u64>,
    /// Also sample the trajectories meeting the first-stage traces.
    pub two_stage: bool,
    pub leg_length: Option<usize>,
    /// Escape box radius as a multiple of the largest observation radius.
    pub truncation_factor: u64,
}

impl Default for ConnectivityConfig {
    fn default() -> Self {
        ConnectivityConfig { separations: vec![10, 20, 40], radius_factors: vec![2], two_stage: true, leg_length: None, truncation_factor: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CascadeConfig {
    pub radii: Vec<u64>,
    pub depth: usize,
    pub r: u64,
    pub mode: CascadeMode,
    /// Boundary points sampled per capacity estimate.
    pub point_sample: usize,
    pub walks_per_point: usize,
}

impl Default for CascadeConfig {
    fn default() -> Self {
        CascadeConfig { radii: vec![16, 32, 64, 128], depth: 1, r: 1, mode: CascadeMode::Bands, point_sample: 200, walks_per_point: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSpec {
    pub id: String,
    pub k: usize,
    pub internal: usize,
    pub edges: Vec<(usize, usize, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeSumConfig {
    pub trees: Vec<TreeSpec>,
    /// Leaves sit on the first axis, consecutive ones this far apart.
    pub separations: Vec<u64>,
    /// Truncation radius as a multiple of the largest leaf distance (at least 2).
    pub truncation_factor: u64,
}

impl Default for TreeSumConfig {
    fn default() -> Self {
        TreeSumConfig {
            trees: vec![
                TreeSpec { id: "edge".into(), k: 2, internal: 0, edges: vec![(0, 1, 2.0)] },
                TreeSpec { id: "vee".into(), k: 2, internal: 1, edges: vec![(0, 2, 2.0), (1, 2, 2.0)] },
            ],
            separations: vec![8, 16, 32],
            truncation_factor: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub d: usize,
    pub u: f64,
    pub seed: u64,
    pub replicas: usize,
    pub mode: Adjacency,
    pub limit: usize,
    pub capacity: CapacityConfig,
    pub placement: PlacementConfig,
    pub connectivity: ConnectivityConfig,
    pub cascade: CascadeConfig,
    pub tree_sum: TreeSumConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            d: 5,
            u: 1.0,
            seed: 0,
            replicas: 100,
            mode: Adjacency::Shared,
            limit: 3,
            capacity: CapacityConfig::default(),
            placement: PlacementConfig::default(),
            connectivity: ConnectivityConfig::default(),
            cascade: CascadeConfig::default(),
            tree_sum: TreeSumConfig::default(),
        }
    }
}

/// Command-line values; each one present wins over env and file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub mode: Option<Adjacency>,
    pub d: Option<usize>,
    pub u: Option<f64>,
    pub limit: Option<usize>,
}

fn cfg_err(field: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Config { field: field.into(), message: message.into() }
}

fn positive_list(field: &str, v: &[u64]) -> Result<()> {
    if v.is_empty() {
        return Err(cfg_err(field, "must not be empty"));
    }
    for (i, &x) in v.iter().enumerate() {
        if x == 0 {
            return Err(cfg_err(format!("{field}[{i}]"), "must be positive"));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<ExperimentConfig> {
        serde_json::from_str(text).map_err(|e| cfg_err(format!("line {} column {}", e.line(), e.column()), e.to_string()))
    }

    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        ExperimentConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// File (or defaults), then the seed from `env_seed`, then overrides.
    pub fn resolve(path: Option<&Path>, env_seed: Option<&str>, o: &Overrides) -> Result<ExperimentConfig> {
        let mut c = match path {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        if let Some(s) = env_seed {
            c.seed = s.trim().parse().map_err(|_| cfg_err("seed", format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
        }
        if let Some(s) = o.seed {
            c.seed = s;
        }
        if let Some(r) = o.replicas {
            c.replicas = r;
        }
        if let Some(m) = o.mode {
            c.mode = m;
        }
        if let Some(d) = o.d {
            c.d = d;
        }
        if let Some(u) = o.u {
            c.u = u;
        }
        if let Some(l) = o.limit {
            c.limit = l;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        check_dim(self.d).map_err(|_| cfg_err("d", format!("must be in 3..=8, got {}", self.d)))?;
        if !(self.u > 0.0 && self.u.is_finite()) {
            return Err(cfg_err("u", format!("must be positive, got {}", self.u)));
        }
        if self.replicas == 0 {
            return Err(cfg_err("replicas", "must be at least 1"));
        }
        if self.limit == 0 || self.limit > HARD_LIMIT {
            return Err(cfg_err("limit", format!("must be in 1..={HARD_LIMIT}, got {}", self.limit)));
        }
        if self.capacity.radii.is_empty() && !self.capacity.include_empty {
            return Err(cfg_err("capacity.radii", "must not be empty"));
        }
        if self.capacity.samples == 0 {
            return Err(cfg_err("capacity.samples", "must be positive"));
        }
        let p = &self.placement;
        if p.k == 0 {
            return Err(cfg_err("placement.k", "must be at least 1"));
        }
        if p.rule == PlacementRule::Explicit {
            if p.points.is_empty() {
                return Err(cfg_err("placement.points", "explicit placement needs points"));
            }
            for (i, q) in p.points.iter().enumerate() {
                if q.len() != self.d {
                    return Err(cfg_err(format!("placement.points[{i}]"), format!("has {} coordinates, expected {}", q.len(), self.d)));
                }
            }
        }
        if p.retry_budget == 0 {
            return Err(cfg_err("placement.retry_budget", "must be positive"));
        }
        positive_list("connectivity.separations", &self.connectivity.separations)?;
        positive_list("connectivity.radius_factors", &self.connectivity.radius_factors)?;
        if self.connectivity.truncation_factor < 1 {
            return Err(cfg_err("connectivity.truncation_factor", "must be at least 1"));
        }
        positive_list("cascade.radii", &self.cascade.radii)?;
        if self.cascade.depth == 0 {
            return Err(cfg_err("cascade.depth", "must be at least 1"));
        }
        for (i, &r) in self.cascade.radii.iter().enumerate() {
            if self.cascade.r >= r {
                return Err(cfg_err(format!("cascade.radii[{i}]"), format!("must exceed cascade.r = {}", self.cascade.r)));
            }
        }
        if self.cascade.point_sample == 0 || self.cascade.walks_per_point == 0 {
            return Err(cfg_err("cascade.point_sample", "point_sample and walks_per_point must be positive"));
        }
        positive_list("tree_sum.separations", &self.tree_sum.separations)?;
        if self.tree_sum.truncation_factor < 2 {
            return Err(cfg_err("tree_sum.truncation_factor", "must be at least 2"));
        }
        if self.tree_sum.trees.is_empty() {
            return Err(cfg_err("tree_sum.trees", "must not be empty"));
        }
        Ok(())
    }

    /// Short stable digest of the resolved configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(json.as_bytes())[..8])
    }

    /// Number of marked points.
    pub fn placement_k(&self) -> usize {
        match self.placement.rule {
            PlacementRule::Explicit => self.placement.points.len(),
            _ => self.placement.k,
        }
    }

    /// Marked points for one separation (explicit points ignore it).
    pub fn marked_points(&self, separation: u64) -> Result<Vec<Point>> {
        let p = &self.placement;
        if p.rule == PlacementRule::Explicit {
            return p.points.iter().map(|c| Point::new(c)).collect();
        }
        let span = (p.k as i64 - 1) * separation as i64;
        let start = -(span / 2);
        (0..p.k)
            .map(|i| {
                let x = start + i as i64 * separation as i64;
                i32::try_from(x).map(|x| Point::axis(self.d, 0, x)).map_err(|_| cfg_err("connectivity.separations", "coordinates overflow"))
            })
            .collect()
    }
}
