//! The connectivity experiment: sample around k marked points, then measure
//! the minimal number of trajectories linking them at nested radii.
//!
//! Stage one holds the trajectories through the marked points. Stage two adds
//! the trajectories meeting stage-one traces (or their neighbors in adjacent
//! mode) but avoiding the marked points, kept only when they link two
//! stage-one trajectories. This captures every connecting family of size at
//! most three in the configured mode; larger minima are relative to the two
//! sampled stages. The other mode's column uses the same sample, which is
//! complete for shared mode whenever adjacent mode is configured.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufReader, Write};
use std::path::Path;

use rustc_hash::{FxHashMap, FxHashSet};

use super::config::{ExperimentConfig, PlacementRule};
use super::stats::{fit_slope, wilson};
use super::{fmt_f, Table};
use crate::connectivity::{min_connect, n_kd, Adjacency, MarkedPoints, SearchOptions};
use crate::error::{Error, Result};
use crate::lattice::{Ball, FiniteSet, Point};
use crate::rng::StreamId;
use crate::sampler::{read_jsonl, sample_hitting_process, sample_hitting_process_filtered, LabeledTrajectory, SamplerParams, SamplingMethod, TrajectoryRecord};

const STAGE2_TAG: u64 = 1 << 40;
const Z95: f64 = 1.96;

pub const ROWS_FILE: &str = "connectivity.csv";
pub const SAMPLES_FILE: &str = "samples.jsonl";

/// One realized replica: marked points and both stages of trajectories.
#[derive(Clone, Debug, PartialEq)]
pub struct ReplicaSample {
    pub separation: u64,
    pub replica: u64,
    /// Stage-one draws needed to cover every marked point.
    pub attempts: Option<u64>,
    pub points: Vec<Point>,
    pub observation: Ball,
    pub stage1: Vec<LabeledTrajectory>,
    pub stage2: Vec<LabeledTrajectory>,
    pub stage1_stream: StreamId,
    pub stage2_stream: StreamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConnectivityOutput {
    pub rows: Table,
    pub summary: Table,
    pub fits: Table,
}

fn max_factor(cfg: &ExperimentConfig) -> u64 {
    *cfg.connectivity.radius_factors.iter().max().expect("validated non-empty")
}

fn check(cfg: &ExperimentConfig) -> Result<()> {
    cfg.validate()?;
    if cfg.d < 5 {
        return Err(Error::Config { field: "d".into(), message: format!("the connectivity experiment needs d >= 5, got {}", cfg.d) });
    }
    Ok(())
}

/// Stage-one trajectories each point links to: those whose trace contains it
/// or, in adjacent mode, a neighbor of it. Bit `i` is stage-one trajectory `i`.
fn link_masks(stage1: &[LabeledTrajectory], mode: Adjacency) -> FxHashMap<Point, u64> {
    let mut m: FxHashMap<Point, u64> = FxHashMap::default();
    for (i, t) in stage1.iter().enumerate() {
        for p in t.trace.points() {
            *m.entry(*p).or_default() |= 1 << i;
            if mode == Adjacency::Adjacent {
                for q in p.neighbors() {
                    *m.entry(q).or_default() |= 1 << i;
                }
            }
        }
    }
    m
}

/// Window for stage two. A family of at most three trajectories that needs a
/// stage-two member has exactly one, and it links two stage-one members; with
/// two marked points, one of them covers each point, so the trajectories
/// linking to the coverers of either point suffice. The smaller side is used.
fn stage2_window(cfg: &ExperimentConfig, points: &[Point], stage1: &[LabeledTrajectory]) -> Result<FiniteSet> {
    let side = |sel: &dyn Fn(&LabeledTrajectory) -> bool| -> FxHashSet<Point> {
        let mut w = FxHashSet::default();
        for t in stage1.iter().filter(|t| sel(t)) {
            for p in t.trace.points() {
                w.insert(*p);
                if cfg.mode == Adjacency::Adjacent {
                    w.extend(p.neighbors());
                }
            }
        }
        w
    };
    let window = if points.len() == 2 {
        let a = side(&|t: &LabeledTrajectory| t.trace.contains(&points[0]));
        let b = side(&|t: &LabeledTrajectory| t.trace.contains(&points[1]));
        if a.len() <= b.len() {
            a
        } else {
            b
        }
    } else {
        side(&|_: &LabeledTrajectory| true)
    };
    FiniteSet::with_dim(cfg.d, window)
}

/// Samples replica `replica` at separation index `s`.
pub fn realize_replica(cfg: &ExperimentConfig, s: usize, replica: u64) -> Result<ReplicaSample> {
    check(cfg)?;
    let c = &cfg.connectivity;
    let sep = c.separations[s];
    let points = cfg.marked_points(sep)?;
    let k0 = FiniteSet::with_dim(cfg.d, points.iter().copied())?;
    let r_obs = max_factor(cfg) * sep;
    let observation = Ball::new(k0.center(), r_obs);
    let truncation = c.truncation_factor * r_obs;
    let leg = c.leg_length.unwrap_or(2 * (r_obs as usize).pow(2));
    let stream = StreamId::new(cfg.seed, replica).child(s as u64);
    let base = SamplerParams { trim_to_observation: true, ..SamplerParams::default() }.observation(observation).truncation(truncation).leg_length(leg);

    let conditioned = cfg.placement.rule == PlacementRule::Conditioned;
    let mut attempts = 0u64;
    let (stage1, stage1_stream) = loop {
        let st = stream.child(attempts);
        attempts += 1;
        let sample = sample_hitting_process(&k0, cfg.u, &base, st)?;
        let covered = points.iter().all(|p| sample.trajectories.iter().any(|t| t.trace.contains(p)));
        if !conditioned || covered {
            break (sample.trajectories, st);
        }
        if attempts >= cfg.placement.retry_budget {
            return Err(Error::RejectionBudget { entry: points[0], attempts });
        }
    };

    let stage2_stream = stream.child(STAGE2_TAG);
    let mut stage2 = Vec::new();
    if c.two_stage && cfg.limit >= 3 && !stage1.is_empty() {
        if stage1.len() > 64 {
            return Err(Error::Guard { what: "stage-one trajectories", value: stage1.len() as u64, limit: 64 });
        }
        let a = stage2_window(cfg, &points, &stage1)?;
        let masks = link_masks(&stage1, cfg.mode);
        let links_two = |t: &LabeledTrajectory| {
            let mut seen = 0u64;
            t.trace.points().iter().any(|p| {
                seen |= masks.get(p).copied().unwrap_or(0);
                seen.count_ones() >= 2
            })
        };
        let params = SamplerParams { avoid: Some(points.clone()), ..base.clone() }.method(SamplingMethod::SiteThinning);
        let sample = sample_hitting_process_filtered(&a, cfg.u, &params, stage2_stream, links_two)?;
        let n1 = stage1.len() as u64;
        stage2 = sample.trajectories.into_iter().enumerate().map(|(i, t)| LabeledTrajectory { id: n1 + i as u64, ..t }).collect();
    }
    let stage1 = stage1.into_iter().enumerate().map(|(i, t)| LabeledTrajectory { id: i as u64, ..t }).collect();
    Ok(ReplicaSample {
        separation: sep,
        replica,
        attempts: conditioned.then_some(attempts),
        points,
        observation,
        stage1,
        stage2,
        stage1_stream,
        stage2_stream,
    })
}

const ROW_COLUMNS: [&str; 13] = [
    "separation",
    "replica",
    "rho",
    "attempts",
    "stage1",
    "stage2",
    "min_shared",
    "exceeds_shared",
    "min_adjacent",
    "exceeds_adjacent",
    "n_kd",
    "below_nkd",
    "witness",
];

fn target(cfg: &ExperimentConfig) -> Result<u64> {
    let k = cfg.placement_k();
    if k == 1 {
        Ok(1)
    } else {
        n_kd(k as u64, cfg.d as u64)
    }
}

/// Rows of one replica: one per observation radius, minima in both modes.
fn evaluate(cfg: &ExperimentConfig, r: &ReplicaSample) -> Result<Vec<Vec<String>>> {
    let marked = MarkedPoints::new(r.points.clone())?;
    let nkd = target(cfg)?;
    let mut factors = cfg.connectivity.radius_factors.clone();
    factors.sort_unstable();
    factors.dedup();
    let mut rows = Vec::new();
    for f in factors {
        let rho = f * r.separation;
        let ball = Ball::new(r.observation.center, rho);
        let clipped: Vec<LabeledTrajectory> = r.stage1.iter().chain(&r.stage2).map(|t| t.clipped(&ball)).filter(|t| !t.trace.is_empty()).collect();
        let refs: Vec<&LabeledTrajectory> = clipped.iter().collect();
        let shared = min_connect(&refs, &marked, SearchOptions::new(cfg.limit), Adjacency::Shared)?;
        let adjacent = min_connect(&refs, &marked, SearchOptions::new(cfg.limit), Adjacency::Adjacent)?;
        let chosen = if cfg.mode == Adjacency::Shared { &shared } else { &adjacent };
        let value = |m: &crate::connectivity::MinConnectResult| m.value.map(|v| v.to_string()).unwrap_or_default();
        let witness = chosen.witness.as_ref().map(|w| w.ids.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(";")).unwrap_or_default();
        rows.push(vec![
            r.separation.to_string(),
            r.replica.to_string(),
            rho.to_string(),
            r.attempts.map(|a| a.to_string()).unwrap_or_default(),
            r.stage1.len().to_string(),
            r.stage2.len().to_string(),
            value(&shared),
            shared.exceeds_limit().to_string(),
            value(&adjacent),
            adjacent.exceeds_limit().to_string(),
            nkd.to_string(),
            chosen.value.is_some_and(|v| (v as u64) < nkd).to_string(),
            witness,
        ]);
    }
    Ok(rows)
}

fn records(r: &ReplicaSample, s: usize) -> Vec<TrajectoryRecord> {
    let mk = |t: &LabeledTrajectory, st: StreamId, stage: u32| TrajectoryRecord {
        id: t.id,
        label: t.label,
        entry: t.entry,
        forward: t.forward.codes().iter().map(|&c| char::from_digit(c as u32, 16).unwrap()).collect(),
        backward: t.backward.codes().iter().map(|&c| char::from_digit(c as u32, 16).unwrap()).collect(),
        dim: t.entry.dim(),
        seed: st.seed,
        stream: st.stream,
        replica: Some(r.replica),
        layer: Some(2 * s as u32 + stage),
        observation: Some(r.observation),
    };
    r.stage1.iter().map(|t| mk(t, r.stage1_stream, 0)).chain(r.stage2.iter().map(|t| mk(t, r.stage2_stream, 1))).collect()
}

fn write_records<W: Write>(recs: &[TrajectoryRecord], w: &mut W) -> Result<()> {
    for rec in recs {
        serde_json::to_writer(&mut *w, rec)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn key(row: &[String]) -> Result<(u64, u64)> {
    let p = |s: &str| s.parse::<u64>().map_err(|_| Error::InvalidArgument(format!("bad integer {s:?} in {ROWS_FILE}")));
    Ok((p(&row[0])?, p(&row[1])?))
}

/// Runs the experiment. With `out`, rows and trajectories are persisted as
/// each replica finishes and a rerun resumes where the last one stopped.
pub fn run_connectivity(cfg: &ExperimentConfig, out: Option<&Path>) -> Result<ConnectivityOutput> {
    check(cfg)?;
    let hash = cfg.hash();
    let n_rho = {
        let mut f = cfg.connectivity.radius_factors.clone();
        f.sort_unstable();
        f.dedup();
        f.len()
    };
    let mut done: BTreeMap<(u64, u64), Vec<Vec<String>>> = BTreeMap::new();
    let mut writers = None;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let rows_path = dir.join(ROWS_FILE);
        let samples_path = dir.join(SAMPLES_FILE);
        if rows_path.exists() {
            let (t, old_hash) = Table::read_csv(&rows_path)?;
            if old_hash != hash {
                return Err(Error::Config {
                    field: "config".into(),
                    message: format!("{} was written with config {old_hash}, current is {hash}; use a fresh --out", rows_path.display()),
                });
            }
            for row in t.rows {
                done.entry(key(&row)?).or_default().push(row);
            }
            done.retain(|_, v| v.len() == n_rho);
        }
        // Rewrite both files keeping only complete replicas.
        let kept: Vec<TrajectoryRecord> = if samples_path.exists() {
            let seps = &cfg.connectivity.separations;
            read_jsonl(BufReader::new(std::fs::File::open(&samples_path)?))?
                .into_iter()
                .filter(|r| match (r.layer, r.replica) {
                    (Some(l), Some(rep)) => seps.get(l as usize / 2).is_some_and(|&sep| done.contains_key(&(sep, rep))),
                    _ => false,
                })
                .collect()
        } else {
            Vec::new()
        };
        let mut sw = std::io::BufWriter::new(std::fs::File::create(&samples_path)?);
        write_records(&kept, &mut sw)?;
        let mut t = Table::new("connectivity", &ROW_COLUMNS);
        t.rows = done.values().flatten().cloned().collect();
        let mut rw = std::io::BufWriter::new(std::fs::File::create(&rows_path)?);
        t.write_csv(&hash, &mut rw)?;
        writers = Some((rw, sw));
    }

    for (s, &sep) in cfg.connectivity.separations.iter().enumerate() {
        for rep in 0..cfg.replicas as u64 {
            if done.contains_key(&(sep, rep)) {
                continue;
            }
            let started = std::time::Instant::now();
            let sample = realize_replica(cfg, s, rep)?;
            let rows = evaluate(cfg, &sample)?;
            if let Some((rw, sw)) = writers.as_mut() {
                write_records(&records(&sample, s), sw)?;
                let mut cw = csv::WriterBuilder::new().has_headers(false).from_writer(&mut *rw);
                for row in &rows {
                    cw.write_record(row)?;
                }
                cw.flush()?;
                drop(cw);
                rw.flush()?;
            }
            log::debug!("separation {sep} replica {rep}: {} + {} trajectories in {:?}", sample.stage1.len(), sample.stage2.len(), started.elapsed());
            done.insert((sep, rep), rows);
        }
    }

    let mut rows = Table::new("connectivity", &ROW_COLUMNS);
    for &sep in &cfg.connectivity.separations {
        for rep in 0..cfg.replicas as u64 {
            rows.rows.extend(done.get(&(sep, rep)).cloned().unwrap_or_default());
        }
    }
    finish(cfg, rows)
}

/// Samples every (separation, replica) pair and writes the trajectories as
/// JSONL, without evaluating them. Returns the number of records.
pub fn write_samples<W: Write>(cfg: &ExperimentConfig, w: &mut W) -> Result<usize> {
    check(cfg)?;
    let mut n = 0;
    for s in 0..cfg.connectivity.separations.len() {
        for rep in 0..cfg.replicas as u64 {
            let recs = records(&realize_replica(cfg, s, rep)?, s);
            n += recs.len();
            write_records(&recs, w)?;
        }
    }
    Ok(n)
}

/// Recomputes the rows from a samples file written by [`run_connectivity`].
pub fn connectivity_from_samples(cfg: &ExperimentConfig, samples: &Path) -> Result<ConnectivityOutput> {
    check(cfg)?;
    let recs = read_jsonl(BufReader::new(std::fs::File::open(samples)?))?;
    let mut groups: BTreeMap<(usize, u64), (Vec<LabeledTrajectory>, Vec<LabeledTrajectory>, Option<Ball>)> = BTreeMap::new();
    for r in &recs {
        let (Some(layer), Some(rep)) = (r.layer, r.replica) else {
            return Err(Error::InvalidArgument(format!("record {} lacks layer or replica", r.id)));
        };
        let s = layer as usize / 2;
        if s >= cfg.connectivity.separations.len() {
            return Err(Error::InvalidArgument(format!("layer {layer} has no separation in the config")));
        }
        let g = groups.entry((s, rep)).or_default();
        g.2 = r.observation;
        let t = r.to_trajectory()?;
        if layer % 2 == 0 {
            g.0.push(t);
        } else {
            g.1.push(t);
        }
    }
    let mut rows = Table::new("connectivity", &ROW_COLUMNS);
    for ((s, rep), (stage1, stage2, obs)) in groups {
        let sep = cfg.connectivity.separations[s];
        let points = cfg.marked_points(sep)?;
        let observation = match obs {
            Some(b) => b,
            None => return Err(Error::InvalidArgument(format!("replica {rep} records lack an observation ball"))),
        };
        let sample = ReplicaSample {
            separation: sep,
            replica: rep,
            attempts: None,
            points,
            observation,
            stage1,
            stage2,
            stage1_stream: StreamId::new(0, 0),
            stage2_stream: StreamId::new(0, 0),
        };
        rows.rows.extend(evaluate(cfg, &sample)?);
    }
    finish(cfg, rows)
}

fn finish(cfg: &ExperimentConfig, rows: Table) -> Result<ConnectivityOutput> {
    let nkd = target(cfg)?;
    let mut summary = Table::new(
        "connectivity_summary",
        &[
            "mode", "separation", "rho", "replicas", "n_kd", "below", "p_below", "below_lo", "below_hi", "at_most", "p_at_most", "at_most_lo",
            "at_most_hi",
        ],
    );
    let mut fits = Table::new("connectivity_fit", &["mode", "rho_factor", "slope", "std_error", "separations"]);
    let sep_i = 0;
    let rho_i = 2;
    for (mode, col) in [(Adjacency::Shared, 6), (Adjacency::Adjacent, 8)] {
        let name = match mode {
            Adjacency::Shared => "shared",
            Adjacency::Adjacent => "adjacent",
        };
        let mut cells: BTreeMap<(u64, u64), Vec<Option<u64>>> = BTreeMap::new();
        for r in &rows.rows {
            let sep: u64 = r[sep_i].parse().unwrap_or(0);
            let rho: u64 = r[rho_i].parse().unwrap_or(0);
            cells.entry((sep, rho)).or_default().push(r[col].parse().ok());
        }
        let mut by_factor: BTreeMap<u64, Vec<(f64, f64)>> = BTreeMap::new();
        for ((sep, rho), v) in &cells {
            let n = v.len() as u64;
            let below = v.iter().filter(|m| m.is_some_and(|m| m < nkd)).count() as u64;
            let at_most = v.iter().filter(|m| m.is_some_and(|m| m <= nkd)).count() as u64;
            let (bl, bh) = wilson(below, n, Z95);
            let p_below = below as f64 / n as f64;
            let known = |ok: bool, x: f64| if ok { fmt_f(x) } else { String::new() };
            let below_known = (cfg.limit as u64) >= nkd.saturating_sub(1);
            let at_most_known = (cfg.limit as u64) >= nkd;
            let (al, ah) = wilson(at_most, n, Z95);
            summary.push(vec![
                name.into(),
                sep.to_string(),
                rho.to_string(),
                n.to_string(),
                nkd.to_string(),
                if below_known { below.to_string() } else { String::new() },
                known(below_known, p_below),
                known(below_known, bl),
                known(below_known, bh),
                if at_most_known { at_most.to_string() } else { String::new() },
                known(at_most_known, at_most as f64 / n as f64),
                known(at_most_known, al),
                known(at_most_known, ah),
            ]);
            if below_known && p_below > 0.0 {
                by_factor.entry(rho / sep).or_default().push(((*sep as f64).ln(), p_below.ln()));
            }
        }
        for (f, pts) in by_factor {
            let seps: BTreeSet<u64> = pts.iter().map(|p| p.0.exp().round() as u64).collect();
            let (slope, se) = if pts.len() >= 2 {
                let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
                let fit = fit_slope(&xs, &ys);
                (fmt_f(fit.slope), fmt_f(fit.std_error))
            } else {
                (String::new(), String::new())
            };
            fits.push(vec![name.into(), f.to_string(), slope, se, seps.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(";")]);
        }
    }
    Ok(ConnectivityOutput { rows, summary, fits })
}
