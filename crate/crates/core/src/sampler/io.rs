//! Line-delimited JSON persistence: one record per trajectory.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{InterlacementSample, LabeledTrajectory};
use crate::error::{Error, Result};
use crate::lattice::{Ball, PathSegment, Point};

/// Legs are stored as direction codes `0..2d`, one hex digit per step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub id: u64,
    pub label: f64,
    pub entry: Point,
    pub forward: String,
    pub backward: String,
    pub dim: usize,
    pub seed: u64,
    pub stream: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observation: Option<Ball>,
}

fn encode(codes: &[u8]) -> String {
    codes.iter().map(|&c| char::from_digit(c as u32, 16).unwrap()).collect()
}

fn decode(s: &str) -> Result<Vec<u8>> {
    s.chars()
        .map(|ch| ch.to_digit(16).map(|v| v as u8).ok_or_else(|| Error::InvalidArgument(format!("bad direction code {ch:?}"))))
        .collect()
}

impl TrajectoryRecord {
    pub fn from_trajectory(t: &LabeledTrajectory, s: &InterlacementSample, replica: Option<u64>, layer: Option<u32>) -> TrajectoryRecord {
        TrajectoryRecord {
            id: t.id,
            label: t.label,
            entry: t.entry,
            forward: encode(t.forward.codes()),
            backward: encode(t.backward.codes()),
            dim: t.entry.dim(),
            seed: s.stream.seed,
            stream: s.stream.stream,
            replica,
            layer,
            observation: s.observation,
        }
    }

    pub fn to_trajectory(&self) -> Result<LabeledTrajectory> {
        if self.entry.dim() != self.dim {
            return Err(Error::DimensionMismatch { left: self.dim, right: self.entry.dim() });
        }
        let f = PathSegment::from_codes(self.entry, &decode(&self.forward)?)?;
        let b = PathSegment::from_codes(self.entry, &decode(&self.backward)?)?;
        LabeledTrajectory::new(self.id, self.label, f, b, self.observation.as_ref())
    }
}

/// Writes every trajectory of `s` and flushes.
pub fn write_jsonl<W: Write>(s: &InterlacementSample, replica: Option<u64>, layer: Option<u32>, w: &mut W) -> Result<()> {
    for t in &s.trajectories {
        serde_json::to_writer(&mut *w, &TrajectoryRecord::from_trajectory(t, s, replica, layer))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<R: BufRead>(r: R) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
