use serde::{Deserialize, Serialize};

use super::{InterlacementSample, LabeledTrajectory};
use crate::error::{Error, Result};
use crate::lattice::{l1, FiniteSet, Point};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewPredicate {
    All,
    /// Labels in (lo, hi].
    LabelBand { lo: f64, hi: f64 },
    /// Traces meeting B(big_r) (all if `None`) but not B(r) (no condition if `None`).
    Spatial { r: Option<u64>, big_r: Option<u64> },
    Ids,
}

/// A read-only selection of trajectories of one sample.
#[derive(Clone, Debug)]
pub struct ProcessView<'a> {
    pub sample: &'a InterlacementSample,
    pub predicate: ViewPredicate,
    ids: Vec<usize>,
}

impl<'a> ProcessView<'a> {
    pub fn all(sample: &'a InterlacementSample) -> ProcessView<'a> {
        ProcessView { sample, predicate: ViewPredicate::All, ids: (0..sample.trajectories.len()).collect() }
    }

    /// Selects trajectories by position in the sample.
    pub fn from_indices(sample: &'a InterlacementSample, mut ids: Vec<usize>) -> Result<ProcessView<'a>> {
        ids.sort_unstable();
        ids.dedup();
        if ids.last().is_some_and(|&i| i >= sample.trajectories.len()) {
            return Err(Error::InvalidArgument("view index out of range".into()));
        }
        Ok(ProcessView { sample, predicate: ViewPredicate::Ids, ids })
    }

    /// Positions of the selected trajectories in the parent sample.
    pub fn indices(&self) -> &[usize] {
        &self.ids
    }

    pub fn ids(&self) -> Vec<u64> {
        self.trajectories().map(|t| t.id).collect()
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn trajectories(&self) -> impl Iterator<Item = &'a LabeledTrajectory> + '_ {
        self.ids.iter().map(move |&i| &self.sample.trajectories[i])
    }

    fn filtered(&self, predicate: ViewPredicate, keep: impl Fn(&LabeledTrajectory) -> bool) -> ProcessView<'a> {
        let ids = self.ids.iter().copied().filter(|&i| keep(&self.sample.trajectories[i])).collect();
        ProcessView { sample: self.sample, predicate, ids }
    }

    pub fn restrict_labels(&self, lo: f64, hi: f64) -> Result<ProcessView<'a>> {
        let u = self.sample.intensity;
        if !(0.0 <= lo && lo <= hi && hi <= u) {
            return Err(Error::InvalidBand { lo, hi, u });
        }
        Ok(self.filtered(ViewPredicate::LabelBand { lo, hi }, |t| lo < t.label && t.label <= hi))
    }

    pub fn restrict_spatial(&self, r: Option<u64>, big_r: Option<u64>) -> Result<ProcessView<'a>> {
        if let (Some(a), Some(b)) = (r, big_r) {
            if a >= b {
                return Err(Error::InvalidRadii { r: a as f64, big_r: b as f64 });
            }
        }
        let o = Point::origin(self.sample.dim());
        let meets = |t: &LabeledTrajectory, rad: u64| t.trace.points().iter().any(|p| l1(p, &o) <= rad);
        Ok(self.filtered(ViewPredicate::Spatial { r, big_r }, |t| {
            big_r.is_none_or(|b| meets(t, b)) && r.is_none_or(|a| !meets(t, a))
        }))
    }
}

pub fn restrict_labels(sample: &InterlacementSample, lo: f64, hi: f64) -> Result<ProcessView<'_>> {
    ProcessView::all(sample).restrict_labels(lo, hi)
}

pub fn restrict_spatial(sample: &InterlacementSample, r: Option<u64>, big_r: Option<u64>) -> Result<ProcessView<'_>> {
    ProcessView::all(sample).restrict_spatial(r, big_r)
}

/// Union of the traces of the selected trajectories.
pub fn interlacement_set(view: &ProcessView) -> FiniteSet {
    let pts: Vec<Point> = view.trajectories().flat_map(|t| t.trace.points().iter().copied()).collect();
    FiniteSet::with_dim(view.sample.dim(), pts).expect("same dimension")
}

/// Number of selected trajectories whose trace meets `a`.
pub fn count_hitting(view: &ProcessView, a: &FiniteSet) -> usize {
    view.trajectories().filter(|t| t.trace.points().iter().any(|p| a.contains(p))).count()
}

/// Union over selected trajectories hitting `a` of the first `floor(R^2/8)`
/// steps after the first entrance into `a`, clipped to the l1 ball of radius
/// `R/2` around the entrance point.
pub fn psi_set(view: &ProcessView, a: &FiniteSet, big_r: u64) -> Result<FiniteSet> {
    let steps = (big_r * big_r / 8) as usize;
    let mut out = Vec::new();
    for t in view.trajectories() {
        let seq = t.sequence();
        let Some(i0) = seq.iter().position(|p| a.contains(p)) else {
            continue;
        };
        if i0 + steps >= seq.len() {
            return Err(Error::LegTooShort { leg: seq.len() - 1 - i0, required: steps });
        }
        let y0 = seq[i0];
        out.extend(seq[i0 + 1..=i0 + steps].iter().copied().filter(|p| l1(p, &y0) * 2 <= big_r));
    }
    FiniteSet::with_dim(view.sample.dim(), out)
}
