//! Tracking evaluation: CLEAR-MOT, identity F1 and AMOTA.
//!
//! A prediction matches a ground-truth box only if both carry the same class
//! id and the [`TpCriterion`] accepts the pair.

mod amota;
mod clear;
mod identity;

pub use amota::{amota, amota_by_class, AmotaConfig, AmotaResult};
pub use clear::{clear_mot, clear_mot_ledger, FrameEvents, MatchEvent, MotCounts, MotLedger, MotReport};
pub use identity::{identity_scores, idf1, IdentityScores};

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{LabeledBox, SequenceData};

/// When a prediction counts as a true positive for a ground-truth box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TpCriterion {
    /// Box IoU strictly above the threshold.
    Iou2d(f64),
    /// Euclidean distance between 3D centers strictly below the threshold, meters.
    CenterDist3d(f64),
}

impl Default for TpCriterion {
    fn default() -> Self {
        TpCriterion::Iou2d(0.5)
    }
}

impl TpCriterion {
    pub fn validate(&self) -> Result<()> {
        match *self {
            TpCriterion::Iou2d(t) if !(t > 0.0 && t < 1.0) => {
                Err(Error::Config(format!("IoU threshold must lie in (0, 1), got {t}")))
            }
            TpCriterion::CenterDist3d(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::Config(format!("distance threshold must be positive, got {t}")))
            }
            _ => Ok(()),
        }
    }

    /// The pair's IoU or center distance, if the pair is a true positive.
    pub fn measure(&self, gt: &LabeledBox, pred: &LabeledBox) -> Option<f64> {
        if gt.class_id != pred.class_id {
            return None;
        }
        match *self {
            TpCriterion::Iou2d(t) => {
                let v = gt.bbox.iou(&pred.bbox);
                (v > t).then_some(v)
            }
            TpCriterion::CenterDist3d(t) => {
                let (a, b) = (gt.pos3d?, pred.pos3d?);
                let d = ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt();
                (d < t).then_some(d)
            }
        }
    }

    /// Matching cost for an accepted measure: lower is better.
    pub fn cost(&self, measure: f64) -> f64 {
        match self {
            TpCriterion::Iou2d(_) => 1.0 - measure,
            TpCriterion::CenterDist3d(_) => measure,
        }
    }

    pub fn needs_3d(&self) -> bool {
        matches!(self, TpCriterion::CenterDist3d(_))
    }
}

impl fmt::Display for TpCriterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TpCriterion::Iou2d(t) => write!(f, "iou:{t}"),
            TpCriterion::CenterDist3d(t) => write!(f, "dist3d:{t}"),
        }
    }
}

impl FromStr for TpCriterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("criterion `{s}` is not of the form kind:threshold")))?;
        let t: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("criterion threshold `{value}` is not a number")))?;
        let crit = match kind.trim() {
            "iou" => TpCriterion::Iou2d(t),
            "dist3d" => TpCriterion::CenterDist3d(t),
            other => return Err(Error::Config(format!("unknown criterion `{other}` (expected iou or dist3d)"))),
        };
        crit.validate()?;
        Ok(crit)
    }
}

// Shared precondition for every metric: non-empty ground truth, predictions
// only on ground-truth frames, and 3D positions where the criterion needs them.
// Returns, per ground-truth frame, the index of the matching prediction frame.
fn check_inputs(gt: &SequenceData, pred: &SequenceData, crit: &TpCriterion) -> Result<Vec<Option<usize>>> {
    crit.validate()?;
    if gt.total_objects() == 0 {
        return Err(Error::InvalidSequence("ground truth contains no objects".into()));
    }
    let mut pairing = Vec::with_capacity(gt.len());
    let mut j = 0;
    for f in &gt.frames {
        if j < pred.frames.len() && pred.frames[j].index < f.index {
            break;
        }
        if j < pred.frames.len() && pred.frames[j].index == f.index {
            pairing.push(Some(j));
            j += 1;
        } else {
            pairing.push(None);
        }
    }
    if j < pred.frames.len() {
        return Err(Error::FrameMismatch(format!(
            "prediction frame {} is not a ground-truth frame",
            pred.frames[j].index
        )));
    }
    if crit.needs_3d() {
        let all = gt.frames.iter().chain(&pred.frames).flat_map(|f| &f.objects);
        if let Some(o) = all.into_iter().find(|o| o.pos3d.is_none()) {
            return Err(Error::InvalidSequence(format!(
                "object {} has no 3D position but the criterion is {crit}",
                o.id
            )));
        }
    }
    Ok(pairing)
}
