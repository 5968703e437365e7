//! Online tracker: confidence-ordered greedy association with offset
//! back-projection, track rebirth, and the public-detection variant that only
//! starts tracks next to a supplied box.

use std::fmt;
use std::str::FromStr;

use crate::association::matching::{greedy_assign, hungarian_match, Assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::heatmap::{render_prior, DenseMap};
use crate::motion::{association_cost, kalman_predict, kalman_update, KalmanState, MotionKind, MotionModel};
use crate::types::{gating_radius, BBox, Detection, Track, TrackId, TrackStatus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Matcher {
    Greedy,
    Hungarian,
}

impl fmt::Display for Matcher {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Matcher::Greedy => "greedy",
            Matcher::Hungarian => "hungarian",
        })
    }
}

impl FromStr for Matcher {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Matcher::Greedy),
            "hungarian" => Ok(Matcher::Hungarian),
            other => Err(Error::Config(format!("unknown matcher '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackingMode {
    Private,
    Public,
}

impl FromStr for TrackingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "private" => Ok(TrackingMode::Private),
            "public" => Ok(TrackingMode::Public),
            other => Err(Error::Config(format!("unknown tracking mode '{other}'"))),
        }
    }
}

/// Where the output threshold applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdStage {
    /// Detections below theta never spawn or extend tracks.
    PreAssociation,
    /// Every detection is associated; only the output is filtered.
    PostAssociation,
}

impl FromStr for ThresholdStage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pre" => Ok(ThresholdStage::PreAssociation),
            "post" => Ok(ThresholdStage::PostAssociation),
            other => Err(Error::Config(format!("unknown threshold stage '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Output threshold.
    pub theta: f64,
    /// Prior-heatmap rendering threshold.
    pub tau: f64,
    /// Frames an unmatched track stays inactive before it is dropped.
    pub rebirth_k: u32,
    pub matcher: Matcher,
    pub motion: MotionModel,
    pub mode: TrackingMode,
    pub threshold_stage: ThresholdStage,
    /// Run the motion model on inactive tracks too. Off by default: their
    /// last observed state is frozen.
    pub advance_inactive: bool,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            theta: 0.4,
            tau: 0.5,
            rebirth_k: 0,
            matcher: Matcher::Greedy,
            motion: MotionModel::default(),
            mode: TrackingMode::Private,
            threshold_stage: ThresholdStage::PreAssociation,
            advance_inactive: false,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("theta", self.theta), ("tau", self.tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Association cost (rows: detections, columns: tracks) and per-pair gate.
fn cost_and_gate(
    dets: &[Detection],
    tracks: &[Track],
    kind: MotionKind,
) -> Result<(CostMatrix, CostMatrix)> {
    let mut cost = CostMatrix::filled(dets.len(), tracks.len(), 0.0);
    let mut gate = CostMatrix::filled(dets.len(), tracks.len(), 0.0);
    for (i, d) in dets.iter().enumerate() {
        let dbox = d.bbox();
        for (j, t) in tracks.iter().enumerate() {
            cost.set(i, j, association_cost(d, t.center, t.kalman.as_ref(), kind, t.id.0)?);
            // Never associate across classes.
            let radius = if d.class_id == t.class_id { gating_radius(&dbox, &t.bbox) } else { f64::NEG_INFINITY };
            gate.set(i, j, radius);
        }
    }
    Ok((cost, gate))
}

fn check_sorted(dets: &[Detection]) -> Result<()> {
    for (i, w) in dets.windows(2).enumerate() {
        if w[1].confidence > w[0].confidence {
            return Err(Error::UnsortedDetections(i + 1));
        }
    }
    Ok(())
}

/// Greedy association. `dets` must already be sorted by descending
/// confidence; each detection takes its closest unmatched track and keeps it
/// iff the distance is below the pair's gating radius.
pub fn greedy_match(dets: &[Detection], tracks: &[Track], model: &MotionModel) -> Result<Assignment> {
    check_sorted(dets)?;
    let (cost, gate) = cost_and_gate(dets, tracks, model.kind)?;
    greedy_assign(&cost, &gate)
}

/// Minimum-cost association with the same costs and gates as [`greedy_match`].
pub fn optimal_match(dets: &[Detection], tracks: &[Track], model: &MotionModel) -> Result<Assignment> {
    let (cost, gate) = cost_and_gate(dets, tracks, model.kind)?;
    hungarian_match(&cost, &gate)
}

/// Stable descending-confidence order of detection indices.
pub fn confidence_order(dets: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].confidence.total_cmp(&dets[a].confidence));
    order
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackerState {
    pub tracks: Vec<Track>,
    pub next_id: u64,
    pub frame_index: Option<i64>,
}

impl TrackerState {
    pub fn new() -> Self {
        Self {
            tracks: Vec::new(),
            next_id: 1,
            frame_index: None,
        }
    }

    /// Private-detection step. Returns the active tracks of this frame,
    /// sorted by id.
    pub fn step(&mut self, frame: i64, dets: &[Detection], cfg: &TrackerConfig) -> Result<Vec<Track>> {
        if cfg.mode != TrackingMode::Private {
            return Err(Error::ModeMismatch("step requires private mode"));
        }
        self.advance(frame, dets, None, cfg)
    }

    /// Public-detection step: association is unchanged, but an unmatched
    /// detection only starts a track when it lies within the gating radius of
    /// its nearest public box.
    pub fn step_public(
        &mut self,
        frame: i64,
        dets: &[Detection],
        public: &[BBox],
        cfg: &TrackerConfig,
    ) -> Result<Vec<Track>> {
        if cfg.mode != TrackingMode::Public {
            return Err(Error::ModeMismatch("step_public requires public mode"));
        }
        self.advance(frame, dets, Some(public), cfg)
    }

    /// Prior heatmap of the current state.
    pub fn prior_heatmap(&self, cfg: &TrackerConfig, grid: (usize, usize), downsample: usize) -> DenseMap {
        render_prior(&self.tracks, cfg.tau, grid, downsample)
    }

    pub fn active_tracks(&self) -> impl Iterator<Item = &Track> {
        self.tracks.iter().filter(|t| t.is_active())
    }

    fn advance(
        &mut self,
        frame: i64,
        dets: &[Detection],
        public: Option<&[BBox]>,
        cfg: &TrackerConfig,
    ) -> Result<Vec<Track>> {
        if let Some(prev) = self.frame_index {
            if frame <= prev {
                return Err(Error::FrameOrder {
                    previous: prev,
                    current: frame,
                });
            }
        }
        for d in dets {
            d.validate()?;
        }
        let kind = cfg.motion.kind;
        let kparams = cfg.motion.kalman;

        if kind == MotionKind::Kalman {
            for t in &mut self.tracks {
                if t.kalman.is_none() {
                    t.kalman = Some(KalmanState::initiate(&t.bbox, &kparams));
                }
                if t.is_active() || cfg.advance_inactive {
                    let predicted = kalman_predict(t.kalman.as_ref().unwrap(), &kparams);
                    t.kalman = Some(predicted);
                }
            }
        }

        let candidates: Vec<Detection> = confidence_order(dets)
            .into_iter()
            .map(|i| dets[i])
            .filter(|d| cfg.threshold_stage == ThresholdStage::PostAssociation || d.confidence >= cfg.theta)
            .collect();

        let assignment = match cfg.matcher {
            Matcher::Greedy => greedy_match(&candidates, &self.tracks, &cfg.motion)?,
            Matcher::Hungarian => optimal_match(&candidates, &self.tracks, &cfg.motion)?,
        };

        let mut det_track: Vec<Option<usize>> = vec![None; candidates.len()];
        for &(i, j) in &assignment.matches {
            det_track[i] = Some(j);
        }
        let mut matched_track = vec![false; self.tracks.len()];
        let mut next_tracks: Vec<Track> = Vec::with_capacity(self.tracks.len() + candidates.len());
        let mut spawned: Vec<Track> = Vec::new();

        for (i, det) in candidates.iter().enumerate() {
            match det_track[i] {
                Some(j) => {
                    matched_track[j] = true;
                    let t = &mut self.tracks[j];
                    let bbox = det.bbox();
                    t.bbox = bbox;
                    t.center = det.point();
                    t.confidence = det.confidence;
                    t.status = TrackStatus::Active;
                    t.last_frame = frame;
                    t.class_id = det.class_id;
                    t.pos3d = det.pos3d;
                    if kind == MotionKind::Kalman {
                        let state = t.kalman.as_ref().ok_or(Error::MissingKalmanState(t.id.0))?;
                        t.kalman = Some(kalman_update(state, &bbox, &kparams)?);
                    }
                }
                None => {
                    if let Some(public) = public {
                        if !near_public_box(det, public) {
                            continue;
                        }
                    }
                    let bbox = det.bbox();
                    spawned.push(Track {
                        id: TrackId(self.next_id),
                        bbox,
                        center: det.point(),
                        confidence: det.confidence,
                        status: TrackStatus::Active,
                        kalman: (kind == MotionKind::Kalman)
                            .then(|| KalmanState::initiate(&bbox, &kparams)),
                        last_frame: frame,
                        class_id: det.class_id,
                        pos3d: det.pos3d,
                    });
                    self.next_id += 1;
                }
            }
        }

        for (j, mut t) in std::mem::take(&mut self.tracks).into_iter().enumerate() {
            if !matched_track[j] {
                let age = match t.status {
                    TrackStatus::Active => 1,
                    TrackStatus::Inactive { age } => age + 1,
                };
                if age > cfg.rebirth_k {
                    continue;
                }
                t.status = TrackStatus::Inactive { age };
            }
            next_tracks.push(t);
        }
        next_tracks.extend(spawned);
        self.tracks = next_tracks;
        self.frame_index = Some(frame);

        let mut out: Vec<Track> = self
            .tracks
            .iter()
            .filter(|t| t.is_active() && t.confidence >= cfg.theta)
            .cloned()
            .collect();
        out.sort_by_key(|t| t.id);
        Ok(out)
    }
}

fn near_public_box(det: &Detection, public: &[BBox]) -> bool {
    let p = det.point();
    let nearest = public
        .iter()
        .map(|b| (p.distance(b.center()), b))
        .min_by(|a, b| a.0.total_cmp(&b.0));
    match nearest {
        Some((dist, b)) => dist < gating_radius(&det.bbox(), b),
        None => false,
    }
}
