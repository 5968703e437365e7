use std::collections::{BTreeMap, HashMap};
use std::ops::AddAssign;

use super::{check_inputs, TpCriterion};
use crate::association::{hungarian_match, CostMatrix};
use crate::error::{Error, Result};
use crate::types::{Frame, LabeledBox, SequenceData};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchEvent {
    pub class_id: u32,
    pub gt_id: i64,
    pub pred_id: i64,
    /// IoU or center distance of the pair.
    pub measure: f64,
    pub switch: bool,
}

/// Everything that happened in one frame of the evaluation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameEvents {
    pub index: i64,
    pub matches: Vec<MatchEvent>,
    /// `(class_id, gt_id)` of unmatched ground truth.
    pub misses: Vec<(u32, i64)>,
    /// `(class_id, pred_id)` of unmatched predictions.
    pub false_positives: Vec<(u32, i64)>,
}

/// Per-frame event log of one sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct MotLedger {
    pub criterion: TpCriterion,
    pub frames: Vec<FrameEvents>,
}

/// Summable raw counts. Ratios are only formed in [`MotCounts::report`], so
/// several sequences are combined by adding their counts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotCounts {
    pub gt_total: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub frag: usize,
    pub trajectories: usize,
    pub mostly_tracked: usize,
    pub mostly_lost: usize,
    pub measure_sum: f64,
}

impl AddAssign for MotCounts {
    fn add_assign(&mut self, o: Self) {
        self.gt_total += o.gt_total;
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
        self.idsw += o.idsw;
        self.frag += o.frag;
        self.trajectories += o.trajectories;
        self.mostly_tracked += o.mostly_tracked;
        self.mostly_lost += o.mostly_lost;
        self.measure_sum += o.measure_sum;
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotReport {
    pub mota: f64,
    /// Mean IoU of true positives under an IoU criterion, mean center
    /// distance under a distance criterion. NaN without true positives.
    pub motp: f64,
    pub gt_total: usize,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub frag: usize,
    pub fp_rate: f64,
    pub fn_rate: f64,
    pub idsw_rate: f64,
    pub mt: f64,
    pub ml: f64,
    pub trajectories: usize,
}

impl MotCounts {
    pub fn report(&self) -> Result<MotReport> {
        if self.gt_total == 0 {
            return Err(Error::InvalidSequence("ground truth contains no objects".into()));
        }
        let p = self.gt_total as f64;
        let t = self.trajectories.max(1) as f64;
        Ok(MotReport {
            mota: 1.0 - (self.fp + self.fn_ + self.idsw) as f64 / p,
            motp: if self.tp == 0 { f64::NAN } else { self.measure_sum / self.tp as f64 },
            gt_total: self.gt_total,
            tp: self.tp,
            fp: self.fp,
            fn_: self.fn_,
            idsw: self.idsw,
            frag: self.frag,
            fp_rate: self.fp as f64 / p,
            fn_rate: self.fn_ as f64 / p,
            idsw_rate: self.idsw as f64 / p,
            mt: self.mostly_tracked as f64 / t,
            ml: self.mostly_lost as f64 / t,
            trajectories: self.trajectories,
        })
    }
}

impl MotLedger {
    /// Frame counts plus trajectory statistics. A trajectory's span is the set
    /// of frames its ground-truth box is present in; it is mostly tracked when
    /// matched in more than 80% of them and mostly lost below 20%. A fragment
    /// is a covered frame followed (within the span) by an uncovered one.
    pub fn counts(&self) -> MotCounts {
        let mut c = MotCounts::default();
        let mut coverage: BTreeMap<(u32, i64), Vec<bool>> = BTreeMap::new();
        for f in &self.frames {
            c.tp += f.matches.len();
            c.fp += f.false_positives.len();
            c.fn_ += f.misses.len();
            for m in &f.matches {
                c.idsw += m.switch as usize;
                c.measure_sum += m.measure;
                coverage.entry((m.class_id, m.gt_id)).or_default().push(true);
            }
            for &key in &f.misses {
                coverage.entry(key).or_default().push(false);
            }
        }
        c.gt_total = c.tp + c.fn_;
        c.trajectories = coverage.len();
        for covered in coverage.values() {
            let hit = covered.iter().filter(|&&b| b).count() as f64;
            let ratio = hit / covered.len() as f64;
            c.mostly_tracked += (ratio > 0.8) as usize;
            c.mostly_lost += (ratio < 0.2) as usize;
            c.frag += covered.windows(2).filter(|w| w[0] && !w[1]).count();
        }
        c
    }
}

/// CLEAR-MOT evaluation of one sequence.
///
/// Frames without predictions count as empty; a prediction frame that is not
/// a ground-truth frame is an error. See [`clear_mot_ledger`] for the
/// matching rule.
pub fn clear_mot(gt: &SequenceData, pred: &SequenceData, crit: TpCriterion) -> Result<MotReport> {
    clear_mot_ledger(gt, pred, crit, None)?.counts().report()
}

/// Per-frame CLEAR-MOT events, optionally ignoring predictions below `min_conf`.
///
/// In every frame, ground truth is first paired with the prediction id it was
/// last matched to, when that prediction is present and still a true
/// positive (ground truth in frame order, each prediction used once). The
/// remaining boxes are matched by a gated assignment taking the most pairs,
/// then the lowest total cost (`1 - IoU` or distance). A ground-truth id whose
/// new partner differs from its last one is an identity switch.
pub fn clear_mot_ledger(
    gt: &SequenceData,
    pred: &SequenceData,
    crit: TpCriterion,
    min_conf: Option<f64>,
) -> Result<MotLedger> {
    let pairing = check_inputs(gt, pred, &crit)?;
    let empty = Frame::new(0, Vec::new());
    let mut last: HashMap<(u32, i64), i64> = HashMap::new();
    let mut frames = Vec::with_capacity(gt.len());
    for (g, p) in gt.frames.iter().zip(pairing) {
        let pf = p.map_or(&empty, |j| &pred.frames[j]);
        let preds: Vec<&LabeledBox> = pf
            .objects
            .iter()
            .filter(|o| min_conf.is_none_or(|c| o.confidence >= c))
            .collect();
        frames.push(evaluate_frame(g, &preds, &crit, &mut last)?);
    }
    Ok(MotLedger { criterion: crit, frames })
}

fn evaluate_frame(
    g: &Frame,
    preds: &[&LabeledBox],
    crit: &TpCriterion,
    last: &mut HashMap<(u32, i64), i64>,
) -> Result<FrameEvents> {
    let n = g.objects.len();
    let m = preds.len();
    let mut gt_partner: Vec<Option<(usize, f64)>> = vec![None; n];
    let mut pred_used = vec![false; m];

    for (i, o) in g.objects.iter().enumerate() {
        let Some(&prev) = last.get(&(o.class_id, o.id)) else {
            continue;
        };
        let hit = preds
            .iter()
            .position(|p| p.id == prev && p.class_id == o.class_id);
        if let Some(j) = hit {
            if pred_used[j] {
                continue;
            }
            if let Some(v) = crit.measure(o, preds[j]) {
                gt_partner[i] = Some((j, v));
                pred_used[j] = true;
            }
        }
    }

    let rows: Vec<usize> = (0..n).filter(|&i| gt_partner[i].is_none()).collect();
    let cols: Vec<usize> = (0..m).filter(|&j| !pred_used[j]).collect();
    if !rows.is_empty() && !cols.is_empty() {
        let measures: Vec<Option<f64>> = rows
            .iter()
            .flat_map(|&i| cols.iter().map(move |&j| (i, j)))
            .map(|(i, j)| crit.measure(&g.objects[i], preds[j]))
            .collect();
        let k = cols.len();
        let cost = CostMatrix::from_fn(rows.len(), k, |a, b| measures[a * k + b].map_or(0.0, |v| crit.cost(v)));
        let gate = CostMatrix::from_fn(rows.len(), k, |a, b| {
            if measures[a * k + b].is_some() {
                f64::INFINITY
            } else {
                f64::NEG_INFINITY
            }
        });
        for (a, b) in hungarian_match(&cost, &gate)?.matches {
            let v = measures[a * k + b].expect("assignment respects the gate");
            gt_partner[rows[a]] = Some((cols[b], v));
            pred_used[cols[b]] = true;
        }
    }

    let mut events = FrameEvents {
        index: g.index,
        ..FrameEvents::default()
    };
    for (o, partner) in g.objects.iter().zip(gt_partner) {
        let key = (o.class_id, o.id);
        match partner {
            Some((j, measure)) => {
                let pred_id = preds[j].id;
                let switch = last.get(&key).is_some_and(|&prev| prev != pred_id);
                last.insert(key, pred_id);
                events.matches.push(MatchEvent {
                    class_id: o.class_id,
                    gt_id: o.id,
                    pred_id,
                    measure,
                    switch,
                });
            }
            None => events.misses.push(key),
        }
    }
    for (j, p) in preds.iter().enumerate() {
        if !pred_used[j] {
            events.false_positives.push((p.class_id, p.id));
        }
    }
    Ok(events)
}
