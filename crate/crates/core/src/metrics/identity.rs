use std::collections::HashMap;

use super::{check_inputs, TpCriterion};
use crate::association::{min_cost_assignment, CostMatrix};
use crate::error::Result;
use crate::types::SequenceData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityScores {
    pub idf1: f64,
    pub idp: f64,
    pub idr: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Identity F1 under the best one-to-one mapping of ground-truth trajectories
/// to predicted trajectories.
pub fn idf1(gt: &SequenceData, pred: &SequenceData, crit: TpCriterion) -> Result<f64> {
    Ok(identity_scores(gt, pred, crit)?.idf1)
}

/// Trajectory pairs score one point per frame in which both are present and
/// the criterion accepts them; the mapping maximises the total score.
pub fn identity_scores(gt: &SequenceData, pred: &SequenceData, crit: TpCriterion) -> Result<IdentityScores> {
    let pairing = check_inputs(gt, pred, &crit)?;
    let mut overlap: HashMap<((u32, i64), (u32, i64)), usize> = HashMap::new();
    for (g, p) in gt.frames.iter().zip(pairing) {
        let Some(j) = p else { continue };
        for a in &g.objects {
            for b in &pred.frames[j].objects {
                if crit.measure(a, b).is_some() {
                    *overlap.entry(((a.class_id, a.id), (b.class_id, b.id))).or_default() += 1;
                }
            }
        }
    }
    let mut rows: Vec<(u32, i64)> = overlap.keys().map(|k| k.0).collect();
    let mut cols: Vec<(u32, i64)> = overlap.keys().map(|k| k.1).collect();
    for v in [&mut rows, &mut cols] {
        v.sort_unstable();
        v.dedup();
    }
    let cost = CostMatrix::from_fn(rows.len(), cols.len(), |i, j| {
        -(overlap.get(&(rows[i], cols[j])).copied().unwrap_or(0) as f64)
    });
    let idtp: usize = min_cost_assignment(&cost)?
        .into_iter()
        .map(|(i, j)| overlap.get(&(rows[i], cols[j])).copied().unwrap_or(0))
        .sum();
    let n_gt = gt.total_objects();
    let n_pred = pred.total_objects();
    Ok(IdentityScores {
        idf1: 2.0 * idtp as f64 / (n_gt + n_pred) as f64,
        idp: if n_pred == 0 { 0.0 } else { idtp as f64 / n_pred as f64 },
        idr: idtp as f64 / n_gt as f64,
        idtp,
        idfp: n_pred - idtp,
        idfn: n_gt - idtp,
    })
}
