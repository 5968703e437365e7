use std::collections::BTreeMap;

use super::{check_inputs, clear_mot_ledger, MotCounts, TpCriterion};
use crate::error::{Error, Result};
use crate::types::SequenceData;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmotaConfig {
    /// Recall grid size; the grid is `1/(n-1), 2/(n-1), ..., 1`.
    pub n: usize,
    pub alpha: f64,
}

impl Default for AmotaConfig {
    fn default() -> Self {
        Self { n: 40, alpha: 0.2 }
    }
}

impl AmotaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "AMOTA needs n >= 2 and alpha > 0, got n={} alpha={}",
                self.n, self.alpha
            )));
        }
        Ok(())
    }
}

/// `n=40,alpha=0.2`; either key may be omitted and keeps its default.
impl std::str::FromStr for AmotaConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let mut cfg = AmotaConfig::default();
        let bad = || Error::Config(format!("AMOTA spec `{s}` is not of the form n=<int>,alpha=<real>"));
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(bad)?;
            match k.trim() {
                "n" => cfg.n = v.trim().parse().map_err(|_| bad())?,
                "alpha" => cfg.alpha = v.trim().parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AmotaResult {
    pub amota: f64,
    /// Mean MOTP over the recall targets that were reached; `None` if none was.
    pub amotp: Option<f64>,
    pub recall_grid: Vec<f64>,
    pub mota_r: Vec<f64>,
    /// Confidence cutoff chosen for each recall target.
    pub thresholds: Vec<Option<f64>>,
}

/// Recall-averaged MOTA.
///
/// Candidate cutoffs are the distinct prediction confidences. For a recall
/// target `r` the cutoff is the highest one whose CLEAR-MOT recall
/// (`TP / P`) reaches `r`, and with that cutoff's counts and its achieved
/// recall `r'`:
///
/// `MOTA_r = max(0, 1 - alpha * (IDSW + FP + FN - (1 - r') P) / (r' P))`.
///
/// Targets no cutoff reaches score 0. AMOTA is the mean over the grid.
pub fn amota(gt: &SequenceData, pred: &SequenceData, crit: TpCriterion, cfg: AmotaConfig) -> Result<AmotaResult> {
    cfg.validate()?;
    check_inputs(gt, pred, &crit)?;
    let p = gt.total_objects();
    let mut confs: Vec<f64> = pred
        .frames
        .iter()
        .flat_map(|f| f.objects.iter().map(|o| o.confidence))
        .collect();
    if confs.iter().any(|c| c.is_nan()) {
        return Err(Error::NonFinite("prediction confidence"));
    }
    confs.sort_unstable_by(|a, b| b.total_cmp(a));
    confs.dedup();

    // Highest cutoff first; stop as soon as full recall is reached.
    let mut scanned: Vec<(f64, MotCounts)> = Vec::new();
    for &c in &confs {
        let counts = clear_mot_ledger(gt, pred, crit, Some(c))?.counts();
        let full = counts.tp == p;
        scanned.push((c, counts));
        if full {
            break;
        }
    }

    let steps = cfg.n - 1;
    let mut result = AmotaResult {
        amota: 0.0,
        amotp: None,
        recall_grid: Vec::with_capacity(steps),
        mota_r: Vec::with_capacity(steps),
        thresholds: Vec::with_capacity(steps),
    };
    let mut motp_sum = 0.0;
    let mut reached = 0usize;
    for k in 1..=steps {
        result.recall_grid.push(k as f64 / steps as f64);
        // tp / p >= k / steps, compared exactly.
        let hit = scanned.iter().find(|(_, c)| c.tp * steps >= k * p);
        match hit {
            Some(&(cut, c)) => {
                let excess = (c.idsw + c.fp + c.fn_) as f64 - (p - c.tp) as f64;
                let v = 1.0 - cfg.alpha * excess / c.tp as f64;
                result.mota_r.push(v.max(0.0));
                result.thresholds.push(Some(cut));
                motp_sum += c.measure_sum / c.tp as f64;
                reached += 1;
            }
            None => {
                result.mota_r.push(0.0);
                result.thresholds.push(None);
            }
        }
    }
    result.amota = result.mota_r.iter().sum::<f64>() / steps as f64;
    result.amotp = (reached > 0).then(|| motp_sum / reached as f64);
    Ok(result)
}

/// AMOTA per ground-truth class, plus the unweighted mean over classes.
pub fn amota_by_class(
    gt: &SequenceData,
    pred: &SequenceData,
    crit: TpCriterion,
    cfg: AmotaConfig,
) -> Result<(f64, BTreeMap<u32, AmotaResult>)> {
    let mut out = BTreeMap::new();
    for (class, g) in gt.partition_by_class() {
        let p = pred.filtered(|o| o.class_id == class);
        out.insert(class, amota(&g, &p, crit, cfg)?);
    }
    if out.is_empty() {
        return Err(Error::InvalidSequence("ground truth contains no objects".into()));
    }
    let mean = out.values().map(|r| r.amota).sum::<f64>() / out.len() as f64;
    Ok((mean, out))
}
