//! Training-objective kernels with analytic gradients: the penalty-reduced
//! focal loss on heatmaps and the masked L1 regression loss used for size,
//! offset, amodal-border and 3D-center-offset heads.

use crate::error::{Error, Result};
use crate::heatmap::DenseMap;

/// Predicted heatmap values are clamped to `[PRED_EPS, 1 - PRED_EPS]` before logs.
pub const PRED_EPS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FocalParams {
    /// Focusing exponent on the prediction.
    pub alpha: f64,
    /// Exponent that reduces the penalty near ground-truth peaks.
    pub beta: f64,
}

impl Default for FocalParams {
    fn default() -> Self {
        Self {
            alpha: 2.0,
            beta: 4.0,
        }
    }
}

impl FocalParams {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha >= 0.0 && beta >= 0.0) {
            return Err(Error::Config(format!(
                "focal exponents must be non-negative, got alpha={alpha} beta={beta}"
            )));
        }
        Ok(Self { alpha, beta })
    }
}

fn check_same_shape(a: &DenseMap, b: &DenseMap) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.shape()),
            actual: format!("{:?}", b.shape()),
        });
    }
    Ok(())
}

/// Non-negative focal loss, normalized by `max(n_objects, 1)`, and its
/// gradient with respect to every predicted cell. Cells with target exactly
/// 1 are positives; every other cell takes the penalty-reduced negative term.
pub fn focal_loss(
    pred: &DenseMap,
    target: &DenseMap,
    params: FocalParams,
    n_objects: usize,
) -> Result<(f64, DenseMap)> {
    check_same_shape(pred, target)?;
    if pred.values().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("predicted heatmap"));
    }
    if target.values().iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("target heatmap"));
    }
    let norm = n_objects.max(1) as f64;
    let FocalParams { alpha, beta } = params;
    let mut grad = DenseMap::zeros(pred.width(), pred.height(), pred.channels());
    let mut total = 0.0;
    for (i, (&raw, &y)) in pred.values().iter().zip(target.values()).enumerate() {
        let p = raw.clamp(PRED_EPS, 1.0 - PRED_EPS);
        let clamped = p != raw;
        let (term, dterm) = if y == 1.0 {
            let q = 1.0 - p;
            let term = q.powf(alpha) * p.ln();
            let d = q.powf(alpha) / p - alpha * powm1(q, alpha) * p.ln();
            (term, d)
        } else {
            let weight = (1.0 - y).powf(beta);
            let lq = (1.0 - p).ln();
            let term = weight * p.powf(alpha) * lq;
            let d = weight * (alpha * powm1(p, alpha) * lq - p.powf(alpha) / (1.0 - p));
            (term, d)
        };
        total += term;
        grad.values_mut()[i] = if clamped { 0.0 } else { -dterm / norm };
    }
    Ok((-total / norm, grad))
}

// x^(a-1) with the a = 0 case mapped to zero so that a * x^(a-1) vanishes.
fn powm1(x: f64, a: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        x.powf(a - 1.0)
    }
}

/// Regression supervision at sparse grid locations.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RegressionTarget {
    pub locations: Vec<(usize, usize)>,
    pub targets: Vec<Vec<f64>>,
}

impl RegressionTarget {
    pub fn new(locations: Vec<(usize, usize)>, targets: Vec<Vec<f64>>) -> Result<Self> {
        if locations.len() != targets.len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{} targets", locations.len()),
                actual: format!("{} targets", targets.len()),
            });
        }
        Ok(Self { locations, targets })
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }
}

/// Gradient entries at supervised cells, one per distinct location in
/// first-appearance order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseGrad {
    pub entries: Vec<((usize, usize), Vec<f64>)>,
}

impl SparseGrad {
    pub fn get(&self, loc: (usize, usize)) -> Option<&[f64]> {
        self.entries
            .iter()
            .find(|(l, _)| *l == loc)
            .map(|(_, g)| g.as_slice())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// `(1 / max(N, 1)) * sum_i |pred[p_i] - t_i|_1` with the subgradient
/// `sign(pred - t) / max(N, 1)` at each supervised cell.
pub fn masked_l1_loss(pred: &DenseMap, tgt: &RegressionTarget) -> Result<(f64, SparseGrad)> {
    let k = pred.channels();
    let norm = tgt.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = SparseGrad::default();
    for (&(x, y), t) in tgt.locations.iter().zip(&tgt.targets) {
        if !pred.contains(x, y) {
            return Err(Error::OutOfGrid {
                x,
                y,
                width: pred.width(),
                height: pred.height(),
            });
        }
        if t.len() != k {
            return Err(Error::ShapeMismatch {
                expected: format!("{k}-vector target"),
                actual: format!("{}-vector", t.len()),
            });
        }
        let cell = pred.cell(x, y);
        let slot = match grad.entries.iter().position(|(l, _)| *l == (x, y)) {
            Some(i) => i,
            None => {
                grad.entries.push(((x, y), vec![0.0; k]));
                grad.entries.len() - 1
            }
        };
        for c in 0..k {
            let r = cell[c] - t[c];
            loss += r.abs();
            grad.entries[slot].1[c] += sign(r) / norm;
        }
    }
    Ok((loss / norm, grad))
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Box-size regression (2 channels: width, height).
pub fn size_loss(pred: &DenseMap, tgt: &RegressionTarget) -> Result<(f64, SparseGrad)> {
    expect_channels(pred, 2)?;
    masked_l1_loss(pred, tgt)
}

/// Backward-displacement regression (2 channels); targets are the
/// previous-frame center minus the current center.
pub fn offset_loss(pred: &DenseMap, tgt: &RegressionTarget) -> Result<(f64, SparseGrad)> {
    expect_channels(pred, 2)?;
    masked_l1_loss(pred, tgt)
}

/// Amodal border regression (4 channels: top, left, bottom, right).
pub fn amodal_size_loss(pred: &DenseMap, tgt: &RegressionTarget) -> Result<(f64, SparseGrad)> {
    expect_channels(pred, 4)?;
    masked_l1_loss(pred, tgt)
}

/// Offset from the 2D center to the projected 3D box center (2 channels).
pub fn center3d_offset_loss(
    pred: &DenseMap,
    tgt: &RegressionTarget,
) -> Result<(f64, SparseGrad)> {
    expect_channels(pred, 2)?;
    masked_l1_loss(pred, tgt)
}

fn expect_channels(pred: &DenseMap, k: usize) -> Result<()> {
    if pred.channels() != k {
        return Err(Error::ShapeMismatch {
            expected: format!("{k} channels"),
            actual: format!("{} channels", pred.channels()),
        });
    }
    Ok(())
}

/// Weights of the combined objective. The defaults are implementer-chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub focal: f64,
    pub size: f64,
    pub offset: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            focal: 1.0,
            size: 0.1,
            offset: 1.0,
        }
    }
}

impl LossWeights {
    pub fn combine(&self, focal: f64, size: f64, offset: f64) -> f64 {
        self.focal * focal + self.size * size + self.offset * offset
    }
}
