//! Motion models that turn a (detection, track) pair into an association
//! cost, and the constant-velocity Kalman filter behind the `kalman` model.

use std::fmt;
use std::str::FromStr;

use nalgebra::{SMatrix, SVector};

use crate::error::{Error, Result};
use crate::types::{BBox, Detection, Vec2};

pub type StateVec = SVector<f64, 8>;
pub type StateCov = SMatrix<f64, 8, 8>;
type MeasVec = SVector<f64, 4>;
type MeasCov = SMatrix<f64, 4, 4>;
type Gain = SMatrix<f64, 8, 4>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MotionKind {
    /// Distance between the current center and the track's last center.
    Zero,
    /// Distance between the current center and the Kalman-predicted center.
    Kalman,
    /// Back-project the detection with its own predicted offset.
    DetectionOffset,
    /// Back-project with an offset supplied from outside (optical-flow hook).
    ExternalOffset,
}

impl MotionKind {
    pub const ALL: [MotionKind; 4] = [
        MotionKind::Zero,
        MotionKind::Kalman,
        MotionKind::DetectionOffset,
        MotionKind::ExternalOffset,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MotionKind::Zero => "zero",
            MotionKind::Kalman => "kalman",
            MotionKind::DetectionOffset => "offset",
            MotionKind::ExternalOffset => "external",
        }
    }
}

impl fmt::Display for MotionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for MotionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" | "none" => Ok(MotionKind::Zero),
            "kalman" => Ok(MotionKind::Kalman),
            "offset" | "detection_offset" => Ok(MotionKind::DetectionOffset),
            "external" | "external_offset" => Ok(MotionKind::ExternalOffset),
            other => Err(Error::Config(format!("unknown motion model '{other}'"))),
        }
    }
}

/// Noise scales as fractions of the box geometric mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanParams {
    /// Process noise std per frame, for both position/size and velocity components.
    pub process_scale: f64,
    /// Measurement noise std on (x, y, w, h).
    pub measurement_scale: f64,
    /// Initial std of the (unknown) velocity components.
    pub initial_velocity_scale: f64,
}

impl Default for KalmanParams {
    fn default() -> Self {
        Self {
            process_scale: 1.0 / 20.0,
            measurement_scale: 1.0 / 20.0,
            initial_velocity_scale: 10.0 / 20.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub kind: MotionKind,
    pub kalman: KalmanParams,
}

impl MotionModel {
    pub fn new(kind: MotionKind) -> Self {
        Self {
            kind,
            kalman: KalmanParams::default(),
        }
    }
}

impl Default for MotionModel {
    fn default() -> Self {
        Self::new(MotionKind::DetectionOffset)
    }
}

/// Constant-velocity state over `(x, y, w, h)` and their per-frame rates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KalmanState {
    pub mean: StateVec,
    pub covariance: StateCov,
}

impl KalmanState {
    /// Starts a track at `obs` with zero velocity.
    pub fn initiate(obs: &BBox, params: &KalmanParams) -> Self {
        let c = obs.center();
        let mut mean = StateVec::zeros();
        mean[0] = c.x;
        mean[1] = c.y;
        mean[2] = obs.width();
        mean[3] = obs.height();
        let g = obs.geometric_mean();
        let pos_std = params.measurement_scale * g;
        let vel_std = params.initial_velocity_scale * g;
        let mut diag = StateVec::zeros();
        for i in 0..4 {
            diag[i] = pos_std * pos_std;
            diag[i + 4] = vel_std * vel_std;
        }
        Self {
            mean,
            covariance: StateCov::from_diagonal(&diag),
        }
    }

    pub fn center(&self) -> Vec2 {
        Vec2::new(self.mean[0], self.mean[1])
    }

    pub fn velocity(&self) -> Vec2 {
        Vec2::new(self.mean[4], self.mean[5])
    }

    fn scale(&self) -> f64 {
        (self.mean[2].abs() * self.mean[3].abs()).sqrt()
    }

    pub fn is_psd(&self) -> bool {
        is_psd(&self.covariance)
    }
}

fn transition() -> StateCov {
    let mut f = StateCov::identity();
    for i in 0..4 {
        f[(i, i + 4)] = 1.0;
    }
    f
}

/// Symmetric and Cholesky-factorizable after a `1e-9` diagonal jitter.
pub fn is_psd(cov: &StateCov) -> bool {
    let sym = (cov - cov.transpose()).abs().max() <= 1e-9 * (1.0 + cov.abs().max());
    let scale = 1.0 + cov.diagonal().abs().max();
    sym && (cov + StateCov::identity() * 1e-9 * scale).cholesky().is_some()
}

/// One frame of constant-velocity motion.
pub fn kalman_predict(state: &KalmanState, params: &KalmanParams) -> KalmanState {
    let f = transition();
    let q_std = params.process_scale * state.scale();
    let q = StateCov::identity() * (q_std * q_std);
    let mean = f * state.mean;
    let covariance = f * state.covariance * f.transpose() + q;
    KalmanState {
        mean,
        covariance: symmetrize(covariance),
    }
}

/// Linear measurement update on `(x, y, w, h)`.
pub fn kalman_update(
    state: &KalmanState,
    obs: &BBox,
    params: &KalmanParams,
) -> Result<KalmanState> {
    let mut h = SMatrix::<f64, 4, 8>::zeros();
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    let z = MeasVec::new(obs.center().x, obs.center().y, obs.width(), obs.height());
    let r_std = params.measurement_scale * obs.geometric_mean();
    let r = MeasCov::identity() * (r_std * r_std);
    let p = &state.covariance;
    let s: MeasCov = symmetrize4(h * p * h.transpose() + r);
    let s_inv = match s.cholesky() {
        Some(ch) => ch.inverse(),
        // Zero-noise limit: the innovation covariance can be singular.
        None => s
            .pseudo_inverse(1e-12 * (1.0 + s.abs().max()))
            .map_err(|_| Error::NotPsd)?,
    };
    let k: Gain = p * h.transpose() * s_inv;
    let innovation = z - h * state.mean;
    let mean = state.mean + k * innovation;
    // Joseph form keeps the covariance symmetric PSD.
    let i_kh = StateCov::identity() - k * h;
    let covariance = symmetrize(i_kh * p * i_kh.transpose() + k * r * k.transpose());
    let next = KalmanState { mean, covariance };
    if !next.is_psd() {
        return Err(Error::NotPsd);
    }
    Ok(next)
}

fn symmetrize(m: StateCov) -> StateCov {
    (m + m.transpose()) * 0.5
}

fn symmetrize4(m: MeasCov) -> MeasCov {
    (m + m.transpose()) * 0.5
}

/// Association cost in pixels between a detection and a track's reference
/// point. `track_center` is the last observed center; `kalman` the (already
/// predicted) filter state when the model is Kalman.
pub fn association_cost(
    det: &Detection,
    track_center: Vec2,
    kalman: Option<&KalmanState>,
    kind: MotionKind,
    track_id: u64,
) -> Result<f64> {
    let p = det.point();
    Ok(match kind {
        MotionKind::Zero => p.distance(track_center),
        MotionKind::DetectionOffset | MotionKind::ExternalOffset => {
            (p - det.offset).distance(track_center)
        }
        MotionKind::Kalman => {
            let state = kalman.ok_or(Error::MissingKalmanState(track_id))?;
            p.distance(state.center())
        }
    })
}
