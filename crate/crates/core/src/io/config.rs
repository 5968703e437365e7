//! Run configuration: a versioned TOML file layered over a dataset preset.
//!
//! ```toml
//! version = 1
//! preset = "kitti"      # mot | kitti | nuscenes_like | custom
//! seed = 7
//!
//! [tracker]
//! theta = 0.4
//! motion = "offset"
//!
//! [noise]
//! lambda_fn = 0.3
//!
//! [world]
//! frames = 300
//! stride = 2
//!
//! [eval]
//! criterion = "iou:0.5"
//! amota = true
//! ```
//!
//! Every key is optional and overrides the preset; unknown keys are errors.
//! The world and noise seeds are derived from the top-level `seed`.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::association::{Matcher, ThresholdStage, TrackerConfig, TrackingMode};
use crate::error::{Error, Result};
use crate::metrics::{AmotaConfig, TpCriterion};
use crate::motion::MotionKind;
use crate::simulator::{mix_seed, NoiseConfig, WorldConfig};

pub const CONFIG_VERSION: u32 = 1;
pub const SEED_ENV: &str = "POINTTRACK_SEED";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Mot,
    Kitti,
    NuscenesLike,
    Custom,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mot" => Ok(Preset::Mot),
            "kitti" => Ok(Preset::Kitti),
            "nuscenes_like" => Ok(Preset::NuscenesLike),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::Config(format!(
                "unknown preset '{other}' (expected mot, kitti, nuscenes_like or custom)"
            ))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Mot => "mot",
            Preset::Kitti => "kitti",
            Preset::NuscenesLike => "nuscenes_like",
            Preset::Custom => "custom",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub criterion: TpCriterion,
    pub amota: Option<AmotaConfig>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct OutputConfig {
    pub gt: Option<PathBuf>,
    pub detections: Option<PathBuf>,
    pub tracks: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub preset: Preset,
    pub seed: u64,
    pub tracker: TrackerConfig,
    pub noise: NoiseConfig,
    pub world: WorldConfig,
    /// Keep every `stride`-th simulated frame.
    pub stride: usize,
    pub eval: EvalConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn preset(preset: Preset) -> Self {
        let mut cfg = Self {
            preset,
            seed: 0,
            tracker: TrackerConfig::default(),
            noise: NoiseConfig::default(),
            world: WorldConfig::default(),
            stride: 1,
            eval: EvalConfig {
                criterion: TpCriterion::Iou2d(0.5),
                amota: None,
            },
            output: OutputConfig::default(),
        };
        let (theta, tau, lambda_fn) = match preset {
            Preset::Mot | Preset::Custom => (0.4, 0.5, 0.4),
            Preset::Kitti => (0.4, 0.4, 0.2),
            Preset::NuscenesLike => (0.1, 0.1, 0.4),
        };
        cfg.tracker.theta = theta;
        cfg.tracker.tau = tau;
        cfg.noise.lambda_fp = 0.1;
        cfg.noise.lambda_fn = lambda_fn;
        cfg.noise.conf_fp_range = (theta, 0.7);
        match preset {
            Preset::Kitti => {
                cfg.world.image_size = (1242.0, 375.0);
                cfg.world.framerate = 10.0;
                cfg.world.size_range = (30.0, 120.0);
                cfg.world.speed_range = (2.0, 12.0);
            }
            Preset::NuscenesLike => {
                cfg.world.image_size = (1600.0, 900.0);
                cfg.world.framerate = 2.0;
                cfg.world.size_range = (40.0, 120.0);
                cfg.world.speed_range = (10.0, 40.0);
                cfg.world.meters_per_pixel = Some(0.05);
                cfg.eval.criterion = TpCriterion::CenterDist3d(2.0);
                cfg.eval.amota = Some(AmotaConfig::default());
            }
            Preset::Mot | Preset::Custom => {}
        }
        cfg.with_seed(0)
    }

    /// Sets the run seed and the world/noise seeds derived from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.world.seed = mix_seed(seed, 0);
        self.noise.seed = mix_seed(seed, 1);
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker.validate()?;
        self.noise.validate()?;
        self.world.validate()?;
        self.eval.criterion.validate()?;
        if let Some(a) = &self.eval.amota {
            a.validate()?;
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        raw.resolve()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Seed precedence: command-line flag, then the environment variable, then
/// the config file.
pub fn resolve_seed(flag: Option<u64>, env: Option<&str>, config: u64) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        None => Ok(config),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    version: u32,
    preset: Option<String>,
    seed: Option<u64>,
    tracker: Option<RawTracker>,
    noise: Option<RawNoise>,
    world: Option<RawWorld>,
    eval: Option<RawEval>,
    output: Option<RawOutput>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawTracker {
    theta: Option<f64>,
    tau: Option<f64>,
    rebirth_k: Option<u32>,
    matcher: Option<String>,
    motion: Option<String>,
    mode: Option<String>,
    threshold_stage: Option<String>,
    advance_inactive: Option<bool>,
    kalman_process_scale: Option<f64>,
    kalman_measurement_scale: Option<f64>,
    kalman_initial_velocity_scale: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    lambda_jt: Option<f64>,
    lambda_fp: Option<f64>,
    lambda_fn: Option<f64>,
    offset_noise_std: Option<f64>,
    conf_tp_range: Option<(f64, f64)>,
    conf_fp_range: Option<(f64, f64)>,
    shared_jitter: Option<bool>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawWorld {
    image_size: Option<(f64, f64)>,
    n_objects: Option<usize>,
    framerate: Option<f64>,
    frames: Option<usize>,
    speed_range: Option<(f64, f64)>,
    turn_prob: Option<f64>,
    turn_std: Option<f64>,
    size_range: Option<(f64, f64)>,
    birth_rate: Option<f64>,
    death_rate: Option<f64>,
    occlusion_prob: Option<f64>,
    occlusion_max: Option<u32>,
    frame_sample_window: Option<usize>,
    meters_per_pixel: Option<f64>,
    stride: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawEval {
    criterion: Option<String>,
    amota: Option<bool>,
    amota_n: Option<usize>,
    amota_alpha: Option<f64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    gt: Option<PathBuf>,
    detections: Option<PathBuf>,
    tracks: Option<PathBuf>,
    report: Option<PathBuf>,
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

impl RawConfig {
    fn resolve(self) -> Result<RunConfig> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        let preset = match &self.preset {
            Some(p) => p.parse()?,
            None => Preset::Custom,
        };
        let mut cfg = RunConfig::preset(preset);

        let t = self.tracker.unwrap_or_default();
        let theta_given = t.theta.is_some();
        set(&mut cfg.tracker.theta, t.theta);
        set(&mut cfg.tracker.tau, t.tau);
        set(&mut cfg.tracker.rebirth_k, t.rebirth_k);
        set(&mut cfg.tracker.advance_inactive, t.advance_inactive);
        if let Some(m) = t.matcher {
            cfg.tracker.matcher = m.parse::<Matcher>()?;
        }
        if let Some(m) = t.motion {
            cfg.tracker.motion.kind = m.parse::<MotionKind>()?;
        }
        if let Some(m) = t.mode {
            cfg.tracker.mode = m.parse::<TrackingMode>()?;
        }
        if let Some(s) = t.threshold_stage {
            cfg.tracker.threshold_stage = s.parse::<ThresholdStage>()?;
        }
        let k = &mut cfg.tracker.motion.kalman;
        set(&mut k.process_scale, t.kalman_process_scale);
        set(&mut k.measurement_scale, t.kalman_measurement_scale);
        set(&mut k.initial_velocity_scale, t.kalman_initial_velocity_scale);

        let n = self.noise.unwrap_or_default();
        if theta_given {
            // The false-positive confidence floor follows theta unless given.
            cfg.noise.conf_fp_range.0 = cfg.tracker.theta.min(cfg.noise.conf_fp_range.1);
        }
        set(&mut cfg.noise.lambda_jt, n.lambda_jt);
        set(&mut cfg.noise.lambda_fp, n.lambda_fp);
        set(&mut cfg.noise.lambda_fn, n.lambda_fn);
        set(&mut cfg.noise.offset_noise_std, n.offset_noise_std);
        set(&mut cfg.noise.conf_tp_range, n.conf_tp_range);
        set(&mut cfg.noise.conf_fp_range, n.conf_fp_range);
        set(&mut cfg.noise.shared_jitter, n.shared_jitter);

        let w = self.world.unwrap_or_default();
        set(&mut cfg.world.image_size, w.image_size);
        set(&mut cfg.world.n_objects, w.n_objects);
        set(&mut cfg.world.framerate, w.framerate);
        set(&mut cfg.world.frames, w.frames);
        set(&mut cfg.world.speed_range, w.speed_range);
        set(&mut cfg.world.turn_prob, w.turn_prob);
        set(&mut cfg.world.turn_std, w.turn_std);
        set(&mut cfg.world.size_range, w.size_range);
        set(&mut cfg.world.birth_rate, w.birth_rate);
        set(&mut cfg.world.death_rate, w.death_rate);
        set(&mut cfg.world.occlusion_prob, w.occlusion_prob);
        set(&mut cfg.world.occlusion_max, w.occlusion_max);
        set(&mut cfg.world.frame_sample_window, w.frame_sample_window);
        if w.meters_per_pixel.is_some() {
            cfg.world.meters_per_pixel = w.meters_per_pixel;
        }
        set(&mut cfg.stride, w.stride);

        let e = self.eval.unwrap_or_default();
        if let Some(c) = e.criterion {
            cfg.eval.criterion = c.parse()?;
        }
        let amota_on = e.amota.unwrap_or(cfg.eval.amota.is_some());
        cfg.eval.amota = amota_on.then(|| {
            let mut a = cfg.eval.amota.unwrap_or_default();
            set(&mut a.n, e.amota_n);
            set(&mut a.alpha, e.amota_alpha);
            a
        });

        let o = self.output.unwrap_or_default();
        cfg.output = OutputConfig {
            gt: o.gt,
            detections: o.detections,
            tracks: o.tracks,
            report: o.report,
        };

        cfg = cfg.with_seed(self.seed.unwrap_or(0));
        cfg.validate()?;
        Ok(cfg)
    }
}
