//! Simulate, track and evaluate in one call, and cross-product ablations.

use std::time::{Duration, Instant};

use crate::association::{TrackerConfig, TrackerState, TrackingMode};
use crate::error::{Error, Result};
use crate::io::config::{EvalConfig, RunConfig};
use crate::metrics::{amota, clear_mot, idf1, AmotaResult, MotReport};
use crate::simulator::{corrupt_sequence, generate_world, subsample, NoiseConfig, SimulatedDetection, WorldConfig};
use crate::types::{Detection, Frame, LabeledBox, SequenceData};

#[derive(Debug, Clone, PartialEq)]
pub struct EvalSummary {
    pub report: MotReport,
    pub idf1: f64,
    pub amota: Option<AmotaResult>,
}

pub fn evaluate(gt: &SequenceData, pred: &SequenceData, eval: &EvalConfig) -> Result<EvalSummary> {
    Ok(EvalSummary {
        report: clear_mot(gt, pred, eval.criterion)?,
        idf1: idf1(gt, pred, eval.criterion)?,
        amota: eval.amota.map(|a| amota(gt, pred, eval.criterion, a)).transpose()?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub gt: SequenceData,
    pub detections: Vec<(i64, Vec<SimulatedDetection>)>,
}

impl Simulation {
    pub fn plain_detections(&self) -> Vec<(i64, Vec<Detection>)> {
        self.detections
            .iter()
            .map(|(f, d)| (*f, d.iter().map(|s| s.detection).collect()))
            .collect()
    }
}

/// World, subsampling and detector errors for one run configuration.
pub fn simulate(cfg: &RunConfig) -> Result<Simulation> {
    let world = generate_world(&cfg.world)?;
    let gt = subsample(&world, cfg.stride)?;
    let detections = corrupt_sequence(&gt, &cfg.noise)?;
    Ok(Simulation { gt, detections })
}

/// Tracker output as a sequence over the same frames as `frames`, plus the
/// time spent inside the tracker.
pub fn track_frames(
    frames: &[(i64, Vec<Detection>)],
    cfg: &TrackerConfig,
    image_size: (f64, f64),
    framerate: f64,
) -> Result<(SequenceData, Duration)> {
    if cfg.mode == TrackingMode::Public {
        return Err(Error::ModeMismatch("public tracking needs external public detections"));
    }
    let mut state = TrackerState::new();
    let mut out = Vec::with_capacity(frames.len());
    let mut spent = Duration::ZERO;
    for (index, dets) in frames {
        let start = Instant::now();
        let tracks = state.step(*index, dets, cfg)?;
        spent += start.elapsed();
        let objects = tracks
            .iter()
            .map(|t| LabeledBox {
                id: t.id.0 as i64,
                class_id: t.class_id,
                bbox: t.bbox,
                confidence: t.confidence,
                pos3d: t.pos3d,
            })
            .collect();
        out.push(Frame::new(*index, objects));
    }
    Ok((SequenceData::new(out, image_size, framerate)?, spent))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineRun {
    pub simulation: Simulation,
    pub tracks: SequenceData,
    pub summary: EvalSummary,
    pub association_time: Duration,
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let simulation = simulate(cfg)?;
    let dets = simulation.plain_detections();
    let gt = &simulation.gt;
    let (tracks, association_time) = track_frames(&dets, &cfg.tracker, gt.image_size, gt.framerate)?;
    let summary = evaluate(gt, &tracks, &cfg.eval)?;
    Ok(PipelineRun {
        simulation,
        tracks,
        summary,
        association_time,
    })
}

pub const GRID_AXES: [&str; 12] = [
    "motion",
    "theta",
    "tau",
    "rebirth_k",
    "matcher",
    "threshold_stage",
    "lambda_jt",
    "lambda_fp",
    "lambda_fn",
    "offset_noise_std",
    "stride",
    "seed",
];

/// Ordered ablation axes; cells are enumerated with the last axis varying fastest.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Grid {
    pub axes: Vec<(String, Vec<String>)>,
}

impl Grid {
    /// Adds an axis from `name=v1,v2,...`. An axis may only appear once.
    pub fn push_spec(&mut self, spec: &str) -> Result<()> {
        let (name, values) = spec
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("grid axis `{spec}` is not of the form name=v1,v2")))?;
        let name = name.trim();
        if !GRID_AXES.contains(&name) {
            return Err(Error::Config(format!(
                "unknown grid axis `{name}` (expected one of {})",
                GRID_AXES.join(", ")
            )));
        }
        if self.axes.iter().any(|(n, _)| n == name) {
            return Err(Error::Config(format!("grid axis `{name}` given twice")));
        }
        let values: Vec<String> = values.split(',').map(|v| v.trim().to_string()).collect();
        if values.iter().any(String::is_empty) {
            return Err(Error::Config(format!("grid axis `{name}` has an empty value")));
        }
        self.axes.push((name.to_string(), values));
        Ok(())
    }

    pub fn cell_count(&self) -> usize {
        self.axes.iter().map(|(_, v)| v.len()).product()
    }

    /// Every cell as `(axis, value)` pairs; an empty grid has one empty cell.
    pub fn cells(&self) -> Vec<Vec<(String, String)>> {
        let mut cells: Vec<Vec<(String, String)>> = vec![Vec::new()];
        for (name, values) in &self.axes {
            cells = cells
                .into_iter()
                .flat_map(|c| {
                    values.iter().map(move |v| {
                        let mut c = c.clone();
                        c.push((name.clone(), v.clone()));
                        c
                    })
                })
                .collect();
        }
        cells
    }
}

fn parse_value<T: std::str::FromStr>(axis: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for grid axis `{axis}`")))
}

/// Applies one grid value to a configuration.
pub fn apply_axis(cfg: &mut RunConfig, axis: &str, v: &str) -> Result<()> {
    match axis {
        "motion" => cfg.tracker.motion.kind = v.parse()?,
        "theta" => cfg.tracker.theta = parse_value(axis, v)?,
        "tau" => cfg.tracker.tau = parse_value(axis, v)?,
        "rebirth_k" => cfg.tracker.rebirth_k = parse_value(axis, v)?,
        "matcher" => cfg.tracker.matcher = v.parse()?,
        "threshold_stage" => cfg.tracker.threshold_stage = v.parse()?,
        "lambda_jt" => cfg.noise.lambda_jt = parse_value(axis, v)?,
        "lambda_fp" => cfg.noise.lambda_fp = parse_value(axis, v)?,
        "lambda_fn" => cfg.noise.lambda_fn = parse_value(axis, v)?,
        "offset_noise_std" => cfg.noise.offset_noise_std = parse_value(axis, v)?,
        "stride" => cfg.stride = parse_value(axis, v)?,
        "seed" => *cfg = cfg.clone().with_seed(parse_value(axis, v)?),
        other => return Err(Error::Config(format!("unknown grid axis `{other}`"))),
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub cell: Vec<(String, String)>,
    pub summary: EvalSummary,
}

/// One pipeline run per grid cell. Simulations are shared between cells that
/// only differ in tracker settings, so those cells see identical detections.
pub fn run_ablation(base: &RunConfig, grid: &Grid) -> Result<Vec<AblationRow>> {
    let mut sims: Vec<(WorldConfig, NoiseConfig, usize, Simulation)> = Vec::new();
    let mut rows = Vec::with_capacity(grid.cell_count());
    for cell in grid.cells() {
        let mut cfg = base.clone();
        for (axis, v) in &cell {
            apply_axis(&mut cfg, axis, v)?;
        }
        cfg.validate()?;
        let cached = sims
            .iter()
            .position(|(w, n, s, _)| *w == cfg.world && *n == cfg.noise && *s == cfg.stride);
        let at = match cached {
            Some(i) => i,
            None => {
                sims.push((cfg.world, cfg.noise, cfg.stride, simulate(&cfg)?));
                sims.len() - 1
            }
        };
        let sim = &sims[at].3;
        let (tracks, _) = track_frames(&sim.plain_detections(), &cfg.tracker, sim.gt.image_size, sim.gt.framerate)?;
        rows.push(AblationRow {
            summary: evaluate(&sim.gt, &tracks, &cfg.eval)?,
            cell,
        });
    }
    Ok(rows)
}
