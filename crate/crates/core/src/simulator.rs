//! Synthetic worlds and a detector-error model.
//!
//! [`generate_world`] produces ground-truth trajectories; [`corrupt`] turns a
//! ground-truth frame into the detections a point-based detector would emit:
//! jittered centers, dropped objects, spurious nearby peaks, and noisy
//! backward offsets. [`hallucinate_pair`] fakes a previous frame from a single
//! one by a global scale and translation.
//!
//! All randomness is seeded. Per-frame streams are derived with
//! [`mix_seed`], a splitmix64 finalizer over `seed + (stream + 1) * 0x9E3779B97F4A7C15`,
//! so frames can be generated independently and in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::types::{iou, BBox, Detection, Frame, LabeledBox, SequenceData, Vec2};

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed for `stream` (e.g. a frame index).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add(stream.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

pub fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream))
}

fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    let u: f64 = rng.random();
    range.0 + (range.1 - range.0) * u
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    /// Center jitter as a fraction of the box width/height.
    pub lambda_jt: f64,
    /// Per-object probability of a spurious nearby detection.
    pub lambda_fp: f64,
    /// Per-object probability of a missed detection.
    pub lambda_fn: f64,
    /// Std of the Gaussian noise added to backward offsets, pixels.
    pub offset_noise_std: f64,
    pub conf_tp_range: (f64, f64),
    pub conf_fp_range: (f64, f64),
    /// Use one Gaussian sample for both axes instead of one per axis.
    pub shared_jitter: bool,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            lambda_jt: 0.05,
            lambda_fp: 0.1,
            lambda_fn: 0.4,
            offset_noise_std: 0.0,
            conf_tp_range: (0.5, 1.0),
            conf_fp_range: (0.4, 0.7),
            shared_jitter: false,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// No jitter, no drops, no false positives, perfect offsets, confidence 1.
    pub fn noiseless(seed: u64) -> Self {
        Self {
            lambda_jt: 0.0,
            lambda_fp: 0.0,
            lambda_fn: 0.0,
            offset_noise_std: 0.0,
            conf_tp_range: (1.0, 1.0),
            conf_fp_range: (1.0, 1.0),
            shared_jitter: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("lambda_fp", self.lambda_fp), ("lambda_fn", self.lambda_fn)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.lambda_jt >= 0.0) || !(self.offset_noise_std >= 0.0) {
            return Err(Error::Config("noise scales must be non-negative".into()));
        }
        for (name, (lo, hi)) in [("conf_tp_range", self.conf_tp_range), ("conf_fp_range", self.conf_fp_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return Err(Error::Config(format!("{name} must be an ordered sub-range of [0, 1], got ({lo}, {hi})")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WorldConfig {
    pub image_size: (f64, f64),
    /// Objects present in the first frame.
    pub n_objects: usize,
    pub framerate: f64,
    pub frames: usize,
    /// Per-frame speed in pixels.
    pub speed_range: (f64, f64),
    /// Per object-frame probability of a velocity change.
    pub turn_prob: f64,
    /// Std of the per-axis velocity change, pixels/frame. Speeds are then
    /// clamped back into `speed_range`.
    pub turn_std: f64,
    /// Box width and height, each drawn independently, in pixels.
    pub size_range: (f64, f64),
    pub birth_rate: f64,
    pub death_rate: f64,
    /// Per object-frame probability that an occlusion starts.
    pub occlusion_prob: f64,
    /// Longest occlusion, in frames.
    pub occlusion_max: u32,
    /// Previous-frame sampling window for training-style frame pairs.
    pub frame_sample_window: usize,
    /// When set, ground truth carries ground-plane positions `(x, y, 0)` in meters.
    pub meters_per_pixel: Option<f64>,
    pub seed: u64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            image_size: (960.0, 544.0),
            n_objects: 20,
            framerate: 30.0,
            frames: 200,
            speed_range: (1.0, 6.0),
            turn_prob: 0.0,
            turn_std: 0.0,
            size_range: (30.0, 80.0),
            birth_rate: 0.0,
            death_rate: 0.0,
            occlusion_prob: 0.0,
            occlusion_max: 0,
            frame_sample_window: 3,
            meters_per_pixel: None,
            seed: 0,
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        let (w, h) = self.image_size;
        let ordered = |r: (f64, f64)| r.0 > 0.0 && r.0 <= r.1;
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::Config("image size must be positive".into()));
        }
        if !ordered(self.size_range) || self.size_range.1 >= w.min(h) {
            return Err(Error::Config(format!(
                "size_range {:?} must be positive, ordered, and smaller than the image",
                self.size_range
            )));
        }
        if !(self.speed_range.0 >= 0.0 && self.speed_range.0 <= self.speed_range.1) {
            return Err(Error::Config(format!("speed_range {:?} must be ordered and non-negative", self.speed_range)));
        }
        for (name, p) in [
            ("birth_rate", self.birth_rate),
            ("death_rate", self.death_rate),
            ("occlusion_prob", self.occlusion_prob),
            ("turn_prob", self.turn_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.turn_std >= 0.0) {
            return Err(Error::Config(format!("turn_std must be non-negative, got {}", self.turn_std)));
        }
        if !(self.framerate > 0.0) || self.frame_sample_window == 0 {
            return Err(Error::Config("framerate and frame_sample_window must be positive".into()));
        }
        if self.n_objects == 0 && self.birth_rate == 0.0 {
            return Err(Error::Config("empty world: no initial objects and no births".into()));
        }
        Ok(())
    }
}

struct Mover {
    id: i64,
    pos: Vec2,
    vel: Vec2,
    size: Vec2,
    occluded_for: u32,
}

fn spawn(rng: &mut ChaCha8Rng, id: i64, cfg: &WorldConfig) -> Mover {
    let size = Vec2::new(uniform(rng, cfg.size_range), uniform(rng, cfg.size_range));
    let (w, h) = cfg.image_size;
    let pos = Vec2::new(
        uniform(rng, (size.x / 2.0, w - size.x / 2.0)),
        uniform(rng, (size.y / 2.0, h - size.y / 2.0)),
    );
    let speed = uniform(rng, cfg.speed_range);
    let angle = uniform(rng, (0.0, std::f64::consts::TAU));
    Mover {
        id,
        pos,
        vel: Vec2::new(speed * angle.cos(), speed * angle.sin()),
        size,
        occluded_for: 0,
    }
}

fn clamp_speed(v: Vec2, (lo, hi): (f64, f64)) -> Vec2 {
    let s = v.norm();
    if s == 0.0 {
        return Vec2::new(lo, 0.0);
    }
    v * (s.clamp(lo, hi) / s)
}

// Mirror a coordinate back into [lo, hi], flipping velocity on every bounce.
fn reflect(x: &mut f64, v: &mut f64, lo: f64, hi: f64) {
    let span = hi - lo;
    if span <= 0.0 {
        *x = lo;
        return;
    }
    while *x < lo || *x > hi {
        if *x < lo {
            *x = 2.0 * lo - *x;
        } else {
            *x = 2.0 * hi - *x;
        }
        *v = -*v;
    }
}

/// Piecewise-constant-velocity objects bouncing inside the image, with
/// optional births, deaths and occlusions (occluded objects keep moving but
/// are absent from their frames). Frame indices start at 1.
pub fn generate_world(cfg: &WorldConfig) -> Result<SequenceData> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, u64::MAX));
    let mut next_id = 1i64;
    let mut alive: Vec<Mover> = (0..cfg.n_objects)
        .map(|_| {
            let m = spawn(&mut rng, next_id, cfg);
            next_id += 1;
            m
        })
        .collect();
    let (w, h) = cfg.image_size;
    let mut frames = Vec::with_capacity(cfg.frames);
    for t in 0..cfg.frames {
        let objects = alive
            .iter()
            .filter(|m| m.occluded_for == 0)
            .map(|m| {
                let bbox = BBox::new(m.pos, m.size).expect("sizes are validated positive");
                let mut o = LabeledBox::new(m.id, bbox);
                o.pos3d = cfg.meters_per_pixel.map(|s| [m.pos.x * s, m.pos.y * s, 0.0]);
                o
            })
            .collect();
        frames.push(Frame::new(t as i64 + 1, objects));

        let mut survivors = Vec::with_capacity(alive.len());
        for mut m in alive {
            // Always draw the same number of variates per object and frame.
            let dies = rng.random::<f64>() < cfg.death_rate;
            let occ = rng.random::<f64>() < cfg.occlusion_prob;
            let occ_len = rng.random_range(0..cfg.occlusion_max.max(1)) + 1;
            let turns = rng.random::<f64>() < cfg.turn_prob;
            let dv = Vec2::new(gaussian(&mut rng), gaussian(&mut rng)) * cfg.turn_std;
            if dies {
                continue;
            }
            if m.occluded_for > 0 {
                m.occluded_for -= 1;
            } else if occ && cfg.occlusion_max > 0 {
                m.occluded_for = occ_len;
            }
            if turns {
                m.vel = clamp_speed(m.vel + dv, cfg.speed_range);
            }
            m.pos = m.pos + m.vel;
            reflect(&mut m.pos.x, &mut m.vel.x, m.size.x / 2.0, w - m.size.x / 2.0);
            reflect(&mut m.pos.y, &mut m.vel.y, m.size.y / 2.0, h - m.size.y / 2.0);
            survivors.push(m);
        }
        alive = survivors;
        if rng.random::<f64>() < cfg.birth_rate {
            alive.push(spawn(&mut rng, next_id, cfg));
            next_id += 1;
        }
    }
    SequenceData::new(frames, cfg.image_size, cfg.framerate)
}

/// Number of times two objects' boxes go from disjoint to overlapping between
/// consecutive frames in which both are present.
pub fn count_crossings(seq: &SequenceData) -> usize {
    let mut count = 0;
    for pair in seq.frames.windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        for (i, a) in cur.objects.iter().enumerate() {
            for b in &cur.objects[i + 1..] {
                let (Some(pa), Some(pb)) = (prev.find(a.id), prev.find(b.id)) else {
                    continue;
                };
                if iou(&pa.bbox, &pb.bbox) == 0.0 && iou(&a.bbox, &b.bbox) > 0.0 {
                    count += 1;
                }
            }
        }
    }
    count
}

/// A detection together with the ground-truth object it was derived from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulatedDetection {
    pub detection: Detection,
    pub gt_id: i64,
    pub false_positive: bool,
}

/// Detector-error model for one frame.
///
/// Per ground-truth object, in frame order: with probability `lambda_fn`
/// it is dropped; otherwise it is emitted at
/// `(x + r_x * lambda_jt * w, y + r_y * lambda_jt * h)` with a confidence from
/// `conf_tp_range` and offset `jittered center - true previous center` plus
/// offset noise. Independently, with probability `lambda_fp` a false positive
/// is placed around it at three times the jitter scale, with the object's size,
/// a confidence from `conf_fp_range` and a pure-noise offset.
pub fn corrupt(gt: &Frame, prev: Option<&Frame>, noise: &NoiseConfig) -> Vec<SimulatedDetection> {
    let mut rng = rng_for(noise.seed, gt.index as u64);
    let mut out = Vec::with_capacity(gt.objects.len() + 2);
    for o in &gt.objects {
        // Fixed draw order keeps streams aligned across noise settings.
        let dropped = rng.random::<f64>() < noise.lambda_fn;
        let rx = gaussian(&mut rng);
        let ry = if noise.shared_jitter { rx } else { gaussian(&mut rng) };
        let conf = uniform(&mut rng, noise.conf_tp_range);
        let (ox, oy) = (gaussian(&mut rng), gaussian(&mut rng));
        let spurious = rng.random::<f64>() < noise.lambda_fp;
        let fx = gaussian(&mut rng);
        let fy = if noise.shared_jitter { fx } else { gaussian(&mut rng) };
        let fconf = uniform(&mut rng, noise.conf_fp_range);
        let (fox, foy) = (gaussian(&mut rng), gaussian(&mut rng));

        let c = o.bbox.center();
        let (w, h) = (o.bbox.width(), o.bbox.height());
        let offset_noise = Vec2::new(ox, oy) * noise.offset_noise_std;
        if !dropped {
            let center = Vec2::new(c.x + rx * noise.lambda_jt * w, c.y + ry * noise.lambda_jt * h);
            let offset = match prev.and_then(|p| p.find(o.id)) {
                Some(p) => center - p.bbox.center() + offset_noise,
                None => offset_noise,
            };
            out.push(SimulatedDetection {
                detection: make_detection(o, center, conf, offset),
                gt_id: o.id,
                false_positive: false,
            });
        }
        if spurious {
            let center = Vec2::new(
                c.x + 3.0 * fx * noise.lambda_jt * w,
                c.y + 3.0 * fy * noise.lambda_jt * h,
            );
            let offset = Vec2::new(fox, foy) * noise.offset_noise_std;
            out.push(SimulatedDetection {
                detection: make_detection(o, center, fconf, offset),
                gt_id: o.id,
                false_positive: true,
            });
        }
    }
    out
}

fn make_detection(o: &LabeledBox, center: Vec2, confidence: f64, offset: Vec2) -> Detection {
    let bbox = BBox::new(center, o.bbox.size()).expect("size copied from a valid box");
    Detection {
        shape: crate::types::DetectionBox::Plain(bbox),
        confidence,
        offset,
        class_id: o.class_id,
        pos3d: o.pos3d,
    }
}

/// Runs [`corrupt`] over a whole sequence, each frame paired with its predecessor.
pub fn corrupt_sequence(gt: &SequenceData, noise: &NoiseConfig) -> Result<Vec<(i64, Vec<SimulatedDetection>)>> {
    noise.validate()?;
    Ok(gt
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let prev = i.checked_sub(1).map(|p| &gt.frames[p]);
            (f.index, corrupt(f, prev, noise))
        })
        .collect())
}

/// Keeps every `stride`-th frame (starting with the first), renumbers frames
/// from 1 and divides the framerate. Ids are untouched.
pub fn subsample(seq: &SequenceData, stride: usize) -> Result<SequenceData> {
    if stride == 0 {
        return Err(Error::Config("stride must be at least 1".into()));
    }
    if stride > seq.len() {
        return Err(Error::Config(format!(
            "stride {stride} is longer than the {}-frame sequence",
            seq.len()
        )));
    }
    let frames = seq
        .frames
        .iter()
        .step_by(stride)
        .enumerate()
        .map(|(k, f)| Frame::new(k as i64 + 1, f.objects.clone()))
        .collect();
    SequenceData::new(frames, seq.image_size, seq.framerate / stride as f64)
}

/// A fake previous frame made from a single frame.
#[derive(Debug, Clone, PartialEq)]
pub struct HallucinatedPair {
    pub prev: Frame,
    pub cur: Frame,
    pub scale: f64,
    /// Pixel translation from the previous frame to the current one.
    pub translation: Vec2,
}

impl HallucinatedPair {
    /// Backward offsets (`current center - previous center`) per object id.
    pub fn offsets(&self) -> Vec<(i64, Vec2)> {
        self.cur
            .objects
            .iter()
            .filter_map(|o| {
                self.prev
                    .find(o.id)
                    .map(|p| (o.id, o.bbox.center() - p.bbox.center()))
            })
            .collect()
    }
}

/// Simulates the previous frame of a static image: one global scale
/// `s in [1 - scale_range, 1 + scale_range]` about the image center and one
/// translation `t` with each component in `[-translate_range, translate_range]`
/// times the image dimension. Previous centers are `c0 + s (c - c0) - t` and
/// previous sizes `s * size`, so a pure translation gives every object a
/// backward offset of exactly `t`.
pub fn hallucinate_pair(
    frame: &Frame,
    image_size: (f64, f64),
    scale_range: f64,
    translate_range: f64,
    seed: u64,
) -> Result<HallucinatedPair> {
    if !((0.0..1.0).contains(&scale_range) && translate_range >= 0.0) {
        return Err(Error::Config(format!(
            "scale range must lie in [0, 1) and translation range be non-negative, got {scale_range}, {translate_range}"
        )));
    }
    let mut rng = rng_for(seed, frame.index as u64);
    let scale = 1.0 + uniform(&mut rng, (-scale_range, scale_range));
    let translation = Vec2::new(
        uniform(&mut rng, (-translate_range, translate_range)) * image_size.0,
        uniform(&mut rng, (-translate_range, translate_range)) * image_size.1,
    );
    Ok(transform_pair(frame, image_size, scale, translation))
}

/// The deterministic core of [`hallucinate_pair`].
pub fn transform_pair(frame: &Frame, image_size: (f64, f64), scale: f64, translation: Vec2) -> HallucinatedPair {
    let c0 = Vec2::new(image_size.0 / 2.0, image_size.1 / 2.0);
    let prev = Frame::new(
        frame.index - 1,
        frame
            .objects
            .iter()
            .map(|o| {
                let c = o.bbox.center();
                // Written as a correction to c so the identity transform is exact.
                let center = c + (c - c0) * (scale - 1.0) - translation;
                let mut moved = *o;
                moved.bbox = BBox::new(center, o.bbox.size() * scale).expect("positive scale");
                moved
            })
            .collect(),
    );
    HallucinatedPair {
        prev,
        cur: frame.clone(),
        scale,
        translation,
    }
}

/// Draws a frame `k` uniformly from `|k - t| < window`, clipped to the sequence.
pub fn sample_previous_frame(rng: &mut ChaCha8Rng, t: usize, n_frames: usize, window: usize) -> usize {
    let lo = t.saturating_sub(window - 1);
    let hi = (t + window - 1).min(n_frames - 1);
    rng.random_range(lo..=hi)
}
