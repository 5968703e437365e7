//! Geometric and tracking data model shared by every other module.
//!
//! Boxes are stored as center + size. Corner form is derived on demand.

use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};

/// A 2-vector in pixels (or grid cells, depending on context).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2 {
    pub x: f64,
    pub y: f64,
}

impl Vec2 {
    pub const ZERO: Vec2 = Vec2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, other: Vec2) -> f64 {
        (self - other).norm()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Vec2 {
    type Output = Vec2;
    fn add(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl Sub for Vec2 {
    type Output = Vec2;
    fn sub(self, rhs: Vec2) -> Vec2 {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl Mul<f64> for Vec2 {
    type Output = Vec2;
    fn mul(self, rhs: f64) -> Vec2 {
        Vec2::new(self.x * rhs, self.y * rhs)
    }
}

/// Axis-aligned box in center + size form. Width and height are always positive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BBox {
    center: Vec2,
    size: Vec2,
}

impl BBox {
    pub fn new(center: Vec2, size: Vec2) -> Result<Self> {
        if !center.is_finite() || !size.is_finite() {
            return Err(Error::InvalidBox(format!(
                "non-finite center {center:?} or size {size:?}"
            )));
        }
        if size.x <= 0.0 || size.y <= 0.0 {
            return Err(Error::InvalidBox(format!(
                "width and height must be positive, got {}x{}",
                size.x, size.y
            )));
        }
        Ok(Self { center, size })
    }

    /// Builds a box from MOTChallenge-style left/top/width/height.
    pub fn from_ltwh(left: f64, top: f64, width: f64, height: f64) -> Result<Self> {
        Self::new(
            Vec2::new(left + width / 2.0, top + height / 2.0),
            Vec2::new(width, height),
        )
    }

    /// Builds a box from corner coordinates `(x1, y1, x2, y2)`.
    pub fn from_corners(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        Self::new(
            Vec2::new((x1 + x2) / 2.0, (y1 + y2) / 2.0),
            Vec2::new(x2 - x1, y2 - y1),
        )
    }

    pub fn center(&self) -> Vec2 {
        self.center
    }

    pub fn size(&self) -> Vec2 {
        self.size
    }

    pub fn width(&self) -> f64 {
        self.size.x
    }

    pub fn height(&self) -> f64 {
        self.size.y
    }

    pub fn area(&self) -> f64 {
        self.size.x * self.size.y
    }

    /// `sqrt(w * h)`, the per-box scale used for gating.
    pub fn geometric_mean(&self) -> f64 {
        self.area().sqrt()
    }

    pub fn left(&self) -> f64 {
        self.center.x - self.size.x / 2.0
    }

    pub fn top(&self) -> f64 {
        self.center.y - self.size.y / 2.0
    }

    pub fn right(&self) -> f64 {
        self.center.x + self.size.x / 2.0
    }

    pub fn bottom(&self) -> f64 {
        self.center.y + self.size.y / 2.0
    }

    /// `(x1, y1, x2, y2)`.
    pub fn corners(&self) -> [f64; 4] {
        [self.left(), self.top(), self.right(), self.bottom()]
    }

    pub fn with_center(&self, center: Vec2) -> Result<Self> {
        Self::new(center, self.size)
    }

    pub fn translated(&self, by: Vec2) -> Self {
        Self {
            center: self.center + by,
            size: self.size,
        }
    }

    pub fn iou(&self, other: &BBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union of two boxes.
pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = a.right().min(b.right()) - a.left().max(b.left());
    let ih = a.bottom().min(b.bottom()) - a.top().max(b.top());
    if iw <= 0.0 || ih <= 0.0 {
        return 0.0;
    }
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    (inter / union).clamp(0.0, 1.0)
}

/// A box that is not necessarily centered on its detected point: the anchor
/// is the in-frame center, and the borders are distances from the anchor to
/// the top, left, bottom and right edges of the full (possibly out-of-frame)
/// extent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmodalBox {
    anchor: Vec2,
    borders: Borders,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Borders {
    pub top: f64,
    pub left: f64,
    pub bottom: f64,
    pub right: f64,
}

impl Borders {
    pub fn as_array(&self) -> [f64; 4] {
        [self.top, self.left, self.bottom, self.right]
    }
}

impl AmodalBox {
    pub fn new(anchor: Vec2, borders: Borders) -> Result<Self> {
        let b = borders.as_array();
        if !anchor.is_finite() || b.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBox("non-finite amodal box".into()));
        }
        if b.iter().any(|&v| v < 0.0) {
            return Err(Error::InvalidBox(format!(
                "negative border distance in {borders:?}"
            )));
        }
        if borders.left + borders.right <= 0.0 || borders.top + borders.bottom <= 0.0 {
            return Err(Error::InvalidBox("amodal box has zero extent".into()));
        }
        Ok(Self { anchor, borders })
    }

    /// Derives border distances of `bbox` as seen from `anchor`. The anchor
    /// must lie inside the box.
    pub fn from_bbox(anchor: Vec2, bbox: &BBox) -> Result<Self> {
        Self::new(
            anchor,
            Borders {
                top: anchor.y - bbox.top(),
                left: anchor.x - bbox.left(),
                bottom: bbox.bottom() - anchor.y,
                right: bbox.right() - anchor.x,
            },
        )
    }

    /// Amodal box for a full-extent annotation in an image of the given size:
    /// the anchor is the center of the visible (clipped) part.
    pub fn from_clipped(bbox: &BBox, image_size: (f64, f64)) -> Result<Self> {
        let x1 = bbox.left().max(0.0);
        let y1 = bbox.top().max(0.0);
        let x2 = bbox.right().min(image_size.0);
        let y2 = bbox.bottom().min(image_size.1);
        if x2 <= x1 || y2 <= y1 {
            return Err(Error::InvalidBox("box lies entirely outside the image".into()));
        }
        Self::from_bbox(Vec2::new((x1 + x2) / 2.0, (y1 + y2) / 2.0), bbox)
    }

    pub fn anchor(&self) -> Vec2 {
        self.anchor
    }

    pub fn borders(&self) -> Borders {
        self.borders
    }

    pub fn to_bbox(&self) -> BBox {
        amodal_to_bbox(self)
    }
}

/// Reconstructs the full box spanned by the anchor and its border distances.
pub fn amodal_to_bbox(a: &AmodalBox) -> BBox {
    let Borders {
        top,
        left,
        bottom,
        right,
    } = a.borders;
    let x1 = a.anchor.x - left;
    let x2 = a.anchor.x + right;
    let y1 = a.anchor.y - top;
    let y2 = a.anchor.y + bottom;
    // Extent positivity is checked at construction.
    BBox {
        center: Vec2::new((x1 + x2) / 2.0, (y1 + y2) / 2.0),
        size: Vec2::new(x2 - x1, y2 - y1),
    }
}

/// The spatial part of a detection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DetectionBox {
    Plain(BBox),
    Amodal(AmodalBox),
}

impl DetectionBox {
    /// The detected point: the box center, or the in-frame anchor of an amodal box.
    pub fn point(&self) -> Vec2 {
        match self {
            DetectionBox::Plain(b) => b.center(),
            DetectionBox::Amodal(a) => a.anchor(),
        }
    }

    /// The full output box.
    pub fn bbox(&self) -> BBox {
        match self {
            DetectionBox::Plain(b) => *b,
            DetectionBox::Amodal(a) => a.to_bbox(),
        }
    }
}

/// A point-centered observation from the current frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub shape: DetectionBox,
    pub confidence: f64,
    /// Displacement from the object's previous-frame center to its current
    /// center; `point() - offset` back-projects into the previous frame.
    pub offset: Vec2,
    pub class_id: u32,
    /// Ground-plane position (x, y) plus height, in meters.
    pub pos3d: Option<[f64; 3]>,
}

impl Detection {
    pub fn new(bbox: BBox, confidence: f64, offset: Vec2) -> Result<Self> {
        let det = Self {
            shape: DetectionBox::Plain(bbox),
            confidence,
            offset,
            class_id: 0,
            pos3d: None,
        };
        det.validate()?;
        Ok(det)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(Error::InvalidDetection(format!(
                "confidence {} outside [0, 1]",
                self.confidence
            )));
        }
        if !self.offset.is_finite() {
            return Err(Error::InvalidDetection("non-finite offset".into()));
        }
        Ok(())
    }

    pub fn point(&self) -> Vec2 {
        self.shape.point()
    }

    pub fn bbox(&self) -> BBox {
        self.shape.bbox()
    }

    pub fn with_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }

    pub fn with_pos3d(mut self, pos: [f64; 3]) -> Self {
        self.pos3d = Some(pos);
        self
    }
}

/// Minimum of the two boxes' geometric-mean sizes: the association radius
/// for a detection/track pair.
pub fn gating_radius(det: &BBox, trk: &BBox) -> f64 {
    det.geometric_mean().min(trk.geometric_mean())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(pub u64);

impl std::fmt::Display for TrackId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    /// Unmatched for `age` consecutive frames (always >= 1).
    Inactive { age: u32 },
}

/// An identity-carrying object state.
#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub bbox: BBox,
    /// The detected point the track was last updated from. Equals the box
    /// center unless the detection was amodal.
    pub center: Vec2,
    pub confidence: f64,
    pub status: TrackStatus,
    pub kalman: Option<crate::motion::KalmanState>,
    pub last_frame: i64,
    pub class_id: u32,
    /// 3D position of the last matched detection, if it had one.
    pub pos3d: Option<[f64; 3]>,
}

impl Track {
    pub fn is_active(&self) -> bool {
        self.status == TrackStatus::Active
    }
}

impl crate::heatmap::PriorSource for Track {
    fn prior_box(&self) -> BBox {
        self.bbox
    }

    fn prior_confidence(&self) -> f64 {
        self.confidence
    }

    fn is_active(&self) -> bool {
        Track::is_active(self)
    }
}

/// One labeled box within a frame of a [`SequenceData`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledBox {
    pub id: i64,
    pub class_id: u32,
    pub bbox: BBox,
    pub confidence: f64,
    pub pos3d: Option<[f64; 3]>,
}

impl LabeledBox {
    pub fn new(id: i64, bbox: BBox) -> Self {
        Self {
            id,
            class_id: 0,
            bbox,
            confidence: 1.0,
            pos3d: None,
        }
    }

    pub fn with_confidence(mut self, confidence: f64) -> Self {
        self.confidence = confidence;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: i64,
    pub objects: Vec<LabeledBox>,
}

impl Frame {
    pub fn new(index: i64, objects: Vec<LabeledBox>) -> Self {
        Self { index, objects }
    }

    pub fn find(&self, id: i64) -> Option<&LabeledBox> {
        self.objects.iter().find(|o| o.id == id)
    }
}

/// Ground-truth or predicted tracks over an ordered list of frames.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceData {
    pub frames: Vec<Frame>,
    pub image_size: (f64, f64),
    pub framerate: f64,
}

impl SequenceData {
    pub fn new(frames: Vec<Frame>, image_size: (f64, f64), framerate: f64) -> Result<Self> {
        let seq = Self {
            frames,
            image_size,
            framerate,
        };
        seq.validate()?;
        Ok(seq)
    }

    pub fn validate(&self) -> Result<()> {
        for pair in self.frames.windows(2) {
            if pair[1].index <= pair[0].index {
                return Err(Error::InvalidSequence(format!(
                    "frame indices not strictly increasing: {} then {}",
                    pair[0].index, pair[1].index
                )));
            }
        }
        for frame in &self.frames {
            let mut keys: Vec<(i64, u32)> =
                frame.objects.iter().map(|o| (o.id, o.class_id)).collect();
            keys.sort_unstable();
            if let Some(dup) = keys.windows(2).find(|w| w[0] == w[1]) {
                return Err(Error::InvalidSequence(format!(
                    "duplicate (id {}, class {}) in frame {}",
                    dup[0].0, dup[0].1, frame.index
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_indices(&self) -> Vec<i64> {
        self.frames.iter().map(|f| f.index).collect()
    }

    /// Total number of labeled boxes over all frames.
    pub fn total_objects(&self) -> usize {
        self.frames.iter().map(|f| f.objects.len()).sum()
    }

    /// Distinct ids in first-appearance order.
    pub fn ids(&self) -> Vec<i64> {
        let mut seen = std::collections::BTreeSet::new();
        let mut out = Vec::new();
        for o in self.frames.iter().flat_map(|f| &f.objects) {
            if seen.insert(o.id) {
                out.push(o.id);
            }
        }
        out
    }

    /// Re-indexes this sequence onto `reference`'s frames: missing frames
    /// become empty, frames absent from the reference are an error.
    pub fn aligned_to(&self, reference: &SequenceData) -> Result<SequenceData> {
        let wanted = reference.frame_indices();
        let mut frames = Vec::with_capacity(wanted.len());
        let mut own = self.frames.iter().peekable();
        for &index in &wanted {
            if let Some(f) = own.peek().filter(|f| f.index < index) {
                return Err(Error::FrameMismatch(format!(
                    "frame {} does not exist in the reference",
                    f.index
                )));
            }
            match own.peek() {
                Some(f) if f.index == index => frames.push(own.next().unwrap().clone()),
                _ => frames.push(Frame::new(index, Vec::new())),
            }
        }
        if let Some(f) = own.next() {
            return Err(Error::FrameMismatch(format!(
                "frame {} does not exist in the reference",
                f.index
            )));
        }
        Ok(SequenceData {
            frames,
            image_size: self.image_size,
            framerate: self.framerate,
        })
    }

    /// Keeps only the objects satisfying `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&LabeledBox) -> bool) -> SequenceData {
        SequenceData {
            frames: self
                .frames
                .iter()
                .map(|f| Frame::new(f.index, f.objects.iter().copied().filter(|o| keep(o)).collect()))
                .collect(),
            image_size: self.image_size,
            framerate: self.framerate,
        }
    }

    /// Splits the sequence by class id; every part keeps the full frame list.
    pub fn partition_by_class(&self) -> std::collections::BTreeMap<u32, SequenceData> {
        let classes: std::collections::BTreeSet<u32> = self
            .frames
            .iter()
            .flat_map(|f| f.objects.iter().map(|o| o.class_id))
            .collect();
        classes
            .into_iter()
            .map(|c| (c, self.filtered(|o| o.class_id == c)))
            .collect()
    }
}
