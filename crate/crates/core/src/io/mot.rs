//! MOTChallenge text records.
//!
//! `frame,id,bb_left,bb_top,bb_width,bb_height,conf,x,y,z` per line, with an
//! optional `,off_x,off_y` tail carrying a detection's backward offset.
//! Rows with id -1 are raw detections; `x,y,z = -1,-1,-1` means no 3D
//! position. Numbers are written with Rust's shortest round-trip formatting,
//! so rendering and re-parsing is lossless.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::association::TrackerState;
use crate::error::{Error, Result};
use crate::types::{BBox, Detection, Frame, LabeledBox, SequenceData, Track, Vec2};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    pub frame: i64,
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub conf: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub offset: Option<(f64, f64)>,
}

impl MotRecord {
    pub fn is_detection(&self) -> bool {
        self.id == -1
    }

    pub fn bbox(&self) -> Result<BBox> {
        BBox::from_ltwh(self.bb_left, self.bb_top, self.bb_width, self.bb_height)
    }

    pub fn pos3d(&self) -> Option<[f64; 3]> {
        let absent = self.x == -1.0 && self.y == -1.0 && self.z == -1.0;
        (!absent).then_some([self.x, self.y, self.z])
    }

    fn with_box(frame: i64, id: i64, b: &BBox, conf: f64, pos3d: Option<[f64; 3]>) -> Self {
        let [x, y, z] = pos3d.unwrap_or([-1.0; 3]);
        Self {
            frame,
            id,
            bb_left: b.left(),
            bb_top: b.top(),
            bb_width: b.width(),
            bb_height: b.height(),
            conf,
            x,
            y,
            z,
            offset: None,
        }
    }

    pub fn from_detection(frame: i64, d: &Detection) -> Self {
        Self {
            offset: Some((d.offset.x, d.offset.y)),
            ..Self::with_box(frame, -1, &d.bbox(), d.confidence, d.pos3d)
        }
    }

    pub fn from_labeled(frame: i64, o: &LabeledBox) -> Self {
        Self::with_box(frame, o.id, &o.bbox, o.confidence, o.pos3d)
    }

    pub fn from_track(frame: i64, t: &Track) -> Self {
        Self::with_box(frame, t.id.0 as i64, &t.bbox, t.confidence, t.pos3d)
    }

    pub fn render(&self) -> String {
        let mut s = format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.frame,
            self.id,
            self.bb_left,
            self.bb_top,
            self.bb_width,
            self.bb_height,
            self.conf,
            self.x,
            self.y,
            self.z
        );
        if let Some((ox, oy)) = self.offset {
            let _ = write!(s, ",{ox},{oy}");
        }
        s
    }

    /// Parses one line; `line` (1-based) and `path` only label errors.
    pub fn parse(text: &str, path: &str, line: usize) -> Result<Self> {
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            line,
            message,
        };
        let fields: Vec<&str> = text.split(',').map(str::trim).collect();
        if fields.len() != 10 && fields.len() != 12 {
            return Err(err(format!("expected 10 or 12 fields, found {}", fields.len())));
        }
        let int = |i: usize, name: &str| -> Result<i64> {
            fields[i]
                .parse::<i64>()
                .map_err(|_| err(format!("{name} `{}` is not an integer", fields[i])))
        };
        let real = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = fields[i]
                .parse()
                .map_err(|_| err(format!("{name} `{}` is not a number", fields[i])))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(err(format!("{name} is not finite")))
            }
        };
        let frame = int(0, "frame")?;
        if frame < 1 {
            return Err(err(format!("frame {frame} is below 1")));
        }
        let rec = Self {
            frame,
            id: int(1, "id")?,
            bb_left: real(2, "bb_left")?,
            bb_top: real(3, "bb_top")?,
            bb_width: real(4, "bb_width")?,
            bb_height: real(5, "bb_height")?,
            conf: real(6, "conf")?,
            x: real(7, "x")?,
            y: real(8, "y")?,
            z: real(9, "z")?,
            offset: if fields.len() == 12 {
                Some((real(10, "off_x")?, real(11, "off_y")?))
            } else {
                None
            },
        };
        if !(rec.bb_width > 0.0 && rec.bb_height > 0.0) {
            return Err(err("box width and height must be positive".into()));
        }
        Ok(rec)
    }
}

/// Parsed records, stably sorted by frame, plus non-fatal warnings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MotFile {
    pub records: Vec<MotRecord>,
    pub warnings: Vec<String>,
}

impl MotFile {
    pub fn parse_str(text: &str, path: &str) -> Result<Self> {
        let mut records = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            records.push(MotRecord::parse(line, path, i + 1)?);
        }
        let mut warnings = Vec::new();
        if records.is_empty() {
            warnings.push(format!("{path}: no records"));
        }
        records.sort_by_key(|r| r.frame);
        Ok(Self { records, warnings })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn last_frame(&self) -> Option<i64> {
        self.records.last().map(|r| r.frame)
    }

    /// Id -1 rows as detections, per frame, in file order.
    pub fn detections(&self) -> Result<BTreeMap<i64, Vec<Detection>>> {
        let mut out: BTreeMap<i64, Vec<Detection>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.is_detection()) {
            let (ox, oy) = r.offset.unwrap_or((0.0, 0.0));
            let mut d = Detection::new(r.bbox()?, r.conf, Vec2::new(ox, oy))?;
            d.pos3d = r.pos3d();
            out.entry(r.frame).or_default().push(d);
        }
        Ok(out)
    }

    /// Id -1 rows as plain boxes, per frame.
    pub fn boxes(&self) -> Result<BTreeMap<i64, Vec<BBox>>> {
        let mut out: BTreeMap<i64, Vec<BBox>> = BTreeMap::new();
        for r in self.records.iter().filter(|r| r.is_detection()) {
            out.entry(r.frame).or_default().push(r.bbox()?);
        }
        Ok(out)
    }

    /// All other rows as a sequence. With `frames = Some(n)` every frame
    /// `1..=n` is present (possibly empty); otherwise only frames with records.
    pub fn sequence(&self, frames: Option<i64>, image_size: (f64, f64), framerate: f64) -> Result<SequenceData> {
        let mut by_frame: BTreeMap<i64, Vec<LabeledBox>> = BTreeMap::new();
        if let Some(n) = frames {
            for f in 1..=n {
                by_frame.insert(f, Vec::new());
            }
        }
        for r in self.records.iter().filter(|r| !r.is_detection()) {
            let mut o = LabeledBox::new(r.id, r.bbox()?).with_confidence(r.conf);
            o.pos3d = r.pos3d();
            by_frame.entry(r.frame).or_default().push(o);
        }
        let frames = by_frame.into_iter().map(|(i, o)| Frame::new(i, o)).collect();
        SequenceData::new(frames, image_size, framerate)
    }
}

pub fn render_records(records: &[MotRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 64);
    for r in records {
        s.push_str(&r.render());
        s.push('\n');
    }
    s
}

pub fn sequence_records(seq: &SequenceData) -> Vec<MotRecord> {
    seq.frames
        .iter()
        .flat_map(|f| f.objects.iter().map(move |o| MotRecord::from_labeled(f.index, o)))
        .collect()
}

/// Active output tracks of one frame, as returned by [`TrackerState::step`].
pub fn track_records(frame: i64, tracks: &[Track]) -> Vec<MotRecord> {
    tracks.iter().map(|t| MotRecord::from_track(frame, t)).collect()
}

/// External offsets: `frame,det_index,off_x,off_y`, where `det_index` is the
/// 0-based position of the detection among its frame's rows.
pub fn parse_offsets(text: &str, path: &str) -> Result<BTreeMap<(i64, usize), Vec2>> {
    let mut out = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse {
            path: path.to_string(),
            line: i + 1,
            message,
        };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", f.len())));
        }
        let frame: i64 = f[0].parse().map_err(|_| err(format!("frame `{}` is not an integer", f[0])))?;
        let idx: usize = f[1]
            .parse()
            .map_err(|_| err(format!("det_index `{}` is not a non-negative integer", f[1])))?;
        let ox: f64 = f[2].parse().map_err(|_| err(format!("off_x `{}` is not a number", f[2])))?;
        let oy: f64 = f[3].parse().map_err(|_| err(format!("off_y `{}` is not a number", f[3])))?;
        if frame < 1 || !ox.is_finite() || !oy.is_finite() {
            return Err(err("frame below 1 or non-finite offset".into()));
        }
        out.insert((frame, idx), Vec2::new(ox, oy));
    }
    Ok(out)
}

/// Replaces detection offsets with external ones. Detections without an
/// entry get a zero offset; their number is returned.
pub fn apply_offsets(dets: &mut BTreeMap<i64, Vec<Detection>>, offsets: &BTreeMap<(i64, usize), Vec2>) -> usize {
    let mut missing = 0;
    for (&frame, list) in dets.iter_mut() {
        for (i, d) in list.iter_mut().enumerate() {
            d.offset = match offsets.get(&(frame, i)) {
                Some(&o) => o,
                None => {
                    missing += 1;
                    Vec2::ZERO
                }
            };
        }
    }
    missing
}

/// Runs the tracker over frames `1..=last_frame` (frames without detections
/// are stepped with none) and returns the output records.
pub fn run_tracker(
    dets: &BTreeMap<i64, Vec<Detection>>,
    public: Option<&BTreeMap<i64, Vec<BBox>>>,
    last_frame: i64,
    cfg: &crate::association::TrackerConfig,
) -> Result<Vec<MotRecord>> {
    let mut state = TrackerState::new();
    let mut out = Vec::new();
    for frame in 1..=last_frame {
        let d = dets.get(&frame).map_or(&[][..], Vec::as_slice);
        let tracks = match public {
            Some(p) => state.step_public(frame, d, p.get(&frame).map_or(&[][..], Vec::as_slice), cfg)?,
            None => state.step(frame, d, cfg)?,
        };
        out.extend(track_records(frame, &tracks));
    }
    Ok(out)
}
