//! Gaussian point rendering on the down-sampled output grid, and 3x3 peak
//! extraction.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::types::{BBox, Vec2};

/// Default output stride between image pixels and grid cells.
pub const DEFAULT_DOWNSAMPLE: usize = 4;

/// Lower clamp on the Gaussian standard deviation, in grid cells.
pub const SIGMA_MIN: f64 = 0.5;

/// Minimum IoU a shifted box must keep with the original for the radius rule.
pub const DEFAULT_MIN_OVERLAP: f64 = 0.7;

/// A dense `width x height x channels` field over the output grid, stored
/// row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMap {
    width: usize,
    height: usize,
    channels: usize,
    downsample: usize,
    values: Vec<f64>,
}

impl DenseMap {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            downsample: DEFAULT_DOWNSAMPLE,
            values: vec![0.0; width * height * channels],
        }
    }

    pub fn from_values(
        width: usize,
        height: usize,
        channels: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if values.len() != width * height * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} values", width * height * channels),
                actual: format!("{} values", values.len()),
            });
        }
        Ok(Self {
            width,
            height,
            channels,
            downsample: DEFAULT_DOWNSAMPLE,
            values,
        })
    }

    /// Grid for an image of `image_w x image_h` pixels at stride `downsample`.
    pub fn for_image(image_w: usize, image_h: usize, downsample: usize, channels: usize) -> Self {
        let (w, h) = grid_dims(image_w, image_h, downsample);
        let mut map = Self::zeros(w, h, channels);
        map.downsample = downsample;
        map
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn downsample(&self) -> usize {
        self.downsample
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.width, self.height, self.channels)
    }

    fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.values[self.index(x, y, c)]
    }

    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y, c);
        self.values[i] = v;
    }

    pub fn contains(&self, x: usize, y: usize) -> bool {
        x < self.width && y < self.height
    }

    /// Channel values at one cell.
    pub fn cell(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y, 0);
        &self.values[i..i + self.channels]
    }

    /// Dense text dump of one channel: one row per line, space-separated.
    pub fn to_text(&self, channel: usize) -> String {
        let mut out = String::new();
        for y in 0..self.height {
            for x in 0..self.width {
                if x > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{}", self.get(x, y, channel));
            }
            out.push('\n');
        }
        out
    }

    /// Parses a single-channel map written by [`DenseMap::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|e| Error::Parse {
                        path: "<dense map>".into(),
                        line: n + 1,
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            rows.push(row);
        }
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::ShapeMismatch {
                expected: format!("{width} columns in every row"),
                actual: "ragged rows".into(),
            });
        }
        Self::from_values(width, height, 1, rows.into_iter().flatten().collect())
    }
}

/// `ceil(image / downsample)` in each dimension.
pub fn grid_dims(image_w: usize, image_h: usize, downsample: usize) -> (usize, usize) {
    (image_w.div_ceil(downsample), image_h.div_ceil(downsample))
}

/// One Gaussian peak to render, in grid-cell coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub center: Vec2,
    pub sigma: f64,
}

impl GaussianSpec {
    pub fn new(center: Vec2, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
        }
        Ok(Self { center, sigma })
    }

    /// Peak for a pixel-space box: the center is mapped to its integer grid
    /// cell (so the rendered map reaches exactly 1 there) and sigma follows
    /// the box size in grid cells.
    pub fn from_box(bbox: &BBox, downsample: usize, min_overlap: f64) -> Self {
        let r = downsample as f64;
        let c = bbox.center();
        let size = Vec2::new(bbox.width() / r, bbox.height() / r);
        Self {
            center: Vec2::new((c.x / r).floor(), (c.y / r).floor()),
            sigma: gaussian_sigma(size, min_overlap),
        }
    }
}

/// Largest real shift `r` for each of the three corner perturbations
/// (translation, inward shrink, outward growth) that keeps IoU >= `min_overlap`.
fn max_shift_per_case(w: f64, h: f64, o: f64) -> [f64; 3] {
    // Solve a r^2 + b r + c = 0 for the smaller non-negative root.
    fn smaller_root(a: f64, b: f64, c: f64) -> f64 {
        let disc = (b * b - 4.0 * a * c).max(0.0);
        ((-b - disc.sqrt()) / (2.0 * a)).max(0.0)
    }
    // Translation by r in both axes: (1 + o)(w - r)(h - r) >= 2 o w h.
    let translate = smaller_root(1.0, -(w + h), w * h - 2.0 * o * w * h / (1.0 + o));
    // Both corners move inward: (w - 2r)(h - 2r) >= o w h.
    let shrink = smaller_root(4.0, -2.0 * (w + h), (1.0 - o) * w * h);
    // Both corners move outward: w h >= o (w + 2r)(h + 2r).
    let grow = {
        let (a, b, c) = (4.0 * o, 2.0 * o * (w + h), (o - 1.0) * w * h);
        let disc = (b * b - 4.0 * a * c).max(0.0);
        ((-b + disc.sqrt()) / (2.0 * a)).max(0.0)
    };
    [translate, shrink, grow]
}

/// Integer radius: the largest whole-cell corner shift that keeps IoU with
/// the original box at least `min_overlap` in every perturbation case.
pub fn gaussian_radius(size: Vec2, min_overlap: f64) -> usize {
    if !(size.x > 0.0 && size.y > 0.0) {
        return 0;
    }
    let r = max_shift_per_case(size.x, size.y, min_overlap)
        .into_iter()
        .fold(f64::INFINITY, f64::min);
    // Guard against the root landing a hair below an exact integer.
    let mut radius = (r + 1e-9).floor().max(0.0) as usize;
    while radius > 0 && !shift_keeps_overlap(size, radius as f64, min_overlap) {
        radius -= 1;
    }
    while shift_keeps_overlap(size, (radius + 1) as f64, min_overlap) {
        radius += 1;
    }
    radius
}

fn shift_keeps_overlap(size: Vec2, r: f64, o: f64) -> bool {
    let (w, h) = (size.x, size.y);
    let tw = (w - r).max(0.0) * (h - r).max(0.0);
    let translate = tw / (2.0 * w * h - tw);
    let shrink = (w - 2.0 * r).max(0.0) * (h - 2.0 * r).max(0.0) / (w * h);
    let grow = w * h / ((w + 2.0 * r) * (h + 2.0 * r));
    translate >= o && shrink >= o && grow >= o
}

/// Gaussian standard deviation for an object of `size` grid cells: one third
/// of the overlap radius, clamped below at [`SIGMA_MIN`].
pub fn gaussian_sigma(size: Vec2, min_overlap: f64) -> f64 {
    (gaussian_radius(size, min_overlap) as f64 / 3.0).max(SIGMA_MIN)
}

// exp(-x) underflows to zero for x > ~745.
const UNDERFLOW_SIGMAS: f64 = 38.7;

/// Renders `max_i exp(-|p_i - q|^2 / (2 sigma_i^2))` on every cell of a
/// `grid.0 x grid.1` single-channel map. Points whose center falls outside
/// the grid are skipped; the count of skipped points is returned.
pub fn render(points: &[GaussianSpec], grid: (usize, usize)) -> (DenseMap, usize) {
    let (w, h) = grid;
    let mut map = DenseMap::zeros(w, h, 1);
    let mut skipped = 0;
    for p in points {
        let c = p.center;
        let inside = c.is_finite()
            && c.x >= 0.0
            && c.y >= 0.0
            && c.x <= (w as f64 - 1.0)
            && c.y <= (h as f64 - 1.0);
        if !inside {
            skipped += 1;
            continue;
        }
        let reach = (p.sigma * UNDERFLOW_SIGMAS).ceil();
        let x0 = (c.x - reach).floor().max(0.0) as usize;
        let x1 = ((c.x + reach).ceil() as usize).min(w - 1);
        let y0 = (c.y - reach).floor().max(0.0) as usize;
        let y1 = ((c.y + reach).ceil() as usize).min(h - 1);
        let denom = 2.0 * p.sigma * p.sigma;
        for y in y0..=y1 {
            let dy = y as f64 - c.y;
            for x in x0..=x1 {
                let dx = x as f64 - c.x;
                let v = (-(dx * dx + dy * dy) / denom).exp();
                let i = y * w + x;
                if v > map.values[i] {
                    map.values[i] = v;
                }
            }
        }
    }
    (map, skipped)
}

/// Anything that can be drawn into the prior heatmap.
pub trait PriorSource {
    fn prior_box(&self) -> BBox;
    fn prior_confidence(&self) -> f64;
    fn is_active(&self) -> bool;
}

/// Renders the prior heatmap from the previous frame's tracks: only active
/// tracks with confidence strictly above `tau` are drawn.
pub fn render_prior<T: PriorSource>(
    tracks: &[T],
    tau: f64,
    grid: (usize, usize),
    downsample: usize,
) -> DenseMap {
    let specs: Vec<GaussianSpec> = tracks
        .iter()
        .filter(|t| t.is_active() && t.prior_confidence() > tau)
        .map(|t| GaussianSpec::from_box(&t.prior_box(), downsample, DEFAULT_MIN_OVERLAP))
        .collect();
    render(&specs, grid).0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub x: usize,
    pub y: usize,
    pub confidence: f64,
}

/// Cells that are >= all of their (existing) 8 neighbours and strictly above
/// `threshold`, one per connected plateau, sorted by descending value and
/// truncated to `max_n`. Within a plateau and among equal values, the
/// smallest `(row, col)` wins.
pub fn extract_peaks(hm: &DenseMap, threshold: f64, max_n: usize) -> Result<Vec<Peak>> {
    if hm.channels != 1 {
        return Err(Error::ShapeMismatch {
            expected: "1 channel".into(),
            actual: format!("{} channels", hm.channels),
        });
    }
    let (w, h) = (hm.width, hm.height);
    let at = |x: usize, y: usize| hm.values[y * w + x];
    let neighbours = |x: usize, y: usize| {
        let xs = x.saturating_sub(1)..=(x + 1).min(w - 1);
        let ys = y.saturating_sub(1)..=(y + 1).min(h - 1);
        ys.flat_map(move |ny| xs.clone().map(move |nx| (nx, ny)))
            .filter(move |&(nx, ny)| (nx, ny) != (x, y))
    };

    let mut is_max = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let v = at(x, y);
            if v > threshold && neighbours(x, y).all(|(nx, ny)| at(nx, ny) <= v) {
                is_max[y * w + x] = true;
            }
        }
    }

    // Scan in (row, col) order; the first cell met in a plateau represents it.
    let mut visited = vec![false; w * h];
    let mut peaks = Vec::new();
    let mut stack = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !is_max[i] || visited[i] {
                continue;
            }
            let v = at(x, y);
            peaks.push(Peak { x, y, confidence: v });
            visited[i] = true;
            stack.push((x, y));
            while let Some((cx, cy)) = stack.pop() {
                for (nx, ny) in neighbours(cx, cy) {
                    let j = ny * w + nx;
                    if !visited[j] && is_max[j] && at(nx, ny) == v {
                        visited[j] = true;
                        stack.push((nx, ny));
                    }
                }
            }
        }
    }
    peaks.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then((a.y, a.x).cmp(&(b.y, b.x)))
    });
    peaks.truncate(max_n);
    Ok(peaks)
}
