//! Point-based multi-object tracking.
//!
//! Objects are points with a size and a backward offset to where they were
//! in the previous frame. This crate provides the association machinery
//! around that representation (greedy offset matching, track rebirth,
//! public-detection gating), the heatmap and loss kernels of the detector
//! head, a detector-error simulator, and CLEAR-MOT / IDF1 / AMOTA evaluation.

pub mod association;
pub mod error;
pub mod experiment;
pub mod heatmap;
pub mod io;
pub mod losses;
pub mod metrics;
pub mod motion;
pub mod simulator;
pub mod types;

pub use error::{Error, Result};
pub use types::{
    amodal_to_bbox, gating_radius, iou, AmodalBox, BBox, Borders, Detection, DetectionBox, Frame,
    LabeledBox, SequenceData, Track, TrackId, TrackStatus, Vec2,
};
