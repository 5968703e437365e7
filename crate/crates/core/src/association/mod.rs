//! Detection-to-track association and the track lifecycle.

pub mod matching;
pub mod tracker;

pub use matching::{greedy_assign, hungarian_match, min_cost_assignment, Assignment, CostMatrix};
pub use tracker::{
    confidence_order, greedy_match, optimal_match, Matcher, ThresholdStage, TrackerConfig,
    TrackerState, TrackingMode,
};
