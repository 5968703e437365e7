//! File formats, run configuration and report rendering.

pub mod config;
pub mod mot;
pub mod report;

pub use config::{resolve_seed, EvalConfig, OutputConfig, Preset, RunConfig, SEED_ENV};
pub use mot::{apply_offsets, parse_offsets, render_records, run_tracker, sequence_records, track_records, MotFile, MotRecord};
pub use report::{ablation_csv, report_csv, report_table, REPORT_COLUMNS};
