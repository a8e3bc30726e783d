//! Scenario files, presets, multi-seed runs and their CSV outputs.

pub mod metrics;
pub mod presets;
pub mod runner;
pub mod scenario;

pub use metrics::{MetricsReport, SeedSeries, SlotMetric, Summary};
pub use presets::{preset, preset_text, PRESET_NAMES};
pub use runner::{
    hotboot, read_warm, report_files, run_defender, run_scenario, run_sweep, sweep_csv, warm_bytes, write_files,
    SweepPoint, WarmStart,
};
pub use scenario::{AttackerKind, DefenderKind, Scenario, SweepAxis};
