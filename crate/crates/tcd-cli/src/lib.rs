//! Experiment plumbing for the `tcd` binary: config files, batch manifests,
//! the parallel runner, and report rendering. Split out as a library so the
//! acceptance tests can drive full runs in-process.

pub mod config_file;
pub mod manifest;
pub mod report;
pub mod runner;

pub use config_file::load_config;
pub use manifest::ExperimentManifest;
pub use report::ComparisonReport;
pub use runner::{run_experiment, write_outputs};
