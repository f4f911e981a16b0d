//! Command-line driver around the robust-training library: experiment
//! configuration, dataset synthesis and IDX ingestion, checkpoint
//! persistence, and the per-subcommand pipelines that emit JSON, CSV, and
//! SVG artifacts.
//!
//! Every run is fully determined by its configuration and seed: datasets are
//! synthesised from counter-based random streams, training is deterministic,
//! and output files carry no timestamps, so identical invocations produce
//! byte-identical artifacts.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod idx;
pub mod output;
pub mod svg;
pub mod synth;

pub use commands::run;
pub use config::ExperimentConfig;
