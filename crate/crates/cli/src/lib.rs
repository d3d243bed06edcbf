//! Pipeline, synthetic data and report rendering behind the `sqcsef` binary.

pub mod config;
pub mod inputs;
pub mod pipeline;
pub mod presets;
pub mod report;
pub mod synth;
