//! Workflow around `emocont-core`: synthetic corpora, feature caches,
//! training, evaluation, fusion and plots.

pub mod commands;
pub mod config;
pub mod features;
pub mod plot;
pub mod predictions;
pub mod synth;

pub use config::RunConfig;
pub use synth::SynthSpec;
