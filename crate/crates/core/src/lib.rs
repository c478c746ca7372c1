//! Continuous speech emotion recognition: per-segment features, a
//! bidirectional LSTM regressor trained on the concordance correlation
//! coefficient, and late fusion of two modalities.

pub mod align;
pub mod data;
pub mod dsp;
mod error;
pub mod fusion;
pub mod metrics;
pub mod model;
mod pool;

pub use data::{
    FeatureMatrix, GoldTrack, PredictionTrack, SegmentTimeline, Subset,
};
pub use error::{Error, Result};
pub use metrics::{ccc, ccc_loss, ccc_loss_grad};
