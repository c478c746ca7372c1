//! Bidirectional LSTM regressor trained on the CCC loss.

mod adam;
mod checkpoint;
mod config;
mod network;
mod params;
mod train;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, load_checkpoint_for, save_checkpoint, CHECKPOINT_MAGIC,
    CHECKPOINT_VERSION,
};
pub use config::{ModelConfig, DEFAULT_LAYER_UNITS};
pub use network::{backward, forward, loss_and_gradients, predict};
pub use params::{init_params, Gradients, ModelParams, ParamLayout, TensorSlot, FORGET_BIAS, GATE_ORDER};
pub use train::{concat_ccc, train, EpochRecord, Sequence, TrainConfig, TrainOutcome, TrainRecord};
