//! The classifier network and its optimizer.

mod adam;
mod config;
mod model;
mod params;

pub use adam::{adam_update, AdamState, BETA1, BETA2, EPSILON};
pub use config::{
    ModelConfig, Pooling, DEFAULT_BATCH, DEFAULT_DENSE, DEFAULT_DROPOUT, DEFAULT_EMBED, DEFAULT_EPOCHS,
    DEFAULT_HIDDEN, DEFAULT_LEARNING_RATE, DEFAULT_SEED,
};
pub use model::{backward, bce_loss, forward, loss_and_grad, lstm_step, predict, sigmoid, ForwardCache, SeqCache, PROB_EPS};
pub use params::{
    glorot_bound, init_params, read_checkpoint, write_checkpoint, Gradients, ModelParams, CHECKPOINT_VERSION,
    TENSOR_NAMES,
};
