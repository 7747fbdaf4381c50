use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_HIDDEN: usize = 64;
pub const DEFAULT_EMBED: usize = 64;
pub const DEFAULT_DENSE: usize = 64;
pub const DEFAULT_DROPOUT: f64 = 0.2;
pub const DEFAULT_BATCH: usize = 128;
pub const DEFAULT_LEARNING_RATE: f64 = 0.001000000474974513;
pub const DEFAULT_EPOCHS: usize = 5;
pub const DEFAULT_SEED: u64 = 0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// Per-coordinate maximum over non-pad timesteps.
    #[default]
    Max,
    /// Per-coordinate mean over non-pad timesteps.
    Mean,
}

/// Architecture and training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub seq_len: usize,
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub dense_width: usize,
    pub dropout_rate: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    #[serde(default)]
    pub pooling: Pooling,
}

impl ModelConfig {
    /// Default hyperparameters for the given sequence length and vocabulary.
    pub fn new(seq_len: usize, vocab_size: usize) -> Self {
        ModelConfig {
            seq_len,
            vocab_size,
            embed_dim: DEFAULT_EMBED,
            hidden: DEFAULT_HIDDEN,
            dense_width: DEFAULT_DENSE,
            dropout_rate: DEFAULT_DROPOUT,
            batch_size: DEFAULT_BATCH,
            learning_rate: DEFAULT_LEARNING_RATE,
            epochs: DEFAULT_EPOCHS,
            seed: DEFAULT_SEED,
            pooling: Pooling::Max,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("seq_len", self.seq_len),
            ("vocab_size", self.vocab_size),
            ("embed_dim", self.embed_dim),
            ("hidden", self.hidden),
            ("dense_width", self.dense_width),
            ("batch_size", self.batch_size),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be >= 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidConfig(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}
