use serde::{Deserialize, Serialize};

use crate::error::{CertError, Result};

/// Sizes and regularisation of the Transformer encoder and its heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
    /// Output width of the projection head.
    pub d_proj: usize,
    /// Standard deviation of the normal weight initialiser.
    pub init_std: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            vocab_size: 0,
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            d_ff: 256,
            max_seq_len: 128,
            dropout_rate: 0.1,
            d_proj: 32,
            init_std: 0.02,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("vocab_size", self.vocab_size),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("d_ff", self.d_ff),
            ("d_proj", self.d_proj),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(CertError::Config(format!("{name} must be positive")));
            }
        }
        if self.max_seq_len < 3 {
            return Err(CertError::Config("max_seq_len must be at least 3".into()));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(CertError::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(CertError::Config(format!(
                "dropout_rate must lie in [0, 1), got {}",
                self.dropout_rate
            )));
        }
        if !(self.init_std > 0.0 && self.init_std.is_finite()) {
            return Err(CertError::Config("init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
