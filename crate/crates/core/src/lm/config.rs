use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Words on each side of the encoder/decoder split.
pub const HALF: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    Linear,
    Sigmoid,
}

impl std::str::FromStr for OutputActivation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(OutputActivation::Linear),
            "sigmoid" => Ok(OutputActivation::Sigmoid),
            other => Err(Error::param(format!("unknown output activation {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub positional_encoding: bool,
    pub output_activation: OutputActivation,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 6,
            heads: 10,
            d_model: 100,
            d_ff: 400,
            positional_encoding: true,
            output_activation: OutputActivation::Linear,
            dropout: 0.1,
        }
    }
}

impl ModelConfig {
    /// Per-head width d_q = d_k = d_v.
    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers == 0 || self.heads == 0 || self.d_model == 0 || self.d_ff == 0 {
            return Err(Error::param("layers, heads, d_model and d_ff must be positive"));
        }
        if self.d_model % self.heads != 0 {
            return Err(Error::param(format!(
                "{} heads do not divide d_model {}",
                self.heads, self.d_model
            )));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::param("dropout must be in [0, 1)"));
        }
        Ok(())
    }
}
