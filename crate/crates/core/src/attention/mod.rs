//! Meta-relation multi-head attention encoder with a softmax classifier head.

mod encoded;
mod encoder;

pub use encoded::{AttentionMap, EncodedGraph, RelationAttention};
pub use encoder::{AlphaBlock, Encoder, Forward, InputOverlay};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::autodiff::TensorError;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Linear,
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Linear => "linear",
        })
    }
}

impl FromStr for Activation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            "sigmoid" => Ok(Activation::Sigmoid),
            "linear" => Ok(Activation::Linear),
            other => Err(format!("unknown activation {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncoderConfig {
    pub layers: usize,
    pub hidden: usize,
    pub heads: usize,
    pub classes: usize,
    pub activation: Activation,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            layers: 5,
            hidden: 64,
            heads: 8,
            classes: 2,
            activation: Activation::Tanh,
        }
    }
}

impl EncoderConfig {
    pub fn head_dim(&self) -> usize {
        self.hidden / self.heads
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        if self.hidden == 0 || self.heads == 0 || !self.hidden.is_multiple_of(self.heads) {
            return Err(EncoderError::Config(format!(
                "hidden size {} must be a positive multiple of the head count {}",
                self.hidden, self.heads
            )));
        }
        if self.classes == 0 {
            return Err(EncoderError::Config("class count must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EncoderError {
    #[error("encoder config: {0}")]
    Config(String),
    #[error("missing or malformed parameter {0}")]
    Param(String),
    #[error("graph schema does not match the encoder: {0}")]
    Schema(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}
