//! Dense tensors, a reverse-mode tape, AdamW and parameter checkpoints.

mod checkpoint;
pub mod kernels;
mod optim;
mod params;
mod tape;
mod tensor;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, CheckpointError,
    CheckpointHeader, CHECKPOINT_VERSION,
};
pub use optim::{AdamW, AdamWConfig};
pub use params::ParamSet;
pub use tape::{BinaryKind, Gradients, ReduceKind, Tape, UnaryKind, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op} expects rank {expected}, got shape {shape:?}")]
    Rank {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("data of length {len} does not fill shape {shape:?}")]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("non-finite value produced by {op}")]
    NonFinite { op: &'static str },
    #[error("logarithm of a non-positive value")]
    LogDomain,
    #[error("reduction over an empty input")]
    EmptyReduction,
    #[error("axis {axis} out of range for shape {shape:?}")]
    InvalidAxis { axis: usize, shape: Vec<usize> },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("loss does not depend on any parameter")]
    Detached,
    #[error("variable belongs to a different or reset tape")]
    ForeignVar,
    #[error("tape already ran backward; reset it before recording")]
    Sealed,
}
