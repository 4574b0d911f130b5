//! Semi-supervised node classification on heterogeneous graphs with
//! multi-level data augmentation.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision for the common cases.

pub mod attention;
pub mod augment;
pub mod cli;
pub mod autodiff;
pub mod config;
pub mod graph;
pub mod metrics;
mod scalar;
pub mod train;

pub use scalar::Scalar;

pub type Tensor32 = autodiff::Tensor<f32>;
pub type Tensor64 = autodiff::Tensor<f64>;
pub type Tape32 = autodiff::Tape<f32>;
pub type Tape64 = autodiff::Tape<f64>;
