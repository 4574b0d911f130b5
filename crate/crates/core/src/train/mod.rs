//! Semi-supervised training: cross-entropy on labeled nodes plus a
//! sharpened consistency loss across augmented views, with AdamW and early
//! stopping on validation loss.

mod driver;
mod loss;

pub use driver::{evaluate_split, train, train_supervised, write_log_tsv, EpochRecord, TrainOutcome, LOG_HEADER};
pub use loss::{consistency_loss, labeled_loss, mean_prediction, sharpen, total_loss};

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::attention::{EncoderConfig, EncoderError};
use crate::augment::AugError;
use crate::autodiff::{AdamWConfig, ParamSet, TensorError};
use crate::graph::GraphError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ViewKind {
    Identity,
    FeatureExchange,
    EdgeAdd,
    EdgeRemove,
}

impl fmt::Display for ViewKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ViewKind::Identity => "identity",
            ViewKind::FeatureExchange => "feature-exchange",
            ViewKind::EdgeAdd => "edge-add",
            ViewKind::EdgeRemove => "edge-remove",
        })
    }
}

impl FromStr for ViewKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "identity" => Ok(ViewKind::Identity),
            "feature-exchange" => Ok(ViewKind::FeatureExchange),
            "edge-add" => Ok(ViewKind::EdgeAdd),
            "edge-remove" => Ok(ViewKind::EdgeRemove),
            other => Err(format!("unknown view {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub encoder: EncoderConfig,
    pub lambda_u: f64,
    pub temperature: f64,
    pub k_ratio: f64,
    pub views: Vec<ViewKind>,
    pub epochs: usize,
    pub patience: usize,
    pub optimizer: AdamWConfig,
    pub seed: u64,
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training config: {0}")]
    Config(String),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Augment(#[from] AugError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Parameters of the best epoch before divergence.
        last_good: Box<ParamSet<f64>>,
    },
}
