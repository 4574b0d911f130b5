//! Augmented views: feature exchange on the node level, triangle-based edge
//! adding and removing on the topology level, and the triangle statistics
//! used to audit them.

mod feature;
mod stats;
mod triangle;

pub use feature::{
    apply_feature_exchange, exchange_weights, feature_similarity, plan_feature_exchange, write_exchange_report,
    ExchangeCandidate, ExchangePlan,
};
pub use stats::{
    adamic_adar, before_after_report, clustering_coefficient, forman_curvature, forman_curvature_from_triples,
    BeforeAfter, EdgeTriangles, TriangleStats,
};
pub use triangle::{plan_edge_adding, plan_edge_removing, EdgeChange, EdgeOverlay, PlanCounters, OVERLAY_HEADER};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AugError {
    #[error("augmentation ratio {0} outside (0, 1]")]
    Ratio(f64),
    #[error("vector dimensions differ: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("no attention entry for edge {src} -> {dst} of relation {relation}")]
    MissingAttention {
        relation: String,
        src: usize,
        dst: usize,
    },
    #[error("node {node} is not of the target type or out of range")]
    NotTarget { node: usize },
    #[error("overlay conflict: {0}")]
    Overlay(String),
}

/// `max(1, round(ratio · n))` with halves rounded up, capped at `n`.
pub fn top_k_count(ratio: f64, n: usize) -> usize {
    if n == 0 {
        return 0;
    }
    ((ratio * n as f64 + 0.5).floor() as usize).clamp(1, n)
}

pub(crate) fn check_ratio(ratio: f64) -> Result<(), AugError> {
    if ratio > 0.0 && ratio <= 1.0 {
        Ok(())
    } else {
        Err(AugError::Ratio(ratio))
    }
}
