//! Typed heterogeneous graphs: schema, storage, queries, dataset IO, splits
//! and synthetic generation.

mod hetero;
pub mod io;
mod labels;
mod schema;
mod skeleton;
mod synth;

pub use hetero::{Csr, Direction, HeteroGraph, NodeRef};
pub use labels::{split_nodes, LabelTable, SplitKind, SplitSpec};
pub use schema::{EdgeTypeDef, EdgeTypeId, MetaRelation, NodeTypeDef, NodeTypeId, Schema};
pub use skeleton::{OpenTriangleCandidate, Skeleton};
pub use synth::{generate_synthetic, RelationSpec, SynthSpec, SynthTypeSpec};

use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// File and line an IO error refers to (line 0 means the whole file).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Location {
    pub file: String,
    pub line: usize,
}

impl Location {
    pub fn new(file: impl Into<String>, line: usize) -> Self {
        Self {
            file: file.into(),
            line,
        }
    }

    pub fn none() -> Self {
        Self::new("<memory>", 0)
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.file)
        } else {
            write!(f, "{}:{}", self.file, self.line)
        }
    }
}

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("{at}: schema error: {msg}")]
    Schema { at: Location, msg: String },
    #[error("{at}: dangling endpoint {id:?}")]
    DanglingEndpoint { at: Location, id: String },
    #[error("{at}: duplicate edge {src} -> {dst}")]
    DuplicateEdge { at: Location, src: String, dst: String },
    #[error("{at}: feature dimension mismatch: expected {expected}, found {found}")]
    FeatureDim {
        at: Location,
        expected: String,
        found: String,
    },
    #[error("{at}: malformed line: {msg}")]
    Parse { at: Location, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("node {node} out of range for type with {count} nodes")]
    NodeOutOfRange { node: usize, count: usize },
    #[error("class {class} has no members")]
    EmptyClass { class: usize },
    #[error("invalid split ratios {0:?}")]
    Ratios(Vec<f64>),
    #[error("infeasible relation {relation}: {requested} edges requested, {possible} possible")]
    Infeasible {
        relation: String,
        requested: usize,
        possible: usize,
    },
    #[error("invalid graph: {0}")]
    Invalid(String),
}

impl GraphError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }
}
