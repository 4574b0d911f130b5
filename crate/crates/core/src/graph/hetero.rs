use std::sync::Arc;

use super::schema::{EdgeTypeId, MetaRelation, NodeTypeId, Schema};
use super::{GraphError, Location};
use crate::autodiff::Tensor;
use crate::scalar::Scalar;

/// Compressed sparse rows with sorted, duplicate-free column lists.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Csr {
    offsets: Vec<usize>,
    cols: Vec<usize>,
}

impl Csr {
    /// Builds from unsorted `(row, col)` pairs. Returns the first duplicate
    /// pair as an error.
    pub fn from_pairs(rows: usize, pairs: &[(usize, usize)]) -> Result<Self, (usize, usize)> {
        let mut sorted = pairs.to_vec();
        sorted.sort_unstable();
        if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
            return Err(w[0]);
        }
        let mut offsets = vec![0usize; rows + 1];
        for &(r, _) in &sorted {
            offsets[r + 1] += 1;
        }
        for i in 0..rows {
            offsets[i + 1] += offsets[i];
        }
        Ok(Self {
            offsets,
            cols: sorted.into_iter().map(|(_, c)| c).collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.cols[self.offsets[r]..self.offsets[r + 1]]
    }

    /// Position of row `r`'s first entry in the flat column array.
    pub fn row_start(&self, r: usize) -> usize {
        self.offsets[r]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r < self.rows() && self.row(r).binary_search(&c).is_ok()
    }

    /// Flat position of `(r, c)` if present.
    pub fn position(&self, r: usize, c: usize) -> Option<usize> {
        if r >= self.rows() {
            return None;
        }
        self.row(r).binary_search(&c).ok().map(|p| self.offsets[r] + p)
    }

    /// All pairs in row-major order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.rows()).flat_map(move |r| self.row(r).iter().map(move |&c| (r, c)))
    }

    pub fn transpose(&self, cols: usize) -> Self {
        let pairs: Vec<(usize, usize)> = self.pairs().map(|(r, c)| (c, r)).collect();
        Self::from_pairs(cols, &pairs).expect("transpose of a simple relation is simple")
    }
}

/// A node addressed by type and per-type index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeRef {
    pub ty: NodeTypeId,
    pub idx: usize,
}

impl NodeRef {
    pub fn new(ty: NodeTypeId, idx: usize) -> Self {
        Self { ty, idx }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Out,
    In,
    Both,
}

/// Immutable typed graph. Every declared edge type is stored in both
/// directions: relation `e` and its reverse share one edge set.
#[derive(Clone, Debug)]
pub struct HeteroGraph<S> {
    schema: Arc<Schema>,
    node_counts: Vec<usize>,
    offsets: Vec<usize>,
    features: Vec<Arc<Tensor<S>>>,
    /// Per relation id: source → targets.
    out: Vec<Csr>,
    /// Per relation id: target → sources.
    inc: Vec<Csr>,
}

impl<S: Scalar> HeteroGraph<S> {
    /// `edges[e]` lists `(source, target)` local indices of declared edge type `e`.
    pub fn new(
        schema: Schema,
        node_counts: Vec<usize>,
        features: Vec<Tensor<S>>,
        edges: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self, GraphError> {
        Self::assemble(
            Arc::new(schema),
            node_counts,
            features.into_iter().map(Arc::new).collect(),
            edges,
        )
    }

    fn assemble(
        schema: Arc<Schema>,
        node_counts: Vec<usize>,
        features: Vec<Arc<Tensor<S>>>,
        edges: Vec<Vec<(usize, usize)>>,
    ) -> Result<Self, GraphError> {
        let nt = schema.node_types().len();
        if node_counts.len() != nt || features.len() != nt {
            return Err(GraphError::Invalid(format!(
                "{} node types but {} counts and {} feature matrices",
                nt,
                node_counts.len(),
                features.len()
            )));
        }
        for (i, def) in schema.node_types().iter().enumerate() {
            let f = &features[i];
            if f.rank() != 2 || f.rows() != node_counts[i] || f.cols() != def.feature_dim {
                return Err(GraphError::FeatureDim {
                    at: Location::new(format!("features of {}", def.name), 0),
                    expected: format!("{}x{}", node_counts[i], def.feature_dim),
                    found: format!("{:?}", f.shape()),
                });
            }
        }
        if edges.len() != schema.declared_count() {
            return Err(GraphError::Invalid(format!(
                "{} declared edge types but {} edge lists",
                schema.declared_count(),
                edges.len()
            )));
        }
        let d = schema.declared_count();
        let mut out = vec![Csr::default(); 2 * d];
        let mut inc = vec![Csr::default(); 2 * d];
        for (e, list) in edges.iter().enumerate() {
            let def = schema.relation(EdgeTypeId(e as u16));
            let (ns, nd) = (node_counts[def.source.index()], node_counts[def.target.index()]);
            for &(s, t) in list {
                if s >= ns || t >= nd {
                    return Err(GraphError::DanglingEndpoint {
                        at: Location::new(format!("edges of {}", def.name), 0),
                        id: format!("({s}, {t})"),
                    });
                }
            }
            let fwd = Csr::from_pairs(ns, list).map_err(|(s, t)| GraphError::DuplicateEdge {
                at: Location::new(format!("edges of {}", def.name), 0),
                src: s.to_string(),
                dst: t.to_string(),
            })?;
            let bwd = fwd.transpose(nd);
            out[e + d] = bwd.clone();
            inc[e + d] = fwd.clone();
            out[e] = fwd;
            inc[e] = bwd;
        }
        let mut offsets = Vec::with_capacity(nt + 1);
        offsets.push(0);
        for &c in &node_counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        Ok(Self {
            schema,
            node_counts,
            offsets,
            features,
            out,
            inc,
        })
    }

    /// Same nodes and features with a different declared edge set.
    pub fn with_edges(&self, edges: Vec<Vec<(usize, usize)>>) -> Result<Self, GraphError> {
        Self::assemble(
            self.schema.clone(),
            self.node_counts.clone(),
            self.features.clone(),
            edges,
        )
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn node_count(&self, ty: NodeTypeId) -> usize {
        self.node_counts[ty.index()]
    }

    pub fn node_counts(&self) -> &[usize] {
        &self.node_counts
    }

    pub fn total_nodes(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    /// Number of stored edges over declared types (reverses not counted).
    pub fn edge_count(&self) -> usize {
        self.out[..self.schema.declared_count()].iter().map(Csr::nnz).sum()
    }

    pub fn features(&self, ty: NodeTypeId) -> &Tensor<S> {
        &self.features[ty.index()]
    }

    /// Source → target adjacency of a relation.
    pub fn adjacency(&self, rel: EdgeTypeId) -> &Csr {
        &self.out[rel.index()]
    }

    /// Target → source adjacency of a relation.
    pub fn incoming(&self, rel: EdgeTypeId) -> &Csr {
        &self.inc[rel.index()]
    }

    /// `(source, target)` pairs of a relation in source-major order.
    pub fn edges(&self, rel: EdgeTypeId) -> Vec<(usize, usize)> {
        self.out[rel.index()].pairs().collect()
    }

    pub fn declared_edges(&self) -> Vec<Vec<(usize, usize)>> {
        self.schema.declared_ids().map(|e| self.edges(e)).collect()
    }

    pub fn has_edge(&self, rel: EdgeTypeId, src: usize, dst: usize) -> bool {
        self.out[rel.index()].contains(src, dst)
    }

    /// Dense id over all node types, types laid out in id order.
    pub fn global(&self, n: NodeRef) -> usize {
        self.offsets[n.ty.index()] + n.idx
    }

    pub fn type_offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn local(&self, global: usize) -> NodeRef {
        let t = self.offsets.partition_point(|&o| o <= global) - 1;
        NodeRef::new(NodeTypeId(t as u16), global - self.offsets[t])
    }

    fn check_node(&self, n: NodeRef) -> Result<(), GraphError> {
        let count = self.node_counts.get(n.ty.index()).copied().unwrap_or(0);
        if n.idx >= count {
            return Err(GraphError::NodeOutOfRange { node: n.idx, count });
        }
        Ok(())
    }

    /// Typed neighbors sorted by relation id, then neighbor index.
    pub fn neighbors(&self, n: NodeRef, dir: Direction) -> Result<Vec<(NodeRef, MetaRelation)>, GraphError> {
        self.check_node(n)?;
        let mut out = Vec::new();
        for rel in self.schema.relation_ids() {
            let meta = self.schema.meta_relation(rel);
            if matches!(dir, Direction::Out | Direction::Both) && meta.source == n.ty {
                out.extend(self.out[rel.index()].row(n.idx).iter().map(|&j| (NodeRef::new(meta.target, j), meta)));
            }
            if matches!(dir, Direction::In | Direction::Both) && meta.target == n.ty {
                out.extend(self.inc[rel.index()].row(n.idx).iter().map(|&j| (NodeRef::new(meta.source, j), meta)));
            }
        }
        out.sort_by_key(|(nb, m)| (m.edge, nb.ty, nb.idx));
        Ok(out)
    }

    /// Checks every structural invariant.
    pub fn validate(&self) -> Result<(), GraphError> {
        let s = &self.schema;
        for (i, def) in s.node_types().iter().enumerate() {
            let f = &self.features[i];
            if f.rows() != self.node_counts[i] || f.cols() != def.feature_dim {
                return Err(GraphError::Invalid(format!("feature shape of {}", def.name)));
            }
        }
        for rel in s.relation_ids() {
            let def = s.relation(rel);
            let (ns, nd) = (
                self.node_counts[def.source.index()],
                self.node_counts[def.target.index()],
            );
            let fwd = &self.out[rel.index()];
            if fwd.rows() != ns || fwd.cols.iter().any(|&c| c >= nd) {
                return Err(GraphError::Invalid(format!("endpoint out of range in {}", def.name)));
            }
            for r in 0..fwd.rows() {
                if fwd.row(r).windows(2).any(|w| w[0] >= w[1]) {
                    return Err(GraphError::Invalid(format!("unsorted or duplicate row in {}", def.name)));
                }
            }
            if self.inc[rel.index()] != fwd.transpose(nd) {
                return Err(GraphError::Invalid(format!("reverse adjacency of {} is not a transpose", def.name)));
            }
            if self.out[s.reverse(rel).index()] != self.inc[rel.index()] {
                return Err(GraphError::Invalid(format!("reverse relation of {} disagrees", def.name)));
            }
        }
        Ok(())
    }
}
