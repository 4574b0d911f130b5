use std::io::{self, Write};
use std::ops::Range;

use super::encoder::Forward;
use super::{Encoder, EncoderError, InputOverlay};
use crate::autodiff::{Tape, Tensor};
use crate::graph::{EdgeTypeId, HeteroGraph, NodeRef, Schema};
use crate::scalar::Scalar;

/// Final-layer attention of one relation. Instances are sorted by
/// (target, source); `alpha` is row-major `instances × heads`.
#[derive(Clone, Debug, PartialEq)]
pub struct RelationAttention {
    pub relation: EdgeTypeId,
    pub src: Vec<usize>,
    pub dst: Vec<usize>,
    pub heads: usize,
    pub alpha: Vec<f64>,
}

impl RelationAttention {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }

    pub fn head(&self, e: usize, h: usize) -> f64 {
        self.alpha[e * self.heads + h]
    }

    /// Head-averaged weight of instance `e`.
    pub fn mean(&self, e: usize) -> f64 {
        self.alpha[e * self.heads..(e + 1) * self.heads].iter().sum::<f64>() / self.heads as f64
    }

    /// Instances whose target is `t`.
    pub fn into_node(&self, t: usize) -> Range<usize> {
        self.dst.partition_point(|&x| x < t)..self.dst.partition_point(|&x| x <= t)
    }

    pub fn find(&self, src: usize, dst: usize) -> Option<usize> {
        let r = self.into_node(dst);
        self.src[r.clone()].binary_search(&src).ok().map(|p| r.start + p)
    }
}

/// Final-layer attention for every relation, indexed by relation id.
#[derive(Clone, Debug, PartialEq)]
pub struct AttentionMap {
    pub heads: usize,
    relations: Vec<Option<RelationAttention>>,
}

impl AttentionMap {
    pub fn new(heads: usize, relation_count: usize) -> Self {
        Self {
            heads,
            relations: vec![None; relation_count],
        }
    }

    /// Sets the weights of one relation. Instances must be sorted by
    /// (target, source).
    pub fn insert(&mut self, r: RelationAttention) {
        debug_assert!(r.dst.iter().zip(&r.src).collect::<Vec<_>>().windows(2).all(|w| w[0] < w[1]));
        let slot = r.relation.index();
        self.relations[slot] = Some(r);
    }

    pub fn from_forward<S: Scalar>(tape: &Tape<S>, fwd: &Forward, schema: &Schema, heads: usize) -> Self {
        let mut relations = vec![None; schema.relation_count()];
        for block in &fwd.attention {
            let alpha = tape.value(block.alpha);
            for &(rel, start, end) in &block.spans {
                relations[rel.index()] = Some(RelationAttention {
                    relation: rel,
                    src: block.src[start..end].to_vec(),
                    dst: block.dst[start..end].to_vec(),
                    heads,
                    alpha: alpha.data()[start * heads..end * heads]
                        .iter()
                        .map(|v| v.to_f64_lossy())
                        .collect(),
                });
            }
        }
        Self { heads, relations }
    }

    pub fn relation(&self, rel: EdgeTypeId) -> Option<&RelationAttention> {
        self.relations.get(rel.index()).and_then(Option::as_ref)
    }

    pub fn relations(&self) -> impl Iterator<Item = &RelationAttention> {
        self.relations.iter().flatten()
    }

    /// Head-averaged weight of the instance `src → dst` of `rel`.
    pub fn mean(&self, rel: EdgeTypeId, src: usize, dst: usize) -> Option<f64> {
        let r = self.relation(rel)?;
        r.find(src, dst).map(|e| r.mean(e))
    }

    /// Every incoming instance of `t` as (source, relation, head-averaged α),
    /// sorted by relation then source.
    pub fn incoming(&self, schema: &Schema, t: NodeRef) -> Vec<(NodeRef, EdgeTypeId, f64)> {
        let mut out = Vec::new();
        for rel in schema.relations_into(t.ty) {
            if let Some(r) = self.relation(rel) {
                let st = schema.relation(rel).source;
                for e in r.into_node(t.idx) {
                    out.push((NodeRef::new(st, r.src[e]), rel, r.mean(e)));
                }
            }
        }
        out
    }

    /// Largest deviation from 1 of Σα over the incoming instances of any
    /// node, per head. Nodes without incoming edges are skipped.
    pub fn normalization_error(&self, schema: &Schema, counts: &[usize]) -> f64 {
        let mut worst = 0.0f64;
        for t in schema.node_type_ids() {
            let mut sums = vec![0.0; counts[t.index()] * self.heads];
            let mut seen = vec![false; counts[t.index()]];
            for rel in schema.relations_into(t) {
                if let Some(r) = self.relation(rel) {
                    for e in 0..r.len() {
                        seen[r.dst[e]] = true;
                        for h in 0..self.heads {
                            sums[r.dst[e] * self.heads + h] += r.head(e, h);
                        }
                    }
                }
            }
            for (i, _) in seen.iter().enumerate().filter(|(_, &s)| s) {
                for h in 0..self.heads {
                    worst = worst.max((sums[i * self.heads + h] - 1.0).abs());
                }
            }
        }
        worst
    }

    /// TSV rows `src, edge_type, dst, head, alpha`. Nodes are written with
    /// their string ids when given, else as `type:index`.
    pub fn write_tsv<W: Write>(&self, mut w: W, schema: &Schema, ids: Option<&[Vec<String>]>) -> io::Result<()> {
        let name = |n: NodeRef| match ids {
            Some(ids) => ids[n.ty.index()][n.idx].clone(),
            None => format!("{}:{}", schema.node_type(n.ty).name, n.idx),
        };
        writeln!(w, "src\tedge_type\tdst\thead\talpha")?;
        for r in self.relations() {
            let def = schema.relation(r.relation);
            for e in 0..r.len() {
                let (s, t) = (name(NodeRef::new(def.source, r.src[e])), name(NodeRef::new(def.target, r.dst[e])));
                for h in 0..r.heads {
                    writeln!(w, "{s}\t{}\t{t}\t{h}\t{}", def.name, r.head(e, h))?;
                }
            }
        }
        Ok(())
    }
}

/// Values of one forward pass detached from the tape.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedGraph<S> {
    /// `hidden[l][type]` for `l` in `0..=layers`.
    pub hidden: Vec<Vec<Tensor<S>>>,
    /// Class probabilities of the target type.
    pub z: Tensor<S>,
    pub attention: AttentionMap,
}

impl<S: Scalar> EncodedGraph<S> {
    pub fn from_forward(tape: &Tape<S>, fwd: &Forward, schema: &Schema, heads: usize) -> Self {
        Self {
            hidden: fwd
                .hidden
                .iter()
                .map(|layer| layer.iter().map(|&v| tape.value(v).clone()).collect())
                .collect(),
            z: tape.value(fwd.z).clone(),
            attention: AttentionMap::from_forward(tape, fwd, schema, heads),
        }
    }

    pub fn input_states(&self) -> &[Tensor<S>] {
        &self.hidden[0]
    }

    pub fn final_states(&self) -> &[Tensor<S>] {
        self.hidden.last().expect("layer 0 always present")
    }

    /// Predicted class per target node (first maximum on ties).
    pub fn predictions(&self) -> Vec<usize> {
        (0..self.z.rows())
            .map(|i| {
                let row = self.z.row(i);
                (0..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
            })
            .collect()
    }
}

impl<S: Scalar> Encoder<S> {
    /// Inference pass with frozen parameters.
    pub fn encode(&self, g: &HeteroGraph<S>, overlays: &[InputOverlay<S>]) -> Result<EncodedGraph<S>, EncoderError> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false)?;
        let fwd = self.forward(&mut tape, &vars, g, overlays)?;
        Ok(EncodedGraph::from_forward(&tape, &fwd, g.schema(), self.config().heads))
    }
}
