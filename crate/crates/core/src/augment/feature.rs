use std::io::{self, Write};

use rayon::prelude::*;

use super::{check_ratio, top_k_count, AugError};
use crate::attention::{EncodedGraph, InputOverlay};
use crate::autodiff::Tensor;
use crate::graph::{Direction, EdgeTypeId, HeteroGraph, NodeRef};
use crate::scalar::Scalar;

/// Dot product of two hidden-state vectors.
pub fn feature_similarity<S: Scalar>(h_t: &[S], h_s: &[S]) -> Result<S, AugError> {
    if h_t.len() != h_s.len() {
        return Err(AugError::DimMismatch(h_t.len(), h_s.len()));
    }
    Ok(h_t.iter().zip(h_s).map(|(&a, &b)| a * b).sum())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExchangeCandidate {
    pub node: NodeRef,
    /// Relation of the strongest instance `node → target`.
    pub relation: EdgeTypeId,
    pub alpha: f64,
    pub similarity: f64,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExchangePlan<S> {
    pub target: NodeRef,
    /// Descending by weight; ties by smaller node.
    pub ranked: Vec<ExchangeCandidate>,
    /// The first `selected` entries of `ranked` are used.
    pub selected: usize,
    /// Mean of the selected neighbors' layer-0 states.
    pub replacement: Vec<S>,
}

/// Ranks the in-neighbors of `t` by head-averaged final-layer attention
/// times hidden-state similarity. A neighbor reached through several
/// relations is listed once with its largest weight.
pub fn exchange_weights<S: Scalar>(
    g: &HeteroGraph<S>,
    t: NodeRef,
    encoded: &EncodedGraph<S>,
) -> Result<Vec<ExchangeCandidate>, AugError> {
    let schema = g.schema();
    let states = encoded.final_states();
    let h_t = states[t.ty.index()].row(t.idx);
    let neighbors = g
        .neighbors(t, Direction::In)
        .map_err(|_| AugError::NotTarget { node: t.idx })?;
    let mut out: Vec<ExchangeCandidate> = Vec::with_capacity(neighbors.len());
    for (s, meta) in neighbors {
        let alpha = encoded
            .attention
            .mean(meta.edge, s.idx, t.idx)
            .ok_or_else(|| AugError::MissingAttention {
                relation: schema.relation(meta.edge).name.clone(),
                src: s.idx,
                dst: t.idx,
            })?;
        let similarity = feature_similarity(h_t, states[s.ty.index()].row(s.idx))?.to_f64_lossy();
        out.push(ExchangeCandidate {
            node: s,
            relation: meta.edge,
            alpha,
            similarity,
            weight: alpha * similarity,
        });
    }
    out.sort_by(|a, b| a.node.cmp(&b.node).then(b.weight.total_cmp(&a.weight)));
    out.dedup_by(|later, first| later.node == first.node);
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.node.cmp(&b.node)));
    Ok(out)
}

/// Plans an exchange for each listed target-type node. Nodes without
/// in-neighbors are skipped and counted.
pub fn plan_feature_exchange<S: Scalar>(
    g: &HeteroGraph<S>,
    targets: &[usize],
    k_ratio: f64,
    encoded: &EncodedGraph<S>,
    target_type: crate::graph::NodeTypeId,
) -> Result<(Vec<ExchangePlan<S>>, usize), AugError> {
    check_ratio(k_ratio)?;
    let h0 = encoded.input_states();
    let results: Vec<Result<Option<ExchangePlan<S>>, AugError>> = targets
        .par_iter()
        .map(|&t| {
            let t = NodeRef::new(target_type, t);
            let ranked = exchange_weights(g, t, encoded)?;
            if ranked.is_empty() {
                return Ok(None);
            }
            let selected = top_k_count(k_ratio, ranked.len());
            let d = h0[0].cols();
            let mut mean = vec![S::zero(); d];
            for c in &ranked[..selected] {
                for (m, &v) in mean.iter_mut().zip(h0[c.node.ty.index()].row(c.node.idx)) {
                    *m = *m + v;
                }
            }
            let inv = S::one() / S::from_usize(selected).expect("small count");
            mean.iter_mut().for_each(|m| *m = *m * inv);
            Ok(Some(ExchangePlan {
                target: t,
                ranked,
                selected,
                replacement: mean,
            }))
        })
        .collect();
    let mut plans = Vec::new();
    let mut skipped = 0;
    for r in results {
        match r? {
            Some(p) => plans.push(p),
            None => skipped += 1,
        }
    }
    Ok((plans, skipped))
}

/// Layer-0 overlay substituting each planned target's state.
pub fn apply_feature_exchange<S: Scalar>(plans: &[ExchangePlan<S>]) -> Vec<InputOverlay<S>> {
    let mut by_type: Vec<(crate::graph::NodeTypeId, Vec<usize>, Vec<S>, usize)> = Vec::new();
    for p in plans {
        let d = p.replacement.len();
        let entry = match by_type.iter_mut().find(|e| e.0 == p.target.ty) {
            Some(e) => e,
            None => {
                by_type.push((p.target.ty, Vec::new(), Vec::new(), d));
                by_type.last_mut().unwrap()
            }
        };
        entry.1.push(p.target.idx);
        entry.2.extend_from_slice(&p.replacement);
    }
    by_type
        .into_iter()
        .map(|(ty, rows, data, d)| InputOverlay {
            ty,
            values: Tensor::new(vec![rows.len(), d], data).expect("sized"),
            rows,
        })
        .collect()
}

/// TSV rows `target, selected, weights` with comma-joined lists.
pub fn write_exchange_report<S: Scalar, W: Write>(
    mut w: W,
    plans: &[ExchangePlan<S>],
    name: impl Fn(NodeRef) -> String,
) -> io::Result<()> {
    writeln!(w, "target\tselected\tweights")?;
    for p in plans {
        let chosen = &p.ranked[..p.selected];
        let nodes: Vec<String> = chosen.iter().map(|c| name(c.node)).collect();
        let weights: Vec<String> = chosen.iter().map(|c| format!("{}", c.weight)).collect();
        writeln!(w, "{}\t{}\t{}", name(p.target), nodes.join(","), weights.join(","))?;
    }
    Ok(())
}
