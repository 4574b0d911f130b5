use std::collections::HashSet;
use std::io::{self, Write};

use rayon::prelude::*;

use super::stats::adamic_adar;
use super::{check_ratio, top_k_count, AugError};
use crate::attention::AttentionMap;
use crate::graph::{EdgeTypeId, HeteroGraph, NodeRef, NodeTypeId, Schema, Skeleton};
use crate::scalar::Scalar;

/// One declared edge `src → dst` of `relation` (a declared edge type),
/// with the score that ranked it and the target node that planned it.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeChange {
    pub relation: EdgeTypeId,
    pub src: usize,
    pub dst: usize,
    pub score: f64,
    pub planned_for: usize,
}

impl EdgeChange {
    fn key(&self) -> (EdgeTypeId, usize, usize) {
        (self.relation, self.src, self.dst)
    }
}

/// Edges to add to and remove from a base graph. The reverse relation of
/// every change follows implicitly.
pub const OVERLAY_HEADER: &str = "op\tedge_type\tsrc\tdst\tscore\tplanned_for";

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EdgeOverlay {
    pub added: Vec<EdgeChange>,
    pub removed: Vec<EdgeChange>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlanCounters {
    pub planned: usize,
    /// Targets without candidates.
    pub skipped: usize,
}

impl EdgeOverlay {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty()
    }

    pub fn merge(mut self, other: EdgeOverlay) -> Self {
        self.added.extend(other.added);
        self.removed.extend(other.removed);
        self
    }

    /// The base graph with this overlay applied.
    pub fn apply<S: Scalar>(&self, g: &HeteroGraph<S>) -> Result<HeteroGraph<S>, AugError> {
        let mut edges = g.declared_edges();
        let removed: HashSet<_> = self.removed.iter().map(EdgeChange::key).collect();
        for c in &self.removed {
            if !g.has_edge(c.relation, c.src, c.dst) {
                return Err(AugError::Overlay(format!("removed edge {:?} not in base", c.key())));
            }
        }
        for c in &self.added {
            if g.has_edge(c.relation, c.src, c.dst) || removed.contains(&c.key()) {
                return Err(AugError::Overlay(format!("added edge {:?} already in base", c.key())));
            }
        }
        for (e, list) in edges.iter_mut().enumerate() {
            list.retain(|&(s, t)| !removed.contains(&(EdgeTypeId(e as u16), s, t)));
        }
        for c in &self.added {
            edges[c.relation.index()].push((c.src, c.dst));
        }
        g.with_edges(edges).map_err(|e| AugError::Overlay(e.to_string()))
    }

    /// TSV rows `op, edge_type, src, dst, score, planned_for`; `target` is
    /// the node type of the planning nodes.
    pub fn write_tsv<W: Write>(
        &self,
        mut w: W,
        schema: &Schema,
        target: NodeTypeId,
        name: impl Fn(NodeRef) -> String,
    ) -> io::Result<()> {
        writeln!(w, "{OVERLAY_HEADER}")?;
        for (op, list) in [("add", &self.added), ("remove", &self.removed)] {
            for c in list {
                let def = schema.relation(c.relation);
                writeln!(
                    w,
                    "{op}\t{}\t{}\t{}\t{}\t{}",
                    def.name,
                    name(NodeRef::new(def.source, c.src)),
                    name(NodeRef::new(def.target, c.dst)),
                    c.score,
                    name(NodeRef::new(target, c.planned_for)),
                )?;
            }
        }
        Ok(())
    }

    /// Parses the output of [`EdgeOverlay::write_tsv`]. `lookup` maps a
    /// node type and string id to a dense index.
    pub fn read_tsv(
        text: &str,
        schema: &Schema,
        target: NodeTypeId,
        lookup: impl Fn(NodeTypeId, &str) -> Option<usize>,
    ) -> Result<Self, AugError> {
        let mut out = EdgeOverlay::default();
        let bad = |line: usize, msg: String| AugError::Overlay(format!("line {line}: {msg}"));
        for (i, line) in text.lines().enumerate() {
            let n = i + 1;
            if line.trim().is_empty() || line.starts_with('#') || (n == 1 && line == OVERLAY_HEADER) {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 6 {
                return Err(bad(n, format!("expected 6 fields, found {}", f.len())));
            }
            let relation = schema
                .edge_type_by_name(f[1])
                .filter(|&r| !schema.is_reverse(r))
                .ok_or_else(|| bad(n, format!("unknown edge type {:?}", f[1])))?;
            let def = schema.relation(relation);
            let node = |ty: NodeTypeId, id: &str| lookup(ty, id).ok_or_else(|| bad(n, format!("unknown node id {id:?}")));
            let change = EdgeChange {
                relation,
                src: node(def.source, f[2])?,
                dst: node(def.target, f[3])?,
                score: f[4].parse().map_err(|_| bad(n, format!("bad score {:?}", f[4])))?,
                planned_for: node(target, f[5])?,
            };
            match f[0] {
                "add" => out.added.push(change),
                "remove" => out.removed.push(change),
                op => return Err(bad(n, format!("unknown op {op:?}"))),
            }
        }
        Ok(out)
    }
}

/// Attention mass flowing into `t` through each relation.
fn incoming_mass(attention: &AttentionMap, schema: &Schema, t: NodeRef) -> Vec<f64> {
    let mut mass = vec![0.0; schema.relation_count()];
    for (_, rel, a) in attention.incoming(schema, t) {
        mass[rel.index()] += a;
    }
    mass
}

/// Declared edge types joining `a` and `b` in either orientation, each
/// with the attention mass into `t` (of type `a`) of its matching relation(s).
fn legal_types(schema: &Schema, a: NodeTypeId, b: NodeTypeId, mass: &[f64]) -> Vec<(EdgeTypeId, f64)> {
    schema
        .declared_ids()
        .filter_map(|e| {
            let mut m = 0.0;
            let mut legal = false;
            for r in [e, schema.reverse(e)] {
                let d = schema.relation(r);
                if d.target == a && d.source == b {
                    m += mass[r.index()];
                    legal = true;
                }
            }
            legal.then_some((e, m))
        })
        .collect()
}

/// For each target, adds edges closing its open triangles ranked by
/// Adamic-Adar, keeping only candidates some declared edge type can join.
pub fn plan_edge_adding<S: Scalar>(
    g: &HeteroGraph<S>,
    sk: &Skeleton,
    target_type: NodeTypeId,
    targets: &[usize],
    k_ratio: f64,
    attention: &AttentionMap,
) -> Result<(EdgeOverlay, PlanCounters), AugError> {
    check_ratio(k_ratio)?;
    let schema = g.schema();
    let per_target: Vec<Option<Vec<EdgeChange>>> = targets
        .par_iter()
        .map(|&t| {
            let tn = NodeRef::new(target_type, t);
            let gt = g.global(tn);
            let mass = incoming_mass(attention, schema, tn);
            let mut scored: Vec<(f64, usize, Vec<(EdgeTypeId, f64)>)> = sk
                .open_triangle_candidates(gt)
                .into_iter()
                .filter_map(|c| {
                    let ty = g.local(c.node).ty;
                    let types = legal_types(schema, target_type, ty, &mass);
                    (!types.is_empty()).then(|| (adamic_adar(sk, &c.common), c.node, types))
                })
                .collect();
            if scored.is_empty() {
                return None;
            }
            scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            let k = top_k_count(k_ratio, scored.len());
            Some(
                scored[..k]
                    .iter()
                    .map(|(aa, node, types)| {
                        let (e, _) = types
                            .iter()
                            .copied()
                            .fold(types[0], |best, x| if x.1 > best.1 { x } else { best });
                        let other = g.local(*node);
                        let (src, dst) = if schema.relation(e).source == target_type {
                            (t, other.idx)
                        } else {
                            (other.idx, t)
                        };
                        EdgeChange {
                            relation: e,
                            src,
                            dst,
                            score: *aa,
                            planned_for: t,
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    let mut counters = PlanCounters::default();
    let mut seen = HashSet::new();
    let mut added = Vec::new();
    for changes in per_target {
        match changes {
            None => counters.skipped += 1,
            Some(list) => {
                counters.planned += 1;
                for c in list {
                    // Two targets of a same-type relation can plan the same pair.
                    let def = schema.relation(c.relation);
                    let key = if def.source == def.target {
                        (c.relation, c.src.min(c.dst), c.src.max(c.dst))
                    } else {
                        c.key()
                    };
                    if seen.insert(key) {
                        added.push(c);
                    }
                }
            }
        }
    }
    Ok((
        EdgeOverlay {
            added,
            removed: Vec::new(),
        },
        counters,
    ))
}

/// For each target in ascending order, removes its triangle edges with the
/// least attention. An edge is dropped only while both endpoints keep at
/// least one other edge, counting removals made for earlier targets.
pub fn plan_edge_removing<S: Scalar>(
    g: &HeteroGraph<S>,
    sk: &Skeleton,
    target_type: NodeTypeId,
    targets: &[usize],
    k_ratio: f64,
    attention: &AttentionMap,
) -> Result<(EdgeOverlay, PlanCounters), AugError> {
    check_ratio(k_ratio)?;
    let schema = g.schema();
    let mut order = targets.to_vec();
    order.sort_unstable();
    order.dedup();

    let mut degree = vec![0usize; g.total_nodes()];
    for e in schema.declared_ids() {
        let def = schema.relation(e);
        for (s, t) in g.adjacency(e).pairs() {
            if !(def.source == def.target && s == t) {
                degree[g.global(NodeRef::new(def.source, s))] += 1;
                degree[g.global(NodeRef::new(def.target, t))] += 1;
            }
        }
    }

    let mut counters = PlanCounters::default();
    let mut removed: Vec<EdgeChange> = Vec::new();
    let mut gone = HashSet::new();
    for &t in &order {
        let tn = NodeRef::new(target_type, t);
        let gt = g.global(tn);
        // (α into t, neighbor global id, declared type, src, dst)
        let mut cands: Vec<(f64, usize, EdgeTypeId, usize, usize)> = Vec::new();
        for e in schema.declared_ids() {
            let def = schema.relation(e);
            let mut push = |other: NodeRef, src: usize, dst: usize, rel_in: EdgeTypeId| -> Result<(), AugError> {
                let go = g.global(other);
                if go == gt || sk.common_count(gt, go) == 0 {
                    return Ok(());
                }
                let a = attention
                    .mean(rel_in, other.idx, t)
                    .ok_or_else(|| AugError::MissingAttention {
                        relation: schema.relation(rel_in).name.clone(),
                        src: other.idx,
                        dst: t,
                    })?;
                cands.push((a, go, e, src, dst));
                Ok(())
            };
            if def.source == target_type {
                for &o in g.adjacency(e).row(t) {
                    push(NodeRef::new(def.target, o), t, o, schema.reverse(e))?;
                }
            }
            if def.target == target_type {
                for &o in g.incoming(e).row(t) {
                    push(NodeRef::new(def.source, o), o, t, e)?;
                }
            }
        }
        if cands.is_empty() {
            counters.skipped += 1;
            continue;
        }
        counters.planned += 1;
        cands.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let k = top_k_count(k_ratio, cands.len());
        for &(a, go, e, src, dst) in &cands[..k] {
            if gone.contains(&(e, src, dst)) || degree[gt] <= 1 || degree[go] <= 1 {
                continue;
            }
            gone.insert((e, src, dst));
            degree[gt] -= 1;
            degree[go] -= 1;
            removed.push(EdgeChange {
                relation: e,
                src,
                dst,
                score: a,
                planned_for: t,
            });
        }
    }
    Ok((
        EdgeOverlay {
            added: Vec::new(),
            removed,
        },
        counters,
    ))
}
