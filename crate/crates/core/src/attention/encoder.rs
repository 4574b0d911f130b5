use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Activation, EncoderConfig, EncoderError};
use crate::autodiff::{ParamSet, Tape, Tensor, Var};
use crate::graph::{EdgeTypeId, HeteroGraph, NodeTypeId, Schema};
use crate::scalar::{lit, Scalar};

/// Slot indices of every parameter, derived from schema and config.
#[derive(Clone, Debug, PartialEq)]
struct Layout {
    input: Vec<usize>,
    q: Vec<Vec<usize>>,
    k: Vec<Vec<usize>>,
    m: Vec<Vec<usize>>,
    att: Vec<Vec<usize>>,
    gate: Vec<Vec<usize>>,
    cls_w: usize,
    cls_b: usize,
}

/// Replacement rows for the layer-0 states of one node type. Replaced rows
/// enter the forward pass as constants.
#[derive(Clone, Debug, PartialEq)]
pub struct InputOverlay<S> {
    pub ty: NodeTypeId,
    pub rows: Vec<usize>,
    /// `rows.len() × hidden`.
    pub values: Tensor<S>,
}

/// Tape handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Class probabilities of the target type.
    pub z: Var,
    /// `hidden[l][type]` for `l` in `0..=layers`.
    pub hidden: Vec<Vec<Var>>,
    /// Final-layer attention, one block per target type with incoming edges.
    pub attention: Vec<AlphaBlock>,
}

/// Softmax-normalized scores of every edge instance into one node type.
/// Rows of `alpha` are instances, columns heads; `spans` locate each
/// relation's rows, in which instances are sorted by (target, source).
#[derive(Clone, Debug)]
pub struct AlphaBlock {
    pub target: NodeTypeId,
    pub alpha: Var,
    /// Pre-softmax scores, same layout as `alpha`.
    pub scores: Var,
    pub spans: Vec<(EdgeTypeId, usize, usize)>,
    pub src: Arc<[usize]>,
    pub dst: Arc<[usize]>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Encoder<S> {
    config: EncoderConfig,
    schema: Schema,
    target: NodeTypeId,
    layout: Layout,
    params: ParamSet<S>,
}

fn xavier<S: Scalar>(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor<S> {
    let bound = (6.0 / (rows + cols).max(1) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| lit::<S>(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(vec![rows, cols], data).expect("sized")
}

impl<S: Scalar> Encoder<S> {
    /// Fresh encoder with Xavier-uniform weights and unit relation gates.
    pub fn new(config: EncoderConfig, schema: &Schema, target: NodeTypeId, seed: u64) -> Result<Self, EncoderError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, schema, target, |name, shape| {
            if name.contains(".gate.") {
                Tensor::filled(&[1, 1], S::one())
            } else if name == "classifier.b" {
                Tensor::zeros(shape)
            } else {
                xavier(shape[0], shape[1], &mut rng)
            }
        })
    }

    /// Encoder over existing parameters, e.g. from a checkpoint.
    pub fn from_params(
        config: EncoderConfig,
        schema: &Schema,
        target: NodeTypeId,
        params: &ParamSet<S>,
    ) -> Result<Self, EncoderError> {
        let mut missing = None;
        let enc = Self::build(config, schema, target, |name, shape| match params.by_name(name) {
            Some(t) if t.shape() == shape => t.clone(),
            _ => {
                missing.get_or_insert_with(|| name.to_string());
                Tensor::zeros(shape)
            }
        })?;
        match missing {
            Some(name) => Err(EncoderError::Param(name)),
            None if params.len() != enc.params.len() => Err(EncoderError::Param("unexpected extra parameters".into())),
            None => Ok(enc),
        }
    }

    fn build(
        config: EncoderConfig,
        schema: &Schema,
        target: NodeTypeId,
        mut init: impl FnMut(&str, &[usize]) -> Tensor<S>,
    ) -> Result<Self, EncoderError> {
        config.validate()?;
        if target.index() >= schema.node_types().len() {
            return Err(EncoderError::Schema(format!("target type {} out of range", target.0)));
        }
        let (d, dh) = (config.hidden, config.head_dim());
        let mut params = ParamSet::new();
        let mut add = |name: String, shape: [usize; 2]| {
            let t = init(&name, &shape);
            params.insert(name, t)
        };
        let types = schema.node_types();
        let rels: Vec<EdgeTypeId> = schema.relation_ids().collect();
        let input = types
            .iter()
            .map(|t| add(format!("input.{}", t.name), [t.feature_dim, d]))
            .collect();
        let (mut q, mut k, mut m, mut att, mut gate) = (vec![], vec![], vec![], vec![], vec![]);
        for l in 0..config.layers {
            for (role, slots) in [("q", &mut q), ("k", &mut k), ("m", &mut m)] {
                slots.push(
                    types
                        .iter()
                        .map(|t| add(format!("layer{l}.{role}.{}", t.name), [d, d]))
                        .collect(),
                );
            }
            att.push(
                rels.iter()
                    .map(|&r| add(format!("layer{l}.att.{}", schema.relation(r).name), [dh, dh]))
                    .collect(),
            );
            gate.push(
                rels.iter()
                    .map(|&r| add(format!("layer{l}.gate.{}", schema.relation(r).name), [1, 1]))
                    .collect(),
            );
        }
        let cls_w = add("classifier.w".into(), [d, config.classes]);
        let cls_b = add("classifier.b".into(), [1, config.classes]);
        Ok(Self {
            config,
            schema: schema.clone(),
            target,
            layout: Layout {
                input,
                q,
                k,
                m,
                att,
                gate,
                cls_w,
                cls_b,
            },
            params,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn target(&self) -> NodeTypeId {
        self.target
    }

    pub fn params(&self) -> &ParamSet<S> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<S> {
        &mut self.params
    }

    /// Records every parameter on `tape`, trainable or constant.
    pub fn bind(&self, tape: &mut Tape<S>, trainable: bool) -> Result<Vec<Var>, EncoderError> {
        Ok(self
            .params
            .tensors()
            .iter()
            .map(|t| tape.leaf(t.clone(), trainable))
            .collect::<Result<_, _>>()?)
    }

    fn activate(&self, tape: &mut Tape<S>, x: Var) -> Result<Var, EncoderError> {
        Ok(match self.config.activation {
            Activation::Tanh => tape.tanh(x)?,
            Activation::Relu => tape.relu(x)?,
            Activation::Sigmoid => tape.sigmoid(x)?,
            Activation::Linear => x,
        })
    }

    fn check_graph(&self, g: &HeteroGraph<S>) -> Result<(), EncoderError> {
        let s = g.schema();
        if s.node_types() != self.schema.node_types() || s.relation_count() != self.schema.relation_count() {
            return Err(EncoderError::Schema("node types or relation count differ".into()));
        }
        for r in s.relation_ids() {
            if s.relation(r) != self.schema.relation(r) {
                return Err(EncoderError::Schema(format!("no parameters for relation {}", s.relation(r).name)));
            }
        }
        Ok(())
    }

    /// Layer-0 states σ(X·W) per node type, with overlay rows substituted.
    pub fn project_inputs(
        &self,
        tape: &mut Tape<S>,
        vars: &[Var],
        g: &HeteroGraph<S>,
        overlays: &[InputOverlay<S>],
    ) -> Result<Vec<Var>, EncoderError> {
        self.check_graph(g)?;
        let d = self.config.hidden;
        let mut out = Vec::new();
        for t in g.schema().node_type_ids() {
            let x = tape.constant(g.features(t).clone())?;
            let xw = tape.matmul(x, vars[self.layout.input[t.index()]])?;
            let mut h = self.activate(tape, xw)?;
            let n = g.node_count(t);
            let mine: Vec<&InputOverlay<S>> = overlays.iter().filter(|o| o.ty == t && !o.rows.is_empty()).collect();
            if !mine.is_empty() {
                let mut keep = Tensor::filled(&[n, 1], S::one());
                let mut repl = Tensor::zeros(&[n, d]);
                for o in mine {
                    if o.values.rank() != 2 || o.values.rows() != o.rows.len() || o.values.cols() != d {
                        return Err(EncoderError::Config("overlay values must be rows × hidden".into()));
                    }
                    for (k, &r) in o.rows.iter().enumerate() {
                        if r >= n {
                            return Err(EncoderError::Config(format!("overlay row {r} out of range")));
                        }
                        keep.set(r, 0, S::zero());
                        repl.row_mut(r).copy_from_slice(o.values.row(k));
                    }
                }
                let keep = tape.constant(keep)?;
                let repl = tape.constant(repl)?;
                let kept = tape.mul(h, keep)?;
                h = tape.add(kept, repl)?;
            }
            out.push(h);
        }
        Ok(out)
    }

    /// Full pass: input projection, `layers` attention rounds, classifier.
    pub fn forward(
        &self,
        tape: &mut Tape<S>,
        vars: &[Var],
        g: &HeteroGraph<S>,
        overlays: &[InputOverlay<S>],
    ) -> Result<Forward, EncoderError> {
        if vars.len() != self.params.len() {
            return Err(EncoderError::Param(format!("expected {} bound parameters", self.params.len())));
        }
        let h0 = self.project_inputs(tape, vars, g, overlays)?;
        let consts = HeadMaps::new(tape, &self.config)?;
        let mut hidden = vec![h0];
        let mut attention = Vec::new();
        for l in 0..self.config.layers {
            let (next, alpha) = self.layer(tape, vars, g, &hidden[l], l, &consts)?;
            hidden.push(next);
            attention = alpha;
        }
        let last = hidden.last().expect("layer 0")[self.target.index()];
        let logits = tape.matmul(last, vars[self.layout.cls_w])?;
        let logits = tape.add(logits, vars[self.layout.cls_b])?;
        let z = tape.row_softmax(logits)?;
        Ok(Forward { z, hidden, attention })
    }

    fn layer(
        &self,
        tape: &mut Tape<S>,
        vars: &[Var],
        g: &HeteroGraph<S>,
        h: &[Var],
        l: usize,
        consts: &HeadMaps,
    ) -> Result<(Vec<Var>, Vec<AlphaBlock>), EncoderError> {
        let schema = g.schema();
        let (d, heads, dh) = (self.config.hidden, self.config.heads, self.config.head_dim());
        let nt = schema.node_types().len();
        let mut q: Vec<Option<Var>> = vec![None; nt];
        let mut k: Vec<Option<Var>> = vec![None; nt];
        let mut m: Vec<Option<Var>> = vec![None; nt];
        let scale = lit::<S>(1.0 / (d as f64).sqrt());
        let mut next = h.to_vec();
        let mut blocks = Vec::new();

        for t in schema.node_type_ids() {
            let rels: Vec<EdgeTypeId> = schema
                .relations_into(t)
                .into_iter()
                .filter(|&r| g.incoming(r).nnz() > 0)
                .collect();
            if rels.is_empty() {
                continue;
            }
            let n_t = g.node_count(t);
            let qt = match q[t.index()] {
                Some(v) => v,
                None => *q[t.index()].insert(tape.matmul(h[t.index()], vars[self.layout.q[l][t.index()]])?),
            };
            let (mut scores, mut msgs, mut spans) = (Vec::new(), Vec::new(), Vec::new());
            let (mut src_all, mut dst_all) = (Vec::new(), Vec::new());
            for &r in &rels {
                let s = schema.relation(r).source;
                let si = s.index();
                let ks = match k[si] {
                    Some(v) => v,
                    None => *k[si].insert(tape.matmul(h[si], vars[self.layout.k[l][si]])?),
                };
                let ms = match m[si] {
                    Some(v) => v,
                    None => *m[si].insert(tape.matmul(h[si], vars[self.layout.m[l][si]])?),
                };
                let inc = g.incoming(r);
                let (mut src, mut dst) = (Vec::with_capacity(inc.nnz()), Vec::with_capacity(inc.nnz()));
                for (tt, ss) in inc.pairs() {
                    src.push(ss);
                    dst.push(tt);
                }
                let start = src_all.len();
                src_all.extend_from_slice(&src);
                dst_all.extend_from_slice(&dst);
                spans.push((r, start, src_all.len()));
                let (src, dst): (Arc<[usize]>, Arc<[usize]>) = (src.into(), dst.into());

                let n_s = g.node_count(s);
                let per_head = tape.reshape(ks, vec![n_s * heads, dh])?;
                let kw = tape.matmul(per_head, vars[self.layout.att[l][r.index()]])?;
                let kw = tape.reshape(kw, vec![n_s, d])?;
                let a = tape.gather_rows(kw, src.clone())?;
                let b = tape.gather_rows(qt, dst)?;
                let prod = tape.mul(a, b)?;
                let score = tape.matmul(prod, consts.sum)?;
                let score = tape.mul(score, vars[self.layout.gate[l][r.index()]])?;
                scores.push(tape.mul_scalar(score, scale)?);
                msgs.push(tape.gather_rows(ms, src)?);
            }
            let dst: Arc<[usize]> = dst_all.into();
            let score = if scores.len() == 1 { scores[0] } else { tape.concat_rows(&scores)? };
            let msg = if msgs.len() == 1 { msgs[0] } else { tape.concat_rows(&msgs)? };
            let alpha = tape.segment_softmax(score, dst.clone(), n_t)?;
            let wide = tape.matmul(alpha, consts.expand)?;
            let weighted = tape.mul(wide, msg)?;
            let agg = tape.scatter_add_rows(weighted, dst.clone(), n_t)?;
            let mut upd = self.activate(tape, agg)?;
            if self.config.activation == Activation::Sigmoid {
                // σ(0) ≠ 0: nodes without incoming edges must keep their state.
                let mut mask = Tensor::zeros(&[n_t, 1]);
                for &j in dst.iter() {
                    mask.set(j, 0, S::one());
                }
                let mask = tape.constant(mask)?;
                upd = tape.mul(upd, mask)?;
            }
            next[t.index()] = tape.add(h[t.index()], upd)?;
            blocks.push(AlphaBlock {
                target: t,
                alpha,
                scores: score,
                spans,
                src: src_all.into(),
                dst,
            });
        }
        Ok((next, blocks))
    }
}

/// Constant 0/1 matrices mapping between per-unit and per-head columns.
struct HeadMaps {
    /// `hidden × heads`: sums each head's units.
    sum: Var,
    /// `heads × hidden`: repeats a head value across its units.
    expand: Var,
}

impl HeadMaps {
    fn new<S: Scalar>(tape: &mut Tape<S>, config: &EncoderConfig) -> Result<Self, EncoderError> {
        let (d, heads, dh) = (config.hidden, config.heads, config.head_dim());
        let mut sum = Tensor::zeros(&[d, heads]);
        for j in 0..d {
            sum.set(j, j / dh, S::one());
        }
        let expand = sum.transpose();
        Ok(Self {
            sum: tape.constant(sum)?,
            expand: tape.constant(expand)?,
        })
    }
}
