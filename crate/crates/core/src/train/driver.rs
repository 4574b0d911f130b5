use std::io::{self, Write};
use std::sync::Arc;
use std::time::Instant;

use super::loss::{consistency_loss, labeled_loss, mean_prediction, sharpen, total_loss};
use super::{TrainConfig, TrainError, ViewKind};
use crate::attention::{EncodedGraph, Encoder, EncoderError, InputOverlay};
use crate::augment::{apply_feature_exchange, plan_edge_adding, plan_edge_removing, plan_feature_exchange};
use crate::autodiff::{AdamW, ParamSet, Tape, Tensor, TensorError, Var};
use crate::graph::{HeteroGraph, LabelTable, Skeleton, SplitSpec};
use crate::metrics::ConfusionTally;
use crate::scalar::Scalar;

pub const LOG_HEADER: &str = "epoch\tloss_l\tloss_u\ttotal\tval_loss\tval_micro_f1\twall_ms";

/// One line of the metrics log. Losses are those of the epoch's update;
/// validation figures are for the parameters before that update.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss_l: f64,
    pub loss_u: f64,
    pub total: f64,
    pub val_loss: f64,
    pub val_micro_f1: f64,
    pub wall_ms: u128,
}

impl EpochRecord {
    pub fn to_tsv(&self) -> String {
        format!(
            "{}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{:.17e}\t{}",
            self.epoch, self.loss_l, self.loss_u, self.total, self.val_loss, self.val_micro_f1, self.wall_ms
        )
    }
}

pub fn write_log_tsv<W: Write>(mut w: W, log: &[EpochRecord]) -> io::Result<()> {
    writeln!(w, "{LOG_HEADER}")?;
    for r in log {
        writeln!(w, "{}", r.to_tsv())?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TrainOutcome<S> {
    /// Encoder restored to the epoch with the lowest validation loss.
    pub encoder: Encoder<S>,
    pub log: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// (cross-entropy, Micro-F1, Macro-F1) of the predictions on `nodes`.
pub fn evaluate_split<S: Scalar>(encoded: &EncodedGraph<S>, labels: &LabelTable, nodes: &[usize]) -> (f64, f64, f64) {
    if nodes.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let pred_all = encoded.predictions();
    let mut loss = 0.0;
    let (mut pred, mut truth) = (Vec::new(), Vec::new());
    for &i in nodes {
        let y = labels.get(i).expect("evaluated nodes are labeled");
        loss -= encoded.z.get(i, y).to_f64_lossy().max(1e-12).ln();
        pred.push(pred_all[i]);
        truth.push(y);
    }
    let tally = ConfusionTally::new(&pred, &truth, labels.num_classes).expect("non-empty");
    (loss / nodes.len() as f64, tally.micro_f1(), tally.macro_f1())
}

fn is_non_finite(e: &TrainError) -> bool {
    matches!(
        e,
        TrainError::Tensor(TensorError::NonFinite { .. }) | TrainError::Encoder(EncoderError::Tensor(TensorError::NonFinite { .. }))
    )
}

struct StepLosses {
    loss_l: f64,
    loss_u: f64,
    total: f64,
}

/// Shared epoch loop: validation on the clean graph, one update from
/// `step`, early stopping on validation loss.
fn run<S, F>(
    g: &HeteroGraph<S>,
    labels: &LabelTable,
    split: &SplitSpec,
    cfg: &TrainConfig,
    mut step: F,
) -> Result<TrainOutcome<S>, TrainError>
where
    S: Scalar,
    F: FnMut(&Encoder<S>, &EncodedGraph<S>, &mut Tape<S>, &[Var]) -> Result<(Var, Option<Var>, Var), TrainError>,
{
    if split.train.is_empty() || split.val.is_empty() {
        return Err(TrainError::Config("train and validation splits must be non-empty".into()));
    }
    if cfg.patience > cfg.epochs {
        return Err(TrainError::Config("patience exceeds epochs".into()));
    }
    let mut enc = Encoder::new(cfg.encoder.clone(), g.schema(), labels.target, cfg.seed)?;
    let mut opt = AdamW::new(cfg.optimizer, enc.params().tensors());
    let mut best: Option<(f64, ParamSet<S>, usize)> = None;
    let mut wait = 0usize;
    let mut log = Vec::new();
    let mut stopped_early = false;

    let diverged = |epoch: usize, reason: String, best: &Option<(f64, ParamSet<S>, usize)>, current: &Encoder<S>| {
        let params = best.as_ref().map(|b| b.1.cast::<f64>()).unwrap_or_else(|| current.params().cast());
        TrainError::Diverged {
            epoch,
            reason,
            last_good: Box::new(params),
        }
    };

    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let clean = match enc.encode(g, &[]) {
            Ok(c) => c,
            Err(e) => {
                let e = TrainError::from(e);
                return Err(if is_non_finite(&e) { diverged(epoch, e.to_string(), &best, &enc) } else { e });
            }
        };
        let (val_loss, val_f1, _) = evaluate_split(&clean, labels, &split.val);
        if !val_loss.is_finite() {
            return Err(diverged(epoch, "validation loss is not finite".into(), &best, &enc));
        }
        let improved = best.as_ref().is_none_or(|b| val_loss < b.0);
        if improved {
            best = Some((val_loss, enc.params().clone(), epoch));
            wait = 0;
        } else {
            wait += 1;
        }

        let mut tape = Tape::new();
        let losses = (|| -> Result<(StepLosses, Vec<Tensor<S>>), TrainError> {
            let vars = enc.bind(&mut tape, true)?;
            let (l, u, total) = step(&enc, &clean, &mut tape, &vars)?;
            let losses = StepLosses {
                loss_l: tape.value(l).item().expect("scalar").to_f64_lossy(),
                loss_u: u.map_or(0.0, |u| tape.value(u).item().expect("scalar").to_f64_lossy()),
                total: tape.value(total).item().expect("scalar").to_f64_lossy(),
            };
            let grads = tape.backward(total)?;
            let grads = vars
                .iter()
                .zip(enc.params().tensors())
                .map(|(&v, p)| grads.get(v).cloned().unwrap_or_else(|| Tensor::zeros(p.shape())))
                .collect();
            Ok((losses, grads))
        })();
        let (losses, grads) = match losses {
            Ok(x) => x,
            Err(e) if is_non_finite(&e) => return Err(diverged(epoch, e.to_string(), &best, &enc)),
            Err(e) => return Err(e),
        };
        opt.step(enc.params_mut().tensors_mut(), &grads)?;
        if enc.params().tensors().iter().any(|t| !t.is_finite()) {
            return Err(diverged(epoch, "parameters became non-finite".into(), &best, &enc));
        }
        log.push(EpochRecord {
            epoch,
            loss_l: losses.loss_l,
            loss_u: losses.loss_u,
            total: losses.total,
            val_loss,
            val_micro_f1: val_f1,
            wall_ms: start.elapsed().as_millis(),
        });
        if !improved && wait >= cfg.patience {
            stopped_early = true;
            break;
        }
    }
    let (_, params, best_epoch) = best.expect("at least one epoch");
    *enc.params_mut() = params;
    Ok(TrainOutcome {
        encoder: enc,
        log,
        best_epoch,
        stopped_early,
    })
}

/// Graph and layer-0 overlays of one augmented view.
fn build_view<S: Scalar>(
    kind: ViewKind,
    g: &HeteroGraph<S>,
    sk: Option<&Skeleton>,
    clean: &EncodedGraph<S>,
    targets: &[usize],
    cfg: &TrainConfig,
    target_type: crate::graph::NodeTypeId,
) -> Result<(Option<HeteroGraph<S>>, Vec<InputOverlay<S>>), TrainError> {
    Ok(match kind {
        ViewKind::Identity => (None, Vec::new()),
        ViewKind::FeatureExchange => {
            let (plans, _) = plan_feature_exchange(g, targets, cfg.k_ratio, clean, target_type)?;
            (None, apply_feature_exchange(&plans))
        }
        ViewKind::EdgeAdd => {
            let sk = sk.expect("skeleton built for edge views");
            let (ov, _) = plan_edge_adding(g, sk, target_type, targets, cfg.k_ratio, &clean.attention)?;
            (Some(ov.apply(g)?), Vec::new())
        }
        ViewKind::EdgeRemove => {
            let sk = sk.expect("skeleton built for edge views");
            let (ov, _) = plan_edge_removing(g, sk, target_type, targets, cfg.k_ratio, &clean.attention)?;
            (Some(ov.apply(g)?), Vec::new())
        }
    })
}

/// Trains with cross-entropy averaged over the configured views plus, when
/// `lambda_u > 0`, the consistency loss on every target node outside the
/// training split. Views are rebuilt each epoch from the current attention.
pub fn train<S: Scalar>(
    g: &HeteroGraph<S>,
    labels: &LabelTable,
    split: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    if cfg.views.is_empty() {
        return Err(TrainError::Config("no views configured".into()));
    }
    if cfg.lambda_u > 0.0 && cfg.views.len() < 2 {
        return Err(TrainError::Config("consistency training needs at least two views".into()));
    }
    if cfg.encoder.layers == 0 && cfg.views.iter().any(|&v| v != ViewKind::Identity) {
        return Err(TrainError::Config("attention-driven views need at least one encoder layer".into()));
    }
    let target = labels.target;
    let train_rows: Arc<[usize]> = split.train.clone().into();
    let train_labels: Vec<usize> = split.train.iter().map(|&i| labels.get(i).expect("labeled")).collect();
    let unsup = split.unsupervised(g.node_count(target));
    let unsup_rows: Arc<[usize]> = unsup.clone().into();
    let sk = cfg
        .views
        .iter()
        .any(|v| matches!(v, ViewKind::EdgeAdd | ViewKind::EdgeRemove))
        .then(|| Skeleton::from_graph(g));

    run(g, labels, split, cfg, |enc, clean, tape, vars| {
        let mut zs = Vec::with_capacity(cfg.views.len());
        for &kind in &cfg.views {
            let (view_graph, overlays) = build_view(kind, g, sk.as_ref(), clean, &unsup, cfg, target)?;
            let fwd = enc.forward(tape, vars, view_graph.as_ref().unwrap_or(g), &overlays)?;
            zs.push(fwd.z);
        }
        let loss_l = labeled_loss(tape, &zs, &train_rows, &train_labels)?;
        if cfg.lambda_u > 0.0 && !unsup.is_empty() {
            let values: Vec<Tensor<S>> = zs.iter().map(|&z| tape.value(z).select_rows(&unsup)).collect();
            let target = sharpen(&mean_prediction(&values)?, cfg.temperature)?;
            let loss_u = consistency_loss(tape, &zs, &unsup_rows, &target)?;
            let total = total_loss(tape, loss_l, loss_u, cfg.lambda_u)?;
            Ok((loss_l, Some(loss_u), total))
        } else {
            Ok((loss_l, None, loss_l))
        }
    })
}

/// Plain supervised training on the clean graph.
pub fn train_supervised<S: Scalar>(
    g: &HeteroGraph<S>,
    labels: &LabelTable,
    split: &SplitSpec,
    cfg: &TrainConfig,
) -> Result<TrainOutcome<S>, TrainError> {
    let train_rows: Arc<[usize]> = split.train.clone().into();
    let train_labels: Vec<usize> = split.train.iter().map(|&i| labels.get(i).expect("labeled")).collect();
    run(g, labels, split, cfg, |enc, _, tape, vars| {
        let fwd = enc.forward(tape, vars, g, &[])?;
        let loss = labeled_loss(tape, &[fwd.z], &train_rows, &train_labels)?;
        Ok((loss, None, loss))
    })
}
