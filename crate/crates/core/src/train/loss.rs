use std::sync::Arc;

use super::TrainError;
use crate::autodiff::{Tape, Tensor, TensorError, Var};
use crate::scalar::{lit, Scalar};

const LOG_FLOOR: f64 = 1e-12;

/// Cross-entropy of the rows `rows` of each view's predictions against
/// `labels`, averaged over nodes and views. `log` is floored at 1e-12.
pub fn labeled_loss<S: Scalar>(
    tape: &mut Tape<S>,
    zs: &[Var],
    rows: &Arc<[usize]>,
    labels: &[usize],
) -> Result<Var, TrainError> {
    if rows.is_empty() {
        return Err(TrainError::Config("labeled set is empty".into()));
    }
    if zs.is_empty() {
        return Err(TrainError::Config("no views".into()));
    }
    let classes = tape.shape(zs[0])[1];
    let mut onehot = Tensor::zeros(&[rows.len(), classes]);
    for (i, &c) in labels.iter().enumerate() {
        onehot.set(i, c, S::one());
    }
    let y = tape.constant(onehot)?;
    let mut acc: Option<Var> = None;
    for &z in zs {
        let picked = tape.gather_rows(z, rows.clone())?;
        let floored = tape.clamp_min(picked, lit(LOG_FLOOR))?;
        let logs = tape.log(floored)?;
        let masked = tape.mul(logs, y)?;
        let s = tape.sum(masked)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    let n = (rows.len() * zs.len()) as f64;
    Ok(tape.mul_scalar(acc.expect("non-empty"), lit(-1.0 / n))?)
}

/// Per-node mean of several prediction matrices.
pub fn mean_prediction<S: Scalar>(views: &[Tensor<S>]) -> Result<Tensor<S>, TensorError> {
    let first = views.first().ok_or(TensorError::EmptyReduction)?;
    let mut acc = first.clone();
    for v in &views[1..] {
        if v.shape() != acc.shape() {
            return Err(TensorError::ShapeMismatch {
                op: "mean_prediction",
                left: acc.shape().to_vec(),
                right: v.shape().to_vec(),
            });
        }
        for (a, &b) in acc.data_mut().iter_mut().zip(v.data()) {
            *a = *a + b;
        }
    }
    let inv = lit::<S>(1.0 / views.len() as f64);
    Ok(acc.map(|x| x * inv))
}

/// Raises each row to the power `1/t` and renormalizes, computed in the log
/// domain so small temperatures do not underflow.
pub fn sharpen<S: Scalar>(z: &Tensor<S>, t: f64) -> Result<Tensor<S>, TrainError> {
    if !(t > 0.0 && t <= 1.0) {
        return Err(TrainError::Config(format!("temperature {t} outside (0, 1]")));
    }
    let mut out = z.clone();
    let inv_t = 1.0 / t;
    for r in 0..z.rows() {
        let logs: Vec<f64> = z
            .row(r)
            .iter()
            .map(|&p| {
                let p = p.to_f64_lossy();
                if p > 0.0 {
                    p.ln() * inv_t
                } else {
                    f64::NEG_INFINITY
                }
            })
            .collect();
        let mx = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return Err(TrainError::Config(format!("row {r} is not a probability vector")));
        }
        let w: Vec<f64> = logs.iter().map(|&l| (l - mx).exp()).collect();
        let den: f64 = w.iter().sum();
        for (o, wi) in out.row_mut(r).iter_mut().zip(w) {
            *o = lit(wi / den);
        }
    }
    Ok(out)
}

/// Mean over views and over `rows` of ‖target − z‖², with `target` held
/// constant.
pub fn consistency_loss<S: Scalar>(
    tape: &mut Tape<S>,
    zs: &[Var],
    rows: &Arc<[usize]>,
    target: &Tensor<S>,
) -> Result<Var, TrainError> {
    if zs.len() < 2 {
        return Err(TrainError::Config("consistency loss needs at least two views".into()));
    }
    if rows.is_empty() {
        return Err(TrainError::Config("unlabeled set is empty".into()));
    }
    let tgt = tape.constant(target.clone())?;
    let mut acc: Option<Var> = None;
    for &z in zs {
        let picked = tape.gather_rows(z, rows.clone())?;
        let diff = tape.sub(tgt, picked)?;
        let sq = tape.mul(diff, diff)?;
        let s = tape.sum(sq)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, s)?,
            None => s,
        });
    }
    let n = (rows.len() * zs.len()) as f64;
    Ok(tape.mul_scalar(acc.expect("non-empty"), lit(1.0 / n))?)
}

/// `loss_l + λ · loss_u`.
pub fn total_loss<S: Scalar>(tape: &mut Tape<S>, loss_l: Var, loss_u: Var, lambda: f64) -> Result<Var, TensorError> {
    let weighted = tape.mul_scalar(loss_u, lit(lambda))?;
    tape.add(loss_l, weighted)
}
