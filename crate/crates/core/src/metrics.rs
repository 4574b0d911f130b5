//! Classification and clustering scores: Macro/Micro-F1, NMI, ARI, and
//! k-means over embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricError {
    #[error("empty input")]
    Empty,
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("k = {k} invalid for {points} points")]
    K { k: usize, points: usize },
}

/// Per-class true positives, false positives and false negatives.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionTally {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

impl ConfusionTally {
    pub fn new(pred: &[usize], truth: &[usize], classes: usize) -> Result<Self, MetricError> {
        if pred.len() != truth.len() {
            return Err(MetricError::Length(pred.len(), truth.len()));
        }
        if pred.is_empty() {
            return Err(MetricError::Empty);
        }
        let mut t = Self {
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
        };
        for (&p, &y) in pred.iter().zip(truth) {
            for label in [p, y] {
                if label >= classes {
                    return Err(MetricError::Label { label, classes });
                }
            }
            if p == y {
                t.tp[p] += 1;
            } else {
                t.fp[p] += 1;
                t.fn_[y] += 1;
            }
        }
        Ok(t)
    }

    pub fn classes(&self) -> usize {
        self.tp.len()
    }

    /// Per-class F1, 0 when precision and recall are both 0.
    pub fn class_f1(&self, c: usize) -> f64 {
        f1(
            ratio(self.tp[c], self.tp[c] + self.fp[c]),
            ratio(self.tp[c], self.tp[c] + self.fn_[c]),
        )
    }

    /// Mean per-class F1 over classes that occur in the labels or predictions.
    pub fn macro_f1(&self) -> f64 {
        let present: Vec<usize> = (0..self.classes())
            .filter(|&c| self.tp[c] + self.fp[c] + self.fn_[c] > 0)
            .collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|&c| self.class_f1(c)).sum::<f64>() / present.len() as f64
    }

    /// F1 of pooled counts: P = ΣTP/(ΣTP+ΣFP), R = ΣTP/(ΣTP+ΣFN).
    pub fn micro_f1(&self) -> f64 {
        let tp: usize = self.tp.iter().sum();
        let fp: usize = self.fp.iter().sum();
        let fn_: usize = self.fn_.iter().sum();
        f1(ratio(tp, tp + fp), ratio(tp, tp + fn_))
    }
}

pub fn macro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64, MetricError> {
    Ok(ConfusionTally::new(pred, truth, classes)?.macro_f1())
}

pub fn micro_f1(pred: &[usize], truth: &[usize], classes: usize) -> Result<f64, MetricError> {
    Ok(ConfusionTally::new(pred, truth, classes)?.micro_f1())
}

/// Contingency counts with labels compacted to 0..k.
fn contingency(a: &[usize], b: &[usize]) -> Result<(Vec<Vec<u64>>, Vec<u64>, Vec<u64>), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::Length(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    let compact = |x: &[usize]| {
        let mut ids: Vec<usize> = x.to_vec();
        ids.sort_unstable();
        ids.dedup();
        let out: Vec<usize> = x.iter().map(|v| ids.binary_search(v).unwrap()).collect();
        (out, ids.len())
    };
    let ((a, ka), (b, kb)) = (compact(a), compact(b));
    let mut table = vec![vec![0u64; kb]; ka];
    let (mut ra, mut rb) = (vec![0u64; ka], vec![0u64; kb]);
    for (&i, &j) in a.iter().zip(&b) {
        table[i][j] += 1;
        ra[i] += 1;
        rb[j] += 1;
    }
    Ok((table, ra, rb))
}

fn entropy(counts: &[u64], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalized mutual information with arithmetic-mean normalization.
/// Two single-cluster partitions score 1.
pub fn nmi(a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
    let (table, ra, rb) = contingency(a, b)?;
    let n = a.len() as f64;
    let (ha, hb) = (entropy(&ra, n), entropy(&rb, n));
    if ha == 0.0 && hb == 0.0 {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / n * (c * n / (ra[i] as f64 * rb[j] as f64)).ln();
            }
        }
    }
    Ok((mi / ((ha + hb) / 2.0)).clamp(0.0, 1.0))
}

fn pairs(c: u64) -> u64 {
    c * c.saturating_sub(1) / 2
}

/// Adjusted Rand index. Identical trivial partitions score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
    let (table, ra, rb) = contingency(a, b)?;
    let index: u64 = table.iter().flatten().map(|&c| pairs(c)).sum();
    let sa: u64 = ra.iter().map(|&c| pairs(c)).sum();
    let sb: u64 = rb.iter().map(|&c| pairs(c)).sum();
    let total = pairs(a.len() as u64) as f64;
    let expected = if total == 0.0 { 0.0 } else { sa as f64 * sb as f64 / total };
    let max = (sa + sb) as f64 / 2.0;
    if max == expected {
        return Ok(1.0);
    }
    Ok((index as f64 - expected) / (max - expected))
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans {
    pub assignment: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.iter().enumerate() {
        let d = sq_dist(p, mu);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lloyd(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng, max_iter: usize) -> KMeans {
    // k-means++ seeding.
    let mut centroids = vec![points[rng.random_range(0..points.len())].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut r = rng.random::<f64>() * total;
            let mut idx = points.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if r < w {
                    idx = i;
                    break;
                }
                r -= w;
            }
            idx
        };
        centroids.push(points[pick].clone());
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p, centroids.last().unwrap()));
        }
    }
    let dim = points[0].len();
    let mut assignment = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (i, p) in points.iter().enumerate() {
            let (c, _) = nearest(p, &centroids);
            if assignment[i] != c {
                assignment[i] = c;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &c) in points.iter().zip(&assignment) {
            counts[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
    }
    let inertia = points
        .iter()
        .zip(&assignment)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum();
    KMeans {
        assignment,
        centroids,
        inertia,
    }
}

/// Best of `restarts` k-means++ / Lloyd runs by inertia. Deterministic in `seed`.
pub fn kmeans(points: &[Vec<f64>], k: usize, restarts: usize, seed: u64) -> Result<KMeans, MetricError> {
    if points.is_empty() {
        return Err(MetricError::Empty);
    }
    if k < 2 || k > points.len() {
        return Err(MetricError::K { k, points: points.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<KMeans> = None;
    for _ in 0..restarts.max(1) {
        let run = lloyd(points, k, &mut rng, 300);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_hand_example() {
        // Class 1: TP 2, FP 1, FN 1. Class 0: TP 1, FP 1, FN 1.
        let truth = [1, 1, 1, 0, 0];
        let pred = [1, 1, 0, 0, 1];
        let t = ConfusionTally::new(&pred, &truth, 2).unwrap();
        assert_eq!((t.tp.clone(), t.fp.clone(), t.fn_.clone()), (vec![1, 2], vec![1, 1], vec![1, 1]));
        assert!((t.macro_f1() - 7.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn perfect_and_trivial_cases() {
        let y = [0, 1, 2, 1];
        assert_eq!(macro_f1(&y, &y, 3).unwrap(), 1.0);
        assert_eq!(micro_f1(&y, &y, 3).unwrap(), 1.0);
        assert_eq!(nmi(&y, &y).unwrap(), 1.0);
        assert_eq!(ari(&y, &y).unwrap(), 1.0);
        assert_eq!(ari(&[0, 0, 0, 0], &y).unwrap(), 0.0);
        assert_eq!(macro_f1(&[], &[], 2), Err(MetricError::Empty));
    }

    #[test]
    fn identical_points_collapse() {
        let pts = vec![vec![1.0, 2.0]; 5];
        let km = kmeans(&pts, 2, 3, 0).unwrap();
        assert_eq!(km.inertia, 0.0);
        assert!(km.assignment.iter().all(|&c| c == km.assignment[0]));
        assert!(kmeans(&pts, 6, 1, 0).is_err());
    }
}
