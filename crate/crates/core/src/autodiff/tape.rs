use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use super::kernels;
use super::tensor::Tensor;
use super::TensorError;
use crate::scalar::Scalar;

static NEXT_TAPE: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    idx: usize,
}

impl Var {
    pub fn tape_id(&self) -> u64 {
        self.tape
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryKind {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryKind {
    Neg,
    Exp,
    Log,
    Tanh,
    Sigmoid,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    Sum,
    Mean,
}

#[derive(Clone, Copy, Debug)]
enum ScalarKind<S> {
    Add(S),
    Mul(S),
    Pow(S),
    ClampMin(S),
}

enum Op<S> {
    Leaf,
    MatMul(usize, usize),
    Binary(BinaryKind, usize, usize),
    Unary(UnaryKind, usize),
    WithScalar(ScalarKind<S>, usize),
    RowSoftmax(usize),
    Reduce(ReduceKind, usize, Option<usize>),
    Reshape(usize),
    GatherRows(usize, Arc<[usize]>),
    ScatterAddRows(usize, Arc<[usize]>),
    SegmentSoftmax(usize, Arc<[usize]>, usize),
    ConcatRows(Vec<usize>),
    SliceRows(usize, usize),
}

struct Node<S> {
    value: Tensor<S>,
    requires_grad: bool,
    op: Op<S>,
}

/// Gradients produced by one backward pass, indexed by the vars of the tape
/// that produced them.
#[derive(Debug)]
pub struct Gradients<S> {
    tape: u64,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get(v.idx).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        if v.tape != self.tape {
            return None;
        }
        self.grads.get_mut(v.idx).and_then(Option::take)
    }
}

/// Linear record of operations for reverse-mode differentiation.
///
/// Nodes are appended in execution order, so the record is topologically
/// sorted by construction. After [`Tape::backward`] the tape is sealed and
/// must be [`reset`](Tape::reset) before recording again.
pub struct Tape<S> {
    id: u64,
    nodes: Vec<Node<S>>,
    sealed: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// 2-D view of a shape used by broadcasting ops.
fn as_2d(shape: &[usize]) -> Result<(usize, usize), ()> {
    match shape.len() {
        0 => Ok((1, 1)),
        1 => Ok((1, shape[0])),
        2 => Ok((shape[0], shape[1])),
        _ => Err(()),
    }
}

fn broadcast_shape(a: &[usize], b: &[usize]) -> Option<Vec<usize>> {
    if a == b {
        return Some(a.to_vec());
    }
    let (ar, ac) = as_2d(a).ok()?;
    let (br, bc) = as_2d(b).ok()?;
    let r = if ar == br || br == 1 {
        ar
    } else if ar == 1 {
        br
    } else {
        return None;
    };
    let c = if ac == bc || bc == 1 {
        ac
    } else if ac == 1 {
        bc
    } else {
        return None;
    };
    Some(match a.len().max(b.len()) {
        0 => vec![],
        1 => vec![c],
        _ => vec![r, c],
    })
}

/// Sums `grad` (laid out as `rows×cols`) down to an input of `in_shape`.
fn unbroadcast<S: Scalar>(grad: &[S], rows: usize, cols: usize, in_shape: &[usize]) -> Vec<S> {
    let (ir, ic) = as_2d(in_shape).expect("validated at record time");
    if ir == rows && ic == cols {
        return grad.to_vec();
    }
    let mut out = vec![S::zero(); ir * ic];
    for r in 0..rows {
        let rr = if ir == 1 { 0 } else { r };
        for c in 0..cols {
            let cc = if ic == 1 { 0 } else { c };
            out[rr * ic + cc] = out[rr * ic + cc] + grad[r * cols + c];
        }
    }
    out
}

fn add_into<S: Scalar>(slot: &mut Option<Vec<S>>, contrib: Vec<S>) {
    match slot {
        Some(acc) => {
            for (a, c) in acc.iter_mut().zip(contrib) {
                *a = *a + c;
            }
        }
        None => *slot = Some(contrib),
    }
}

/// Splits a shape around `axis` into (outer, axis length, inner).
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            sealed: false,
        }
    }

    /// Drops all records; vars from before the reset become invalid.
    pub fn reset(&mut self) {
        self.id = NEXT_TAPE.fetch_add(1, Ordering::Relaxed);
        self.nodes.clear();
        self.sealed = false;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize, TensorError> {
        if v.tape != self.id || v.idx >= self.nodes.len() {
            return Err(TensorError::ForeignVar);
        }
        Ok(v.idx)
    }

    fn push(&mut self, op_name: &'static str, value: Tensor<S>, op: Op<S>) -> Result<Var, TensorError> {
        if self.sealed {
            return Err(TensorError::Sealed);
        }
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = match &op {
            Op::Leaf => false,
            Op::MatMul(a, b) | Op::Binary(_, a, b) => {
                self.nodes[*a].requires_grad || self.nodes[*b].requires_grad
            }
            Op::Unary(_, x)
            | Op::WithScalar(_, x)
            | Op::RowSoftmax(x)
            | Op::Reduce(_, x, _)
            | Op::Reshape(x)
            | Op::GatherRows(x, _)
            | Op::ScatterAddRows(x, _)
            | Op::SegmentSoftmax(x, _, _)
            | Op::SliceRows(x, _) => self.nodes[*x].requires_grad,
            Op::ConcatRows(xs) => xs.iter().any(|&x| self.nodes[x].requires_grad),
        };
        let idx = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            op,
        });
        Ok(Var { tape: self.id, idx })
    }

    /// Records a leaf. `requires_grad` leaves receive gradients in backward.
    pub fn leaf(&mut self, value: Tensor<S>, requires_grad: bool) -> Result<Var, TensorError> {
        let v = self.push("leaf", value, Op::Leaf)?;
        self.nodes[v.idx].requires_grad = requires_grad;
        Ok(v)
    }

    pub fn param(&mut self, value: Tensor<S>) -> Result<Var, TensorError> {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<S>) -> Result<Var, TensorError> {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[self.check(v).expect("var from another tape")].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.value(v).shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.idx].requires_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        if av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            });
        }
        let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
        let out = kernels::matmul(av.data(), bv.data(), m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        self.push("matmul", t, Op::MatMul(ai, bi))
    }

    pub fn binary(&mut self, kind: BinaryKind, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ai, bi) = (self.check(a)?, self.check(b)?);
        let (av, bv) = (&self.nodes[ai].value, &self.nodes[bi].value);
        let name = match kind {
            BinaryKind::Add => "add",
            BinaryKind::Sub => "sub",
            BinaryKind::Mul => "mul",
            BinaryKind::Div => "div",
        };
        let out_shape = broadcast_shape(av.shape(), bv.shape()).ok_or_else(|| {
            TensorError::ShapeMismatch {
                op: name,
                left: av.shape().to_vec(),
                right: bv.shape().to_vec(),
            }
        })?;
        let f = |x: S, y: S| match kind {
            BinaryKind::Add => x + y,
            BinaryKind::Sub => x - y,
            BinaryKind::Mul => x * y,
            BinaryKind::Div => x / y,
        };
        let data: Vec<S> = if av.shape() == bv.shape() {
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect()
        } else {
            let (rows, cols) = as_2d(&out_shape).expect("rank <= 2");
            let (ar, ac) = as_2d(av.shape()).expect("rank <= 2");
            let (br, bc) = as_2d(bv.shape()).expect("rank <= 2");
            let mut out = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                let (ra, rb) = (if ar == 1 { 0 } else { r }, if br == 1 { 0 } else { r });
                for c in 0..cols {
                    let x = av.data()[ra * ac + if ac == 1 { 0 } else { c }];
                    let y = bv.data()[rb * bc + if bc == 1 { 0 } else { c }];
                    out.push(f(x, y));
                }
            }
            out
        };
        let t = Tensor::new(out_shape, data)?;
        self.push(name, t, Op::Binary(kind, ai, bi))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Mul, a, b)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.binary(BinaryKind::Div, a, b)
    }

    pub fn unary(&mut self, kind: UnaryKind, x: Var) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        if kind == UnaryKind::Log && xv.data().iter().any(|&v| v <= S::zero()) {
            return Err(TensorError::LogDomain);
        }
        let out = xv.map(|v| match kind {
            UnaryKind::Neg => -v,
            UnaryKind::Exp => v.exp(),
            UnaryKind::Log => v.ln(),
            UnaryKind::Tanh => v.tanh(),
            UnaryKind::Sigmoid => S::one() / (S::one() + (-v).exp()),
            UnaryKind::Relu => v.max(S::zero()),
        });
        let name = match kind {
            UnaryKind::Neg => "neg",
            UnaryKind::Exp => "exp",
            UnaryKind::Log => "log",
            UnaryKind::Tanh => "tanh",
            UnaryKind::Sigmoid => "sigmoid",
            UnaryKind::Relu => "relu",
        };
        self.push(name, out, Op::Unary(kind, xi))
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Exp, x)
    }

    pub fn log(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Log, x)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Tanh, x)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Sigmoid, x)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Relu, x)
    }

    pub fn neg(&mut self, x: Var) -> Result<Var, TensorError> {
        self.unary(UnaryKind::Neg, x)
    }

    fn with_scalar(&mut self, kind: ScalarKind<S>, x: Var) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let (name, out) = {
            let xv = &self.nodes[xi].value;
            match kind {
                ScalarKind::Add(c) => ("add_scalar", xv.map(|v| v + c)),
                ScalarKind::Mul(c) => ("mul_scalar", xv.map(|v| v * c)),
                ScalarKind::Pow(p) => ("pow", xv.map(|v| v.powf(p))),
                ScalarKind::ClampMin(lo) => ("clamp_min", xv.map(|v| v.max(lo))),
            }
        };
        self.push(name, out, Op::WithScalar(kind, xi))
    }

    pub fn add_scalar(&mut self, x: Var, c: S) -> Result<Var, TensorError> {
        self.with_scalar(ScalarKind::Add(c), x)
    }

    pub fn mul_scalar(&mut self, x: Var, c: S) -> Result<Var, TensorError> {
        self.with_scalar(ScalarKind::Mul(c), x)
    }

    pub fn pow(&mut self, x: Var, p: S) -> Result<Var, TensorError> {
        self.with_scalar(ScalarKind::Pow(p), x)
    }

    /// `max(x, floor)`; gradient passes only where `x > floor`.
    pub fn clamp_min(&mut self, x: Var, floor: S) -> Result<Var, TensorError> {
        self.with_scalar(ScalarKind::ClampMin(floor), x)
    }

    pub fn row_softmax(&mut self, x: Var) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        if xv.rank() != 2 {
            return Err(TensorError::Rank {
                op: "row_softmax",
                expected: 2,
                shape: xv.shape().to_vec(),
            });
        }
        let (m, n) = (xv.shape()[0], xv.shape()[1]);
        let out = Tensor::new(vec![m, n], kernels::row_softmax(xv.data(), m, n))?;
        self.push("row_softmax", out, Op::RowSoftmax(xi))
    }

    /// Sum or mean along `axis`, or over everything when `axis` is `None`.
    /// The reduced axis is removed from the shape.
    pub fn reduce(&mut self, kind: ReduceKind, x: Var, axis: Option<usize>) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        let out = match axis {
            None => {
                if xv.numel() == 0 {
                    return Err(TensorError::EmptyReduction);
                }
                let s: S = xv.data().iter().copied().fold(S::zero(), |a, b| a + b);
                let v = match kind {
                    ReduceKind::Sum => s,
                    ReduceKind::Mean => s / S::from_usize(xv.numel()).unwrap(),
                };
                Tensor::scalar(v)
            }
            Some(ax) => {
                if ax >= xv.rank() {
                    return Err(TensorError::InvalidAxis {
                        axis: ax,
                        shape: xv.shape().to_vec(),
                    });
                }
                let (outer, len, inner) = axis_split(xv.shape(), ax);
                if len == 0 {
                    return Err(TensorError::EmptyReduction);
                }
                let mut data = vec![S::zero(); outer * inner];
                for o in 0..outer {
                    for k in 0..len {
                        let base = (o * len + k) * inner;
                        for i in 0..inner {
                            data[o * inner + i] = data[o * inner + i] + xv.data()[base + i];
                        }
                    }
                }
                if kind == ReduceKind::Mean {
                    let d = S::from_usize(len).unwrap();
                    data.iter_mut().for_each(|v| *v = *v / d);
                }
                let mut shape = xv.shape().to_vec();
                shape.remove(ax);
                Tensor::new(shape, data)?
            }
        };
        let name = match kind {
            ReduceKind::Sum => "sum",
            ReduceKind::Mean => "mean",
        };
        self.push(name, out, Op::Reduce(kind, xi, axis))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, TensorError> {
        self.reduce(ReduceKind::Sum, x, None)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, TensorError> {
        self.reduce(ReduceKind::Mean, x, None)
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let out = self.nodes[xi].value.reshaped(shape)?;
        self.push("reshape", out, Op::Reshape(xi))
    }

    /// `out[i] = x[idx[i]]` over rows.
    pub fn gather_rows(&mut self, x: Var, idx: Arc<[usize]>) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        let rows = xv.rows();
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange { index: bad, len: rows });
        }
        let out = xv.select_rows(&idx);
        self.push("gather_rows", out, Op::GatherRows(xi, idx))
    }

    /// `out[idx[i]] += x[i]` into an `n`-row result; sums follow `i` order.
    pub fn scatter_add_rows(&mut self, x: Var, idx: Arc<[usize]>, n: usize) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        if xv.rank() != 2 || xv.rows() != idx.len() {
            return Err(TensorError::ShapeMismatch {
                op: "scatter_add_rows",
                left: xv.shape().to_vec(),
                right: vec![idx.len()],
            });
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange { index: bad, len: n });
        }
        let c = xv.cols();
        let mut out = vec![S::zero(); n * c];
        for (i, &t) in idx.iter().enumerate() {
            for (o, &v) in out[t * c..(t + 1) * c].iter_mut().zip(xv.row(i)) {
                *o = *o + v;
            }
        }
        let t = Tensor::new(vec![n, c], out)?;
        self.push("scatter_add_rows", t, Op::ScatterAddRows(xi, idx))
    }

    /// Softmax over the rows sharing a segment id, independently per column.
    /// `x` is `E×H`; `seg[e] < n` names the segment of row `e`.
    pub fn segment_softmax(&mut self, x: Var, seg: Arc<[usize]>, n: usize) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        if xv.rank() != 2 || xv.rows() != seg.len() {
            return Err(TensorError::ShapeMismatch {
                op: "segment_softmax",
                left: xv.shape().to_vec(),
                right: vec![seg.len()],
            });
        }
        if let Some(&bad) = seg.iter().find(|&&i| i >= n) {
            return Err(TensorError::IndexOutOfRange { index: bad, len: n });
        }
        let h = xv.cols();
        let mut mx = vec![S::neg_infinity(); n * h];
        for (e, &s) in seg.iter().enumerate() {
            for (m, &v) in mx[s * h..(s + 1) * h].iter_mut().zip(xv.row(e)) {
                *m = m.max(v);
            }
        }
        let mut out = vec![S::zero(); seg.len() * h];
        let mut den = vec![S::zero(); n * h];
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..h {
                let v = (xv.data()[e * h + j] - mx[s * h + j]).exp();
                out[e * h + j] = v;
                den[s * h + j] = den[s * h + j] + v;
            }
        }
        for (e, &s) in seg.iter().enumerate() {
            for j in 0..h {
                out[e * h + j] = out[e * h + j] / den[s * h + j];
            }
        }
        let t = Tensor::new(vec![seg.len(), h], out)?;
        self.push("segment_softmax", t, Op::SegmentSoftmax(xi, seg, n))
    }

    pub fn concat_rows(&mut self, xs: &[Var]) -> Result<Var, TensorError> {
        let idx: Vec<usize> = xs.iter().map(|&x| self.check(x)).collect::<Result<_, _>>()?;
        let first = idx.first().ok_or(TensorError::EmptyReduction)?;
        let cols = self.nodes[*first].value.cols();
        let mut rows = 0;
        let mut data = Vec::new();
        for &i in &idx {
            let v = &self.nodes[i].value;
            if v.rank() != 2 || v.cols() != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    left: self.nodes[*first].value.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            rows += v.rows();
            data.extend_from_slice(v.data());
        }
        let t = Tensor::new(vec![rows, cols], data)?;
        self.push("concat_rows", t, Op::ConcatRows(idx))
    }

    /// Rows `start..end` of a matrix.
    pub fn slice_rows(&mut self, x: Var, start: usize, end: usize) -> Result<Var, TensorError> {
        let xi = self.check(x)?;
        let xv = &self.nodes[xi].value;
        if xv.rank() != 2 || start > end || end > xv.rows() {
            return Err(TensorError::IndexOutOfRange {
                index: end,
                len: xv.rows(),
            });
        }
        let c = xv.cols();
        let t = Tensor::new(vec![end - start, c], xv.data()[start * c..end * c].to_vec())?;
        self.push("slice_rows", t, Op::SliceRows(xi, start))
    }

    /// Reverse pass from a scalar loss. Seals the tape.
    pub fn backward(&mut self, loss: Var) -> Result<Gradients<S>, TensorError> {
        let li = self.check(loss)?;
        if self.nodes[li].value.numel() != 1 {
            return Err(TensorError::NotScalar {
                shape: self.nodes[li].value.shape().to_vec(),
            });
        }
        if !self.nodes[li].requires_grad {
            return Err(TensorError::Detached);
        }
        self.sealed = true;
        let mut grads: Vec<Option<Vec<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[li] = Some(vec![S::one()]);
        for i in (0..=li).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        let grads = grads
            .into_iter()
            .zip(&self.nodes)
            .map(|(g, n)| {
                g.filter(|_| n.requires_grad)
                    .map(|g| Tensor::new(n.value.shape().to_vec(), g).expect("grad shape"))
            })
            .collect();
        Ok(Gradients { tape: self.id, grads })
    }

    fn propagate(&self, i: usize, g: &[S], grads: &mut [Option<Vec<S>>]) {
        let node = &self.nodes[i];
        let wants = |j: usize| self.nodes[j].requires_grad;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let (m, k, n) = (av.shape()[0], av.shape()[1], bv.shape()[1]);
                if wants(*a) {
                    add_into(&mut grads[*a], kernels::matmul_nt(g, bv.data(), m, n, k));
                }
                if wants(*b) {
                    add_into(&mut grads[*b], kernels::matmul_tn(av.data(), g, m, k, n));
                }
            }
            Op::Binary(kind, a, b) => {
                let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                let same = av.shape() == bv.shape();
                let (rows, cols) = if same {
                    (1, node.value.numel())
                } else {
                    as_2d(node.value.shape()).expect("rank <= 2")
                };
                let (ar, ac) = as_2d(av.shape()).unwrap_or((rows, cols));
                let (br, bc) = as_2d(bv.shape()).unwrap_or((rows, cols));
                let at = |r: usize, c: usize| {
                    if same {
                        av.data()[r * cols + c]
                    } else {
                        av.data()[(if ar == 1 { 0 } else { r }) * ac + if ac == 1 { 0 } else { c }]
                    }
                };
                let bt = |r: usize, c: usize| {
                    if same {
                        bv.data()[r * cols + c]
                    } else {
                        bv.data()[(if br == 1 { 0 } else { r }) * bc + if bc == 1 { 0 } else { c }]
                    }
                };
                if wants(*a) {
                    let full: Vec<S> = match kind {
                        BinaryKind::Add | BinaryKind::Sub => g.to_vec(),
                        BinaryKind::Mul => (0..rows * cols)
                            .map(|p| g[p] * bt(p / cols.max(1), p % cols.max(1)))
                            .collect(),
                        BinaryKind::Div => (0..rows * cols)
                            .map(|p| g[p] / bt(p / cols.max(1), p % cols.max(1)))
                            .collect(),
                    };
                    let c = if same { full } else { unbroadcast(&full, rows, cols, av.shape()) };
                    add_into(&mut grads[*a], c);
                }
                if wants(*b) {
                    let full: Vec<S> = match kind {
                        BinaryKind::Add => g.to_vec(),
                        BinaryKind::Sub => g.iter().map(|&v| -v).collect(),
                        BinaryKind::Mul => (0..rows * cols)
                            .map(|p| g[p] * at(p / cols.max(1), p % cols.max(1)))
                            .collect(),
                        BinaryKind::Div => (0..rows * cols)
                            .map(|p| {
                                let (r, c) = (p / cols.max(1), p % cols.max(1));
                                let y = bt(r, c);
                                -g[p] * at(r, c) / (y * y)
                            })
                            .collect(),
                    };
                    let c = if same { full } else { unbroadcast(&full, rows, cols, bv.shape()) };
                    add_into(&mut grads[*b], c);
                }
            }
            Op::Unary(kind, x) => {
                if !wants(*x) {
                    return;
                }
                let xv = self.nodes[*x].value.data();
                let y = node.value.data();
                let c: Vec<S> = (0..g.len())
                    .map(|p| {
                        g[p] * match kind {
                            UnaryKind::Neg => -S::one(),
                            UnaryKind::Exp => y[p],
                            UnaryKind::Log => S::one() / xv[p],
                            UnaryKind::Tanh => S::one() - y[p] * y[p],
                            UnaryKind::Sigmoid => y[p] * (S::one() - y[p]),
                            UnaryKind::Relu => {
                                if xv[p] > S::zero() {
                                    S::one()
                                } else {
                                    S::zero()
                                }
                            }
                        }
                    })
                    .collect();
                add_into(&mut grads[*x], c);
            }
            Op::WithScalar(kind, x) => {
                if !wants(*x) {
                    return;
                }
                let xv = self.nodes[*x].value.data();
                let c: Vec<S> = (0..g.len())
                    .map(|p| match *kind {
                        ScalarKind::Add(_) => g[p],
                        ScalarKind::Mul(k) => g[p] * k,
                        ScalarKind::Pow(e) => g[p] * e * xv[p].powf(e - S::one()),
                        ScalarKind::ClampMin(lo) => {
                            if xv[p] > lo {
                                g[p]
                            } else {
                                S::zero()
                            }
                        }
                    })
                    .collect();
                add_into(&mut grads[*x], c);
            }
            Op::RowSoftmax(x) => {
                if !wants(*x) {
                    return;
                }
                let y = &node.value;
                let (m, n) = (y.shape()[0], y.shape()[1]);
                let mut c = vec![S::zero(); m * n];
                for r in 0..m {
                    let yr = y.row(r);
                    let gr = &g[r * n..(r + 1) * n];
                    let dot: S = yr.iter().zip(gr).fold(S::zero(), |a, (&yv, &gv)| a + yv * gv);
                    for j in 0..n {
                        c[r * n + j] = yr[j] * (gr[j] - dot);
                    }
                }
                add_into(&mut grads[*x], c);
            }
            Op::Reduce(kind, x, axis) => {
                if !wants(*x) {
                    return;
                }
                let xv = &self.nodes[*x].value;
                let c = match axis {
                    None => {
                        let v = match kind {
                            ReduceKind::Sum => g[0],
                            ReduceKind::Mean => g[0] / S::from_usize(xv.numel()).unwrap(),
                        };
                        vec![v; xv.numel()]
                    }
                    Some(ax) => {
                        let (outer, len, inner) = axis_split(xv.shape(), *ax);
                        let scale = match kind {
                            ReduceKind::Sum => S::one(),
                            ReduceKind::Mean => S::one() / S::from_usize(len).unwrap(),
                        };
                        let mut c = vec![S::zero(); xv.numel()];
                        for o in 0..outer {
                            for k in 0..len {
                                for i in 0..inner {
                                    c[(o * len + k) * inner + i] = g[o * inner + i] * scale;
                                }
                            }
                        }
                        c
                    }
                };
                add_into(&mut grads[*x], c);
            }
            Op::Reshape(x) => {
                if wants(*x) {
                    add_into(&mut grads[*x], g.to_vec());
                }
            }
            Op::GatherRows(x, idx) => {
                if !wants(*x) {
                    return;
                }
                let xv = &self.nodes[*x].value;
                let cols = xv.cols();
                let mut c = vec![S::zero(); xv.numel()];
                for (r, &src) in idx.iter().enumerate() {
                    for j in 0..cols {
                        c[src * cols + j] = c[src * cols + j] + g[r * cols + j];
                    }
                }
                add_into(&mut grads[*x], c);
            }
            Op::ScatterAddRows(x, idx) => {
                if !wants(*x) {
                    return;
                }
                let cols = node.value.cols();
                let mut c = Vec::with_capacity(idx.len() * cols);
                for &t in idx.iter() {
                    c.extend_from_slice(&g[t * cols..(t + 1) * cols]);
                }
                add_into(&mut grads[*x], c);
            }
            Op::SegmentSoftmax(x, seg, n) => {
                if !wants(*x) {
                    return;
                }
                let y = &node.value;
                let h = y.cols();
                let mut dot = vec![S::zero(); n * h];
                for (e, &s) in seg.iter().enumerate() {
                    for j in 0..h {
                        dot[s * h + j] = dot[s * h + j] + y.data()[e * h + j] * g[e * h + j];
                    }
                }
                let c: Vec<S> = (0..seg.len() * h)
                    .map(|p| {
                        let (e, j) = (p / h, p % h);
                        y.data()[p] * (g[p] - dot[seg[e] * h + j])
                    })
                    .collect();
                add_into(&mut grads[*x], c);
            }
            Op::ConcatRows(xs) => {
                let mut offset = 0;
                for &x in xs {
                    let len = self.nodes[x].value.numel();
                    if wants(x) {
                        add_into(&mut grads[x], g[offset..offset + len].to_vec());
                    }
                    offset += len;
                }
            }
            Op::SliceRows(x, start) => {
                if !wants(*x) {
                    return;
                }
                let xv = &self.nodes[*x].value;
                let cols = xv.cols();
                let mut c = vec![S::zero(); xv.numel()];
                c[start * cols..start * cols + g.len()].copy_from_slice(g);
                add_into(&mut grads[*x], c);
            }
        }
    }
}
