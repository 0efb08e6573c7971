//! Define-by-run reverse-mode differentiation over [`Tensor`]s.
//!
//! Every builder method evaluates its operation eagerly and records it on the
//! tape, so node values are available immediately. The recorded tape can be
//! replayed with different named inputs through [`Graph::evaluate`], and
//! [`Graph::gradient`] walks it backwards once from a scalar loss.
//!
//! Broadcasting is limited to scalar–tensor operands and adding a rank-1 row
//! vector across the last axis.

use std::collections::HashMap;

use indexmap::IndexMap;

use crate::error::{Error, Result};
use crate::tensor::{gemm, gemm_nt_acc, gemm_tn_acc, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Input(String),
    Param(String),
    Const,
    MatMul,
    BatchMatMul,
    TransposeLast,
    Add,
    Sub,
    Mul,
    Scale(f64),
    Sin,
    Relu,
    Round,
    Concat(usize),
    Slice { axis: usize, start: usize, end: usize },
    Reshape(Vec<usize>),
    Sum,
    SumAxis(usize),
    Mean,
    Softmax,
    Fourier,
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Input(_) => "input",
            Op::Param(_) => "param",
            Op::Const => "const",
            Op::MatMul => "matmul",
            Op::BatchMatMul => "batch_matmul",
            Op::TransposeLast => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Scale(_) => "scale",
            Op::Sin => "sin",
            Op::Relu => "relu",
            Op::Round => "round",
            Op::Concat(_) => "concat",
            Op::Slice { .. } => "slice",
            Op::Reshape(_) => "reshape",
            Op::Sum => "sum",
            Op::SumAxis(_) => "sum_axis",
            Op::Mean => "mean",
            Op::Softmax => "softmax",
            Op::Fourier => "fourier",
        }
    }

    fn is_leaf(&self) -> bool {
        matches!(self, Op::Input(_) | Op::Param(_) | Op::Const)
    }
}

#[derive(Clone, Debug)]
struct Node {
    op: Op,
    inputs: Vec<NodeId>,
    value: Tensor,
    label: Option<String>,
}

/// Gradients of a scalar loss keyed by parameter name, in registration order.
#[derive(Clone, Debug, Default)]
pub struct Gradients {
    grads: IndexMap<String, Tensor>,
}

impl Gradients {
    pub fn from_map(grads: IndexMap<String, Tensor>) -> Self {
        Self { grads }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.grads.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn into_map(self) -> IndexMap<String, Tensor> {
        self.grads
    }
}

#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: IndexMap<String, NodeId>,
    outputs: HashMap<String, NodeId>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Bcast {
    Same,
    ScalarRight,
    ScalarLeft,
    Row,
}

fn bcast(a: &Tensor, b: &Tensor) -> std::result::Result<Bcast, String> {
    if a.shape() == b.shape() {
        Ok(Bcast::Same)
    } else if b.is_scalar_like() {
        Ok(Bcast::ScalarRight)
    } else if a.is_scalar_like() {
        Ok(Bcast::ScalarLeft)
    } else if b.rank() == 1 && a.rank() >= 2 && a.shape()[a.rank() - 1] == b.len() {
        Ok(Bcast::Row)
    } else {
        Err(format!("cannot combine shapes {:?} and {:?}", a.shape(), b.shape()))
    }
}

fn binary(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> std::result::Result<Tensor, String> {
    let out = match bcast(a, b)? {
        Bcast::Same => a.zip_map(b, f),
        Bcast::ScalarRight => {
            let s = b.item();
            a.map(|x| f(x, s))
        }
        Bcast::ScalarLeft => {
            let s = a.item();
            b.map(|x| f(s, x))
        }
        Bcast::Row => {
            let n = b.len();
            let mut out = a.clone();
            for row in out.data_mut().chunks_mut(n) {
                for (x, &y) in row.iter_mut().zip(b.data()) {
                    *x = f(*x, y);
                }
            }
            out
        }
    };
    Ok(out)
}

/// Reduces `g` (shaped like the broadcast result) back to the shape of the
/// broadcast operand.
fn reduce_to(g: &Tensor, target: &Tensor, mode: Bcast, right: bool) -> Tensor {
    match (mode, right) {
        (Bcast::Same, _) => g.clone(),
        (Bcast::ScalarRight, true) | (Bcast::ScalarLeft, false) => {
            Tensor::new(target.shape().to_vec(), vec![g.sum()]).expect("scalar")
        }
        (Bcast::Row, true) => {
            let n = target.len();
            let mut acc = vec![0.0; n];
            for row in g.data().chunks(n) {
                for (a, &v) in acc.iter_mut().zip(row) {
                    *a += v;
                }
            }
            Tensor::vector(acc)
        }
        _ => g.clone(),
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn forward(op: &Op, xs: &[&Tensor]) -> std::result::Result<Tensor, String> {
    match op {
        Op::Input(_) | Op::Param(_) | Op::Const => unreachable!("leaves are not recomputed"),
        Op::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            if a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows() {
                return Err(format!("matmul of {:?} and {:?}", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let mut out = vec![0.0; m * n];
            gemm(m, k, n, a.data(), b.data(), &mut out);
            Ok(Tensor::new(vec![m, n], out).unwrap())
        }
        Op::BatchMatMul => {
            let (a, b) = (xs[0], xs[1]);
            if a.rank() != 3 || b.rank() != 3 || a.shape()[0] != b.shape()[0] || a.shape()[2] != b.shape()[1] {
                return Err(format!("batch_matmul of {:?} and {:?}", a.shape(), b.shape()));
            }
            let (bs, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
            let mut out = vec![0.0; bs * m * n];
            for i in 0..bs {
                gemm(
                    m,
                    k,
                    n,
                    &a.data()[i * m * k..(i + 1) * m * k],
                    &b.data()[i * k * n..(i + 1) * k * n],
                    &mut out[i * m * n..(i + 1) * m * n],
                );
            }
            Ok(Tensor::new(vec![bs, m, n], out).unwrap())
        }
        Op::TransposeLast => {
            let a = xs[0];
            if a.rank() < 2 {
                return Err(format!("transpose needs rank >= 2, got {:?}", a.shape()));
            }
            Ok(transpose_last(a))
        }
        Op::Add => binary(xs[0], xs[1], |a, b| a + b),
        Op::Sub => binary(xs[0], xs[1], |a, b| a - b),
        Op::Mul => binary(xs[0], xs[1], |a, b| a * b),
        Op::Scale(c) => Ok(xs[0].map(|x| x * c)),
        Op::Sin => Ok(xs[0].map(f64::sin)),
        Op::Relu => Ok(xs[0].map(|x| x.max(0.0))),
        Op::Round => Ok(xs[0].map(f64::round)),
        Op::Concat(axis) => concat(xs, *axis),
        Op::Slice { axis, start, end } => {
            let a = xs[0];
            if *axis >= a.rank() || start >= end || *end > a.shape()[*axis] {
                return Err(format!("slice {start}..{end} on axis {axis} of {:?}", a.shape()));
            }
            let (outer, mid, inner) = split_axis(a.shape(), *axis);
            let width = end - start;
            let mut out = Vec::with_capacity(outer * width * inner);
            for o in 0..outer {
                let base = o * mid * inner;
                out.extend_from_slice(&a.data()[base + start * inner..base + end * inner]);
            }
            let mut shape = a.shape().to_vec();
            shape[*axis] = width;
            Ok(Tensor::new(shape, out).unwrap())
        }
        Op::Reshape(shape) => {
            let n: usize = shape.iter().product();
            if n != xs[0].len() {
                return Err(format!("reshape {:?} to {:?}", xs[0].shape(), shape));
            }
            Ok(xs[0].reshape(shape.clone()).unwrap())
        }
        Op::Sum => Ok(Tensor::scalar(xs[0].sum())),
        Op::SumAxis(axis) => {
            let a = xs[0];
            if *axis >= a.rank() {
                return Err(format!("axis {axis} out of range for {:?}", a.shape()));
            }
            let (outer, mid, inner) = split_axis(a.shape(), *axis);
            let mut out = vec![0.0; outer * inner];
            for o in 0..outer {
                for m in 0..mid {
                    let src = &a.data()[(o * mid + m) * inner..(o * mid + m + 1) * inner];
                    for (d, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
            let mut shape = a.shape().to_vec();
            shape.remove(*axis);
            Ok(Tensor::new(shape, out).unwrap())
        }
        Op::Mean => {
            if xs[0].is_empty() {
                return Err("mean of empty tensor".into());
            }
            Ok(Tensor::scalar(xs[0].sum() / xs[0].len() as f64))
        }
        Op::Softmax => {
            let a = xs[0];
            if a.rank() == 0 {
                return Err("softmax of a rank-0 tensor".into());
            }
            let n = a.shape()[a.rank() - 1];
            let mut out = a.clone();
            for row in out.data_mut().chunks_mut(n) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    total += *v;
                }
                for v in row.iter_mut() {
                    *v /= total;
                }
            }
            Ok(out)
        }
        Op::Fourier => {
            let (x, amp, freq, phase) = (xs[0], xs[1], xs[2], xs[3]);
            if amp.rank() != 1 || freq.shape() != amp.shape() || phase.shape() != amp.shape() {
                return Err(format!(
                    "fourier coefficients {:?}/{:?}/{:?}",
                    amp.shape(),
                    freq.shape(),
                    phase.shape()
                ));
            }
            let (a, w, p) = (amp.data(), freq.data(), phase.data());
            Ok(x.map(|v| {
                let mut s = 0.0;
                for i in 0..a.len() {
                    s += a[i] * (w[i] * v + p[i]).sin();
                }
                s
            }))
        }
    }
}

fn transpose_last(a: &Tensor) -> Tensor {
    let r = a.rank();
    let (m, n) = (a.shape()[r - 2], a.shape()[r - 1]);
    let batch = a.len() / (m * n).max(1);
    let mut out = vec![0.0; a.len()];
    for b in 0..batch {
        let src = &a.data()[b * m * n..(b + 1) * m * n];
        let dst = &mut out[b * m * n..(b + 1) * m * n];
        for i in 0..m {
            for j in 0..n {
                dst[j * m + i] = src[i * n + j];
            }
        }
    }
    let mut shape = a.shape().to_vec();
    shape.swap(r - 2, r - 1);
    Tensor::new(shape, out).unwrap()
}

fn concat(xs: &[&Tensor], axis: usize) -> std::result::Result<Tensor, String> {
    let first = xs.first().ok_or("concat of nothing")?;
    if axis >= first.rank() {
        return Err(format!("axis {axis} out of range for {:?}", first.shape()));
    }
    let mut shape = first.shape().to_vec();
    shape[axis] = 0;
    for x in xs {
        let ok = x.rank() == first.rank()
            && x.shape().iter().zip(first.shape()).enumerate().all(|(i, (a, b))| i == axis || a == b);
        if !ok {
            return Err(format!("concat of {:?} with {:?} along axis {axis}", first.shape(), x.shape()));
        }
        shape[axis] += x.shape()[axis];
    }
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(shape.iter().product());
    for o in 0..outer {
        for x in xs {
            let block = x.shape()[axis] * inner;
            out.extend_from_slice(&x.data()[o * block..(o + 1) * block]);
        }
    }
    Ok(Tensor::new(shape, out).unwrap())
}

/// Gradient contributions for each input of `op`, `None` where an input gets
/// nothing.
fn backward(op: &Op, xs: &[&Tensor], out: &Tensor, g: &Tensor, need: &[bool]) -> Vec<Option<Tensor>> {
    match op {
        Op::Input(_) | Op::Param(_) | Op::Const | Op::Round => vec![],
        Op::MatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let ga = need[0].then(|| {
                let mut d = vec![0.0; m * k];
                gemm_nt_acc(m, n, k, g.data(), b.data(), &mut d);
                Tensor::new(vec![m, k], d).unwrap()
            });
            let gb = need[1].then(|| {
                let mut d = vec![0.0; k * n];
                gemm_tn_acc(k, m, n, a.data(), g.data(), &mut d);
                Tensor::new(vec![k, n], d).unwrap()
            });
            vec![ga, gb]
        }
        Op::BatchMatMul => {
            let (a, b) = (xs[0], xs[1]);
            let (bs, m, k, n) = (a.shape()[0], a.shape()[1], a.shape()[2], b.shape()[2]);
            let mut da = vec![0.0; a.len()];
            let mut db = vec![0.0; b.len()];
            for i in 0..bs {
                let gi = &g.data()[i * m * n..(i + 1) * m * n];
                if need[0] {
                    gemm_nt_acc(m, n, k, gi, &b.data()[i * k * n..(i + 1) * k * n], &mut da[i * m * k..(i + 1) * m * k]);
                }
                if need[1] {
                    gemm_tn_acc(k, m, n, &a.data()[i * m * k..(i + 1) * m * k], gi, &mut db[i * k * n..(i + 1) * k * n]);
                }
            }
            vec![
                need[0].then(|| Tensor::new(a.shape().to_vec(), da).unwrap()),
                need[1].then(|| Tensor::new(b.shape().to_vec(), db).unwrap()),
            ]
        }
        Op::TransposeLast => vec![Some(transpose_last(g))],
        Op::Add | Op::Sub => {
            let mode = bcast(xs[0], xs[1]).expect("checked in forward");
            let ga = need[0].then(|| match mode {
                Bcast::ScalarLeft => reduce_to(g, xs[0], mode, false),
                _ => g.clone(),
            });
            let gb = need[1].then(|| {
                let r = match mode {
                    Bcast::ScalarLeft => g.clone(),
                    _ => reduce_to(g, xs[1], mode, true),
                };
                if matches!(op, Op::Sub) {
                    r.map(|v| -v)
                } else {
                    r
                }
            });
            vec![ga, gb]
        }
        Op::Mul => {
            let (a, b) = (xs[0], xs[1]);
            let mode = bcast(a, b).expect("checked in forward");
            let ga = need[0].then(|| {
                let full = binary(g, b, |x, y| x * y).expect("same broadcast");
                reduce_to(&full, a, mode, false)
            });
            let gb = need[1].then(|| {
                let full = binary(g, a, |x, y| x * y).expect("same broadcast");
                reduce_to(&full, b, mode, true)
            });
            vec![ga, gb]
        }
        Op::Scale(c) => vec![Some(g.map(|v| v * c))],
        Op::Sin => vec![Some(g.zip_map(xs[0], |gv, x| gv * x.cos()))],
        Op::Relu => vec![Some(g.zip_map(xs[0], |gv, x| if x > 0.0 { gv } else { 0.0 }))],
        Op::Concat(axis) => {
            let shape = out.shape();
            let outer: usize = shape[..*axis].iter().product();
            let inner: usize = shape[axis + 1..].iter().product();
            let mut parts: Vec<Vec<f64>> = xs.iter().map(|x| Vec::with_capacity(x.len())).collect();
            let mut offset = 0;
            for o in 0..outer {
                let _ = o;
                for (x, part) in xs.iter().zip(parts.iter_mut()) {
                    let block = x.shape()[*axis] * inner;
                    part.extend_from_slice(&g.data()[offset..offset + block]);
                    offset += block;
                }
            }
            xs.iter()
                .zip(parts)
                .zip(need)
                .map(|((x, p), &n)| n.then(|| Tensor::new(x.shape().to_vec(), p).unwrap()))
                .collect()
        }
        Op::Slice { axis, start, end } => {
            let a = xs[0];
            let (outer, mid, inner) = split_axis(a.shape(), *axis);
            let width = end - start;
            let mut d = vec![0.0; a.len()];
            for o in 0..outer {
                let base = o * mid * inner;
                d[base + start * inner..base + end * inner]
                    .copy_from_slice(&g.data()[o * width * inner..(o + 1) * width * inner]);
            }
            vec![Some(Tensor::new(a.shape().to_vec(), d).unwrap())]
        }
        Op::Reshape(_) => vec![Some(g.reshape(xs[0].shape().to_vec()).unwrap())],
        Op::Sum => vec![Some(Tensor::full(xs[0].shape().to_vec(), g.item()))],
        Op::SumAxis(axis) => {
            let a = xs[0];
            let (outer, mid, inner) = split_axis(a.shape(), *axis);
            let mut d = vec![0.0; a.len()];
            for o in 0..outer {
                for m in 0..mid {
                    d[(o * mid + m) * inner..(o * mid + m + 1) * inner]
                        .copy_from_slice(&g.data()[o * inner..(o + 1) * inner]);
                }
            }
            vec![Some(Tensor::new(a.shape().to_vec(), d).unwrap())]
        }
        Op::Mean => vec![Some(Tensor::full(xs[0].shape().to_vec(), g.item() / xs[0].len() as f64))],
        Op::Softmax => {
            let n = out.shape()[out.rank() - 1];
            let mut d = vec![0.0; out.len()];
            for ((drow, yrow), grow) in d.chunks_mut(n).zip(out.data().chunks(n)).zip(g.data().chunks(n)) {
                let dot: f64 = yrow.iter().zip(grow).map(|(y, g)| y * g).sum();
                for ((dv, &y), &gv) in drow.iter_mut().zip(yrow).zip(grow) {
                    *dv = y * (gv - dot);
                }
            }
            vec![Some(Tensor::new(out.shape().to_vec(), d).unwrap())]
        }
        Op::Fourier => {
            let (x, amp, freq, phase) = (xs[0], xs[1], xs[2], xs[3]);
            let (a, w, p) = (amp.data(), freq.data(), phase.data());
            let z = a.len();
            let mut dx = vec![0.0; x.len()];
            let mut da = vec![0.0; z];
            let mut dw = vec![0.0; z];
            let mut dp = vec![0.0; z];
            for ((dxv, &xv), &gv) in dx.iter_mut().zip(x.data()).zip(g.data()) {
                if gv == 0.0 {
                    continue;
                }
                for i in 0..z {
                    let (s, c) = (w[i] * xv + p[i]).sin_cos();
                    let gc = gv * a[i] * c;
                    *dxv += gc * w[i];
                    da[i] += gv * s;
                    dw[i] += gc * xv;
                    dp[i] += gc;
                }
            }
            vec![
                need[0].then(|| Tensor::new(x.shape().to_vec(), dx).unwrap()),
                need[1].then(|| Tensor::vector(da)),
                need[2].then(|| Tensor::vector(dw)),
                need[3].then(|| Tensor::vector(dp)),
            ]
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn describe(&self, id: usize, op: &Op) -> String {
        match self.nodes.get(id).and_then(|n| n.label.as_deref()) {
            Some(label) => format!("node #{id} ({}, `{label}`)", op.name()),
            None => format!("node #{id} ({})", op.name()),
        }
    }

    fn push_leaf(&mut self, op: Op, value: Tensor) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.nodes.push(Node { op, inputs: Vec::new(), value, label: None });
        id
    }

    /// A named, non-trainable leaf that must be supplied again on replay.
    pub fn input(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        self.push_leaf(Op::Input(name.into()), value)
    }

    /// Registers a trainable leaf. Registering an existing name returns the
    /// original node.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor) -> NodeId {
        let name = name.into();
        if let Some(&id) = self.params.get(&name) {
            return id;
        }
        let id = self.push_leaf(Op::Param(name.clone()), value);
        self.params.insert(name, id);
        id
    }

    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Op::Const, value)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    /// Attaches a label used in error messages and as an output name for
    /// [`Graph::evaluate`].
    pub fn name(&mut self, id: NodeId, label: impl Into<String>) {
        let label = label.into();
        self.outputs.insert(label.clone(), id);
        self.nodes[id.0].label = Some(label);
    }

    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>) -> Result<NodeId> {
        let id = self.nodes.len();
        let value = {
            let xs: Vec<&Tensor> = inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            forward(&op, &xs).map_err(|detail| Error::Shape { node: self.describe(id, &op), detail })?
        };
        if !value.all_finite() {
            return Err(Error::NonFinite { node: self.describe(id, &op) });
        }
        self.nodes.push(Node { op, inputs, value, label: None });
        Ok(NodeId(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul, vec![a, b])
    }

    /// `[B,m,k] · [B,k,n] → [B,m,n]`.
    pub fn batch_matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::BatchMatMul, vec![a, b])
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::TransposeLast, vec![a])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add, vec![a, b])
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Sub, vec![a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul, vec![a, b])
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale(factor), vec![a])
    }

    pub fn sin(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sin, vec![a])
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu, vec![a])
    }

    /// Elementwise rounding. Has no derivative; backpropagating through it fails.
    pub fn round(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Round, vec![a])
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        self.push(Op::Concat(axis), parts.to_vec())
    }

    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, end: usize) -> Result<NodeId> {
        self.push(Op::Slice { axis, start, end }, vec![a])
    }

    pub fn reshape(&mut self, a: NodeId, shape: impl Into<Vec<usize>>) -> Result<NodeId> {
        self.push(Op::Reshape(shape.into()), vec![a])
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum, vec![a])
    }

    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        self.push(Op::SumAxis(axis), vec![a])
    }

    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Mean, vec![a])
    }

    /// Softmax over the last axis.
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax, vec![a])
    }

    /// Elementwise `Σᵢ amp[i]·sin(freq[i]·x + phase[i])`.
    pub fn fourier(&mut self, x: NodeId, amp: NodeId, freq: NodeId, phase: NodeId) -> Result<NodeId> {
        self.push(Op::Fourier, vec![x, amp, freq, phase])
    }

    /// Replays the recorded tape. Every input leaf must be supplied by name;
    /// parameters may optionally be overridden. Returns the requested named
    /// nodes.
    pub fn evaluate(&self, inputs: &HashMap<String, Tensor>, outputs: &[&str]) -> Result<HashMap<String, Tensor>> {
        let mut values: Vec<Tensor> = Vec::with_capacity(self.nodes.len());
        for (id, node) in self.nodes.iter().enumerate() {
            let value = match &node.op {
                Op::Input(name) | Op::Param(name) => match inputs.get(name) {
                    Some(v) if v.shape() != node.value.shape() => {
                        return Err(Error::Shape {
                            node: self.describe(id, &node.op),
                            detail: format!("supplied {:?}, expected {:?}", v.shape(), node.value.shape()),
                        })
                    }
                    Some(v) => v.clone(),
                    None if matches!(node.op, Op::Input(_)) => return Err(Error::MissingInput(name.clone())),
                    None => node.value.clone(),
                },
                Op::Const => node.value.clone(),
                op => {
                    let xs: Vec<&Tensor> = node.inputs.iter().map(|i| &values[i.0]).collect();
                    let v = forward(op, &xs).map_err(|detail| Error::Shape { node: self.describe(id, op), detail })?;
                    if !v.all_finite() {
                        return Err(Error::NonFinite { node: self.describe(id, op) });
                    }
                    v
                }
            };
            values.push(value);
        }
        outputs
            .iter()
            .map(|&name| {
                let id = self.outputs.get(name).ok_or_else(|| Error::invalid(format!("no output named `{name}`")))?;
                Ok((name.to_string(), values[id.0].clone()))
            })
            .collect()
    }

    /// Derivatives of the scalar `loss` with respect to every registered
    /// parameter. Parameters that do not influence the loss get zero tensors.
    pub fn gradient(&self, loss: NodeId) -> Result<Gradients> {
        let loss_node = &self.nodes[loss.0];
        if loss_node.value.len() != 1 {
            return Err(Error::NotScalar {
                node: self.describe(loss.0, &loss_node.op),
                shape: loss_node.value.shape().to_vec(),
            });
        }

        // Only nodes downstream of a parameter need adjoints.
        let mut requires = vec![false; loss.0 + 1];
        for (id, node) in self.nodes.iter().enumerate().take(loss.0 + 1) {
            requires[id] = matches!(node.op, Op::Param(_)) || node.inputs.iter().any(|i| requires[i.0]);
        }

        let mut adj: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Tensor::new(loss_node.value.shape().to_vec(), vec![1.0]).unwrap());

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if node.op.is_leaf() || !requires[id] {
                continue;
            }
            let Some(g) = adj[id].take() else { continue };
            if matches!(node.op, Op::Round) {
                return Err(Error::NonDifferentiable { node: self.describe(id, &node.op) });
            }
            let xs: Vec<&Tensor> = node.inputs.iter().map(|i| &self.nodes[i.0].value).collect();
            let need: Vec<bool> = node.inputs.iter().map(|i| requires[i.0]).collect();
            let contributions = backward(&node.op, &xs, &node.value, &g, &need);
            for (input, contrib) in node.inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                if !requires[input.0] {
                    continue;
                }
                match &mut adj[input.0] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    slot @ None => *slot = Some(contrib),
                }
            }
            // Keep parameter adjoints; free everything else as we go.
            if !matches!(node.op, Op::Param(_)) {
                adj[id] = None;
            }
        }

        let mut grads = IndexMap::with_capacity(self.params.len());
        for (name, id) in &self.params {
            let value = &self.nodes[id.0].value;
            let g = adj
                .get_mut(id.0)
                .and_then(Option::take)
                .unwrap_or_else(|| Tensor::zeros(value.shape().to_vec()));
            grads.insert(name.clone(), g);
        }
        Ok(Gradients { grads })
    }
}
