//! Reverse-mode differentiation over matrix-valued primitives.
//!
//! A [`Graph`] records every primitive application during a forward pass.
//! Nodes are appended in evaluation order, so the record is topologically
//! sorted by construction and [`Graph::backward`] walks it in reverse.
//!
//! ```
//! use actgen::numerics::{Graph, Tensor};
//!
//! let mut g = Graph::<f64>::new();
//! let x = g.param(Tensor::new(vec![2], vec![1.0, 2.0]).unwrap());
//! let y = g.squared_norm(x).unwrap();
//! let grads = g.backward(y, None).unwrap();
//! assert_eq!(grads.get(x).unwrap().data(), &[2.0, 4.0]);
//! ```

use std::sync::atomic::{AtomicU64, Ordering};

use super::{Real, Tensor};
use crate::error::{Error, Result};

static NEXT_GRAPH_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    graph: u64,
    index: usize,
}

impl Var {
    pub fn index(self) -> usize {
        self.index
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    Rows,
    Cols,
}

/// A recorded primitive. Operands refer to earlier node indices.
#[derive(Clone, Debug, PartialEq)]
pub enum Op {
    Leaf {
        trainable: bool,
    },
    MatMul(usize, usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    /// Adds a `1×c` row to every row of an `r×c` matrix.
    AddRow(usize, usize),
    Affine {
        input: usize,
        scale: f64,
        shift: f64,
    },
    Concat {
        inputs: Vec<usize>,
        axis: Axis,
    },
    Slice {
        input: usize,
        axis: Axis,
        start: usize,
        end: usize,
    },
    Transpose(usize),
    Tanh(usize),
    Sigmoid(usize),
    Relu(usize),
    Exp(usize),
    /// `log(max(x, eps))`
    Log {
        input: usize,
        eps: f64,
    },
    Sqrt(usize),
    Clamp {
        input: usize,
        lo: f64,
        hi: f64,
    },
    Sum(usize),
    Mean(usize),
    SquaredNorm(usize),
    RowSum(usize),
    SoftmaxRows(usize),
}

impl Op {
    pub fn tag(&self) -> &'static str {
        match self {
            Op::Leaf { .. } => "leaf",
            Op::MatMul(..) => "matmul",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::AddRow(..) => "add_row",
            Op::Affine { .. } => "affine",
            Op::Concat { .. } => "concat",
            Op::Slice { .. } => "slice",
            Op::Transpose(..) => "transpose",
            Op::Tanh(..) => "tanh",
            Op::Sigmoid(..) => "sigmoid",
            Op::Relu(..) => "relu",
            Op::Exp(..) => "exp",
            Op::Log { .. } => "log",
            Op::Sqrt(..) => "sqrt",
            Op::Clamp { .. } => "clamp",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SquaredNorm(..) => "squared_norm",
            Op::RowSum(..) => "row_sum",
            Op::SoftmaxRows(..) => "softmax",
        }
    }

    pub fn inputs(&self) -> Vec<usize> {
        match self {
            Op::Leaf { .. } => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                vec![*a, *b]
            }
            Op::Concat { inputs, .. } => inputs.clone(),
            Op::Affine { input, .. }
            | Op::Slice { input, .. }
            | Op::Log { input, .. }
            | Op::Clamp { input, .. } => vec![*input],
            Op::Transpose(a)
            | Op::Tanh(a)
            | Op::Sigmoid(a)
            | Op::Relu(a)
            | Op::Exp(a)
            | Op::Sqrt(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SquaredNorm(a)
            | Op::RowSum(a)
            | Op::SoftmaxRows(a) => vec![*a],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Node<S> {
    pub op: Op,
    pub value: Tensor<S>,
    requires_grad: bool,
}

impl<S> Node<S> {
    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }
}

/// Computation record: the ordered list of primitive applications of one
/// forward pass.
#[derive(Debug)]
pub struct Graph<S> {
    id: u64,
    nodes: Vec<Node<S>>,
}

impl<S: Real> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradients produced by [`Graph::backward`], indexed by [`Var`].
#[derive(Debug)]
pub struct Gradients<S> {
    graph: u64,
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Real> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get(v.index).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `like`'s shape when `v` did not
    /// influence the output.
    pub fn get_or_zeros(&self, v: Var, like: &Tensor<S>) -> Tensor<S> {
        match self.get(v) {
            Some(t) => t.clone(),
            None => {
                Tensor::from_parts_unchecked(like.shape().to_vec(), vec![S::zero(); like.len()])
            }
        }
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        if v.graph != self.graph {
            return None;
        }
        self.grads.get_mut(v.index).and_then(Option::take)
    }
}

impl<S: Real> Graph<S> {
    pub fn new() -> Self {
        Self {
            id: NEXT_GRAPH_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn nodes(&self) -> &[Node<S>] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.graph != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        assert_eq!(v.graph, self.id, "variable from another graph");
        &self.nodes[v.index].value
    }

    pub fn scalar(&self, v: Var) -> S {
        self.value(v).data()[0]
    }

    /// Leaf whose gradient is reported by [`Graph::backward`].
    pub fn param(&mut self, value: Tensor<S>) -> Var {
        self.push_leaf(value, true)
    }

    /// Leaf treated as a constant.
    pub fn constant(&mut self, value: Tensor<S>) -> Var {
        self.push_leaf(value, false)
    }

    pub fn leaf(&mut self, value: Tensor<S>, trainable: bool) -> Var {
        self.push_leaf(value, trainable)
    }

    fn push_leaf(&mut self, value: Tensor<S>, trainable: bool) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            op: Op::Leaf { trainable },
            value,
            requires_grad: trainable,
        });
        Var {
            graph: self.id,
            index,
        }
    }

    fn apply(&mut self, op: Op) -> Result<Var> {
        let value = evaluate(&op, |i| &self.nodes[i].value)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("forward {}", op.tag())));
        }
        let requires_grad = op.inputs().iter().any(|&i| self.nodes[i].requires_grad);
        let index = self.nodes.len();
        self.nodes.push(Node {
            op,
            value,
            requires_grad,
        });
        Ok(Var {
            graph: self.id,
            index,
        })
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::MatMul(self.check(a)?, self.check(b)?);
        self.apply(op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Add(self.check(a)?, self.check(b)?);
        self.apply(op)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Sub(self.check(a)?, self.check(b)?);
        self.apply(op)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let op = Op::Mul(self.check(a)?, self.check(b)?);
        self.apply(op)
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let op = Op::AddRow(self.check(a)?, self.check(row)?);
        self.apply(op)
    }

    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        let op = Op::Affine {
            input: self.check(a)?,
            scale,
            shift,
        };
        self.apply(op)
    }

    pub fn scale(&mut self, a: Var, scale: f64) -> Result<Var> {
        self.affine(a, scale, 0.0)
    }

    /// `1 - a`
    pub fn one_minus(&mut self, a: Var) -> Result<Var> {
        self.affine(a, -1.0, 1.0)
    }

    pub fn square(&mut self, a: Var) -> Result<Var> {
        self.mul(a, a)
    }

    pub fn concat(&mut self, vars: &[Var], axis: Axis) -> Result<Var> {
        if vars.is_empty() {
            return Err(Error::Empty("concat"));
        }
        let inputs = vars
            .iter()
            .map(|&v| self.check(v))
            .collect::<Result<Vec<_>>>()?;
        self.apply(Op::Concat { inputs, axis })
    }

    pub fn concat_cols(&mut self, vars: &[Var]) -> Result<Var> {
        self.concat(vars, Axis::Cols)
    }

    pub fn concat_rows(&mut self, vars: &[Var]) -> Result<Var> {
        self.concat(vars, Axis::Rows)
    }

    pub fn slice(&mut self, a: Var, axis: Axis, start: usize, end: usize) -> Result<Var> {
        let op = Op::Slice {
            input: self.check(a)?,
            axis,
            start,
            end,
        };
        self.apply(op)
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.slice(a, Axis::Cols, start, end)
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        self.slice(a, Axis::Rows, start, end)
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var> {
        let op = Op::Transpose(self.check(a)?);
        self.apply(op)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let op = Op::Tanh(self.check(a)?);
        self.apply(op)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sigmoid(self.check(a)?);
        self.apply(op)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let op = Op::Relu(self.check(a)?);
        self.apply(op)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        let op = Op::Exp(self.check(a)?);
        self.apply(op)
    }

    /// Natural log of `max(a, eps)`.
    pub fn log(&mut self, a: Var, eps: f64) -> Result<Var> {
        let op = Op::Log {
            input: self.check(a)?,
            eps,
        };
        self.apply(op)
    }

    pub fn sqrt(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sqrt(self.check(a)?);
        self.apply(op)
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        let op = Op::Clamp {
            input: self.check(a)?,
            lo,
            hi,
        };
        self.apply(op)
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let op = Op::Sum(self.check(a)?);
        self.apply(op)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let op = Op::Mean(self.check(a)?);
        self.apply(op)
    }

    pub fn squared_norm(&mut self, a: Var) -> Result<Var> {
        let op = Op::SquaredNorm(self.check(a)?);
        self.apply(op)
    }

    pub fn row_sum(&mut self, a: Var) -> Result<Var> {
        let op = Op::RowSum(self.check(a)?);
        self.apply(op)
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let op = Op::SoftmaxRows(self.check(a)?);
        self.apply(op)
    }

    /// Reverse-mode sweep from `output`. A scalar output may omit the seed.
    pub fn backward(&self, output: Var, seed: Option<Tensor<S>>) -> Result<Gradients<S>> {
        let out = self.check(output)?;
        let out_value = &self.nodes[out].value;
        let seed = match seed {
            Some(s) => {
                if s.shape() != out_value.shape() {
                    return Err(Error::ShapeMismatch {
                        op: "backward seed",
                        left: out_value.shape().to_vec(),
                        right: s.shape().to_vec(),
                    });
                }
                s
            }
            None => {
                if out_value.len() != 1 {
                    return Err(Error::InvalidArgument(
                        "backward from a non-scalar output needs a seed".into(),
                    ));
                }
                Tensor::scalar(S::one())
            }
        };
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; out + 1];
        grads[out] = Some(seed);
        for index in (0..=out).rev() {
            let node = &self.nodes[index];
            if !node.requires_grad || matches!(node.op, Op::Leaf { .. }) {
                continue;
            }
            let Some(g) = grads[index].take() else {
                continue;
            };
            let contributions = backprop(&node.op, &node.value, &g, |i| &self.nodes[i].value);
            if index == out {
                grads[index] = Some(g);
            }
            for (input, contribution) in contributions {
                if !self.nodes[input].requires_grad {
                    continue;
                }
                if !contribution.is_finite() {
                    return Err(Error::NonFinite(format!("backward {}", node.op.tag())));
                }
                match &mut grads[input] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contribution.data()) {
                            *a = *a + *c;
                        }
                    }
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(Gradients {
            graph: self.id,
            grads,
        })
    }

    /// Recompute every node from the leaves.
    pub fn replay(&self) -> Result<Vec<Tensor<S>>> {
        let mut values: Vec<Tensor<S>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf { .. } => node.value.clone(),
                ref op => evaluate(op, |i| &values[i])?,
            };
            values.push(v);
        }
        Ok(values)
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> Error {
    Error::ShapeMismatch {
        op,
        left: a.to_vec(),
        right: b.to_vec(),
    }
}

fn zip_map<S: Real>(
    op: &'static str,
    a: &Tensor<S>,
    b: &Tensor<S>,
    f: impl Fn(S, S) -> S,
) -> Result<Tensor<S>> {
    if a.shape() != b.shape() {
        return Err(mismatch(op, a.shape(), b.shape()));
    }
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Ok(Tensor::from_parts_unchecked(a.shape().to_vec(), data))
}

fn sigmoid<S: Real>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

fn matrix<S>(rows: usize, cols: usize, data: Vec<S>) -> Tensor<S>
where
    S: Real,
{
    Tensor::from_parts_unchecked(vec![rows, cols], data)
}

fn evaluate<'a, S: Real>(op: &Op, get: impl Fn(usize) -> &'a Tensor<S>) -> Result<Tensor<S>> {
    Ok(match *op {
        Op::Leaf { .. } => unreachable!("leaves are not evaluated"),
        Op::MatMul(a, b) => {
            let (a, b) = (get(a), get(b));
            if a.cols() != b.rows() {
                return Err(mismatch("matmul", a.shape(), b.shape()));
            }
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let mut out = vec![S::zero(); m * n];
            S::gemm(m, k, n, a.data(), false, b.data(), false, &mut out, false);
            matrix(m, n, out)
        }
        Op::Add(a, b) => zip_map("add", get(a), get(b), |x, y| x + y)?,
        Op::Sub(a, b) => zip_map("sub", get(a), get(b), |x, y| x - y)?,
        Op::Mul(a, b) => zip_map("mul", get(a), get(b), |x, y| x * y)?,
        Op::AddRow(a, b) => {
            let (a, b) = (get(a), get(b));
            if b.rows() != 1 || b.cols() != a.cols() {
                return Err(mismatch("add_row", a.shape(), b.shape()));
            }
            let cols = a.cols();
            let row = b.data();
            let data = a
                .data()
                .iter()
                .enumerate()
                .map(|(i, &x)| x + row[i % cols])
                .collect();
            Tensor::from_parts_unchecked(a.shape().to_vec(), data)
        }
        Op::Affine {
            input,
            scale,
            shift,
        } => {
            let (s, t) = (S::of(scale), S::of(shift));
            get(input).map(|x| s * x + t)
        }
        Op::Concat { ref inputs, axis } => {
            let parts: Vec<&Tensor<S>> = inputs.iter().map(|&i| get(i)).collect();
            concat(&parts, axis)?
        }
        Op::Slice {
            input,
            axis,
            start,
            end,
        } => {
            let a = get(input);
            let limit = match axis {
                Axis::Rows => a.rows(),
                Axis::Cols => a.cols(),
            };
            if start >= end || end > limit {
                return Err(Error::InvalidArgument(format!(
                    "slice {start}..{end} out of range for {:?} along {axis:?}",
                    a.shape()
                )));
            }
            match axis {
                Axis::Rows => {
                    let c = a.cols();
                    matrix(end - start, c, a.data()[start * c..end * c].to_vec())
                }
                Axis::Cols => {
                    let mut data = Vec::with_capacity(a.rows() * (end - start));
                    for r in 0..a.rows() {
                        data.extend_from_slice(&a.row(r)[start..end]);
                    }
                    matrix(a.rows(), end - start, data)
                }
            }
        }
        Op::Transpose(a) => transpose(get(a)),
        Op::Tanh(a) => get(a).map(|x| x.tanh()),
        Op::Sigmoid(a) => get(a).map(sigmoid),
        Op::Relu(a) => get(a).map(|x| if x > S::zero() { x } else { S::zero() }),
        Op::Exp(a) => get(a).map(|x| x.exp()),
        Op::Log { input, eps } => {
            let eps = S::of(eps);
            get(input).map(|x| x.max(eps).ln())
        }
        Op::Sqrt(a) => {
            let a = get(a);
            if a.data().iter().any(|&x| x < S::zero()) {
                return Err(Error::NonFinite("forward sqrt of negative value".into()));
            }
            a.map(|x| x.sqrt())
        }
        Op::Clamp { input, lo, hi } => {
            let (lo, hi) = (S::of(lo), S::of(hi));
            get(input).map(|x| x.max(lo).min(hi))
        }
        Op::Sum(a) => Tensor::scalar(get(a).sum()),
        Op::Mean(a) => {
            let a = get(a);
            Tensor::scalar(a.sum() / S::of(a.len() as f64))
        }
        Op::SquaredNorm(a) => Tensor::scalar(get(a).data().iter().map(|&x| x * x).sum()),
        Op::RowSum(a) => {
            let a = get(a);
            let data = (0..a.rows())
                .map(|r| a.row(r).iter().copied().sum())
                .collect();
            matrix(a.rows(), 1, data)
        }
        Op::SoftmaxRows(a) => {
            let a = get(a);
            let mut data = Vec::with_capacity(a.len());
            for r in 0..a.rows() {
                let row = a.row(r);
                let max = row.iter().copied().fold(S::neg_infinity(), S::max);
                let start = data.len();
                let mut total = S::zero();
                for &x in row {
                    let e = (x - max).exp();
                    total = total + e;
                    data.push(e);
                }
                for v in &mut data[start..] {
                    *v = *v / total;
                }
            }
            Tensor::from_parts_unchecked(a.shape().to_vec(), data)
        }
    })
}

fn transpose<S: Real>(a: &Tensor<S>) -> Tensor<S> {
    let (r, c) = (a.rows(), a.cols());
    let mut data = vec![S::zero(); r * c];
    for i in 0..r {
        for j in 0..c {
            data[j * r + i] = a.data()[i * c + j];
        }
    }
    matrix(c, r, data)
}

fn concat<S: Real>(parts: &[&Tensor<S>], axis: Axis) -> Result<Tensor<S>> {
    let first = parts[0];
    match axis {
        Axis::Rows => {
            let cols = first.cols();
            let mut rows = 0;
            let mut data = Vec::new();
            for p in parts {
                if p.cols() != cols {
                    return Err(mismatch("concat rows", first.shape(), p.shape()));
                }
                rows += p.rows();
                data.extend_from_slice(p.data());
            }
            Ok(matrix(rows, cols, data))
        }
        Axis::Cols => {
            let rows = first.rows();
            let mut cols = 0;
            for p in parts {
                if p.rows() != rows {
                    return Err(mismatch("concat cols", first.shape(), p.shape()));
                }
                cols += p.cols();
            }
            let mut data = Vec::with_capacity(rows * cols);
            for r in 0..rows {
                for p in parts {
                    data.extend_from_slice(p.row(r));
                }
            }
            Ok(matrix(rows, cols, data))
        }
    }
}

fn map2<S: Real>(a: &Tensor<S>, b: &Tensor<S>, f: impl Fn(S, S) -> S) -> Tensor<S> {
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_parts_unchecked(a.shape().to_vec(), data)
}

fn like<S: Real>(shape: &[usize], data: Vec<S>) -> Tensor<S> {
    Tensor::from_parts_unchecked(shape.to_vec(), data)
}

/// Per-input gradient contributions of one node.
fn backprop<'a, S: Real>(
    op: &Op,
    out: &Tensor<S>,
    g: &Tensor<S>,
    get: impl Fn(usize) -> &'a Tensor<S>,
) -> Vec<(usize, Tensor<S>)> {
    match *op {
        Op::Leaf { .. } => vec![],
        Op::MatMul(a, b) => {
            let (av, bv) = (get(a), get(b));
            let (m, k, n) = (av.rows(), av.cols(), bv.cols());
            let mut ga = vec![S::zero(); m * k];
            S::gemm(m, n, k, g.data(), false, bv.data(), true, &mut ga, false);
            let mut gb = vec![S::zero(); k * n];
            S::gemm(k, m, n, av.data(), true, g.data(), false, &mut gb, false);
            vec![(a, like(av.shape(), ga)), (b, like(bv.shape(), gb))]
        }
        Op::Add(a, b) => vec![(a, g.clone()), (b, g.clone())],
        Op::Sub(a, b) => vec![(a, g.clone()), (b, g.map(|x| -x))],
        Op::Mul(a, b) => {
            let (av, bv) = (get(a), get(b));
            vec![
                (a, map2(g, bv, |x, y| x * y)),
                (b, map2(g, av, |x, y| x * y)),
            ]
        }
        Op::AddRow(a, b) => {
            let bv = get(b);
            let cols = g.cols();
            let mut gb = vec![S::zero(); cols];
            for r in 0..g.rows() {
                for (acc, &x) in gb.iter_mut().zip(g.row(r)) {
                    *acc = *acc + x;
                }
            }
            vec![(a, g.clone()), (b, like(bv.shape(), gb))]
        }
        Op::Affine { input, scale, .. } => {
            let s = S::of(scale);
            vec![(input, g.map(|x| s * x))]
        }
        Op::Concat { ref inputs, axis } => {
            let mut result = Vec::with_capacity(inputs.len());
            let mut offset = 0;
            for &i in inputs {
                let v = get(i);
                let data = match axis {
                    Axis::Rows => {
                        let c = g.cols();
                        let d = g.data()[offset * c..(offset + v.rows()) * c].to_vec();
                        offset += v.rows();
                        d
                    }
                    Axis::Cols => {
                        let mut d = Vec::with_capacity(v.len());
                        for r in 0..g.rows() {
                            d.extend_from_slice(&g.row(r)[offset..offset + v.cols()]);
                        }
                        offset += v.cols();
                        d
                    }
                };
                result.push((i, like(v.shape(), data)));
            }
            result
        }
        Op::Slice {
            input, axis, start, ..
        } => {
            let v = get(input);
            let mut data = vec![S::zero(); v.len()];
            let c = v.cols();
            match axis {
                Axis::Rows => {
                    data[start * c..start * c + g.len()].copy_from_slice(g.data());
                }
                Axis::Cols => {
                    let w = g.cols();
                    for r in 0..g.rows() {
                        data[r * c + start..r * c + start + w].copy_from_slice(g.row(r));
                    }
                }
            }
            vec![(input, like(v.shape(), data))]
        }
        Op::Transpose(a) => {
            let t = transpose(g);
            vec![(a, like(get(a).shape(), t.into_data()))]
        }
        Op::Tanh(a) => vec![(a, map2(g, out, |gx, y| gx * (S::one() - y * y)))],
        Op::Sigmoid(a) => vec![(a, map2(g, out, |gx, y| gx * y * (S::one() - y)))],
        Op::Relu(a) => vec![(
            a,
            map2(
                g,
                get(a),
                |gx, x| if x > S::zero() { gx } else { S::zero() },
            ),
        )],
        Op::Exp(a) => vec![(a, map2(g, out, |gx, y| gx * y))],
        Op::Log { input, eps } => {
            let eps = S::of(eps);
            vec![(
                input,
                map2(
                    g,
                    get(input),
                    |gx, x| if x > eps { gx / x } else { S::zero() },
                ),
            )]
        }
        Op::Sqrt(a) => {
            let two = S::of(2.0);
            vec![(
                a,
                map2(g, out, |gx, y| {
                    if y > S::zero() {
                        gx / (two * y)
                    } else {
                        S::zero()
                    }
                }),
            )]
        }
        Op::Clamp { input, lo, hi } => {
            let (lo, hi) = (S::of(lo), S::of(hi));
            vec![(
                input,
                map2(g, get(input), |gx, x| {
                    if x >= lo && x <= hi {
                        gx
                    } else {
                        S::zero()
                    }
                }),
            )]
        }
        Op::Sum(a) => {
            let v = get(a);
            vec![(a, like(v.shape(), vec![g.data()[0]; v.len()]))]
        }
        Op::Mean(a) => {
            let v = get(a);
            let s = g.data()[0] / S::of(v.len() as f64);
            vec![(a, like(v.shape(), vec![s; v.len()]))]
        }
        Op::SquaredNorm(a) => {
            let s = g.data()[0] * S::of(2.0);
            vec![(a, get(a).map(|x| s * x))]
        }
        Op::RowSum(a) => {
            let v = get(a);
            let c = v.cols();
            let data = (0..v.len()).map(|i| g.data()[i / c]).collect();
            vec![(a, like(v.shape(), data))]
        }
        Op::SoftmaxRows(a) => {
            let c = out.cols();
            let mut data = Vec::with_capacity(out.len());
            for r in 0..out.rows() {
                let y = out.row(r);
                let gr = g.row(r);
                let dot: S = y.iter().zip(gr).map(|(&p, &q)| p * q).sum();
                data.extend(y.iter().zip(gr).map(|(&p, &q)| p * (q - dot)));
            }
            debug_assert_eq!(data.len(), out.rows() * c);
            vec![(a, like(get(a).shape(), data))]
        }
    }
}
