//! A per-example computation tape with reverse-mode gradients.
//!
//! Nodes are appended in evaluation order, so the node list is always a
//! topological order. Parameters are borrowed from the model. Only nodes that (transitively) depend on a parameter take part
//! in the backward sweep.

use std::borrow::Cow;
use std::collections::{BTreeMap, HashMap};

use rand::Rng;

use crate::error::{Error, Result};
use crate::tensor::{self, dot_slices, Mode, Tensor, PROB_FLOOR};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Gather { ids: Vec<usize> },
    Conv1d,
    Relu,
    Tanh,
    MaxPoolRows { argmax: Vec<usize> },
    Concat,
    Dropout { mask: Vec<f64> },
    MatMul,
    MatVec,
    Add,
    Dot,
    Softmax,
    CrossEntropy { label: usize },
    Select { index: usize },
    MaxOf { chosen: usize },
    Scale,
    AddN,
    Sum,
}

impl Op {
    fn tag(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Gather { .. } => "gather",
            Op::Conv1d => "conv1d",
            Op::Relu => "relu",
            Op::Tanh => "tanh",
            Op::MaxPoolRows { .. } => "max_pool",
            Op::Concat => "concat",
            Op::Dropout { .. } => "dropout",
            Op::MatMul => "matmul",
            Op::MatVec => "matvec",
            Op::Add => "add",
            Op::Dot => "dot",
            Op::Softmax => "softmax",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Select { .. } => "select",
            Op::MaxOf { .. } => "max_of",
            Op::Scale => "scale",
            Op::AddN => "add_n",
            Op::Sum => "sum",
        }
    }
}

struct Node<'a> {
    op: Op,
    inputs: Vec<NodeId>,
    value: Cow<'a, Tensor>,
    requires_grad: bool,
    is_param: bool,
}

/// Gradient of one parameter. Embedding tables receive gradients only on
/// the rows that were looked up, so those stay sparse.
#[derive(Clone, Debug)]
pub enum Grad {
    Dense(Tensor),
    Rows {
        shape: Vec<usize>,
        rows: BTreeMap<usize, Vec<f64>>,
    },
}

impl Grad {
    pub fn shape(&self) -> &[usize] {
        match self {
            Grad::Dense(t) => t.shape(),
            Grad::Rows { shape, .. } => shape,
        }
    }

    pub fn to_dense(&self) -> Tensor {
        match self {
            Grad::Dense(t) => t.clone(),
            Grad::Rows { shape, rows } => {
                let mut t = Tensor::zeros(shape);
                for (&r, vals) in rows {
                    t.row_mut(r).copy_from_slice(vals);
                }
                t
            }
        }
    }

    /// Adds this gradient into a dense accumulator of the same shape.
    pub fn accumulate_into(&self, acc: &mut Tensor) -> Result<()> {
        if acc.shape() != self.shape() {
            return Err(Error::shape("accumulate", acc.shape(), self.shape()));
        }
        match self {
            Grad::Dense(t) => acc.add_assign(t),
            Grad::Rows { rows, .. } => {
                for (&r, vals) in rows {
                    for (a, v) in acc.row_mut(r).iter_mut().zip(vals) {
                        *a += v;
                    }
                }
                Ok(())
            }
        }
    }
}

/// Gradients of a scalar loss with respect to every parameter node.
#[derive(Debug, Default)]
pub struct Gradients {
    by_param: HashMap<NodeId, Grad>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> Option<&Grad> {
        self.by_param.get(&id)
    }

    pub fn take(&mut self, id: NodeId) -> Option<Grad> {
        self.by_param.remove(&id)
    }

    pub fn dense(&self, id: NodeId) -> Option<Tensor> {
        self.get(id).map(Grad::to_dense)
    }

    pub fn len(&self) -> usize {
        self.by_param.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_param.is_empty()
    }
}

#[derive(Default)]
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn op_name(&self, id: NodeId) -> &'static str {
        self.nodes[id.0].op.tag()
    }

    pub fn inputs(&self, id: NodeId) -> &[NodeId] {
        &self.nodes[id.0].inputs
    }

    /// A trainable leaf borrowed from the caller.
    pub fn param(&mut self, value: &'a Tensor) -> NodeId {
        self.push_leaf(Cow::Borrowed(value), true)
    }

    /// A trainable leaf owned by the graph.
    pub fn param_owned(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(value), true)
    }

    /// A constant leaf borrowed from the caller (no gradient).
    pub fn constant(&mut self, value: &'a Tensor) -> NodeId {
        self.push_leaf(Cow::Borrowed(value), false)
    }

    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.push_leaf(Cow::Owned(value), false)
    }

    fn push_leaf(&mut self, value: Cow<'a, Tensor>, is_param: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            inputs: Vec::new(),
            value,
            requires_grad: is_param,
            is_param,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op, inputs: Vec<NodeId>, value: Tensor) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            op,
            inputs,
            value: Cow::Owned(value),
            requires_grad,
            is_param: false,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Rows `ids` of a `[V×d]` table, stacked into `[len(ids)×d]`.
    pub fn gather_rows(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if t.rank() != 2 {
            return Err(Error::Precondition("gather_rows needs a rank-2 table".into()));
        }
        if ids.is_empty() {
            return Err(Error::Precondition("gather_rows with no ids".into()));
        }
        let (rows, d) = (t.shape()[0], t.shape()[1]);
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            if id >= rows {
                return Err(Error::Index {
                    what: "token",
                    index: id,
                    len: rows,
                });
            }
            data.extend_from_slice(t.row(id));
        }
        let value = Tensor::new(vec![ids.len(), d], data)?;
        Ok(self.push(Op::Gather { ids: ids.to_vec() }, vec![table], value))
    }

    /// Bank convolution: instance `[n×d]`, filters `[m×h×d]`, bias `[m]`.
    pub fn conv1d(&mut self, instance: NodeId, filters: NodeId, bias: NodeId) -> Result<NodeId> {
        let value = tensor::conv1d_bank(self.value(instance), self.value(filters), self.value(bias))?;
        Ok(self.push(Op::Conv1d, vec![instance, filters, bias], value))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let value = tensor::relu(self.value(x));
        self.push(Op::Relu, vec![x], value)
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        let value = self.value(x).map(f64::tanh);
        self.push(Op::Tanh, vec![x], value)
    }

    /// 1-max pooling of each row of `[m×L]`, giving `[m]`.
    pub fn max_pool_rows(&mut self, x: NodeId) -> Result<NodeId> {
        let t = self.value(x);
        let (m, l) = match t.shape() {
            [l] => (1, *l),
            [m, l] => (*m, *l),
            s => return Err(Error::Precondition(format!("max_pool_rows on shape {s:?}"))),
        };
        let mut vals = Vec::with_capacity(m);
        let mut argmax = Vec::with_capacity(m);
        for k in 0..m {
            let (v, i) = tensor::max_pool_1(&t.data()[k * l..(k + 1) * l])?;
            vals.push(v);
            argmax.push(k * l + i);
        }
        let value = Tensor::vector(vals);
        Ok(self.push(Op::MaxPoolRows { argmax }, vec![x], value))
    }

    /// Flattens and concatenates the inputs in order.
    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Precondition("concat of nothing".into()));
        }
        let data: Vec<f64> = parts
            .iter()
            .flat_map(|&p| self.value(p).data().iter().copied())
            .collect();
        Ok(self.push(Op::Concat, parts.to_vec(), Tensor::vector(data)))
    }

    /// Inverted dropout; the identity in eval mode or at rate 0.
    pub fn dropout<R: Rng + ?Sized>(
        &mut self,
        x: NodeId,
        rate: f64,
        mode: Mode,
        rng: &mut R,
    ) -> Result<NodeId> {
        let Some(mask) = tensor::dropout_mask(self.value(x).len(), rate, mode, rng)? else {
            return Ok(x);
        };
        let src = self.value(x);
        let data = src.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let value = Tensor::new(src.shape().to_vec(), data)?;
        Ok(self.push(Op::Dropout { mask }, vec![x], value))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = tensor::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul, vec![a, b], value))
    }

    pub fn matvec(&mut self, w: NodeId, x: NodeId) -> Result<NodeId> {
        let value = tensor::matvec(self.value(w), self.value(x))?;
        Ok(self.push(Op::MatVec, vec![w, x], value))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b))?;
        Ok(self.push(Op::Add, vec![a, b], value))
    }

    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.len() != tb.len() {
            return Err(Error::shape("dot", ta.shape(), tb.shape()));
        }
        let value = Tensor::scalar(dot_slices(ta.data(), tb.data()));
        Ok(self.push(Op::Dot, vec![a, b], value))
    }

    pub fn softmax(&mut self, logits: NodeId) -> Result<NodeId> {
        let probs = tensor::softmax(self.value(logits).data())?;
        Ok(self.push(Op::Softmax, vec![logits], Tensor::vector(probs)))
    }

    pub fn cross_entropy(&mut self, probs: NodeId, label: usize) -> Result<NodeId> {
        let loss = tensor::cross_entropy(self.value(probs).data(), label)?;
        Ok(self.push(Op::CrossEntropy { label }, vec![probs], Tensor::scalar(loss)))
    }

    pub fn select(&mut self, x: NodeId, index: usize) -> Result<NodeId> {
        let t = self.value(x);
        let v = *t.data().get(index).ok_or(Error::Index {
            what: "element",
            index,
            len: t.len(),
        })?;
        Ok(self.push(Op::Select { index }, vec![x], Tensor::scalar(v)))
    }

    /// The larger of `x[i]` and `x[j]`; on a tie `x[i]` is chosen and the
    /// gradient flows only to the chosen element.
    pub fn max_of(&mut self, x: NodeId, i: usize, j: usize) -> Result<NodeId> {
        let t = self.value(x);
        let len = t.len();
        for idx in [i, j] {
            if idx >= len {
                return Err(Error::Index {
                    what: "element",
                    index: idx,
                    len,
                });
            }
        }
        let chosen = if t.data()[j] > t.data()[i] { j } else { i };
        let value = Tensor::scalar(t.data()[chosen]);
        Ok(self.push(Op::MaxOf { chosen }, vec![x], value))
    }

    /// `x · s` for a one-element node `s`.
    pub fn scale(&mut self, x: NodeId, s: NodeId) -> Result<NodeId> {
        let factor = self.value(s);
        if !factor.is_scalar() {
            return Err(Error::shape("scale", self.value(x).shape(), factor.shape()));
        }
        let f = factor.item();
        let value = self.value(x).map(|v| v * f);
        Ok(self.push(Op::Scale, vec![x, s], value))
    }

    /// Elementwise sum of equally shaped nodes.
    pub fn add_n(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let (&first, rest) = parts
            .split_first()
            .ok_or_else(|| Error::Precondition("add_n of nothing".into()))?;
        let mut value = self.value(first).clone();
        for &p in rest {
            value.add_assign(self.value(p))?;
        }
        Ok(self.push(Op::AddN, parts.to_vec(), value))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum, vec![x], value)
    }

    /// Reverse sweep from a scalar `loss`. Every parameter node gets an
    /// entry, zero when the loss does not depend on it.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let loss_value = self.value(loss);
        if !loss_value.is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_value.shape()
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        let mut row_grads: HashMap<usize, BTreeMap<usize, Vec<f64>>> = HashMap::new();
        if self.nodes[loss.0].requires_grad {
            grads[loss.0] = Some(vec![1.0]);
        }

        for idx in (0..n).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            self.backprop_node(node, &dy, &mut grads, &mut row_grads)?;
        }

        let mut by_param = HashMap::new();
        for (idx, node) in self.nodes.iter().enumerate() {
            if !node.is_param {
                continue;
            }
            let shape = node.value.shape().to_vec();
            let dense = grads.get_mut(idx).and_then(Option::take);
            let rows = row_grads.remove(&idx);
            let grad = match (dense, rows) {
                (Some(d), None) => Grad::Dense(Tensor::new(shape, d)?),
                (None, Some(rows)) => Grad::Rows { shape, rows },
                (Some(d), Some(rows)) => {
                    let mut t = Tensor::new(shape.clone(), d)?;
                    Grad::Rows { shape, rows }.accumulate_into(&mut t)?;
                    Grad::Dense(t)
                }
                (None, None) if shape.len() == 2 => Grad::Rows {
                    shape,
                    rows: BTreeMap::new(),
                },
                (None, None) => Grad::Dense(Tensor::zeros(&shape)),
            };
            by_param.insert(NodeId(idx), grad);
        }
        Ok(Gradients { by_param })
    }

    fn backprop_node(
        &self,
        node: &Node<'a>,
        dy: &[f64],
        grads: &mut [Option<Vec<f64>>],
        row_grads: &mut HashMap<usize, BTreeMap<usize, Vec<f64>>>,
    ) -> Result<()> {
        let wants = |i: usize| self.nodes[node.inputs[i].0].requires_grad;
        let val = |i: usize| self.value(node.inputs[i]);
        let y = node.value.data();

        match &node.op {
            Op::Leaf => {}
            Op::Gather { ids } => {
                let table = node.inputs[0];
                let d = val(0).shape()[1];
                if self.nodes[table.0].is_param {
                    let rows = row_grads.entry(table.0).or_default();
                    for (k, &id) in ids.iter().enumerate() {
                        let acc = rows.entry(id).or_insert_with(|| vec![0.0; d]);
                        for (a, g) in acc.iter_mut().zip(&dy[k * d..(k + 1) * d]) {
                            *a += g;
                        }
                    }
                } else {
                    let acc = slot(grads, table, val(0).len());
                    for (k, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            acc[id * d + c] += dy[k * d + c];
                        }
                    }
                }
            }
            Op::Conv1d => {
                let (x, w) = (val(0), val(1));
                let (n, d) = (x.shape()[0], x.shape()[1]);
                let (m, h) = (w.shape()[0], w.shape()[1]);
                let len = n - h + 1;
                let window = h * d;
                if wants(0) {
                    let acc = slot(grads, node.inputs[0], n * d);
                    for k in 0..m {
                        let wk = &w.data()[k * window..(k + 1) * window];
                        for j in 0..len {
                            let g = dy[k * len + j];
                            if g == 0.0 {
                                continue;
                            }
                            for (a, wv) in acc[j * d..j * d + window].iter_mut().zip(wk) {
                                *a += g * wv;
                            }
                        }
                    }
                }
                if wants(1) {
                    let acc = slot(grads, node.inputs[1], m * window);
                    for k in 0..m {
                        let ak = &mut acc[k * window..(k + 1) * window];
                        for j in 0..len {
                            let g = dy[k * len + j];
                            if g == 0.0 {
                                continue;
                            }
                            for (a, xv) in ak.iter_mut().zip(&x.data()[j * d..j * d + window]) {
                                *a += g * xv;
                            }
                        }
                    }
                }
                if wants(2) {
                    let acc = slot(grads, node.inputs[2], m);
                    for k in 0..m {
                        acc[k] += dy[k * len..(k + 1) * len].iter().sum::<f64>();
                    }
                }
            }
            Op::Relu => {
                let acc = slot(grads, node.inputs[0], y.len());
                for ((a, g), yv) in acc.iter_mut().zip(dy).zip(y) {
                    if *yv > 0.0 {
                        *a += g;
                    }
                }
            }
            Op::Tanh => {
                let acc = slot(grads, node.inputs[0], y.len());
                for ((a, g), yv) in acc.iter_mut().zip(dy).zip(y) {
                    *a += g * (1.0 - yv * yv);
                }
            }
            Op::MaxPoolRows { argmax } => {
                let acc = slot(grads, node.inputs[0], val(0).len());
                for (g, &pos) in dy.iter().zip(argmax) {
                    acc[pos] += g;
                }
            }
            Op::Concat => {
                let mut offset = 0;
                for (i, &input) in node.inputs.iter().enumerate() {
                    let len = val(i).len();
                    if wants(i) {
                        let acc = slot(grads, input, len);
                        for (a, g) in acc.iter_mut().zip(&dy[offset..offset + len]) {
                            *a += g;
                        }
                    }
                    offset += len;
                }
            }
            Op::Dropout { mask } => {
                let acc = slot(grads, node.inputs[0], y.len());
                for ((a, g), m) in acc.iter_mut().zip(dy).zip(mask) {
                    *a += g * m;
                }
            }
            Op::MatMul => {
                let (a, b) = (val(0), val(1));
                let (m, k, p) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                if wants(0) {
                    // dA = dY · Bᵀ
                    let acc = slot(grads, node.inputs[0], m * k);
                    for i in 0..m {
                        for t in 0..k {
                            acc[i * k + t] +=
                                dot_slices(&dy[i * p..(i + 1) * p], &b.data()[t * p..(t + 1) * p]);
                        }
                    }
                }
                if wants(1) {
                    // dB = Aᵀ · dY
                    let acc = slot(grads, node.inputs[1], k * p);
                    for i in 0..m {
                        for t in 0..k {
                            let av = a.data()[i * k + t];
                            for j in 0..p {
                                acc[t * p + j] += av * dy[i * p + j];
                            }
                        }
                    }
                }
            }
            Op::MatVec => {
                let (w, x) = (val(0), val(1));
                let cols = w.shape()[1];
                if wants(0) {
                    let acc = slot(grads, node.inputs[0], w.len());
                    for (i, g) in dy.iter().enumerate() {
                        for (a, xv) in acc[i * cols..(i + 1) * cols].iter_mut().zip(x.data()) {
                            *a += g * xv;
                        }
                    }
                }
                if wants(1) {
                    let acc = slot(grads, node.inputs[1], cols);
                    for (i, g) in dy.iter().enumerate() {
                        for (a, wv) in acc.iter_mut().zip(w.row(i)) {
                            *a += g * wv;
                        }
                    }
                }
            }
            Op::Add | Op::AddN => {
                for (i, &input) in node.inputs.iter().enumerate() {
                    if wants(i) {
                        let acc = slot(grads, input, dy.len());
                        for (a, g) in acc.iter_mut().zip(dy) {
                            *a += g;
                        }
                    }
                }
            }
            Op::Dot => {
                let g = dy[0];
                for (i, other) in [(0usize, 1usize), (1, 0)] {
                    if wants(i) {
                        let o = val(other);
                        let acc = slot(grads, node.inputs[i], o.len());
                        for (a, ov) in acc.iter_mut().zip(o.data()) {
                            *a += g * ov;
                        }
                    }
                }
            }
            Op::Softmax => {
                let inner = dot_slices(dy, y);
                let acc = slot(grads, node.inputs[0], y.len());
                for ((a, g), yv) in acc.iter_mut().zip(dy).zip(y) {
                    *a += yv * (g - inner);
                }
            }
            Op::CrossEntropy { label } => {
                let p = val(0).data()[*label];
                let acc = slot(grads, node.inputs[0], val(0).len());
                if p > PROB_FLOOR {
                    acc[*label] -= dy[0] / p;
                }
            }
            Op::Select { index } => {
                let acc = slot(grads, node.inputs[0], val(0).len());
                acc[*index] += dy[0];
            }
            Op::MaxOf { chosen } => {
                let acc = slot(grads, node.inputs[0], val(0).len());
                acc[*chosen] += dy[0];
            }
            Op::Scale => {
                let (x, s) = (val(0), val(1));
                if wants(0) {
                    let f = s.item();
                    let acc = slot(grads, node.inputs[0], x.len());
                    for (a, g) in acc.iter_mut().zip(dy) {
                        *a += g * f;
                    }
                }
                if wants(1) {
                    let acc = slot(grads, node.inputs[1], 1);
                    acc[0] += dot_slices(dy, x.data());
                }
            }
            Op::Sum => {
                let acc = slot(grads, node.inputs[0], val(0).len());
                for a in acc.iter_mut() {
                    *a += dy[0];
                }
            }
        }
        Ok(())
    }
}

fn slot(grads: &mut [Option<Vec<f64>>], id: NodeId, len: usize) -> &mut Vec<f64> {
    grads[id.0].get_or_insert_with(|| vec![0.0; len])
}
