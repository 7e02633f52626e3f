//! Dynamic reverse-mode tape.
//!
//! Every forward pass builds a fresh [`Tape`]; values are computed eagerly as primitives are
//! applied, and [`Tape::backward`] replays the recorded operations in reverse.

use std::collections::{BTreeMap, VecDeque};

use super::tensor::{pairwise_sq_dist, Tensor};
use crate::{Error, Result};

/// Graph handle of a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A primitive operation. Shape rules are listed per variant.
#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    /// `a: m×k`, `b: k×n` → `m×n`.
    MatMul,
    /// Elementwise; identical shapes.
    Add,
    /// `a: m×n` plus a length-`n` vector broadcast over rows.
    AddRow,
    Sub,
    Mul,
    /// Multiply by a constant.
    Scale(f64),
    /// Add a constant.
    AddScalar(f64),
    Square,
    Relu,
    Exp,
    Log,
    /// `x ln x`, with `0 ln 0 = 0`.
    XLogX,
    /// Sum of all entries → scalar.
    Sum,
    /// Mean of all entries → scalar.
    Mean,
    /// Softmax over the last axis.
    Softmax,
    /// Log-softmax over the last axis.
    LogSoftmax,
    /// Max-stabilized log-sum-exp over the last axis; the last axis is removed.
    LogSumExp,
    /// `a: n×d`, `b: k×d` → `n×k` squared Euclidean distances.
    PairwiseSqDist,
    /// Copies values and severs the gradient path.
    Detach,
    /// `(z, q)` → values of `q`, gradient copied to `z`, none to `q`. Equivalent to
    /// `z + detach(q − z)` but bitwise equal to `q` in the forward pass.
    StraightThrough,
    /// Gathers rows (first-axis slices) by index.
    IndexSelect(Vec<usize>),
    Reshape(Vec<usize>),
}

impl Primitive {
    fn name(&self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::AddRow => "add_row",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale(_) => "scale",
            Primitive::AddScalar(_) => "add_scalar",
            Primitive::Square => "square",
            Primitive::Relu => "relu",
            Primitive::Exp => "exp",
            Primitive::Log => "log",
            Primitive::XLogX => "xlogx",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::Softmax => "softmax",
            Primitive::LogSoftmax => "log_softmax",
            Primitive::LogSumExp => "logsumexp",
            Primitive::PairwiseSqDist => "pairwise_sq_dist",
            Primitive::Detach => "detach",
            Primitive::StraightThrough => "straight_through",
            Primitive::IndexSelect(_) => "index_select",
            Primitive::Reshape(_) => "reshape",
        }
    }

    fn arity(&self) -> usize {
        match self {
            Primitive::MatMul
            | Primitive::Add
            | Primitive::AddRow
            | Primitive::Sub
            | Primitive::Mul
            | Primitive::PairwiseSqDist
            | Primitive::StraightThrough => 2,
            _ => 1,
        }
    }
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Option<(Primitive, Vec<NodeId>)>,
    requires_grad: bool,
}

/// How stop-gradient primitives produce their forward values.
///
/// Finite-difference checks of a straight-through or stop-gradient objective must hold the
/// detached quantities at their base-point values; `Record` captures them and `Replay` feeds
/// them back in creation order.
#[derive(Debug, Default)]
enum Frozen {
    #[default]
    Off,
    Record(Vec<Tensor>),
    Replay(VecDeque<Tensor>),
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    frozen: Frozen,
}

/// Gradients of a scalar loss keyed by leaf handle.
#[derive(Debug, Clone, Default)]
pub struct GradientMap {
    grads: BTreeMap<NodeId, Tensor>,
}

impl GradientMap {
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(&id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&NodeId, &Tensor)> {
        self.grads.iter()
    }

    /// Gradients for `ids` in order; a missing entry is an error naming its position.
    pub fn collect(&self, ids: &[NodeId]) -> Result<Vec<Tensor>> {
        ids.iter()
            .enumerate()
            .map(|(i, id)| self.grads.get(id).cloned().ok_or(Error::MissingGradient(i)))
            .collect()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub(crate) fn recording() -> Self {
        Self {
            nodes: Vec::new(),
            frozen: Frozen::Record(Vec::new()),
        }
    }

    pub(crate) fn replaying(values: Vec<Tensor>) -> Self {
        Self {
            nodes: Vec::new(),
            frozen: Frozen::Replay(values.into()),
        }
    }

    pub(crate) fn take_recorded(&mut self) -> Vec<Tensor> {
        match std::mem::take(&mut self.frozen) {
            Frozen::Record(v) => v,
            _ => Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records an input tensor. Non-finite inputs are rejected.
    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Result<NodeId> {
        if !value.is_finite() {
            return Err(Error::NonFinite("leaf"));
        }
        Ok(self.push(value, None, requires_grad))
    }

    pub fn constant(&mut self, value: Tensor) -> Result<NodeId> {
        self.leaf(value, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn push(&mut self, value: Tensor, op: Option<(Primitive, Vec<NodeId>)>, rg: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad: rg,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Applies `kind` to `inputs`, recording a graph edge when any input requires a gradient.
    pub fn apply(&mut self, kind: Primitive, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.len() != kind.arity() {
            return Err(Error::shape(
                kind.name(),
                format!("expected {} inputs, got {}", kind.arity(), inputs.len()),
            ));
        }
        let value = self.forward(&kind, inputs)?;
        if !value.is_finite() {
            return Err(Error::NonFinite(kind.name()));
        }
        let rg = match kind {
            Primitive::Detach => false,
            Primitive::StraightThrough => self.nodes[inputs[0].0].requires_grad,
            _ => inputs.iter().any(|i| self.nodes[i.0].requires_grad),
        };
        Ok(self.push(value, Some((kind, inputs.to_vec())), rg))
    }

    fn forward(&mut self, kind: &Primitive, inputs: &[NodeId]) -> Result<Tensor> {
        let a = &self.nodes[inputs[0].0].value;
        let b = inputs.get(1).map(|i| &self.nodes[i.0].value);
        let name = kind.name();
        let out = match kind {
            Primitive::MatMul => {
                let b = b.expect("arity checked");
                let (m, k, n) = matmul_dims(a, b)?;
                Tensor::new(vec![m, n], matmul(a.data(), b.data(), m, k, n))?
            }
            Primitive::Add | Primitive::Sub | Primitive::Mul => {
                let b = b.expect("arity checked");
                same_shape(name, a, b)?;
                let f: fn(f64, f64) -> f64 = match kind {
                    Primitive::Add => |x, y| x + y,
                    Primitive::Sub => |x, y| x - y,
                    _ => |x, y| x * y,
                };
                let data = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect();
                Tensor::new(a.shape().to_vec(), data)?
            }
            Primitive::AddRow => {
                let b = b.expect("arity checked");
                let n = last_dim(a);
                if a.shape().len() != 2 || b.numel() != n || b.shape().len() != 1 {
                    return Err(Error::shape(
                        name,
                        format!("{:?} + row {:?}", a.shape(), b.shape()),
                    ));
                }
                let mut data = a.data().to_vec();
                for row in data.chunks_mut(n) {
                    for (x, y) in row.iter_mut().zip(b.data()) {
                        *x += y;
                    }
                }
                Tensor::new(a.shape().to_vec(), data)?
            }
            Primitive::Scale(c) => map(a, |x| c * x),
            Primitive::AddScalar(c) => map(a, |x| x + c),
            Primitive::Square => map(a, |x| x * x),
            Primitive::Relu => map(a, |x| x.max(0.0)),
            Primitive::Exp => map(a, f64::exp),
            Primitive::Log => map(a, f64::ln),
            Primitive::XLogX => map(a, |x| if x == 0.0 { 0.0 } else { x * x.ln() }),
            Primitive::Sum => Tensor::scalar(a.data().iter().sum()),
            Primitive::Mean => Tensor::scalar(a.data().iter().sum::<f64>() / a.numel() as f64),
            Primitive::Softmax | Primitive::LogSoftmax => {
                let n = last_dim(a);
                let mut data = Vec::with_capacity(a.numel());
                for row in a.data().chunks(n) {
                    let lse = logsumexp(row);
                    if matches!(kind, Primitive::Softmax) {
                        data.extend(row.iter().map(|x| (x - lse).exp()));
                    } else {
                        data.extend(row.iter().map(|x| x - lse));
                    }
                }
                Tensor::new(a.shape().to_vec(), data)?
            }
            Primitive::LogSumExp => {
                let n = last_dim(a);
                let data = a.data().chunks(n).map(logsumexp).collect();
                Tensor::new(
                    a.shape()[..a.shape().len().saturating_sub(1)].to_vec(),
                    data,
                )?
            }
            Primitive::PairwiseSqDist => {
                let b = b.expect("arity checked");
                if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[1] {
                    return Err(Error::shape(
                        name,
                        format!("{:?} vs {:?}", a.shape(), b.shape()),
                    ));
                }
                let d = a.shape()[1];
                let data = pairwise_sq_dist(a.data(), b.data(), d);
                Tensor::new(vec![a.shape()[0], b.shape()[0]], data)?
            }
            Primitive::Detach => {
                let base = a.clone();
                match &mut self.frozen {
                    Frozen::Off => base,
                    Frozen::Record(log) => {
                        log.push(base.clone());
                        base
                    }
                    Frozen::Replay(queue) => pop_frozen(queue, base.shape())?,
                }
            }
            Primitive::StraightThrough => {
                let q = b.expect("arity checked");
                same_shape(name, a, q)?;
                match &mut self.frozen {
                    Frozen::Off => q.clone(),
                    Frozen::Record(log) => {
                        let offset = q.data().iter().zip(a.data()).map(|(q, z)| q - z).collect();
                        log.push(Tensor::new(a.shape().to_vec(), offset)?);
                        q.clone()
                    }
                    Frozen::Replay(queue) => {
                        let z = a.clone();
                        let offset = pop_frozen(queue, z.shape())?;
                        let data = z
                            .data()
                            .iter()
                            .zip(offset.data())
                            .map(|(z, o)| z + o)
                            .collect();
                        Tensor::new(z.shape().to_vec(), data)?
                    }
                }
            }
            Primitive::IndexSelect(idx) => {
                if a.shape().is_empty() {
                    return Err(Error::shape(name, "cannot index a scalar"));
                }
                let rows = a.shape()[0];
                let w = a.row_len();
                let mut data = Vec::with_capacity(idx.len() * w);
                for &i in idx {
                    if i >= rows {
                        return Err(Error::shape(name, format!("index {i} ≥ {rows}")));
                    }
                    data.extend_from_slice(a.row(i));
                }
                let mut shape = a.shape().to_vec();
                shape[0] = idx.len();
                Tensor::new(shape, data)?
            }
            Primitive::Reshape(shape) => a
                .reshape(shape)
                .map_err(|_| Error::shape(name, format!("{:?} → {shape:?}", a.shape())))?,
        };
        Ok(out)
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// Returns a gradient for every leaf that requires one; leaves the loss does not depend on
    /// (including those reached only through `Detach`) get zeros.
    pub fn backward(&self, loss: NodeId) -> Result<GradientMap> {
        let lv = &self.nodes[loss.0].value;
        if lv.numel() != 1 {
            return Err(Error::NotScalar(lv.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some((kind, inputs)) = &node.op else {
                continue;
            };
            let Some(g) = grads[id].take() else {
                continue;
            };
            let contributions = self.vjp(kind, inputs, &node.value, &g);
            for (input, contrib) in inputs.iter().zip(contributions) {
                let Some(c) = contrib else { continue };
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut grads[input.0] {
                    Some(acc) => acc.iter_mut().zip(&c).for_each(|(a, c)| *a += c),
                    slot @ None => *slot = Some(c),
                }
            }
            // Keep leaf gradients; interior ones were taken above.
        }
        let mut out = BTreeMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op.is_none() && node.requires_grad {
                let g = grads.get_mut(i).and_then(Option::take);
                let t = match g {
                    Some(g) => Tensor::new(node.value.shape().to_vec(), g)?,
                    None => Tensor::zeros(node.value.shape()),
                };
                out.insert(NodeId(i), t);
            }
        }
        Ok(GradientMap { grads: out })
    }

    fn vjp(
        &self,
        kind: &Primitive,
        inputs: &[NodeId],
        out: &Tensor,
        g: &[f64],
    ) -> Vec<Option<Vec<f64>>> {
        let a = &self.nodes[inputs[0].0].value;
        let b = inputs.get(1).map(|i| &self.nodes[i.0].value);
        let need_b = inputs.get(1).is_some_and(|i| self.nodes[i.0].requires_grad);
        let elementwise = |f: &dyn Fn(usize) -> f64| (0..g.len()).map(f).collect::<Vec<f64>>();
        match kind {
            Primitive::MatMul => {
                let b = b.expect("arity");
                let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
                // dA = G Bᵀ
                let mut da = vec![0.0; m * k];
                for i in 0..m {
                    let gi = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let bp = &b.data()[p * n..(p + 1) * n];
                        da[i * k + p] = gi.iter().zip(bp).map(|(x, y)| x * y).sum();
                    }
                }
                // dB = Aᵀ G
                let db = need_b.then(|| {
                    let mut db = vec![0.0; k * n];
                    for i in 0..m {
                        let gi = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let aip = a.data()[i * k + p];
                            if aip == 0.0 {
                                continue;
                            }
                            let row = &mut db[p * n..(p + 1) * n];
                            row.iter_mut().zip(gi).for_each(|(d, x)| *d += aip * x);
                        }
                    }
                    db
                });
                vec![Some(da), db]
            }
            Primitive::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Primitive::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|x| -x).collect())],
            Primitive::Mul => {
                let b = b.expect("arity");
                let da = elementwise(&|i| g[i] * b.data()[i]);
                let db = elementwise(&|i| g[i] * a.data()[i]);
                vec![Some(da), Some(db)]
            }
            Primitive::AddRow => {
                let n = last_dim(a);
                let mut db = vec![0.0; n];
                for row in g.chunks(n) {
                    db.iter_mut().zip(row).for_each(|(d, x)| *d += x);
                }
                vec![Some(g.to_vec()), Some(db)]
            }
            Primitive::Scale(c) => vec![Some(g.iter().map(|x| c * x).collect())],
            Primitive::AddScalar(_) | Primitive::Reshape(_) => vec![Some(g.to_vec())],
            Primitive::Square => vec![Some(elementwise(&|i| 2.0 * a.data()[i] * g[i]))],
            Primitive::Relu => vec![Some(elementwise(&|i| {
                if a.data()[i] > 0.0 {
                    g[i]
                } else {
                    0.0
                }
            }))],
            Primitive::Exp => vec![Some(elementwise(&|i| out.data()[i] * g[i]))],
            Primitive::Log => vec![Some(elementwise(&|i| g[i] / a.data()[i]))],
            Primitive::XLogX => vec![Some(elementwise(&|i| {
                let x = a.data()[i];
                if x > 0.0 {
                    g[i] * (x.ln() + 1.0)
                } else {
                    0.0
                }
            }))],
            Primitive::Sum => vec![Some(vec![g[0]; a.numel()])],
            Primitive::Mean => vec![Some(vec![g[0] / a.numel() as f64; a.numel()])],
            Primitive::Softmax => {
                let n = last_dim(a);
                let mut da = Vec::with_capacity(a.numel());
                for (y, gy) in out.data().chunks(n).zip(g.chunks(n)) {
                    let dot: f64 = y.iter().zip(gy).map(|(y, g)| y * g).sum();
                    da.extend(y.iter().zip(gy).map(|(y, g)| y * (g - dot)));
                }
                vec![Some(da)]
            }
            Primitive::LogSoftmax => {
                let n = last_dim(a);
                let mut da = Vec::with_capacity(a.numel());
                for (ly, gy) in out.data().chunks(n).zip(g.chunks(n)) {
                    let total: f64 = gy.iter().sum();
                    da.extend(ly.iter().zip(gy).map(|(l, g)| g - l.exp() * total));
                }
                vec![Some(da)]
            }
            Primitive::LogSumExp => {
                let n = last_dim(a);
                let mut da = Vec::with_capacity(a.numel());
                for ((row, lse), gi) in a.data().chunks(n).zip(out.data()).zip(g) {
                    da.extend(row.iter().map(|x| gi * (x - lse).exp()));
                }
                vec![Some(da)]
            }
            Primitive::PairwiseSqDist => {
                let b = b.expect("arity");
                let (n, d) = (a.shape()[0], a.shape()[1]);
                let k = b.shape()[0];
                let mut da = vec![0.0; n * d];
                let mut db = vec![0.0; k * d];
                for i in 0..n {
                    let ai = &a.data()[i * d..(i + 1) * d];
                    for j in 0..k {
                        let gij = g[i * k + j];
                        // Clamped entries are constant.
                        if gij == 0.0 || out.data()[i * k + j] == 0.0 {
                            continue;
                        }
                        let bj = &b.data()[j * d..(j + 1) * d];
                        for t in 0..d {
                            let diff = 2.0 * gij * (ai[t] - bj[t]);
                            da[i * d + t] += diff;
                            db[j * d + t] -= diff;
                        }
                    }
                }
                vec![Some(da), Some(db)]
            }
            Primitive::Detach => vec![None],
            Primitive::StraightThrough => vec![Some(g.to_vec()), None],
            Primitive::IndexSelect(idx) => {
                let w = a.row_len();
                let mut da = vec![0.0; a.numel()];
                for (r, &i) in idx.iter().enumerate() {
                    let src = &g[r * w..(r + 1) * w];
                    da[i * w..(i + 1) * w]
                        .iter_mut()
                        .zip(src)
                        .for_each(|(d, s)| *d += s);
                }
                vec![Some(da)]
            }
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::MatMul, &[a, b])
    }
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Add, &[a, b])
    }
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        self.apply(Primitive::AddRow, &[a, row])
    }
    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sub, &[a, b])
    }
    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mul, &[a, b])
    }
    pub fn scale(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Primitive::Scale(c), &[a])
    }
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> Result<NodeId> {
        self.apply(Primitive::AddScalar(c), &[a])
    }
    pub fn square(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Square, &[a])
    }
    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Relu, &[a])
    }
    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Exp, &[a])
    }
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Log, &[a])
    }
    pub fn xlogx(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::XLogX, &[a])
    }
    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Sum, &[a])
    }
    pub fn mean(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Mean, &[a])
    }
    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Softmax, &[a])
    }
    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::LogSoftmax, &[a])
    }
    pub fn logsumexp(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::LogSumExp, &[a])
    }
    pub fn pairwise_sq_dist(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.apply(Primitive::PairwiseSqDist, &[a, b])
    }
    pub fn detach(&mut self, a: NodeId) -> Result<NodeId> {
        self.apply(Primitive::Detach, &[a])
    }
    pub fn straight_through(&mut self, latent: NodeId, quantized: NodeId) -> Result<NodeId> {
        self.apply(Primitive::StraightThrough, &[latent, quantized])
    }
    pub fn index_select(&mut self, a: NodeId, indices: Vec<usize>) -> Result<NodeId> {
        self.apply(Primitive::IndexSelect(indices), &[a])
    }
    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        self.apply(Primitive::Reshape(shape.to_vec()), &[a])
    }
}

fn pop_frozen(queue: &mut VecDeque<Tensor>, shape: &[usize]) -> Result<Tensor> {
    let v = queue
        .pop_front()
        .ok_or_else(|| Error::shape("replay", "frozen value queue exhausted"))?;
    if v.shape() != shape {
        return Err(Error::shape(
            "replay",
            format!("{:?} vs {shape:?}", v.shape()),
        ));
    }
    Ok(v)
}

fn map(a: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::new(a.shape().to_vec(), a.data().iter().map(|&x| f(x)).collect()).expect("same shape")
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn last_dim(a: &Tensor) -> usize {
    a.shape().last().copied().unwrap_or(1)
}

fn matmul_dims(a: &Tensor, b: &Tensor) -> Result<(usize, usize, usize)> {
    match (a.shape(), b.shape()) {
        ([m, k], [k2, n]) if k == k2 => Ok((*m, *k, *n)),
        (sa, sb) => Err(Error::shape("matmul", format!("{sa:?} × {sb:?}"))),
    }
}

pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let bp = &b[p * n..(p + 1) * n];
            row.iter_mut().zip(bp).for_each(|(o, x)| *o += aip * x);
        }
    }
    out
}

/// Max-stabilized `ln Σ exp(x)`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn relu_values() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![-1.0, 0.0, 2.0])).unwrap();
        let y = t.relu(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn matmul_identity() {
        let mut t = Tape::new();
        let a = Tensor::from_rows(&[vec![1.0, 2.0, 3.0], vec![-4.0, 0.5, 6.0]]).unwrap();
        let av = t.constant(a.clone()).unwrap();
        let i = t.constant(Tensor::identity(3)).unwrap();
        let y = t.matmul(av, i).unwrap();
        assert_eq!(t.value(y), &a);
    }

    #[test]
    fn softmax_symmetric() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![0.0, 0.0])).unwrap();
        let y = t.softmax(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, 0.5]);
    }

    #[test]
    fn square_grad() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::scalar(3.0), true).unwrap();
        let y = t.square(x).unwrap();
        let g = t.backward(y).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn detached_factor_is_constant() {
        let mut t = Tape::new();
        let xv = vec![0.3, -1.2, 2.0];
        let x = t.leaf(Tensor::vector(xv.clone()), true).unwrap();
        let d = t.detach(x).unwrap();
        let p = t.mul(d, x).unwrap();
        let s = t.sum(p).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), xv.as_slice());
    }

    #[test]
    fn detach_only_path_gives_zero_grad() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true).unwrap();
        let d = t.detach(x).unwrap();
        assert_eq!(t.value(d), t.value(x));
        let s = t.sum(d).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]), true).unwrap();
        assert!(matches!(t.backward(x), Err(Error::NotScalar(_))));
    }

    #[test]
    fn shape_mismatch_and_non_finite_are_errors() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::zeros(&[2, 3])).unwrap();
        let b = t.constant(Tensor::zeros(&[2, 3])).unwrap();
        assert!(matches!(t.matmul(a, b), Err(Error::Shape { .. })));
        let z = t.constant(Tensor::vector(vec![0.0])).unwrap();
        assert!(matches!(t.log(z), Err(Error::NonFinite("log"))));
        assert!(t.leaf(Tensor::scalar(f64::NAN), true).is_err());
    }

    #[test]
    fn logsumexp_is_stable() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::vector(vec![1000.0, 1000.0])).unwrap();
        let y = t.logsumexp(x).unwrap();
        approx(t.value(y).data(), &[1000.0 + 2f64.ln()], 1e-9);
        assert!(t.value(y).shape().is_empty());
    }

    #[test]
    fn straight_through_forward_is_quantized_value() {
        let mut t = Tape::new();
        let z = t.leaf(Tensor::vector(vec![0.1, 0.7]), true).unwrap();
        let q = t.constant(Tensor::vector(vec![0.3, -0.2])).unwrap();
        let st = t.straight_through(z, q).unwrap();
        assert_eq!(t.value(st), t.value(q));
        let s = t.sum(st).unwrap();
        let g = t.backward(s).unwrap();
        assert_eq!(g.get(z).unwrap().data(), &[1.0, 1.0]);
    }

    #[test]
    fn index_select_scatters_gradient() {
        let mut t = Tape::new();
        let a = t
            .leaf(
                Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap(),
                true,
            )
            .unwrap();
        let s = t.index_select(a, vec![1, 1, 0]).unwrap();
        assert_eq!(t.value(s).data(), &[3.0, 4.0, 3.0, 4.0, 1.0, 2.0]);
        let l = t.sum(s).unwrap();
        let g = t.backward(l).unwrap();
        assert_eq!(g.get(a).unwrap().data(), &[1.0, 1.0, 2.0, 2.0]);
    }
}
