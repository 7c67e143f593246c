//! Tape-based reverse-mode differentiation.
//!
//! Every op evaluates eagerly as it is recorded. [`Graph::backward`] walks
//! the tape in reverse and returns one gradient per parameter touched by
//! the loss.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::kernels::{attention_heads, gemm, layer_norm_row, AttentionSpec};
use super::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
}

/// Named trainable tensors, in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    by_name: HashMap<String, ParamId>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        let id = ParamId(self.params.len());
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        id
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter> {
        self.params.iter_mut()
    }

    /// Total scalar count across all parameters.
    pub fn num_values(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (p, g) in self.params.iter_mut().zip(&grads.0) {
            if let Some(g) = g {
                p.grad.add_assign(g);
            }
        }
    }
}

/// Per-parameter gradients from one backward pass; `None` where the loss
/// does not depend on the parameter.
#[derive(Clone, Debug, Default)]
pub struct Gradients(Vec<Option<Tensor>>);

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.0.get(id.0).and_then(Option::as_ref)
    }

    /// Dense copy, zeros where absent.
    pub fn to_dense(&self, params: &ParamSet) -> Vec<Tensor> {
        params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                self.0
                    .get(i)
                    .and_then(Option::clone)
                    .unwrap_or_else(|| Tensor::zeros(p.value.shape()))
            })
            .collect()
    }

    pub fn add(&mut self, other: &Gradients) {
        if self.0.len() < other.0.len() {
            self.0.resize(other.0.len(), None);
        }
        for (mine, theirs) in self.0.iter_mut().zip(&other.0) {
            match (mine.as_mut(), theirs) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *mine = Some(b.clone()),
                _ => {}
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBias(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Dropout(Var, Vec<f64>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        spec: AttentionSpec,
        weights: Vec<f64>,
    },
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    PlaceRows {
        base: Var,
        row: Var,
        at: Vec<usize>,
    },
    SoftmaxXent {
        logits: Var,
        targets: Tensor,
        probs: Vec<f64>,
        norm: f64,
    },
    CosineLoss {
        pred: Var,
        target: Tensor,
        cos: Vec<f64>,
        denom: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    op: Op,
    value: Option<Tensor>,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p ParamSet,
    nodes: Vec<Node>,
    param_vars: HashMap<ParamId, Var>,
    dropout_rng: Option<ChaCha8Rng>,
}

impl<'p> Graph<'p> {
    /// Inference graph: dropout is the identity.
    pub fn new(params: &'p ParamSet) -> Self {
        Graph {
            params,
            nodes: Vec::new(),
            param_vars: HashMap::new(),
            dropout_rng: None,
        }
    }

    /// Training graph: dropout masks are drawn from `rng`.
    pub fn training(params: &'p ParamSet, rng: ChaCha8Rng) -> Self {
        Graph {
            dropout_rng: Some(rng),
            ..Graph::new(params)
        }
    }

    pub fn is_training(&self) -> bool {
        self.dropout_rng.is_some()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor {
        let node = &self.nodes[v.0];
        match node.op {
            Op::Param(id) => &self.params.get(id).value,
            _ => node.value.as_ref().expect("non-parameter nodes carry values"),
        }
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data()[0]
    }

    /// Attention weights recorded by an attention node, laid out as
    /// `[seq][head][q_len][k_len]`.
    pub fn attention_weights(&self, v: Var) -> Option<(&AttentionSpec, &[f64])> {
        match &self.nodes[v.0].op {
            Op::Attention { spec, weights, .. } => Some((spec, weights)),
            _ => None,
        }
    }

    fn push(&mut self, op: Op, value: Tensor, inputs: &[Var]) -> Var {
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            value: Some(value),
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.nodes.push(Node {
            op: Op::Constant,
            value: Some(t),
            needs_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_vars.get(&id) {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
            needs_grad: true,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = super::kernels::matmul(self.value(a), self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), out, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("add {:?} + {:?}", x.shape(), y.shape())));
        }
        let mut out = x.clone();
        out.add_assign(y);
        Ok(self.push(Op::Add(a, b), out, &[a, b]))
    }

    /// Adds a `1 × cols` (or length-`cols`) bias to every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (xv, bv) = (self.value(x), self.value(bias));
        if bv.len() != xv.cols() {
            return Err(Error::shape(format!("bias {:?} for {:?}", bv.shape(), xv.shape())));
        }
        let mut out = xv.clone();
        let c = out.cols();
        for row in out.data_mut().chunks_mut(c) {
            for (o, b) in row.iter_mut().zip(bv.data()) {
                *o += b;
            }
        }
        Ok(self.push(Op::AddBias(x, bias), out, &[x, bias]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (x, y) = (self.value(a), self.value(b));
        if x.shape() != y.shape() {
            return Err(Error::shape(format!("mul {:?} * {:?}", x.shape(), y.shape())));
        }
        let data = x.data().iter().zip(y.data()).map(|(p, q)| p * q).collect();
        let out = Tensor::new(x.shape(), data)?;
        Ok(self.push(Op::Mul(a, b), out, &[a, b]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).map(|x| x * s);
        self.push(Op::Scale(a, s), out, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(Op::Relu(a), out, &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| 1.0 / (1.0 + (-x).exp()));
        self.push(Op::Sigmoid(a), out, &[a])
    }

    /// Inverted dropout; the identity on inference graphs or when `p == 0`.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 || self.dropout_rng.is_none() {
            return a;
        }
        let keep = 1.0 - p;
        let n = self.value(a).len();
        let rng = self.dropout_rng.as_mut().expect("checked above");
        let mask: Vec<f64> = (0..n)
            .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let x = self.value(a);
        let data = x.data().iter().zip(&mask).map(|(v, m)| v * m).collect();
        let out = Tensor::new(x.shape(), data).expect("same shape");
        self.push(Op::Dropout(a, mask), out, &[a])
    }

    /// Row-wise layer normalization with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (xv, g, b) = (self.value(x), self.value(gain), self.value(bias));
        let c = xv.cols();
        if c < 2 || g.len() != c || b.len() != c {
            return Err(Error::shape(format!("layer_norm width {c}, gain {}, bias {}", g.len(), b.len())));
        }
        let mut out = vec![0.0; xv.len()];
        let mut xhat = vec![0.0; xv.len()];
        let mut rstd = Vec::with_capacity(xv.rows());
        for r in 0..xv.rows() {
            let span = r * c..(r + 1) * c;
            rstd.push(layer_norm_row(
                xv.row(r),
                g.data(),
                b.data(),
                &mut out[span.clone()],
                &mut xhat[span],
            ));
        }
        let out = Tensor::new(xv.shape(), out)?;
        Ok(self.push(Op::LayerNorm { x, gain, bias, xhat, rstd }, out, &[x, gain, bias]))
    }

    /// Batched multi-head scaled dot-product attention over already
    /// projected queries, keys and values.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, spec: AttentionSpec) -> Result<Var> {
        let (out, weights) = attention_heads(self.value(q), self.value(k), self.value(v), &spec)?;
        let shape = [self.value(q).rows(), self.value(q).cols()];
        let out = Tensor::new(&shape, out)?;
        Ok(self.push(Op::Attention { q, k, v, spec, weights }, out, &[q, k, v]))
    }

    /// Selects rows of `table`.
    pub fn gather(&mut self, table: Var, ids: Vec<usize>) -> Result<Var> {
        let t = self.value(table);
        if let Some(&bad) = ids.iter().find(|&&i| i >= t.rows()) {
            return Err(Error::Index { index: bad, size: t.rows() });
        }
        let c = t.cols();
        let mut data = Vec::with_capacity(ids.len() * c);
        for &i in &ids {
            data.extend_from_slice(t.row(i));
        }
        let out = Tensor::matrix(ids.len(), c, data)?;
        Ok(self.push(Op::Gather { table, ids }, out, &[table]))
    }

    /// `base` with the single row vector `row` added at each row index in `at`.
    pub fn place_rows(&mut self, base: Var, row: Var, at: Vec<usize>) -> Result<Var> {
        let (bv, rv) = (self.value(base), self.value(row));
        if rv.len() != bv.cols() {
            return Err(Error::shape(format!("row {:?} into {:?}", rv.shape(), bv.shape())));
        }
        if let Some(&bad) = at.iter().find(|&&i| i >= bv.rows()) {
            return Err(Error::Index { index: bad, size: bv.rows() });
        }
        let mut out = bv.clone();
        for &r in &at {
            for (o, x) in out.row_mut(r).iter_mut().zip(rv.data()) {
                *o += x;
            }
        }
        Ok(self.push(Op::PlaceRows { base, row, at }, out, &[base, row]))
    }

    /// Cross-entropy of row-wise softmax against non-negative target
    /// weights, summed and divided by `norm`.
    pub fn softmax_cross_entropy(&mut self, logits: Var, targets: Tensor, norm: f64) -> Result<Var> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(Error::shape(format!("logits {:?} vs targets {:?}", z.shape(), targets.shape())));
        }
        if !(norm > 0.0) {
            return Err(Error::param("cross-entropy normalizer must be positive"));
        }
        let c = z.cols();
        let mut probs = vec![0.0; z.len()];
        let mut loss = 0.0;
        for r in 0..z.rows() {
            let zr = z.row(r);
            let tr = targets.row(r);
            let max = zr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = zr.iter().map(|x| (x - max).exp()).sum();
            let lse = max + sum.ln();
            let p = &mut probs[r * c..(r + 1) * c];
            for j in 0..c {
                p[j] = (zr[j] - lse).exp();
                loss += tr[j] * (lse - zr[j]);
            }
        }
        let out = Tensor::scalar(loss / norm);
        Ok(self.push(Op::SoftmaxXent { logits, targets, probs, norm }, out, &[logits]))
    }

    /// Mean over rows of `1 - cos(pred_r, target_r)`.
    pub fn cosine_loss(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        let p = self.value(pred);
        if p.shape() != target.shape() {
            return Err(Error::shape(format!("pred {:?} vs target {:?}", p.shape(), target.shape())));
        }
        let rows = p.rows();
        if rows == 0 {
            return Err(Error::shape("cosine loss over zero rows"));
        }
        let mut cos = Vec::with_capacity(rows);
        let mut denom = Vec::with_capacity(rows);
        let mut total = 0.0;
        for r in 0..rows {
            let (c, d) = cosine_guarded(p.row(r), target.row(r))?;
            total += 1.0 - c;
            cos.push(c);
            denom.push(d);
        }
        let out = Tensor::scalar(total / rows as f64);
        Ok(self.push(Op::CosineLoss { pred, target, cos, denom }, out, &[pred]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).data().iter().sum());
        self.push(Op::Sum(a), out, &[a])
    }

    /// Gradients of the scalar `loss` with respect to every parameter.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward on an empty graph".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(format!("node {} was never recorded", loss.0)));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::shape(format!("loss must be scalar, got {:?}", self.value(loss).shape())));
        }

        let mut grads: Vec<Option<Tensor>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(self.value(loss).shape(), vec![1.0])?);
        let mut out = Gradients(vec![None; self.params.len()]);

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            self.backward_node(idx, g, &mut grads, &mut out);
        }
        Ok(out)
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backward_node(&self, idx: usize, g: Tensor, grads: &mut [Option<Tensor>], out: &mut Gradients) {
        let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot => *slot = Some(t),
        };
        match &self.nodes[idx].op {
            Op::Constant => {}
            Op::Param(id) => match &mut out.0[id.0] {
                Some(existing) => existing.add_assign(&g),
                slot => *slot = Some(g),
            },
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (m, k, n) = (av.rows(), av.cols(), bv.cols());
                if self.wants(*a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, 1.0, g.data(), false, bv.data(), true, 0.0, &mut da);
                    acc(*a, Tensor::new(av.shape(), da).unwrap());
                }
                if self.wants(*b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, 1.0, av.data(), true, g.data(), false, 0.0, &mut db);
                    acc(*b, Tensor::new(bv.shape(), db).unwrap());
                }
            }
            Op::Add(a, b) => {
                if self.wants(*b) {
                    acc(*b, g.clone());
                }
                if self.wants(*a) {
                    acc(*a, g);
                }
            }
            Op::AddBias(x, bias) => {
                if self.wants(*bias) {
                    let bshape = self.value(*bias).shape().to_vec();
                    let c = g.cols();
                    let mut db = vec![0.0; c];
                    for row in g.data().chunks(c) {
                        for (d, x) in db.iter_mut().zip(row) {
                            *d += x;
                        }
                    }
                    acc(*bias, Tensor::new(&bshape, db).unwrap());
                }
                if self.wants(*x) {
                    acc(*x, g);
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                if self.wants(*a) {
                    let d = g.data().iter().zip(bv.data()).map(|(g, y)| g * y).collect();
                    acc(*a, Tensor::new(av.shape(), d).unwrap());
                }
                if self.wants(*b) {
                    let d = g.data().iter().zip(av.data()).map(|(g, x)| g * x).collect();
                    acc(*b, Tensor::new(bv.shape(), d).unwrap());
                }
            }
            Op::Scale(a, s) => acc(*a, g.map(|x| x * s)),
            Op::Relu(a) => {
                let y = self.nodes[idx].value.as_ref().unwrap();
                let d = g.data().iter().zip(y.data()).map(|(g, y)| if *y > 0.0 { *g } else { 0.0 }).collect();
                acc(*a, Tensor::new(g.shape(), d).unwrap());
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[idx].value.as_ref().unwrap();
                let d = g.data().iter().zip(y.data()).map(|(g, y)| g * y * (1.0 - y)).collect();
                acc(*a, Tensor::new(g.shape(), d).unwrap());
            }
            Op::Dropout(a, mask) => {
                let d = g.data().iter().zip(mask).map(|(g, m)| g * m).collect();
                acc(*a, Tensor::new(g.shape(), d).unwrap());
            }
            Op::LayerNorm { x, gain, bias, xhat, rstd } => {
                let gv = self.value(*gain);
                let c = g.cols();
                if self.wants(*gain) || self.wants(*bias) {
                    let mut dg = vec![0.0; c];
                    let mut db = vec![0.0; c];
                    for (grow, xrow) in g.data().chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            dg[j] += grow[j] * xrow[j];
                            db[j] += grow[j];
                        }
                    }
                    if self.wants(*gain) {
                        acc(*gain, Tensor::new(gv.shape(), dg).unwrap());
                    }
                    if self.wants(*bias) {
                        let bshape = self.value(*bias).shape().to_vec();
                        acc(*bias, Tensor::new(&bshape, db).unwrap());
                    }
                }
                if self.wants(*x) {
                    let mut dx = vec![0.0; g.len()];
                    let n = c as f64;
                    for (r, &rs) in rstd.iter().enumerate() {
                        let grow = &g.data()[r * c..(r + 1) * c];
                        let xrow = &xhat[r * c..(r + 1) * c];
                        let mut mean_d = 0.0;
                        let mut mean_dx = 0.0;
                        for j in 0..c {
                            let d = grow[j] * gv.data()[j];
                            mean_d += d;
                            mean_dx += d * xrow[j];
                        }
                        mean_d /= n;
                        mean_dx /= n;
                        for j in 0..c {
                            let d = grow[j] * gv.data()[j];
                            dx[r * c + j] = rs * (d - mean_d - xrow[j] * mean_dx);
                        }
                    }
                    acc(*x, Tensor::new(g.shape(), dx).unwrap());
                }
            }
            Op::Attention { q, k, v, spec, weights } => {
                let (dq, dk, dv) = attention_backward(
                    self.value(*q),
                    self.value(*k),
                    self.value(*v),
                    spec,
                    weights,
                    &g,
                );
                if self.wants(*q) {
                    acc(*q, dq);
                }
                if self.wants(*k) {
                    acc(*k, dk);
                }
                if self.wants(*v) {
                    acc(*v, dv);
                }
            }
            Op::Gather { table, ids } => {
                let tv = self.value(*table);
                let c = tv.cols();
                let mut dt = Tensor::zeros(tv.shape());
                for (r, &i) in ids.iter().enumerate() {
                    for (d, x) in dt.row_mut(i).iter_mut().zip(&g.data()[r * c..(r + 1) * c]) {
                        *d += x;
                    }
                }
                acc(*table, dt);
            }
            Op::PlaceRows { base, row, at } => {
                if self.wants(*row) {
                    let rshape = self.value(*row).shape().to_vec();
                    let mut dr = vec![0.0; g.cols()];
                    for &r in at {
                        for (d, x) in dr.iter_mut().zip(g.row(r)) {
                            *d += x;
                        }
                    }
                    acc(*row, Tensor::new(&rshape, dr).unwrap());
                }
                if self.wants(*base) {
                    acc(*base, g);
                }
            }
            Op::SoftmaxXent { logits, targets, probs, norm } => {
                let up = g.data()[0] / norm;
                let c = targets.cols();
                let mut dz = vec![0.0; probs.len()];
                for r in 0..targets.rows() {
                    let tr = targets.row(r);
                    let total: f64 = tr.iter().sum();
                    for j in 0..c {
                        dz[r * c + j] = up * (probs[r * c + j] * total - tr[j]);
                    }
                }
                acc(*logits, Tensor::new(targets.shape(), dz).unwrap());
            }
            Op::CosineLoss { pred, target, cos, denom } => {
                let p = self.value(*pred);
                let up = g.data()[0] / p.rows() as f64;
                let mut dp = vec![0.0; p.len()];
                let c = p.cols();
                for r in 0..p.rows() {
                    let pr = p.row(r);
                    let tr = target.row(r);
                    let pn2: f64 = pr.iter().map(|x| x * x).sum();
                    let exact = denom[r] > COSINE_EPS && pn2 > 0.0;
                    for j in 0..c {
                        let dcos = if exact {
                            tr[j] / denom[r] - cos[r] * pr[j] / pn2
                        } else {
                            tr[j] / denom[r]
                        };
                        dp[r * c + j] = -up * dcos;
                    }
                }
                acc(*pred, Tensor::new(p.shape(), dp).unwrap());
            }
            Op::Sum(a) => {
                let shape = self.value(*a).shape().to_vec();
                let gv = g.data()[0];
                let n = shape.iter().product();
                acc(*a, Tensor::new(&shape, vec![gv; n]).unwrap());
            }
        }
    }
}

/// Floor on `|pred|·|target|` in the cosine loss.
pub const COSINE_EPS: f64 = 1e-12;

/// Cosine with a floored denominator; a zero target is an error.
pub(crate) fn cosine_guarded(pred: &[f64], target: &[f64]) -> Result<(f64, f64)> {
    let tn = super::kernels::norm(target);
    if tn == 0.0 {
        return Err(Error::Norm);
    }
    let pn = super::kernels::norm(pred);
    let denom = (pn * tn).max(COSINE_EPS);
    Ok((super::kernels::dot(pred, target) / denom, denom))
}

fn attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    spec: &AttentionSpec,
    weights: &[f64],
    g: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let d = q.cols();
    let (h, lq, lk) = (spec.heads, spec.q_len, spec.k_len);
    let dh = d / h;
    let scale = 1.0 / (dh as f64).sqrt();
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), g.data());
    let mut dq = vec![0.0; q.len()];
    let mut dk = vec![0.0; k.len()];
    let mut dv = vec![0.0; v.len()];
    let mut ds = vec![0.0; lk];

    for (b, &kb) in spec.kv_map.iter().enumerate() {
        for head in 0..h {
            let col = head * dh;
            for i in 0..lq {
                let w = &weights[((b * h + head) * lq + i) * lk..][..lk];
                let grow = &gd[(b * lq + i) * d + col..][..dh];
                let mut s = 0.0;
                for j in 0..lk {
                    if w[j] == 0.0 {
                        ds[j] = 0.0;
                        continue;
                    }
                    let vrow = &vd[(kb * lk + j) * d + col..][..dh];
                    ds[j] = grow.iter().zip(vrow).map(|(a, b)| a * b).sum();
                    s += w[j] * ds[j];
                }
                let qrow_at = (b * lq + i) * d + col;
                for j in 0..lk {
                    if w[j] == 0.0 {
                        continue;
                    }
                    let dsj = w[j] * (ds[j] - s) * scale;
                    let krow_at = (kb * lk + j) * d + col;
                    for c in 0..dh {
                        dq[qrow_at + c] += dsj * kd[krow_at + c];
                        dk[krow_at + c] += dsj * qd[qrow_at + c];
                        dv[krow_at + c] += w[j] * grow[c];
                    }
                }
            }
        }
    }
    (
        Tensor::new(q.shape(), dq).unwrap(),
        Tensor::new(k.shape(), dk).unwrap(),
        Tensor::new(v.shape(), dv).unwrap(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_gradient_is_ones() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::matrix(2, 2, vec![1.0, -2.0, 3.0, 0.5]).unwrap());
        let mut g = Graph::new(&ps);
        let xv = g.param(x);
        let s = g.sum(xv);
        assert_eq!(g.scalar(s), 2.5);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[1.0; 4]);
    }

    #[test]
    fn square_gradient_is_twice_x() {
        let mut ps = ParamSet::new();
        let x = ps.add("x", Tensor::matrix(1, 3, vec![1.0, -2.0, 0.25]).unwrap());
        let mut g = Graph::new(&ps);
        let xv = g.param(x);
        let sq = g.mul(xv, xv).unwrap();
        let s = g.sum(sq);
        let grads = g.backward(s).unwrap();
        assert_eq!(grads.get(x).unwrap().data(), &[2.0, -4.0, 0.5]);
    }

    #[test]
    fn backward_before_forward_is_state_error() {
        let ps = ParamSet::new();
        let g = Graph::new(&ps);
        assert!(matches!(g.backward(Var(0)), Err(Error::State(_))));
        let mut other = Graph::new(&ps);
        other.constant(Tensor::scalar(1.0));
        assert!(matches!(other.backward(Var(5)), Err(Error::State(_))));
    }

    #[test]
    fn unused_params_have_no_gradient() {
        let mut ps = ParamSet::new();
        let a = ps.add("a", Tensor::scalar(2.0));
        let b = ps.add("b", Tensor::scalar(3.0));
        let mut g = Graph::new(&ps);
        let av = g.param(a);
        let s = g.sum(av);
        let grads = g.backward(s).unwrap();
        assert!(grads.get(b).is_none());
        assert_eq!(grads.to_dense(&ps)[1].data(), &[0.0]);
    }

    #[test]
    fn cosine_loss_values() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let t = Tensor::from_rows(&[vec![1.0, 2.0, -3.0]]).unwrap();
        let same = g.constant(t.clone());
        let l = g.cosine_loss(same, t.clone()).unwrap();
        assert!(g.scalar(l).abs() < 1e-15);
        let neg = g.constant(t.map(|x| -x));
        let l = g.cosine_loss(neg, t.clone()).unwrap();
        assert!((g.scalar(l) - 2.0).abs() < 1e-15);
        let e1 = g.constant(Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap());
        let l = g.cosine_loss(e1, Tensor::from_rows(&[vec![0.0, 1.0]]).unwrap()).unwrap();
        assert_eq!(g.scalar(l), 1.0);
        let zero_target = g.cosine_loss(e1, Tensor::zeros(&[1, 2]));
        assert!(matches!(zero_target, Err(Error::Norm)));
    }

    #[test]
    fn dropout_is_identity_at_inference() {
        let ps = ParamSet::new();
        let mut g = Graph::new(&ps);
        let x = g.constant(Tensor::matrix(1, 3, vec![1.0, 2.0, 3.0]).unwrap());
        assert_eq!(g.dropout(x, 0.5), x);
    }
}
