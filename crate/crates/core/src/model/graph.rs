//! Reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation of one forward pass; [`Graph::backward`]
//! walks the tape in reverse and returns gradients for the parameters that
//! were used. Parameters are borrowed, never copied.

use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use super::mask::MaskMatrix;
use super::params::{ParamId, Params};
use super::tensor::{gemm, Tensor, View};

/// How a binary mask enters the attention logits.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskMode {
    /// Masked logits become `-inf`, so masked weights are exactly zero.
    #[default]
    NegInf,
    /// Logits are multiplied by the mask; masked entries become logit 0 and
    /// still receive probability mass.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

enum Op {
    Const,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddBroadcast(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Gelu(Var),
    LayerNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, rstd: Vec<f64> },
    Attention { q: Var, k: Var, v: Var, groups: usize, heads: usize, mask: Option<Rc<MaskMatrix>>, mode: MaskMode, probs: Vec<f64> },
    ConcatRows(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    GroupMean(Var, usize),
    CrossEntropy { logits: Var, targets: Vec<Option<usize>>, weights: Vec<f64>, probs: Vec<f64> },
    Sum(Vec<Var>),
}

struct Node {
    value: Tensor,
    op: Op,
    needs_grad: bool,
}

pub struct Graph<'p> {
    params: &'p Params,
    nodes: Vec<Node>,
    param_nodes: HashMap<ParamId, Var>,
}

/// Gradients of one backward pass, indexed like the parameter set.
#[derive(Debug, Clone)]
pub struct Grads {
    pub params: Vec<Option<Tensor>>,
}

impl Grads {
    pub fn get(&self, id: ParamId) -> Option<&Tensor> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    /// Adds another pass's gradients into this one.
    pub fn accumulate(&mut self, o: Grads) {
        if self.params.len() < o.params.len() {
            self.params.resize(o.params.len(), None);
        }
        for (a, b) in self.params.iter_mut().zip(o.params) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(&b),
                (None, Some(b)) => *a = Some(b),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.params.iter_mut().flatten() {
            g.data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn norm(&self) -> f64 {
        self.params.iter().flatten().map(|g| g.norm_sq()).sum::<f64>().sqrt()
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;
const LN_EPS: f64 = 1e-5;

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

fn same_shape(a: &Tensor, b: &Tensor, op: &str) {
    assert_eq!(a.shape(), b.shape(), "{op}: shape mismatch");
}

impl<'p> Graph<'p> {
    pub fn new(params: &'p Params) -> Self {
        Self { params, nodes: Vec::new(), param_nodes: HashMap::new() }
    }

    pub fn value(&self, v: Var) -> &Tensor {
        match self.nodes[v.0].op {
            Op::Param(id) => self.params.get(id),
            _ => &self.nodes[v.0].value,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[Var]) -> Var {
        let needs_grad = matches!(op, Op::Param(_)) || inputs.iter().any(|v| self.nodes[v.0].needs_grad);
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Const, &[])
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(&v) = self.param_nodes.get(&id) {
            return v;
        }
        let v = self.push(Tensor::zeros(0, 0), Op::Param(id), &[]);
        self.param_nodes.insert(id, v);
        v
    }

    pub fn param_named(&mut self, name: &str) -> Var {
        let id = self.params.id(name).unwrap_or_else(|| panic!("unknown parameter {name}"));
        self.param(id)
    }

    /// A copy of `v` that blocks gradient flow.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = super::tensor::matmul(self.value(a), self.value(b));
        self.push(out, Op::MatMul(a, b), &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "add");
        let mut out = ta.clone();
        out.add_assign(tb);
        self.push(out, Op::Add(a, b), &[a, b])
    }

    /// Adds `b` to `a`, tiling `b` down the rows; `b.rows` must divide `a.rows`.
    pub fn add_broadcast(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        assert!(ta.cols == tb.cols && tb.rows > 0 && ta.rows % tb.rows == 0, "add_broadcast: shape mismatch");
        let mut out = ta.clone();
        for r in 0..ta.rows {
            for (o, x) in out.row_mut(r).iter_mut().zip(tb.row(r % tb.rows)) {
                *o += x;
            }
        }
        self.push(out, Op::AddBroadcast(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "mul");
        let data = ta.data.iter().zip(&tb.data).map(|(x, y)| x * y).collect();
        let out = Tensor::from_vec(ta.rows, ta.cols, data);
        self.push(out, Op::Mul(a, b), &[a, b])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let t = self.value(a);
        let out = Tensor::from_vec(t.rows, t.cols, t.data.iter().map(|x| x * s).collect());
        self.push(out, Op::Scale(a, s), &[a])
    }

    /// Tanh approximation of GELU.
    pub fn gelu(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::from_vec(t.rows, t.cols, t.data.iter().map(|&x| gelu(x)).collect());
        self.push(out, Op::Gelu(a), &[a])
    }

    /// Row-wise layer normalization with `1 x cols` gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let (tx, tg, tb) = (self.value(x), self.value(gamma), self.value(beta));
        assert!(tg.shape() == [1, tx.cols] && tb.shape() == [1, tx.cols], "layer_norm: gain/bias shape");
        let c = tx.cols as f64;
        let mut xhat = vec![0.0; tx.len()];
        let mut rstd = vec![0.0; tx.rows];
        let mut out = Tensor::zeros(tx.rows, tx.cols);
        for r in 0..tx.rows {
            let row = tx.row(r);
            let mean = row.iter().sum::<f64>() / c;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c;
            let rs = 1.0 / (var + LN_EPS).sqrt();
            rstd[r] = rs;
            for j in 0..tx.cols {
                let h = (row[j] - mean) * rs;
                xhat[r * tx.cols + j] = h;
                out.data[r * tx.cols + j] = h * tg.data[j] + tb.data[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd }, &[x, gamma, beta])
    }

    /// Scaled dot-product attention, `softmax(mask(Q K^T) / sqrt(d_k)) V`,
    /// computed independently for each of `groups` equal row blocks and each of
    /// `heads` equal column blocks. `mask` (block-sized) applies to every group;
    /// `None` means every query sees every key of its group.
    pub fn attention(&mut self, q: Var, k: Var, v: Var, groups: usize, heads: usize, mask: Option<Rc<MaskMatrix>>, mode: MaskMode) -> Var {
        let (tq, tk, tv) = (self.value(q), self.value(k), self.value(v));
        assert_eq!(tq.shape(), tk.shape(), "attention: q/k shape mismatch");
        assert_eq!(tq.rows, tv.rows, "attention: v rows mismatch");
        assert!(groups > 0 && tq.rows % groups == 0, "attention: rows not divisible by groups");
        assert!(heads > 0 && tq.cols % heads == 0 && tv.cols % heads == 0, "attention: cols not divisible by heads");
        let n = tq.rows / groups;
        if let Some(m) = &mask {
            assert_eq!(m.n, n, "attention: mask size mismatch");
        }
        let (dk, dv) = (tq.cols / heads, tv.cols / heads);
        let scale = 1.0 / (dk as f64).sqrt();
        let mut probs = vec![0.0; groups * heads * n * n];
        let mut out = Tensor::zeros(tq.rows, tv.cols);
        let mut s = vec![0.0; n * n];
        for g in 0..groups {
            for h in 0..heads {
                let qv = View { data: &tq.data[g * n * tq.cols + h * dk..], rs: tq.cols as isize, cs: 1 };
                let kv = View { data: &tk.data[g * n * tk.cols + h * dk..], rs: tk.cols as isize, cs: 1 };
                gemm(n, dk, n, 1.0, qv, kv.t(), 0.0, &mut s, n);
                let p = &mut probs[(g * heads + h) * n * n..][..n * n];
                softmax_rows(&s, p, n, scale, mask.as_deref(), mode);
                let vv = View { data: &tv.data[g * n * tv.cols + h * dv..], rs: tv.cols as isize, cs: 1 };
                let pv = View { data: p, rs: n as isize, cs: 1 };
                gemm(n, n, dv, 1.0, pv, vv, 0.0, &mut out.data[g * n * tv.cols + h * dv..], tv.cols);
            }
        }
        self.push(out, Op::Attention { q, k, v, groups, heads, mask, mode, probs }, &[q, k, v])
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            assert_eq!(t.cols, cols, "concat_rows: column mismatch");
            data.extend_from_slice(&t.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()), parts)
    }

    /// Output row `r` is input row `idx[r]`.
    pub fn gather_rows(&mut self, a: Var, idx: Vec<usize>) -> Var {
        let t = self.value(a);
        let mut out = Tensor::zeros(idx.len(), t.cols);
        for (r, &i) in idx.iter().enumerate() {
            out.row_mut(r).copy_from_slice(t.row(i));
        }
        self.push(out, Op::GatherRows(a, idx), &[a])
    }

    /// Mean of each of `groups` equal row blocks; output is `groups x cols`.
    pub fn group_mean(&mut self, a: Var, groups: usize) -> Var {
        let t = self.value(a);
        assert!(groups > 0 && t.rows.is_multiple_of(groups), "group_mean: rows not divisible");
        let n = t.rows / groups;
        let mut out = Tensor::zeros(groups, t.cols);
        for g in 0..groups {
            for r in 0..n {
                for (o, x) in out.row_mut(g).iter_mut().zip(t.row(g * n + r)) {
                    *o += x;
                }
            }
            out.row_mut(g).iter_mut().for_each(|o| *o /= n as f64);
        }
        self.push(out, Op::GroupMean(a, groups), &[a])
    }

    /// `sum_i w_i * CE(logits_i, target_i)` over rows that have a target.
    pub fn cross_entropy(&mut self, logits: Var, targets: Vec<Option<usize>>, weights: Vec<f64>) -> Var {
        let t = self.value(logits);
        assert!(targets.len() == t.rows && weights.len() == t.rows, "cross_entropy: row count mismatch");
        let mut probs = vec![0.0; t.len()];
        let mut total = 0.0;
        for r in 0..t.rows {
            let row = t.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - m).exp()).sum();
            for (p, x) in probs[r * t.cols..(r + 1) * t.cols].iter_mut().zip(row) {
                *p = (x - m).exp() / z;
            }
            if let Some(c) = targets[r] {
                assert!(c < t.cols, "cross_entropy: target out of range");
                total += weights[r] * (m + z.ln() - row[c]);
            }
        }
        self.push(Tensor::scalar(total), Op::CrossEntropy { logits, targets, weights, probs }, &[logits])
    }

    /// Sum of every element of every input, as a `1 x 1` tensor.
    pub fn sum(&mut self, parts: &[Var]) -> Var {
        let total = parts.iter().map(|&p| self.value(p).data.iter().sum::<f64>()).sum();
        self.push(Tensor::scalar(total), Op::Sum(parts.to_vec()), parts)
    }

    /// `x W + b` with `W: in x out` and `b: 1 x out`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let y = self.matmul(x, w);
        self.add_broadcast(y, b)
    }

    /// Gradients of the scalar `loss` with respect to every parameter used.
    pub fn backward(&self, loss: Var) -> Grads {
        assert_eq!(self.value(loss).shape(), [1, 1], "backward needs a scalar loss");
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        let mut out = Grads { params: vec![None; self.params.len()] };
        grads[loss.0] = Some(Tensor::scalar(1.0));
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            self.backprop(i, dy, &mut grads, &mut out);
        }
        out
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    fn backprop(&self, i: usize, dy: Tensor, grads: &mut [Option<Tensor>], out: &mut Grads) {
        let acc = |grads: &mut [Option<Tensor>], v: Var, t: Tensor| match &mut grads[v.0] {
            Some(g) => g.add_assign(&t),
            slot => *slot = Some(t),
        };
        match &self.nodes[i].op {
            Op::Const => {}
            Op::Param(id) => match &mut out.params[id.0] {
                Some(g) => g.add_assign(&dy),
                slot => *slot = Some(dy),
            },
            &Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                if self.needs(a) {
                    let mut da = Tensor::zeros(ta.rows, ta.cols);
                    gemm(ta.rows, tb.cols, ta.cols, 1.0, View::of(&dy), View::of(tb).t(), 0.0, &mut da.data, ta.cols);
                    acc(grads, a, da);
                }
                if self.needs(b) {
                    let mut db = Tensor::zeros(tb.rows, tb.cols);
                    gemm(tb.rows, ta.rows, tb.cols, 1.0, View::of(ta).t(), View::of(&dy), 0.0, &mut db.data, tb.cols);
                    acc(grads, b, db);
                }
            }
            &Op::Add(a, b) => {
                if self.needs(a) {
                    acc(grads, a, dy.clone());
                }
                if self.needs(b) {
                    acc(grads, b, dy);
                }
            }
            &Op::AddBroadcast(a, b) => {
                if self.needs(b) {
                    let tb = self.value(b);
                    let mut db = Tensor::zeros(tb.rows, tb.cols);
                    for r in 0..dy.rows {
                        for (o, x) in db.row_mut(r % tb.rows).iter_mut().zip(dy.row(r)) {
                            *o += x;
                        }
                    }
                    acc(grads, b, db);
                }
                if self.needs(a) {
                    acc(grads, a, dy);
                }
            }
            &Op::Mul(a, b) => {
                let (ta, tb) = (self.value(a), self.value(b));
                if self.needs(a) {
                    let d = dy.data.iter().zip(&tb.data).map(|(g, y)| g * y).collect();
                    acc(grads, a, Tensor::from_vec(ta.rows, ta.cols, d));
                }
                if self.needs(b) {
                    let d = dy.data.iter().zip(&ta.data).map(|(g, x)| g * x).collect();
                    acc(grads, b, Tensor::from_vec(tb.rows, tb.cols, d));
                }
            }
            &Op::Scale(a, s) => {
                let d = dy.data.iter().map(|g| g * s).collect();
                acc(grads, a, Tensor::from_vec(dy.rows, dy.cols, d));
            }
            &Op::Gelu(a) => {
                let ta = self.value(a);
                let d = dy.data.iter().zip(&ta.data).map(|(g, &x)| g * gelu_grad(x)).collect();
                acc(grads, a, Tensor::from_vec(dy.rows, dy.cols, d));
            }
            Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                let (rows, cols) = (dy.rows, dy.cols);
                let tg = self.value(*gamma);
                if self.needs(*gamma) || self.needs(*beta) {
                    let mut dg = Tensor::zeros(1, cols);
                    let mut db = Tensor::zeros(1, cols);
                    for r in 0..rows {
                        for j in 0..cols {
                            let g = dy.data[r * cols + j];
                            dg.data[j] += g * xhat[r * cols + j];
                            db.data[j] += g;
                        }
                    }
                    if self.needs(*gamma) {
                        acc(grads, *gamma, dg);
                    }
                    if self.needs(*beta) {
                        acc(grads, *beta, db);
                    }
                }
                if self.needs(*x) {
                    let mut dx = Tensor::zeros(rows, cols);
                    let c = cols as f64;
                    for r in 0..rows {
                        let mut m1 = 0.0;
                        let mut m2 = 0.0;
                        for j in 0..cols {
                            let dh = dy.data[r * cols + j] * tg.data[j];
                            m1 += dh;
                            m2 += dh * xhat[r * cols + j];
                        }
                        m1 /= c;
                        m2 /= c;
                        for j in 0..cols {
                            let dh = dy.data[r * cols + j] * tg.data[j];
                            dx.data[r * cols + j] = rstd[r] * (dh - m1 - xhat[r * cols + j] * m2);
                        }
                    }
                    acc(grads, *x, dx);
                }
            }
            Op::Attention { q, k, v, groups, heads, mask, mode, probs } => {
                let (tq, tk, tv) = (self.value(*q), self.value(*k), self.value(*v));
                let (groups, heads) = (*groups, *heads);
                let n = tq.rows / groups;
                let (dk, dv) = (tq.cols / heads, tv.cols / heads);
                let scale = 1.0 / (dk as f64).sqrt();
                let mut dq = Tensor::zeros(tq.rows, tq.cols);
                let mut dkk = Tensor::zeros(tk.rows, tk.cols);
                let mut dvv = Tensor::zeros(tv.rows, tv.cols);
                let mut dp = vec![0.0; n * n];
                for g in 0..groups {
                    for h in 0..heads {
                        let p = &probs[(g * heads + h) * n * n..][..n * n];
                        let pv = View { data: p, rs: n as isize, cs: 1 };
                        let dz = View { data: &dy.data[g * n * dy.cols + h * dv..], rs: dy.cols as isize, cs: 1 };
                        let vv = View { data: &tv.data[g * n * tv.cols + h * dv..], rs: tv.cols as isize, cs: 1 };
                        gemm(n, n, dv, 1.0, pv.t(), dz, 0.0, &mut dvv.data[g * n * tv.cols + h * dv..], tv.cols);
                        gemm(n, dv, n, 1.0, dz, vv.t(), 0.0, &mut dp, n);
                        for r in 0..n {
                            let pr = &p[r * n..(r + 1) * n];
                            let dr = &mut dp[r * n..(r + 1) * n];
                            let dot: f64 = pr.iter().zip(dr.iter()).map(|(a, b)| a * b).sum();
                            for j in 0..n {
                                let mut ds = pr[j] * (dr[j] - dot) * scale;
                                if *mode == MaskMode::Literal {
                                    if let Some(m) = mask {
                                        if !m.get(r, j) {
                                            ds = 0.0;
                                        }
                                    }
                                }
                                dr[j] = ds;
                            }
                        }
                        let dsv = View { data: &dp, rs: n as isize, cs: 1 };
                        let kv = View { data: &tk.data[g * n * tk.cols + h * dk..], rs: tk.cols as isize, cs: 1 };
                        let qv = View { data: &tq.data[g * n * tq.cols + h * dk..], rs: tq.cols as isize, cs: 1 };
                        gemm(n, n, dk, 1.0, dsv, kv, 0.0, &mut dq.data[g * n * tq.cols + h * dk..], tq.cols);
                        gemm(n, n, dk, 1.0, dsv.t(), qv, 0.0, &mut dkk.data[g * n * tk.cols + h * dk..], tk.cols);
                    }
                }
                if self.needs(*q) {
                    acc(grads, *q, dq);
                }
                if self.needs(*k) {
                    acc(grads, *k, dkk);
                }
                if self.needs(*v) {
                    acc(grads, *v, dvv);
                }
            }
            Op::ConcatRows(parts) => {
                let mut row = 0;
                for &p in parts {
                    let r = self.value(p).rows;
                    if self.needs(p) {
                        let d = dy.data[row * dy.cols..(row + r) * dy.cols].to_vec();
                        acc(grads, p, Tensor::from_vec(r, dy.cols, d));
                    }
                    row += r;
                }
            }
            Op::GatherRows(a, idx) => {
                let ta = self.value(*a);
                let mut da = Tensor::zeros(ta.rows, ta.cols);
                for (r, &src) in idx.iter().enumerate() {
                    for (o, x) in da.row_mut(src).iter_mut().zip(dy.row(r)) {
                        *o += x;
                    }
                }
                acc(grads, *a, da);
            }
            &Op::GroupMean(a, groups) => {
                let ta = self.value(a);
                let n = ta.rows / groups;
                let mut da = Tensor::zeros(ta.rows, ta.cols);
                for r in 0..ta.rows {
                    for (o, x) in da.row_mut(r).iter_mut().zip(dy.row(r / n)) {
                        *o = x / n as f64;
                    }
                }
                acc(grads, a, da);
            }
            Op::CrossEntropy { logits, targets, weights, probs } => {
                let up = dy.item();
                let t = self.value(*logits);
                let mut d = Tensor::zeros(t.rows, t.cols);
                for r in 0..t.rows {
                    if let Some(c) = targets[r] {
                        let w = up * weights[r];
                        for j in 0..t.cols {
                            d.data[r * t.cols + j] = w * probs[r * t.cols + j];
                        }
                        d.data[r * t.cols + c] -= w;
                    }
                }
                acc(grads, *logits, d);
            }
            Op::Sum(parts) => {
                let up = dy.item();
                for &p in parts {
                    if self.needs(p) {
                        let t = self.value(p);
                        acc(grads, p, Tensor::from_vec(t.rows, t.cols, vec![up; t.len()]));
                    }
                }
            }
        }
    }
}

fn softmax_rows(s: &[f64], p: &mut [f64], n: usize, scale: f64, mask: Option<&MaskMatrix>, mode: MaskMode) {
    for r in 0..n {
        let row = &s[r * n..(r + 1) * n];
        let out = &mut p[r * n..(r + 1) * n];
        let visible = |j: usize| mask.is_none_or(|m| m.get(r, j));
        match mode {
            MaskMode::NegInf => {
                let mut m = f64::NEG_INFINITY;
                for j in (0..n).filter(|&j| visible(j)) {
                    m = m.max(row[j] * scale);
                }
                assert!((0..n).any(visible), "attention row {r} has no visible key");
                let mut z = 0.0;
                for j in 0..n {
                    out[j] = if visible(j) { (row[j] * scale - m).exp() } else { 0.0 };
                    z += out[j];
                }
                out.iter_mut().for_each(|v| *v /= z);
            }
            MaskMode::Literal => {
                let logit = |j: usize| if visible(j) { row[j] * scale } else { 0.0 };
                let m = (0..n).map(logit).fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for j in 0..n {
                    out[j] = (logit(j) - m).exp();
                    z += out[j];
                }
                out.iter_mut().for_each(|v| *v /= z);
            }
        }
    }
}

/// Attention weights and output for a single head without recording a tape.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: &MaskMatrix, mode: MaskMode) -> Result<(Tensor, Tensor), super::ModelError> {
    let bad = |m: String| Err(super::ModelError::ShapeMismatch(m));
    if q.cols != k.cols || q.rows != k.rows || v.rows != k.rows {
        return bad(format!("q {:?}, k {:?}, v {:?}", q.shape(), k.shape(), v.shape()));
    }
    if mask.n != q.rows {
        return bad(format!("mask {} for {} tokens", mask.n, q.rows));
    }
    let params = Params::new();
    let mut g = Graph::new(&params);
    let (qv, kv, vv) = (g.constant(q.clone()), g.constant(k.clone()), g.constant(v.clone()));
    let z = g.attention(qv, kv, vv, 1, 1, Some(Rc::new(mask.clone())), mode);
    let Op::Attention { probs, .. } = &g.nodes[z.0].op else { unreachable!() };
    let w = Tensor::from_vec(q.rows, q.rows, probs.clone());
    Ok((g.value(z).clone(), w))
}
