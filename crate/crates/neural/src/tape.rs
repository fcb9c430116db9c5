//! Reverse-mode automatic differentiation over [`Tensor`] values.
//!
//! A [`Tape`] records one forward computation against a borrowed
//! [`ParamStore`]; [`Tape::backward`] walks it in reverse and returns the
//! gradient of a scalar output with respect to every parameter it touched.

use crate::params::{Gradients, ParamId, ParamStore};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2 / pi)
const GELU_A: f64 = 0.044_715;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather { param: ParamId, ids: Vec<usize> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    MatMulBT(Var, Var),
    Scale(Var, f64),
    AddConst(Var),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Tensor,
        rstd: Vec<f64>,
    },
    Gelu(Var),
    Tanh(Var),
    SliceCols { a: Var, start: usize },
    ConcatCols(Vec<Var>),
    SliceRows { a: Var, start: usize },
    ConcatRows(Vec<Var>),
    MeanRows(Var),
    SumAll(Var),
    L2Norm(Var),
    Cosine(Var, Var),
    Nce(Var),
    CrossEntropy { logits: Var, targets: Vec<usize>, probs: Tensor },
}

struct Node {
    value: Tensor,
    op: Op,
}

pub struct Tape<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_into(row: &[f64], out: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &x) in out.iter_mut().zip(row) {
        *o = (x - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// `ln(sum(exp(row)))` without overflow.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl<'p> Tape<'p> {
    pub fn new(params: &'p ParamStore) -> Self {
        Tape {
            params,
            nodes: Vec::with_capacity(256),
        }
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).item()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        let v = self.params.get(id).clone();
        self.push(v, Op::Param(id))
    }

    /// Rows `ids` of a parameter matrix (embedding lookup).
    pub fn gather(&mut self, id: ParamId, ids: &[usize]) -> Var {
        let table = self.params.get(id);
        let mut out = Tensor::zeros(ids.len(), table.cols);
        for (r, &i) in ids.iter().enumerate() {
            out.row_mut(r).copy_from_slice(table.row(i));
        }
        self.push(out, Op::Gather { param: id, ids: ids.to_vec() })
    }

    fn zip_map(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "elementwise op on mismatched shapes");
        Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&y.data).map(|(p, q)| f(*p, *q)).collect())
    }

    fn map(&self, a: Var, f: impl Fn(f64) -> f64) -> Tensor {
        let x = self.value(a);
        Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|p| f(*p)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_map(a, b, |p, q| p + q);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_map(a, b, |p, q| p - q);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.zip_map(a, b, |p, q| p * q);
        self.push(v, Op::Mul(a, b))
    }

    /// `a [n x c] + bias [1 x c]` broadcast over rows.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (self.value(a), self.value(bias));
        assert_eq!((1, x.cols), b.shape(), "bias shape");
        let mut out = x.clone();
        for r in 0..out.rows {
            for (o, bb) in out.row_mut(r).iter_mut().zip(&b.data) {
                *o += bb;
            }
        }
        self.push(out, Op::AddRow(a, bias))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul_bt(self.value(b));
        self.push(v, Op::MatMulBT(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.map(a, |p| p * s);
        self.push(v, Op::Scale(a, s))
    }

    /// Adds a constant tensor (e.g. an attention mask); no gradient flows to it.
    pub fn add_const(&mut self, a: Var, c: &Tensor) -> Var {
        let x = self.value(a);
        assert_eq!(x.shape(), c.shape());
        let v = Tensor::from_vec(x.rows, x.cols, x.data.iter().zip(&c.data).map(|(p, q)| p + q).collect());
        self.push(v, Op::AddConst(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(x.rows, x.cols);
        for r in 0..x.rows {
            let (src, dst) = (x.row(r), &mut out.data[r * x.cols..(r + 1) * x.cols]);
            softmax_into(src, dst);
        }
        self.push(out, Op::SoftmaxRows(a))
    }

    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let (g, b) = (self.value(gamma), self.value(beta));
        let (n, c) = xv.shape();
        assert_eq!(g.shape(), (1, c));
        assert_eq!(b.shape(), (1, c));
        let mut xhat = Tensor::zeros(n, c);
        let mut out = Tensor::zeros(n, c);
        let mut rstd = Vec::with_capacity(n);
        for r in 0..n {
            let row = xv.row(r);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let rs = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            rstd.push(rs);
            for j in 0..c {
                let h = (row[j] - mean) * rs;
                xhat.data[r * c + j] = h;
                out.data[r * c + j] = h * g.data[j] + b.data[j];
            }
        }
        self.push(out, Op::LayerNorm { x, gamma, beta, xhat, rstd })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let v = self.map(a, gelu);
        self.push(v, Op::Gelu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.map(a, f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.cols);
        let mut out = Tensor::zeros(x.rows, len);
        for r in 0..x.rows {
            out.row_mut(r).copy_from_slice(&x.row(r)[start..start + len]);
        }
        self.push(out, Op::SliceCols { a, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut off = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.rows, rows);
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + x.cols].copy_from_slice(x.row(r));
            }
            off += x.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Var {
        let x = self.value(a);
        assert!(start + len <= x.rows);
        let out = Tensor::from_vec(len, x.cols, x.data[start * x.cols..(start + len) * x.cols].to_vec());
        self.push(out, Op::SliceRows { a, start })
    }

    pub fn row(&mut self, a: Var, i: usize) -> Var {
        self.slice_rows(a, i, 1)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.cols, cols);
            data.extend_from_slice(&x.data);
            rows += x.rows;
        }
        self.push(Tensor::from_vec(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    /// Column means: `[n x c] -> [1 x c]`.
    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut out = Tensor::zeros(1, x.cols);
        for r in 0..x.rows {
            for (o, v) in out.data.iter_mut().zip(x.row(r)) {
                *o += v / x.rows as f64;
            }
        }
        self.push(out, Op::MeanRows(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Tensor::scalar(s), Op::SumAll(a))
    }

    /// Euclidean norm of all entries, as a scalar.
    pub fn l2_norm(&mut self, a: Var) -> Var {
        let n = self.value(a).norm();
        self.push(Tensor::scalar(n), Op::L2Norm(a))
    }

    /// Cosine similarity of two same-shape tensors (0 if either is zero).
    pub fn cosine(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape());
        let dot: f64 = x.data.iter().zip(&y.data).map(|(p, q)| p * q).sum();
        let (na, nb) = (x.norm(), y.norm());
        let c = if na == 0.0 || nb == 0.0 { 0.0 } else { dot / (na * nb) };
        self.push(Tensor::scalar(c), Op::Cosine(a, b))
    }

    /// `-ln(exp(s0) / sum_i exp(s_i))` for a `1 x n` row of similarities with
    /// the positive in column 0, via log-sum-exp.
    pub fn nce(&mut self, sims: Var) -> Var {
        let s = self.value(sims);
        assert_eq!(s.rows, 1, "nce expects one row of similarities");
        let loss = log_sum_exp(&s.data) - s.data[0];
        self.push(Tensor::scalar(loss), Op::Nce(sims))
    }

    /// Mean over rows of `-ln softmax(logits)[target]`.
    pub fn cross_entropy(&mut self, logits: Var, targets: &[usize]) -> Var {
        let x = self.value(logits);
        assert_eq!(x.rows, targets.len(), "one target per row");
        let mut probs = Tensor::zeros(x.rows, x.cols);
        let mut loss = 0.0;
        for (r, &t) in targets.iter().enumerate() {
            let row = x.row(r);
            loss += log_sum_exp(row) - row[t];
            softmax_into(row, &mut probs.data[r * x.cols..(r + 1) * x.cols]);
        }
        loss /= x.rows as f64;
        self.push(
            Tensor::scalar(loss),
            Op::CrossEntropy { logits, targets: targets.to_vec(), probs },
        )
    }

    /// Gradient of the scalar `output` with respect to every touched parameter.
    pub fn backward(&self, output: Var) -> Gradients {
        assert_eq!(self.value(output).shape(), (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Tensor>> = vec![None; output.0 + 1];
        grads[output.0] = Some(Tensor::scalar(1.0));
        let mut out = Gradients::empty(self.params.len());

        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let mut acc = |v: Var, t: Tensor| match &mut grads[v.0] {
                Some(e) => e.add_assign(&t),
                slot @ None => *slot = Some(t),
            };
            match &node.op {
                Op::Leaf => {}
                Op::Param(id) => out.accumulate(*id, &g),
                Op::Gather { param, ids } => {
                    let shape = self.params.get(*param).shape();
                    let slot = out.slot(*param, shape.0, shape.1);
                    for (r, &i) in ids.iter().enumerate() {
                        for (s, v) in slot.row_mut(i).iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                }
                Op::Add(a, b) => {
                    acc(*a, g.clone());
                    acc(*b, g);
                }
                Op::Sub(a, b) => {
                    let mut neg = g.clone();
                    neg.scale_assign(-1.0);
                    acc(*a, g);
                    acc(*b, neg);
                }
                Op::Mul(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let ga = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&y.data).map(|(p, q)| p * q).collect());
                    let gb = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(p, q)| p * q).collect());
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Tensor::zeros(1, g.cols);
                    for r in 0..g.rows {
                        for (s, v) in gb.data.iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    acc(*a, g);
                    acc(*bias, gb);
                }
                Op::MatMul(a, b) => {
                    let ga = g.matmul_bt(self.value(*b));
                    let gb = self.value(*a).matmul_at(&g);
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::MatMulBT(a, b) => {
                    let ga = g.matmul(self.value(*b));
                    let gb = g.matmul_at(self.value(*a));
                    acc(*a, ga);
                    acc(*b, gb);
                }
                Op::Scale(a, s) => {
                    let mut ga = g;
                    ga.scale_assign(*s);
                    acc(*a, ga);
                }
                Op::AddConst(a) => acc(*a, g),
                Op::SoftmaxRows(a) => {
                    let y = &node.value;
                    let mut ga = Tensor::zeros(g.rows, g.cols);
                    for r in 0..g.rows {
                        let (gr, yr) = (g.row(r), y.row(r));
                        let dot: f64 = gr.iter().zip(yr).map(|(p, q)| p * q).sum();
                        for (j, o) in ga.row_mut(r).iter_mut().enumerate() {
                            *o = yr[j] * (gr[j] - dot);
                        }
                    }
                    acc(*a, ga);
                }
                Op::LayerNorm { x, gamma, beta, xhat, rstd } => {
                    let gam = self.value(*gamma);
                    let (n, c) = g.shape();
                    let mut gg = Tensor::zeros(1, c);
                    let mut gbeta = Tensor::zeros(1, c);
                    let mut gx = Tensor::zeros(n, c);
                    for r in 0..n {
                        let (gr, hr) = (g.row(r), xhat.row(r));
                        let mut dh = vec![0.0; c];
                        for j in 0..c {
                            gg.data[j] += gr[j] * hr[j];
                            gbeta.data[j] += gr[j];
                            dh[j] = gr[j] * gam.data[j];
                        }
                        let mean_dh = dh.iter().sum::<f64>() / c as f64;
                        let mean_dhh = dh.iter().zip(hr).map(|(p, q)| p * q).sum::<f64>() / c as f64;
                        for (j, o) in gx.row_mut(r).iter_mut().enumerate() {
                            *o = rstd[r] * (dh[j] - mean_dh - hr[j] * mean_dhh);
                        }
                    }
                    acc(*x, gx);
                    acc(*gamma, gg);
                    acc(*beta, gbeta);
                }
                Op::Gelu(a) => {
                    let x = self.value(*a);
                    let ga = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&x.data).map(|(p, q)| p * gelu_grad(*q)).collect());
                    acc(*a, ga);
                }
                Op::Tanh(a) => {
                    let y = &node.value;
                    let ga = Tensor::from_vec(g.rows, g.cols, g.data.iter().zip(&y.data).map(|(p, q)| p * (1.0 - q * q)).collect());
                    acc(*a, ga);
                }
                Op::SliceCols { a, start } => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(*a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let w = self.value(*p).cols;
                        let mut gp = Tensor::zeros(g.rows, w);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + w]);
                        }
                        off += w;
                        acc(*p, gp);
                    }
                }
                Op::SliceRows { a, start } => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    ga.data[start * x.cols..(start + g.rows) * x.cols].copy_from_slice(&g.data);
                    acc(*a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let x = self.value(*p);
                        let n = x.rows * x.cols;
                        acc(*p, Tensor::from_vec(x.rows, x.cols, g.data[off..off + n].to_vec()));
                        off += n;
                    }
                }
                Op::MeanRows(a) => {
                    let x = self.value(*a);
                    let mut ga = Tensor::zeros(x.rows, x.cols);
                    for r in 0..x.rows {
                        for (o, v) in ga.row_mut(r).iter_mut().zip(&g.data) {
                            *o = v / x.rows as f64;
                        }
                    }
                    acc(*a, ga);
                }
                Op::SumAll(a) => {
                    let x = self.value(*a);
                    acc(*a, Tensor::from_vec(x.rows, x.cols, vec![g.item(); x.len()]));
                }
                Op::L2Norm(a) => {
                    let x = self.value(*a);
                    let n = node.value.item();
                    let s = if n > 0.0 { g.item() / n } else { 0.0 };
                    acc(*a, Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|v| v * s).collect()));
                }
                Op::Cosine(a, b) => {
                    let (x, y) = (self.value(*a), self.value(*b));
                    let (na, nb) = (x.norm(), y.norm());
                    if na > 0.0 && nb > 0.0 {
                        let c = node.value.item();
                        let gs = g.item();
                        let ga = x.data.iter().zip(&y.data).map(|(p, q)| gs * (q / (na * nb) - c * p / (na * na))).collect();
                        let gb = x.data.iter().zip(&y.data).map(|(p, q)| gs * (p / (na * nb) - c * q / (nb * nb))).collect();
                        acc(*a, Tensor::from_vec(x.rows, x.cols, ga));
                        acc(*b, Tensor::from_vec(y.rows, y.cols, gb));
                    }
                }
                Op::Nce(sims) => {
                    let s = self.value(*sims);
                    let mut p = vec![0.0; s.cols];
                    softmax_into(&s.data, &mut p);
                    p[0] -= 1.0;
                    let gs = g.item();
                    acc(*sims, Tensor::from_vec(1, s.cols, p.into_iter().map(|v| v * gs).collect()));
                }
                Op::CrossEntropy { logits, targets, probs } => {
                    let n = targets.len() as f64;
                    let gs = g.item() / n;
                    let mut gl = probs.clone();
                    for (r, &t) in targets.iter().enumerate() {
                        gl.data[r * gl.cols + t] -= 1.0;
                    }
                    gl.scale_assign(gs);
                    acc(*logits, gl);
                }
            }
        }
        out
    }
}
