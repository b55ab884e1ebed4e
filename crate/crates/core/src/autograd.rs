//! Reverse-mode differentiation over [`Matrix`] values.
//!
//! A [`Graph`] records every operation in creation order; [`Graph::backward`]
//! walks the tape in reverse. Parameters enter the tape through
//! [`Graph::param`], once per graph, so their gradients accumulate over all
//! uses.

use std::collections::HashMap;

use crate::nn::{ParamId, ParamStore};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param,
    MatMul(Var, Var),
    MatMulNt(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Sigmoid(Var),
    Clamp(Var, f64, f64),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        affine: Option<(Var, Var)>,
        xhat: Matrix,
        rstd: Vec<f64>,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    SliceRows(Var, usize),
    SliceCols(Var, usize),
    SelectRows(Var, Vec<usize>),
    Sum(Var),
    Focal {
        logits: Var,
        targets: Vec<f64>,
        alpha: f64,
        gamma: f64,
    },
    L1 {
        x: Var,
        target: Matrix,
    },
    Giou {
        x: Var,
        target: Matrix,
    },
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    op: Op,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
    stopped: Vec<Matrix>,
    replay: Option<std::vec::IntoIter<Matrix>>,
}

/// Per-node gradients produced by [`Graph::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
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

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn constant(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// A graph whose stop-gradient reads return `values` in order instead of
    /// the live values. Used to hold detached quantities fixed while probing
    /// the loss with perturbed parameters.
    pub fn with_replay(values: Vec<Matrix>) -> Self {
        Graph {
            replay: Some(values.into_iter()),
            ..Self::default()
        }
    }

    /// Every value read through [`Graph::stop_gradient_value`], in order.
    pub fn stopped_values(&self) -> &[Matrix] {
        &self.stopped
    }

    /// `v`'s value as a plain matrix; anything computed from it is constant to
    /// the tape. Under replay the recorded value is returned instead.
    pub fn stop_gradient_value(&mut self, v: Var) -> Matrix {
        let m = match self.replay.as_mut().and_then(|r| r.next()) {
            Some(m) => {
                assert_eq!(m.shape(), self.value(v).shape(), "replayed value shape");
                m
            }
            None => self.value(v).clone(),
        };
        self.stopped.push(m.clone());
        m
    }

    /// Fresh leaf carrying `v`'s value; gradients stop here.
    pub fn detach(&mut self, v: Var) -> Var {
        let m = self.stop_gradient_value(v);
        self.constant(m)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(&v) = self.params.get(&id) {
            return v;
        }
        let v = self.push(store.get(id).clone(), Op::Param);
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let m = self.value(a).matmul(self.value(b));
        self.push(m, Op::MatMul(a, b))
    }

    /// `a · bᵀ`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let m = self.value(a).matmul_nt(self.value(b));
        self.push(m, Op::MatMulNt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let m = self.value(a).zip_map(self.value(b), |x, y| x + y);
        self.push(m, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let m = self.value(a).zip_map(self.value(b), |x, y| x - y);
        self.push(m, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let m = self.value(a).zip_map(self.value(b), |x, y| x * y);
        self.push(m, Op::Mul(a, b))
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.rows(), 1, "add_row expects a row vector");
        assert_eq!(x.cols(), r.cols(), "add_row width");
        let mut m = x.clone();
        for i in 0..m.rows() {
            for (o, b) in m.row_mut(i).iter_mut().zip(r.data()) {
                *o += b;
            }
        }
        self.push(m, Op::AddRow(a, row))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let m = self.value(a).scaled(s);
        self.push(m, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let m = self.value(a).map(|v| v.max(0.0));
        self.push(m, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let m = self.value(a).map(crate::geometry::sigmoid);
        self.push(m, Op::Sigmoid(a))
    }

    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let m = self.value(a).map(|v| v.clamp(lo, hi));
        self.push(m, Op::Clamp(a, lo, hi))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut m = x.clone();
        for i in 0..m.rows() {
            let row = m.row_mut(i);
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
        self.push(m, Op::SoftmaxRows(a))
    }

    /// Row-wise layer normalization, optionally followed by `γ ⊙ x̂ + β`.
    pub fn layer_norm(&mut self, a: Var, affine: Option<(Var, Var)>) -> Var {
        let x = self.value(a);
        let (rows, cols) = x.shape();
        let mut xhat = Matrix::zeros(rows, cols);
        let mut rstd = Vec::with_capacity(rows);
        for i in 0..rows {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let r = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            for (o, v) in xhat.row_mut(i).iter_mut().zip(row) {
                *o = (v - mean) * r;
            }
            rstd.push(r);
        }
        let mut out = xhat.clone();
        if let Some((g, b)) = affine {
            let (gv, bv) = (self.value(g), self.value(b));
            for i in 0..rows {
                for ((o, gi), bi) in out.row_mut(i).iter_mut().zip(gv.data()).zip(bv.data()) {
                    *o = *o * gi + bi;
                }
            }
        }
        self.push(
            out,
            Op::LayerNorm {
                x: a,
                affine,
                xhat,
                rstd,
            },
        )
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows of nothing");
        let cols = self.value(parts[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols(), cols, "concat_rows width");
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        self.push(
            Matrix::from_vec(rows, cols, data),
            Op::ConcatRows(parts.to_vec()),
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|&p| self.value(p).cols()).sum();
        let mut m = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows(), rows, "concat_cols height");
            for i in 0..rows {
                m.row_mut(i)[offset..offset + v.cols()].copy_from_slice(v.row(i));
            }
            offset += v.cols();
        }
        self.push(m, Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(start <= end && end <= x.rows(), "slice_rows bounds");
        let cols = x.cols();
        let m = Matrix::from_vec(
            end - start,
            cols,
            x.data()[start * cols..end * cols].to_vec(),
        );
        self.push(m, Op::SliceRows(a, start))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(start <= end && end <= x.cols(), "slice_cols bounds");
        let mut m = Matrix::zeros(x.rows(), end - start);
        for i in 0..x.rows() {
            m.row_mut(i).copy_from_slice(&x.row(i)[start..end]);
        }
        self.push(m, Op::SliceCols(a, start))
    }

    pub fn select_rows(&mut self, a: Var, indices: &[usize]) -> Var {
        let x = self.value(a);
        let rows: Vec<Vec<f64>> = indices.iter().map(|&i| x.row(i).to_vec()).collect();
        let m = Matrix::from_rows(&rows, x.cols());
        self.push(m, Op::SelectRows(a, indices.to_vec()))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Sum(a))
    }

    /// Sum of sigmoid focal losses; `targets` are per-element labels in `[0, 1]`.
    pub fn focal_loss_sum(&mut self, logits: Var, targets: &[f64], alpha: f64, gamma: f64) -> Var {
        let x = self.value(logits);
        assert_eq!(x.len(), targets.len(), "focal target count");
        let s: f64 = x
            .data()
            .iter()
            .zip(targets)
            .map(|(&z, &t)| focal_value(z, t, alpha, gamma))
            .sum();
        self.push(
            Matrix::from_vec(1, 1, vec![s]),
            Op::Focal {
                logits,
                targets: targets.to_vec(),
                alpha,
                gamma,
            },
        )
    }

    /// `Σ |x − target|` over all elements.
    pub fn l1_loss_sum(&mut self, x: Var, target: Matrix) -> Var {
        let s: f64 = self
            .value(x)
            .data()
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::L1 { x, target })
    }

    /// `Σ (1 − GIoU)` over rows of `(cx, cy, w, h)` boxes.
    pub fn giou_loss_sum(&mut self, x: Var, target: Matrix) -> Var {
        let pred = self.value(x);
        assert_eq!(pred.cols(), 4, "giou expects n × 4 boxes");
        assert_eq!(pred.shape(), target.shape(), "giou target shape");
        let s: f64 = (0..pred.rows())
            .map(|i| giou_loss_and_grad(pred.row(i), target.row(i)).0)
            .sum();
        self.push(Matrix::from_vec(1, 1, vec![s]), Op::Giou { x, target })
    }

    /// Reverse pass from the scalar `loss`.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(self.shape(loss), (1, 1), "backward expects a scalar");
        let mut grads: Vec<Option<Matrix>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));
        for i in (0..=loss.0).rev() {
            let Some(dy) = grads[i].take() else { continue };
            self.backprop_node(i, &dy, &mut grads);
            grads[i] = Some(dy);
        }
        Gradients { grads }
    }

    /// Gradients for every parameter in `store` (zeros for unused ones).
    pub fn param_grads(&self, grads: &Gradients, store: &ParamStore) -> Vec<Matrix> {
        store
            .ids()
            .map(
                |id| match self.params.get(&id).and_then(|&v| grads.get(v)) {
                    Some(g) => g.clone(),
                    None => {
                        let (r, c) = store.get(id).shape();
                        Matrix::zeros(r, c)
                    }
                },
            )
            .collect()
    }

    fn backprop_node(&self, i: usize, dy: &Matrix, grads: &mut [Option<Matrix>]) {
        let node = &self.nodes[i];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param => {}
            Op::MatMul(a, b) => {
                let da = dy.matmul_nt(self.value(*b));
                let db = self.value(*a).matmul_tn(dy);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::MatMulNt(a, b) => {
                // y = a bᵀ: da = dy b, db = dyᵀ a
                let da = dy.matmul(self.value(*b));
                let db = dy.matmul_tn(self.value(*a));
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::Add(a, b) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *b, dy.clone());
            }
            Op::Sub(a, b) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *b, dy.scaled(-1.0));
            }
            Op::Mul(a, b) => {
                let da = dy.zip_map(self.value(*b), |g, v| g * v);
                let db = dy.zip_map(self.value(*a), |g, v| g * v);
                accumulate(grads, *a, da);
                accumulate(grads, *b, db);
            }
            Op::AddRow(a, r) => {
                accumulate(grads, *a, dy.clone());
                accumulate(grads, *r, dy.column_sums());
            }
            Op::Scale(a, s) => accumulate(grads, *a, dy.scaled(*s)),
            Op::Relu(a) => {
                let da = dy.zip_map(self.value(*a), |g, x| if x > 0.0 { g } else { 0.0 });
                accumulate(grads, *a, da);
            }
            Op::Sigmoid(a) => {
                let da = dy.zip_map(y, |g, s| g * s * (1.0 - s));
                accumulate(grads, *a, da);
            }
            Op::Clamp(a, lo, hi) => {
                let da = dy.zip_map(
                    self.value(*a),
                    |g, x| if x >= *lo && x <= *hi { g } else { 0.0 },
                );
                accumulate(grads, *a, da);
            }
            Op::SoftmaxRows(a) => {
                let mut da = Matrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row(r), dy.row(r));
                    let inner: f64 = yr.iter().zip(gr).map(|(p, g)| p * g).sum();
                    for ((o, p), g) in da.row_mut(r).iter_mut().zip(yr).zip(gr) {
                        *o = p * (g - inner);
                    }
                }
                accumulate(grads, *a, da);
            }
            Op::LayerNorm {
                x,
                affine,
                xhat,
                rstd,
            } => {
                let (rows, cols) = xhat.shape();
                let dxhat = match affine {
                    Some((g, b)) => {
                        let gv = self.value(*g);
                        let mut dg = Matrix::zeros(1, cols);
                        for r in 0..rows {
                            for ((o, d), h) in
                                dg.data_mut().iter_mut().zip(dy.row(r)).zip(xhat.row(r))
                            {
                                *o += d * h;
                            }
                        }
                        accumulate(grads, *g, dg);
                        accumulate(grads, *b, dy.column_sums());
                        let mut dxh = dy.clone();
                        for r in 0..rows {
                            for (o, gi) in dxh.row_mut(r).iter_mut().zip(gv.data()) {
                                *o *= gi;
                            }
                        }
                        dxh
                    }
                    None => dy.clone(),
                };
                let n = cols as f64;
                let mut dx = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    let (dh, h) = (dxhat.row(r), xhat.row(r));
                    let sum_d: f64 = dh.iter().sum();
                    let sum_dh: f64 = dh.iter().zip(h).map(|(a, b)| a * b).sum();
                    for ((o, d), hv) in dx.row_mut(r).iter_mut().zip(dh).zip(h) {
                        *o = rstd[r] / n * (n * d - sum_d - hv * sum_dh);
                    }
                }
                accumulate(grads, *x, dx);
            }
            Op::ConcatRows(parts) => {
                let cols = dy.cols();
                let mut offset = 0;
                for &p in parts {
                    let rows = self.value(p).rows();
                    let g = Matrix::from_vec(
                        rows,
                        cols,
                        dy.data()[offset * cols..(offset + rows) * cols].to_vec(),
                    );
                    accumulate(grads, p, g);
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).cols();
                    let mut g = Matrix::zeros(dy.rows(), c);
                    for r in 0..dy.rows() {
                        g.row_mut(r).copy_from_slice(&dy.row(r)[offset..offset + c]);
                    }
                    accumulate(grads, p, g);
                    offset += c;
                }
            }
            Op::SliceRows(a, start) => {
                let (rows, cols) = self.value(*a).shape();
                let mut g = Matrix::zeros(rows, cols);
                g.data_mut()[start * cols..start * cols + dy.len()].copy_from_slice(dy.data());
                accumulate(grads, *a, g);
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.value(*a).shape();
                let mut g = Matrix::zeros(rows, cols);
                for r in 0..rows {
                    g.row_mut(r)[*start..*start + dy.cols()].copy_from_slice(dy.row(r));
                }
                accumulate(grads, *a, g);
            }
            Op::SelectRows(a, indices) => {
                let (rows, cols) = self.value(*a).shape();
                let mut g = Matrix::zeros(rows, cols);
                for (k, &src) in indices.iter().enumerate() {
                    for (o, d) in g.row_mut(src).iter_mut().zip(dy.row(k)) {
                        *o += d;
                    }
                }
                accumulate(grads, *a, g);
            }
            Op::Sum(a) => {
                let (r, c) = self.value(*a).shape();
                accumulate(grads, *a, Matrix::filled(r, c, dy.get(0, 0)));
            }
            Op::Focal {
                logits,
                targets,
                alpha,
                gamma,
            } => {
                let x = self.value(*logits);
                let s = dy.get(0, 0);
                let data = x
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&z, &t)| s * focal_grad(z, t, *alpha, *gamma))
                    .collect();
                accumulate(grads, *logits, Matrix::from_vec(x.rows(), x.cols(), data));
            }
            Op::L1 { x, target } => {
                let s = dy.get(0, 0);
                let g = self.value(*x).zip_map(target, |a, b| s * sign(a - b));
                accumulate(grads, *x, g);
            }
            Op::Giou { x, target } => {
                let s = dy.get(0, 0);
                let pred = self.value(*x);
                let mut g = Matrix::zeros(pred.rows(), 4);
                for r in 0..pred.rows() {
                    let (_, d) = giou_loss_and_grad(pred.row(r), target.row(r));
                    for (o, v) in g.row_mut(r).iter_mut().zip(d) {
                        *o = s * v;
                    }
                }
                accumulate(grads, *x, g);
            }
        }
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `ln(1 + eˣ)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Sigmoid focal loss of one logit against a label in `[0, 1]`.
pub fn focal_value(z: f64, t: f64, alpha: f64, gamma: f64) -> f64 {
    let p = crate::geometry::sigmoid(z);
    let log_p = -softplus(-z);
    let log_q = -softplus(z);
    let pos = alpha * (1.0 - p).powf(gamma) * -log_p;
    let neg = (1.0 - alpha) * p.powf(gamma) * -log_q;
    t * pos + (1.0 - t) * neg
}

fn focal_grad(z: f64, t: f64, alpha: f64, gamma: f64) -> f64 {
    let p = crate::geometry::sigmoid(z);
    let q = 1.0 - p;
    let log_p = -softplus(-z);
    let log_q = -softplus(z);
    // d/dz [−α qᵞ ln p] and d/dz [−(1−α) pᵞ ln q]
    let pos = alpha * q.powf(gamma) * (gamma * p * log_p - q);
    let neg = (1.0 - alpha) * p.powf(gamma) * (p - gamma * q * log_q);
    t * pos + (1.0 - t) * neg
}

/// Returns `1 − GIoU(a, b)` and its gradient with respect to `a = (cx, cy, w, h)`.
pub(crate) fn giou_loss_and_grad(a: &[f64], b: &[f64]) -> (f64, [f64; 4]) {
    let (ax1, ax2) = (a[0] - 0.5 * a[2], a[0] + 0.5 * a[2]);
    let (ay1, ay2) = (a[1] - 0.5 * a[3], a[1] + 0.5 * a[3]);
    let (bx1, bx2) = (b[0] - 0.5 * b[2], b[0] + 0.5 * b[2]);
    let (by1, by2) = (b[1] - 0.5 * b[3], b[1] + 0.5 * b[3]);

    let iw_raw = ax2.min(bx2) - ax1.max(bx1);
    let ih_raw = ay2.min(by2) - ay1.max(by1);
    let (iw, ih) = (iw_raw.max(0.0), ih_raw.max(0.0));
    let inter = iw * ih;
    let (aw, ah) = (ax2 - ax1, ay2 - ay1);
    let union = aw * ah + (bx2 - bx1) * (by2 - by1) - inter;
    let cw = ax2.max(bx2) - ax1.min(bx1);
    let ch = ay2.max(by2) - ay1.min(by1);
    let enclose = cw * ch;
    let iou = inter / union;
    let loss = 2.0 - iou - union / enclose;

    // Partials of inter, own area, and enclosure w.r.t. [x1, x2, y1, y2].
    let x_overlap = iw_raw > 0.0 && ih_raw > 0.0;
    let d_inter = [
        if x_overlap && ax1 > bx1 { -ih } else { 0.0 },
        if x_overlap && ax2 < bx2 { ih } else { 0.0 },
        if x_overlap && ay1 > by1 { -iw } else { 0.0 },
        if x_overlap && ay2 < by2 { iw } else { 0.0 },
    ];
    let d_area = [-ah, ah, -aw, aw];
    let d_enclose = [
        if ax1 < bx1 { -ch } else { 0.0 },
        if ax2 > bx2 { ch } else { 0.0 },
        if ay1 < by1 { -cw } else { 0.0 },
        if ay2 > by2 { cw } else { 0.0 },
    ];
    let mut d_corner = [0.0; 4];
    for k in 0..4 {
        let d_union = d_area[k] - d_inter[k];
        let d_iou = (d_inter[k] * union - inter * d_union) / (union * union);
        let d_ratio = (d_union * enclose - union * d_enclose[k]) / (enclose * enclose);
        d_corner[k] = -d_iou - d_ratio;
    }
    let [dx1, dx2, dy1, dy2] = d_corner;
    (
        loss,
        [dx1 + dx2, dy1 + dy2, 0.5 * (dx2 - dx1), 0.5 * (dy2 - dy1)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
        Matrix::from_vec(
            r,
            c,
            (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
    }

    /// Central-difference check of `build` (which maps its inputs to a scalar).
    fn check(inputs: Vec<Matrix>, build: impl Fn(&mut Graph, &[Var]) -> Var) {
        let mut g = Graph::new();
        let vars: Vec<Var> = inputs.iter().map(|m| g.constant(m.clone())).collect();
        let loss = build(&mut g, &vars);
        let grads = g.backward(loss);
        let h = 1e-6;
        for (k, m) in inputs.iter().enumerate() {
            let analytic = grads
                .get(vars[k])
                .cloned()
                .unwrap_or_else(|| Matrix::zeros(m.rows(), m.cols()));
            for e in 0..m.len() {
                let eval = |delta: f64| {
                    let mut perturbed = inputs.clone();
                    perturbed[k].data_mut()[e] += delta;
                    let mut g = Graph::new();
                    let vars: Vec<Var> = perturbed.into_iter().map(|m| g.constant(m)).collect();
                    let l = build(&mut g, &vars);
                    g.value(l).get(0, 0)
                };
                let numeric = (eval(h) - eval(-h)) / (2.0 * h);
                let a = analytic.data()[e];
                let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
                assert!(
                    err < 1e-5,
                    "input {k} elem {e}: analytic {a} numeric {numeric}"
                );
            }
        }
    }

    #[test]
    fn grad_matmul_softmax_layernorm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let inputs = vec![
            random(&mut rng, 3, 4),
            random(&mut rng, 4, 5),
            random(&mut rng, 2, 5),
            random(&mut rng, 1, 5),
            random(&mut rng, 1, 5),
        ];
        check(inputs, |g, v| {
            let a = g.matmul(v[0], v[1]);
            let s = g.matmul_nt(a, v[2]);
            let p = g.softmax_rows(s);
            let o = g.matmul(p, v[2]);
            let n = g.layer_norm(o, Some((v[3], v[4])));
            let w = g.mul(n, a);
            g.sum(w)
        });
    }

    #[test]
    fn grad_structural_ops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let inputs = vec![
            random(&mut rng, 3, 4),
            random(&mut rng, 2, 4),
            random(&mut rng, 1, 4),
        ];
        check(inputs, |g, v| {
            let c = g.concat_rows(&[v[0], v[1]]);
            let r = g.add_row(c, v[2]);
            let s = g.slice_rows(r, 1, 4);
            let t = g.slice_cols(s, 1, 3);
            let u = g.slice_cols(s, 0, 1);
            let w = g.concat_cols(&[t, u]);
            let sel = g.select_rows(w, &[2, 0, 2]);
            let sg = g.sigmoid(sel);
            let rl = g.relu(sel);
            let x = g.sub(sg, rl);
            let y = g.scale(x, 1.7);
            let z = g.layer_norm(y, None);
            let q = g.mul(z, y);
            g.sum(q)
        });
    }

    #[test]
    fn grad_losses() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let logits = random(&mut rng, 6, 1);
        let targets = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
        check(vec![logits], move |g, v| {
            g.focal_loss_sum(v[0], &targets, 0.25, 2.0)
        });

        for _ in 0..50 {
            let boxes: Vec<f64> = (0..8)
                .map(|i| {
                    if i % 4 < 2 {
                        rng.random_range(0.2..0.8)
                    } else {
                        rng.random_range(0.05..0.4)
                    }
                })
                .collect();
            let target = Matrix::from_vec(
                2,
                4,
                (0..8)
                    .map(|i| {
                        if i % 4 < 2 {
                            rng.random_range(0.2..0.8)
                        } else {
                            rng.random_range(0.05..0.4)
                        }
                    })
                    .collect(),
            );
            let t2 = target.clone();
            check(vec![Matrix::from_vec(2, 4, boxes)], move |g, v| {
                let a = g.giou_loss_sum(v[0], t2.clone());
                let b = g.l1_loss_sum(v[0], t2.clone());
                let s = g.add(a, b);
                g.scale(s, 0.5)
            });
        }
    }

    #[test]
    fn giou_loss_matches_geometry() {
        use crate::geometry::{giou, BoundingBox};
        let a = [0.4, 0.5, 0.2, 0.3];
        let b = [0.45, 0.55, 0.25, 0.2];
        let (l, _) = giou_loss_and_grad(&a, &b);
        let expect = 1.0 - giou(&BoundingBox::from_array(a), &BoundingBox::from_array(b));
        assert!((l - expect).abs() < 1e-12);
    }

    #[test]
    fn focal_limits() {
        // Confident correct predictions carry almost no loss.
        assert!(focal_value(20.0, 1.0, 0.25, 2.0) < 1e-9);
        assert!(focal_value(-20.0, 0.0, 0.25, 2.0) < 1e-9);
        assert!(focal_value(-3.0, 1.0, 0.25, 2.0) > 0.5);
    }

    #[test]
    fn softmax_rows_normalize() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut g = Graph::new();
        let x = g.constant(random(&mut rng, 5, 7).scaled(30.0));
        let p = g.softmax_rows(x);
        for r in 0..5 {
            let s: f64 = g.value(p).row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
}
