//! Parameter storage and the standard layers built on [`Graph`].

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{Graph, Var};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(usize);

/// Named parameter tensors, in registration order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Panics on a duplicate name: parameter layouts are fixed at construction.
    pub fn add(&mut self, name: impl Into<String>, value: Matrix) -> ParamId {
        let name = name.into();
        assert!(!self.names.contains(&name), "duplicate parameter {name}");
        self.names.push(name);
        self.values.push(value);
        ParamId(self.values.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn scalar_count(&self) -> usize {
        self.values.iter().map(Matrix::len).sum()
    }
}

pub(crate) fn xavier(rng: &mut impl Rng, fan_in: usize, fan_out: usize) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_vec(
        fan_in,
        fan_out,
        (0..fan_in * fan_out)
            .map(|_| rng.random_range(-a..a))
            .collect(),
    )
}

/// `y = x W + b` with `W` stored as `in × out`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Linear {
            weight: store.add(format!("{name}.weight"), xavier(rng, fan_in, fan_out)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    pub fn zeros(store: &mut ParamStore, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Linear {
            weight: store.add(format!("{name}.weight"), Matrix::zeros(fan_in, fan_out)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let w = g.param(store, self.weight);
        let b = g.param(store, self.bias);
        let y = g.matmul(x, w);
        g.add_row(y, b)
    }

    pub fn set_identity(&self, store: &mut ParamStore) {
        let n = store.get(self.weight).rows();
        *store.get_mut(self.weight) = Matrix::identity(n);
        *store.get_mut(self.bias) = Matrix::zeros(1, n);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        LayerNorm {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, dim, 1.0)),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, dim)),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        g.layer_norm(x, Some((gamma, beta)))
    }
}

/// Two-layer ReLU feed-forward block.
#[derive(Debug, Clone)]
pub struct Ffn {
    pub hidden: Linear,
    pub out: Linear,
}

impl Ffn {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        dim: usize,
        hidden: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Ffn {
            hidden: Linear::new(store, &format!("{name}.fc1"), dim, hidden, rng),
            out: Linear::new(store, &format!("{name}.fc2"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        let h = self.hidden.forward(g, store, x);
        let h = g.relu(h);
        self.out.forward(g, store, h)
    }

    pub fn zero_out(&self, store: &mut ParamStore) {
        for id in [
            self.hidden.weight,
            self.hidden.bias,
            self.out.weight,
            self.out.bias,
        ] {
            let (r, c) = store.get(id).shape();
            *store.get_mut(id) = Matrix::zeros(r, c);
        }
    }
}

/// Result of a multi-head attention call.
#[derive(Debug, Clone)]
pub struct Attended {
    pub output: Var,
    /// Per-head attention weights, each `n_queries × n_keys`.
    pub weights: Vec<Var>,
}

/// Scaled dot-product attention split over `n_heads` column blocks.
///
/// Inputs are already projected; no parameters live here.
pub fn multi_head_attention(g: &mut Graph, q: Var, k: Var, v: Var, n_heads: usize) -> Attended {
    let d = g.shape(q).1;
    assert_eq!(g.shape(k).1, d, "key width");
    assert_eq!(g.shape(k).0, g.shape(v).0, "key/value rows");
    assert_eq!(d % n_heads, 0, "heads must divide width");
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for h in 0..n_heads {
        let (qh, kh, vh) = if n_heads == 1 {
            (q, k, v)
        } else {
            (
                g.slice_cols(q, h * dh, (h + 1) * dh),
                g.slice_cols(k, h * dh, (h + 1) * dh),
                g.slice_cols(v, h * dh, (h + 1) * dh),
            )
        };
        let logits = g.matmul_nt(qh, kh);
        let logits = g.scale(logits, scale);
        let w = g.softmax_rows(logits);
        heads.push(g.matmul(w, vh));
        weights.push(w);
    }
    let output = if n_heads == 1 {
        heads[0]
    } else {
        g.concat_cols(&heads)
    };
    Attended { output, weights }
}

/// Mean of per-head attention weights.
pub fn mean_attention(g: &Graph, weights: &[Var]) -> Matrix {
    let mut acc = g.value(weights[0]).clone();
    for &w in &weights[1..] {
        acc.add_assign(g.value(w));
    }
    acc.scaled(1.0 / weights.len() as f64)
}
