//! Content-position alignment.
//!
//! Queries attend to the frame's feature tokens with a content-modulated
//! positional query, then a box head turns the refreshed content into a box
//! update that is added to the query's current box.

use rand::Rng;

use super::config::BoxSpace;
use crate::autograd::{Graph, Var};
use crate::geometry::{BoundingBox, LOGIT_EPS};
use crate::nn::{multi_head_attention, Attended, Ffn, LayerNorm, Linear, ParamStore};
use crate::tensor::Matrix;

/// Feature tokens and their spatial encodings, already on the tape.
#[derive(Debug, Clone, Copy)]
pub struct Memory {
    pub features: Var,
    pub positions: Var,
}

/// Cross-attention whose positional query is scaled element-wise by a
/// transform of the query content.
#[derive(Debug, Clone)]
pub struct ModulatedCrossAttention {
    n_heads: usize,
    modulation: Linear,
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

impl ModulatedCrossAttention {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let modulation = Linear::new(store, &format!("{name}.modulation"), d_model, d_model, rng);
        // Start close to an unmodulated positional query.
        *store.get_mut(modulation.bias) = Matrix::filled(1, d_model, 1.0);
        ModulatedCrossAttention {
            n_heads,
            modulation,
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            k: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            out: Linear::new(store, &format!("{name}.out"), d_model, d_model, rng),
        }
    }

    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        content: Var,
        query_pos: Var,
        memory: Memory,
    ) -> Attended {
        let scale = self.modulation.forward(g, store, content);
        let spatial = g.mul(query_pos, scale);
        let q_in = g.add(content, spatial);
        let k_in = g.add(memory.features, memory.positions);
        let q = self.q.forward(g, store, q_in);
        let k = self.k.forward(g, store, k_in);
        let v = self.v.forward(g, store, memory.features);
        let att = multi_head_attention(g, q, k, v, self.n_heads);
        Attended {
            output: self.out.forward(g, store, att.output),
            weights: att.weights,
        }
    }
}

/// MLP producing box updates from a content row and its reference box
/// (inverse-sigmoid coordinates); the last layer starts at zero.
#[derive(Debug, Clone)]
pub struct BoxHead {
    hidden: Linear,
    reference: Linear,
    out: Linear,
}

impl BoxHead {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, rng: &mut impl Rng) -> Self {
        BoxHead {
            hidden: Linear::new(store, &format!("{name}.fc1"), d_model, d_model, rng),
            reference: Linear::new(store, &format!("{name}.ref"), 4, d_model, rng),
            out: Linear::zeros(store, &format!("{name}.fc2"), d_model, 4),
        }
    }

    /// `reference` is `n × 4`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: Var, reference: Var) -> Var {
        let h = self.hidden.forward(g, store, x);
        let r = self.reference.forward(g, store, reference);
        let h = g.add(h, r);
        let h = g.relu(h);
        self.out.forward(g, store, h)
    }

    pub fn output_layer(&self) -> &Linear {
        &self.out
    }
}

#[derive(Debug, Clone)]
pub struct CpaBlock {
    cross: ModulatedCrossAttention,
    norm1: LayerNorm,
    ffn: Ffn,
    norm2: LayerNorm,
    delta: BoxHead,
    box_space: BoxSpace,
}

#[derive(Debug, Clone)]
pub struct CpaOutput {
    pub contents: Var,
    /// Aligned boxes, `n × 4` in normalized `(cx, cy, w, h)`.
    pub boxes: Var,
    pub weights: Vec<Var>,
}

/// Element-wise inverse sigmoid of a box list, clamped away from 0 and 1.
pub fn box_logits(boxes: &[BoundingBox]) -> Matrix {
    let rows: Vec<Vec<f64>> = boxes
        .iter()
        .map(|b| b.to_array().map(crate::geometry::inverse_sigmoid).to_vec())
        .collect();
    Matrix::from_rows(&rows, 4)
}

pub fn box_matrix(boxes: &[BoundingBox]) -> Matrix {
    let rows: Vec<Vec<f64>> = boxes.iter().map(|b| b.to_array().to_vec()).collect();
    Matrix::from_rows(&rows, 4)
}

impl CpaBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        ffn_dim: usize,
        box_space: BoxSpace,
        rng: &mut impl Rng,
    ) -> Self {
        CpaBlock {
            cross: ModulatedCrossAttention::new(
                store,
                &format!("{name}.cross"),
                d_model,
                n_heads,
                rng,
            ),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            ffn: Ffn::new(store, &format!("{name}.ffn"), d_model, ffn_dim, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
            delta: BoxHead::new(store, &format!("{name}.delta"), d_model, rng),
            box_space,
        }
    }

    pub fn delta_head(&self) -> &BoxHead {
        &self.delta
    }

    /// `query_pos` must be the encoding of `boxes`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        contents: Var,
        query_pos: Var,
        boxes: &[BoundingBox],
        memory: Memory,
    ) -> CpaOutput {
        let att = self.cross.forward(g, store, contents, query_pos, memory);
        let x = g.add(contents, att.output);
        let x = self.norm1.forward(g, store, x);
        let f = self.ffn.forward(g, store, x);
        let x2 = g.add(x, f);
        let aligned = self.norm2.forward(g, store, x2);
        let base_logits = g.constant(box_logits(boxes));
        let delta = self.delta.forward(g, store, aligned, base_logits);
        let boxes = match self.box_space {
            BoxSpace::InverseSigmoid => {
                let logits = g.add(delta, base_logits);
                g.sigmoid(logits)
            }
            BoxSpace::Literal => {
                let base = g.constant(box_matrix(boxes));
                let moved = g.add(delta, base);
                g.clamp(moved, LOGIT_EPS, 1.0 - LOGIT_EPS)
            }
        };
        CpaOutput {
            contents: aligned,
            boxes,
            weights: att.weights,
        }
    }
}
