use rand::Rng;

use super::cpa::{BoxHead, Memory, ModulatedCrossAttention};
use crate::autograd::{Graph, Var};
use crate::nn::{multi_head_attention, Ffn, LayerNorm, Linear, ParamStore};

/// One decoder layer: self-attention over all queries, modulated
/// cross-attention to the feature tokens, and an FFN, each followed by
/// add & norm. Score and box heads are applied per query.
#[derive(Debug, Clone)]
pub struct DecoderLayer {
    n_heads: usize,
    sa_q: Linear,
    sa_k: Linear,
    sa_v: Linear,
    sa_out: Linear,
    norm1: LayerNorm,
    cross: ModulatedCrossAttention,
    norm2: LayerNorm,
    ffn: Ffn,
    norm3: LayerNorm,
    score_head: Linear,
    box_head: BoxHead,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput {
    pub embeddings: Var,
    /// `n × 1` pre-sigmoid scores.
    pub score_logits: Var,
    /// `n × 4` normalized boxes.
    pub boxes: Var,
}

/// Focal-loss prior: initial scores start near 0.01.
pub const SCORE_PRIOR_BIAS: f64 = -4.59511985013459;

impl DecoderLayer {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        ffn_dim: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let score_head = Linear::new(store, &format!("{name}.score"), d_model, 1, rng);
        store.get_mut(score_head.bias).set(0, 0, SCORE_PRIOR_BIAS);
        DecoderLayer {
            n_heads,
            sa_q: Linear::new(store, &format!("{name}.self.q"), d_model, d_model, rng),
            sa_k: Linear::new(store, &format!("{name}.self.k"), d_model, d_model, rng),
            sa_v: Linear::new(store, &format!("{name}.self.v"), d_model, d_model, rng),
            sa_out: Linear::new(store, &format!("{name}.self.out"), d_model, d_model, rng),
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), d_model),
            cross: ModulatedCrossAttention::new(
                store,
                &format!("{name}.cross"),
                d_model,
                n_heads,
                rng,
            ),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), d_model),
            ffn: Ffn::new(store, &format!("{name}.ffn"), d_model, ffn_dim, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), d_model),
            score_head,
            box_head: BoxHead::new(store, &format!("{name}.box"), d_model, rng),
        }
    }

    pub fn score_head(&self) -> &Linear {
        &self.score_head
    }

    /// Scores the content `x` with the shared classification head.
    pub fn score(&self, g: &mut Graph, store: &ParamStore, x: Var) -> Var {
        self.score_head.forward(g, store, x)
    }

    /// `query_pos` encodes the reference boxes whose inverse sigmoid is `ref_logits`.
    pub fn forward(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        contents: Var,
        query_pos: Var,
        ref_logits: Var,
        memory: Memory,
    ) -> DecoderOutput {
        let qk = g.add(contents, query_pos);
        let q = self.sa_q.forward(g, store, qk);
        let k = self.sa_k.forward(g, store, qk);
        let v = self.sa_v.forward(g, store, contents);
        let att = multi_head_attention(g, q, k, v, self.n_heads);
        let sa = self.sa_out.forward(g, store, att.output);
        let x = g.add(contents, sa);
        let x = self.norm1.forward(g, store, x);

        let ca = self.cross.forward(g, store, x, query_pos, memory);
        let x2 = g.add(x, ca.output);
        let x2 = self.norm2.forward(g, store, x2);

        let f = self.ffn.forward(g, store, x2);
        let x3 = g.add(x2, f);
        let embeddings = self.norm3.forward(g, store, x3);

        let score_logits = self.score_head.forward(g, store, embeddings);
        let delta = self.box_head.forward(g, store, embeddings, ref_logits);
        let logits = g.add(delta, ref_logits);
        let boxes = g.sigmoid(logits);
        DecoderOutput {
            embeddings,
            score_logits,
            boxes,
        }
    }
}
