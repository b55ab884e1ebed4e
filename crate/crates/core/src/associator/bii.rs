//! Bidirectional interaction between detection and track queries.
//!
//! One block computes
//!
//! ```text
//! O1 = softmax(Q Kᵀ / √d) · V1
//! O2 = norm(O1 + V2)
//! O3 = norm(FFN(O2) + O2)
//! ```
//!
//! where `V1` feeds the aggregation and `V2` is the residual base. The
//! detection and track updates each own a separate block.

use rand::Rng;

use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::nn::{multi_head_attention, Ffn, LayerNorm, Linear, ParamStore};
use crate::tensor::Matrix;

/// Inputs to one interaction call.
#[derive(Debug, Clone, Copy)]
pub struct AttentionBundle {
    pub q: Var,
    pub k: Var,
    pub v1: Var,
    pub v2: Var,
}

impl AttentionBundle {
    pub fn new(g: &Graph, q: Var, k: Var, v1: Var, v2: Var) -> Result<Self> {
        let (qs, ks, v1s, v2s) = (g.shape(q), g.shape(k), g.shape(v1), g.shape(v2));
        if ks.0 != v1s.0 {
            return Err(Error::Shape(format!(
                "K has {} rows but V1 has {}",
                ks.0, v1s.0
            )));
        }
        if qs.0 != v2s.0 {
            return Err(Error::Shape(format!(
                "Q has {} rows but V2 has {}",
                qs.0, v2s.0
            )));
        }
        let d = qs.1;
        if ks.1 != d || v1s.1 != d || v2s.1 != d {
            return Err(Error::Shape(format!(
                "widths differ: Q {} K {} V1 {} V2 {}",
                qs.1, ks.1, v1s.1, v2s.1
            )));
        }
        if ks.0 == 0 && qs.0 > 0 {
            return Err(Error::Shape("attention over zero keys".into()));
        }
        Ok(AttentionBundle { q, k, v1, v2 })
    }
}

#[derive(Debug, Clone)]
struct Projections {
    q: Linear,
    k: Linear,
    v: Linear,
    out: Linear,
}

#[derive(Debug, Clone)]
pub struct BiiBlock {
    n_heads: usize,
    projections: Option<Projections>,
    ffn: Ffn,
    norms: Option<(LayerNorm, LayerNorm)>,
}

#[derive(Debug, Clone)]
pub struct BiiOutput {
    pub o3: Var,
    /// Per-head attention weights over the keys.
    pub weights: Vec<Var>,
}

impl BiiBlock {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        d_model: usize,
        n_heads: usize,
        ffn_dim: usize,
        learned_projections: bool,
        rng: &mut impl Rng,
    ) -> Self {
        let projections = learned_projections.then(|| Projections {
            q: Linear::new(store, &format!("{name}.q"), d_model, d_model, rng),
            k: Linear::new(store, &format!("{name}.k"), d_model, d_model, rng),
            v: Linear::new(store, &format!("{name}.v"), d_model, d_model, rng),
            out: Linear::new(store, &format!("{name}.out"), d_model, d_model, rng),
        });
        BiiBlock {
            n_heads: if learned_projections { n_heads } else { 1 },
            projections,
            ffn: Ffn::new(store, &format!("{name}.ffn"), d_model, ffn_dim, rng),
            norms: Some((
                LayerNorm::new(store, &format!("{name}.norm1"), d_model),
                LayerNorm::new(store, &format!("{name}.norm2"), d_model),
            )),
        }
    }

    /// The bare formula: one head, no projections, zero FFN, identity norm.
    pub fn literal(store: &mut ParamStore, name: &str, d_model: usize, rng: &mut impl Rng) -> Self {
        let block = BiiBlock {
            n_heads: 1,
            projections: None,
            ffn: Ffn::new(store, &format!("{name}.ffn"), d_model, d_model, rng),
            norms: None,
        };
        block.ffn.zero_out(store);
        block
    }

    /// Sets every learned projection to the identity map.
    pub fn set_identity_projections(&self, store: &mut ParamStore) {
        if let Some(p) = &self.projections {
            for lin in [&p.q, &p.k, &p.v, &p.out] {
                lin.set_identity(store);
            }
        }
    }

    pub fn ffn(&self) -> &Ffn {
        &self.ffn
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, b: AttentionBundle) -> BiiOutput {
        let (o1, weights) = match &self.projections {
            Some(p) => {
                let q = p.q.forward(g, store, b.q);
                let k = p.k.forward(g, store, b.k);
                let v = p.v.forward(g, store, b.v1);
                let att = multi_head_attention(g, q, k, v, self.n_heads);
                (p.out.forward(g, store, att.output), att.weights)
            }
            None => {
                let att = multi_head_attention(g, b.q, b.k, b.v1, 1);
                (att.output, att.weights)
            }
        };
        let r1 = g.add(o1, b.v2);
        let o2 = match &self.norms {
            Some((n1, _)) => n1.forward(g, store, r1),
            None => r1,
        };
        let f = self.ffn.forward(g, store, o2);
        let r2 = g.add(f, o2);
        let o3 = match &self.norms {
            Some((_, n2)) => n2.forward(g, store, r2),
            None => r2,
        };
        BiiOutput { o3, weights }
    }
}

/// Content and positional parts of a set of queries, already on the tape.
#[derive(Debug, Clone, Copy)]
pub struct QuerySet {
    pub content: Var,
    pub position: Var,
}

/// Detection update: `Q = D̃`, `K = [D̃; T̃]`, `V1 = [D; N]`, `V2 = D`.
pub fn update_detection_queries(
    g: &mut Graph,
    store: &ParamStore,
    block: &BiiBlock,
    dets: QuerySet,
    tracks: Option<QuerySet>,
    noisy: Var,
) -> Result<BiiOutput> {
    let d_full = g.add(dets.content, dets.position);
    let (k, v1) = match tracks {
        Some(t) => {
            if g.shape(noisy).0 != g.shape(t.content).0 {
                return Err(Error::Shape(format!(
                    "{} noisy rows for {} track queries",
                    g.shape(noisy).0,
                    g.shape(t.content).0
                )));
            }
            let t_full = g.add(t.content, t.position);
            (
                g.concat_rows(&[d_full, t_full]),
                g.concat_rows(&[dets.content, noisy]),
            )
        }
        None => (d_full, dets.content),
    };
    let bundle = AttentionBundle::new(g, d_full, k, v1, dets.content)?;
    Ok(block.forward(g, store, bundle))
}

/// Track update: `Q = T̃`, `K = [D̃; H̃]`, `V1 = [D; H]`, `V2 = T`, with `H̃`
/// sharing the track queries' positional part.
pub fn update_track_queries(
    g: &mut Graph,
    store: &ParamStore,
    block: &BiiBlock,
    tracks: QuerySet,
    history: Var,
    dets: Option<QuerySet>,
) -> Result<BiiOutput> {
    if g.shape(history) != g.shape(tracks.content) {
        return Err(Error::Shape("history must match track contents".into()));
    }
    let t_full = g.add(tracks.content, tracks.position);
    let h_full = g.add(history, tracks.position);
    let (k, v1) = match dets {
        Some(d) => {
            let d_full = g.add(d.content, d.position);
            (
                g.concat_rows(&[d_full, h_full]),
                g.concat_rows(&[d.content, history]),
            )
        }
        None => (h_full, history),
    };
    let bundle = AttentionBundle::new(g, t_full, k, v1, tracks.content)?;
    Ok(block.forward(g, store, bundle))
}

/// EMA history: `H = T` at birth, otherwise `H = w·T + (1 − w)·H_prev`.
pub fn update_history(current: &Matrix, previous: Option<&Matrix>, w: f64) -> Result<Matrix> {
    if !(w > 0.0 && w <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "EMA weight {w} outside (0, 1]"
        )));
    }
    match previous {
        None => Ok(current.clone()),
        Some(prev) => {
            if prev.shape() != current.shape() {
                return Err(Error::Shape(format!(
                    "history {:?} vs current {:?}",
                    prev.shape(),
                    current.shape()
                )));
            }
            Ok(current.zip_map(prev, |t, h| w * t + (1.0 - w) * h))
        }
    }
}

/// Tape version of [`update_history`] for an existing history.
pub fn update_history_var(g: &mut Graph, current: Var, previous: Var, w: f64) -> Var {
    let a = g.scale(current, w);
    let b = g.scale(previous, 1.0 - w);
    g.add(a, b)
}
