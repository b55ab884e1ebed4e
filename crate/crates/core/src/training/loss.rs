use super::assign::LossConfig;
use crate::autograd::{Graph, Var};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::tensor::Matrix;

/// One frame's differentiable outputs.
#[derive(Debug, Clone, Copy)]
pub struct FrameOutputs {
    /// `n × 1`
    pub score_logits: Var,
    /// `n × 4`
    pub boxes: Var,
    /// Alignment-module scores and boxes, same row layout.
    pub aux: Option<(Var, Var)>,
}

/// Target box per row; `None` is background.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameTargets {
    pub rows: Vec<Option<BoundingBox>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub total: f64,
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub aux: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ClipLoss {
    pub total: Var,
    pub parts: LossParts,
    /// Matched objects across the clip (the normalizer, before flooring at 1).
    pub matched: usize,
}

struct Sums {
    cls: Var,
    l1: Option<Var>,
    giou: Option<Var>,
}

fn head_sums(
    g: &mut Graph,
    logits: Var,
    boxes: Var,
    targets: &FrameTargets,
    cfg: &LossConfig,
) -> Sums {
    let labels: Vec<f64> = targets
        .rows
        .iter()
        .map(|t| if t.is_some() { 1.0 } else { 0.0 })
        .collect();
    let cls = g.focal_loss_sum(logits, &labels, cfg.focal_alpha, cfg.focal_gamma);
    let positives: Vec<usize> = (0..targets.rows.len())
        .filter(|&i| targets.rows[i].is_some())
        .collect();
    if positives.is_empty() {
        return Sums {
            cls,
            l1: None,
            giou: None,
        };
    }
    let rows: Vec<Vec<f64>> = positives
        .iter()
        .map(|&i| targets.rows[i].expect("positive").to_array().to_vec())
        .collect();
    let target = Matrix::from_rows(&rows, 4);
    let picked = g.select_rows(boxes, &positives);
    Sums {
        cls,
        l1: Some(g.l1_loss_sum(picked, target.clone())),
        giou: Some(g.giou_loss_sum(picked, target)),
    }
}

fn weighted(g: &mut Graph, s: &Sums, cfg: &LossConfig) -> Var {
    let mut total = g.scale(s.cls, cfg.cls);
    if let Some(l1) = s.l1 {
        let t = g.scale(l1, cfg.l1);
        total = g.add(total, t);
    }
    if let Some(gi) = s.giou {
        let t = g.scale(gi, cfg.giou);
        total = g.add(total, t);
    }
    total
}

/// Clip loss: weighted focal, L1 and GIoU terms summed over all frames (and
/// over the alignment outputs where present), divided by the number of
/// matched objects in the whole clip.
pub fn compute_loss(
    g: &mut Graph,
    frames: &[(FrameOutputs, FrameTargets)],
    cfg: &LossConfig,
) -> Result<ClipLoss> {
    let matched: usize = frames
        .iter()
        .map(|(_, t)| t.rows.iter().filter(|r| r.is_some()).count())
        .sum();
    let norm = 1.0 / matched.max(1) as f64;
    let mut main_terms = Vec::new();
    let mut aux_terms = Vec::new();
    let mut parts = LossParts::default();
    for (out, targets) in frames {
        let n = g.shape(out.score_logits).0;
        if n != targets.rows.len() || g.shape(out.boxes).0 != n {
            return Err(Error::Shape(format!(
                "{} targets for {n} predicted rows",
                targets.rows.len()
            )));
        }
        let s = head_sums(g, out.score_logits, out.boxes, targets, cfg);
        parts.cls += cfg.cls * g.value(s.cls).get(0, 0) * norm;
        if let Some(v) = s.l1 {
            parts.l1 += cfg.l1 * g.value(v).get(0, 0) * norm;
        }
        if let Some(v) = s.giou {
            parts.giou += cfg.giou * g.value(v).get(0, 0) * norm;
        }
        main_terms.push(weighted(g, &s, cfg));
        if let Some((logits, boxes)) = out.aux {
            let s = head_sums(g, logits, boxes, targets, cfg);
            let w = weighted(g, &s, cfg);
            parts.aux += g.value(w).get(0, 0) * norm;
            aux_terms.push(w);
        }
    }
    let mut total = g.constant(Matrix::zeros(1, 1));
    for t in main_terms.into_iter().chain(aux_terms) {
        total = g.add(total, t);
    }
    let total = g.scale(total, norm);
    parts.total = g.value(total).get(0, 0);
    Ok(ClipLoss {
        total,
        parts,
        matched,
    })
}
