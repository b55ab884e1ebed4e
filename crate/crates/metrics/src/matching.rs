use tbdq_core::assignment::max_weight_assignment;
use tbdq_core::geometry::iou;

use crate::{MetricsError, Result, TrackBox};

/// Matched `(gt index, pred index)` pairs of one frame, indices into the inputs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameMatch {
    pub pairs: Vec<(usize, usize)>,
    pub ious: Vec<f64>,
}

/// Maximum-cardinality matching among pairs with IoU ≥ `alpha`; among those,
/// maximum total IoU. Ties break in (gt id, pred id) order.
pub fn match_frame(gt: &[TrackBox], pred: &[TrackBox], alpha: f64) -> Result<FrameMatch> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(MetricsError::Threshold(alpha));
    }
    crate::check_unique(&[gt.to_vec(), pred.to_vec()])?;
    let mut gi: Vec<usize> = (0..gt.len()).collect();
    let mut pi: Vec<usize> = (0..pred.len()).collect();
    gi.sort_by_key(|&i| gt[i].id);
    pi.sort_by_key(|&j| pred[j].id);
    let sim: Vec<Vec<f64>> = gi
        .iter()
        .map(|&i| {
            pi.iter()
                .map(|&j| iou(&gt[i].bbox, &pred[j].bbox))
                .collect()
        })
        .collect();
    // Each admissible pair is worth more than any total IoU, so cardinality comes first.
    let bonus = (gt.len().min(pred.len()) + 1) as f64;
    let weight: Vec<Vec<f64>> = sim
        .iter()
        .map(|r| {
            r.iter()
                .map(|&s| if s >= alpha { bonus + s } else { 0.0 })
                .collect()
        })
        .collect();
    let mut out = FrameMatch::default();
    for (r, c) in max_weight_assignment(&weight).into_iter().enumerate() {
        if let Some(c) = c {
            if sim[r][c] >= alpha {
                out.pairs.push((gi[r], pi[c]));
                out.ious.push(sim[r][c]);
            }
        }
    }
    Ok(out)
}
