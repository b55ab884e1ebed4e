use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::matching::match_frame;
use crate::{frame, Result, TrackBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClearMetrics {
    /// NaN when there is no ground truth; see `defined`.
    pub mota: f64,
    pub defined: bool,
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub idsw: usize,
    pub gt: usize,
}

/// CLEAR-MOT counts at IoU 0.5. An identity switch is a matched ground-truth
/// object whose predicted id differs from the one it was last matched to.
pub fn clear_metrics(gt: &[Vec<TrackBox>], pred: &[Vec<TrackBox>]) -> Result<ClearMetrics> {
    let n = gt.len().max(pred.len());
    let mut last: HashMap<u32, u32> = HashMap::new();
    let (mut tp, mut fp, mut fn_, mut idsw, mut total) = (0, 0, 0, 0, 0);
    for t in 0..n {
        let (g, p) = (frame(gt, t), frame(pred, t));
        let m = match_frame(g, p, 0.5)?;
        total += g.len();
        tp += m.pairs.len();
        fn_ += g.len() - m.pairs.len();
        fp += p.len() - m.pairs.len();
        for &(i, j) in &m.pairs {
            if let Some(prev) = last.insert(g[i].id, p[j].id) {
                if prev != p[j].id {
                    idsw += 1;
                }
            }
        }
    }
    let defined = total > 0;
    let mota = if defined {
        1.0 - (fn_ + fp + idsw) as f64 / total as f64
    } else {
        f64::NAN
    };
    Ok(ClearMetrics {
        mota,
        defined,
        tp,
        fp,
        fn_,
        idsw,
        gt: total,
    })
}
