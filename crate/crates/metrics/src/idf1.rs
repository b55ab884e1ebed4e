use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tbdq_core::assignment::max_weight_assignment;
use tbdq_core::geometry::iou;

use crate::{frame, TrackBox};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdMetrics {
    pub idf1: f64,
    pub idtp: usize,
    pub idfp: usize,
    pub idfn: usize,
}

/// Frames in which trajectory pairs overlap at IoU ≥ 0.5, keyed by (gt id, pred id).
pub(crate) fn overlap_counts(
    gt: &[Vec<TrackBox>],
    pred: &[Vec<TrackBox>],
) -> BTreeMap<(u32, u32), usize> {
    let mut counts = BTreeMap::new();
    for t in 0..gt.len().max(pred.len()) {
        for g in frame(gt, t) {
            for p in frame(pred, t) {
                if iou(&g.bbox, &p.bbox) >= 0.5 {
                    *counts.entry((g.id, p.id)).or_insert(0) += 1;
                }
            }
        }
    }
    counts
}

/// Identity metrics from one global trajectory-to-trajectory matching that
/// maximizes the number of frames where matched trajectories overlap.
pub fn idf1(gt: &[Vec<TrackBox>], pred: &[Vec<TrackBox>]) -> IdMetrics {
    let gt_ids: Vec<u32> = ids(gt);
    let pred_ids: Vec<u32> = ids(pred);
    let n_gt: usize = gt.iter().map(Vec::len).sum();
    let n_pred: usize = pred.iter().map(Vec::len).sum();
    let counts = overlap_counts(gt, pred);
    let weight: Vec<Vec<f64>> = gt_ids
        .iter()
        .map(|g| {
            pred_ids
                .iter()
                .map(|p| *counts.get(&(*g, *p)).unwrap_or(&0) as f64)
                .collect()
        })
        .collect();
    let idtp: usize = max_weight_assignment(&weight)
        .into_iter()
        .enumerate()
        .filter_map(|(r, c)| c.map(|c| weight[r][c] as usize))
        .sum();
    let denom = n_gt + n_pred;
    IdMetrics {
        idf1: if denom == 0 {
            1.0
        } else {
            2.0 * idtp as f64 / denom as f64
        },
        idtp,
        idfp: n_pred - idtp,
        idfn: n_gt - idtp,
    }
}

pub(crate) fn ids(seq: &[Vec<TrackBox>]) -> Vec<u32> {
    let mut v: Vec<u32> = seq.iter().flatten().map(|b| b.id).collect();
    v.sort_unstable();
    v.dedup();
    v
}
