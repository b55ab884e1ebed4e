use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use tbdq_core::assignment::max_weight_assignment;
use tbdq_core::geometry::iou;

use crate::idf1::ids;
use crate::{frame, TrackBox};

/// Localization thresholds 0.05, 0.10, …, 0.95.
pub const ALPHAS: [f64; 19] = [
    0.05, 0.10, 0.15, 0.20, 0.25, 0.30, 0.35, 0.40, 0.45, 0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80,
    0.85, 0.90, 0.95,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HotaMetrics {
    pub hota: f64,
    pub det_a: f64,
    pub ass_a: f64,
    pub hota_per_alpha: Vec<f64>,
    pub det_a_per_alpha: Vec<f64>,
    pub ass_a_per_alpha: Vec<f64>,
    /// Per-α TP, FN, FP counts (kept for combining sequences).
    pub tp: Vec<usize>,
    pub fn_: Vec<usize>,
    pub fp: Vec<usize>,
    /// True when both inputs were empty and the 1.0 convention applied.
    pub empty: bool,
}

const EPS: f64 = f64::EPSILON;

/// HOTA following the reference evaluation-kit algorithm: per-frame matching
/// maximizes IoU weighted by a global trajectory alignment score, then each
/// α keeps the matched pairs with IoU ≥ α.
pub fn hota(gt: &[Vec<TrackBox>], pred: &[Vec<TrackBox>]) -> HotaMetrics {
    let n_frames = gt.len().max(pred.len());
    let gt_ids = ids(gt);
    let pr_ids = ids(pred);
    let na = ALPHAS.len();
    if gt_ids.is_empty() && pr_ids.is_empty() {
        return HotaMetrics {
            hota: 1.0,
            det_a: 1.0,
            ass_a: 1.0,
            hota_per_alpha: vec![1.0; na],
            det_a_per_alpha: vec![1.0; na],
            ass_a_per_alpha: vec![1.0; na],
            tp: vec![0; na],
            fn_: vec![0; na],
            fp: vec![0; na],
            empty: true,
        };
    }
    let gi: HashMap<u32, usize> = gt_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let pj: HashMap<u32, usize> = pr_ids.iter().enumerate().map(|(j, id)| (*id, j)).collect();
    let (ng, np) = (gt_ids.len(), pr_ids.len());

    let sims: Vec<Vec<Vec<f64>>> = (0..n_frames)
        .map(|t| {
            frame(gt, t)
                .iter()
                .map(|g| {
                    frame(pred, t)
                        .iter()
                        .map(|p| iou(&g.bbox, &p.bbox))
                        .collect()
                })
                .collect()
        })
        .collect();

    // Global alignment between every gt and predicted trajectory.
    let mut potential = vec![vec![0.0; np]; ng];
    let mut gt_count = vec![0.0; ng];
    let mut pr_count = vec![0.0; np];
    for t in 0..n_frames {
        let (g, p) = (frame(gt, t), frame(pred, t));
        let sim = &sims[t];
        let row_sum: Vec<f64> = sim.iter().map(|r| r.iter().sum()).collect();
        let col_sum: Vec<f64> = (0..p.len())
            .map(|j| sim.iter().map(|r| r[j]).sum())
            .collect();
        for (a, gb) in g.iter().enumerate() {
            for (b, pb) in p.iter().enumerate() {
                let denom = row_sum[a] + col_sum[b] - sim[a][b];
                if denom > EPS {
                    potential[gi[&gb.id]][pj[&pb.id]] += sim[a][b] / denom;
                }
            }
            gt_count[gi[&gb.id]] += 1.0;
        }
        for pb in p {
            pr_count[pj[&pb.id]] += 1.0;
        }
    }
    let align: Vec<Vec<f64>> = (0..ng)
        .map(|i| {
            (0..np)
                .map(|j| potential[i][j] / (gt_count[i] + pr_count[j] - potential[i][j]))
                .collect()
        })
        .collect();

    let mut tp = vec![0usize; na];
    let mut fn_ = vec![0usize; na];
    let mut fp = vec![0usize; na];
    let mut matches = vec![vec![vec![0.0; np]; ng]; na];
    for t in 0..n_frames {
        let (g, p) = (frame(gt, t), frame(pred, t));
        if g.is_empty() || p.is_empty() {
            for a in 0..na {
                fn_[a] += g.len();
                fp[a] += p.len();
            }
            continue;
        }
        let sim = &sims[t];
        let score: Vec<Vec<f64>> = g
            .iter()
            .enumerate()
            .map(|(a, gb)| {
                p.iter()
                    .enumerate()
                    .map(|(b, pb)| align[gi[&gb.id]][pj[&pb.id]] * sim[a][b])
                    .collect()
            })
            .collect();
        let pairs: Vec<(usize, usize)> = max_weight_assignment(&score)
            .into_iter()
            .enumerate()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
            .collect();
        for (a, alpha) in ALPHAS.iter().enumerate() {
            let kept: Vec<&(usize, usize)> = pairs
                .iter()
                .filter(|(r, c)| sim[*r][*c] >= alpha - EPS)
                .collect();
            tp[a] += kept.len();
            fn_[a] += g.len() - kept.len();
            fp[a] += p.len() - kept.len();
            for (r, c) in kept {
                matches[a][gi[&g[*r].id]][pj[&p[*c].id]] += 1.0;
            }
        }
    }

    let mut det_a = vec![0.0; na];
    let mut ass_a = vec![0.0; na];
    let mut h = vec![0.0; na];
    for a in 0..na {
        let mut acc = 0.0;
        for i in 0..ng {
            for j in 0..np {
                let m = matches[a][i][j];
                if m > 0.0 {
                    acc += m * m / (gt_count[i] + pr_count[j] - m).max(1.0);
                }
            }
        }
        ass_a[a] = acc / (tp[a].max(1)) as f64;
        det_a[a] = tp[a] as f64 / (tp[a] + fn_[a] + fp[a]).max(1) as f64;
        h[a] = (det_a[a] * ass_a[a]).sqrt();
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    HotaMetrics {
        hota: mean(&h),
        det_a: mean(&det_a),
        ass_a: mean(&ass_a),
        hota_per_alpha: h,
        det_a_per_alpha: det_a,
        ass_a_per_alpha: ass_a,
        tp,
        fn_,
        fp,
        empty: false,
    }
}
