//! Brute-force and scalar-loop references shared by the smoke and acceptance targets.

use rand::Rng;
use tbdq_core::geometry::iou;
use tbdq_core::{BoundingBox, Matrix};
use tbdq_metrics::{Sequence, TrackBox};

/// `softmax(QKᵀ/√d)·V1 + V2`, one scalar at a time.
pub fn scalar_bii(q: &Matrix, k: &Matrix, v1: &Matrix, v2: &Matrix) -> Matrix {
    let d = q.cols();
    let mut out = Matrix::zeros(q.rows(), d);
    for i in 0..q.rows() {
        let mut logits = vec![0.0; k.rows()];
        for (j, l) in logits.iter_mut().enumerate() {
            let mut s = 0.0;
            for c in 0..d {
                s += q.get(i, c) * k.get(j, c);
            }
            *l = s / (d as f64).sqrt();
        }
        let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
        for c in 0..d {
            let mut acc = 0.0;
            for (j, l) in logits.iter().enumerate() {
                acc += (l - m).exp() / z * v1.get(j, c);
            }
            out.set(i, c, acc + v2.get(i, c));
        }
    }
    out
}

pub fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Life {
    Active,
    Inactive(usize),
    Gone,
}

/// Tracklet state after each score, as a transition table.
pub fn reference_lifecycle(scores: &[f64], tau_n: f64, t_max: usize) -> Vec<Life> {
    let mut s = Life::Active;
    scores
        .iter()
        .map(|&x| {
            s = match (s, x >= tau_n) {
                (Life::Gone, _) => Life::Gone,
                (_, true) => Life::Active,
                (Life::Active, false) if t_max == 1 => Life::Gone,
                (Life::Active, false) => Life::Inactive(1),
                (Life::Inactive(k), false) if k + 1 == t_max => Life::Gone,
                (Life::Inactive(k), false) => Life::Inactive(k + 1),
            };
            s
        })
        .collect()
}

fn bx(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
    BoundingBox::new(cx, cy, w, h).unwrap()
}

/// Boxes jittered around three overlapping anchors so that matches are contested.
pub fn random_sequence(rng: &mut impl Rng, n_ids: u32, frames: usize, id_base: u32) -> Sequence {
    let anchors = [
        bx(0.3, 0.3, 0.2, 0.2),
        bx(0.6, 0.6, 0.2, 0.2),
        bx(0.32, 0.6, 0.2, 0.2),
    ];
    (0..frames)
        .map(|_| {
            (0..n_ids)
                .filter_map(|id| {
                    if rng.random_bool(0.25) {
                        return None;
                    }
                    let a = anchors[rng.random_range(0..anchors.len())];
                    let b = bx(a.cx + rng.random_range(-0.03..0.03), a.cy, a.w, a.h);
                    Some(TrackBox {
                        id: id_base + id,
                        bbox: b,
                    })
                })
                .collect()
        })
        .collect()
}

/// Best (match count, total IoU) over all partial assignments.
pub fn brute_match(gt: &[TrackBox], pred: &[TrackBox], alpha: f64) -> (usize, f64) {
    fn go(
        i: usize,
        gt: &[TrackBox],
        pred: &[TrackBox],
        used: &mut Vec<bool>,
        alpha: f64,
    ) -> (usize, f64) {
        if i == gt.len() {
            return (0, 0.0);
        }
        let mut best = go(i + 1, gt, pred, used, alpha);
        for j in 0..pred.len() {
            let s = iou(&gt[i].bbox, &pred[j].bbox);
            if used[j] || s < alpha {
                continue;
            }
            used[j] = true;
            let (c, w) = go(i + 1, gt, pred, used, alpha);
            used[j] = false;
            let cand = (c + 1, w + s);
            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 > best.1 + 1e-12) {
                best = cand;
            }
        }
        best
    }
    go(0, gt, pred, &mut vec![false; pred.len()], alpha)
}

fn ids(s: &Sequence) -> Vec<u32> {
    let mut v: Vec<u32> = s.iter().flatten().map(|b| b.id).collect();
    v.sort_unstable();
    v.dedup();
    v
}

/// Maximum identity-true-positive count over all one-to-one id pairings.
pub fn brute_idtp(gt: &Sequence, pred: &Sequence) -> usize {
    let (gi, pi) = (ids(gt), ids(pred));
    let overlap = |g: u32, p: u32| {
        gt.iter()
            .zip(pred)
            .filter(|(fg, fp)| {
                let a = fg.iter().find(|b| b.id == g);
                let b = fp.iter().find(|b| b.id == p);
                matches!((a, b), (Some(a), Some(b)) if iou(&a.bbox, &b.bbox) >= 0.5)
            })
            .count()
    };
    fn go(
        i: usize,
        gi: &[u32],
        pi: &[u32],
        used: &mut Vec<bool>,
        f: &dyn Fn(u32, u32) -> usize,
    ) -> usize {
        if i == gi.len() {
            return 0;
        }
        let mut best = go(i + 1, gi, pi, used, f);
        for j in 0..pi.len() {
            if !used[j] {
                used[j] = true;
                best = best.max(f(gi[i], pi[j]) + go(i + 1, gi, pi, used, f));
                used[j] = false;
            }
        }
        best
    }
    go(0, &gi, &pi, &mut vec![false; pi.len()], &overlap)
}
