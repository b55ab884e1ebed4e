//! In-memory versions of the CLI stages, shared by the commands and the studies.

use tbdq_core::associator::AssociatorModel;
use tbdq_core::baseline::{greedy_track, GreedyConfig};
use tbdq_core::detsim::{
    frame_seed, generate_sequence, Detector, FrameObservation, GroundTruthSequence,
};
use tbdq_core::io::{MotRecord, RunConfig};
use tbdq_core::lifecycle::{LifecycleConfig, OutputRecord, Tracker};
use tbdq_core::BoundingBox;
use tbdq_metrics::{evaluate, MetricsReport, Sequence, TrackBox};

use crate::error::Result;

/// One synthetic sequence with its emulated detections.
#[derive(Debug, Clone)]
pub struct GeneratedSequence {
    pub gt: GroundTruthSequence,
    pub observations: Vec<FrameObservation>,
}

/// `n` sequences; sequence `i` draws from `frame_seed(seed, i)`.
pub fn generate(cfg: &RunConfig, seed: u64, n: usize) -> Result<Vec<GeneratedSequence>> {
    let detector = Detector::new(cfg.detector.clone())?;
    (0..n)
        .map(|i| {
            let s = frame_seed(seed, i);
            let gt = generate_sequence(&cfg.scene, s)?;
            let observations = detector.detect_sequence(&gt, &cfg.noise, s ^ 0x5EED)?;
            Ok(GeneratedSequence { gt, observations })
        })
        .collect()
}

pub fn track(
    model: &AssociatorModel,
    lifecycle: &LifecycleConfig,
    obs: &[FrameObservation],
) -> Result<Vec<OutputRecord>> {
    Ok(Tracker::run(model, lifecycle.clone(), obs)?)
}

pub fn track_greedy(cfg: &GreedyConfig, obs: &[FrameObservation]) -> Result<Vec<OutputRecord>> {
    Ok(greedy_track(obs, cfg)?)
}

/// Visible ground-truth objects per frame.
pub fn gt_boxes(gt: &GroundTruthSequence) -> Sequence {
    gt.frames
        .iter()
        .map(|f| {
            f.iter()
                .filter(|o| o.visible)
                .map(|o| TrackBox {
                    id: o.id,
                    bbox: o.bbox,
                })
                .collect()
        })
        .collect()
}

pub fn output_boxes(records: &[OutputRecord], n_frames: usize) -> Sequence {
    let n = records
        .iter()
        .map(|r| r.frame + 1)
        .max()
        .unwrap_or(0)
        .max(n_frames);
    let mut seq: Sequence = vec![Vec::new(); n];
    for r in records {
        seq[r.frame].push(TrackBox {
            id: r.id,
            bbox: r.bbox,
        });
    }
    seq
}

pub fn evaluate_run(gt: &GroundTruthSequence, records: &[OutputRecord]) -> Result<MetricsReport> {
    let g = gt_boxes(gt);
    Ok(evaluate(&g, &output_boxes(records, g.len()))?)
}

/// MOT records (pixels) to metric sequences. Each axis is rescaled so every
/// box fits the unit square; IoU is unchanged by per-axis affine maps.
/// Ground-truth rows with `conf == 0` are dropped.
pub fn mot_to_sequences(gt: &[MotRecord], pred: &[MotRecord]) -> (Sequence, Sequence) {
    let all = gt.iter().chain(pred);
    let (mut x0, mut y0, mut x1, mut y1) = (
        f64::INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::NEG_INFINITY,
    );
    for r in all {
        x0 = x0.min(r.bb_left);
        y0 = y0.min(r.bb_top);
        x1 = x1.max(r.bb_left + r.bb_width);
        y1 = y1.max(r.bb_top + r.bb_height);
    }
    let sx = if x1 > x0 { x1 - x0 } else { 1.0 };
    let sy = if y1 > y0 { y1 - y0 } else { 1.0 };
    let n = gt
        .iter()
        .chain(pred)
        .map(|r| r.frame as usize)
        .max()
        .unwrap_or(0);
    let convert = |records: &[MotRecord], keep: &dyn Fn(&MotRecord) -> bool| {
        let mut seq: Sequence = vec![Vec::new(); n];
        for r in records.iter().filter(|r| keep(r)) {
            let bbox = BoundingBox::clamped(
                (r.bb_left + r.bb_width / 2.0 - x0) / sx,
                (r.bb_top + r.bb_height / 2.0 - y0) / sy,
                r.bb_width / sx,
                r.bb_height / sy,
            );
            seq[r.frame as usize - 1].push(TrackBox {
                id: r.id as u32,
                bbox,
            });
        }
        seq
    };
    (convert(gt, &|r| r.conf > 0.0), convert(pred, &|_| true))
}
