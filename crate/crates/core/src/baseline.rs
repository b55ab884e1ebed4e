//! IoU-only tracking-by-detection reference: Hungarian matching between each
//! track's last box and the current detections. No motion model, no appearance.

use serde::{Deserialize, Serialize};

use crate::assignment::max_weight_assignment;
use crate::detsim::FrameObservation;
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};
use crate::lifecycle::OutputRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyConfig {
    /// Minimum IoU for a track/detection pair to match.
    pub iou_gate: f64,
    /// Frames a track survives without a match.
    pub max_age: usize,
    /// Minimum score for an unmatched detection to start a track.
    pub tau_e: f64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        GreedyConfig {
            iou_gate: 0.3,
            max_age: 20,
            tau_e: 0.5,
        }
    }
}

impl GreedyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_gate > 0.0 && self.iou_gate < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "iou_gate = {} outside (0, 1)",
                self.iou_gate
            )));
        }
        if !(0.0..=1.0).contains(&self.tau_e) {
            return Err(Error::InvalidArgument(format!(
                "tau_e = {} outside [0, 1]",
                self.tau_e
            )));
        }
        if self.max_age == 0 {
            return Err(Error::InvalidArgument("max_age must be at least 1".into()));
        }
        Ok(())
    }
}

struct GreedyTrack {
    id: u32,
    bbox: BoundingBox,
    age: usize,
}

/// Tracks every frame; only tracks matched or born in a frame are reported for it.
pub fn greedy_track(frames: &[FrameObservation], cfg: &GreedyConfig) -> Result<Vec<OutputRecord>> {
    cfg.validate()?;
    let mut tracks: Vec<GreedyTrack> = Vec::new();
    let mut next_id = 1;
    let mut out = Vec::new();
    for (frame, obs) in frames.iter().enumerate() {
        let dets = &obs.detections;
        let sim: Vec<Vec<f64>> = tracks
            .iter()
            .map(|t| dets.iter().map(|d| iou(&t.bbox, &d.bbox)).collect())
            .collect();
        let gated: Vec<Vec<f64>> = sim
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&s| if s >= cfg.iou_gate { s } else { 0.0 })
                    .collect()
            })
            .collect();
        let mut det_taken = vec![false; dets.len()];
        let mut records = Vec::new();
        for (ti, c) in max_weight_assignment(&gated).into_iter().enumerate() {
            let track = &mut tracks[ti];
            match c.filter(|&c| sim[ti][c] >= cfg.iou_gate) {
                Some(c) => {
                    det_taken[c] = true;
                    track.bbox = dets[c].bbox;
                    track.age = 0;
                    records.push(OutputRecord {
                        frame,
                        id: track.id,
                        bbox: dets[c].bbox,
                        score: dets[c].score,
                    });
                }
                None => track.age += 1,
            }
        }
        tracks.retain(|t| t.age <= cfg.max_age);
        for (d, taken) in dets.iter().zip(&det_taken) {
            if !taken && d.score >= cfg.tau_e {
                tracks.push(GreedyTrack {
                    id: next_id,
                    bbox: d.bbox,
                    age: 0,
                });
                records.push(OutputRecord {
                    frame,
                    id: next_id,
                    bbox: d.bbox,
                    score: d.score,
                });
                next_id += 1;
            }
        }
        records.sort_by_key(|r| r.id);
        out.extend(records);
    }
    Ok(out)
}
