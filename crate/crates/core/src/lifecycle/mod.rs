//! Track birth, inactivity and removal, and query propagation across frames.

mod tracker;

pub use tracker::{FrameResult, Tracker};

use serde::{Deserialize, Serialize};

use crate::associator::{ObjectQuery, QueryKind};
use crate::error::{Error, Result};
use crate::geometry::{iou, BoundingBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrackState {
    Active,
    Inactive,
    Removed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifecycleConfig {
    /// Track queries scoring below this are marked inactive.
    pub tau_n: f64,
    /// Consecutive inactive frames after which a tracklet is removed.
    pub max_inactive: usize,
    /// Minimum score for a detection query to start a tracklet.
    pub tau_e: f64,
    /// EMA weight for the history query.
    pub ema_weight: f64,
    /// Optional guard: suppress newborns overlapping an active track at this IoU.
    pub dedup_iou: Option<f64>,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        LifecycleConfig {
            tau_n: 0.5,
            max_inactive: 20,
            tau_e: 0.5,
            ema_weight: 0.7,
            dedup_iou: None,
        }
    }
}

impl LifecycleConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!(
                    "{name} = {v} outside (0, 1)"
                )))
            }
        };
        unit("tau_n", self.tau_n)?;
        unit("tau_e", self.tau_e)?;
        if let Some(t) = self.dedup_iou {
            unit("dedup_iou", t)?;
        }
        if self.max_inactive == 0 {
            return Err(Error::InvalidArgument(
                "max_inactive must be at least 1".into(),
            ));
        }
        if !(self.ema_weight > 0.0 && self.ema_weight <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ema_weight {} outside (0, 1]",
                self.ema_weight
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracklet {
    pub id: u32,
    pub state: TrackState,
    pub query: ObjectQuery,
    pub history: Vec<f64>,
    pub miss_count: usize,
    pub birth_frame: usize,
}

/// One decoded query: embedding, box and score.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub embedding: Vec<f64>,
    pub bbox: BoundingBox,
    pub score: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub frame: usize,
    pub id: u32,
    pub bbox: BoundingBox,
    pub score: f64,
}

/// What changed in one step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepReport {
    pub records: Vec<OutputRecord>,
    pub born: Vec<u32>,
    pub removed: Vec<u32>,
}

/// All live tracklets of one stream, in id order.
#[derive(Debug, Clone, Default)]
pub struct TrackletSet {
    tracklets: Vec<Tracklet>,
    next_id: u32,
}

fn ema(current: &[f64], previous: &[f64], w: f64) -> Vec<f64> {
    current
        .iter()
        .zip(previous)
        .map(|(c, p)| w * c + (1.0 - w) * p)
        .collect()
}

impl TrackletSet {
    pub fn new() -> Self {
        TrackletSet {
            tracklets: Vec::new(),
            next_id: 1,
        }
    }

    /// Live (active or inactive) tracklets in id order.
    pub fn tracklets(&self) -> &[Tracklet] {
        &self.tracklets
    }

    pub fn len(&self) -> usize {
        self.tracklets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracklets.is_empty()
    }

    /// Track queries for the next frame. Inactive tracklets carry their last
    /// active content and box.
    pub fn propagate_queries(&self) -> Vec<ObjectQuery> {
        self.tracklets.iter().map(|t| t.query.clone()).collect()
    }

    /// Applies one frame of predictions. `predictions` holds one row per live
    /// tracklet (in id order) followed by one row per decoded detection query.
    pub fn step(
        &mut self,
        predictions: &[Prediction],
        frame: usize,
        cfg: &LifecycleConfig,
    ) -> Result<StepReport> {
        let n_tracks = self.tracklets.len();
        if predictions.len() < n_tracks {
            return Err(Error::Shape(format!(
                "{} predictions for {n_tracks} live tracklets",
                predictions.len()
            )));
        }
        let mut report = StepReport::default();

        for (t, p) in self.tracklets.iter_mut().zip(predictions) {
            if p.score >= cfg.tau_n {
                if p.embedding.len() != t.history.len() {
                    return Err(Error::Shape(
                        "prediction embedding width differs from track content".into(),
                    ));
                }
                t.state = TrackState::Active;
                t.miss_count = 0;
                t.history = ema(&p.embedding, &t.history, cfg.ema_weight);
                t.query.content = p.embedding.clone();
                t.query.bbox = p.bbox;
                t.query.score = p.score;
            } else {
                t.state = TrackState::Inactive;
                t.miss_count += 1;
                if t.miss_count >= cfg.max_inactive {
                    t.state = TrackState::Removed;
                    report.removed.push(t.id);
                }
            }
        }
        self.tracklets.retain(|t| t.state != TrackState::Removed);

        for p in &predictions[n_tracks..] {
            if p.score < cfg.tau_e {
                continue;
            }
            if let Some(thr) = cfg.dedup_iou {
                let clash = self
                    .tracklets
                    .iter()
                    .any(|t| t.state == TrackState::Active && iou(&t.query.bbox, &p.bbox) >= thr);
                if clash {
                    continue;
                }
            }
            let id = self.next_id;
            self.next_id += 1;
            self.tracklets.push(Tracklet {
                id,
                state: TrackState::Active,
                query: ObjectQuery {
                    content: p.embedding.clone(),
                    bbox: p.bbox,
                    score: p.score,
                    kind: QueryKind::Track,
                },
                history: p.embedding.clone(),
                miss_count: 0,
                birth_frame: frame,
            });
            report.born.push(id);
        }

        report.records = self
            .tracklets
            .iter()
            .filter(|t| t.state == TrackState::Active)
            .map(|t| OutputRecord {
                frame,
                id: t.id,
                bbox: t.query.bbox,
                score: t.query.score,
            })
            .collect();
        Ok(report)
    }
}
