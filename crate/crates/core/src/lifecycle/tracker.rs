use super::{LifecycleConfig, OutputRecord, Prediction, StepReport, TrackletSet};
use crate::associator::{
    detection_queries, AssociatorModel, AttentionMaps, FrameForward, TrackInput,
};
use crate::autograd::Graph;
use crate::detsim::FrameObservation;
use crate::error::Result;
use crate::geometry::{sigmoid, BoundingBox};
use crate::tensor::Matrix;

/// Per-frame tracker output.
#[derive(Debug, Clone)]
pub struct FrameResult {
    pub records: Vec<OutputRecord>,
    pub report: StepReport,
    pub attention: Option<AttentionMaps>,
}

/// Runs the associator frame by frame and feeds its predictions to the lifecycle.
#[derive(Debug)]
pub struct Tracker<'a> {
    model: &'a AssociatorModel,
    config: LifecycleConfig,
    tracklets: TrackletSet,
    frame: usize,
}

/// Reads the frame's decoded rows back into plain predictions.
pub(crate) fn predictions(g: &Graph, out: &FrameForward) -> Vec<Prediction> {
    let emb = g.value(out.embeddings);
    let scores = g.value(out.score_logits);
    let boxes = g.value(out.boxes);
    (0..out.len())
        .map(|r| {
            let b = boxes.row(r);
            Prediction {
                embedding: emb.row(r).to_vec(),
                bbox: BoundingBox::clamped(b[0], b[1], b[2], b[3]),
                score: sigmoid(scores.get(r, 0)),
            }
        })
        .collect()
}

impl<'a> Tracker<'a> {
    pub fn new(model: &'a AssociatorModel, config: LifecycleConfig) -> Result<Self> {
        config.validate()?;
        Ok(Tracker {
            model,
            config,
            tracklets: TrackletSet::new(),
            frame: 0,
        })
    }

    pub fn tracklets(&self) -> &TrackletSet {
        &self.tracklets
    }

    /// Processes the next frame; frames are numbered from 0.
    pub fn step(&mut self, obs: &FrameObservation, capture_attention: bool) -> Result<FrameResult> {
        let mut g = Graph::new();
        let tracks: Vec<TrackInput> = self
            .tracklets
            .tracklets()
            .iter()
            .map(|t| TrackInput {
                content: g.constant(Matrix::row_vector(&t.query.content)),
                bbox: t.query.bbox,
                history: g.constant(Matrix::row_vector(&t.history)),
            })
            .collect();
        let dets = detection_queries(&obs.detections);
        let out = self.model.forward_frame(
            &mut g,
            &dets,
            &tracks,
            &obs.features,
            &obs.positions,
            capture_attention,
        )?;
        let preds = predictions(&g, &out);
        let report = self.tracklets.step(&preds, self.frame, &self.config)?;
        self.frame += 1;
        Ok(FrameResult {
            records: report.records.clone(),
            report,
            attention: out.attention,
        })
    }

    /// Tracks a whole sequence, returning every frame's active records.
    pub fn run(
        model: &'a AssociatorModel,
        config: LifecycleConfig,
        frames: &[FrameObservation],
    ) -> Result<Vec<OutputRecord>> {
        let mut tracker = Tracker::new(model, config)?;
        let mut all = Vec::new();
        for obs in frames {
            all.extend(tracker.step(obs, false)?.records);
        }
        Ok(all)
    }
}
