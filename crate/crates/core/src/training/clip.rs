use super::assign::{assign_labels, Assignment, LossConfig, RowPrediction};
use super::augment::FrameDirective;
use super::loss::{compute_loss, ClipLoss, FrameOutputs, FrameTargets};
use crate::associator::bii::update_history_var;
use crate::associator::{detection_queries, AssociatorModel, TrackInput};
use crate::autograd::{Graph, Var};
use crate::detsim::{FrameObservation, GtObject};
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

/// One supervised frame.
#[derive(Debug, Clone, Copy)]
pub struct TrainFrame<'a> {
    pub gt: &'a [GtObject],
    pub obs: &'a FrameObservation,
}

/// A track-query slot carried through the clip.
#[derive(Debug, Clone, Copy)]
struct Slot {
    uid: usize,
    identity: Option<u32>,
    content: Var,
    history: Var,
    bbox: BoundingBox,
    negative: bool,
}

/// Identity carried by each slot in one frame, keyed by slot uid.
pub type SlotBindings = Vec<(usize, Option<u32>)>;

#[derive(Debug, Clone)]
pub struct ClipRun {
    pub loss: ClipLoss,
    pub assignments: Vec<Assignment>,
    /// Slot bindings as labeled in each frame.
    pub bindings: Vec<SlotBindings>,
}

fn rows_of(
    boxes: &crate::tensor::Matrix,
    logits: &crate::tensor::Matrix,
    range: std::ops::Range<usize>,
) -> Vec<RowPrediction> {
    range
        .map(|r| {
            let b = boxes.row(r);
            RowPrediction {
                logit: logits.get(r, 0),
                bbox: BoundingBox::clamped(b[0], b[1], b[2], b[3]),
            }
        })
        .collect()
}

/// Runs the model over a clip with MOTR-style label propagation and returns
/// the clip loss. `directives` must have one entry per frame.
pub fn run_clip(
    g: &mut Graph,
    model: &AssociatorModel,
    frames: &[TrainFrame<'_>],
    directives: &[FrameDirective],
    loss_cfg: &LossConfig,
) -> Result<ClipRun> {
    if directives.len() != frames.len() {
        return Err(Error::Shape(format!(
            "{} directives for {} frames",
            directives.len(),
            frames.len()
        )));
    }
    let w = model.config().ema_weight;
    let mut slots: Vec<Slot> = Vec::new();
    let mut next_uid = 0;
    // Best unmatched detection row of the previous frame: (content, box).
    let mut spare: Option<(Var, BoundingBox)> = None;
    let mut supervised = Vec::with_capacity(frames.len());
    let mut assignments = Vec::with_capacity(frames.len());
    let mut bindings = Vec::with_capacity(frames.len());

    for (frame, directive) in frames.iter().zip(directives) {
        let mut k = 0;
        slots.retain(|_| {
            let keep = !directive.drops(k);
            k += 1;
            keep
        });
        if directive.insert_negative {
            if let Some((content, bbox)) = spare {
                slots.push(Slot {
                    uid: next_uid,
                    identity: None,
                    content,
                    history: content,
                    bbox,
                    negative: true,
                });
                next_uid += 1;
            }
        }

        let tracks: Vec<TrackInput> = slots
            .iter()
            .map(|s| TrackInput {
                content: s.content,
                bbox: s.bbox,
                history: s.history,
            })
            .collect();
        let dets = detection_queries(&frame.obs.detections);
        let out = model.forward_frame(
            g,
            &dets,
            &tracks,
            &frame.obs.features,
            &frame.obs.positions,
            false,
        )?;
        let logits = g.stop_gradient_value(out.score_logits);
        let boxes = g.stop_gradient_value(out.boxes);
        if let Some(&value) = logits
            .data()
            .iter()
            .chain(boxes.data())
            .find(|v| !v.is_finite())
        {
            return Err(Error::Diverged { step: 0, value });
        }
        let n_tracks = slots.len();
        let det_rows = rows_of(&boxes, &logits, n_tracks..out.len());
        let carried: Vec<Option<u32>> = slots.iter().map(|s| s.identity).collect();
        let assignment = assign_labels(&carried, &det_rows, frame.gt, loss_cfg);

        let gt_box = |id: u32| frame.gt.iter().find(|o| o.id == id).map(|o| o.bbox);
        let targets = FrameTargets {
            rows: assignment.rows.iter().map(|r| r.and_then(gt_box)).collect(),
        };
        supervised.push((
            FrameOutputs {
                score_logits: out.score_logits,
                boxes: out.boxes,
                aux: out.aux.as_ref().map(|a| (a.score_logits, a.boxes)),
            },
            targets,
        ));
        bindings.push(
            slots
                .iter()
                .map(|s| (s.uid, s.identity))
                .collect::<SlotBindings>(),
        );

        // Carry slots into the next frame.
        let mut next = Vec::with_capacity(slots.len());
        for (row, slot) in slots.iter().enumerate() {
            if slot.negative {
                continue;
            }
            let id = slot.identity.expect("non-negative slots are bound");
            match frame.gt.iter().find(|o| o.id == id) {
                None => continue, // left the scene
                Some(o) if !o.visible => next.push(*slot),
                Some(_) => {
                    let content = g.select_rows(out.embeddings, &[row]);
                    let history = update_history_var(g, content, slot.history, w);
                    let b = boxes.row(row);
                    next.push(Slot {
                        content,
                        history,
                        bbox: BoundingBox::clamped(b[0], b[1], b[2], b[3]),
                        ..*slot
                    });
                }
            }
        }
        spare = None;
        let mut best = f64::NEG_INFINITY;
        for (j, pred) in det_rows.iter().enumerate() {
            let row = n_tracks + j;
            match assignment.rows[row] {
                Some(id) => {
                    let content = g.select_rows(out.embeddings, &[row]);
                    next.push(Slot {
                        uid: next_uid,
                        identity: Some(id),
                        content,
                        history: content,
                        bbox: pred.bbox,
                        negative: false,
                    });
                    next_uid += 1;
                }
                None if pred.logit > best => {
                    best = pred.logit;
                    spare = Some((g.select_rows(out.embeddings, &[row]), pred.bbox));
                }
                None => {}
            }
        }
        slots = next;
        assignments.push(assignment);
    }

    let loss = compute_loss(g, &supervised, loss_cfg)?;
    Ok(ClipRun {
        loss,
        assignments,
        bindings,
    })
}
