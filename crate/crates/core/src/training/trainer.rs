use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::assign::LossConfig;
use super::augment::augment_clip;
use super::clip::{run_clip, TrainFrame};
use super::loss::LossParts;
use super::optim::{clip_grad_norm, AdamW, LrSchedule};
use crate::associator::AssociatorModel;
use crate::autograd::Graph;
use crate::detsim::{FrameObservation, GroundTruthSequence};
use crate::error::{Error, Result};

/// A sequence with its detector output, ready for clip sampling.
#[derive(Debug, Clone)]
pub struct TrainSequence {
    pub gt: GroundTruthSequence,
    pub observations: Vec<FrameObservation>,
}

impl TrainSequence {
    pub fn new(gt: GroundTruthSequence, observations: Vec<FrameObservation>) -> Result<Self> {
        if gt.frames.len() != observations.len() {
            return Err(Error::Shape(format!(
                "{} ground-truth frames but {} observations",
                gt.frames.len(),
                observations.len()
            )));
        }
        Ok(TrainSequence { gt, observations })
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn frames(&self, indices: &[usize]) -> Vec<TrainFrame<'_>> {
        indices
            .iter()
            .map(|&t| TrainFrame {
                gt: &self.gt.frames[t],
                obs: &self.observations[t],
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub clip_length: usize,
    pub lr: f64,
    /// Epochs (0-based) at which the rate is divided by `lr_drop`.
    pub lr_milestones: Vec<usize>,
    pub lr_drop: f64,
    pub loss: LossConfig,
    /// Probability of inserting a negative track query per frame.
    pub p_insert: f64,
    /// Probability of dropping each track query per frame.
    pub p_drop: f64,
    pub epochs: usize,
    /// Clips sampled per epoch.
    pub clips_per_epoch: usize,
    pub max_stride: usize,
    pub weight_decay: f64,
    /// Maximum joint gradient norm; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            clip_length: 9,
            lr: 1.2e-4,
            lr_milestones: vec![6, 10],
            lr_drop: 10.0,
            loss: LossConfig::default(),
            p_insert: 0.1,
            p_drop: 0.1,
            epochs: 12,
            clips_per_epoch: 64,
            max_stride: 3,
            weight_decay: 1e-4,
            grad_clip: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        if self.clip_length < 2 {
            return Err(Error::InvalidArgument(
                "clip_length must be at least 2".into(),
            ));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.lr_drop > 0.0) {
            return Err(Error::InvalidArgument(
                "lr and lr_drop must be positive".into(),
            ));
        }
        for (name, p) in [("p_insert", self.p_insert), ("p_drop", self.p_drop)] {
            if !(0.0..1.0).contains(&p) && p != 1.0 {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
        }
        if self.epochs == 0 || self.clips_per_epoch == 0 || self.max_stride == 0 {
            return Err(Error::InvalidArgument(
                "epochs, clips_per_epoch and max_stride must be positive".into(),
            ));
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return Err(Error::InvalidArgument(
                "weight_decay and grad_clip must be non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base: self.lr,
            milestones: self.lr_milestones.clone(),
            factor: self.lr_drop,
        }
    }
}

/// One optimizer step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRecord {
    pub epoch: usize,
    pub step: usize,
    pub lr: f64,
    pub parts: LossParts,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the step losses.
    pub mean: LossParts,
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub steps: Vec<LossRecord>,
    pub epochs: Vec<EpochSummary>,
}

/// Frame indices of a random contiguous clip with a random stride.
pub fn sample_clip(
    len: usize,
    clip_length: usize,
    max_stride: usize,
    rng: &mut impl Rng,
) -> Vec<usize> {
    if len <= clip_length {
        return (0..len).collect();
    }
    let feasible = ((len - 1) / (clip_length - 1)).min(max_stride).max(1);
    let stride = rng.random_range(1..=feasible);
    let span = (clip_length - 1) * stride + 1;
    let start = rng.random_range(0..=len - span);
    (0..clip_length).map(|i| start + i * stride).collect()
}

fn mean_parts(records: &[LossRecord]) -> LossParts {
    let n = records.len().max(1) as f64;
    let mut m = LossParts::default();
    for r in records {
        m.total += r.parts.total / n;
        m.cls += r.parts.cls / n;
        m.l1 += r.parts.l1 / n;
        m.giou += r.parts.giou / n;
        m.aux += r.parts.aux / n;
    }
    m
}

/// Trains `model` in place. `on_epoch` runs after every epoch (e.g. to write a checkpoint).
pub fn train(
    model: &mut AssociatorModel,
    data: &[TrainSequence],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochSummary, &AssociatorModel) -> Result<()>,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.iter().all(|s| s.len() < 2) {
        return Err(Error::InvalidArgument(
            "training needs a sequence with at least 2 frames".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut optim = AdamW::new(&model.params, cfg.weight_decay);
    let schedule = cfg.schedule();
    let mut report = TrainReport::default();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        let lr = schedule.lr_at(epoch);
        let first = report.steps.len();
        for _ in 0..cfg.clips_per_epoch {
            let seq = loop {
                let s = &data[rng.random_range(0..data.len())];
                if s.len() >= 2 {
                    break s;
                }
            };
            let indices = sample_clip(seq.len(), cfg.clip_length, cfg.max_stride, &mut rng);
            let directives = augment_clip(indices.len(), cfg.p_insert, cfg.p_drop, rng.random())?;
            let mut g = Graph::new();
            let run = run_clip(&mut g, model, &seq.frames(&indices), &directives, &cfg.loss)
                .map_err(|e| match e {
                    Error::Diverged { value, .. } => Error::Diverged { step, value },
                    e => e,
                })?;
            let value = run.loss.parts.total;
            if !value.is_finite() {
                return Err(Error::Diverged { step, value });
            }
            let grads = g.backward(run.loss.total);
            let mut grads = g.param_grads(&grads, &model.params);
            if cfg.grad_clip > 0.0 {
                let norm = clip_grad_norm(&mut grads, cfg.grad_clip);
                if !norm.is_finite() {
                    return Err(Error::Diverged { step, value: norm });
                }
            }
            optim.step(&mut model.params, &grads, lr)?;
            report.steps.push(LossRecord {
                epoch,
                step,
                lr,
                parts: run.loss.parts,
            });
            step += 1;
        }
        let summary = EpochSummary {
            epoch,
            lr,
            mean: mean_parts(&report.steps[first..]),
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (cls {:.4} l1 {:.4} giou {:.4} aux {:.4}) lr {lr:.2e}",
            summary.mean.total,
            summary.mean.cls,
            summary.mean.l1,
            summary.mean.giou,
            summary.mean.aux
        );
        on_epoch(&summary, model)?;
        report.epochs.push(summary);
    }
    Ok(report)
}

pub const LOSS_CURVE_HEADER: &str = "epoch,step,total,cls,l1,giou,aux";

pub fn write_loss_curve(path: &Path, steps: &[LossRecord]) -> Result<()> {
    let io = |e| Error::io(path, e);
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(f, "{LOSS_CURVE_HEADER}").map_err(io)?;
    for r in steps {
        let p = r.parts;
        writeln!(
            f,
            "{},{},{},{},{},{},{}",
            r.epoch, r.step, p.total, p.cls, p.l1, p.giou, p.aux
        )
        .map_err(io)?;
    }
    f.flush().map_err(io)
}
