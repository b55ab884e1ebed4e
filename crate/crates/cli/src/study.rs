//! Train-then-evaluate runs comparing the learned tracker with the IoU baseline.

use tbdq_core::associator::AssociatorModel;
use tbdq_core::io::RunConfig;
use tbdq_core::training::{train, TrainSequence};
use tbdq_metrics::{combine, MetricsReport};

use crate::error::Result;
use crate::pipeline::{evaluate_run, generate, track, track_greedy, GeneratedSequence};

/// Training and held-out sets drawn from disjoint seed streams.
#[derive(Debug, Clone)]
pub struct StudyData {
    pub train: Vec<GeneratedSequence>,
    pub test: Vec<GeneratedSequence>,
}

pub fn study_data(
    cfg: &RunConfig,
    n_train: usize,
    n_test: usize,
    data_seed: u64,
) -> Result<StudyData> {
    Ok(StudyData {
        train: generate(cfg, data_seed, n_train)?,
        test: generate(cfg, data_seed ^ 0xA11CE, n_test)?,
    })
}

/// Trains a fresh model; `seed` sets both initialization and clip sampling.
pub fn train_model(
    cfg: &RunConfig,
    data: &[GeneratedSequence],
    seed: u64,
) -> Result<AssociatorModel> {
    let sequences = data
        .iter()
        .map(|s| TrainSequence::new(s.gt.clone(), s.observations.clone()))
        .collect::<tbdq_core::Result<Vec<_>>>()?;
    let mut model = AssociatorModel::new(cfg.associator.clone(), seed)?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    train(&mut model, &sequences, &train_cfg, |_, _| Ok(()))?;
    Ok(model)
}

/// Pooled metrics of the learned tracker over `data`.
pub fn score_model(
    cfg: &RunConfig,
    model: &AssociatorModel,
    data: &[GeneratedSequence],
) -> Result<MetricsReport> {
    let reports = data
        .iter()
        .map(|s| evaluate_run(&s.gt, &track(model, &cfg.lifecycle, &s.observations)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(&reports))
}

pub fn score_greedy(cfg: &RunConfig, data: &[GeneratedSequence]) -> Result<MetricsReport> {
    let reports = data
        .iter()
        .map(|s| evaluate_run(&s.gt, &track_greedy(&cfg.greedy, &s.observations)?))
        .collect::<Result<Vec<_>>>()?;
    Ok(combine(&reports))
}
