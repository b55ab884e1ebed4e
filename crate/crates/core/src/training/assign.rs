use serde::{Deserialize, Serialize};

use crate::assignment::min_cost_assignment;
use crate::detsim::GtObject;
use crate::error::{Error, Result};
use crate::geometry::{giou, sigmoid, BoundingBox};

/// Loss weights and focal-loss shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub cls: f64,
    pub l1: f64,
    pub giou: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            cls: 2.0,
            l1: 5.0,
            giou: 2.0,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
        }
    }
}

impl LossConfig {
    pub fn weights(&self) -> [f64; 3] {
        [self.cls, self.l1, self.giou]
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.cls, self.l1, self.giou, self.focal_gamma];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(
                "loss weights must be finite and non-negative".into(),
            ));
        }
        if !(self.focal_alpha > 0.0 && self.focal_alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "focal_alpha {} outside (0, 1)",
                self.focal_alpha
            )));
        }
        Ok(())
    }
}

/// A decoded row as plain values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RowPrediction {
    pub logit: f64,
    pub bbox: BoundingBox,
}

/// Ground-truth identity per prediction row; `None` is background.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Assignment {
    pub rows: Vec<Option<u32>>,
}

impl Assignment {
    pub fn matched(&self) -> usize {
        self.rows.iter().filter(|r| r.is_some()).count()
    }
}

/// Classification part of the matching cost: positive focal term minus negative focal term.
pub fn focal_match_cost(logit: f64, alpha: f64, gamma: f64) -> f64 {
    let p = sigmoid(logit);
    let pos = alpha * (1.0 - p).powf(gamma) * -(p + 1e-8).ln();
    let neg = (1.0 - alpha) * p.powf(gamma) * -(1.0 - p + 1e-8).ln();
    pos - neg
}

/// Cost of explaining ground-truth box `gt` with prediction `pred`.
pub fn match_cost(pred: &RowPrediction, gt: &BoundingBox, cfg: &LossConfig) -> f64 {
    cfg.cls * focal_match_cost(pred.logit, cfg.focal_alpha, cfg.focal_gamma)
        + cfg.l1 * pred.bbox.l1(gt)
        + cfg.giou * (1.0 - giou(&pred.bbox, gt))
}

/// Labels one frame's rows: `carried` holds the identity of each track row,
/// `detections` the decoded detection rows that follow them.
///
/// Track rows keep their identity while it is visible and are background
/// otherwise. Visible identities not carried by any row are matched to
/// detection rows at minimum total cost.
pub fn assign_labels(
    carried: &[Option<u32>],
    detections: &[RowPrediction],
    gt: &[GtObject],
    cfg: &LossConfig,
) -> Assignment {
    let visible: Vec<&GtObject> = gt.iter().filter(|o| o.visible).collect();
    let mut rows: Vec<Option<u32>> = carried
        .iter()
        .map(|c| c.filter(|id| visible.iter().any(|o| o.id == *id)))
        .collect();
    let newborns: Vec<&GtObject> = visible
        .iter()
        .copied()
        .filter(|o| !carried.contains(&Some(o.id)))
        .collect();
    rows.extend(std::iter::repeat_n(None, detections.len()));
    if newborns.is_empty() || detections.is_empty() {
        return Assignment { rows };
    }
    let cost: Vec<Vec<f64>> = newborns
        .iter()
        .map(|o| {
            detections
                .iter()
                .map(|p| match_cost(p, &o.bbox, cfg))
                .collect()
        })
        .collect();
    for (o, col) in newborns.iter().zip(min_cost_assignment(&cost)) {
        if let Some(c) = col {
            rows[carried.len() + c] = Some(o.id);
        }
    }
    Assignment { rows }
}
