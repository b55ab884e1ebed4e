//! Normalized box algebra.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest admissible width/height for a normalized box.
pub const MIN_EXTENT: f64 = 1e-6;

/// Axis-aligned box in normalized `(cx, cy, w, h)` form, relative to the frame extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    /// Builds a box, rejecting centers outside `[0,1]` and extents outside `(0,1]`.
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        let b = BoundingBox { cx, cy, w, h };
        if b.is_valid() {
            Ok(b)
        } else {
            Err(Error::InvalidArgument(format!(
                "box ({cx}, {cy}, {w}, {h}) outside normalized range"
            )))
        }
    }

    /// Builds a box, clamping every field into its valid range.
    pub fn clamped(cx: f64, cy: f64, w: f64, h: f64) -> Self {
        BoundingBox {
            cx: cx.clamp(0.0, 1.0),
            cy: cy.clamp(0.0, 1.0),
            w: w.clamp(MIN_EXTENT, 1.0),
            h: h.clamp(MIN_EXTENT, 1.0),
        }
    }

    pub fn is_valid(&self) -> bool {
        let unit = |v: f64| v.is_finite() && (0.0..=1.0).contains(&v);
        unit(self.cx)
            && unit(self.cy)
            && unit(self.w)
            && unit(self.h)
            && self.w > 0.0
            && self.h > 0.0
    }

    pub fn from_xyxy(x1: f64, y1: f64, x2: f64, y2: f64) -> Self {
        BoundingBox {
            cx: 0.5 * (x1 + x2),
            cy: 0.5 * (y1 + y2),
            w: x2 - x1,
            h: y2 - y1,
        }
    }

    pub fn to_xyxy(&self) -> [f64; 4] {
        [
            self.cx - 0.5 * self.w,
            self.cy - 0.5 * self.h,
            self.cx + 0.5 * self.w,
            self.cy + 0.5 * self.h,
        ]
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.cx, self.cy, self.w, self.h]
    }

    pub fn from_array(v: [f64; 4]) -> Self {
        BoundingBox {
            cx: v[0],
            cy: v[1],
            w: v[2],
            h: v[3],
        }
    }

    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// L1 distance over the four normalized coordinates.
    pub fn l1(&self, other: &BoundingBox) -> f64 {
        (self.cx - other.cx).abs()
            + (self.cy - other.cy).abs()
            + (self.w - other.w).abs()
            + (self.h - other.h).abs()
    }
}

fn intersection(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    let iw = (a[2].min(b[2]) - a[0].max(b[0])).max(0.0);
    let ih = (a[3].min(b[3]) - a[1].max(b[1])).max(0.0);
    iw * ih
}

/// Intersection over union.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (xa, xb) = (a.to_xyxy(), b.to_xyxy());
    let inter = intersection(&xa, &xb);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Generalized IoU: IoU minus the fraction of the enclosing box not covered by the union.
pub fn giou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (xa, xb) = (a.to_xyxy(), b.to_xyxy());
    let inter = intersection(&xa, &xb);
    let union = a.area() + b.area() - inter;
    let enclose = (xa[2].max(xb[2]) - xa[0].min(xb[0])) * (xa[3].max(xb[3]) - xa[1].min(xb[1]));
    if union <= 0.0 || enclose <= 0.0 {
        return 0.0;
    }
    inter / union - (enclose - union) / enclose
}

/// Pairwise IoU matrix, `rows[i][j] = iou(a[i], b[j])`.
pub fn iou_matrix(a: &[BoundingBox], b: &[BoundingBox]) -> Vec<Vec<f64>> {
    a.iter()
        .map(|x| b.iter().map(|y| iou(x, y)).collect())
        .collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Clamp bound applied before taking the inverse sigmoid of a box coordinate.
pub const LOGIT_EPS: f64 = 1e-5;

pub fn inverse_sigmoid(x: f64) -> f64 {
    let x = x.clamp(LOGIT_EPS, 1.0 - LOGIT_EPS);
    (x / (1.0 - x)).ln()
}
