//! Sinusoidal encodings of box geometry.
//!
//! Each of the four box coordinates `(cx, cy, w, h)` gets `d_model / 4`
//! channels. Within one coordinate block, channel `i` uses frequency
//! `2π / temperature^(2⌊i/2⌋ / (d_model/4))`; even channels hold the sine and
//! odd channels the cosine of the same phase.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

pub const DEFAULT_TEMPERATURE: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub values: Vec<f64>,
}

impl PositionalEncoding {
    pub fn d_model(&self) -> usize {
        self.values.len()
    }
}

pub fn check_dims(d_model: usize, temperature: f64) -> Result<()> {
    if d_model == 0 || d_model % 8 != 0 {
        return Err(Error::InvalidArgument(format!(
            "d_model must be a positive multiple of 8, got {d_model}"
        )));
    }
    if !(temperature.is_finite() && temperature > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "temperature must be positive, got {temperature}"
        )));
    }
    Ok(())
}

pub fn encode_box_position(
    bbox: &BoundingBox,
    d_model: usize,
    temperature: f64,
) -> Result<PositionalEncoding> {
    check_dims(d_model, temperature)?;
    let mut values = vec![0.0; d_model];
    write_encoding(bbox, temperature, &mut values);
    Ok(PositionalEncoding { values })
}

/// Writes the encoding into `out`; `out.len()` must already be a valid `d_model`.
pub(crate) fn write_encoding(bbox: &BoundingBox, temperature: f64, out: &mut [f64]) {
    let per_coord = out.len() / 4;
    for (block, coord) in bbox.to_array().into_iter().enumerate() {
        let slot = &mut out[block * per_coord..(block + 1) * per_coord];
        for (i, v) in slot.iter_mut().enumerate() {
            let exponent = (2 * (i / 2)) as f64 / per_coord as f64;
            let phase = coord * TAU / temperature.powf(exponent);
            *v = if i % 2 == 0 { phase.sin() } else { phase.cos() };
        }
    }
}

/// Cell boxes of a `grid_w × grid_h` raster in row-major order.
pub fn grid_cells(grid_w: usize, grid_h: usize) -> Vec<BoundingBox> {
    let (cw, ch) = (1.0 / grid_w as f64, 1.0 / grid_h as f64);
    (0..grid_h)
        .flat_map(|r| {
            (0..grid_w).map(move |c| BoundingBox {
                cx: (c as f64 + 0.5) * cw,
                cy: (r as f64 + 0.5) * ch,
                w: cw,
                h: ch,
            })
        })
        .collect()
}

/// 2D spatial encoding of a feature grid: each cell encoded as its own box.
pub fn encode_grid(
    grid_w: usize,
    grid_h: usize,
    d_model: usize,
    temperature: f64,
) -> Result<Vec<PositionalEncoding>> {
    if grid_w == 0 || grid_h == 0 {
        return Err(Error::InvalidArgument("empty feature grid".into()));
    }
    grid_cells(grid_w, grid_h)
        .iter()
        .map(|b| encode_box_position(b, d_model, temperature))
        .collect()
}
