use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mot::{read_mot, write_mot, ImageSize, MotRecord};
use crate::detsim::{Detection, FrameObservation};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Per-frame data a MOT detection file cannot hold. Content rows follow the
/// order of that frame's lines in the detection file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarFrame {
    pub contents: Vec<Vec<f64>>,
    pub features: Matrix,
    pub positions: Matrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSidecar {
    pub schema_version: u32,
    pub image_width: u32,
    pub image_height: u32,
    pub frames: Vec<SidecarFrame>,
}

const SIDECAR_VERSION: u32 = 1;

/// Writes `det.txt`-style records to `mot_path` and the embeddings and
/// feature grids to `sidecar_path`.
pub fn write_detections(
    obs: &[FrameObservation],
    size: ImageSize,
    mot_path: &Path,
    sidecar_path: &Path,
) -> Result<()> {
    let mut records = Vec::new();
    let mut frames = Vec::with_capacity(obs.len());
    for (t, o) in obs.iter().enumerate() {
        for d in &o.detections {
            records.push(MotRecord::from_box(
                t as u32 + 1,
                -1,
                &d.bbox,
                d.score,
                size,
            ));
        }
        frames.push(SidecarFrame {
            contents: o.detections.iter().map(|d| d.content.clone()).collect(),
            features: o.features.clone(),
            positions: o.positions.clone(),
        });
    }
    write_mot(&records, mot_path)?;
    let sidecar = DetectionSidecar {
        schema_version: SIDECAR_VERSION,
        image_width: size.width,
        image_height: size.height,
        frames,
    };
    let json = serde_json::to_string(&sidecar).map_err(|e| Error::Serde(e.to_string()))?;
    fs::write(sidecar_path, json).map_err(|e| Error::io(sidecar_path, e))
}

/// Rebuilds observations from a detection file plus its sidecar. Records are
/// taken in file order within each frame.
pub fn read_detections(
    mot_path: &Path,
    sidecar_path: &Path,
) -> Result<(Vec<FrameObservation>, ImageSize)> {
    let text = fs::read_to_string(sidecar_path).map_err(|e| Error::io(sidecar_path, e))?;
    let sidecar: DetectionSidecar = serde_json::from_str(&text)
        .map_err(|e| Error::Serde(format!("{}: {e}", sidecar_path.display())))?;
    if sidecar.schema_version != SIDECAR_VERSION {
        return Err(Error::InvalidArgument(format!(
            "sidecar schema version {} (expected {SIDECAR_VERSION})",
            sidecar.schema_version
        )));
    }
    let size = ImageSize {
        width: sidecar.image_width,
        height: sidecar.image_height,
    };
    let records = read_mot(mot_path)?;
    let mut per_frame: Vec<Vec<MotRecord>> = vec![Vec::new(); sidecar.frames.len()];
    for r in records {
        let t = r.frame as usize - 1;
        per_frame
            .get_mut(t)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "detection in frame {} beyond sidecar length {}",
                    r.frame,
                    sidecar.frames.len()
                ))
            })?
            .push(r);
    }
    let obs = sidecar
        .frames
        .into_iter()
        .zip(per_frame)
        .enumerate()
        .map(|(t, (f, recs))| {
            if f.contents.len() != recs.len() {
                return Err(Error::Shape(format!(
                    "frame {}: {} detections but {} sidecar contents",
                    t + 1,
                    recs.len(),
                    f.contents.len()
                )));
            }
            let detections = recs
                .iter()
                .zip(f.contents)
                .map(|(r, content)| Detection {
                    bbox: r.bbox(size),
                    score: r.conf,
                    content,
                })
                .collect();
            Ok(FrameObservation {
                detections,
                features: f.features,
                positions: f.positions,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((obs, size))
}
