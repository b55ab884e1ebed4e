use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::mot::{gt_records, read_mot, write_mot, ImageSize, MotRecord};
use super::sidecar::{read_detections, write_detections};
use crate::detsim::{FrameObservation, GroundTruthSequence, GtObject};
use crate::error::{Error, Result};

pub const GT_FILE: &str = "gt.txt";
pub const DET_FILE: &str = "det.txt";
pub const SIDECAR_FILE: &str = "det.json";

/// A sequence directory: `gt.txt`, `det.txt` and `det.json`.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub gt: GroundTruthSequence,
    pub observations: Vec<FrameObservation>,
    pub size: ImageSize,
}

pub fn write_sequence_dir(
    dir: &Path,
    gt: &GroundTruthSequence,
    obs: &[FrameObservation],
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let size = ImageSize {
        width: gt.image_width,
        height: gt.image_height,
    };
    write_mot(&gt_records(gt), &dir.join(GT_FILE))?;
    write_detections(obs, size, &dir.join(DET_FILE), &dir.join(SIDECAR_FILE))
}

/// Ground truth from MOT records: `conf > 0` marks a visible object.
/// Appearance vectors are not stored in the file and come back empty.
pub fn gt_from_records(
    records: &[MotRecord],
    size: ImageSize,
    n_frames: usize,
) -> Result<GroundTruthSequence> {
    let mut frames: Vec<Vec<GtObject>> = vec![Vec::new(); n_frames];
    for r in records {
        let t = r.frame as usize - 1;
        if r.id < 1 {
            return Err(Error::InvalidArgument(format!(
                "ground truth id {} in frame {}",
                r.id, r.frame
            )));
        }
        let frame = frames.get_mut(t).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "ground truth frame {} beyond {n_frames} frames",
                r.frame
            ))
        })?;
        frame.push(GtObject {
            id: r.id as u32,
            bbox: r.bbox(size),
            visible: r.conf > 0.0,
        });
    }
    Ok(GroundTruthSequence {
        frames,
        appearance: BTreeMap::new(),
        seed: 0,
        image_width: size.width,
        image_height: size.height,
    })
}

pub fn read_sequence_dir(dir: &Path) -> Result<SequenceData> {
    let (observations, size) = read_detections(&dir.join(DET_FILE), &dir.join(SIDECAR_FILE))?;
    let records = read_mot(&dir.join(GT_FILE))?;
    let gt = gt_from_records(&records, size, observations.len())?;
    Ok(SequenceData {
        gt,
        observations,
        size,
    })
}

/// Sequence directories directly under `root`, sorted by name.
pub fn sequence_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(DET_FILE).is_file())
        .collect();
    dirs.sort();
    if dirs.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no sequence directories under {}",
            root.display()
        )));
    }
    Ok(dirs)
}
