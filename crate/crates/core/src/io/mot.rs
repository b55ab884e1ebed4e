use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::detsim::GroundTruthSequence;
use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::lifecycle::OutputRecord;

/// One line of a MOTChallenge file. Boxes are in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotRecord {
    /// 1-based.
    pub frame: u32,
    /// Positive for tracks; detection files use −1.
    pub id: i64,
    pub bb_left: f64,
    pub bb_top: f64,
    pub bb_width: f64,
    pub bb_height: f64,
    pub conf: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub width: u32,
    pub height: u32,
}

const FIELDS: usize = 10;

fn parse_line(line: &str) -> std::result::Result<MotRecord, String> {
    let parts: Vec<&str> = line.split(',').map(str::trim).collect();
    if parts.len() != FIELDS {
        return Err(format!("expected {FIELDS} fields, found {}", parts.len()));
    }
    let real = |i: usize| -> std::result::Result<f64, String> {
        let v: f64 = parts[i]
            .parse()
            .map_err(|_| format!("field {} is not a number: {:?}", i + 1, parts[i]))?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(format!("field {} is not finite", i + 1))
        }
    };
    let frame: u32 = parts[0]
        .parse()
        .map_err(|_| format!("frame is not an integer: {:?}", parts[0]))?;
    let id: i64 = parts[1]
        .parse()
        .map_err(|_| format!("id is not an integer: {:?}", parts[1]))?;
    if frame == 0 {
        return Err("frame numbers start at 1".into());
    }
    if id == 0 || id < -1 {
        return Err(format!("id {id} must be positive, or -1 for detections"));
    }
    let r = MotRecord {
        frame,
        id,
        bb_left: real(2)?,
        bb_top: real(3)?,
        bb_width: real(4)?,
        bb_height: real(5)?,
        conf: real(6)?,
        x: real(7)?,
        y: real(8)?,
        z: real(9)?,
    };
    if r.bb_width < 0.0 || r.bb_height < 0.0 {
        return Err("negative box width or height".into());
    }
    Ok(r)
}

/// Parses a MOTChallenge file. Blank lines are skipped.
pub fn read_mot(path: &Path) -> Result<Vec<MotRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_line(l).map_err(|reason| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                reason,
            })
        })
        .collect()
}

/// Canonical text: sorted by (frame, id), shortest round-trip decimals, one
/// record per newline-terminated line.
pub fn records_to_mot(records: &[MotRecord]) -> String {
    let mut sorted = records.to_vec();
    sorted.sort_by_key(|r| (r.frame, r.id));
    let mut s = String::new();
    for r in &sorted {
        writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.frame, r.id, r.bb_left, r.bb_top, r.bb_width, r.bb_height, r.conf, r.x, r.y, r.z
        )
        .expect("writing to a string");
    }
    s
}

pub fn write_mot(records: &[MotRecord], path: &Path) -> Result<()> {
    fs::write(path, records_to_mot(records)).map_err(|e| Error::io(path, e))
}

/// Normalized center box → pixel (left, top, width, height).
pub fn to_pixels(b: &BoundingBox, size: ImageSize) -> [f64; 4] {
    let (w, h) = (size.width as f64, size.height as f64);
    [
        (b.cx - b.w / 2.0) * w,
        (b.cy - b.h / 2.0) * h,
        b.w * w,
        b.h * h,
    ]
}

/// Pixel box → normalized center box, clamped into the image.
pub fn from_pixels(left: f64, top: f64, width: f64, height: f64, size: ImageSize) -> BoundingBox {
    let (w, h) = (size.width as f64, size.height as f64);
    BoundingBox::clamped(
        (left + width / 2.0) / w,
        (top + height / 2.0) / h,
        width / w,
        height / h,
    )
}

impl MotRecord {
    pub fn from_box(frame: u32, id: i64, bbox: &BoundingBox, conf: f64, size: ImageSize) -> Self {
        let [l, t, w, h] = to_pixels(bbox, size);
        MotRecord {
            frame,
            id,
            bb_left: l,
            bb_top: t,
            bb_width: w,
            bb_height: h,
            conf,
            x: -1.0,
            y: -1.0,
            z: -1.0,
        }
    }

    pub fn bbox(&self, size: ImageSize) -> BoundingBox {
        from_pixels(
            self.bb_left,
            self.bb_top,
            self.bb_width,
            self.bb_height,
            size,
        )
    }

    /// Tracker output (0-based frames) as MOT records.
    pub fn from_output(r: &OutputRecord, size: ImageSize) -> Self {
        MotRecord::from_box(r.frame as u32 + 1, r.id as i64, &r.bbox, r.score, size)
    }
}

/// Ground truth as MOT records: `conf` is 1 for visible objects and 0 for
/// hidden ones.
pub fn gt_records(seq: &GroundTruthSequence) -> Vec<MotRecord> {
    let size = ImageSize {
        width: seq.image_width,
        height: seq.image_height,
    };
    seq.frames
        .iter()
        .enumerate()
        .flat_map(|(t, objs)| {
            objs.iter().map(move |o| {
                MotRecord::from_box(
                    t as u32 + 1,
                    o.id as i64,
                    &o.bbox,
                    if o.visible { 1.0 } else { 0.0 },
                    size,
                )
            })
        })
        .collect()
}
