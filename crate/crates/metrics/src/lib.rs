//! Multi-object tracking metrics: CLEAR (MOTA), IDF1 and HOTA.
//!
//! Boxes may be in any consistent unit; only IoU is used.

mod clear;
mod hota;
mod idf1;
mod matching;
mod report;

pub use clear::{clear_metrics, ClearMetrics};
pub use hota::{hota, HotaMetrics, ALPHAS};
pub use idf1::{idf1, IdMetrics};
pub use matching::{match_frame, FrameMatch};
pub use report::{combine, evaluate, evaluate_all, MetricsReport};

use tbdq_core::BoundingBox;

/// One labeled box in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackBox {
    pub id: u32,
    pub bbox: BoundingBox,
}

/// Boxes per frame, frame 0 first.
pub type Sequence = Vec<Vec<TrackBox>>;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MetricsError {
    #[error("duplicate id {id} in frame {frame}")]
    DuplicateId { frame: usize, id: u32 },
    #[error("threshold {0} outside (0, 1)")]
    Threshold(f64),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

pub(crate) fn check_unique(frames: &[Vec<TrackBox>]) -> Result<()> {
    for (t, f) in frames.iter().enumerate() {
        let mut ids: Vec<u32> = f.iter().map(|b| b.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(MetricsError::DuplicateId { frame: t, id: w[0] });
        }
    }
    Ok(())
}

/// Frame `t` of `seq`, or nothing past its end.
pub(crate) fn frame(seq: &[Vec<TrackBox>], t: usize) -> &[TrackBox] {
    seq.get(t).map_or(&[], |f| f.as_slice())
}
