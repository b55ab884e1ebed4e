//! MOTChallenge text files, detection sidecars and run configuration.

mod config;
mod dataset;
mod mot;
mod sidecar;

pub use config::{RunConfig, RunPaths, SCHEMA_VERSION};
pub use dataset::{
    gt_from_records, read_sequence_dir, sequence_dirs, write_sequence_dir, SequenceData, DET_FILE,
    GT_FILE, SIDECAR_FILE,
};
pub use mot::{
    from_pixels, gt_records, read_mot, records_to_mot, to_pixels, write_mot, ImageSize, MotRecord,
};
pub use sidecar::{read_detections, write_detections, DetectionSidecar, SidecarFrame};
