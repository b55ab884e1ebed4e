//! Synthetic scenes and an emulated frozen detector.

mod detector;
mod scene;

pub use detector::{
    frame_seed, Detection, Detector, DetectorConfig, FrameObservation, NoiseConfig,
};
pub use scene::{
    generate_sequence, overlap_events, GroundTruthSequence, GtObject, MotionFamily, SceneConfig,
};
