//! The learned associator: detection/track interaction, content-position
//! alignment, and a one-layer decoder.

pub mod bii;
pub mod checkpoint;
pub mod config;
pub mod cpa;
pub mod decoder;
pub mod model;
pub mod query;

pub use bii::{update_history, BiiBlock, QuerySet};
pub use checkpoint::{
    fingerprint, load_checkpoint, load_checkpoint_for, save_checkpoint, write_attention_rows,
    ATTENTION_CSV_HEADER,
};
pub use config::{AssociatorConfig, BoxSpace, NoisySource};
pub use model::{AssociatorModel, AttentionMaps, FrameForward, TrackInput};
pub use query::{
    detection_queries, filter_detection_queries, ObjectQuery, QueryKind, QueryPartition,
};
