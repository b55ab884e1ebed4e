use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Slots beyond this index are never dropped.
pub const MAX_SLOTS: usize = 64;

/// Random decisions for one frame of a clip.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameDirective {
    /// Insert a negative track query built from an unmatched detection of the previous frame.
    pub insert_negative: bool,
    drop: Vec<bool>,
}

impl FrameDirective {
    /// Whether the track slot at position `slot` is dropped this frame.
    pub fn drops(&self, slot: usize) -> bool {
        self.drop.get(slot).copied().unwrap_or(false)
    }

    pub fn is_identity(&self) -> bool {
        !self.insert_negative && !self.drop.iter().any(|d| *d)
    }
}

/// Per-frame augmentation directives for a clip, a pure function of its arguments.
pub fn augment_clip(
    n_frames: usize,
    p_insert: f64,
    p_drop: f64,
    seed: u64,
) -> Result<Vec<FrameDirective>> {
    for (name, p) in [("p_i", p_insert), ("p_d", p_drop)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!(
                "{name} = {p} outside [0, 1]"
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_frames)
        .map(|t| FrameDirective {
            // The first frame has no track queries to drop or neighbours to insert.
            insert_negative: rng.random::<f64>() < p_insert && t > 0,
            drop: (0..MAX_SLOTS)
                .map(|_| rng.random::<f64>() < p_drop && t > 0)
                .collect(),
        })
        .collect())
}
