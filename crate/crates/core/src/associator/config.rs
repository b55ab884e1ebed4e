use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posenc;

/// Space in which the alignment module adds its box update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoxSpace {
    /// `B' = σ(Δ + σ⁻¹(B))`
    InverseSigmoid,
    /// `B' = clamp(B + Δ)`
    Literal,
}

/// Where the noisy values paired with track-query keys come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisySource {
    /// Highest-scoring detections rejected by the `τ_q` filter.
    Hard,
    /// Highest-scoring detections regardless of the filter.
    AllDetections,
    /// All-zero rows.
    Zeros,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssociatorConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub ffn_dim: usize,
    /// Detection queries scoring below this are excluded from interaction.
    pub tau_q: f64,
    pub use_learned_projections: bool,
    /// EMA weight of the newest track content in the history query.
    pub ema_weight: f64,
    pub temperature: f64,
    pub box_space: BoxSpace,
    pub noisy_source: NoisySource,
}

impl Default for AssociatorConfig {
    fn default() -> Self {
        AssociatorConfig {
            d_model: 64,
            n_heads: 8,
            ffn_dim: 128,
            tau_q: 0.3,
            use_learned_projections: true,
            ema_weight: 0.7,
            temperature: posenc::DEFAULT_TEMPERATURE,
            box_space: BoxSpace::InverseSigmoid,
            noisy_source: NoisySource::Hard,
        }
    }
}

impl AssociatorConfig {
    pub fn validate(&self) -> Result<()> {
        posenc::check_dims(self.d_model, self.temperature)?;
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "n_heads {} must divide d_model {}",
                self.n_heads, self.d_model
            )));
        }
        if self.ffn_dim == 0 {
            return Err(Error::InvalidArgument("ffn_dim must be positive".into()));
        }
        if !(self.tau_q > 0.0 && self.tau_q < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "tau_q {} outside (0, 1)",
                self.tau_q
            )));
        }
        if !(self.ema_weight > 0.0 && self.ema_weight <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "ema_weight {} outside (0, 1]",
                self.ema_weight
            )));
        }
        Ok(())
    }
}
