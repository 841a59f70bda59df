use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Network dimensions. Full-scale values (256 / 256 / 8) are accepted too.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NetConfig {
    /// Side of the square scribble raster fed to the encoders.
    pub input_side: usize,
    /// Channel width D of every embedding.
    pub embed_dim: usize,
    pub attn_heads: usize,
    pub lora_rank: usize,
    /// LoRA scaling `α_L / r`.
    pub lora_scale: f64,
    pub groupnorm_groups: usize,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_side: 64,
            embed_dim: 16,
            attn_heads: 2,
            lora_rank: 4,
            lora_scale: 2.0,
            groupnorm_groups: 4,
        }
    }
}

impl NetConfig {
    /// Spatial side of every embedding (`input_side / 4`).
    pub fn embed_side(&self) -> usize {
        self.input_side / 4
    }

    /// Width of the first encoder block.
    pub fn encoder_hidden(&self) -> usize {
        (self.embed_dim / 4).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_side == 0 || !self.input_side.is_multiple_of(4) {
            return Err(Error::invalid(format!("input_side {} is not a positive multiple of 4", self.input_side)));
        }
        if self.embed_dim == 0 || self.attn_heads == 0 || !self.embed_dim.is_multiple_of(self.attn_heads) {
            return Err(Error::invalid(format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim, self.attn_heads
            )));
        }
        if self.groupnorm_groups == 0 || !self.embed_dim.is_multiple_of(self.groupnorm_groups) {
            return Err(Error::invalid(format!(
                "embed_dim {} is not divisible by {} groups",
                self.embed_dim, self.groupnorm_groups
            )));
        }
        if self.lora_rank == 0 {
            return Err(Error::invalid("lora_rank must be >= 1"));
        }
        Ok(())
    }
}

/// Weighted focal + Dice objective over unrolled rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub focal_weight: f64,
    pub focal_gamma: f64,
    pub focal_alpha: f64,
    pub dice_eps: f64,
    pub rounds: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            focal_weight: 20.0,
            focal_gamma: 2.0,
            focal_alpha: 0.25,
            dice_eps: 1.0,
            rounds: 3,
        }
    }
}

impl LossConfig {
    /// Round weights `w_t = t + 1`, normalized to sum to one.
    pub fn round_weights(rounds: usize) -> Result<Vec<f64>> {
        if rounds == 0 {
            return Err(Error::invalid("at least one round is required"));
        }
        let total = (rounds * (rounds + 1) / 2) as f64;
        Ok((0..rounds).map(|t| (t + 1) as f64 / total).collect())
    }
}
