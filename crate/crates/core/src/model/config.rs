use serde::{Deserialize, Serialize};

use crate::error::{Result, WifoError};
use crate::patch::PatchSpec;

/// Architecture hyperparameters of the encoder/decoder transformer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub enc_depth: usize,
    pub enc_width: usize,
    pub enc_heads: usize,
    pub dec_depth: usize,
    pub dec_width: usize,
    pub dec_heads: usize,
    pub patch: PatchSpec,
    /// Feed-forward hidden width as a multiple of the block width.
    pub mlp_ratio: f64,
}

/// Patch size used by every named preset.
pub const DEFAULT_PATCH: PatchSpec = PatchSpec::new(4, 4, 4);

impl ModelConfig {
    const fn preset(enc_depth: usize, width: usize, dec_depth: usize, mlp_ratio: f64) -> Self {
        ModelConfig {
            enc_depth,
            enc_width: width,
            enc_heads: 8,
            dec_depth,
            dec_width: width,
            dec_heads: 8,
            patch: DEFAULT_PATCH,
            mlp_ratio,
        }
    }

    pub const fn tiny() -> Self {
        Self::preset(6, 64, 4, 1.5)
    }

    pub const fn little() -> Self {
        Self::preset(6, 128, 4, 2.0)
    }

    pub const fn small() -> Self {
        Self::preset(6, 256, 4, 2.0)
    }

    pub const fn base() -> Self {
        Self::preset(6, 512, 4, 2.0)
    }

    pub const fn large() -> Self {
        Self::preset(8, 768, 4, 4.0)
    }

    /// Gradient-check model: width 16, one block each side, two heads,
    /// patch (2, 2, 2).
    pub const fn micro() -> Self {
        ModelConfig {
            enc_depth: 1,
            enc_width: 16,
            enc_heads: 2,
            dec_depth: 1,
            dec_width: 16,
            dec_heads: 2,
            patch: PatchSpec::new(2, 2, 2),
            mlp_ratio: 4.0,
        }
    }

    pub fn from_preset(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tiny" => Ok(Self::tiny()),
            "little" => Ok(Self::little()),
            "small" => Ok(Self::small()),
            "base" => Ok(Self::base()),
            "large" => Ok(Self::large()),
            "micro" => Ok(Self::micro()),
            other => Err(WifoError::InvalidArgument(format!(
                "unknown model preset `{other}` (expected tiny, little, small, base, large or micro)"
            ))),
        }
    }

    pub fn mlp_hidden(&self, width: usize) -> usize {
        ((width as f64) * self.mlp_ratio).round().max(1.0) as usize
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(WifoError::InvalidArgument(m));
        if self.enc_width == 0 || self.dec_width == 0 || self.enc_heads == 0 || self.dec_heads == 0 {
            return bad("widths and head counts must be positive".into());
        }
        if self.enc_width % self.enc_heads != 0 {
            return bad(format!("encoder width {} not divisible by {} heads", self.enc_width, self.enc_heads));
        }
        if self.dec_width % self.dec_heads != 0 {
            return bad(format!("decoder width {} not divisible by {} heads", self.dec_width, self.dec_heads));
        }
        if self.enc_width < 3 || self.dec_width < 3 {
            return bad("widths must be at least 3 for the three-axis positional encoding".into());
        }
        if self.patch.volume() == 0 {
            return bad("patch sizes must be positive".into());
        }
        if !(self.mlp_ratio > 0.0) || !self.mlp_ratio.is_finite() {
            return bad("mlp_ratio must be positive".into());
        }
        Ok(())
    }
}
