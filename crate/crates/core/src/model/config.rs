use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Channel groups used by every group normalization in the CNN.
pub const NORM_GROUPS: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Resampled slice count; the stem's input channels.
    pub renum_ct: usize,
    /// Square in-plane size every slice is resized to.
    pub image_size: usize,
    /// Output channels of each residual stage; the last one is the feature width N.
    pub stage_channels: Vec<usize>,
    pub se_reduction: usize,
    /// Number of tokens the N-wide feature vector is cut into.
    pub tokens: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
    pub classes: usize,
}

impl ModelConfig {
    /// Laptop-scale configuration used by the tests and the default CLI preset.
    pub fn desk() -> Self {
        Self {
            renum_ct: 8,
            image_size: 32,
            stage_channels: vec![16, 32, 64],
            se_reduction: 4,
            tokens: 4,
            heads: 4,
            mlp_ratio: 2.0,
            classes: 2,
        }
    }

    /// 32 slices at 224x224 with a four-stage extractor.
    pub fn paper() -> Self {
        Self {
            renum_ct: 32,
            image_size: 224,
            stage_channels: vec![64, 128, 256, 512],
            se_reduction: 16,
            tokens: 8,
            heads: 8,
            mlp_ratio: 2.0,
            classes: 2,
        }
    }

    /// Smallest useful network, for finite-difference checks.
    pub fn tiny() -> Self {
        Self {
            renum_ct: 2,
            image_size: 8,
            stage_channels: vec![4, 8],
            se_reduction: 4,
            tokens: 2,
            heads: 1,
            mlp_ratio: 2.0,
            classes: 2,
        }
    }

    /// Feature width N out of the last stage.
    pub fn feature_width(&self) -> usize {
        *self
            .stage_channels
            .last()
            .expect("validated: at least one stage")
    }

    /// Token width d = N / tokens.
    pub fn token_width(&self) -> usize {
        self.feature_width() / self.tokens
    }

    pub fn mlp_hidden(&self) -> usize {
        (self.mlp_ratio * self.token_width() as f64).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.classes != 2 {
            return fail(format!("classes must be 2, got {}", self.classes));
        }
        if self.renum_ct == 0 || self.image_size == 0 {
            return fail("renum_ct and image_size must be positive".into());
        }
        if self.stage_channels.is_empty() {
            return fail("at least one stage is required".into());
        }
        for &c in &self.stage_channels {
            if c == 0 || c % NORM_GROUPS != 0 {
                return fail(format!(
                    "stage width {c} is not a positive multiple of {NORM_GROUPS} norm groups"
                ));
            }
            if self.se_reduction == 0 || c % self.se_reduction != 0 {
                return fail(format!(
                    "se_reduction {} does not divide stage width {c}",
                    self.se_reduction
                ));
            }
        }
        let n = self.feature_width();
        if self.tokens == 0 || !n.is_multiple_of(self.tokens) {
            return fail(format!(
                "tokens {} does not divide feature width {n}",
                self.tokens
            ));
        }
        let d = n / self.tokens;
        if self.heads == 0 || !d.is_multiple_of(self.heads) {
            return fail(format!(
                "heads {} does not divide token width {d}",
                self.heads
            ));
        }
        if !(self.mlp_ratio > 0.0) || self.mlp_hidden() == 0 {
            return fail(format!("mlp_ratio {} gives an empty MLP", self.mlp_ratio));
        }
        Ok(())
    }
}
