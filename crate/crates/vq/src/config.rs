use serde::{Deserialize, Serialize};

use crate::error::{Result, VqError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PerceptualKind {
    #[default]
    Disabled,
    /// Multi-scale image-gradient features; a weight-free stand-in for a
    /// learned perceptual metric.
    Gradient,
}

/// Model and training configuration of the stroke tokenizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VqConfig {
    /// Patch size `(W_T, H_T)` every stroke is resampled to.
    pub patch: (usize, usize),
    /// Downsampling factor `f`; one token per `f x f` block.
    pub downsample: usize,
    pub codebook_size: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    /// 3x3 neighbourhood mixing layers in encoder and decoder.
    pub mix_layers: usize,
    /// Grid count `C` used to snap boxes before cropping.
    pub grid_c: u32,
    /// Canvas the grid is defined on.
    pub canvas: (u32, u32),
    pub commitment: f64,
    pub perceptual: PerceptualKind,
    pub perceptual_weight: f64,
    pub gan_weight: f64,
    pub gan_start: usize,
    pub disc_hidden: usize,
    /// Discriminator patch edge in pixels.
    pub disc_patch: usize,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub steps: usize,
    /// Codebook entries unused for this many steps are re-seeded.
    pub dead_code_steps: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for VqConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl VqConfig {
    /// Small model for CPU runs: 128x128 patches, 512 codes.
    pub fn desk() -> Self {
        Self {
            patch: (128, 128),
            downsample: 16,
            codebook_size: 512,
            embed_dim: 64,
            hidden: 128,
            mix_layers: 2,
            grid_c: 16,
            canvas: (128, 128),
            commitment: 1.0,
            perceptual: PerceptualKind::Disabled,
            perceptual_weight: 0.0,
            gan_weight: 0.0,
            gan_start: 0,
            disc_hidden: 64,
            disc_patch: 8,
            learning_rate: 1e-3,
            warmup_steps: 50,
            batch_size: 8,
            steps: 2000,
            dead_code_steps: 200,
            log_every: 50,
            seed: 0,
        }
    }

    /// Artistic-drawing reference: 256x256 pairs, 8192 x 256 codebook.
    pub fn artistic_reference() -> Self {
        Self {
            patch: (256, 256),
            codebook_size: 8192,
            embed_dim: 256,
            hidden: 512,
            canvas: (256, 256),
            learning_rate: 4.5e-6,
            warmup_steps: 200,
            batch_size: 32,
            perceptual: PerceptualKind::Gradient,
            perceptual_weight: 1.0,
            gan_weight: 0.1,
            gan_start: 10_000,
            dead_code_steps: 2000,
            ..Self::desk()
        }
    }

    /// Doodle reference: 128x128 patches, 2048 codes, `f = 16` so `k = 64`.
    pub fn sketch_reference() -> Self {
        Self {
            patch: (128, 128),
            codebook_size: 2048,
            embed_dim: 256,
            hidden: 512,
            learning_rate: 2e-7,
            warmup_steps: 200,
            batch_size: 1024,
            perceptual: PerceptualKind::Gradient,
            perceptual_weight: 1.0,
            gan_weight: 0.1,
            gan_start: 10_000,
            dead_code_steps: 2000,
            ..Self::desk()
        }
    }

    pub fn latent_dims(&self) -> (usize, usize) {
        (self.patch.0 / self.downsample, self.patch.1 / self.downsample)
    }

    /// Visual tokens per stroke.
    pub fn k(&self) -> usize {
        let (w, h) = self.latent_dims();
        w * h
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(VqError::Config(m));
        if self.downsample == 0 || self.patch.0 % self.downsample != 0 || self.patch.1 % self.downsample != 0 {
            return bad(format!("patch {:?} not divisible by f={}", self.patch, self.downsample));
        }
        if self.patch.0 == 0 || self.patch.1 == 0 {
            return bad("empty patch".into());
        }
        if self.codebook_size == 0 || self.embed_dim == 0 || self.hidden == 0 {
            return bad("codebook size, embedding dim and hidden width must be positive".into());
        }
        if self.codebook_size > u32::MAX as usize {
            return bad("codebook too large".into());
        }
        if self.grid_c == 0 || self.canvas.0 % self.grid_c != 0 || self.canvas.1 % self.grid_c != 0 {
            return bad(format!("canvas {:?} not divisible by C={}", self.canvas, self.grid_c));
        }
        if self.disc_patch == 0 || self.patch.0 % self.disc_patch != 0 || self.patch.1 % self.disc_patch != 0 {
            return bad(format!("patch {:?} not divisible by discriminator patch {}", self.patch, self.disc_patch));
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0 && self.commitment >= 0.0 && self.gan_weight >= 0.0 && self.perceptual_weight >= 0.0) {
            return bad("weights and learning rate must be non-negative".into());
        }
        Ok(())
    }
}
