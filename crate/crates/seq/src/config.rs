use serde::{Deserialize, Serialize};

use hyperstroke_core::TokenVocab;

use crate::error::{Result, SeqError};

/// Where a context encoder's weights come from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum EncoderBackend {
    /// Randomly initialised, trained with the decoder unless frozen.
    #[default]
    TinyTrainable,
    /// Weights loaded from a safetensors file and never updated.
    PretrainedFrozen { weights: std::path::PathBuf },
}

/// Which training windows are built from each sketch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PrefixMode {
    /// Predict the whole sketch from a blank canvas.
    #[default]
    Blank,
    /// One window per stroke: the canvas holds the first `m` strokes and
    /// the target continues from stroke `m`.
    EveryStroke,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeqConfig {
    pub grid_c: u32,
    pub codebook_size: u32,
    /// Visual tokens per stroke.
    pub k: usize,
    /// Canvas resolution seen by the canvas encoder.
    pub canvas: (usize, usize),
    /// Strokes that fit in the context.
    pub n_max: usize,
    pub d_model: usize,
    pub heads: usize,
    pub decoder_layers: usize,
    pub ff_mult: usize,
    pub canvas_patch: usize,
    pub canvas_layers: usize,
    pub canvas_backend: EncoderBackend,
    pub text_backend: EncoderBackend,
    pub text_buckets: usize,
    pub text_max_tokens: usize,
    pub freeze_canvas: bool,
    pub freeze_text: bool,
    pub prefix_mode: PrefixMode,
    pub learning_rate: f64,
    pub warmup_steps: usize,
    /// Cosine annealing floor as a fraction of the base rate.
    pub min_lr_ratio: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub log_every: usize,
    pub seed: u64,
}

impl Default for SeqConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl SeqConfig {
    /// Small decoder for CPU overfit runs: `k = 16` (64-px patches).
    pub fn desk() -> Self {
        Self {
            grid_c: 16,
            codebook_size: 128,
            k: 16,
            canvas: (128, 128),
            n_max: 12,
            d_model: 128,
            heads: 4,
            decoder_layers: 2,
            ff_mult: 4,
            canvas_patch: 16,
            canvas_layers: 1,
            canvas_backend: EncoderBackend::TinyTrainable,
            text_backend: EncoderBackend::TinyTrainable,
            text_buckets: 1024,
            text_max_tokens: 4,
            freeze_canvas: false,
            freeze_text: false,
            prefix_mode: PrefixMode::Blank,
            learning_rate: 1e-3,
            warmup_steps: 50,
            min_lr_ratio: 0.1,
            steps: 1500,
            batch_size: 8,
            log_every: 25,
            seed: 0,
        }
    }

    /// Sketch-model reference: 12-stroke context, `k = 64`, codebook 2048,
    /// a GPT-2-medium sized decoder.
    pub fn sketch_reference() -> Self {
        Self {
            codebook_size: 2048,
            k: 64,
            d_model: 1024,
            heads: 16,
            decoder_layers: 24,
            canvas_layers: 12,
            text_buckets: 49408,
            text_max_tokens: 77,
            freeze_canvas: true,
            freeze_text: true,
            prefix_mode: PrefixMode::EveryStroke,
            learning_rate: 1e-4,
            warmup_steps: 2000,
            steps: 100_000,
            batch_size: 64,
            ..Self::desk()
        }
    }

    /// Weight on bounding-box positions in the loss.
    pub fn lambda(&self) -> f64 {
        self.k as f64 / 4.0
    }

    pub fn vocab(&self) -> Result<TokenVocab> {
        Ok(TokenVocab::new(self.grid_c, self.codebook_size, self.k)?)
    }

    /// Decoder input positions: `1 + n_max (4 + k)`.
    pub fn context_len(&self) -> usize {
        1 + self.n_max * (4 + self.k)
    }

    pub fn canvas_tokens(&self) -> usize {
        (self.canvas.0 / self.canvas_patch) * (self.canvas.1 / self.canvas_patch)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SeqError::Config(m.to_string()));
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return bad("d_model must be a positive multiple of heads");
        }
        if self.n_max == 0 || self.k == 0 || self.grid_c == 0 || self.codebook_size == 0 {
            return bad("n_max, k, C and codebook size must be positive");
        }
        if self.canvas_patch == 0 || self.canvas.0 % self.canvas_patch != 0 || self.canvas.1 % self.canvas_patch != 0 {
            return bad("canvas not divisible by canvas patch");
        }
        if self.text_buckets == 0 {
            return bad("text buckets must be positive");
        }
        if self.batch_size == 0 || !(self.learning_rate > 0.0) || !(0.0..=1.0).contains(&self.min_lr_ratio) {
            return bad("batch size, learning rate or annealing floor out of range");
        }
        Ok(())
    }
}
