//! Stroke tokenizer: a vector-quantized autoencoder that reads a frame pair
//! `(A_t, A_{t+1})` and emits `k` codebook indices; its decoder turns the
//! indices back into an RGBA stroke patch.
//!
//! Training mixes implicit supervision (the decoded stroke blended onto
//! `A_t` must reproduce `A_{t+1}`) with direct supervision where the
//! ground-truth stroke is known.

pub mod config;
pub mod data;
pub mod error;
pub mod loss;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod quantize;
pub mod train;

pub use config::{PerceptualKind, VqConfig};
pub use error::{Result, VqError};
pub use loss::{TrainBatch, TrainItem};
pub use model::{CheckpointHeader, VqModel};
pub use quantize::VisualTokens;
pub use train::{train_vq, StepMetrics, TrainOptions, TrainReport, Trainer};
