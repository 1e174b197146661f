//! Encoder-decoder sequence model over hyperstroke tokens.
//!
//! A patch transformer embeds the current canvas and a hashed word
//! embedding encodes the condition text; both feed the cross-attention of
//! a causal decoder that emits box and visual tokens stroke by stroke.

pub mod config;
pub mod context;
pub mod data;
pub mod error;
pub mod layers;
pub mod loss;
pub mod model;
pub mod sample;
pub mod train;

pub use config::{EncoderBackend, PrefixMode, SeqConfig};
pub use context::ContextEmbedding;
pub use data::{build_examples, SeqBatch, SeqExample};
pub use error::{Result, SeqError};
pub use loss::{accuracy, seq_loss, Accuracy};
pub use model::{SeqHeader, SeqModel};
pub use sample::{render_suggestions, sample, sample_tokens, Suggestion, SuggestionRequest};
pub use train::{train_seq, SeqStepMetrics, SeqTrainOptions, SeqTrainReport, SeqTrainer};
