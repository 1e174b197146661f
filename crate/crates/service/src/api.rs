//! Request and response bodies.

use hyperstroke_core::HyperstrokeTokens;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CanvasResponse {
    pub width: usize,
    pub height: usize,
    /// Base64 PNG.
    pub canvas_png: String,
    pub accepted: Vec<HyperstrokeTokens>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionBody {
    pub id: String,
    /// `[X1, Y1, X2, Y2]` grid tokens.
    pub bbox_tokens: [u32; 4],
    /// Codebook indices, not flat vocabulary ids.
    pub visual_tokens: Vec<u32>,
    /// Pixel box `[x1, y1, x2, y2]` the stroke covers.
    pub bbox_pixels: [u32; 4],
    /// Base64 RGBA PNG at the pixel box's size.
    pub stroke_png: String,
    /// Base64 PNG of the canvas after this and all earlier suggestions.
    pub preview_png: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestResponse {
    pub suggestions: Vec<SuggestionBody>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptRequest {
    pub suggestion_id: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcceptResponse {
    pub canvas_png: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub model_loaded: bool,
    pub sessions: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelInfo {
    pub loaded: bool,
    pub canvas: (usize, usize),
    pub k: Option<usize>,
    #[serde(rename = "C")]
    pub grid_c: Option<u32>,
    pub bbox_vocab: Option<u32>,
    pub visual_vocab: Option<u32>,
    pub vocab_size: Option<usize>,
    pub n_max: Option<usize>,
    pub vq_checkpoint_hash: Option<String>,
    pub seq_checkpoint_hash: Option<String>,
}
