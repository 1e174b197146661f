//! Position-constrained autoregressive sampling.

use hyperstroke_core::{blend, BBoxTokens, Canvas, GridSpec, Hyperstroke, HyperstrokeTokens, TokenVocab};
use hyperstroke_vq::pipeline::{detokenize_batch, model_grid};
use hyperstroke_vq::VqModel;
use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeqError};
use crate::model::SeqModel;

fn default_n() -> usize {
    1
}

fn default_temperature() -> f64 {
    1.0
}

fn default_top_k() -> usize {
    100
}

/// Sampling request. Without prompts this is unconditional continuation
/// of the canvas; `prompt_strokes` prefixes the decoder with user strokes;
/// `prompt_bbox` fixes the box of the first suggested stroke.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRequest {
    #[serde(default)]
    pub condition: Option<String>,
    #[serde(default)]
    pub prompt_strokes: Vec<HyperstrokeTokens>,
    #[serde(default)]
    pub prompt_bbox: Option<BBoxTokens>,
    #[serde(default = "default_n")]
    pub n: usize,
    /// `<= 0` selects greedy decoding.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    /// 0 keeps every allowed token.
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SuggestionRequest {
    fn default() -> Self {
        Self {
            condition: None,
            prompt_strokes: Vec::new(),
            prompt_bbox: None,
            n: default_n(),
            temperature: default_temperature(),
            top_k: default_top_k(),
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PromptMode {
    Unconditional,
    Strokes,
    BBox,
}

impl SuggestionRequest {
    pub fn mode(&self) -> Result<PromptMode> {
        match (self.prompt_strokes.is_empty(), self.prompt_bbox.is_some()) {
            (true, false) => Ok(PromptMode::Unconditional),
            (false, false) => Ok(PromptMode::Strokes),
            (true, true) => Ok(PromptMode::BBox),
            (false, true) => Err(SeqError::Prompt("give prompt strokes or a prompt box, not both".into())),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Suggestion {
    pub tokens: HyperstrokeTokens,
    pub stroke: Hyperstroke,
}

/// Token ids allowed at `slot` of a stroke given the stroke's earlier
/// box tokens: `X1, Y1 < C`, `X2 > X1`, `Y2 > Y1`, then visual ids only.
pub fn allowed_range(vocab: &TokenVocab, slot: usize, partial: &[u32]) -> std::ops::Range<u32> {
    let c = vocab.grid_cells;
    match slot {
        0 | 1 => 0..c,
        2 => partial[0] + 1..c + 1,
        3 => partial[1] + 1..c + 1,
        _ => vocab.visual_offset()..vocab.start(),
    }
}

/// Picks one id from `logits` restricted to `allowed`.
pub fn pick(logits: &[f32], allowed: std::ops::Range<u32>, temperature: f64, top_k: usize, rng: &mut ChaCha8Rng) -> Result<u32> {
    let mut candidates: Vec<(u32, f64)> = allowed.map(|id| (id, logits[id as usize] as f64)).collect();
    if candidates.is_empty() {
        return Err(SeqError::Prompt("no admissible token".into()));
    }
    if candidates.iter().any(|(_, l)| !l.is_finite()) {
        return Err(SeqError::NonFinite(0));
    }
    // Stable sort keeps the lowest id first among equal logits.
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
    if temperature <= 0.0 {
        return Ok(candidates[0].0);
    }
    if top_k > 0 {
        candidates.truncate(top_k);
    }
    let max = candidates[0].1;
    let weights: Vec<f64> = candidates.iter().map(|(_, l)| ((l - max) / temperature).exp()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| SeqError::Prompt(e.to_string()))?;
    Ok(candidates[dist.sample(rng)].0)
}

/// Resamples a canvas to the model's input resolution.
pub fn model_canvas(model: &SeqModel, canvas: &Canvas) -> Canvas {
    let (w, h) = model.config().canvas;
    if canvas.dims() == (w, h) {
        canvas.clone()
    } else {
        canvas.resize_bilinear(w, h)
    }
}

/// Samples `request.n` stroke token groups without decoding pixels.
pub fn sample_tokens(model: &SeqModel, canvas: &Canvas, request: &SuggestionRequest) -> Result<Vec<HyperstrokeTokens>> {
    let mode = request.mode()?;
    if request.n == 0 {
        return Err(SeqError::Prompt("n must be at least 1".into()));
    }
    let vocab = model.vocab();
    let mut prefix = vocab.frame(&request.prompt_strokes).map_err(|e| SeqError::Prompt(e.to_string()))?;
    let capacity = model.config().context_len();
    if prefix.len() > capacity {
        return Err(SeqError::Prompt(format!(
            "prompt of {} tokens exceeds the {capacity}-token context",
            prefix.len()
        )));
    }
    let stroke_len = vocab.stroke_len();
    // The last sampled token is never fed back.
    let needed = prefix.len() + request.n * stroke_len - 1;
    if needed > capacity {
        return Err(SeqError::Capacity { needed, capacity });
    }
    let mut fixed: Vec<u32> = Vec::new();
    if mode == PromptMode::BBox {
        let b = request.prompt_bbox.expect("bbox mode");
        b.check(vocab.grid_cells).map_err(|e| SeqError::Prompt(e.to_string()))?;
        fixed = b.as_array().to_vec();
    }

    let canvas = model_canvas(model, canvas);
    let context = model.encode_context(&[&canvas], &[request.condition.as_deref()])?;
    let mut state = model.start_decoding(&context)?;
    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut emitted: Vec<u32> = Vec::with_capacity(request.n * stroke_len);
    prefix.extend_from_slice(&fixed);
    emitted.extend_from_slice(&fixed);
    let mut logits = model.feed(&mut state, &prefix)?;
    let total = request.n * stroke_len;
    while emitted.len() < total {
        let slot = emitted.len() % stroke_len;
        let stroke_start = emitted.len() - slot;
        let allowed = allowed_range(&vocab, slot, &emitted[stroke_start..]);
        let id = pick(&logits, allowed, request.temperature, request.top_k, &mut rng)?;
        emitted.push(id);
        if emitted.len() < total {
            logits = model.feed(&mut state, &[id])?;
        }
    }
    Ok(vocab.parse_strokes(&emitted)?)
}

/// Samples strokes and decodes each into pixels placed at its box.
pub fn sample(model: &SeqModel, vq: &VqModel, canvas: &Canvas, request: &SuggestionRequest) -> Result<Vec<Suggestion>> {
    check_compatible(model, vq)?;
    let tokens = sample_tokens(model, canvas, request)?;
    let grid = model_grid(vq, canvas.dims())?;
    let strokes = decode_strokes(vq, &grid, &tokens)?;
    Ok(tokens
        .into_iter()
        .zip(strokes)
        .map(|(tokens, stroke)| Suggestion { tokens, stroke })
        .collect())
}

pub fn decode_strokes(vq: &VqModel, grid: &GridSpec, tokens: &[HyperstrokeTokens]) -> Result<Vec<Hyperstroke>> {
    Ok(detokenize_batch(vq, grid, tokens)?)
}

/// Errors unless the tokenizer emits the vocabulary the model reads.
pub fn check_compatible(model: &SeqModel, vq: &VqModel) -> Result<()> {
    let v = hyperstroke_vq::pipeline::vocab(vq)?;
    if v != model.vocab() {
        return Err(SeqError::VocabMismatch(format!(
            "sequence model {:?} but tokenizer {v:?}",
            model.vocab()
        )));
    }
    Ok(())
}

/// Cumulative previews: entry `i` is the canvas after strokes `0..=i`.
pub fn render_suggestions(canvas: &Canvas, strokes: &[Hyperstroke]) -> Result<Vec<Canvas>> {
    let mut previews = Vec::with_capacity(strokes.len());
    let mut current = canvas.clone();
    for s in strokes {
        current = blend(&current, s)?;
        previews.push(current.clone());
    }
    Ok(previews)
}
