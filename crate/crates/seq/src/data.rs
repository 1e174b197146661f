//! Training windows built from the token cache.

use candle_core::{DType, Device, Tensor};
use hyperstroke_core::tokens::{TokenCacheEntry, TokenCacheHeader};
use hyperstroke_core::{compose, Canvas, GridSpec, TokenVocab};
use hyperstroke_vq::pipeline::detokenize_batch;
use hyperstroke_vq::VqModel;

use crate::config::{PrefixMode, SeqConfig};
use crate::error::{Result, SeqError};

/// One teacher-forcing window.
#[derive(Clone, Debug)]
pub struct SeqExample {
    /// `[start] + strokes (+ [end])`.
    pub tokens: Vec<u32>,
    /// Canvas the window continues from, at model resolution.
    pub canvas: Canvas,
    pub condition: Option<String>,
}

/// Fails unless the cache, the tokenizer and the sequence config share
/// one vocabulary.
pub fn check_vocab(header: &TokenCacheHeader, vq: &VqModel, config: &SeqConfig) -> Result<()> {
    let cache = header.vocab()?;
    let vq_vocab = hyperstroke_vq::pipeline::vocab(vq)?;
    let seq = config.vocab()?;
    if cache != vq_vocab {
        return Err(SeqError::VocabMismatch(format!("token cache {cache:?} but tokenizer {vq_vocab:?}")));
    }
    if cache != seq {
        return Err(SeqError::VocabMismatch(format!("token cache {cache:?} but sequence config {seq:?}")));
    }
    Ok(())
}

/// Checks `[start] + whole strokes + optional [end]` framing.
pub fn check_framing(vocab: &TokenVocab, tokens: &[u32]) -> Result<usize> {
    let strokes = vocab.parse(tokens)?;
    let ended = tokens.last() == Some(&vocab.end());
    let expected = vocab.sequence_len(strokes.len()) + usize::from(ended);
    if tokens.len() != expected {
        return Err(SeqError::Misaligned(format!(
            "{} tokens for {} strokes (expected {expected})",
            tokens.len(),
            strokes.len()
        )));
    }
    Ok(strokes.len())
}

fn resize(canvas: Canvas, dims: (usize, usize)) -> Canvas {
    if canvas.dims() == dims {
        canvas
    } else {
        canvas.resize_bilinear(dims.0, dims.1)
    }
}

/// Windows for every cached sketch. An end token follows the last stroke
/// of every sketch that was not truncated. Canvases for stroke prefixes are
/// composed from tokenizer reconstructions, matching what the model sees
/// after accepting its own suggestions.
pub fn build_examples(config: &SeqConfig, header: &TokenCacheHeader, entries: &[TokenCacheEntry], vq: &VqModel) -> Result<Vec<SeqExample>> {
    check_vocab(header, vq, config)?;
    let vocab = config.vocab()?;
    let native = (header.canvas.0 as usize, header.canvas.1 as usize);
    let grid = GridSpec::new(header.canvas.0, header.canvas.1, header.grid_c)?;
    let blank = resize(Canvas::white(native.0, native.1), config.canvas);
    let mut examples = Vec::new();
    for entry in entries {
        check_framing(&vocab, &entry.tokens)?;
        if entry.tokens.last() == Some(&vocab.end()) {
            return Err(SeqError::Misaligned(format!("cache entry {} carries an end token", entry.key)));
        }
        let mut strokes = vocab.parse(&entry.tokens)?;
        let mut ended = !entry.truncated;
        if strokes.len() > config.n_max {
            strokes.truncate(config.n_max);
            ended = false;
        }
        let frame = |from: usize| -> Result<Vec<u32>> {
            let mut t = vocab.frame(&strokes[from..])?;
            if ended {
                t.push(vocab.end());
            }
            Ok(t)
        };
        let condition = Some(entry.category.clone()).filter(|c| !c.is_empty());
        match config.prefix_mode {
            PrefixMode::Blank => examples.push(SeqExample {
                tokens: frame(0)?,
                canvas: blank.clone(),
                condition,
            }),
            PrefixMode::EveryStroke => {
                let decoded = if strokes.is_empty() {
                    Vec::new()
                } else {
                    detokenize_batch(vq, &grid, &strokes)?
                };
                let last = if ended { strokes.len() } else { strokes.len().saturating_sub(1) };
                let mut canvas = Canvas::white(native.0, native.1);
                for m in 0..=last {
                    if m > 0 {
                        canvas = compose(&canvas, &decoded[m - 1..m])?;
                    }
                    examples.push(SeqExample {
                        tokens: frame(m)?,
                        canvas: resize(canvas.clone(), config.canvas),
                        condition: condition.clone(),
                    });
                }
            }
        }
    }
    Ok(examples)
}

/// Padded teacher-forcing batch.
pub struct SeqBatch {
    /// `(b, t)` input ids.
    pub inputs: Tensor,
    /// Next-token targets, `pad` past each sequence's end.
    pub targets: Vec<Vec<u32>>,
    /// `(b, 3, H, W)`.
    pub canvases: Tensor,
    pub conditions: Vec<Option<String>>,
}

impl SeqBatch {
    pub fn new(examples: &[&SeqExample], vocab: &TokenVocab, device: &Device, dtype: DType) -> Result<Self> {
        if examples.is_empty() {
            return Err(SeqError::EmptyDataset);
        }
        let width = examples.iter().map(|e| e.tokens.len().saturating_sub(1)).max().unwrap_or(0);
        if width == 0 {
            return Err(SeqError::Misaligned("sequences need at least two tokens".into()));
        }
        let mut inputs = Vec::with_capacity(examples.len() * width);
        let mut targets = Vec::with_capacity(examples.len());
        for e in examples {
            let n = e.tokens.len() - 1;
            inputs.extend_from_slice(&e.tokens[..n]);
            inputs.extend(std::iter::repeat(vocab.pad()).take(width - n));
            let mut row = e.tokens[1..].to_vec();
            row.resize(width, vocab.pad());
            targets.push(row);
        }
        let canvases: Vec<&Canvas> = examples.iter().map(|e| &e.canvas).collect();
        Ok(Self {
            inputs: Tensor::from_vec(inputs, (examples.len(), width), device)?,
            targets,
            canvases: hyperstroke_vq::model::images_to_tensor::<3>(&canvases, device, dtype)?,
            conditions: examples.iter().map(|e| e.condition.clone()).collect(),
        })
    }

    pub fn condition_refs(&self) -> Vec<Option<&str>> {
        self.conditions.iter().map(|c| c.as_deref()).collect()
    }
}
