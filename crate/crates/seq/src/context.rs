//! Context providers: a patch transformer over the canvas and a hashed
//! word embedding for the condition text.

use candle_core::Tensor;
use candle_nn::Linear;
use hyperstroke_core::Canvas;
use hyperstroke_vq::model::images_to_tensor;
use hyperstroke_vq::nn::{patchify, Params};
use sha2::{Digest, Sha256};

use crate::config::SeqConfig;
use crate::error::{Result, SeqError};
use crate::layers::{dense, EncoderLayer, LayerNorm, MASKED};

/// Canvas context `τ_c` and guidance `τ_g` for a batch.
#[derive(Clone, Debug)]
pub struct ContextEmbedding {
    /// `(b, patches, d)`.
    pub canvas: Tensor,
    /// `(b, words, d)`; `None` when no item carries a condition.
    pub guidance: Option<Tensor>,
    /// Valid guidance length per item.
    pub guidance_len: Vec<usize>,
}

impl ContextEmbedding {
    pub fn batch(&self) -> usize {
        self.canvas.dims()[0]
    }

    pub fn canvas_len(&self) -> usize {
        self.canvas.dims()[1]
    }

    pub fn guidance_width(&self) -> usize {
        self.guidance.as_ref().map_or(0, |g| g.dims()[1])
    }

    /// Cross-attention memory, canvas first then guidance, and its
    /// `(b, 1, 1, s)` additive key mask.
    pub fn memory(&self) -> Result<(Tensor, Tensor)> {
        let b = self.batch();
        let nc = self.canvas_len();
        let ng = self.guidance_width();
        let memory = match &self.guidance {
            Some(g) => Tensor::cat(&[&self.canvas, g], 1)?,
            None => self.canvas.clone(),
        };
        let mut bias = Vec::with_capacity(b * (nc + ng));
        for len in &self.guidance_len {
            bias.extend(std::iter::repeat(0f32).take(nc));
            bias.extend((0..ng).map(|i| if i < *len { 0.0 } else { MASKED as f32 }));
        }
        let bias = Tensor::from_vec(bias, (b, 1, 1, nc + ng), memory.device())?.to_dtype(memory.dtype())?;
        Ok((memory, bias))
    }
}

/// Lower-cased alphanumeric words of `text`, each hashed into a bucket.
pub fn text_tokens(text: &str, buckets: usize, max_tokens: usize) -> Vec<u32> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .take(max_tokens)
        .map(|w| {
            let digest = Sha256::digest(w.as_bytes());
            let mut head = [0u8; 8];
            head.copy_from_slice(&digest[..8]);
            (u64::from_le_bytes(head) % buckets as u64) as u32
        })
        .collect()
}

pub struct CanvasEncoder {
    patch: usize,
    dims: (usize, usize),
    input: Linear,
    pos: Tensor,
    layers: Vec<EncoderLayer>,
    norm: LayerNorm,
}

impl CanvasEncoder {
    pub fn new(params: &mut Params, config: &SeqConfig) -> Result<Self> {
        let d = config.d_model;
        let p = config.canvas_patch;
        let input = params.linear("canvas.input", 3 * p * p, d)?;
        let pos = params.normal("canvas.pos", &[config.canvas_tokens(), d], 0.02)?;
        let layers = (0..config.canvas_layers)
            .map(|i| EncoderLayer::new(params, &format!("canvas.layer{i}"), d, config.heads, config.ff_mult))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            patch: p,
            dims: config.canvas,
            input,
            pos: pos.as_tensor().clone(),
            layers,
            norm: LayerNorm::new(params, "canvas.norm", d)?,
        })
    }

    /// `(b, 3, H, W)` in `[0, 1]` to `(b, patches, d)`.
    pub fn forward(&self, images: &Tensor) -> Result<Tensor> {
        let (b, c, h, w) = images.dims4()?;
        if c != 3 || (w, h) != self.dims {
            return Err(SeqError::Shape(format!(
                "canvas {w}x{h}x{c}, model expects {}x{}x3",
                self.dims.0, self.dims.1
            )));
        }
        let p = patchify(&images.affine(2.0, -1.0)?, self.patch)?;
        let (_, gh, gw, e) = p.dims4()?;
        let mut x = dense(&self.input, &p.reshape((b, gh * gw, e))?)?.broadcast_add(&self.pos)?;
        for layer in &self.layers {
            x = layer.forward(&x, None)?;
        }
        Ok(self.norm.forward(&x)?)
    }
}

pub struct TextEncoder {
    buckets: usize,
    max_tokens: usize,
    table: Tensor,
    pos: Tensor,
    norm: LayerNorm,
}

impl TextEncoder {
    pub fn new(params: &mut Params, config: &SeqConfig) -> Result<Self> {
        let d = config.d_model;
        let table = params.normal("text.table", &[config.text_buckets, d], 0.02)?;
        let pos = params.normal("text.pos", &[config.text_max_tokens.max(1), d], 0.02)?;
        Ok(Self {
            buckets: config.text_buckets,
            max_tokens: config.text_max_tokens,
            table: table.as_tensor().clone(),
            pos: pos.as_tensor().clone(),
            norm: LayerNorm::new(params, "text.norm", d)?,
        })
    }

    /// Embeds each condition, padded to the longest. Returns `None` when
    /// every condition is absent or has no words.
    pub fn forward(&self, conditions: &[Option<&str>]) -> Result<(Option<Tensor>, Vec<usize>)> {
        let ids: Vec<Vec<u32>> = conditions
            .iter()
            .map(|c| c.map_or_else(Vec::new, |t| text_tokens(t, self.buckets, self.max_tokens)))
            .collect();
        let lens: Vec<usize> = ids.iter().map(Vec::len).collect();
        let width = lens.iter().copied().max().unwrap_or(0);
        if width == 0 {
            return Ok((None, lens));
        }
        let flat: Vec<u32> = ids
            .iter()
            .flat_map(|row| row.iter().copied().chain(std::iter::repeat(0).take(width - row.len())))
            .collect();
        let b = conditions.len();
        let idx = Tensor::from_vec(flat, b * width, self.table.device())?;
        let d = self.table.dims()[1];
        let x = self
            .table
            .index_select(&idx, 0)?
            .reshape((b, width, d))?
            .broadcast_add(&self.pos.narrow(0, 0, width)?)?;
        Ok((Some(self.norm.forward(&x)?), lens))
    }
}

/// Stacks canvases for the canvas encoder.
pub fn canvas_tensor(canvases: &[&Canvas], params: &Params) -> Result<Tensor> {
    Ok(images_to_tensor::<3>(canvases, params.device(), params.dtype())?)
}
