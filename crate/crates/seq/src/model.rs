//! Encoder-decoder over hyperstroke tokens.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::Linear;
use hyperstroke_core::{Canvas, TokenVocab};
use hyperstroke_vq::nn::{file_hash, read_metadata, Params};
use serde::{Deserialize, Serialize};

use crate::config::{EncoderBackend, SeqConfig};
use crate::context::{canvas_tensor, CanvasEncoder, ContextEmbedding, TextEncoder};
use crate::error::{Result, SeqError};
use crate::layers::{causal_bias, dense, DecoderLayer, LayerCache, LayerNorm};

pub const FORMAT_VERSION: u32 = 1;
const META_HEADER: &str = "hyperstroke.seq";
const META_CONFIG: &str = "config";
const META_STEP: &str = "step";

/// Checkpoint header echoed in metadata and by the service.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeqHeader {
    pub format_version: u32,
    pub bbox_vocab: u32,
    pub visual_vocab: u32,
    pub k: usize,
    #[serde(rename = "C")]
    pub grid_c: u32,
    pub n_max: usize,
    pub canvas_backend: String,
    pub text_backend: String,
}

fn backend_id(b: &EncoderBackend) -> &'static str {
    match b {
        EncoderBackend::TinyTrainable => "tiny-trainable",
        EncoderBackend::PretrainedFrozen { .. } => "pretrained-frozen",
    }
}

impl SeqHeader {
    pub fn from_config(config: &SeqConfig) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            bbox_vocab: config.grid_c + 1,
            visual_vocab: config.codebook_size,
            k: config.k,
            grid_c: config.grid_c,
            n_max: config.n_max,
            canvas_backend: backend_id(&config.canvas_backend).into(),
            text_backend: backend_id(&config.text_backend).into(),
        }
    }
}

/// Incremental decoding state for a single sequence.
#[derive(Clone)]
pub struct DecodeState {
    caches: Vec<LayerCache>,
    memory_bias: Tensor,
    len: usize,
}

impl DecodeState {
    /// Tokens consumed so far.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

pub struct SeqModel {
    config: SeqConfig,
    vocab: TokenVocab,
    params: Params,
    canvas: CanvasEncoder,
    text: TextEncoder,
    embed: Tensor,
    pos: Tensor,
    layers: Vec<DecoderLayer>,
    norm: LayerNorm,
    head: Linear,
    step: usize,
}

impl SeqModel {
    pub fn new(config: SeqConfig, device: &Device) -> Result<Self> {
        Self::build(config, DType::F32, device, true)
    }

    pub fn with_dtype(config: SeqConfig, dtype: DType, device: &Device) -> Result<Self> {
        Self::build(config, dtype, device, true)
    }

    fn build(config: SeqConfig, dtype: DType, device: &Device, load_backends: bool) -> Result<Self> {
        config.validate()?;
        let vocab = config.vocab()?;
        let d = config.d_model;
        let mut params = Params::new(config.seed, dtype, device);
        let canvas = CanvasEncoder::new(&mut params, &config)?;
        let text = TextEncoder::new(&mut params, &config)?;
        let embed = params.normal("decoder.embed", &[vocab.size(), d], 0.02)?;
        let pos = params.normal("decoder.pos", &[config.context_len(), d], 0.02)?;
        let layers = (0..config.decoder_layers)
            .map(|i| DecoderLayer::new(&mut params, &format!("decoder.layer{i}"), d, config.heads, config.ff_mult))
            .collect::<Result<Vec<_>>>()?;
        let norm = LayerNorm::new(&mut params, "decoder.norm", d)?;
        let head = params.linear("decoder.head", d, vocab.size())?;
        if load_backends {
            for (backend, prefix) in [(&config.canvas_backend, "canvas."), (&config.text_backend, "text.")] {
                if let EncoderBackend::PretrainedFrozen { weights } = backend {
                    params.load_filtered(weights, |n| n.starts_with(prefix))?;
                }
            }
        }
        Ok(Self {
            vocab,
            params,
            canvas,
            text,
            embed: embed.as_tensor().clone(),
            pos: pos.as_tensor().clone(),
            layers,
            norm,
            head,
            step: 0,
            config,
        })
    }

    pub fn config(&self) -> &SeqConfig {
        &self.config
    }

    pub fn vocab(&self) -> TokenVocab {
        self.vocab
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn device(&self) -> &Device {
        self.params.device()
    }

    pub fn dtype(&self) -> DType {
        self.params.dtype()
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn set_step(&mut self, step: usize) {
        self.step = step;
    }

    pub fn canvas_frozen(&self) -> bool {
        self.config.freeze_canvas || matches!(self.config.canvas_backend, EncoderBackend::PretrainedFrozen { .. })
    }

    pub fn text_frozen(&self) -> bool {
        self.config.freeze_text || matches!(self.config.text_backend, EncoderBackend::PretrainedFrozen { .. })
    }

    /// Parameters updated by training; frozen encoders are excluded.
    pub fn trainable_vars(&self) -> Vec<Var> {
        let canvas_frozen = self.canvas_frozen();
        let text_frozen = self.text_frozen();
        self.params
            .names()
            .filter(|n| !(canvas_frozen && n.starts_with("canvas.")) && !(text_frozen && n.starts_with("text.")))
            .filter_map(|n| self.params.get(n).cloned())
            .collect()
    }

    /// Embeds canvases (at model resolution) and optional conditions.
    pub fn encode_context(&self, canvases: &[&Canvas], conditions: &[Option<&str>]) -> Result<ContextEmbedding> {
        if canvases.len() != conditions.len() {
            return Err(SeqError::Shape(format!(
                "{} canvases but {} conditions",
                canvases.len(),
                conditions.len()
            )));
        }
        let images = canvas_tensor(canvases, &self.params)?;
        self.encode_context_tensor(&images, conditions)
    }

    pub fn encode_context_tensor(&self, images: &Tensor, conditions: &[Option<&str>]) -> Result<ContextEmbedding> {
        let mut canvas = self.canvas.forward(images)?;
        let (guidance, guidance_len) = self.text.forward(conditions)?;
        let mut guidance = guidance;
        if self.canvas_frozen() {
            canvas = canvas.detach();
        }
        if self.text_frozen() {
            guidance = guidance.map(|g| g.detach());
        }
        Ok(ContextEmbedding {
            canvas,
            guidance,
            guidance_len,
        })
    }

    fn embed_tokens(&self, ids: &Tensor, offset: usize) -> Result<Tensor> {
        let (b, t) = ids.dims2()?;
        if offset + t > self.config.context_len() {
            return Err(SeqError::Capacity {
                needed: offset + t,
                capacity: self.config.context_len(),
            });
        }
        let x = self
            .embed
            .index_select(&ids.flatten_all()?, 0)?
            .reshape((b, t, self.config.d_model))?;
        Ok(x.broadcast_add(&self.pos.narrow(0, offset, t)?)?)
    }

    /// Teacher-forced logits `(b, t, V)` for input ids `(b, t)`.
    pub fn forward(&self, inputs: &Tensor, context: &ContextEmbedding) -> Result<Tensor> {
        let (b, t) = inputs.dims2()?;
        if b != context.batch() {
            return Err(SeqError::Shape(format!("{b} sequences but {} contexts", context.batch())));
        }
        let mut x = self.embed_tokens(inputs, 0)?;
        let causal = causal_bias(t, 0, self.device(), self.dtype())?.reshape((1, 1, t, t))?;
        let (memory, memory_bias) = context.memory()?;
        for layer in &self.layers {
            x = layer.forward(&x, &causal, &memory, &memory_bias)?;
        }
        Ok(dense(&self.head, &self.norm.forward(&x)?)?)
    }

    /// Starts incremental decoding against a single-item context.
    pub fn start_decoding(&self, context: &ContextEmbedding) -> Result<DecodeState> {
        if context.batch() != 1 {
            return Err(SeqError::Shape("incremental decoding takes one context".into()));
        }
        let (memory, memory_bias) = context.memory()?;
        let caches = self
            .layers
            .iter()
            .map(|l| l.start_cache(&memory))
            .collect::<candle_core::Result<Vec<_>>>()?;
        Ok(DecodeState {
            caches,
            memory_bias,
            len: 0,
        })
    }

    /// Appends `ids` to the decoding state and returns the logits that
    /// follow the last of them.
    pub fn feed(&self, state: &mut DecodeState, ids: &[u32]) -> Result<Vec<f32>> {
        if ids.is_empty() {
            return Err(SeqError::Prompt("nothing to feed".into()));
        }
        let t = ids.len();
        let input = Tensor::from_vec(ids.to_vec(), (1, t), self.device())?;
        let mut x = self.embed_tokens(&input, state.len)?;
        let causal = if t > 1 {
            Some(causal_bias(t, state.len, self.device(), self.dtype())?.reshape((1, 1, t, state.len + t))?)
        } else {
            None
        };
        for (layer, cache) in self.layers.iter().zip(state.caches.iter_mut()) {
            x = layer.forward_cached(&x, cache, causal.as_ref(), &state.memory_bias)?;
        }
        state.len += t;
        let last = x.narrow(1, t - 1, 1)?;
        let logits = dense(&self.head, &self.norm.forward(&last)?)?;
        Ok(logits.flatten_all()?.to_dtype(DType::F32)?.to_vec1::<f32>()?)
    }

    pub fn header(&self) -> SeqHeader {
        SeqHeader::from_config(&self.config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let json = |v: serde_json::Result<String>| v.map_err(|e| SeqError::checkpoint(path, e));
        let mut meta = HashMap::new();
        meta.insert(META_HEADER.to_string(), json(serde_json::to_string(&self.header()))?);
        meta.insert(META_CONFIG.to_string(), json(serde_json::to_string(&self.config))?);
        meta.insert(META_STEP.to_string(), self.step.to_string());
        Ok(self.params.save(path, meta)?)
    }

    pub fn load(path: impl AsRef<Path>, device: &Device) -> Result<Self> {
        let path = path.as_ref();
        let meta = read_metadata(path)?;
        let header: SeqHeader = meta
            .get(META_HEADER)
            .ok_or_else(|| SeqError::checkpoint(path, "not a sequence model checkpoint"))
            .and_then(|s| serde_json::from_str(s).map_err(|e| SeqError::checkpoint(path, e)))?;
        if header.format_version != FORMAT_VERSION {
            return Err(SeqError::checkpoint(
                path,
                format!("format version {} unsupported (expected {FORMAT_VERSION})", header.format_version),
            ));
        }
        let config: SeqConfig = meta
            .get(META_CONFIG)
            .ok_or_else(|| SeqError::checkpoint(path, "missing config"))
            .and_then(|s| serde_json::from_str(s).map_err(|e| SeqError::checkpoint(path, e)))?;
        if SeqHeader::from_config(&config) != header {
            return Err(SeqError::checkpoint(path, "header disagrees with config"));
        }
        let mut model = Self::build(config, DType::F32, device, false)?;
        model.params.load(path, &[])?;
        model.step = meta.get(META_STEP).and_then(|s| s.parse().ok()).unwrap_or(0);
        Ok(model)
    }

    pub fn checkpoint_hash(path: impl AsRef<Path>) -> Result<String> {
        Ok(file_hash(path)?)
    }
}
