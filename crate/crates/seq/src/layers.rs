//! Transformer building blocks over candle tensors.
//!
//! Layer norm and softmax are written with primitive ops so gradients flow
//! through them on every backend.

use candle_core::{Module, Tensor, D};
use candle_nn::Linear;
use hyperstroke_vq::nn::Params;

use crate::error::Result;

/// Additive bias that removes a key from attention.
pub const MASKED: f64 = -1e9;

/// Linear layer over the last axis; rank-3 inputs are flattened first
/// because the batched matmul backward is markedly slower on CPU.
pub fn dense(layer: &Linear, x: &Tensor) -> candle_core::Result<Tensor> {
    match x.dims() {
        &[b, t, d] => {
            let y = layer.forward(&x.reshape((b * t, d))?)?;
            let out = y.dim(1)?;
            y.reshape((b, t, out))
        }
        _ => layer.forward(x),
    }
}

pub struct LayerNorm {
    weight: Tensor,
    bias: Tensor,
}

impl LayerNorm {
    pub fn new(params: &mut Params, name: &str, dim: usize) -> Result<Self> {
        let weight = params.constant(&format!("{name}.weight"), &[dim], 1.0)?;
        let bias = params.constant(&format!("{name}.bias"), &[dim], 0.0)?;
        Ok(Self {
            weight: weight.as_tensor().clone(),
            bias: bias.as_tensor().clone(),
        })
    }

    pub fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let mean = x.mean_keepdim(D::Minus1)?;
        let centred = x.broadcast_sub(&mean)?;
        let var = centred.sqr()?.mean_keepdim(D::Minus1)?;
        centred
            .broadcast_div(&(var + 1e-5)?.sqrt()?)?
            .broadcast_mul(&self.weight)?
            .broadcast_add(&self.bias)
    }
}

pub fn softmax(x: &Tensor) -> candle_core::Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    e.broadcast_div(&e.sum_keepdim(D::Minus1)?)
}

pub fn log_softmax(x: &Tensor) -> candle_core::Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let shifted = x.broadcast_sub(&max)?;
    shifted.broadcast_sub(&shifted.exp()?.sum_keepdim(D::Minus1)?.log()?)
}

pub struct Attention {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
    heads: usize,
}

impl Attention {
    pub fn new(params: &mut Params, name: &str, dim: usize, heads: usize) -> Result<Self> {
        Ok(Self {
            q: params.linear(&format!("{name}.q"), dim, dim)?,
            k: params.linear(&format!("{name}.k"), dim, dim)?,
            v: params.linear(&format!("{name}.v"), dim, dim)?,
            o: params.linear(&format!("{name}.o"), dim, dim)?,
            heads,
        })
    }

    /// `(b, t, d) -> (b, heads, t, d / heads)`.
    fn split(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        x.reshape((b, t, self.heads, d / self.heads))?.transpose(1, 2)?.contiguous()
    }

    /// Projected keys and values of `source`, split into heads.
    pub fn keys_values(&self, source: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
        Ok((self.split(&dense(&self.k, source)?)?, self.split(&dense(&self.v, source)?)?))
    }

    /// Attends `x` over pre-split keys and values. `bias` broadcasts to
    /// `(b, heads, t, s)`.
    pub fn attend(&self, x: &Tensor, keys: &Tensor, values: &Tensor, bias: Option<&Tensor>) -> candle_core::Result<Tensor> {
        let (b, t, d) = x.dims3()?;
        let q = self.split(&dense(&self.q, x)?)?;
        let scale = 1.0 / ((d / self.heads) as f64).sqrt();
        let mut scores = (q.matmul(&keys.t()?)? * scale)?;
        if let Some(bias) = bias {
            scores = scores.broadcast_add(bias)?;
        }
        let out = softmax(&scores)?.matmul(values)?;
        dense(&self.o, &out.transpose(1, 2)?.reshape((b, t, d))?)
    }

    pub fn forward(&self, x: &Tensor, source: &Tensor, bias: Option<&Tensor>) -> candle_core::Result<Tensor> {
        let (k, v) = self.keys_values(source)?;
        self.attend(x, &k, &v, bias)
    }
}

pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    pub fn new(params: &mut Params, name: &str, dim: usize, mult: usize) -> Result<Self> {
        Ok(Self {
            up: params.linear(&format!("{name}.up"), dim, dim * mult)?,
            down: params.linear(&format!("{name}.down"), dim * mult, dim)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        dense(&self.down, &dense(&self.up, x)?.relu()?)
    }
}

/// Pre-norm self-attention block without masking.
pub struct EncoderLayer {
    ln1: LayerNorm,
    attn: Attention,
    ln2: LayerNorm,
    ff: FeedForward,
}

impl EncoderLayer {
    pub fn new(params: &mut Params, name: &str, dim: usize, heads: usize, mult: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(params, &format!("{name}.ln1"), dim)?,
            attn: Attention::new(params, &format!("{name}.attn"), dim, heads)?,
            ln2: LayerNorm::new(params, &format!("{name}.ln2"), dim)?,
            ff: FeedForward::new(params, &format!("{name}.ff"), dim, mult)?,
        })
    }

    pub fn forward(&self, x: &Tensor, bias: Option<&Tensor>) -> candle_core::Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.attn.forward(&h, &h, bias)?)?;
        &x + self.ff.forward(&self.ln2.forward(&x)?)?
    }
}

/// Self-attention keys and values accumulated during incremental decoding.
#[derive(Clone)]
pub struct LayerCache {
    pub keys: Option<Tensor>,
    pub values: Option<Tensor>,
    pub cross: (Tensor, Tensor),
}

/// Pre-norm causal self-attention, cross-attention and feed-forward.
pub struct DecoderLayer {
    ln1: LayerNorm,
    self_attn: Attention,
    ln2: LayerNorm,
    cross_attn: Attention,
    ln3: LayerNorm,
    ff: FeedForward,
}

impl DecoderLayer {
    pub fn new(params: &mut Params, name: &str, dim: usize, heads: usize, mult: usize) -> Result<Self> {
        Ok(Self {
            ln1: LayerNorm::new(params, &format!("{name}.ln1"), dim)?,
            self_attn: Attention::new(params, &format!("{name}.self"), dim, heads)?,
            ln2: LayerNorm::new(params, &format!("{name}.ln2"), dim)?,
            cross_attn: Attention::new(params, &format!("{name}.cross"), dim, heads)?,
            ln3: LayerNorm::new(params, &format!("{name}.ln3"), dim)?,
            ff: FeedForward::new(params, &format!("{name}.ff"), dim, mult)?,
        })
    }

    pub fn forward(&self, x: &Tensor, causal: &Tensor, memory: &Tensor, memory_bias: &Tensor) -> candle_core::Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let x = (x + self.self_attn.forward(&h, &h, Some(causal))?)?;
        let h = self.ln2.forward(&x)?;
        let x = (&x + self.cross_attn.forward(&h, memory, Some(memory_bias))?)?;
        &x + self.ff.forward(&self.ln3.forward(&x)?)?
    }

    pub fn start_cache(&self, memory: &Tensor) -> candle_core::Result<LayerCache> {
        Ok(LayerCache {
            keys: None,
            values: None,
            cross: self.cross_attn.keys_values(memory)?,
        })
    }

    /// Processes new positions `x` (b, t, d) that follow everything in
    /// `cache`. `causal` masks within the new block and has shape
    /// `(t, cached + t)`.
    pub fn forward_cached(&self, x: &Tensor, cache: &mut LayerCache, causal: Option<&Tensor>, memory_bias: &Tensor) -> candle_core::Result<Tensor> {
        let h = self.ln1.forward(x)?;
        let (k, v) = self.self_attn.keys_values(&h)?;
        let (k, v) = match (&cache.keys, &cache.values) {
            (Some(pk), Some(pv)) => (Tensor::cat(&[pk, &k], 2)?, Tensor::cat(&[pv, &v], 2)?),
            _ => (k, v),
        };
        let x = (x + self.self_attn.attend(&h, &k, &v, causal)?)?;
        cache.keys = Some(k);
        cache.values = Some(v);
        let h = self.ln2.forward(&x)?;
        let x = (&x + self.cross_attn.attend(&h, &cache.cross.0, &cache.cross.1, Some(memory_bias))?)?;
        &x + self.ff.forward(&self.ln3.forward(&x)?)?
    }
}

/// `(t, t)` additive mask hiding future positions.
pub fn causal_bias(t: usize, offset: usize, device: &candle_core::Device, dtype: candle_core::DType) -> candle_core::Result<Tensor> {
    let total = offset + t;
    let values: Vec<f32> = (0..t)
        .flat_map(|i| (0..total).map(move |j| if j <= offset + i { 0.0 } else { MASKED as f32 }))
        .collect();
    Tensor::from_vec(values, (t, total), device)?.to_dtype(dtype)
}
