//! Encoder, codebook, decoder and patch discriminator.
//!
//! Convolutions are expressed as patch embeddings plus 3x3 neighbourhood
//! mixing layers (gather + dense), which trains far faster on CPU than
//! candle's direct convolution kernels while keeping a convolutional
//! receptive field.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Module, Tensor, Var, D};
use candle_nn::Linear;
use hyperstroke_core::{AlphaImage, Canvas, Raster};
use serde::{Deserialize, Serialize};

use crate::config::VqConfig;
use crate::error::{Result, VqError};
use crate::nn::{file_hash, patchify, read_metadata, shift_matrix, unpatchify, Mix3x3, Params};
use crate::quantize::{nearest, VisualTokens};

pub const FORMAT_VERSION: u32 = 1;
const META_HEADER: &str = "hyperstroke.vq";
const META_CONFIG: &str = "config";
const META_STEP: &str = "step";

/// Summary block stored alongside the weights.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    #[serde(rename = "W_T")]
    pub w_t: usize,
    #[serde(rename = "H_T")]
    pub h_t: usize,
    pub f: usize,
    pub codebook_size: usize,
    pub dim: usize,
    pub k: usize,
    #[serde(rename = "C")]
    pub c: u32,
    pub format_version: u32,
}

impl CheckpointHeader {
    pub fn from_config(config: &VqConfig) -> Self {
        Self {
            w_t: config.patch.0,
            h_t: config.patch.1,
            f: config.downsample,
            codebook_size: config.codebook_size,
            dim: config.embed_dim,
            k: config.k(),
            c: config.grid_c,
            format_version: FORMAT_VERSION,
        }
    }
}

/// Residual stack of 3x3 mixing layers over a latent grid.
struct MixStack {
    layers: Vec<Mix3x3>,
}

impl MixStack {
    fn new(params: &mut Params, prefix: &str, hidden: usize, depth: usize) -> Result<Self> {
        let layers = (0..depth)
            .map(|i| Mix3x3::new(params, &format!("{prefix}.mix{i}"), hidden, hidden))
            .collect::<Result<_>>()?;
        Ok(Self { layers })
    }

    /// `x`: `(b, h, w, hidden)`.
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let (_, h, w, _) = x.dims4()?;
        if self.layers.is_empty() {
            return Ok(x.clone());
        }
        let shift = shift_matrix(h, w, x.device(), x.dtype())?;
        let mut x = x.clone();
        for layer in &self.layers {
            let m = layer.forward(&x, &shift)?.gelu()?;
            x = (x + m)?;
        }
        Ok(x)
    }
}

fn dense_grid(layer: &Linear, x: &Tensor) -> candle_core::Result<Tensor> {
    let (b, h, w, c) = x.dims4()?;
    let y = layer.forward(&x.reshape((b * h * w, c))?)?;
    let out = y.dim(1)?;
    y.reshape((b, h, w, out))
}

struct Encoder {
    input: Linear,
    mix: MixStack,
    output: Linear,
    f: usize,
}

impl Encoder {
    /// `before`, `after`: `(b, 3, H, W)` in [0,1] -> latents `(b, h, w, dim)`.
    fn forward(&self, before: &Tensor, after: &Tensor) -> candle_core::Result<Tensor> {
        let x = Tensor::cat(&[before, after], 1)?.affine(2.0, -1.0)?;
        let p = patchify(&x, self.f)?;
        let h = dense_grid(&self.input, &p)?.gelu()?;
        let h = self.mix.forward(&h)?;
        dense_grid(&self.output, &h)
    }
}

struct Decoder {
    input: Linear,
    mix: MixStack,
    output: Linear,
    f: usize,
}

impl Decoder {
    /// `(b, h, w, dim)` -> straight-alpha RGBA `(b, 4, H, W)` in [0,1].
    fn forward(&self, z: &Tensor) -> candle_core::Result<Tensor> {
        let h = dense_grid(&self.input, z)?.gelu()?;
        let h = self.mix.forward(&h)?;
        let y = dense_grid(&self.output, &h)?;
        candle_nn::ops::sigmoid(&unpatchify(&y, self.f, 4)?)
    }
}

/// Patch classifier over 3-channel composites; one logit per patch.
pub struct Discriminator {
    input: Linear,
    mix: MixStack,
    output: Linear,
    patch: usize,
}

impl Discriminator {
    /// `(b, 3, H, W)` -> logits `(b, H/p, W/p)`.
    pub fn logits(&self, image: &Tensor) -> candle_core::Result<Tensor> {
        let p = patchify(&image.affine(2.0, -1.0)?, self.patch)?;
        let h = dense_grid(&self.input, &p)?.gelu()?;
        let h = self.mix.forward(&h)?;
        dense_grid(&self.output, &h)?.squeeze(D::Minus1)
    }
}

/// Intermediate values of one training forward pass.
pub struct Forward {
    /// Encoder output `(b, h, w, dim)`.
    pub z: Tensor,
    /// Selected codebook rows, same shape as `z`.
    pub z_q: Tensor,
    pub indices: Vec<u32>,
    /// Decoded stroke `(b, 4, H, W)`.
    pub stroke: Tensor,
}

pub struct VqModel {
    config: VqConfig,
    params: Params,
    encoder: Encoder,
    decoder: Decoder,
    codebook: Var,
    discriminator: Discriminator,
    step: usize,
}

impl VqModel {
    pub fn new(config: VqConfig, device: &Device) -> Result<Self> {
        Self::with_dtype(config, DType::F32, device)
    }

    pub fn with_dtype(config: VqConfig, dtype: DType, device: &Device) -> Result<Self> {
        config.validate()?;
        let f = config.downsample;
        let hid = config.hidden;
        let mut params = Params::new(config.seed, dtype, device);
        let encoder = Encoder {
            input: params.linear("encoder.input", 6 * f * f, hid)?,
            mix: MixStack::new(&mut params, "encoder", hid, config.mix_layers)?,
            output: params.linear("encoder.output", hid, config.embed_dim)?,
            f,
        };
        let bound = 1.0 / config.codebook_size as f64;
        let codebook = params.uniform("codebook", &[config.codebook_size, config.embed_dim], bound)?;
        let decoder = Decoder {
            input: params.linear("decoder.input", config.embed_dim, hid)?,
            mix: MixStack::new(&mut params, "decoder", hid, config.mix_layers)?,
            output: params.linear("decoder.output", hid, 4 * f * f)?,
            f,
        };
        let dp = config.disc_patch;
        let discriminator = Discriminator {
            input: params.linear("disc.input", 3 * dp * dp, config.disc_hidden)?,
            mix: MixStack::new(&mut params, "disc", config.disc_hidden, 1)?,
            output: params.linear("disc.output", config.disc_hidden, 1)?,
            patch: dp,
        };
        Ok(Self {
            config,
            params,
            encoder,
            decoder,
            codebook,
            discriminator,
            step: 0,
        })
    }

    pub fn config(&self) -> &VqConfig {
        &self.config
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

    pub fn codebook(&self) -> &Var {
        &self.codebook
    }

    pub fn discriminator(&self) -> &Discriminator {
        &self.discriminator
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn set_step(&mut self, step: usize) {
        self.step = step;
    }

    /// Generator-side parameters: encoder, codebook and decoder.
    pub fn generator_vars(&self) -> Vec<Var> {
        let mut vars = self.params.vars_with_prefix("encoder.");
        vars.push(self.codebook.clone());
        vars.extend(self.params.vars_with_prefix("decoder."));
        vars
    }

    pub fn discriminator_vars(&self) -> Vec<Var> {
        self.params.vars_with_prefix("disc.")
    }

    fn check_patches(&self, t: &Tensor, channels: usize) -> Result<()> {
        let (w, h) = self.config.patch;
        match t.dims4() {
            Ok((_, c, th, tw)) if c == channels && th == h && tw == w => Ok(()),
            _ => Err(VqError::Shape(format!(
                "expected (b, {channels}, {h}, {w}) patches, got {:?}",
                t.dims()
            ))),
        }
    }

    pub fn encode_latents(&self, before: &Tensor, after: &Tensor) -> Result<Tensor> {
        self.check_patches(before, 3)?;
        self.check_patches(after, 3)?;
        Ok(self.encoder.forward(before, after)?)
    }

    /// Nearest codebook indices for latents `(..., dim)`.
    pub fn nearest_indices(&self, z: &Tensor) -> Result<Vec<u32>> {
        let dim = self.config.embed_dim;
        let flat = z.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let book = self.codebook.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        nearest(&flat, &book, dim)
    }

    /// Codebook rows for `indices`, shaped `(b, h, w, dim)`.
    pub fn lookup(&self, indices: &[u32], batch: usize) -> Result<Tensor> {
        let (gw, gh) = self.config.latent_dims();
        if indices.len() != batch * gw * gh {
            return Err(VqError::Shape(format!("{} indices for batch {batch}", indices.len())));
        }
        if let Some(&index) = indices.iter().find(|&&i| i as usize >= self.config.codebook_size) {
            return Err(VqError::TokenRange {
                index,
                size: self.config.codebook_size,
            });
        }
        let ids = Tensor::from_slice(indices, indices.len(), self.device())?;
        Ok(self
            .codebook
            .as_tensor()
            .index_select(&ids, 0)?
            .reshape((batch, gh, gw, self.config.embed_dim))?)
    }

    pub fn decode_latents(&self, z_q: &Tensor) -> Result<Tensor> {
        Ok(self.decoder.forward(z_q)?)
    }

    /// Full pass with a straight-through estimator between encoder and decoder.
    pub fn forward(&self, before: &Tensor, after: &Tensor) -> Result<Forward> {
        let batch = before.dim(0)?;
        let z = self.encode_latents(before, after)?;
        let indices = self.nearest_indices(&z)?;
        let z_q = self.lookup(&indices, batch)?;
        let z_st = (&z + (&z_q - &z)?.detach())?;
        let stroke = self.decode_latents(&z_st)?;
        Ok(Forward { z, z_q, indices, stroke })
    }

    pub fn encode(&self, before: &Canvas, after: &Canvas) -> Result<VisualTokens> {
        Ok(self.encode_batch(&[(before, after)])?.remove(0))
    }

    pub fn encode_batch(&self, pairs: &[(&Canvas, &Canvas)]) -> Result<Vec<VisualTokens>> {
        if pairs.is_empty() {
            return Ok(Vec::new());
        }
        let befores: Vec<&Canvas> = pairs.iter().map(|p| p.0).collect();
        let afters: Vec<&Canvas> = pairs.iter().map(|p| p.1).collect();
        let before = images_to_tensor(&befores, self.device(), self.dtype())?;
        let after = images_to_tensor(&afters, self.device(), self.dtype())?;
        let z = self.encode_latents(&before, &after)?;
        let k = self.config.k();
        let grid = self.config.latent_dims();
        self.nearest_indices(&z)?
            .chunks_exact(k)
            .map(|c| VisualTokens::new(c.to_vec(), grid))
            .collect()
    }

    pub fn decode(&self, tokens: &VisualTokens) -> Result<AlphaImage> {
        Ok(self.decode_batch(std::slice::from_ref(tokens))?.remove(0))
    }

    pub fn decode_batch(&self, tokens: &[VisualTokens]) -> Result<Vec<AlphaImage>> {
        if tokens.is_empty() {
            return Ok(Vec::new());
        }
        let k = self.config.k();
        let mut indices = Vec::with_capacity(tokens.len() * k);
        for t in tokens {
            if t.len() != k {
                return Err(VqError::Shape(format!("{} visual tokens, expected {k}", t.len())));
            }
            t.check(self.config.codebook_size)?;
            indices.extend_from_slice(t.indices());
        }
        let z_q = self.lookup(&indices, tokens.len())?;
        let out = self.decode_latents(&z_q)?;
        tensor_to_images::<4>(&out)
    }

    pub fn header(&self) -> CheckpointHeader {
        CheckpointHeader::from_config(&self.config)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut meta = HashMap::new();
        let json = |v: serde_json::Result<String>| v.map_err(|e| VqError::Config(e.to_string()));
        meta.insert(META_HEADER.to_string(), json(serde_json::to_string(&self.header()))?);
        meta.insert(META_CONFIG.to_string(), json(serde_json::to_string(&self.config))?);
        meta.insert(META_STEP.to_string(), self.step.to_string());
        self.params.save(path, meta)
    }

    pub fn load(path: impl AsRef<Path>, device: &Device) -> Result<Self> {
        let path = path.as_ref();
        let meta = read_metadata(path)?;
        let header: CheckpointHeader = meta
            .get(META_HEADER)
            .ok_or_else(|| VqError::checkpoint(path, "not a stroke tokenizer checkpoint"))
            .and_then(|s| serde_json::from_str(s).map_err(|e| VqError::checkpoint(path, e)))?;
        if header.format_version != FORMAT_VERSION {
            return Err(VqError::checkpoint(
                path,
                format!("format version {} unsupported (expected {FORMAT_VERSION})", header.format_version),
            ));
        }
        let config: VqConfig = meta
            .get(META_CONFIG)
            .ok_or_else(|| VqError::checkpoint(path, "missing config"))
            .and_then(|s| serde_json::from_str(s).map_err(|e| VqError::checkpoint(path, e)))?;
        if CheckpointHeader::from_config(&config) != header {
            return Err(VqError::checkpoint(path, "header disagrees with config"));
        }
        let mut model = Self::new(config, device)?;
        model.params.load(path, &[])?;
        model.step = meta.get(META_STEP).and_then(|s| s.parse().ok()).unwrap_or(0);
        Ok(model)
    }

    pub fn checkpoint_hash(path: impl AsRef<Path>) -> Result<String> {
        file_hash(path)
    }
}

/// Stacks same-sized rasters into a `(b, N, H, W)` tensor.
pub fn images_to_tensor<const N: usize>(images: &[&Raster<N>], device: &Device, dtype: DType) -> Result<Tensor> {
    let Some(first) = images.first() else {
        return Err(VqError::Shape("empty image batch".into()));
    };
    let (w, h) = first.dims();
    let mut data = Vec::with_capacity(images.len() * w * h * N);
    for img in images {
        if img.dims() != (w, h) {
            return Err(VqError::Shape(format!("mixed image sizes {:?} and {:?}", (w, h), img.dims())));
        }
        data.extend_from_slice(img.data());
    }
    Ok(Tensor::from_vec(data, (images.len(), h, w, N), device)?
        .permute((0, 3, 1, 2))?
        .contiguous()?
        .to_dtype(dtype)?)
}

/// Inverse of [`images_to_tensor`]; values are clamped to [0,1] and NaN
/// maps to 0.
pub fn tensor_to_images<const N: usize>(t: &Tensor) -> Result<Vec<Raster<N>>> {
    let (b, c, h, w) = t.dims4()?;
    if c != N {
        return Err(VqError::Shape(format!("{c} channels, expected {N}")));
    }
    let data = t
        .to_dtype(DType::F32)?
        .permute((0, 2, 3, 1))?
        .contiguous()?
        .flatten_all()?
        .to_vec1::<f32>()?;
    data.chunks_exact(h * w * N)
        .take(b)
        .map(|chunk| {
            let clamped = chunk.iter().map(|v| if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) }).collect();
            Ok(Raster::<N>::new(w, h, clamped)?)
        })
        .collect()
}
