//! Seeded parameter store and single-file checkpoints.
//!
//! Weights are initialised from a ChaCha stream so that a model built from
//! the same seed is bit-identical across runs. Checkpoints are safetensors
//! files whose metadata block carries the model's JSON config.

use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use candle_nn::Linear;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safetensors::tensor::{Dtype as StDtype, TensorView};
use sha2::{Digest, Sha256};

use crate::error::{Result, VqError};

pub struct Params {
    vars: Vec<(String, Var)>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl Params {
    pub fn new(seed: u64, dtype: DType, device: &Device) -> Self {
        Self {
            vars: Vec::new(),
            dtype,
            device: device.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    fn register(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<Var> {
        assert!(
            self.vars.iter().all(|(n, _)| n != name),
            "parameter {name} registered twice"
        );
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.vars.push((name.to_string(), var.clone()));
        Ok(var)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| self.rng.gen_range(-bound..=bound)).collect();
        self.register(name, shape, values)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).expect("finite std");
        let values = (0..n).map(|_| dist.sample(&mut self.rng)).collect();
        self.register(name, shape, values)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.register(name, shape, vec![value; n])
    }

    /// Dense layer with the usual `U(-1/sqrt(in), 1/sqrt(in))` init.
    pub fn linear(&mut self, name: &str, input: usize, output: usize) -> Result<Linear> {
        let bound = 1.0 / (input as f64).sqrt();
        let w = self.uniform(&format!("{name}.weight"), &[output, input], bound)?;
        let b = self.uniform(&format!("{name}.bias"), &[output], bound)?;
        Ok(Linear::new(w.as_tensor().clone(), Some(b.as_tensor().clone())))
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.vars.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.iter().map(|(n, _)| n.as_str())
    }

    pub fn vars_with_prefix(&self, prefix: &str) -> Vec<Var> {
        self.vars
            .iter()
            .filter(|(n, _)| n.starts_with(prefix))
            .map(|(_, v)| v.clone())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.iter().map(|(_, v)| v.elem_count()).sum()
    }

    pub fn save(&self, path: impl AsRef<Path>, metadata: HashMap<String, String>) -> Result<()> {
        let path = path.as_ref();
        let mut buffers = Vec::with_capacity(self.vars.len());
        for (name, var) in &self.vars {
            let values = var.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
            let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
            buffers.push((name.clone(), var.dims().to_vec(), bytes));
        }
        let views = buffers
            .iter()
            .map(|(name, shape, bytes)| {
                TensorView::new(StDtype::F32, shape.clone(), bytes)
                    .map(|v| (name.clone(), v))
                    .map_err(|e| VqError::checkpoint(path, e))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|source| VqError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        safetensors::serialize_to_file(views, &Some(metadata), path).map_err(|e| VqError::checkpoint(path, e))
    }

    /// Overwrites every registered parameter with the tensor of the same
    /// name stored in `path`. Parameters whose name starts with one of
    /// `skip` are left untouched.
    pub fn load(&self, path: impl AsRef<Path>, skip: &[&str]) -> Result<()> {
        self.load_filtered(path, |name| !skip.iter().any(|p| name.starts_with(p)))
    }

    /// Like [`Params::load`], restricted to parameters accepted by `keep`.
    pub fn load_filtered(&self, path: impl AsRef<Path>, keep: impl Fn(&str) -> bool) -> Result<()> {
        let path = path.as_ref();
        let raw = std::fs::read(path).map_err(|source| VqError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let st = safetensors::SafeTensors::deserialize(&raw).map_err(|e| VqError::checkpoint(path, e))?;
        for (name, var) in &self.vars {
            if !keep(name) {
                continue;
            }
            let view = st
                .tensor(name)
                .map_err(|_| VqError::checkpoint(path, format!("missing tensor {name}")))?;
            if view.shape() != var.dims() || view.dtype() != StDtype::F32 {
                return Err(VqError::checkpoint(
                    path,
                    format!("tensor {name}: shape {:?}, expected {:?}", view.shape(), var.dims()),
                ));
            }
            let values: Vec<f32> = view
                .data()
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::from_vec(values, view.shape(), &self.device)?.to_dtype(self.dtype)?;
            var.set(&t)?;
        }
        Ok(())
    }
}

/// Metadata block of a checkpoint without loading its tensors.
pub fn read_metadata(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|source| VqError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let (_, meta) = safetensors::SafeTensors::read_metadata(&raw).map_err(|e| VqError::checkpoint(path, e))?;
    Ok(meta.metadata().clone().unwrap_or_default())
}

/// Hex SHA-256 of a file.
pub fn file_hash(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let raw = std::fs::read(path).map_err(|source| VqError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(hex::encode(Sha256::digest(&raw)))
}

/// Gathers each position's 3x3 neighbourhood (zero padded) along the
/// channel axis: `(b, h, w, c) -> (b, h, w, 9c)`. Followed by a dense
/// layer this is a 3x3 convolution expressed as a single matmul.
pub fn neighbourhood3x3(x: &Tensor) -> candle_core::Result<Tensor> {
    let (_, h, w, _) = x.dims4()?;
    let padded = x.pad_with_zeros(1, 1, 1)?.pad_with_zeros(2, 1, 1)?;
    let mut taps = Vec::with_capacity(9);
    for dy in 0..3 {
        for dx in 0..3 {
            taps.push(padded.narrow(1, dy, h)?.narrow(2, dx, w)?);
        }
    }
    Tensor::cat(&taps, 3)
}

/// `(h*w, 9*h*w)` matrix summing per-tap values from each position's 3x3
/// neighbourhood: `M[p, 9q + t] = 1` when `q` is `p` shifted by tap `t`.
pub fn shift_matrix(h: usize, w: usize, device: &Device, dtype: DType) -> candle_core::Result<Tensor> {
    let n = h * w;
    let mut m = vec![0f32; n * 9 * n];
    for py in 0..h {
        for px in 0..w {
            let p = py * w + px;
            for dy in 0..3 {
                for dx in 0..3 {
                    let (qy, qx) = (py + dy, px + dx);
                    if qy < 1 || qx < 1 || qy > h || qx > w {
                        continue;
                    }
                    let q = (qy - 1) * w + (qx - 1);
                    m[p * 9 * n + q * 9 + dy * 3 + dx] = 1.0;
                }
            }
        }
    }
    Tensor::from_vec(m, (n, 9 * n), device)?.to_dtype(dtype)
}

/// 3x3 same-padded convolution over a `(b, h, w, c)` grid.
///
/// Every position is first projected to nine per-tap outputs by a single
/// matmul; a constant shift matrix then sums the taps of each neighbourhood.
/// Equivalent to gathering neighbourhoods then applying a dense layer, with
/// a much cheaper backward pass.
pub struct Mix3x3 {
    /// `(9 * out, in)`, tap-major rows.
    weight: Tensor,
    bias: Tensor,
    out: usize,
}

impl Mix3x3 {
    pub fn new(params: &mut Params, name: &str, input: usize, output: usize) -> Result<Self> {
        let bound = 1.0 / ((9 * input) as f64).sqrt();
        let weight = params.uniform(&format!("{name}.weight"), &[9 * output, input], bound)?;
        let bias = params.uniform(&format!("{name}.bias"), &[output], bound)?;
        Ok(Self {
            weight: weight.as_tensor().clone(),
            bias: bias.as_tensor().clone(),
            out: output,
        })
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn forward(&self, x: &Tensor, shift: &Tensor) -> candle_core::Result<Tensor> {
        let (b, h, w, c) = x.dims4()?;
        let u = x.reshape((b * h * w, c))?.matmul(&self.weight.t()?)?;
        let u = u.reshape((b, h * w * 9, self.out))?;
        shift
            .broadcast_matmul(&u)?
            .broadcast_add(&self.bias)?
            .reshape((b, h, w, self.out))
    }
}

/// `(b, c, H, W) -> (b, H/f, W/f, c*f*f)`.
pub fn patchify(x: &Tensor, f: usize) -> candle_core::Result<Tensor> {
    let (b, c, h, w) = x.dims4()?;
    x.reshape((b, c, h / f, f, w / f, f))?
        .permute((0, 2, 4, 1, 3, 5))?
        .reshape((b, h / f, w / f, c * f * f))
}

/// Inverse of [`patchify`].
pub fn unpatchify(x: &Tensor, f: usize, channels: usize) -> candle_core::Result<Tensor> {
    let (b, hp, wp, _) = x.dims4()?;
    x.reshape((b, hp, wp, channels, f, f))?
        .permute((0, 3, 1, 4, 2, 5))?
        .reshape((b, channels, hp * f, wp * f))
}
