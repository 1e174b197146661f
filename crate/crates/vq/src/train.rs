//! Training loop: mixed-supervision batches, AdamW with linear warmup,
//! dead-code re-seeding and JSONL metrics.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use candle_core::{DType, Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{PerceptualKind, VqConfig};
use crate::error::{Result, VqError};
use crate::loss::{composite, gan_loss, vq_loss, GradientFeatures, LossWeights, Perceptual, TrainBatch, TrainItem};
use crate::model::{tensor_to_images, VqModel};
use crate::quantize::{perplexity, usage};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub lr: f64,
    pub total: f64,
    pub rec: f64,
    pub perceptual: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub gan: f64,
    pub d_loss: Option<f64>,
    /// Distinct codes selected in this batch.
    pub batch_codes: usize,
    pub perplexity: f64,
    /// Entries used within the dead-code window.
    pub active_codes: usize,
    pub reseeded: usize,
}

/// Learning rate at `step` (0-based): linear warmup, then constant.
pub fn learning_rate(config: &VqConfig, step: usize) -> f64 {
    if config.warmup_steps == 0 || step >= config.warmup_steps {
        config.learning_rate
    } else {
        config.learning_rate * (step + 1) as f64 / config.warmup_steps as f64
    }
}

pub fn perceptual_provider(kind: PerceptualKind) -> Option<Box<dyn Perceptual>> {
    match kind {
        PerceptualKind::Disabled => None,
        PerceptualKind::Gradient => Some(Box::new(GradientFeatures::default())),
    }
}

pub struct Trainer {
    model: VqModel,
    gen_opt: AdamW,
    disc_opt: AdamW,
    perceptual: Option<Box<dyn Perceptual>>,
    last_used: Vec<usize>,
    rng: ChaCha8Rng,
    dump_dir: PathBuf,
}

fn adam(vars: Vec<candle_core::Var>, lr: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?)
}

impl Trainer {
    pub fn new(model: VqModel, dump_dir: impl Into<PathBuf>) -> Result<Self> {
        let config = model.config().clone();
        let lr = learning_rate(&config, model.step());
        Ok(Self {
            gen_opt: adam(model.generator_vars(), lr)?,
            disc_opt: adam(model.discriminator_vars(), lr)?,
            perceptual: perceptual_provider(config.perceptual),
            last_used: vec![model.step(); config.codebook_size],
            rng: ChaCha8Rng::seed_from_u64(config.seed ^ 0x5eed_c0de),
            dump_dir: dump_dir.into(),
            model,
        })
    }

    pub fn model(&self) -> &VqModel {
        &self.model
    }

    pub fn into_model(self) -> VqModel {
        self.model
    }

    pub fn gan_active(&self) -> bool {
        let c = self.model.config();
        c.gan_weight > 0.0 && self.model.step() >= c.gan_start
    }

    /// One optimisation step on `batch`.
    pub fn step(&mut self, batch: &TrainBatch) -> Result<StepMetrics> {
        let config = self.model.config().clone();
        let step = self.model.step();
        let lr = learning_rate(&config, step);
        self.gen_opt.set_learning_rate(lr);
        self.disc_opt.set_learning_rate(lr);
        let gan_on = self.gan_active();

        let out = self.model.forward(&batch.before, &batch.after)?;
        let weights = LossWeights {
            commitment: config.commitment,
            perceptual: config.perceptual_weight,
            gan: if gan_on { config.gan_weight } else { 0.0 },
        };
        let loss = vq_loss(
            batch,
            &out,
            weights,
            self.perceptual.as_deref(),
            gan_on.then(|| self.model.discriminator()),
        )?;
        let total = loss.total_value()?;
        if !total.is_finite() {
            let dump = self.dump(batch, step, &loss_summary(&loss, total))?;
            return Err(VqError::NonFinite { step, dump });
        }
        self.gen_opt.backward_step(&loss.total)?;

        let d_loss = if gan_on {
            let fake = composite(&batch.before, &out.stroke.detach())?;
            let (d, _) = gan_loss(self.model.discriminator(), &batch.after, &fake)?;
            let value = d.to_dtype(DType::F64)?.to_scalar::<f64>()?;
            if !value.is_finite() {
                let dump = self.dump(batch, step, &format!("d_loss={value}"))?;
                return Err(VqError::NonFinite { step, dump });
            }
            self.disc_opt.backward_step(&d)?;
            Some(value)
        } else {
            None
        };

        let counts = usage(&out.indices, config.codebook_size);
        for (i, &c) in counts.iter().enumerate() {
            if c > 0 {
                self.last_used[i] = step;
            }
        }
        let reseeded = self.reseed_dead(&out.z, step)?;
        let window = config.dead_code_steps.max(1);
        let active = self.last_used.iter().filter(|&&s| step - s.min(step) < window).count();
        self.model.set_step(step + 1);
        Ok(StepMetrics {
            step,
            lr,
            total,
            rec: loss.rec,
            perceptual: loss.perceptual,
            codebook: loss.codebook,
            commitment: loss.commitment,
            gan: loss.gan,
            d_loss,
            batch_codes: counts.iter().filter(|&&c| c > 0).count(),
            perplexity: perplexity(&counts),
            active_codes: active,
            reseeded,
        })
    }

    /// Replaces entries unused for `dead_code_steps` with encoder outputs
    /// drawn from the current batch, plus a little noise.
    fn reseed_dead(&mut self, z: &Tensor, step: usize) -> Result<usize> {
        let config = self.model.config();
        let window = config.dead_code_steps;
        if window == 0 {
            return Ok(0);
        }
        let dead: Vec<usize> = (0..self.last_used.len())
            .filter(|&i| step.saturating_sub(self.last_used[i]) >= window)
            .collect();
        if dead.is_empty() {
            return Ok(0);
        }
        let dim = config.embed_dim;
        let latents = z.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        let n = latents.len() / dim;
        let codebook = self.model.codebook();
        let mut book = codebook.as_tensor().to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()?;
        for &i in &dead {
            let src = self.rng.gen_range(0..n);
            for d in 0..dim {
                let noise: f32 = self.rng.gen_range(-1e-3..1e-3);
                book[i * dim + d] = latents[src * dim + d] + noise;
            }
            self.last_used[i] = step;
        }
        let t = Tensor::from_vec(book, codebook.dims(), codebook.device())?.to_dtype(codebook.dtype())?;
        codebook.set(&t)?;
        Ok(dead.len())
    }

    fn dump(&self, batch: &TrainBatch, step: usize, summary: &str) -> Result<PathBuf> {
        let dir = self.dump_dir.join(format!("nonfinite_step{step:06}"));
        let io = |source| VqError::Io {
            path: dir.clone(),
            source,
        };
        std::fs::create_dir_all(&dir).map_err(io)?;
        std::fs::write(dir.join("loss.txt"), summary).map_err(io)?;
        let befores = tensor_to_images::<3>(&batch.before)?;
        let afters = tensor_to_images::<3>(&batch.after)?;
        for (i, (b, a)) in befores.iter().zip(&afters).enumerate() {
            b.save_png(dir.join(format!("{i:02}_before.png")))?;
            a.save_png(dir.join(format!("{i:02}_after.png")))?;
        }
        tracing::error!(step, dump = %dir.display(), "non-finite loss");
        Ok(dir)
    }
}

fn loss_summary(loss: &crate::loss::LossBreakdown, total: f64) -> String {
    format!(
        "total={total} rec={} perceptual={} codebook={} commitment={} gan={}\n",
        loss.rec, loss.perceptual, loss.codebook, loss.commitment, loss.gan
    )
}

/// Deterministic seeded batch order: reshuffled every epoch.
pub struct BatchOrder {
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
}

impl BatchOrder {
    pub fn new(len: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..len).collect();
        order.shuffle(&mut rng);
        Self { order, cursor: 0, rng }
    }

    pub fn next_batch(&mut self, size: usize) -> Vec<usize> {
        let mut out = Vec::with_capacity(size);
        while out.len() < size.min(self.order.len()) {
            if self.cursor == self.order.len() {
                self.order.shuffle(&mut self.rng);
                self.cursor = 0;
            }
            out.push(self.order[self.cursor]);
            self.cursor += 1;
        }
        out
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    pub metrics: Option<PathBuf>,
    /// Where non-finite batches are dumped.
    pub dump_dir: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    /// Also checkpoint every this many steps (0: only at the end).
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub last: StepMetrics,
    pub checkpoint: Option<PathBuf>,
}

fn open_metrics(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| VqError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    File::create(path).map(BufWriter::new).map_err(|source| VqError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Trains a fresh model (or continues `init`) for `config.steps` steps.
pub fn train_vq(
    config: &VqConfig,
    items: &[TrainItem],
    init: Option<VqModel>,
    options: &TrainOptions,
    mut on_log: impl FnMut(&StepMetrics),
) -> Result<(VqModel, TrainReport)> {
    config.validate()?;
    if items.is_empty() {
        return Err(VqError::EmptyDataset);
    }
    for (i, item) in items.iter().enumerate() {
        if item.before.dims() != config.patch || item.after.dims() != config.patch {
            return Err(VqError::Shape(format!(
                "item {i} is {:?}, expected patch {:?}",
                item.before.dims(),
                config.patch
            )));
        }
    }
    let device = Device::Cpu;
    let model = match init {
        Some(m) => m,
        None => VqModel::new(config.clone(), &device)?,
    };
    let dump_dir = options
        .dump_dir
        .clone()
        .or_else(|| options.checkpoint.as_ref().and_then(|p| p.parent().map(Path::to_path_buf)))
        .unwrap_or_else(std::env::temp_dir);
    let mut trainer = Trainer::new(model, dump_dir)?;
    let mut metrics = options.metrics.as_deref().map(open_metrics).transpose()?;
    let mut order = BatchOrder::new(items.len(), config.seed);
    let start = trainer.model().step();
    let mut last = StepMetrics::default();
    for _ in 0..config.steps {
        let idx = order.next_batch(config.batch_size);
        let batch_items: Vec<&TrainItem> = idx.iter().map(|&i| &items[i]).collect();
        let batch = TrainBatch::new(&batch_items, &device, trainer.model().dtype())?;
        last = trainer.step(&batch)?;
        let done = last.step + 1 - start;
        if config.log_every > 0 && (last.step % config.log_every == 0 || done == config.steps) {
            if let Some(w) = metrics.as_mut() {
                let line = serde_json::to_string(&last).map_err(|e| VqError::Config(e.to_string()))?;
                writeln!(w, "{line}").map_err(|source| VqError::Io {
                    path: options.metrics.clone().unwrap_or_default(),
                    source,
                })?;
            }
            tracing::info!(
                step = last.step,
                total = last.total,
                rec = last.rec,
                perplexity = last.perplexity,
                "vq train"
            );
            on_log(&last);
        }
        if let Some(path) = &options.checkpoint {
            if options.checkpoint_every > 0 && done % options.checkpoint_every == 0 && done < config.steps {
                trainer.model().save(path)?;
            }
        }
    }
    if let Some(w) = metrics.as_mut() {
        w.flush().map_err(|source| VqError::Io {
            path: options.metrics.clone().unwrap_or_default(),
            source,
        })?;
    }
    let model = trainer.into_model();
    if let Some(path) = &options.checkpoint {
        model.save(path)?;
    }
    Ok((
        model,
        TrainReport {
            steps: config.steps,
            last,
            checkpoint: options.checkpoint.clone(),
        },
    ))
}
