//! Teacher-forced training with AdamW, linear warmup and cosine annealing.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use hyperstroke_vq::train::BatchOrder;
use serde::{Deserialize, Serialize};

use crate::config::SeqConfig;
use crate::data::{SeqBatch, SeqExample};
use crate::error::{Result, SeqError};
use crate::loss::{accuracy, seq_loss};
use crate::model::SeqModel;

/// Warmup to the base rate, then cosine decay to `min_lr_ratio` of it at
/// `steps`.
pub fn learning_rate(config: &SeqConfig, step: usize) -> f64 {
    let base = config.learning_rate;
    if step < config.warmup_steps {
        return base * (step + 1) as f64 / config.warmup_steps as f64;
    }
    let span = config.steps.saturating_sub(config.warmup_steps).max(1);
    let progress = ((step - config.warmup_steps) as f64 / span as f64).min(1.0);
    let floor = base * config.min_lr_ratio;
    floor + (base - floor) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeqStepMetrics {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
    pub accuracy: f64,
    pub bbox_accuracy: f64,
    pub visual_accuracy: f64,
    pub tokens: usize,
}

pub struct SeqTrainer {
    model: SeqModel,
    opt: AdamW,
}

impl SeqTrainer {
    pub fn new(model: SeqModel) -> Result<Self> {
        let opt = AdamW::new(
            model.trainable_vars(),
            ParamsAdamW {
                lr: model.config().learning_rate,
                weight_decay: 0.0,
                ..Default::default()
            },
        )?;
        Ok(Self { model, opt })
    }

    pub fn model(&self) -> &SeqModel {
        &self.model
    }

    pub fn into_model(self) -> SeqModel {
        self.model
    }

    pub fn step(&mut self, batch: &SeqBatch) -> Result<SeqStepMetrics> {
        let step = self.model.step();
        let lr = learning_rate(self.model.config(), step);
        self.opt.set_learning_rate(lr);
        let vocab = self.model.vocab();
        let context = self.model.encode_context_tensor(&batch.canvases, &batch.condition_refs())?;
        let logits = self.model.forward(&batch.inputs, &context)?;
        let out = seq_loss(&logits, &batch.targets, &vocab, self.model.config().lambda())?;
        let loss = out.loss.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
        if !loss.is_finite() {
            return Err(SeqError::NonFinite(step));
        }
        let acc = accuracy(&logits, &batch.targets, &vocab)?;
        if !out.empty {
            self.opt.backward_step(&out.loss)?;
        }
        self.model.set_step(step + 1);
        Ok(SeqStepMetrics {
            step,
            lr,
            loss,
            accuracy: acc.overall().rate(),
            bbox_accuracy: acc.bbox.rate(),
            visual_accuracy: acc.visual.rate(),
            tokens: out.tokens,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct SeqTrainOptions {
    pub metrics: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub checkpoint_every: usize,
}

#[derive(Clone, Debug)]
pub struct SeqTrainReport {
    pub steps: usize,
    pub history: Vec<SeqStepMetrics>,
}

/// Trains for `config.steps` steps over shuffled mini-batches.
pub fn train_seq(
    config: &SeqConfig,
    examples: &[SeqExample],
    init: Option<SeqModel>,
    options: &SeqTrainOptions,
    mut on_log: impl FnMut(&SeqStepMetrics),
) -> Result<(SeqModel, SeqTrainReport)> {
    if examples.is_empty() {
        return Err(SeqError::EmptyDataset);
    }
    let model = match init {
        Some(m) => m,
        None => SeqModel::new(config.clone(), &candle_core::Device::Cpu)?,
    };
    let vocab = model.vocab();
    let (device, dtype) = (model.device().clone(), model.dtype());
    let mut trainer = SeqTrainer::new(model)?;
    let mut order = BatchOrder::new(examples.len(), config.seed);
    let mut metrics = match &options.metrics {
        Some(path) => {
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|source| SeqError::Io {
                    path: parent.to_path_buf(),
                    source,
                })?;
            }
            Some(BufWriter::new(File::create(path).map_err(|source| SeqError::Io {
                path: path.clone(),
                source,
            })?))
        }
        None => None,
    };
    let mut history = Vec::with_capacity(config.steps);
    let start = trainer.model().step();
    for i in 0..config.steps {
        let picked: Vec<&SeqExample> = order.next_batch(config.batch_size).into_iter().map(|j| &examples[j]).collect();
        let batch = SeqBatch::new(&picked, &vocab, &device, dtype)?;
        let m = trainer.step(&batch)?;
        let last = i + 1 == config.steps;
        if config.log_every > 0 && (m.step % config.log_every == 0 || last) {
            tracing::info!(step = m.step, loss = m.loss, acc = m.accuracy, "seq step");
            if let Some(w) = metrics.as_mut() {
                let line = serde_json::to_string(&m).expect("metrics serialize");
                writeln!(w, "{line}").map_err(|source| SeqError::Io {
                    path: options.metrics.clone().unwrap_or_default(),
                    source,
                })?;
            }
            on_log(&m);
        }
        if let Some(path) = &options.checkpoint {
            if options.checkpoint_every > 0 && (m.step + 1) % options.checkpoint_every == 0 {
                trainer.model().save(path)?;
            }
        }
        history.push(m);
    }
    if let Some(w) = metrics.as_mut() {
        w.flush().map_err(|source| SeqError::Io {
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
        SeqTrainReport {
            steps: start + config.steps,
            history,
        },
    ))
}

/// Teacher-forced accuracy of `model` over `examples`.
pub fn evaluate_accuracy(model: &SeqModel, examples: &[SeqExample], batch_size: usize) -> Result<crate::loss::Accuracy> {
    let vocab = model.vocab();
    let mut total = crate::loss::Accuracy::default();
    for chunk in examples.chunks(batch_size.max(1)) {
        let refs: Vec<&SeqExample> = chunk.iter().collect();
        let batch = SeqBatch::new(&refs, &vocab, model.device(), model.dtype())?;
        let context = model.encode_context_tensor(&batch.canvases, &batch.condition_refs())?;
        let logits = model.forward(&batch.inputs, &context)?;
        total.merge(&accuracy(&logits, &batch.targets, &vocab)?);
    }
    Ok(total)
}
