//! Box-weighted cross-entropy and per-kind accuracy.

use candle_core::{DType, Tensor, D};
use hyperstroke_core::{TokenKind, TokenVocab};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SeqError};
use crate::layers::log_softmax;

pub struct SeqLoss {
    /// Scalar loss; zero when `empty`.
    pub loss: Tensor,
    /// No non-pad target in the batch.
    pub empty: bool,
    /// Non-pad targets counted.
    pub tokens: usize,
}

/// Per-target weight: `lambda` on box tokens, 0 on padding, 1 otherwise.
pub fn target_weight(vocab: &TokenVocab, target: u32, lambda: f64) -> Result<f64> {
    Ok(match vocab.kind(target)? {
        TokenKind::BBox(_) => lambda,
        TokenKind::Pad => 0.0,
        _ => 1.0,
    })
}

fn check_alignment(logits: &Tensor, targets: &[Vec<u32>], vocab: &TokenVocab) -> Result<(usize, usize)> {
    let (b, t, v) = logits.dims3()?;
    if v != vocab.size() {
        return Err(SeqError::Misaligned(format!("{v} logits per position, vocabulary has {}", vocab.size())));
    }
    if targets.len() != b || targets.iter().any(|row| row.len() != t) {
        return Err(SeqError::Misaligned(format!(
            "logits cover {b}x{t} positions, targets are {}x{:?}",
            targets.len(),
            targets.iter().map(Vec::len).collect::<Vec<_>>()
        )));
    }
    Ok((b, t))
}

/// Weighted negative log-likelihood summed over targets, divided by the
/// number of non-pad targets.
pub fn seq_loss(logits: &Tensor, targets: &[Vec<u32>], vocab: &TokenVocab, lambda: f64) -> Result<SeqLoss> {
    let (b, t) = check_alignment(logits, targets, vocab)?;
    let mut weights = Vec::with_capacity(b * t);
    let mut counted = 0usize;
    for &id in targets.iter().flatten() {
        let w = target_weight(vocab, id, lambda)?;
        if id != vocab.pad() {
            counted += 1;
        }
        weights.push(w);
    }
    let device = logits.device();
    if counted == 0 {
        return Ok(SeqLoss {
            loss: Tensor::zeros((), logits.dtype(), device)?,
            empty: true,
            tokens: 0,
        });
    }
    let ids = Tensor::from_vec(targets.concat(), (b, t, 1), device)?;
    let picked = log_softmax(logits)?.gather(&ids, D::Minus1)?.squeeze(D::Minus1)?;
    let w = Tensor::from_vec(weights, (b, t), device)?.to_dtype(logits.dtype())?;
    let loss = ((picked * w)?.sum_all()?.neg()? / counted as f64)?;
    Ok(SeqLoss {
        loss,
        empty: false,
        tokens: counted,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Count {
    pub correct: usize,
    pub total: usize,
}

impl Count {
    pub fn rate(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.correct as f64 / self.total as f64
        }
    }

    fn add(&mut self, hit: bool) {
        self.total += 1;
        self.correct += usize::from(hit);
    }

    fn merge(&mut self, other: Count) {
        self.total += other.total;
        self.correct += other.correct;
    }
}

/// Teacher-forced argmax accuracy over non-pad targets, split by kind.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accuracy {
    pub bbox: Count,
    pub visual: Count,
    pub special: Count,
}

impl Accuracy {
    pub fn overall(&self) -> Count {
        let mut c = self.bbox;
        c.merge(self.visual);
        c.merge(self.special);
        c
    }

    pub fn merge(&mut self, other: &Accuracy) {
        self.bbox.merge(other.bbox);
        self.visual.merge(other.visual);
        self.special.merge(other.special);
    }
}

pub fn accuracy(logits: &Tensor, targets: &[Vec<u32>], vocab: &TokenVocab) -> Result<Accuracy> {
    check_alignment(logits, targets, vocab)?;
    let predicted = logits.argmax(D::Minus1)?.to_dtype(DType::U32)?.to_vec2::<u32>()?;
    let mut acc = Accuracy::default();
    for (pred_row, target_row) in predicted.iter().zip(targets) {
        for (&p, &t) in pred_row.iter().zip(target_row) {
            match vocab.kind(t)? {
                TokenKind::Pad => {}
                TokenKind::BBox(_) => acc.bbox.add(p == t),
                TokenKind::Visual(_) => acc.visual.add(p == t),
                _ => acc.special.add(p == t),
            }
        }
    }
    Ok(acc)
}
