//! Reconstruction, codebook, perceptual and adversarial objectives.

use candle_core::{DType, Device, Tensor};
use hyperstroke_core::manifest::Supervision;
use hyperstroke_core::{AlphaImage, Canvas};

use crate::error::{Result, VqError};
use crate::model::{images_to_tensor, Discriminator, Forward};

/// One training item at patch resolution.
#[derive(Clone, Debug)]
pub struct TrainItem {
    pub before: Canvas,
    pub after: Canvas,
    /// Ground-truth stroke over the whole patch; required for direct items.
    pub stroke: Option<AlphaImage>,
    pub supervision: Supervision,
}

impl TrainItem {
    pub fn implicit(before: Canvas, after: Canvas) -> Self {
        Self {
            before,
            after,
            stroke: None,
            supervision: Supervision::Implicit,
        }
    }

    pub fn direct(before: Canvas, after: Canvas, stroke: AlphaImage) -> Self {
        Self {
            before,
            after,
            stroke: Some(stroke),
            supervision: Supervision::Direct,
        }
    }
}

/// Stacked tensors of a mixed-supervision batch.
pub struct TrainBatch {
    pub before: Tensor,
    pub after: Tensor,
    /// `(b, 4, H, W)`; zeros for implicit items.
    pub stroke: Tensor,
    /// `(b,)`: 1 for direct items, 0 for implicit ones.
    pub direct: Tensor,
    pub supervision: Vec<Supervision>,
}

impl TrainBatch {
    pub fn new(items: &[&TrainItem], device: &Device, dtype: DType) -> Result<Self> {
        let Some(first) = items.first() else {
            return Err(VqError::EmptyDataset);
        };
        let (w, h) = first.before.dims();
        let blank = AlphaImage::transparent(w, h);
        let mut strokes = Vec::with_capacity(items.len());
        for (i, item) in items.iter().enumerate() {
            match (item.supervision, &item.stroke) {
                (Supervision::Direct, None) => {
                    return Err(VqError::Shape(format!("direct item {i} has no ground-truth stroke")))
                }
                (Supervision::Direct, Some(s)) => strokes.push(s),
                (Supervision::Implicit, _) => strokes.push(&blank),
            }
        }
        let befores: Vec<&Canvas> = items.iter().map(|i| &i.before).collect();
        let afters: Vec<&Canvas> = items.iter().map(|i| &i.after).collect();
        let supervision: Vec<Supervision> = items.iter().map(|i| i.supervision).collect();
        let mask: Vec<f32> = supervision
            .iter()
            .map(|s| if *s == Supervision::Direct { 1.0 } else { 0.0 })
            .collect();
        Ok(Self {
            before: images_to_tensor(&befores, device, dtype)?,
            after: images_to_tensor(&afters, device, dtype)?,
            stroke: images_to_tensor(&strokes, device, dtype)?,
            direct: Tensor::from_vec(mask, items.len(), device)?.to_dtype(dtype)?,
            supervision,
        })
    }

    pub fn len(&self) -> usize {
        self.supervision.len()
    }

    pub fn is_empty(&self) -> bool {
        self.supervision.is_empty()
    }
}

/// `A ∘ Ŝ` on `(b, 3, H, W)` canvases and `(b, 4, H, W)` strokes.
pub fn composite(before: &Tensor, stroke: &Tensor) -> candle_core::Result<Tensor> {
    let rgb = stroke.narrow(1, 0, 3)?;
    let alpha = stroke.narrow(1, 3, 1)?;
    let keep = alpha.affine(-1.0, 1.0)?;
    rgb.broadcast_mul(&alpha)? + before.broadcast_mul(&keep)?
}

/// Stroke premultiplied onto white, for comparing strokes as images.
pub fn on_white(stroke: &Tensor) -> candle_core::Result<Tensor> {
    composite(&Tensor::ones_like(&stroke.narrow(1, 0, 3)?)?, stroke)
}

fn premultiplied(stroke: &Tensor) -> candle_core::Result<Tensor> {
    let alpha = stroke.narrow(1, 3, 1)?;
    Tensor::cat(&[stroke.narrow(1, 0, 3)?.broadcast_mul(&alpha)?, alpha], 1)
}

fn per_item_mse(a: &Tensor, b: &Tensor) -> candle_core::Result<Tensor> {
    (a - b)?.sqr()?.flatten_from(1)?.mean(1)
}

/// Implicit reconstruction error per item: `MSE(A_{t+1}, A_t ∘ Ŝ)`.
pub fn implicit_rec(before: &Tensor, after: &Tensor, stroke: &Tensor) -> candle_core::Result<Tensor> {
    per_item_mse(after, &composite(before, stroke)?)
}

/// Direct reconstruction error per item, on premultiplied RGBA so that
/// colour under zero alpha is irrelevant.
pub fn direct_rec(stroke: &Tensor, target: &Tensor) -> candle_core::Result<Tensor> {
    per_item_mse(&premultiplied(stroke)?, &premultiplied(target)?)
}

/// Mixes per-item implicit and direct terms by the batch mask and averages.
fn mix(batch: &TrainBatch, implicit: &Tensor, direct: &Tensor) -> candle_core::Result<Tensor> {
    let d = &batch.direct;
    let i = d.affine(-1.0, 1.0)?;
    ((implicit * i)? + (direct * d)?)?.mean_all()
}

/// Reconstruction loss for a batch and decoded strokes.
pub fn reconstruction(batch: &TrainBatch, stroke: &Tensor) -> Result<Tensor> {
    let implicit = implicit_rec(&batch.before, &batch.after, stroke)?;
    let direct = direct_rec(stroke, &batch.stroke)?;
    Ok(mix(batch, &implicit, &direct)?)
}

/// Feature-space image distance on 3-channel composites.
pub trait Perceptual: Send + Sync {
    /// Per-item distance, shape `(b,)`.
    fn distance(&self, a: &Tensor, b: &Tensor) -> candle_core::Result<Tensor>;
}

/// Image gradients over a small pyramid; weight-free.
#[derive(Clone, Copy, Debug)]
pub struct GradientFeatures {
    pub scales: usize,
}

impl Default for GradientFeatures {
    fn default() -> Self {
        Self { scales: 3 }
    }
}

fn gradients(x: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
    let (_, _, h, w) = x.dims4()?;
    let dx = (x.narrow(3, 1, w - 1)? - x.narrow(3, 0, w - 1)?)?;
    let dy = (x.narrow(2, 1, h - 1)? - x.narrow(2, 0, h - 1)?)?;
    Ok((dx, dy))
}

impl Perceptual for GradientFeatures {
    fn distance(&self, a: &Tensor, b: &Tensor) -> candle_core::Result<Tensor> {
        let (mut a, mut b) = (a.clone(), b.clone());
        let mut total: Option<Tensor> = None;
        for s in 0..self.scales {
            let (_, _, h, w) = a.dims4()?;
            if h < 2 || w < 2 {
                break;
            }
            let (ax, ay) = gradients(&a)?;
            let (bx, by) = gradients(&b)?;
            let d = (per_item_mse(&ax, &bx)? + per_item_mse(&ay, &by)?)?;
            total = Some(match total {
                None => d,
                Some(t) => (t + d)?,
            });
            if s + 1 < self.scales && h >= 4 && w >= 4 {
                a = a.avg_pool2d(2)?;
                b = b.avg_pool2d(2)?;
            }
        }
        match total {
            Some(t) => Ok(t),
            None => Tensor::zeros(a.dim(0)?, a.dtype(), a.device()),
        }
    }
}

/// Perceptual term: implicit items compare composites with `A_{t+1}`,
/// direct items compare strokes on white.
pub fn perceptual(batch: &TrainBatch, stroke: &Tensor, provider: &dyn Perceptual) -> Result<Tensor> {
    let implicit = provider.distance(&composite(&batch.before, stroke)?, &batch.after)?;
    let direct = provider.distance(&on_white(stroke)?, &on_white(&batch.stroke)?)?;
    Ok(mix(batch, &implicit, &direct)?)
}

/// Weighted objective terms. Scalars are the logged values; `total` is
/// exactly their sum as a differentiable tensor.
pub struct LossBreakdown {
    pub total: Tensor,
    pub rec: f64,
    pub perceptual: f64,
    pub codebook: f64,
    pub commitment: f64,
    pub gan: f64,
}

impl LossBreakdown {
    pub fn component_sum(&self) -> f64 {
        self.rec + self.perceptual + self.codebook + self.commitment + self.gan
    }

    pub fn total_value(&self) -> Result<f64> {
        Ok(self.total.to_dtype(DType::F64)?.to_scalar::<f64>()?)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LossWeights {
    pub commitment: f64,
    pub perceptual: f64,
    /// Zero disables the generator's adversarial term.
    pub gan: f64,
}

/// Generator objective: reconstruction + perceptual + codebook + commitment
/// (+ adversarial once enabled).
pub fn vq_loss(
    batch: &TrainBatch,
    out: &Forward,
    weights: LossWeights,
    provider: Option<&dyn Perceptual>,
    discriminator: Option<&Discriminator>,
) -> Result<LossBreakdown> {
    if out.stroke.dims() != batch.stroke.dims() {
        return Err(VqError::Shape(format!(
            "decoded {:?} vs batch {:?}",
            out.stroke.dims(),
            batch.stroke.dims()
        )));
    }
    let mut terms = Vec::with_capacity(5);
    terms.push(reconstruction(batch, &out.stroke)?);
    terms.push(match provider {
        Some(p) if weights.perceptual > 0.0 => (perceptual(batch, &out.stroke, p)? * weights.perceptual)?,
        _ => zero(&out.stroke)?,
    });
    terms.push((out.z.detach() - &out.z_q)?.sqr()?.mean_all()?);
    terms.push(((&out.z - out.z_q.detach())?.sqr()?.mean_all()? * weights.commitment)?);
    terms.push(match discriminator {
        Some(d) if weights.gan > 0.0 => {
            let fake = composite(&batch.before, &out.stroke)?;
            (gan_loss(d, &batch.after, &fake)?.1 * weights.gan)?
        }
        _ => zero(&out.stroke)?,
    });
    let values = terms
        .iter()
        .map(|t| Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?))
        .collect::<Result<Vec<f64>>>()?;
    let mut total = terms[0].clone();
    for t in &terms[1..] {
        total = (total + t)?;
    }
    Ok(LossBreakdown {
        total,
        rec: values[0],
        perceptual: values[1],
        codebook: values[2],
        commitment: values[3],
        gan: values[4],
    })
}

fn zero(like: &Tensor) -> candle_core::Result<Tensor> {
    Tensor::zeros((), like.dtype(), like.device())
}

/// `log(1 + e^x)`, stable for large `|x|`.
pub fn softplus(x: &Tensor) -> candle_core::Result<Tensor> {
    x.relu()? + (x.abs()?.neg()?.exp()? + 1.0)?.log()?
}

/// Vanilla adversarial objective on logits.
///
/// `d_loss = -mean[log D(real) + log(1 - D(fake))]`, minimized by the
/// discriminator. `g_loss = mean log(1 - D(fake))`, minimized by the
/// generator.
pub fn gan_loss(discriminator: &Discriminator, real: &Tensor, fake: &Tensor) -> Result<(Tensor, Tensor)> {
    if real.dims() != fake.dims() {
        return Err(VqError::Shape(format!("real {:?} vs fake {:?}", real.dims(), fake.dims())));
    }
    let real_logits = discriminator.logits(real)?;
    let fake_logits = discriminator.logits(fake)?;
    let (d, g) = gan_from_logits(&real_logits, &fake_logits)?;
    Ok((d, g))
}

pub fn gan_from_logits(real_logits: &Tensor, fake_logits: &Tensor) -> candle_core::Result<(Tensor, Tensor)> {
    // log D(x) = -softplus(-l); log(1 - D(x)) = -softplus(l)
    let log_d_real = softplus(&real_logits.neg()?)?.neg()?;
    let log_not_d_fake = softplus(fake_logits)?.neg()?;
    let d_loss = (log_d_real + &log_not_d_fake)?.neg()?.mean_all()?;
    let g_loss = log_not_d_fake.mean_all()?;
    Ok((d_loss, g_loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::Device;

    fn scalar(t: &Tensor) -> f64 {
        t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
    }

    #[test]
    fn half_probability_closed_form() {
        let zeros = Tensor::zeros((2, 4, 4), DType::F64, &Device::Cpu).unwrap();
        let (d, g) = gan_from_logits(&zeros, &zeros).unwrap();
        assert!((scalar(&d) - (-2.0 * 0.5f64.ln())).abs() < 1e-12);
        assert!((scalar(&g) - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn softplus_is_stable() {
        let x = Tensor::new(&[-100.0f64, 0.0, 100.0], &Device::Cpu).unwrap();
        let y = softplus(&x).unwrap().to_vec1::<f64>().unwrap();
        assert!(y[0] >= 0.0 && y[0] < 1e-40);
        assert!((y[1] - 2f64.ln()).abs() < 1e-12);
        assert!((y[2] - 100.0).abs() < 1e-12);
    }

    #[test]
    fn transparent_stroke_on_unchanged_pair_is_free() {
        let c = Canvas::from_fn(8, 8, |x, y| [x as f32 / 8.0, y as f32 / 8.0, 0.5]);
        let item = TrainItem::implicit(c.clone(), c);
        let batch = TrainBatch::new(&[&item], &Device::Cpu, DType::F32).unwrap();
        let stroke = Tensor::zeros((1, 4, 8, 8), DType::F32, &Device::Cpu).unwrap();
        assert_eq!(scalar(&reconstruction(&batch, &stroke).unwrap()), 0.0);
    }

    #[test]
    fn ground_truth_direct_stroke_is_free() {
        let gt = AlphaImage::from_fn(8, 8, |x, _| [0.3, 0.6, 0.9, x as f32 / 7.0]);
        let before = Canvas::white(8, 8);
        let item = TrainItem::direct(before.clone(), before, gt.clone());
        let batch = TrainBatch::new(&[&item], &Device::Cpu, DType::F32).unwrap();
        let stroke = images_to_tensor(&[&gt], &Device::Cpu, DType::F32).unwrap();
        assert_eq!(scalar(&reconstruction(&batch, &stroke).unwrap()), 0.0);
    }

    #[test]
    fn direct_item_requires_ground_truth() {
        let c = Canvas::white(4, 4);
        let item = TrainItem {
            before: c.clone(),
            after: c,
            stroke: None,
            supervision: Supervision::Direct,
        };
        assert!(TrainBatch::new(&[&item], &Device::Cpu, DType::F32).is_err());
    }

    #[test]
    fn gradient_features_vanish_on_equal_images() {
        let a = Tensor::rand(0f32, 1.0, (2, 3, 16, 16), &Device::Cpu).unwrap();
        let d = GradientFeatures::default().distance(&a, &a).unwrap();
        assert_eq!(d.to_vec1::<f32>().unwrap(), vec![0.0, 0.0]);
        let b = Tensor::rand(0f32, 1.0, (2, 3, 16, 16), &Device::Cpu).unwrap();
        let d = GradientFeatures::default().distance(&a, &b).unwrap();
        assert!(d.to_vec1::<f32>().unwrap().iter().all(|v| *v > 0.0));
    }
}
