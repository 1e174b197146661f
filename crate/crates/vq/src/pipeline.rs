//! Stroke-level inference: frame pair <-> hyperstroke tokens, and timelapse
//! reconstruction.

use hyperstroke_core::ingest::{extract_pairs, PairStats, SketchRecord};
use hyperstroke_core::tokens::{TokenCacheEntry, TokenCacheHeader, TOKEN_CACHE_VERSION};
use hyperstroke_core::metrics::{psnr, ssim};
use hyperstroke_core::{blend, crop_and_resize, BBox, BBoxTokens, Canvas, GridSpec, Hyperstroke, HyperstrokeTokens, TokenVocab};
use serde::{Deserialize, Serialize};

use crate::error::{Result, VqError};
use crate::model::VqModel;
use crate::quantize::VisualTokens;

/// The grid a model was trained with, on a canvas of the given size.
pub fn model_grid(model: &VqModel, canvas: (usize, usize)) -> Result<GridSpec> {
    Ok(GridSpec::new(canvas.0 as u32, canvas.1 as u32, model.config().grid_c)?)
}

/// Tokenizes the change between two frames inside `bbox`.
pub fn tokenize_change(model: &VqModel, grid: &GridSpec, before: &Canvas, after: &Canvas, bbox: BBox) -> Result<HyperstrokeTokens> {
    let tokens = grid.snap(bbox)?;
    tokenize_snapped(model, grid, before, after, tokens)
}

pub fn tokenize_snapped(model: &VqModel, grid: &GridSpec, before: &Canvas, after: &Canvas, tokens: BBoxTokens) -> Result<HyperstrokeTokens> {
    let (b, a) = crop_and_resize(before, after, tokens, grid, model.config().patch)?;
    let visual = model.encode(&b, &a)?;
    Ok(HyperstrokeTokens {
        bbox: tokens,
        visual: visual.into_indices(),
    })
}

/// Batched [`tokenize_snapped`].
pub fn tokenize_batch(model: &VqModel, grid: &GridSpec, pairs: &[(&Canvas, &Canvas, BBoxTokens)]) -> Result<Vec<HyperstrokeTokens>> {
    let patches = pairs
        .iter()
        .map(|(b, a, t)| crop_and_resize(b, a, *t, grid, model.config().patch))
        .collect::<hyperstroke_core::Result<Vec<_>>>()?;
    let refs: Vec<(&Canvas, &Canvas)> = patches.iter().map(|(b, a)| (b, a)).collect();
    let visual = model.encode_batch(&refs)?;
    Ok(pairs
        .iter()
        .zip(visual)
        .map(|((_, _, t), v)| HyperstrokeTokens {
            bbox: *t,
            visual: v.into_indices(),
        })
        .collect())
}

/// Decodes hyperstroke tokens to a stroke placed at its unsnapped box.
pub fn detokenize(model: &VqModel, grid: &GridSpec, tokens: &HyperstrokeTokens) -> Result<Hyperstroke> {
    Ok(detokenize_batch(model, grid, std::slice::from_ref(tokens))?.remove(0))
}

pub fn detokenize_batch(model: &VqModel, grid: &GridSpec, tokens: &[HyperstrokeTokens]) -> Result<Vec<Hyperstroke>> {
    let dims = model.config().latent_dims();
    let visual = tokens
        .iter()
        .map(|t| VisualTokens::new(t.visual.clone(), dims))
        .collect::<Result<Vec<_>>>()?;
    let images = model.decode_batch(&visual)?;
    tokens
        .iter()
        .zip(images)
        .map(|(t, img)| Ok(Hyperstroke::resampled(img, grid.unsnap(t.bbox)?).into_native()?))
        .collect()
}

/// Flat vocabulary of sequences built from this model's tokens.
pub fn vocab(model: &VqModel) -> Result<TokenVocab> {
    let c = model.config();
    Ok(TokenVocab::new(c.grid_c, c.codebook_size as u32, c.k())?)
}

pub fn token_cache_header(model: &VqModel, canvas: (usize, usize)) -> TokenCacheHeader {
    let c = model.config();
    TokenCacheHeader {
        format_version: TOKEN_CACHE_VERSION,
        bbox_vocab: c.grid_c + 1,
        visual_vocab: c.codebook_size as u32,
        k: c.k(),
        grid_c: c.grid_c,
        canvas: (canvas.0 as u32, canvas.1 as u32),
        patch: (c.patch.0 as u32, c.patch.1 as u32),
        count: 0,
    }
}

/// Tokenizes a sketch stroke by stroke: each stroke is encoded from the
/// composite of its predecessors and the composite including it.
///
/// The sequence is `[start] + strokes`, `1 + n (4 + k)` ids. Sketches
/// longer than `n_max` strokes are cut to `n_max` and flagged.
pub fn tokenize_record(model: &VqModel, record: &SketchRecord, n_max: usize) -> Result<TokenCacheEntry> {
    let vocab = vocab(model)?;
    let grid = model_grid(model, record.canvas)?;
    let truncated = record.strokes.len() > n_max;
    let used = &record.strokes[..record.strokes.len().min(n_max)];
    let mut frames = Vec::with_capacity(used.len() + 1);
    frames.push(Canvas::white(record.canvas.0, record.canvas.1));
    for s in used {
        let next = blend(frames.last().expect("non-empty"), s)?;
        frames.push(next);
    }
    let inputs = used
        .iter()
        .enumerate()
        .map(|(i, s)| Ok((&frames[i], &frames[i + 1], grid.snap(s.bbox())?)))
        .collect::<Result<Vec<_>>>()?;
    let strokes = if inputs.is_empty() {
        Vec::new()
    } else {
        tokenize_batch(model, &grid, &inputs)?
    };
    let tokens = vocab.frame(&strokes)?;
    Ok(TokenCacheEntry {
        key: record.key.clone(),
        category: record.category.clone(),
        truncated,
        tokens,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Reconstruction {
    pub strokes: Vec<HyperstrokeTokens>,
    /// Source frame index of each pair's `before` frame.
    pub frames: Vec<usize>,
    /// PSNR of the running composite against each pair's `after` frame.
    pub frame_psnr: Vec<f64>,
    pub psnr: f64,
    pub ssim: f64,
    pub stats: PairStats,
}

/// Mines frame pairs from `frames`, tokenizes each change, and recomposes
/// the decoded strokes onto the first frame. Returns the final composite,
/// per-step composites and metrics against the last frame.
pub fn reconstruct_timelapse(
    model: &VqModel,
    frames: Vec<hyperstroke_core::Result<Canvas>>,
    min_change: f32,
) -> Result<(Canvas, Vec<Hyperstroke>, Reconstruction)> {
    let first = frames
        .iter()
        .find_map(|f| f.as_ref().ok())
        .cloned()
        .ok_or(VqError::EmptyDataset)?;
    let last = frames
        .iter()
        .rev()
        .find_map(|f| f.as_ref().ok())
        .cloned()
        .ok_or(VqError::EmptyDataset)?;
    let grid = model_grid(model, first.dims())?;
    let (pairs, stats) = extract_pairs(frames, &grid, min_change)?;
    let inputs: Vec<_> = pairs.iter().map(|p| (&p.before, &p.after, p.bbox_tokens)).collect();
    let tokens = if inputs.is_empty() {
        Vec::new()
    } else {
        tokenize_batch(model, &grid, &inputs)?
    };
    let strokes = if tokens.is_empty() {
        Vec::new()
    } else {
        detokenize_batch(model, &grid, &tokens)?
    };
    let mut composite = first.clone();
    let mut frame_psnr = Vec::with_capacity(strokes.len());
    for (stroke, pair) in strokes.iter().zip(&pairs) {
        composite = blend(&composite, stroke)?;
        frame_psnr.push(psnr(&composite, &pair.after)?);
    }
    let report = Reconstruction {
        frames: pairs.iter().map(|p| p.frame_index).collect(),
        frame_psnr,
        psnr: psnr(&composite, &last)?,
        ssim: ssim(&composite, &last)?,
        strokes: tokens,
        stats,
    };
    Ok((composite, strokes, report))
}

/// Reconstruction quality of one pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ItemMetrics {
    /// `None` when the reconstruction is exact.
    pub psnr: Option<f64>,
    pub ssim: f64,
    pub exact: bool,
}

/// Metrics of one reconstruction against its target, and the raw MSE.
pub fn item_metrics(reconstruction: &Canvas, target: &Canvas) -> Result<(ItemMetrics, f64)> {
    let m = hyperstroke_core::metrics::mse(reconstruction, target)?;
    let exact = m == 0.0;
    let item = ItemMetrics {
        psnr: (!exact).then(|| hyperstroke_core::metrics::psnr_from_mse(m)),
        ssim: ssim(reconstruction, target)?,
        exact,
    };
    Ok((item, m))
}

/// Per-pair reconstruction quality of a trained model.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct EvalReport {
    pub pairs: usize,
    pub items: Vec<ItemMetrics>,
    pub exact_items: usize,
    /// Mean canvas-level PSNR of `blend(before, decode(encode(pair)))` vs
    /// `after` over the inexact items; `None` if every item is exact.
    pub psnr_mean: Option<f64>,
    pub psnr_min: f64,
    /// PSNR of the pooled MSE over all pairs.
    pub psnr_pooled: f64,
    pub ssim_mean: f64,
    /// Fraction of pairs whose tokens are reproduced when re-encoding the
    /// reconstructed pair.
    pub token_stability: f64,
    /// Fraction of individual tokens reproduced on re-encoding.
    pub token_agreement: f64,
    pub codes_used: usize,
    /// Occurrences of each codebook entry over all pairs.
    pub code_histogram: Vec<u64>,
}

/// Evaluates round-trip reconstruction on `(before, after, box)` triples.
pub fn evaluate(model: &VqModel, pairs: &[(Canvas, Canvas, BBox)]) -> Result<EvalReport> {
    if pairs.is_empty() {
        return Err(VqError::EmptyDataset);
    }
    let mut items = Vec::with_capacity(pairs.len());
    let mut histogram = vec![0u64; model.config().codebook_size];
    let mut mse_sum = 0.0;
    let mut stable = 0usize;
    let mut agree = 0usize;
    let mut total_tokens = 0usize;
    let mut used = std::collections::BTreeSet::new();
    for chunk in pairs.chunks(16) {
        let grids = chunk
            .iter()
            .map(|(b, _, _)| model_grid(model, b.dims()))
            .collect::<Result<Vec<_>>>()?;
        let snapped = chunk
            .iter()
            .zip(&grids)
            .map(|((_, _, bb), g)| Ok(g.snap(*bb)?))
            .collect::<Result<Vec<_>>>()?;
        let mut recon = Vec::with_capacity(chunk.len());
        let mut tokens = Vec::with_capacity(chunk.len());
        for (((b, a, _), g), t) in chunk.iter().zip(&grids).zip(&snapped) {
            let tok = tokenize_snapped(model, g, b, a, *t)?;
            let stroke = detokenize(model, g, &tok)?;
            recon.push(blend(b, &stroke)?);
            tokens.push(tok);
        }
        for ((((b, a, _), g), tok), r) in chunk.iter().zip(&grids).zip(&tokens).zip(&recon) {
            used.extend(tok.visual.iter().copied());
            for &code in &tok.visual {
                histogram[code as usize] += 1;
            }
            let again = tokenize_snapped(model, g, b, r, tok.bbox)?;
            if again.visual == tok.visual {
                stable += 1;
            }
            agree += again.visual.iter().zip(&tok.visual).filter(|(x, y)| x == y).count();
            total_tokens += tok.visual.len();
            let (item, m) = item_metrics(r, a)?;
            mse_sum += m;
            items.push(item);
        }
    }
    let n = pairs.len() as f64;
    let finite: Vec<f64> = items.iter().filter_map(|i| i.psnr).collect();
    Ok(EvalReport {
        pairs: pairs.len(),
        exact_items: items.len() - finite.len(),
        psnr_mean: (!finite.is_empty()).then(|| finite.iter().sum::<f64>() / finite.len() as f64),
        psnr_min: finite.iter().copied().fold(f64::INFINITY, f64::min),
        psnr_pooled: hyperstroke_core::metrics::psnr_from_mse(mse_sum / n),
        ssim_mean: items.iter().map(|i| i.ssim).sum::<f64>() / n,
        items,
        token_stability: stable as f64 / n,
        token_agreement: agree as f64 / total_tokens.max(1) as f64,
        codes_used: used.len(),
        code_histogram: histogram,
    })
}
