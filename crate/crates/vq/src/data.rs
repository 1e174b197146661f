//! Patch extraction from frame pairs.

use hyperstroke_core::ingest::{FramePair, SketchRecord};
use hyperstroke_core::manifest::{LoadedPair, Supervision};
use hyperstroke_core::{blend, crop_and_resize, AlphaImage, BBox, BBoxTokens, Canvas, GridSpec, Hyperstroke};

use crate::config::VqConfig;
use crate::error::{Result, VqError};
use crate::loss::TrainItem;

/// Renders `stroke` into the coordinate frame of `crop` and resamples it
/// to `patch`. Pixels outside the stroke's own box are transparent.
pub fn stroke_patch(stroke: &Hyperstroke, crop: BBox, patch: (usize, usize)) -> Result<AlphaImage> {
    let sb = stroke.bbox();
    if !crop.contains(&sb) {
        return Err(VqError::Shape(format!("stroke box {sb:?} outside crop {crop:?}")));
    }
    let image = stroke.image_at_box()?;
    let local = AlphaImage::from_fn(crop.width(), crop.height(), |x, y| {
        let (cx, cy) = (crop.x1 + x as u32, crop.y1 + y as u32);
        if sb.contains_point(cx, cy) {
            image.pixel((cx - sb.x1) as usize, (cy - sb.y1) as usize)
        } else {
            [0.0; 4]
        }
    });
    Ok(local.resize_premultiplied(patch.0, patch.1))
}

/// The grid used for a canvas, with `C` from the record or the config.
pub fn grid_for(canvas: &Canvas, grid_c: Option<u32>, config: &VqConfig) -> Result<GridSpec> {
    let c = grid_c.unwrap_or(config.grid_c);
    Ok(GridSpec::new(canvas.width() as u32, canvas.height() as u32, c)?)
}

/// Patch-resolution training item for one frame pair.
pub fn item_from_frames(
    before: &Canvas,
    after: &Canvas,
    tokens: BBoxTokens,
    grid: &GridSpec,
    stroke: Option<&Hyperstroke>,
    config: &VqConfig,
) -> Result<TrainItem> {
    let (b, a) = crop_and_resize(before, after, tokens, grid, config.patch)?;
    match stroke {
        Some(s) => {
            let crop = grid.unsnap(tokens)?;
            Ok(TrainItem::direct(b, a, stroke_patch(s, crop, config.patch)?))
        }
        None => Ok(TrainItem::implicit(b, a)),
    }
}

pub fn item_from_pair(pair: &LoadedPair, config: &VqConfig) -> Result<TrainItem> {
    let grid = grid_for(&pair.before, pair.record.grid_c, config)?;
    let tokens = match pair.record.bbox_tokens {
        Some(t) => t,
        None => grid.snap(pair.record.bbox)?,
    };
    let stroke = match pair.record.supervision {
        Supervision::Direct => pair.stroke.as_ref(),
        Supervision::Implicit => None,
    };
    item_from_frames(&pair.before, &pair.after, tokens, &grid, stroke, config)
}

pub fn items_from_pairs(pairs: &[LoadedPair], config: &VqConfig) -> Result<Vec<TrainItem>> {
    pairs.iter().map(|p| item_from_pair(p, config)).collect()
}

pub fn items_from_frame_pairs(pairs: &[FramePair], grid: &GridSpec, config: &VqConfig) -> Result<Vec<TrainItem>> {
    pairs
        .iter()
        .map(|p| item_from_frames(&p.before, &p.after, p.bbox_tokens, grid, None, config))
        .collect()
}

/// Direct-supervision items for every stroke of every sketch, each drawn
/// over the sketch's earlier strokes.
pub fn items_from_records(records: &[SketchRecord], config: &VqConfig) -> Result<Vec<TrainItem>> {
    let mut items = Vec::new();
    for record in records {
        let mut canvas = Canvas::white(record.canvas.0, record.canvas.1);
        let grid = grid_for(&canvas, None, config)?;
        for stroke in &record.strokes {
            let next = blend(&canvas, stroke)?;
            let tokens = grid.snap(stroke.bbox())?;
            items.push(item_from_frames(&canvas, &next, tokens, &grid, Some(stroke), config)?);
            canvas = next;
        }
    }
    Ok(items)
}
