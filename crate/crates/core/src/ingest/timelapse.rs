//! Frame pairs from drawing timelapses.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{BBox, BBoxTokens, GridSpec};
use crate::manifest::{write_manifest, ManifestRecord, Supervision};
use crate::raster::Canvas;
use crate::stroke::diff_bbox;

/// Consecutive frames `(A_t, A_{t+1})` differing by one applied stroke.
#[derive(Clone, Debug)]
pub struct FramePair {
    pub before: Canvas,
    pub after: Canvas,
    /// Tight box of the change.
    pub bbox: BBox,
    pub bbox_tokens: BBoxTokens,
    /// Index of `before` in the original frame sequence.
    pub frame_index: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairStats {
    pub frames: usize,
    pub unreadable: usize,
    pub duplicates: usize,
    pub pairs: usize,
}

/// Pairs consecutive frames after dropping near-duplicates.
///
/// A frame whose change from the last kept frame stays under `min_change`
/// is treated as a codec duplicate and skipped. Unreadable frames are
/// skipped and counted.
pub fn extract_pairs<I>(frames: I, grid: &GridSpec, min_change: f32) -> Result<(Vec<FramePair>, PairStats)>
where
    I: IntoIterator<Item = Result<Canvas>>,
{
    let mut stats = PairStats::default();
    let mut pairs = Vec::new();
    let mut last: Option<(usize, Canvas)> = None;
    for (index, frame) in frames.into_iter().enumerate() {
        stats.frames += 1;
        let frame = match frame {
            Ok(f) => f,
            Err(e) => {
                tracing::warn!(frame = index, error = %e, "skipping unreadable frame");
                stats.unreadable += 1;
                continue;
            }
        };
        if frame.dims() != (grid.width() as usize, grid.height() as usize) {
            return Err(CoreError::Shape(format!(
                "frame {index} is {:?}, expected {}x{}",
                frame.dims(),
                grid.width(),
                grid.height()
            )));
        }
        match last.take() {
            None => last = Some((index, frame)),
            Some((prev_index, prev)) => match diff_bbox(&prev, &frame, min_change)? {
                None => {
                    stats.duplicates += 1;
                    last = Some((prev_index, prev));
                }
                Some(bbox) => {
                    let bbox_tokens = grid.snap(bbox)?;
                    pairs.push(FramePair {
                        before: prev,
                        after: frame.clone(),
                        bbox,
                        bbox_tokens,
                        frame_index: prev_index,
                    });
                    last = Some((index, frame));
                }
            },
        }
    }
    stats.pairs = pairs.len();
    Ok((pairs, stats))
}

/// Sorted PNG paths in a frame directory.
pub fn frame_paths(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CoreError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")))
        .collect();
    paths.sort();
    Ok(paths)
}

pub fn load_frames(dir: impl AsRef<Path>) -> Result<impl Iterator<Item = Result<Canvas>>> {
    Ok(frame_paths(dir)?.into_iter().map(Canvas::load_png))
}

/// Writes pairs as an implicit-supervision manifest under `root`.
pub fn write_pairs(root: impl AsRef<Path>, pairs: &[FramePair], grid: &GridSpec, source: &str) -> Result<Vec<ManifestRecord>> {
    let root = root.as_ref();
    let mut records = Vec::with_capacity(pairs.len());
    for (i, pair) in pairs.iter().enumerate() {
        let id = format!("{i:04}");
        let before = format!("before/{id}.png");
        let after = format!("after/{id}.png");
        pair.before.save_png(root.join(&before))?;
        pair.after.save_png(root.join(&after))?;
        records.push(ManifestRecord {
            id,
            before,
            after,
            stroke: None,
            bbox: pair.bbox,
            bbox_tokens: Some(pair.bbox_tokens),
            grid_c: Some(grid.cells()),
            base_opacity: None,
            supervision: Supervision::Implicit,
            seed: None,
            source: Some(format!("{source}#{}", pair.frame_index)),
        });
    }
    write_manifest(root.join("manifest.jsonl"), &records)?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::AlphaImage;
    use crate::stroke::{blend, Hyperstroke, DEFAULT_DIFF_THRESHOLD};

    fn square(x: u32, y: u32, s: u32, rgba: [f32; 4]) -> Hyperstroke {
        Hyperstroke::new(
            AlphaImage::filled(s as usize, s as usize, rgba),
            BBox::new(x, y, x + s, y + s).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn duplicates_are_dropped_and_boxes_snapped() {
        let grid = GridSpec::new(64, 64, 8).unwrap();
        let f0 = Canvas::white(64, 64);
        let f1 = blend(&f0, &square(10, 10, 5, [1.0, 0.0, 0.0, 0.8])).unwrap();
        let f2 = blend(&f1, &square(40, 30, 3, [0.0, 0.0, 1.0, 1.0])).unwrap();
        let frames = vec![Ok(f0.clone()), Ok(f0.clone()), Ok(f1.clone()), Err(CoreError::Invalid("x".into())), Ok(f2.clone())];
        let (pairs, stats) = extract_pairs(frames, &grid, DEFAULT_DIFF_THRESHOLD).unwrap();
        assert_eq!(stats, PairStats { frames: 5, unreadable: 1, duplicates: 1, pairs: 2 });
        assert_eq!(pairs[0].bbox, BBox::new(10, 10, 15, 15).unwrap());
        assert_eq!(pairs[0].bbox_tokens.as_array(), [1, 1, 2, 2]);
        assert_eq!(pairs[1].before, f1);
        assert_eq!(pairs[1].bbox_tokens.as_array(), [5, 3, 6, 5]);
        for p in &pairs {
            assert!(grid.unsnap(p.bbox_tokens).unwrap().contains(&p.bbox));
        }
    }

    #[test]
    fn identical_frames_yield_nothing() {
        let grid = GridSpec::new(32, 32, 4).unwrap();
        let f = Canvas::white(32, 32);
        let (pairs, _) = extract_pairs(vec![Ok(f.clone()), Ok(f)], &grid, DEFAULT_DIFF_THRESHOLD).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn mismatched_dims_error() {
        let grid = GridSpec::new(32, 32, 4).unwrap();
        assert!(extract_pairs(vec![Ok(Canvas::white(16, 16))], &grid, 0.01).is_err());
    }
}
