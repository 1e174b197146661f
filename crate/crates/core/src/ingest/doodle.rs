//! Vector doodle corpora (Quick, Draw! NDJSON) rendered to per-stroke
//! hyperstrokes.
//!
//! Each input line carries `word`, `key_id` and `drawing`, where `drawing`
//! is a list of strokes and each stroke is `[[x...], [y...]]` (an optional
//! third timing array is ignored).

use std::io::BufRead;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::grid::BBox;
use crate::manifest::{write_manifest, ManifestRecord, Supervision};
use crate::raster::{AlphaImage, Canvas};
use crate::rasterize::{stroke_polyline, Point};
use crate::stroke::{blend, compose, Hyperstroke};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DoodleConfig {
    pub canvas: usize,
    pub min_strokes: usize,
    pub max_strokes: usize,
    /// Keep one sketch in `subsample`.
    pub subsample: u64,
    /// Inclusive integer stroke width range in pixels.
    pub width_range: (u32, u32),
    /// Longest sketch side as a fraction of the canvas.
    pub scale_range: (f32, f32),
    /// Percentage of sketches routed to validation.
    pub val_percent: u64,
    pub seed: u64,
}

impl Default for DoodleConfig {
    fn default() -> Self {
        Self {
            canvas: 128,
            min_strokes: 3,
            max_strokes: 15,
            subsample: 5,
            width_range: (2, 8),
            scale_range: (0.5, 0.95),
            val_percent: 3,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Clone, Debug)]
pub struct SketchRecord {
    pub key: String,
    pub category: String,
    pub canvas: (usize, usize),
    pub split: Split,
    pub stroke_width: u32,
    pub strokes: Vec<Hyperstroke>,
    /// Canvas-space polylines the strokes were rendered from.
    pub polylines: Vec<Vec<Point>>,
}

impl SketchRecord {
    /// Composite of all strokes over white.
    pub fn render(&self) -> Result<Canvas> {
        compose(&Canvas::white(self.canvas.0, self.canvas.1), &self.strokes)
    }
}

#[derive(Debug, Deserialize)]
struct RawSketch {
    word: String,
    key_id: serde_json::Value,
    drawing: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct DoodleStats {
    pub lines: usize,
    pub malformed: usize,
    pub out_of_range: usize,
    pub subsampled_out: usize,
    pub kept: usize,
    pub strokes: usize,
}

fn stable_hash(seed: u64, key: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(key.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

fn parse_line(line: &str) -> Option<(String, String, Vec<Vec<Point>>)> {
    let raw: RawSketch = serde_json::from_str(line).ok()?;
    let key = match raw.key_id {
        serde_json::Value::String(s) => s,
        serde_json::Value::Number(n) => n.to_string(),
        _ => return None,
    };
    let mut strokes = Vec::with_capacity(raw.drawing.len());
    for stroke in raw.drawing {
        if stroke.len() < 2 || stroke[0].len() != stroke[1].len() || stroke[0].is_empty() {
            return None;
        }
        let pts: Vec<Point> = stroke[0]
            .iter()
            .zip(&stroke[1])
            .map(|(x, y)| Point::new(*x as f32, *y as f32))
            .collect();
        if pts.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return None;
        }
        strokes.push(pts);
    }
    Some((key, raw.word, strokes))
}

/// Filters, subsamples and renders a corpus. Malformed lines are skipped and counted.
pub fn ingest_doodles<R: BufRead>(corpus: R, config: &DoodleConfig) -> Result<(Vec<SketchRecord>, DoodleStats)> {
    let mut stats = DoodleStats::default();
    let mut records = Vec::new();
    for line in corpus.lines() {
        let line = line.map_err(|e| CoreError::io("<doodle corpus>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        stats.lines += 1;
        let Some((key, category, strokes)) = parse_line(&line) else {
            stats.malformed += 1;
            continue;
        };
        if strokes.len() < config.min_strokes || strokes.len() > config.max_strokes {
            stats.out_of_range += 1;
            continue;
        }
        let h = stable_hash(config.seed, &key);
        if config.subsample > 1 && h % config.subsample != 0 {
            stats.subsampled_out += 1;
            continue;
        }
        match render_sketch(&key, &category, &strokes, config) {
            Some(record) => {
                stats.kept += 1;
                stats.strokes += record.strokes.len();
                records.push(record);
            }
            None => stats.malformed += 1,
        }
    }
    Ok((records, stats))
}

/// Renders one sketch in black with a random width, scale and placement
/// that keeps the whole sketch inside the canvas.
pub fn render_sketch(key: &str, category: &str, strokes: &[Vec<Point>], config: &DoodleConfig) -> Option<SketchRecord> {
    let h = stable_hash(config.seed, key);
    let mut rng = ChaCha8Rng::seed_from_u64(h);
    let size = config.canvas as f32;
    let (lo_w, hi_w) = config.width_range;
    let stroke_width = rng.gen_range(lo_w..=hi_w.max(lo_w));
    let margin = stroke_width as f32 / 2.0 + 1.0;

    let all = strokes.iter().flatten();
    let (min_x, max_x) = all.clone().fold((f32::MAX, f32::MIN), |(a, b), p| (a.min(p.x), b.max(p.x)));
    let (min_y, max_y) = all.fold((f32::MAX, f32::MIN), |(a, b), p| (a.min(p.y), b.max(p.y)));
    let extent = (max_x - min_x).max(max_y - min_y).max(1.0);
    let (lo_s, hi_s) = config.scale_range;
    let target = rng.gen_range(lo_s..=hi_s) * (size - 2.0 * margin);
    let scale = target / extent;
    let span_x = (max_x - min_x) * scale;
    let span_y = (max_y - min_y) * scale;
    let ox = rng.gen_range(margin..=(size - margin - span_x).max(margin));
    let oy = rng.gen_range(margin..=(size - margin - span_y).max(margin));

    let polylines: Vec<Vec<Point>> = strokes
        .iter()
        .map(|s| {
            s.iter()
                .map(|p| Point::new(ox + (p.x - min_x) * scale, oy + (p.y - min_y) * scale))
                .collect()
        })
        .collect();
    let mut rendered = Vec::with_capacity(polylines.len());
    for poly in &polylines {
        let coverage = stroke_polyline(poly, stroke_width as f32, (config.canvas, config.canvas));
        let bbox = coverage.support()?;
        let image = AlphaImage::from_fn(bbox.width(), bbox.height(), |x, y| {
            [0.0, 0.0, 0.0, coverage.get(bbox.x1 as usize + x, bbox.y1 as usize + y)]
        });
        rendered.push(Hyperstroke::new(image, bbox).ok()?);
    }
    let split = if h / 7 % 100 < config.val_percent { Split::Val } else { Split::Train };
    Some(SketchRecord {
        key: key.to_string(),
        category: category.to_string(),
        canvas: (config.canvas, config.canvas),
        split,
        stroke_width,
        strokes: rendered,
        polylines,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoodleStrokeEntry {
    pub path: String,
    pub bbox: BBox,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoodleManifestRecord {
    pub key: String,
    pub category: String,
    pub canvas: (usize, usize),
    pub split: Split,
    pub stroke_width: u32,
    pub strokes: Vec<DoodleStrokeEntry>,
}

/// Writes `doodles.jsonl` (one sketch per line, strokes as RGBA PNGs) and
/// `manifest.jsonl`, a direct-supervision pair manifest with one pair per
/// stroke (composite before and after the stroke, over white).
pub fn write_doodles(root: impl AsRef<Path>, records: &[SketchRecord]) -> Result<()> {
    let root = root.as_ref();
    let mut lines = Vec::with_capacity(records.len());
    let mut pairs = Vec::new();
    for (si, record) in records.iter().enumerate() {
        let mut canvas = Canvas::white(record.canvas.0, record.canvas.1);
        let mut entries = Vec::with_capacity(record.strokes.len());
        for (i, stroke) in record.strokes.iter().enumerate() {
            let id = format!("{si:05}_{i:02}");
            let path = format!("stroke/{id}.png");
            stroke.image().save_png(root.join(&path))?;
            let next = blend(&canvas, stroke)?;
            let before = format!("before/{id}.png");
            let after = format!("after/{id}.png");
            canvas.save_png(root.join(&before))?;
            next.save_png(root.join(&after))?;
            pairs.push(ManifestRecord {
                id: id.clone(),
                before,
                after,
                stroke: Some(path.clone()),
                bbox: stroke.bbox(),
                bbox_tokens: None,
                grid_c: None,
                base_opacity: Some(1.0),
                supervision: Supervision::Direct,
                seed: None,
                source: Some(record.key.clone()),
            });
            canvas = next;
            entries.push(DoodleStrokeEntry { path, bbox: stroke.bbox() });
        }
        let line = DoodleManifestRecord {
            key: record.key.clone(),
            category: record.category.clone(),
            canvas: record.canvas,
            split: record.split,
            stroke_width: record.stroke_width,
            strokes: entries,
        };
        lines.push(serde_json::to_string(&line).map_err(|e| CoreError::json("doodle record", e))?);
    }
    let doodles = root.join("doodles.jsonl");
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    crate::raster::write_file(&doodles, text.as_bytes())?;
    write_manifest(root.join("manifest.jsonl"), &pairs)
}

/// Reads `doodles.jsonl` back into records (without source polylines).
pub fn read_doodles(path: impl AsRef<Path>) -> Result<Vec<SketchRecord>> {
    let path = path.as_ref();
    let root = path.parent().unwrap_or(Path::new(""));
    let text = std::fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|line| {
            let rec: DoodleManifestRecord =
                serde_json::from_str(line).map_err(|e| CoreError::json(path.display().to_string(), e))?;
            let strokes = rec
                .strokes
                .iter()
                .map(|s| Hyperstroke::new(AlphaImage::load_png(root.join(&s.path))?, s.bbox))
                .collect::<Result<Vec<_>>>()?;
            Ok(SketchRecord {
                key: rec.key,
                category: rec.category,
                canvas: rec.canvas,
                split: rec.split,
                stroke_width: rec.stroke_width,
                strokes,
                polylines: Vec::new(),
            })
        })
        .collect()
}

/// A small Quick-Draw-format corpus for offline use. Every category maps
/// to a fixed template of polylines; sketches are jittered copies, so the
/// same category produces similar drawings.
pub fn procedural_corpus(seed: u64, sketches: usize, categories: &[&str]) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::new();
    for i in 0..sketches {
        let category = categories[i % categories.len()];
        let template = category_template(category);
        let jitter = 10.0;
        let drawing: Vec<serde_json::Value> = template
            .iter()
            .map(|stroke| {
                let (dx, dy): (f64, f64) = (rng.gen_range(-jitter..jitter), rng.gen_range(-jitter..jitter));
                let xs: Vec<i64> = stroke.iter().map(|p| (p.0 + dx).clamp(0.0, 255.0).round() as i64).collect();
                let ys: Vec<i64> = stroke.iter().map(|p| (p.1 + dy).clamp(0.0, 255.0).round() as i64).collect();
                serde_json::json!([xs, ys])
            })
            .collect();
        let line = serde_json::json!({
            "word": category,
            "countrycode": "XX",
            "recognized": true,
            "key_id": format!("{seed}{i:08}"),
            "drawing": drawing,
        });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

fn category_template(category: &str) -> Vec<Vec<(f64, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(stable_hash(0x5eed, category));
    let n = rng.gen_range(3..=6);
    (0..n)
        .map(|_| {
            let points = rng.gen_range(2..=5);
            let mut p = (rng.gen_range(20.0..235.0), rng.gen_range(20.0..235.0));
            (0..points)
                .map(|_| {
                    let q = p;
                    p = (
                        (p.0 + rng.gen_range(-90.0..90.0f64)).clamp(0.0, 255.0),
                        (p.1 + rng.gen_range(-90.0..90.0f64)).clamp(0.0, 255.0),
                    );
                    q
                })
                .collect()
        })
        .collect()
}
