//! Synthetic data and ingest checked against ground truth from the generators.

use hyperstroke_core::ingest::{extract_pairs, ingest_doodles, procedural_corpus, DoodleConfig};
use hyperstroke_core::raster::to_u8;
use hyperstroke_core::rasterize::Point;
use hyperstroke_core::synth::{make_sample, procedural_illustration, sample_opacity, write_samples, SynthConfig};
use hyperstroke_core::{blend, diff_bbox, AlphaImage, BBox, Canvas, GridSpec, Hyperstroke, DEFAULT_DIFF_THRESHOLD};
use rand::SeedableRng;

fn desk_config() -> SynthConfig {
    SynthConfig {
        crop_size: 64,
        ..SynthConfig::default()
    }
}

/// Box of pixels where blending the stroke changes some channel by more than `threshold`.
fn visible_support(before: &Canvas, stroke: &Hyperstroke, threshold: f32) -> Option<BBox> {
    let b = stroke.bbox();
    let img = stroke.image();
    let mut out: Option<BBox> = None;
    for y in 0..b.height() {
        for x in 0..b.width() {
            let p = img.pixel(x, y);
            let a = before.pixel(b.x1 as usize + x, b.y1 as usize + y);
            let change = (0..3).map(|c| ((p[c] - a[c]) * p[3]).abs()).fold(0.0f32, f32::max);
            if change > threshold + 1e-6 {
                let px = BBox::new(b.x1 + x as u32, b.y1 + y as u32, b.x1 + x as u32 + 1, b.y1 + y as u32 + 1).unwrap();
                out = Some(out.map_or(px, |o| o.union(&px)));
            }
        }
    }
    out
}

#[test]
fn stored_samples_satisfy_ground_truth_after_8bit_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let source = procedural_illustration(7, 160, 160);
    let samples: Vec<_> = (0..24).map(|i| make_sample(i, &desk_config(), &source).unwrap()).collect();
    let records = write_samples(dir.path(), &samples, None).unwrap();
    for r in &records {
        let pair = r.load(dir.path()).unwrap();
        let stroke = pair.stroke.unwrap();
        let recomposed = blend(&pair.before, &stroke).unwrap();
        for (a, b) in recomposed.data().iter().zip(pair.after.data()) {
            assert!((to_u8(*a) as i32 - to_u8(*b) as i32).abs() <= 1);
        }
        // Alpha support lies inside the box and touches every edge.
        let img = stroke.image();
        assert_eq!(img.alpha_support(), Some(BBox::full(img.width(), img.height())));
    }
}

#[test]
fn opacity_distribution() {
    let config = SynthConfig::default();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let n = 10_000;
    let draws: Vec<f32> = (0..n).map(|_| sample_opacity(&mut rng, &config)).collect();
    let opaque = draws.iter().filter(|a| **a == 1.0).count() as f64;
    let sigma = (n as f64 * 0.3 * 0.7).sqrt();
    assert!((opaque - 0.3 * n as f64).abs() <= 3.0 * sigma, "{opaque}");

    // Kolmogorov-Smirnov against U[0.1, 1.0] for the translucent draws.
    let mut rest: Vec<f64> = draws.iter().filter(|a| **a < 1.0).map(|a| *a as f64).collect();
    rest.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let m = rest.len() as f64;
    let d = rest
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let cdf = (x - 0.1) / 0.9;
            (cdf - i as f64 / m).abs().max(((i + 1) as f64 / m - cdf).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 1.63 / m.sqrt(), "KS D = {d}");
}

#[test]
fn diff_box_recovers_visible_stroke_support() {
    let source = procedural_illustration(3, 128, 128);
    for seed in 0..30 {
        let s = make_sample(seed, &desk_config(), &source).unwrap();
        let diff = diff_bbox(&s.before, &s.after, DEFAULT_DIFF_THRESHOLD).unwrap();
        assert_eq!(diff, visible_support(&s.before, &s.stroke_gt, DEFAULT_DIFF_THRESHOLD), "seed {seed}");
        if let Some(d) = diff {
            assert!(s.stroke_gt.bbox().contains(&d));
        }
    }
}

#[test]
fn timelapse_pairs_cover_known_strokes() {
    let grid = GridSpec::new(128, 128, 16).unwrap();
    let config = SynthConfig {
        crop_size: 128,
        ..SynthConfig::default()
    };
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut frames = vec![procedural_illustration(9, 128, 128)];
    let mut strokes = Vec::new();
    for _ in 0..10 {
        let s = hyperstroke_core::synth::synth_stroke(&mut rng, &config, (128, 128), &[]).unwrap();
        frames.push(blend(frames.last().unwrap(), &s.stroke).unwrap());
        strokes.push(s.stroke);
    }
    let (pairs, stats) = extract_pairs(frames.iter().cloned().map(Ok), &grid, DEFAULT_DIFF_THRESHOLD).unwrap();
    assert_eq!(stats.unreadable, 0);
    // A stroke that happens to be invisible over its background produces no pair.
    let mut expected = strokes.iter().enumerate().filter_map(|(i, s)| visible_support(&frames[i], s, DEFAULT_DIFF_THRESHOLD).map(|b| (i, b)));
    for pair in &pairs {
        let (i, support) = expected.next().unwrap();
        assert_eq!(pair.frame_index, i);
        assert!(grid.unsnap(pair.bbox_tokens).unwrap().contains(&support));
    }
    assert!(expected.next().is_none());
}

/// Ink mask from direct rasterization of the whole sketch at once: a pixel
/// is ink when at least half of its 4x4 subsamples lie within half the
/// stroke width of any segment of any polyline.
fn direct_ink(polylines: &[Vec<Point>], width: f32, size: usize) -> Vec<bool> {
    let r2 = (width / 2.0).powi(2);
    let dist2 = |q: Point, a: Point, b: Point| {
        let (dx, dy) = (b.x - a.x, b.y - a.y);
        let l2 = dx * dx + dy * dy;
        let t = if l2 == 0.0 { 0.0 } else { (((q.x - a.x) * dx + (q.y - a.y) * dy) / l2).clamp(0.0, 1.0) };
        (a.x + t * dx - q.x).powi(2) + (a.y + t * dy - q.y).powi(2)
    };
    let segments: Vec<(Point, Point)> = polylines
        .iter()
        .flat_map(|p| {
            if p.len() == 1 {
                vec![(p[0], p[0])]
            } else {
                p.windows(2).map(|s| (s[0], s[1])).collect()
            }
        })
        .collect();
    (0..size * size)
        .map(|i| {
            let (px, py) = ((i % size) as f32, (i / size) as f32);
            let hits = (0..16)
                .filter(|s| {
                    let q = Point::new(px + ((s % 4) as f32 + 0.5) / 4.0, py + ((s / 4) as f32 + 0.5) / 4.0);
                    segments.iter().any(|(a, b)| dist2(q, *a, *b) <= r2)
                })
                .count();
            hits >= 8
        })
        .collect()
}

#[test]
fn doodle_composite_matches_direct_rasterization() {
    let corpus = procedural_corpus(11, 40, &["cat", "car", "tree", "house"]);
    let config = DoodleConfig {
        subsample: 1,
        ..DoodleConfig::default()
    };
    let (records, _) = ingest_doodles(corpus.as_bytes(), &config).unwrap();
    assert_eq!(records.len(), 40);
    for r in &records {
        let composite = r.render().unwrap();
        let ink: Vec<bool> = composite.data().chunks(3).map(|p| p[0] <= 0.5).collect();
        let oracle = direct_ink(&r.polylines, r.stroke_width as f32, 128);
        let inter = ink.iter().zip(&oracle).filter(|(a, b)| **a && **b).count() as f64;
        let union = ink.iter().zip(&oracle).filter(|(a, b)| **a || **b).count() as f64;
        let iou = inter / union;
        assert!(iou >= 0.95, "{}: IoU {iou}", r.key);
    }
}

#[test]
fn resampled_hyperstroke_blends_like_its_box_resolution_image() {
    let img = AlphaImage::from_fn(64, 64, |x, y| [x as f32 / 64.0, 0.2, y as f32 / 64.0, 0.5]);
    let b = BBox::new(8, 8, 40, 24).unwrap();
    let s = Hyperstroke::resampled(img, b);
    let native = Hyperstroke::new(s.image_at_box().unwrap(), b).unwrap();
    let c = Canvas::white(48, 48);
    assert_eq!(blend(&c, &s).unwrap(), blend(&c, &native).unwrap());
}
