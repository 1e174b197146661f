//! Blending against an independent per-pixel reference written with plain
//! nested loops in f64.

use hyperstroke_core::{blend, compose, AlphaImage, BBox, Canvas, Hyperstroke};
use proptest::prelude::*;

fn reference_compose(canvas: &Canvas, strokes: &[Hyperstroke]) -> Vec<f64> {
    let (w, h) = canvas.dims();
    let mut out: Vec<f64> = canvas.data().iter().map(|v| *v as f64).collect();
    for s in strokes {
        let b = s.bbox();
        let img = s.image();
        for y in 0..h {
            for x in 0..w {
                let inside = b.x1 as usize <= x && x < b.x2 as usize && b.y1 as usize <= y && y < b.y2 as usize;
                if !inside {
                    continue;
                }
                let p = img.pixel(x - b.x1 as usize, y - b.y1 as usize);
                let a = p[3] as f64;
                for c in 0..3 {
                    let i = (y * w + x) * 3 + c;
                    out[i] = p[c] as f64 * a + out[i] * (1.0 - a);
                }
            }
        }
    }
    out
}

fn arb_canvas(w: usize, h: usize) -> impl Strategy<Value = Canvas> {
    prop::collection::vec(0.0f32..=1.0, w * h * 3).prop_map(move |d| Canvas::new(w, h, d).unwrap())
}

fn arb_stroke(w: u32, h: u32) -> impl Strategy<Value = Hyperstroke> {
    (0..w, 0..h, 1..=w, 1..=h)
        .prop_map(move |(x1, y1, bw, bh)| BBox::new(x1, y1, (x1 + bw).min(w), (y1 + bh).min(h)).unwrap())
        .prop_flat_map(|b| {
            prop::collection::vec(0.0f32..=1.0, b.area() * 4)
                .prop_map(move |d| Hyperstroke::new(AlphaImage::new(b.width(), b.height(), d).unwrap(), b).unwrap())
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn compose_matches_reference(canvas in arb_canvas(24, 20), strokes in prop::collection::vec(arb_stroke(24, 20), 0..6)) {
        let got = compose(&canvas, &strokes).unwrap();
        let want = reference_compose(&canvas, &strokes);
        for (g, w) in got.data().iter().zip(&want) {
            prop_assert!((*g as f64 - w).abs() < 1e-6);
        }
    }

    #[test]
    fn outside_box_is_bit_identical_and_range_preserved(canvas in arb_canvas(16, 16), stroke in arb_stroke(16, 16)) {
        let out = blend(&canvas, &stroke).unwrap();
        let b = stroke.bbox();
        for y in 0..16u32 {
            for x in 0..16u32 {
                let (o, c) = (out.pixel(x as usize, y as usize), canvas.pixel(x as usize, y as usize));
                if !b.contains_point(x, y) {
                    prop_assert_eq!(o.map(f32::to_bits), c.map(f32::to_bits));
                }
                prop_assert!(o.iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
        // Input canvas is untouched (blend returns a new canvas).
        prop_assert_eq!(blend(&canvas, &stroke).unwrap(), out);
    }

    #[test]
    fn alpha_extremes(canvas in arb_canvas(12, 12), stroke in arb_stroke(12, 12)) {
        let b = stroke.bbox();
        let clear = Hyperstroke::new(AlphaImage::from_fn(b.width(), b.height(), |x, y| {
            let p = stroke.image().pixel(x, y);
            [p[0], p[1], p[2], 0.0]
        }), b).unwrap();
        prop_assert_eq!(blend(&canvas, &clear).unwrap(), canvas.clone());

        let solid = Hyperstroke::new(AlphaImage::from_fn(b.width(), b.height(), |x, y| {
            let p = stroke.image().pixel(x, y);
            [p[0], p[1], p[2], 1.0]
        }), b).unwrap();
        let out = blend(&canvas, &solid).unwrap();
        for y in 0..b.height() {
            for x in 0..b.width() {
                let p = solid.image().pixel(x, y);
                prop_assert_eq!(out.pixel(b.x1 as usize + x, b.y1 as usize + y), [p[0], p[1], p[2]]);
            }
        }
    }
}

#[test]
fn long_sequence_matches_stepwise_blending() {
    // Reconstruction workflow: many strokes over a blank canvas, folded one
    // at a time, must equal the single compose call exactly.
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(328);
    let canvas = Canvas::white(64, 64);
    let strokes: Vec<_> = (0..328)
        .map(|_| {
            let x1 = rng.gen_range(0..60);
            let y1 = rng.gen_range(0..60);
            let b = BBox::new(x1, y1, rng.gen_range(x1 + 1..=64), rng.gen_range(y1 + 1..=64)).unwrap();
            let rgba: [f32; 4] = [rng.gen(), rng.gen(), rng.gen(), rng.gen()];
            Hyperstroke::new(AlphaImage::filled(b.width(), b.height(), rgba), b).unwrap()
        })
        .collect();
    let mut stepwise = canvas.clone();
    for s in &strokes {
        stepwise = blend(&stepwise, s).unwrap();
    }
    assert_eq!(compose(&canvas, &strokes).unwrap(), stepwise);
}
