//! Antialiased coverage of thick polylines, used to draw synthetic Bezier
//! strokes and vector doodles.

use crate::grid::BBox;

/// Subsamples per pixel edge; coverage is measured on a `SS x SS` lattice.
pub const SUPERSAMPLE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub x: f32,
    pub y: f32,
}

impl Point {
    pub fn new(x: f32, y: f32) -> Self {
        Self { x, y }
    }
}

/// Per-pixel coverage in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageMap {
    width: usize,
    height: usize,
    coverage: Vec<f32>,
}

impl CoverageMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.coverage[y * self.width + x]
    }

    pub fn values(&self) -> &[f32] {
        &self.coverage
    }

    pub fn support(&self) -> Option<BBox> {
        crate::raster::support_box(self.width, self.height, |x, y| self.get(x, y) > 0.0)
    }
}

/// Rasterizes a polyline of constant `width` with round caps and joins.
/// A single-point polyline draws a disc.
pub fn stroke_polyline(points: &[Point], width: f32, canvas: (usize, usize)) -> CoverageMap {
    stroke_polylines(std::slice::from_ref(&points), width, canvas)
}

/// Union coverage of several polylines drawn with the same width.
pub fn stroke_polylines<P: AsRef<[Point]>>(polylines: &[P], width: f32, canvas: (usize, usize)) -> CoverageMap {
    let (w, h) = canvas;
    let mut hits = vec![0u16; w * h];
    let radius = width * 0.5;
    let r2 = radius * radius;
    let ss = SUPERSAMPLE as f32;

    for points in polylines {
        let points = points.as_ref();
        let segments: Vec<(Point, Point)> = match points.len() {
            0 => continue,
            1 => vec![(points[0], points[0])],
            _ => points.windows(2).map(|p| (p[0], p[1])).collect(),
        };
        for (a, b) in segments {
            let lo_x = (a.x.min(b.x) - radius).floor().max(0.0) as usize;
            let lo_y = (a.y.min(b.y) - radius).floor().max(0.0) as usize;
            let hi_x = ((a.x.max(b.x) + radius).ceil().max(0.0) as usize).min(w);
            let hi_y = ((a.y.max(b.y) + radius).ceil().max(0.0) as usize).min(h);
            for py in lo_y..hi_y {
                for px in lo_x..hi_x {
                    let cell = &mut hits[py * w + px];
                    for sy in 0..SUPERSAMPLE {
                        for sx in 0..SUPERSAMPLE {
                            let bit = 1u16 << (sy * SUPERSAMPLE + sx);
                            if *cell & bit != 0 {
                                continue;
                            }
                            let q = Point::new(
                                px as f32 + (sx as f32 + 0.5) / ss,
                                py as f32 + (sy as f32 + 0.5) / ss,
                            );
                            if dist2_to_segment(q, a, b) <= r2 {
                                *cell |= bit;
                            }
                        }
                    }
                }
            }
        }
    }

    let total = (SUPERSAMPLE * SUPERSAMPLE) as f32;
    CoverageMap {
        width: w,
        height: h,
        coverage: hits.iter().map(|c| c.count_ones() as f32 / total).collect(),
    }
}

pub(crate) fn dist2_to_segment(q: Point, a: Point, b: Point) -> f32 {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((q.x - a.x) * dx + (q.y - a.y) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.x + t * dx - q.x, a.y + t * dy - q.y);
    cx * cx + cy * cy
}

/// Uniformly parameterised samples of a cubic Bezier curve.
pub fn flatten_cubic(ctrl: [Point; 4], segments: usize) -> Vec<Point> {
    let segments = segments.max(1);
    (0..=segments)
        .map(|i| {
            let t = i as f32 / segments as f32;
            let u = 1.0 - t;
            let (b0, b1, b2, b3) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
            Point::new(
                b0 * ctrl[0].x + b1 * ctrl[1].x + b2 * ctrl[2].x + b3 * ctrl[3].x,
                b0 * ctrl[0].y + b1 * ctrl[1].y + b2 * ctrl[2].y + b3 * ctrl[3].y,
            )
        })
        .collect()
}
