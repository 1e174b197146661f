//! Real-valued rasters with interleaved channels.
//!
//! [`Canvas`] is the 3-channel drawing surface and [`AlphaImage`] the
//! 4-channel straight-alpha stroke appearance. Both store `f32` samples in
//! `[0, 1]`, row-major, channels interleaved.

use std::io::Cursor;
use std::path::Path;

use image::{ImageBuffer, ImageFormat, Rgb, Rgba};

use crate::error::{CoreError, Result};
use crate::grid::BBox;

#[derive(Clone, Debug, PartialEq)]
pub struct Raster<const N: usize> {
    width: usize,
    height: usize,
    data: Vec<f32>,
}

/// RGB canvas `A`.
pub type Canvas = Raster<3>;

/// RGBA stroke image with straight (non-premultiplied) alpha.
pub type AlphaImage = Raster<4>;

impl<const N: usize> Raster<N> {
    pub const CHANNELS: usize = N;

    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CoreError::Shape(format!(
                "raster must be non-empty, got {width}x{height}"
            )));
        }
        if data.len() != width * height * N {
            return Err(CoreError::Shape(format!(
                "expected {} samples for {width}x{height}x{N}, got {}",
                width * height * N,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(CoreError::Invalid(format!(
                "sample {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds a raster from a per-pixel function; samples are clamped to `[0, 1]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [f32; N]) -> Self {
        assert!(width > 0 && height > 0, "raster must be non-empty");
        let mut data = Vec::with_capacity(width * height * N);
        for y in 0..height {
            for x in 0..width {
                data.extend(f(x, y).iter().map(|v| clamp01(*v)));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn filled(width: usize, height: usize, value: [f32; N]) -> Self {
        Self::from_fn(width, height, |_, _| value)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; N] {
        let i = (y * self.width + x) * N;
        let mut out = [0.0; N];
        out.copy_from_slice(&self.data[i..i + N]);
        out
    }

    #[inline]
    pub(crate) fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f32] {
        let i = (y * self.width + x) * N;
        &mut self.data[i..i + N]
    }

    pub fn crop(&self, bbox: BBox) -> Result<Self> {
        bbox.check_within(self.width, self.height)?;
        let (x1, y1) = (bbox.x1 as usize, bbox.y1 as usize);
        Ok(Self::from_fn(bbox.width(), bbox.height(), |x, y| {
            self.pixel(x1 + x, y1 + y)
        }))
    }

    /// Bilinear resampling with half-pixel centres and clamped edges.
    /// Resizing to the current dimensions returns an exact copy.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let sx = self.width as f32 / width as f32;
        let sy = self.height as f32 / height as f32;
        let taps = |dst: usize, scale: f32, len: usize| {
            let src = ((dst as f32 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (src.floor() as usize).min(len - 1);
            let i1 = (i0 + 1).min(len - 1);
            (i0, i1, src - i0 as f32)
        };
        let cols: Vec<_> = (0..width).map(|x| taps(x, sx, self.width)).collect();
        Self::from_fn(width, height, |x, y| {
            let (y0, y1, ty) = taps(y, sy, self.height);
            let (x0, x1, tx) = cols[x];
            let (p00, p10) = (self.pixel(x0, y0), self.pixel(x1, y0));
            let (p01, p11) = (self.pixel(x0, y1), self.pixel(x1, y1));
            let mut out = [0.0; N];
            for c in 0..N {
                let top = p00[c] + (p10[c] - p00[c]) * tx;
                let bottom = p01[c] + (p11[c] - p01[c]) * tx;
                out[c] = top + (bottom - top) * ty;
            }
            out
        })
    }

    /// 8-bit samples, round-half-up.
    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|v| to_u8(*v)).collect()
    }

    pub fn from_u8(width: usize, height: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(width, height, bytes.iter().map(|b| *b as f32 / 255.0).collect())
    }

    /// Round-trips every sample through 8-bit storage.
    pub fn quantized(&self) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|v| to_u8(*v) as f32 / 255.0).collect(),
        }
    }
}

#[inline]
pub fn clamp01(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    (clamp01(v) * 255.0 + 0.5).floor() as u8
}

impl Canvas {
    pub fn white(width: usize, height: usize) -> Self {
        Self::filled(width, height, [1.0; 3])
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf: ImageBuffer<Rgb<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_u8())
                .expect("buffer length matches dims");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    /// Decodes any PNG, dropping alpha if present.
    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgb8();
        Self::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode_png()?)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| CoreError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgb8();
        Self::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
    }
}

impl AlphaImage {
    pub fn transparent(width: usize, height: usize) -> Self {
        Self::filled(width, height, [0.0; 4])
    }

    pub fn alpha(&self, x: usize, y: usize) -> f32 {
        self.data[(y * self.width + x) * 4 + 3]
    }

    /// Tight box around pixels with non-zero alpha, in this image's coordinates.
    pub fn alpha_support(&self) -> Option<BBox> {
        support_box(self.width, self.height, |x, y| self.alpha(x, y) > 0.0)
    }

    /// Resamples with premultiplied colour so that fully transparent texels
    /// do not bleed their (meaningless) RGB into neighbours.
    pub fn resize_premultiplied(&self, width: usize, height: usize) -> Self {
        if (width, height) == self.dims() {
            return self.clone();
        }
        let premul = Raster::<4>::from_fn(self.width, self.height, |x, y| {
            let [r, g, b, a] = self.pixel(x, y);
            [r * a, g * a, b * a, a]
        });
        let resized = premul.resize_bilinear(width, height);
        Raster::<4>::from_fn(width, height, |x, y| {
            let [r, g, b, a] = resized.pixel(x, y);
            if a > 1e-6 {
                [r / a, g / a, b / a, a]
            } else {
                [0.0; 4]
            }
        })
    }

    /// Composite over a solid background, e.g. white for previews.
    pub fn over_solid(&self, background: [f32; 3]) -> Canvas {
        Canvas::from_fn(self.width, self.height, |x, y| {
            let [r, g, b, a] = self.pixel(x, y);
            [
                r * a + background[0] * (1.0 - a),
                g * a + background[1] * (1.0 - a),
                b * a + background[2] * (1.0 - a),
            ]
        })
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let buf: ImageBuffer<Rgba<u8>, _> =
            ImageBuffer::from_raw(self.width as u32, self.height as u32, self.to_u8())
                .expect("buffer length matches dims");
        let mut out = Cursor::new(Vec::new());
        buf.write_to(&mut out, ImageFormat::Png)?;
        Ok(out.into_inner())
    }

    pub fn decode_png(bytes: &[u8]) -> Result<Self> {
        let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)?.to_rgba8();
        Self::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode_png()?)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let img = image::open(path)
            .map_err(|source| CoreError::Image {
                path: path.to_path_buf(),
                source,
            })?
            .to_rgba8();
        Self::from_u8(img.width() as usize, img.height() as usize, img.as_raw())
    }
}

pub(crate) fn support_box(
    width: usize,
    height: usize,
    mut inside: impl FnMut(usize, usize) -> bool,
) -> Option<BBox> {
    let (mut x1, mut y1, mut x2, mut y2) = (usize::MAX, usize::MAX, 0, 0);
    for y in 0..height {
        for x in 0..width {
            if inside(x, y) {
                x1 = x1.min(x);
                y1 = y1.min(y);
                x2 = x2.max(x + 1);
                y2 = y2.max(y + 1);
            }
        }
    }
    (x1 != usize::MAX).then(|| BBox::new_unchecked(x1 as u32, y1 as u32, x2 as u32, y2 as u32))
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| CoreError::io(path, e))
}
