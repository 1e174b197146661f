//! Hyperstrokes and the blending algebra over canvases.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{BBox, BBoxTokens, GridSpec};
use crate::raster::{support_box, write_file, AlphaImage, Canvas};

/// How the stroke image relates to its box.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    /// Image dimensions equal the box dimensions.
    Native,
    /// Image was resized (e.g. to `W_T x H_T`); it is resampled to the box
    /// before blending.
    Resampled,
}

/// A stroke appearance grounded by a pixel box.
#[derive(Clone, Debug, PartialEq)]
pub struct Hyperstroke {
    image: AlphaImage,
    bbox: BBox,
    placement: Placement,
}

impl Hyperstroke {
    pub fn new(image: AlphaImage, bbox: BBox) -> Result<Self> {
        if image.dims() != (bbox.width(), bbox.height()) {
            return Err(CoreError::Shape(format!(
                "stroke image {}x{} does not match box {}x{}",
                image.width(),
                image.height(),
                bbox.width(),
                bbox.height()
            )));
        }
        Ok(Self {
            image,
            bbox,
            placement: Placement::Native,
        })
    }

    /// A stroke whose image is stored at a different resolution than its box.
    pub fn resampled(image: AlphaImage, bbox: BBox) -> Self {
        Self {
            image,
            bbox,
            placement: Placement::Resampled,
        }
    }

    pub fn image(&self) -> &AlphaImage {
        &self.image
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    /// The stroke image at box resolution.
    pub fn image_at_box(&self) -> Result<AlphaImage> {
        let dims = (self.bbox.width(), self.bbox.height());
        if self.image.dims() == dims {
            return Ok(self.image.clone());
        }
        match self.placement {
            Placement::Resampled => Ok(self.image.resize_premultiplied(dims.0, dims.1)),
            Placement::Native => Err(CoreError::Shape(format!(
                "stroke image {:?} does not match box {:?}",
                self.image.dims(),
                dims
            ))),
        }
    }

    pub fn into_native(self) -> Result<Self> {
        let image = self.image_at_box()?;
        Ok(Self {
            image,
            bbox: self.bbox,
            placement: Placement::Native,
        })
    }

    /// Writes `<path>` as an RGBA PNG and `<path>.json` with the box sidecar.
    pub fn save(&self, png_path: impl AsRef<Path>, grid_cells: u32) -> Result<()> {
        let png_path = png_path.as_ref();
        self.image.save_png(png_path)?;
        let sidecar = StrokeSidecar {
            bbox: self.bbox,
            grid_c: grid_cells,
        };
        let json = serde_json::to_vec(&sidecar).map_err(|e| CoreError::json("stroke sidecar", e))?;
        write_file(&sidecar_path(png_path), &json)
    }

    pub fn load(png_path: impl AsRef<Path>) -> Result<(Self, u32)> {
        let png_path = png_path.as_ref();
        let image = AlphaImage::load_png(png_path)?;
        let sidecar_path = sidecar_path(png_path);
        let raw = std::fs::read(&sidecar_path).map_err(|e| CoreError::io(&sidecar_path, e))?;
        let sidecar: StrokeSidecar = serde_json::from_slice(&raw)
            .map_err(|e| CoreError::json(sidecar_path.display().to_string(), e))?;
        let stroke = if image.dims() == (sidecar.bbox.width(), sidecar.bbox.height()) {
            Hyperstroke::new(image, sidecar.bbox)?
        } else {
            Hyperstroke::resampled(image, sidecar.bbox)
        };
        Ok((stroke, sidecar.grid_c))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct StrokeSidecar {
    #[serde(rename = "box")]
    bbox: BBox,
    grid_c: u32,
}

fn sidecar_path(png: &Path) -> std::path::PathBuf {
    let mut s = png.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

/// `A ∘ S`: straight-alpha blend inside the box, exact passthrough outside.
pub fn blend(canvas: &Canvas, stroke: &Hyperstroke) -> Result<Canvas> {
    let mut out = canvas.clone();
    blend_in_place(&mut out, stroke)?;
    Ok(out)
}

pub(crate) fn blend_in_place(canvas: &mut Canvas, stroke: &Hyperstroke) -> Result<()> {
    let bbox = stroke.bbox();
    bbox.check_within(canvas.width(), canvas.height())?;
    let image = stroke.image_at_box()?;
    for y in 0..bbox.height() {
        for x in 0..bbox.width() {
            let [r, g, b, a] = image.pixel(x, y);
            let px = canvas.pixel_mut(bbox.x1 as usize + x, bbox.y1 as usize + y);
            let keep = 1.0 - a;
            px[0] = r * a + px[0] * keep;
            px[1] = g * a + px[1] * keep;
            px[2] = b * a + px[2] * keep;
        }
    }
    Ok(())
}

/// Left fold of [`blend`] over `strokes`.
pub fn compose(canvas: &Canvas, strokes: &[Hyperstroke]) -> Result<Canvas> {
    let mut out = canvas.clone();
    for (index, stroke) in strokes.iter().enumerate() {
        blend_in_place(&mut out, stroke).map_err(|e| CoreError::Stroke {
            index,
            source: Box::new(e),
        })?;
    }
    Ok(out)
}

/// Crops both frames to the unsnapped box and resamples them to `target`.
pub fn crop_and_resize(
    frame_a: &Canvas,
    frame_b: &Canvas,
    tokens: BBoxTokens,
    grid: &GridSpec,
    target: (usize, usize),
) -> Result<(Canvas, Canvas)> {
    check_same_dims(frame_a, frame_b)?;
    let bbox = grid.unsnap(tokens)?;
    let a = frame_a.crop(bbox)?.resize_bilinear(target.0, target.1);
    let b = frame_b.crop(bbox)?.resize_bilinear(target.0, target.1);
    Ok((a, b))
}

/// Default change threshold, tolerant of video-codec noise.
pub const DEFAULT_DIFF_THRESHOLD: f32 = 2.0 / 255.0;

/// Tight box around pixels whose max-channel absolute change exceeds `threshold`.
pub fn diff_bbox(frame_a: &Canvas, frame_b: &Canvas, threshold: f32) -> Result<Option<BBox>> {
    check_same_dims(frame_a, frame_b)?;
    Ok(support_box(frame_a.width(), frame_a.height(), |x, y| {
        let (a, b) = (frame_a.pixel(x, y), frame_b.pixel(x, y));
        (0..3).any(|c| (b[c] - a[c]).abs() > threshold)
    }))
}

fn check_same_dims(a: &Canvas, b: &Canvas) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(CoreError::Shape(format!(
            "frame dims differ: {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}
