//! Pixel boxes and their grid-snapped token form.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Half-open pixel box `[x1, x2) x [y1, y2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u32; 4]", try_from = "[u32; 4]")]
pub struct BBox {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBox {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32) -> Result<Self> {
        if x1 >= x2 || y1 >= y2 {
            return Err(CoreError::Invalid(format!(
                "degenerate box ({x1},{y1},{x2},{y2})"
            )));
        }
        Ok(Self { x1, y1, x2, y2 })
    }

    pub(crate) fn new_unchecked(x1: u32, y1: u32, x2: u32, y2: u32) -> Self {
        debug_assert!(x1 < x2 && y1 < y2);
        Self { x1, y1, x2, y2 }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self::new_unchecked(0, 0, width as u32, height as u32)
    }

    pub fn width(&self) -> usize {
        (self.x2 - self.x1) as usize
    }

    pub fn height(&self) -> usize {
        (self.y2 - self.y1) as usize
    }

    pub fn area(&self) -> usize {
        self.width() * self.height()
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn contains_point(&self, x: u32, y: u32) -> bool {
        self.x1 <= x && x < self.x2 && self.y1 <= y && y < self.y2
    }

    pub fn contains(&self, other: &BBox) -> bool {
        self.x1 <= other.x1 && self.y1 <= other.y1 && other.x2 <= self.x2 && other.y2 <= self.y2
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox::new_unchecked(
            self.x1.min(other.x1),
            self.y1.min(other.y1),
            self.x2.max(other.x2),
            self.y2.max(other.y2),
        )
    }

    pub fn translate(&self, dx: u32, dy: u32) -> BBox {
        BBox::new_unchecked(self.x1 + dx, self.y1 + dy, self.x2 + dx, self.y2 + dy)
    }

    pub fn check_within(&self, width: usize, height: usize) -> Result<()> {
        if self.x2 as usize > width || self.y2 as usize > height || self.x1 >= self.x2 || self.y1 >= self.y2 {
            return Err(CoreError::OutOfBounds {
                bbox: self.as_array(),
                width,
                height,
            });
        }
        Ok(())
    }
}

impl From<BBox> for [u32; 4] {
    fn from(b: BBox) -> Self {
        b.as_array()
    }
}

impl TryFrom<[u32; 4]> for BBox {
    type Error = CoreError;

    fn try_from([x1, y1, x2, y2]: [u32; 4]) -> Result<Self> {
        BBox::new(x1, y1, x2, y2)
    }
}

/// `C x C` grid over a `W x H` canvas. `W` and `H` must be multiples of `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    width: u32,
    height: u32,
    cells: u32,
}

impl GridSpec {
    pub fn new(width: u32, height: u32, cells: u32) -> Result<Self> {
        if cells == 0 || width == 0 || height == 0 {
            return Err(CoreError::Invalid(format!(
                "grid {cells} over {width}x{height} must be non-empty"
            )));
        }
        if width % cells != 0 || height % cells != 0 {
            return Err(CoreError::Invalid(format!(
                "canvas {width}x{height} not divisible by grid count {cells}"
            )));
        }
        Ok(Self {
            width,
            height,
            cells,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Grid count `C`; box tokens range over `0..=C`.
    pub fn cells(&self) -> u32 {
        self.cells
    }

    pub fn cell_size(&self) -> (u32, u32) {
        (self.width / self.cells, self.height / self.cells)
    }

    /// Smallest grid-aligned box containing `bbox`.
    pub fn snap(&self, bbox: BBox) -> Result<BBoxTokens> {
        bbox.check_within(self.width as usize, self.height as usize)?;
        let (cw, ch) = self.cell_size();
        Ok(BBoxTokens {
            x1: bbox.x1 / cw,
            y1: bbox.y1 / ch,
            x2: bbox.x2.div_ceil(cw),
            y2: bbox.y2.div_ceil(ch),
        })
    }

    pub fn unsnap(&self, tokens: BBoxTokens) -> Result<BBox> {
        tokens.check(self.cells)?;
        let (cw, ch) = self.cell_size();
        Ok(BBox::new_unchecked(
            tokens.x1 * cw,
            tokens.y1 * ch,
            tokens.x2 * cw,
            tokens.y2 * ch,
        ))
    }
}

/// Grid-corner indices `(X1, Y1, X2, Y2)`, each in `0..=C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "[u32; 4]", from = "[u32; 4]")]
pub struct BBoxTokens {
    pub x1: u32,
    pub y1: u32,
    pub x2: u32,
    pub y2: u32,
}

impl BBoxTokens {
    pub fn new(x1: u32, y1: u32, x2: u32, y2: u32, cells: u32) -> Result<Self> {
        let t = Self { x1, y1, x2, y2 };
        t.check(cells)?;
        Ok(t)
    }

    pub fn check(&self, cells: u32) -> Result<()> {
        if self.x1 < self.x2 && self.y1 < self.y2 && self.x2 <= cells && self.y2 <= cells {
            Ok(())
        } else {
            Err(CoreError::Invalid(format!(
                "box tokens {:?} invalid for grid {cells}",
                self.as_array()
            )))
        }
    }

    pub fn as_array(&self) -> [u32; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }
}

impl From<BBoxTokens> for [u32; 4] {
    fn from(t: BBoxTokens) -> Self {
        t.as_array()
    }
}

impl From<[u32; 4]> for BBoxTokens {
    fn from([x1, y1, x2, y2]: [u32; 4]) -> Self {
        Self { x1, y1, x2, y2 }
    }
}
