//! Hyperstroke data model.
//!
//! A hyperstroke is a 4-channel straight-alpha stroke image grounded by a
//! pixel bounding box. Applying it to a canvas `A` blends `I * a + A * (1 - a)`
//! inside the box and leaves every other pixel untouched. Boxes are
//! tokenized by snapping them outward onto a `C x C` grid.

pub mod error;
pub mod grid;
pub mod ingest;
pub mod manifest;
pub mod metrics;
pub mod raster;
pub mod rasterize;
pub mod stroke;
pub mod synth;
pub mod tokens;

pub use error::{CoreError, Result};
pub use grid::{BBox, BBoxTokens, GridSpec};
pub use raster::{AlphaImage, Canvas, Raster};
pub use stroke::{blend, compose, crop_and_resize, diff_bbox, Hyperstroke, Placement, DEFAULT_DIFF_THRESHOLD};
pub use tokens::{HyperstrokeTokens, TokenKind, TokenVocab};
