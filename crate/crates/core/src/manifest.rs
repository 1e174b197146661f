//! JSONL manifests describing frame-pair training data.
//!
//! One record per line. Paths are relative to the manifest's directory.
//!
//! ```json
//! {"id":"0000","before":"before/0000.png","after":"after/0000.png",
//!  "stroke":"stroke/0000.png","bbox":[3,4,40,52],"base_opacity":0.4,
//!  "supervision":"direct","seed":17}
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::grid::{BBox, BBoxTokens};
use crate::raster::{AlphaImage, Canvas};
use crate::stroke::Hyperstroke;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Supervision {
    /// Ground-truth stroke available.
    Direct,
    /// Only the frame pair is known; the stroke is learned through blending.
    Implicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub before: String,
    pub after: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stroke: Option<String>,
    pub bbox: BBox,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox_tokens: Option<BBoxTokens>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_c: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_opacity: Option<f32>,
    pub supervision: Supervision,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

/// A manifest record with its images loaded.
#[derive(Clone, Debug)]
pub struct LoadedPair {
    pub record: ManifestRecord,
    pub before: Canvas,
    pub after: Canvas,
    pub stroke: Option<Hyperstroke>,
}

pub fn write_manifest(path: impl AsRef<Path>, records: &[ManifestRecord]) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| CoreError::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| CoreError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        serde_json::to_writer(&mut out, record).map_err(|e| CoreError::json(path.display().to_string(), e))?;
        out.write_all(b"\n").map_err(|e| CoreError::io(path, e))?;
    }
    out.flush().map_err(|e| CoreError::io(path, e))
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| CoreError::io(path, e))?;
    let mut records = Vec::new();
    for (line_no, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CoreError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line)
            .map_err(|e| CoreError::json(format!("{}:{}", path.display(), line_no + 1), e))?;
        records.push(record);
    }
    Ok(records)
}

impl ManifestRecord {
    pub fn load(&self, root: &Path) -> Result<LoadedPair> {
        let before = Canvas::load_png(root.join(&self.before))?;
        let after = Canvas::load_png(root.join(&self.after))?;
        let stroke = match &self.stroke {
            Some(rel) => Some(Hyperstroke::new(AlphaImage::load_png(root.join(rel))?, self.bbox)?),
            None => None,
        };
        if self.supervision == Supervision::Direct && stroke.is_none() {
            return Err(CoreError::Invalid(format!(
                "record {} is direct but has no stroke",
                self.id
            )));
        }
        Ok(LoadedPair {
            record: self.clone(),
            before,
            after,
            stroke,
        })
    }
}

/// Loads every record of a manifest, resolving paths against its directory.
pub fn load_pairs(manifest: impl AsRef<Path>) -> Result<Vec<LoadedPair>> {
    let manifest = manifest.as_ref();
    let root: PathBuf = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
    read_manifest(manifest)?.iter().map(|r| r.load(&root)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(i: usize) -> ManifestRecord {
        ManifestRecord {
            id: format!("{i:04}"),
            before: format!("before/{i:04}.png"),
            after: format!("after/{i:04}.png"),
            stroke: Some(format!("stroke/{i:04}.png")),
            bbox: BBox::new(1, 2, 30, 40).unwrap(),
            bbox_tokens: None,
            grid_c: Some(16),
            base_opacity: Some(0.4),
            supervision: Supervision::Direct,
            seed: Some(i as u64),
            source: None,
        }
    }

    #[test]
    fn empty_and_small_manifests_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let empty = dir.path().join("empty.jsonl");
        write_manifest(&empty, &[]).unwrap();
        assert_eq!(std::fs::read(&empty).unwrap().len(), 0);
        assert!(read_manifest(&empty).unwrap().is_empty());

        let three: Vec<_> = (0..3).map(record).collect();
        let path = dir.path().join("m.jsonl");
        write_manifest(&path, &three).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
        assert_eq!(read_manifest(&path).unwrap(), three);
    }

    #[test]
    fn supervision_is_lowercase() {
        let line = serde_json::to_string(&record(0)).unwrap();
        assert!(line.contains(r#""supervision":"direct""#));
    }

    #[test]
    fn bad_line_reports_location() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        std::fs::write(&path, "{\"id\":1}\n").unwrap();
        let err = read_manifest(&path).unwrap_err().to_string();
        assert!(err.contains("bad.jsonl:1"), "{err}");
    }
}
