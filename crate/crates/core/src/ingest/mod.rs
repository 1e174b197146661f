//! Real-data ingest: timelapse frame pairs and vector doodle corpora.

pub mod doodle;
pub mod timelapse;

pub use doodle::{ingest_doodles, procedural_corpus, read_doodles, write_doodles, DoodleConfig, DoodleStats, SketchRecord, Split};
pub use timelapse::{extract_pairs, load_frames, write_pairs, FramePair, PairStats};
