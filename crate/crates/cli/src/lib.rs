//! The `hyperstroke` command line: data generation, ingestion, training,
//! tokenization, evaluation, one-shot suggestions and the HTTP service.

pub mod config;
pub mod run;

use std::fmt;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use hyperstroke_core::CoreError;
use hyperstroke_seq::SeqError;
use hyperstroke_service::{ServeArgs, ServiceError};
use hyperstroke_vq::VqError;

pub use config::RunConfig;

/// Failure classes with a dedicated process exit code.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Failure {
    Config,
    Data,
    Checkpoint,
}

impl Failure {
    pub fn code(self) -> u8 {
        match self {
            Failure::Config => 2,
            Failure::Data => 3,
            Failure::Checkpoint => 4,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Failure::Config => "bad configuration",
            Failure::Data => "data error",
            Failure::Checkpoint => "checkpoint error",
        })
    }
}

/// Exit code for an error: an explicit [`Failure`] context wins, then the
/// library error kind; anything else is 1.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(f) = err.downcast_ref::<Failure>() {
        return f.code();
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<SeqError>() {
            return match e {
                SeqError::Config(_) | SeqError::Prompt(_) => 2,
                SeqError::Checkpoint { .. } | SeqError::VocabMismatch(_) => 4,
                _ => 3,
            };
        }
        if let Some(e) = cause.downcast_ref::<VqError>() {
            return match e {
                VqError::Config(_) => 2,
                VqError::Checkpoint { .. } => 4,
                _ => 3,
            };
        }
        if cause.is::<CoreError>() || cause.is::<std::io::Error>() {
            return 3;
        }
        if let Some(ServiceError::Startup(_)) = cause.downcast_ref::<ServiceError>() {
            return 2;
        }
    }
    1
}

#[derive(Parser, Debug)]
#[command(name = "hyperstroke", version, about = "Hyperstroke tokenizer, sequence model and suggestion service")]
pub struct Cli {
    /// TOML config file, or the `config.json` echoed by an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one config value, e.g. `--set vq.steps=500`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for every stochastic component.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving artifacts and the resolved config.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate synthetic (before, stroke, after) triples.
    SynthData(SynthArgs),
    /// Mine frame pairs from a directory of timelapse PNG frames.
    IngestTimelapse(FramesArgs),
    /// Render a Quick-Draw style corpus into stroke sequences.
    IngestDoodles(DoodleArgs),
    /// Train the stroke tokenizer on a pair manifest.
    TrainVq(TrainVqArgs),
    /// Train the sequence model on a token cache.
    TrainSeq(TrainSeqArgs),
    /// Tokenize one frame pair.
    Encode(EncodeArgs),
    /// Decode tokens back into a stroke.
    Decode(DecodeArgs),
    /// Re-derive every stroke of a timelapse and recompose it.
    ReconstructTimelapse(ReconstructArgs),
    /// Reconstruction metrics of a tokenizer on a pair manifest.
    EvalVq(EvalArgs),
    /// Sample suggestions for one canvas without the service.
    Suggest(SuggestArgs),
    /// Run the HTTP suggestion service.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 32)]
    pub samples: usize,
    /// Directory of source PNGs; procedural illustrations when absent.
    #[arg(long)]
    pub sources: Option<PathBuf>,
    /// Sets `synth.crop_size`.
    #[arg(long)]
    pub crop_size: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FramesArgs {
    /// Directory of frames, ordered by file name.
    #[arg(long)]
    pub frames: PathBuf,
}

#[derive(Args, Debug)]
pub struct DoodleArgs {
    /// NDJSON corpus with `word`, `key_id` and `drawing` fields.
    #[arg(long, conflicts_with = "procedural")]
    pub corpus: Option<PathBuf>,
    /// Generate this many procedural sketches instead of reading a corpus.
    #[arg(long)]
    pub procedural: Option<usize>,
    /// Categories of the procedural corpus.
    #[arg(long, value_delimiter = ',', default_value = "cat,car,tree,house,fish,star,sun,boat")]
    pub categories: Vec<String>,
    /// Also write a token cache with this tokenizer.
    #[arg(long)]
    pub vq_checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainVqArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Sets `vq.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainSeqArgs {
    #[arg(long)]
    pub tokens: PathBuf,
    #[arg(long)]
    pub vq_checkpoint: PathBuf,
    /// Sets `seq.steps`.
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EncodeArgs {
    #[arg(long)]
    pub vq_checkpoint: PathBuf,
    #[arg(long)]
    pub before: PathBuf,
    #[arg(long)]
    pub after: PathBuf,
    /// Pixel box `x1,y1,x2,y2`; detected from the frame difference when absent.
    #[arg(long)]
    pub bbox: Option<String>,
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[arg(long)]
    pub vq_checkpoint: PathBuf,
    /// JSON written by `encode`.
    #[arg(long)]
    pub tokens: PathBuf,
    /// Canvas to blend the stroke onto; white when absent.
    #[arg(long)]
    pub canvas: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub frames: PathBuf,
    #[arg(long)]
    pub vq_checkpoint: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub vq_checkpoint: PathBuf,
}

#[derive(Args, Debug)]
pub struct SuggestArgs {
    #[arg(long)]
    pub vq_checkpoint: PathBuf,
    #[arg(long)]
    pub seq_checkpoint: PathBuf,
    /// Current canvas; a white square of `--canvas-size` when absent.
    #[arg(long)]
    pub canvas: Option<PathBuf>,
    #[arg(long, default_value_t = 128)]
    pub canvas_size: usize,
    /// Full request JSON, as posted to the service. Other request flags are ignored.
    #[arg(long)]
    pub request: Option<PathBuf>,
    #[arg(long)]
    pub condition: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 1.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 100)]
    pub top_k: usize,
    /// JSON list of prompt strokes (mode b).
    #[arg(long)]
    pub prompt_strokes: Option<PathBuf>,
    /// Grid box `x1,y1,x2,y2` fixing the first stroke (mode c).
    #[arg(long)]
    pub prompt_bbox: Option<String>,
}
