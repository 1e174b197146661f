//! Subcommand implementations. Each one resolves its configuration, echoes
//! it to the output directory, then runs.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use anyhow::{bail, Context, Result};
use candle_core::Device;
use hyperstroke_core::ingest::timelapse::frame_paths;
use hyperstroke_core::ingest::{extract_pairs, ingest_doodles, procedural_corpus, write_doodles, write_pairs, SketchRecord, Split};
use hyperstroke_core::manifest::{load_pairs, read_manifest};
use hyperstroke_core::synth::{make_sample, procedural_illustration, write_samples};
use hyperstroke_core::tokens::{read_token_cache, write_token_cache};
use hyperstroke_core::{blend, diff_bbox, BBox, BBoxTokens, Canvas, GridSpec, HyperstrokeTokens};
use hyperstroke_seq::train::evaluate_accuracy;
use hyperstroke_seq::{build_examples, train_seq, SeqModel, SeqTrainOptions, SuggestionRequest};
use hyperstroke_service::{build_state, generate, serve_state, suggestion_bodies, SuggestResponse};
use hyperstroke_vq::data::items_from_pairs;
use hyperstroke_vq::pipeline::{detokenize, evaluate, model_grid, reconstruct_timelapse, token_cache_header, tokenize_change, tokenize_record, vocab};
use hyperstroke_vq::{train_vq, TrainOptions, VqModel};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{resolve, RunConfig};
use crate::{Cli, Command, Failure};

pub const VQ_CHECKPOINT: &str = "vq.safetensors";
pub const SEQ_CHECKPOINT: &str = "seq.safetensors";
pub const TOKEN_CACHE: &str = "tokens.cache";
pub const VAL_TOKEN_CACHE: &str = "tokens_val.cache";

/// Tokens of one stroke as written by `encode` and read by `decode`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedStroke {
    pub bbox_pixels: BBox,
    pub tokens: HyperstrokeTokens,
    /// The stroke's ids in the flat sequence vocabulary.
    pub ids: Vec<u32>,
}

pub fn run(cli: Cli) -> Result<()> {
    let mut config = resolve(cli.config.as_deref(), &cli.overrides, cli.seed)?;
    let out = cli.out.as_path();
    match cli.command {
        Command::SynthData(a) => {
            if let Some(c) = a.crop_size {
                config.synth.crop_size = c;
            }
            config.validate().context(Failure::Config)?;
            config.echo(out)?;
            synth_data(&config, a.samples, a.sources.as_deref(), out)
        }
        Command::IngestTimelapse(a) => {
            config.echo(out)?;
            ingest_timelapse(&config, &a.frames, out)
        }
        Command::IngestDoodles(a) => {
            config.echo(out)?;
            let corpus = match (&a.corpus, a.procedural) {
                (Some(path), None) => std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .context(Failure::Data)?,
                (None, Some(n)) => {
                    let cats: Vec<&str> = a.categories.iter().map(String::as_str).collect();
                    if cats.is_empty() {
                        return Err(anyhow::anyhow!("no categories given")).context(Failure::Config);
                    }
                    procedural_corpus(config.seed, n, &cats)
                }
                _ => return Err(anyhow::anyhow!("give exactly one of --corpus or --procedural")).context(Failure::Config),
            };
            ingest(&config, &corpus, a.vq_checkpoint.as_deref(), out)
        }
        Command::TrainVq(a) => {
            if let Some(s) = a.steps {
                config.vq.steps = s;
            }
            config.echo(out)?;
            train_tokenizer(&config, &a.manifest, a.resume.as_deref(), out)
        }
        Command::TrainSeq(a) => {
            if let Some(s) = a.steps {
                config.seq.steps = s;
            }
            let vq = load_vq(&a.vq_checkpoint)?;
            let (header, entries) = read_token_cache(&a.tokens).context(Failure::Data)?;
            // Vocabulary sizes always follow the data.
            config.seq.grid_c = header.grid_c;
            config.seq.codebook_size = header.visual_vocab;
            config.seq.k = header.k;
            config.validate().context(Failure::Config)?;
            config.echo(out)?;
            train_sequence(&config, &vq, &header, &entries, a.resume.as_deref(), out)
        }
        Command::Encode(a) => {
            config.echo(out)?;
            let vq = load_vq(&a.vq_checkpoint)?;
            let before = load_canvas(&a.before)?;
            let after = load_canvas(&a.after)?;
            let bbox = match a.bbox.as_deref() {
                Some(s) => {
                    let [x1, y1, x2, y2] = parse_quad(s)?;
                    BBox::new(x1, y1, x2, y2).context(Failure::Config)?
                }
                None => diff_bbox(&before, &after, config.timelapse.min_change)
                    .context(Failure::Data)?
                    .ok_or_else(|| anyhow::anyhow!("the frames do not differ"))
                    .context(Failure::Data)?,
            };
            let grid = model_grid(&vq, before.dims()).context(Failure::Data)?;
            let tokens = tokenize_change(&vq, &grid, &before, &after, bbox)?;
            let ids = vocab(&vq)?.stroke_ids(&tokens)?;
            write_json(&out.join("tokens.json"), &EncodedStroke { bbox_pixels: bbox, tokens, ids })
        }
        Command::Decode(a) => {
            config.echo(out)?;
            let vq = load_vq(&a.vq_checkpoint)?;
            let encoded: EncodedStroke = read_json(&a.tokens)?;
            let canvas = match &a.canvas {
                Some(p) => load_canvas(p)?,
                None => {
                    let (w, h) = vq.config().canvas;
                    Canvas::white(w as usize, h as usize)
                }
            };
            let grid = model_grid(&vq, canvas.dims()).context(Failure::Data)?;
            let stroke = detokenize(&vq, &grid, &encoded.tokens).context(Failure::Data)?;
            stroke.save(out.join("stroke.png"), grid.cells())?;
            blend(&canvas, &stroke)?.save_png(out.join("composite.png"))?;
            Ok(())
        }
        Command::ReconstructTimelapse(a) => {
            config.echo(out)?;
            reconstruct(&config, &a.frames, &a.vq_checkpoint, out)
        }
        Command::EvalVq(a) => {
            config.echo(out)?;
            eval_tokenizer(&a.manifest, &a.vq_checkpoint, out)
        }
        Command::Suggest(a) => {
            config.echo(out)?;
            let mut request = match &a.request {
                Some(path) => read_json::<SuggestionRequest>(path)?,
                None => SuggestionRequest {
                    condition: a.condition.clone(),
                    prompt_strokes: match &a.prompt_strokes {
                        Some(p) => read_json(p)?,
                        None => Vec::new(),
                    },
                    prompt_bbox: None,
                    n: a.n,
                    temperature: a.temperature,
                    top_k: a.top_k,
                    seed: config.seed,
                },
            };
            if a.request.is_some() {
                if let Some(seed) = cli.seed {
                    request.seed = seed;
                }
            }
            let canvas = match &a.canvas {
                Some(p) => load_canvas(p)?,
                None => Canvas::white(a.canvas_size, a.canvas_size),
            };
            let vq = load_vq(&a.vq_checkpoint)?;
            let seq = load_seq(&a.seq_checkpoint)?;
            if a.request.is_none() {
                if let Some(s) = &a.prompt_bbox {
                    let [x1, y1, x2, y2] = parse_quad(s)?;
                    request.prompt_bbox = Some(BBoxTokens::new(x1, y1, x2, y2, seq.vocab().grid_cells).context(Failure::Config)?);
                }
            }
            suggest(&vq, &seq, &canvas, &request, out)
        }
        Command::Serve(args) => {
            let state = build_state(&args).context(Failure::Checkpoint)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(serve_state(state, &args.host, args.port))?;
            Ok(())
        }
    }
}

fn parse_quad(s: &str) -> Result<[u32; 4]> {
    let parts: Vec<u32> = s
        .split(',')
        .map(|p| p.trim().parse::<u32>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("{s:?} is not x1,y1,x2,y2"))
        .context(Failure::Config)?;
    parts
        .try_into()
        .map_err(|_| anyhow::anyhow!("{s:?} needs four values"))
        .context(Failure::Config)
}

fn load_canvas(path: &Path) -> Result<Canvas> {
    Canvas::load_png(path).context(Failure::Data)
}

fn load_vq(path: &Path) -> Result<VqModel> {
    VqModel::load(path, &Device::Cpu)
        .with_context(|| format!("loading tokenizer {}", path.display()))
        .context(Failure::Checkpoint)
}

fn load_seq(path: &Path) -> Result<SeqModel> {
    SeqModel::load(path, &Device::Cpu)
        .with_context(|| format!("loading sequence model {}", path.display()))
        .context(Failure::Checkpoint)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display())).context(Failure::Data)?;
    serde_json::from_reader(BufReader::new(file))
        .with_context(|| format!("parsing {}", path.display()))
        .context(Failure::Data)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

/// Procedural sources are this much larger than the crop so crops vary.
fn procedural_source_size(crop: usize) -> usize {
    crop + crop / 2
}

pub fn synth_data(config: &RunConfig, samples: usize, sources: Option<&Path>, out: &Path) -> Result<()> {
    let per_source = config.synth.samples_per_source.max(1);
    let images: Vec<Canvas> = match sources {
        Some(dir) => {
            let paths = frame_paths(dir).context(Failure::Data)?;
            if paths.is_empty() {
                return Err(anyhow::anyhow!("no PNG sources in {}", dir.display())).context(Failure::Data);
            }
            paths.iter().map(|p| load_canvas(p)).collect::<Result<_>>()?
        }
        None => {
            let side = procedural_source_size(config.synth.crop_size);
            (0..samples.div_ceil(per_source))
                .map(|i| procedural_illustration(config.seed.wrapping_add(i as u64), side, side))
                .collect()
        }
    };
    let generated = (0..samples)
        .into_par_iter()
        .map(|i| {
            let source = &images[(i / per_source) % images.len()];
            make_sample(config.seed.wrapping_add(i as u64), &config.synth, source)
        })
        .collect::<hyperstroke_core::Result<Vec<_>>>()
        .context(Failure::Data)?;
    let records = write_samples(out, &generated, Some(config.vq.grid_c))?;
    tracing::info!(samples = records.len(), out = %out.display(), "wrote synthetic pairs");
    Ok(())
}

pub fn ingest_timelapse(config: &RunConfig, frames: &Path, out: &Path) -> Result<()> {
    let paths = frame_paths(frames).context(Failure::Data)?;
    let loaded: Vec<_> = paths.iter().map(Canvas::load_png).collect();
    let first = loaded
        .iter()
        .find_map(|f| f.as_ref().ok())
        .ok_or_else(|| anyhow::anyhow!("no readable frames in {}", frames.display()))
        .context(Failure::Data)?;
    let grid = GridSpec::new(first.width() as u32, first.height() as u32, config.timelapse.grid_c).context(Failure::Config)?;
    let (pairs, stats) = extract_pairs(loaded, &grid, config.timelapse.min_change).context(Failure::Data)?;
    let source = frames.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    write_pairs(out, &pairs, &grid, &source)?;
    write_json(&out.join("stats.json"), &stats)?;
    tracing::info!(?stats, "mined frame pairs");
    Ok(())
}

pub fn ingest(config: &RunConfig, corpus: &str, vq: Option<&Path>, out: &Path) -> Result<()> {
    let (records, stats) = ingest_doodles(corpus.as_bytes(), &config.doodle).context(Failure::Data)?;
    write_doodles(out, &records)?;
    write_json(&out.join("stats.json"), &stats)?;
    tracing::info!(?stats, "rendered doodles");
    if let Some(path) = vq {
        let vq = load_vq(path)?;
        let canvas = (config.doodle.canvas, config.doodle.canvas);
        for (split, name) in [(Split::Train, TOKEN_CACHE), (Split::Val, VAL_TOKEN_CACHE)] {
            let chosen: Vec<&SketchRecord> = records.iter().filter(|r| r.split == split).collect();
            let entries = chosen
                .par_iter()
                .map(|r| tokenize_record(&vq, r, config.seq.n_max))
                .collect::<hyperstroke_vq::Result<Vec<_>>>()?;
            write_token_cache(out.join(name), &token_cache_header(&vq, canvas), &entries)?;
            tracing::info!(split = ?split, sketches = entries.len(), "wrote token cache");
        }
    }
    Ok(())
}

pub fn train_tokenizer(config: &RunConfig, manifest: &Path, resume: Option<&Path>, out: &Path) -> Result<()> {
    let pairs = load_pairs(manifest).context(Failure::Data)?;
    let items = items_from_pairs(&pairs, &config.vq).context(Failure::Data)?;
    let init = resume.map(load_vq).transpose()?;
    let options = TrainOptions {
        metrics: Some(out.join("vq_metrics.jsonl")),
        dump_dir: Some(out.join("nonfinite")),
        checkpoint: Some(out.join(VQ_CHECKPOINT)),
        checkpoint_every: 0,
    };
    let (_, report) = train_vq(&config.vq, &items, init, &options, |m| {
        tracing::info!(step = m.step, total = m.total, rec = m.rec, codes = m.active_codes, "vq step");
    })?;
    write_json(&out.join("vq_report.json"), &report)
}

#[derive(Serialize)]
struct SeqReport {
    steps: usize,
    final_loss: Option<f64>,
    accuracy: f64,
    bbox_accuracy: f64,
    visual_accuracy: f64,
    examples: usize,
}

pub fn train_sequence(
    config: &RunConfig,
    vq: &VqModel,
    header: &hyperstroke_core::tokens::TokenCacheHeader,
    entries: &[hyperstroke_core::tokens::TokenCacheEntry],
    resume: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let examples = build_examples(&config.seq, header, entries, vq)?;
    let init = resume.map(load_seq).transpose()?;
    let options = SeqTrainOptions {
        metrics: Some(out.join("seq_metrics.jsonl")),
        checkpoint: Some(out.join(SEQ_CHECKPOINT)),
        checkpoint_every: 0,
    };
    let (model, report) = train_seq(&config.seq, &examples, init, &options, |m| {
        tracing::info!(step = m.step, loss = m.loss, accuracy = m.accuracy, "seq step");
    })?;
    let acc = evaluate_accuracy(&model, &examples, config.seq.batch_size)?;
    write_json(
        &out.join("seq_report.json"),
        &SeqReport {
            steps: report.steps,
            final_loss: report.history.last().map(|m| m.loss),
            accuracy: acc.overall().rate(),
            bbox_accuracy: acc.bbox.rate(),
            visual_accuracy: acc.visual.rate(),
            examples: examples.len(),
        },
    )
}

pub fn reconstruct(config: &RunConfig, frames: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let vq = load_vq(checkpoint)?;
    let paths = frame_paths(frames).context(Failure::Data)?;
    if paths.len() < 2 {
        return Err(anyhow::anyhow!("need at least two frames, found {}", paths.len())).context(Failure::Data);
    }
    let loaded: Vec<_> = paths.iter().map(Canvas::load_png).collect();
    let (composite, strokes, report) = reconstruct_timelapse(&vq, loaded, config.timelapse.min_change).context(Failure::Data)?;
    let cells = vq.config().grid_c;
    for (i, stroke) in strokes.iter().enumerate() {
        stroke.save(out.join("strokes").join(format!("{i:04}.png")), cells)?;
    }
    composite.save_png(out.join("composite.png"))?;
    write_json(&out.join("report.json"), &report)?;
    tracing::info!(strokes = strokes.len(), psnr = report.psnr, "reconstructed timelapse");
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    ids: Vec<String>,
    #[serde(flatten)]
    report: hyperstroke_vq::pipeline::EvalReport,
}

pub fn eval_tokenizer(manifest: &Path, checkpoint: &Path, out: &Path) -> Result<()> {
    let vq = load_vq(checkpoint)?;
    let records = read_manifest(manifest).context(Failure::Data)?;
    if let Some(r) = records.iter().find(|r| r.grid_c.is_some_and(|c| c != vq.config().grid_c)) {
        bail!(anyhow::anyhow!(
            "record {} uses C={:?}, the tokenizer C={}",
            r.id,
            r.grid_c,
            vq.config().grid_c
        )
        .context(Failure::Data));
    }
    let pairs = load_pairs(manifest).context(Failure::Data)?;
    let triples: Vec<_> = pairs.iter().map(|p| (p.before.clone(), p.after.clone(), p.record.bbox)).collect();
    let report = evaluate(&vq, &triples).context(Failure::Data)?;
    write_json(
        &out.join("metrics.json"),
        &EvalOutput {
            ids: pairs.iter().map(|p| p.record.id.clone()).collect(),
            report,
        },
    )
}

/// Writes `suggestions.json` in the service's response format (ids as for
/// a session at version 0) plus `stroke_NN.png` and `preview_NN.png`.
pub fn suggest(vq: &VqModel, seq: &SeqModel, canvas: &Canvas, request: &SuggestionRequest, out: &Path) -> Result<()> {
    let generated = generate(vq, seq, canvas, request)?;
    let bodies = suggestion_bodies(0, request, &generated)?;
    std::fs::create_dir_all(out)?;
    for (i, g) in generated.iter().enumerate() {
        std::fs::write(out.join(format!("stroke_{i:02}.png")), g.stroke.image().encode_png()?)?;
        std::fs::write(out.join(format!("preview_{i:02}.png")), g.preview.encode_png()?)?;
    }
    write_json(&out.join("suggestions.json"), &SuggestResponse { suggestions: bodies })
}
