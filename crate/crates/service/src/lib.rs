//! HTTP service for the suggest-then-accept loop.
//!
//! Sessions hold a canvas in memory. Suggestions are sampled from the
//! sequence model, decoded by the tokenizer and returned as base64 PNGs;
//! accepting one blends its stroke into the session canvas.

pub mod api;
pub mod error;
pub mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use hyperstroke_core::{Canvas, Hyperstroke};
use hyperstroke_seq::sample::{render_suggestions, sample, Suggestion};
use hyperstroke_seq::{SeqModel, SuggestionRequest};
use hyperstroke_vq::VqModel;
use serde::de::DeserializeOwned;
use sha2::{Digest, Sha256};

pub use api::*;
pub use error::{Result, ServiceError};
pub use state::{AppState, Models, Pending, ServiceConfig, Session};

fn b64(bytes: Vec<u8>) -> String {
    STANDARD.encode(bytes)
}

fn png_canvas(c: &Canvas) -> Result<String> {
    Ok(b64(c.encode_png().map_err(|e| ServiceError::Internal(e.to_string()))?))
}

fn parse_json<T: DeserializeOwned>(body: &Bytes) -> Result<T> {
    serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(e.to_string()))
}

fn suggestion_id(version: u64, request: &SuggestionRequest, index: usize) -> String {
    let mut h = Sha256::new();
    h.update(version.to_le_bytes());
    h.update(serde_json::to_vec(request).expect("request serializes"));
    h.update((index as u64).to_le_bytes());
    hex::encode(&h.finalize()[..8])
}

/// One sampled suggestion as served: the stroke is quantized to the 8-bit
/// image clients receive, and the preview is the cumulative composite.
pub struct Generated {
    pub suggestion: Suggestion,
    pub stroke: Hyperstroke,
    pub preview: Canvas,
}

/// Samples and renders suggestions for `canvas`. Deterministic for a seeded
/// request, so one-shot callers match the service byte for byte.
pub fn generate(vq: &VqModel, seq: &SeqModel, canvas: &Canvas, request: &SuggestionRequest) -> Result<Vec<Generated>> {
    let suggestions = sample(seq, vq, canvas, request)?;
    let strokes = suggestions
        .iter()
        .map(|s| Hyperstroke::new(s.stroke.image().quantized(), s.stroke.bbox()))
        .collect::<hyperstroke_core::Result<Vec<_>>>()
        .map_err(|e| ServiceError::Internal(e.to_string()))?;
    let previews = render_suggestions(canvas, &strokes)?;
    Ok(suggestions
        .into_iter()
        .zip(strokes)
        .zip(previews)
        .map(|((suggestion, stroke), preview)| Generated { suggestion, stroke, preview })
        .collect())
}

/// Response bodies for `generated`, with ids derived from the session
/// version and the request.
pub fn suggestion_bodies(version: u64, request: &SuggestionRequest, generated: &[Generated]) -> Result<Vec<SuggestionBody>> {
    generated
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let b = g.stroke.bbox();
            Ok(SuggestionBody {
                id: suggestion_id(version, request, i),
                bbox_tokens: g.suggestion.tokens.bbox.as_array(),
                visual_tokens: g.suggestion.tokens.visual.clone(),
                bbox_pixels: [b.x1, b.y1, b.x2, b.y2],
                stroke_png: b64(g.stroke.image().encode_png().map_err(|e| ServiceError::Internal(e.to_string()))?),
                preview_png: png_canvas(&g.preview)?,
            })
        })
        .collect()
}

async fn create_session(State(state): State<Arc<AppState>>) -> Result<(StatusCode, Json<SessionCreated>)> {
    let session_id = state.create_session()?;
    Ok((StatusCode::CREATED, Json(SessionCreated { session_id })))
}

async fn get_canvas(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<CanvasResponse>> {
    let handle = state.session(&id)?;
    let session = handle.lock().await;
    let (width, height) = session.canvas.dims();
    Ok(Json(CanvasResponse {
        width,
        height,
        canvas_png: png_canvas(&session.canvas)?,
        accepted: session.accepted.clone(),
    }))
}

async fn put_canvas(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<StatusCode> {
    let handle = state.session(&id)?;
    let canvas = Canvas::decode_png(&body).map_err(|e| ServiceError::BadImage(e.to_string()))?;
    if canvas.dims() != state.config.canvas {
        return Err(ServiceError::BadImage(format!(
            "canvas is {:?}, service expects {:?}",
            canvas.dims(),
            state.config.canvas
        )));
    }
    handle.lock().await.replace_canvas(canvas);
    Ok(StatusCode::NO_CONTENT)
}

async fn suggest(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Json<SuggestResponse>> {
    let handle = state.session(&id)?;
    let models = state.models.clone().ok_or(ServiceError::NoModel)?;
    let request: SuggestionRequest = parse_json(&body)?;
    let mut session = handle.lock().await;
    let canvas = session.canvas.clone();
    let req = request.clone();
    let generated = tokio::task::spawn_blocking(move || -> Result<_> {
        let models = models.lock().map_err(|_| ServiceError::Internal("model lock poisoned".into()))?;
        generate(&models.vq, &models.seq, &canvas, &req)
    })
    .await
    .map_err(|e| ServiceError::Internal(e.to_string()))??;
    let bodies = suggestion_bodies(session.version, &request, &generated)?;
    session.pending.clear();
    for (body, g) in bodies.iter().zip(generated) {
        session.pending.insert(
            body.id.clone(),
            Pending {
                tokens: g.suggestion.tokens,
                stroke: g.stroke,
                preview: g.preview,
            },
        );
    }
    session.updated = std::time::SystemTime::now();
    Ok(Json(SuggestResponse { suggestions: bodies }))
}

async fn accept(State(state): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> Result<Json<AcceptResponse>> {
    let handle = state.session(&id)?;
    let request: AcceptRequest = parse_json(&body)?;
    let mut session = handle.lock().await;
    session.accept(&request.suggestion_id)?;
    Ok(Json(AcceptResponse {
        canvas_png: png_canvas(&session.canvas)?,
    }))
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        model_loaded: state.models.is_some(),
        sessions: state.session_count(),
    })
}

async fn model_info(State(state): State<Arc<AppState>>) -> Result<Json<ModelInfo>> {
    let mut info = ModelInfo {
        loaded: false,
        canvas: state.config.canvas,
        k: None,
        grid_c: None,
        bbox_vocab: None,
        visual_vocab: None,
        vocab_size: None,
        n_max: None,
        vq_checkpoint_hash: None,
        seq_checkpoint_hash: None,
    };
    if let Some(models) = &state.models {
        let m = models.lock().map_err(|_| ServiceError::Internal("model lock poisoned".into()))?;
        let v = m.seq.vocab();
        info.loaded = true;
        info.k = Some(v.k);
        info.grid_c = Some(v.grid_cells);
        info.bbox_vocab = Some(v.bbox_vocab());
        info.visual_vocab = Some(v.codebook_size);
        info.vocab_size = Some(v.size());
        info.n_max = Some(m.seq.config().n_max);
        info.vq_checkpoint_hash = m.vq_hash.clone();
        info.seq_checkpoint_hash = m.seq_hash.clone();
    }
    Ok(Json(info))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/:id/canvas", get(get_canvas).put(put_canvas))
        .route("/v1/sessions/:id/suggest", post(suggest))
        .route("/v1/sessions/:id/accept", post(accept))
        .route("/v1/health", get(health))
        .route("/v1/model/info", get(model_info))
        .with_state(state)
}

#[derive(clap::Args, Clone, Debug)]
pub struct ServeArgs {
    #[arg(long, env = "HS_HOST", default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, env = "HS_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "HS_VQ_CHECKPOINT")]
    pub vq_checkpoint: Option<PathBuf>,
    #[arg(long, env = "HS_SEQ_CHECKPOINT")]
    pub seq_checkpoint: Option<PathBuf>,
    /// Square canvas side in pixels.
    #[arg(long, env = "HS_CANVAS_SIZE", default_value_t = 128)]
    pub canvas_size: usize,
    #[arg(long, env = "HS_MAX_SESSIONS", default_value_t = 64)]
    pub max_sessions: usize,
}

/// Loads the checkpoints named in `args`. Both or neither must be given.
pub fn build_state(args: &ServeArgs) -> Result<AppState> {
    let models = match (&args.vq_checkpoint, &args.seq_checkpoint) {
        (Some(vq), Some(seq)) => Some(Models::load(vq, seq)?),
        (None, None) => None,
        _ => {
            return Err(ServiceError::Startup(
                "--vq-checkpoint and --seq-checkpoint go together".into(),
            ))
        }
    };
    if let Some(m) = &models {
        let c = m.seq.vocab().grid_cells as usize;
        if args.canvas_size == 0 || args.canvas_size % c != 0 {
            return Err(ServiceError::Startup(format!(
                "canvas size {} is not a multiple of the grid count {c}",
                args.canvas_size
            )));
        }
    }
    let config = ServiceConfig {
        canvas: (args.canvas_size, args.canvas_size),
        max_sessions: args.max_sessions,
    };
    Ok(AppState::new(config, models))
}

pub async fn serve(args: ServeArgs) -> Result<()> {
    let state = build_state(&args)?;
    serve_state(state, &args.host, args.port).await
}

/// Serves an already built state until ctrl-c.
pub async fn serve_state(state: AppState, host: &str, port: u16) -> Result<()> {
    let state = Arc::new(state);
    let addr: SocketAddr = format!("{host}:{port}")
        .parse()
        .map_err(|e| ServiceError::Startup(format!("bad address: {e}")))?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .map_err(|e| ServiceError::Startup(e.to_string()))?;
    tracing::info!(%addr, model = state.models.is_some(), "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
