//! Sessions and loaded models.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;
use std::sync::{Arc, Mutex, RwLock};
use std::time::SystemTime;

use candle_core::Device;
use hyperstroke_core::{blend, Canvas, Hyperstroke, HyperstrokeTokens};
use hyperstroke_seq::sample::check_compatible;
use hyperstroke_seq::SeqModel;
use hyperstroke_vq::VqModel;

use crate::error::{Result, ServiceError};

pub struct Models {
    pub vq: VqModel,
    pub seq: SeqModel,
    pub vq_hash: Option<String>,
    pub seq_hash: Option<String>,
}

impl Models {
    pub fn new(vq: VqModel, seq: SeqModel) -> Result<Self> {
        check_compatible(&seq, &vq).map_err(|e| ServiceError::Startup(e.to_string()))?;
        Ok(Self {
            vq,
            seq,
            vq_hash: None,
            seq_hash: None,
        })
    }

    pub fn load(vq_path: &Path, seq_path: &Path) -> Result<Self> {
        let startup = |e: &dyn std::fmt::Display| ServiceError::Startup(e.to_string());
        let vq = VqModel::load(vq_path, &Device::Cpu).map_err(|e| startup(&e))?;
        let seq = SeqModel::load(seq_path, &Device::Cpu).map_err(|e| startup(&e))?;
        let mut models = Self::new(vq, seq)?;
        models.vq_hash = Some(VqModel::checkpoint_hash(vq_path).map_err(|e| startup(&e))?);
        models.seq_hash = Some(SeqModel::checkpoint_hash(seq_path).map_err(|e| startup(&e))?);
        Ok(models)
    }
}

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    pub canvas: (usize, usize),
    pub max_sessions: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            canvas: (128, 128),
            max_sessions: 64,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Pending {
    pub tokens: HyperstrokeTokens,
    pub stroke: Hyperstroke,
    pub preview: Canvas,
}

/// One drawing. `canvas` always equals `initial` with every accepted
/// stroke blended in order.
#[derive(Clone, Debug)]
pub struct Session {
    pub initial: Canvas,
    pub canvas: Canvas,
    pub accepted: Vec<HyperstrokeTokens>,
    pub pending: BTreeMap<String, Pending>,
    /// Bumped on every canvas mutation.
    pub version: u64,
    pub created: SystemTime,
    pub updated: SystemTime,
}

impl Session {
    pub fn blank(dims: (usize, usize)) -> Self {
        let canvas = Canvas::white(dims.0, dims.1);
        let now = SystemTime::now();
        Self {
            initial: canvas.clone(),
            canvas,
            accepted: Vec::new(),
            pending: BTreeMap::new(),
            version: 0,
            created: now,
            updated: now,
        }
    }

    /// Replaces the canvas, dropping history and pending suggestions.
    pub fn replace_canvas(&mut self, canvas: Canvas) {
        self.initial = canvas.clone();
        self.canvas = canvas;
        self.accepted.clear();
        self.pending.clear();
        self.version += 1;
        self.updated = SystemTime::now();
    }

    pub fn accept(&mut self, id: &str) -> Result<()> {
        let chosen = self
            .pending
            .remove(id)
            .ok_or_else(|| ServiceError::UnknownSuggestion(id.to_string()))?;
        self.canvas = blend(&self.canvas, &chosen.stroke).map_err(|e| ServiceError::Internal(e.to_string()))?;
        self.accepted.push(chosen.tokens);
        self.pending.clear();
        self.version += 1;
        self.updated = SystemTime::now();
        Ok(())
    }
}

pub type SessionHandle = Arc<tokio::sync::Mutex<Session>>;

pub struct AppState {
    pub config: ServiceConfig,
    pub models: Option<Arc<Mutex<Models>>>,
    sessions: RwLock<HashMap<String, SessionHandle>>,
}

impl AppState {
    pub fn new(config: ServiceConfig, models: Option<Models>) -> Self {
        Self {
            config,
            models: models.map(|m| Arc::new(Mutex::new(m))),
            sessions: RwLock::new(HashMap::new()),
        }
    }

    pub fn create_session(&self) -> Result<String> {
        let mut sessions = self.sessions.write().expect("session table poisoned");
        if sessions.len() >= self.config.max_sessions {
            return Err(ServiceError::Capacity(self.config.max_sessions));
        }
        let id = uuid::Uuid::new_v4().simple().to_string();
        sessions.insert(
            id.clone(),
            Arc::new(tokio::sync::Mutex::new(Session::blank(self.config.canvas))),
        );
        Ok(id)
    }

    pub fn session(&self, id: &str) -> Result<SessionHandle> {
        self.sessions
            .read()
            .expect("session table poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::UnknownSession(id.to_string()))
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session table poisoned").len()
    }
}
