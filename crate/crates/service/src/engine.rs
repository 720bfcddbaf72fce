//! Recommendation engines behind `/recommend` and the evaluation sessions.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tunebench_agents::backend::backend_from_env;
use tunebench_agents::pipeline::TranscriptEntry;
use tunebench_agents::{
    BackendId, ChatBackend, DroppedItem, MockBackend, Pipeline, PipelineConfig, PromptBook, RetryPolicy,
};
use tunebench_core::cbf::{self, CbfConfig};
use tunebench_core::metrics::ModelLabel;

use crate::config::{Config, LlmMode};
use crate::store::{Store, StoreError};

pub const DEFAULT_RECOMMENDATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Traditional,
    Llama,
    Gemini,
    Mock,
}

impl Engine {
    pub const ALL: [Engine; 4] = [Engine::Traditional, Engine::Llama, Engine::Gemini, Engine::Mock];

    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Traditional => "traditional",
            Engine::Llama => "llama",
            Engine::Gemini => "gemini",
            Engine::Mock => "mock",
        }
    }

    /// Label under which evaluation sheets of this engine are aggregated.
    pub fn model_label(self) -> Option<ModelLabel> {
        match self {
            Engine::Traditional => Some(ModelLabel::Traditional),
            Engine::Llama => Some(ModelLabel::Llama),
            Engine::Gemini => Some(ModelLabel::Gemini),
            Engine::Mock => None,
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Engine::ALL
            .into_iter()
            .find(|e| e.as_str().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| format!("unknown engine {s:?}; expected traditional, llama, gemini or mock"))
    }
}

/// One recommended track as returned to clients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaylistTrack {
    pub rank: usize,
    pub track_id: String,
    pub song_name: String,
    pub artist_name: String,
    pub genre: String,
    /// Cosine score; only the content-based engine has one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EngineRun {
    pub engine: Engine,
    pub tracks: Vec<PlaylistTrack>,
    /// Wall-clock time of the engine call alone.
    pub inference_seconds: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inferred_genres: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dropped: Vec<DroppedItem>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub transcript: Vec<TranscriptEntry>,
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("{engine} is not configured: {reason}")]
    NotConfigured { engine: Engine, reason: String },
    #[error("{0}")]
    NotFound(String),
    #[error("{engine} failed{}: {message}", task.as_ref().map(|t| format!(" at task {t:?}")).unwrap_or_default())]
    Failed {
        engine: Engine,
        message: String,
        task: Option<String>,
        transcript: Vec<TranscriptEntry>,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct Engines {
    store: Arc<dyn Store>,
    book: Arc<PromptBook>,
    config: Config,
    base_url: String,
    retry: RetryPolicy,
    llama: Result<Arc<dyn ChatBackend>, String>,
    gemini: Result<Arc<dyn ChatBackend>, String>,
    mock: Arc<dyn ChatBackend>,
}

impl Engines {
    /// `base_url` is where this service itself is reachable; the LLM agents
    /// read the catalogue and histories from there.
    pub fn new(store: Arc<dyn Store>, book: Arc<PromptBook>, config: Config, base_url: impl Into<String>) -> Self {
        let hosted = |id: BackendId, salt: u64| -> Result<Arc<dyn ChatBackend>, String> {
            match config.llm_mode {
                LlmMode::Offline => Ok(Arc::new(MockBackend::heuristic(salt))),
                LlmMode::Live => backend_from_env(id, |k| config.backend_var(k), config.engine_timeout)
                    .map(Arc::from)
                    .map_err(|e| e.to_string()),
            }
        };
        Self {
            llama: hosted(BackendId::Llama33_70bVersatile, 1),
            gemini: hosted(BackendId::Gemini20Flash, 2),
            mock: Arc::new(MockBackend::heuristic(0)),
            store,
            book,
            base_url: base_url.into(),
            retry: RetryPolicy::default(),
            config,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    /// Fails fast when the catalog or the user's history is missing, so
    /// such requests are not reported as engine failures.
    pub fn check_inputs(&self, user_id: &str) -> Result<(), EngineError> {
        if self.store.catalog()?.is_none() {
            return Err(EngineError::NotFound("no catalog has been ingested".into()));
        }
        if self.store.history(user_id)?.is_none() {
            return Err(EngineError::NotFound(format!("unknown user {user_id:?}")));
        }
        Ok(())
    }

    pub async fn run(&self, engine: Engine, user_id: &str, k: usize) -> Result<EngineRun, EngineError> {
        self.check_inputs(user_id)?;
        match engine {
            Engine::Traditional => self.run_traditional(user_id, k),
            Engine::Llama => self.run_pipeline(engine, self.llama.clone(), user_id, k).await,
            Engine::Gemini => self.run_pipeline(engine, self.gemini.clone(), user_id, k).await,
            Engine::Mock => self.run_pipeline(engine, Ok(self.mock.clone()), user_id, k).await,
        }
    }

    fn run_traditional(&self, user_id: &str, k: usize) -> Result<EngineRun, EngineError> {
        let started = Instant::now();
        let catalog = self
            .store
            .catalog()?
            .ok_or_else(|| EngineError::NotFound("no catalog has been ingested".into()))?;
        let history = self
            .store
            .history(user_id)?
            .ok_or_else(|| EngineError::NotFound(format!("unknown user {user_id:?}")))?;
        let config = CbfConfig {
            recommendations: k,
            ..CbfConfig::default()
        };
        let ranked = cbf::recommend(&catalog, &history, config).map_err(|e| EngineError::Failed {
            engine: Engine::Traditional,
            message: e.to_string(),
            task: None,
            transcript: Vec::new(),
        })?;
        let inference_seconds = started.elapsed().as_secs_f64();
        Ok(EngineRun {
            engine: Engine::Traditional,
            tracks: ranked
                .into_iter()
                .map(|r| PlaylistTrack {
                    rank: r.rank,
                    track_id: r.track.track_id().to_string(),
                    song_name: r.track.song_name().to_string(),
                    artist_name: r.track.primary_artist().to_string(),
                    genre: r.genre,
                    score: Some(r.score),
                })
                .collect(),
            inference_seconds,
            inferred_genres: Vec::new(),
            dropped: Vec::new(),
            transcript: Vec::new(),
        })
    }

    async fn run_pipeline(
        &self,
        engine: Engine,
        backend: Result<Arc<dyn ChatBackend>, String>,
        user_id: &str,
        k: usize,
    ) -> Result<EngineRun, EngineError> {
        let backend = backend.map_err(|reason| EngineError::NotConfigured { engine, reason })?;
        let pipeline = Pipeline::new(
            self.book.clone(),
            PipelineConfig {
                base_url: self.base_url.clone(),
                recommendations: k,
                retry: self.retry,
                tool_timeout: self.config.engine_timeout,
            },
        );
        let started = Instant::now();
        let outcome = tokio::time::timeout(self.config.engine_timeout, pipeline.run(user_id, backend.as_ref())).await;
        let inference_seconds = started.elapsed().as_secs_f64();
        let result = match outcome {
            Err(_) => {
                return Err(EngineError::Failed {
                    engine,
                    message: format!("timed out after {:?}", self.config.engine_timeout),
                    task: None,
                    transcript: Vec::new(),
                })
            }
            Ok(Err(e)) => {
                tracing::warn!(%engine, user = user_id, task = %e.task, error = %e.source, "pipeline failed");
                return Err(EngineError::Failed {
                    engine,
                    message: e.source.to_string(),
                    task: Some(e.task),
                    transcript: e.transcript,
                });
            }
            Ok(Ok(result)) => result,
        };
        Ok(EngineRun {
            engine,
            tracks: result
                .recommendations
                .into_iter()
                .map(|r| PlaylistTrack {
                    rank: r.rank,
                    track_id: r.track_id,
                    song_name: r.song_name,
                    artist_name: r.artist_name,
                    genre: r.genre,
                    score: None,
                })
                .collect(),
            inference_seconds,
            inferred_genres: result.inferred_genres,
            dropped: result.dropped_hallucinations,
            transcript: result.transcript,
        })
    }
}
