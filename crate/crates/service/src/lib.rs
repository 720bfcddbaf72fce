//! REST service for the tunebench workbench.
//!
//! Serves the sampled catalog and listening histories to the LLM agents,
//! answers `/recommend` with either engine, and runs blind evaluation
//! sessions whose sheets feed the per-model report. Everything persists in a
//! file-backed [`store::FileStore`].

pub mod api;
pub mod config;
pub mod engine;
pub mod ingest;
pub mod session;
pub mod sim;
pub mod store;

pub use api::{router, spawn_server, AppState, RunningServer};
pub use config::{Config, LlmMode};
pub use engine::{Engine, EngineRun, Engines, PlaylistTrack};
pub use session::{SessionRecord, SessionView};
pub use store::{FileStore, Store, StoreRecord};
