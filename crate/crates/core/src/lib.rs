//! Core building blocks for the tunebench workbench.
//!
//! * [`domain`] holds the catalog and listening-history types together with
//!   the sampling and truncation steps that turn a collected base into model
//!   inputs.
//! * [`cbf`] is the content-based recommender: TF-IDF genre vectors ranked by
//!   cosine similarity against a user's top genres.
//! * [`metrics`] scores blind playlist evaluations (like rate, novelty rate,
//!   successful novelty rate, rating) and aggregates them per model.

pub mod cbf;
pub mod domain;
pub mod ingest;
pub mod metrics;

pub use domain::{
    normalize_genre, sample_catalog, top_genres, top_played, Catalog, DomainError, HistoryEntry,
    HistoryRecord, Track, UserHistory,
};
