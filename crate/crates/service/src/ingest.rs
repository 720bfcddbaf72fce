//! Turns a collected base into the served catalog and histories.

use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use tunebench_core::ingest::{group_histories, read_catalog, read_history_records};
use tunebench_core::{sample_catalog, top_genres, top_played};

use crate::store::{Store, StoreRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IngestOptions {
    pub seed: u64,
    /// Genres allowed into the sample, by track count.
    pub top_genres: usize,
    pub sample: usize,
    /// History rows kept per user, most played first.
    pub top_played: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            seed: 42,
            top_genres: 20,
            sample: 300,
            top_played: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestSummary {
    pub tracks_read: usize,
    pub duplicates_skipped: usize,
    pub genres: Vec<String>,
    pub catalog_size: usize,
    pub users: usize,
    pub history_rows: usize,
}

pub fn ingest(
    store: &dyn Store,
    catalog_path: &Path,
    histories_path: &Path,
    options: IngestOptions,
) -> anyhow::Result<IngestSummary> {
    let (base, skipped) =
        read_catalog(catalog_path).with_context(|| format!("reading {}", catalog_path.display()))?;
    let genres = top_genres(&base, options.top_genres).context("selecting genres")?;
    let catalog = sample_catalog(&base, &genres, options.sample, options.seed).context("sampling the catalog")?;

    let records = read_history_records(histories_path)
        .with_context(|| format!("reading {}", histories_path.display()))?;
    let histories = group_histories(records).context("grouping histories")?;

    let mut history_rows = 0;
    let users = histories.len();
    store.put(StoreRecord::Catalog(catalog.clone()))?;
    for history in histories {
        let kept = top_played(&history, options.top_played);
        history_rows += kept.len();
        store.put(StoreRecord::History(kept))?;
    }
    let summary = IngestSummary {
        tracks_read: base.len() + skipped,
        duplicates_skipped: skipped,
        genres,
        catalog_size: catalog.len(),
        users,
        history_rows,
    };
    tracing::info!(?summary, "ingest finished");
    Ok(summary)
}
