//! Reading collected catalog and history files.
//!
//! Catalogs come as a JSON array of track rows or as a three-column CSV
//! (song name, `;`-joined artists, `;`-joined genres). Histories are a JSON
//! array of `{user_id, track, play_count, last_played}` rows.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::domain::{normalize_text, Catalog, DomainError, HistoryRecord, Track, UserHistory};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("CSV row {row}: {reason}")]
    CsvRow { row: usize, reason: String },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

fn read_file(path: &Path) -> Result<String, IngestError> {
    std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads catalog rows from `path`, picking the CSV reader for `.csv` files.
pub fn read_tracks(path: &Path) -> Result<Vec<Track>, IngestError> {
    let text = read_file(path)?;
    let is_csv = path
        .extension()
        .is_some_and(|ext| ext.eq_ignore_ascii_case("csv"));
    if is_csv {
        tracks_from_csv(text.as_bytes())
    } else {
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn read_history_records(path: &Path) -> Result<Vec<HistoryRecord>, IngestError> {
    Ok(serde_json::from_str(&read_file(path)?)?)
}

/// Stable identifier for rows that arrive without one.
pub fn derived_track_id(song_name: &str, primary_artist: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(normalize_text(song_name).as_bytes());
    hasher.update([0u8]);
    hasher.update(normalize_text(primary_artist).as_bytes());
    let digest = hasher.finalize();
    let hex: String = digest[..8].iter().map(|b| format!("{b:02x}")).collect();
    format!("trk-{hex}")
}

fn split_list(cell: &str) -> Vec<String> {
    cell.split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Parses the CSV catalog layout. The first line is a header.
pub fn tracks_from_csv(reader: impl Read) -> Result<Vec<Track>, IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut tracks = Vec::new();
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let row = i + 2;
        let song = record.get(0).unwrap_or_default();
        let artists = split_list(record.get(1).unwrap_or_default());
        let genres = split_list(record.get(2).unwrap_or_default());
        let Some(primary) = artists.first() else {
            return Err(IngestError::CsvRow {
                row,
                reason: "no artist".into(),
            });
        };
        let id = derived_track_id(song, primary);
        tracks.push(Track::new(id, song, artists, genres)?);
    }
    Ok(tracks)
}

/// Splits history rows per user; users come back sorted by id.
pub fn group_histories(records: Vec<HistoryRecord>) -> Result<Vec<UserHistory>, DomainError> {
    let mut by_user: BTreeMap<String, Vec<HistoryRecord>> = BTreeMap::new();
    for r in records {
        by_user.entry(r.user_id.clone()).or_default().push(r);
    }
    by_user
        .into_iter()
        .map(|(user, rows)| UserHistory::from_records(user, rows))
        .collect()
}

/// Reads a catalog file, dropping repeated tracks.
pub fn read_catalog(path: &Path) -> Result<(Catalog, usize), IngestError> {
    Ok(Catalog::dedup(read_tracks(path)?))
}
