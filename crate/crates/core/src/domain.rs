//! Catalog and listening-history types.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, Utc};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DomainError {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("invalid track {track_id:?}: {reason}")]
    InvalidTrack { track_id: String, reason: String },
    #[error("duplicate track_id {0:?}")]
    DuplicateTrackId(String),
    #[error("tracks {first:?} and {second:?} share song name and primary artist")]
    DuplicateSong { first: String, second: String },
    #[error("history row for user {found:?} inside history of {expected:?}")]
    MixedUsers { expected: String, found: String },
}

/// Trims, case-folds and collapses inner whitespace.
///
/// A genre label is one atomic token: "Funk Metal" stays a single term and is
/// never split into "funk" and "metal".
pub fn normalize_genre(label: &str) -> String {
    normalize_text(label)
}

pub(crate) fn normalize_text(text: &str) -> String {
    text.split_whitespace()
        .map(|word| word.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// Wire representation of a catalog row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub track_id: String,
    pub song_name: String,
    pub artist_names: Vec<String>,
    #[serde(default)]
    pub genres: Vec<String>,
}

/// One catalog entry.
///
/// Names are stored trimmed; genre labels keep their original casing but are
/// unique under [`normalize_genre`], and empty labels are dropped.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "TrackRecord")]
pub struct Track {
    track_id: String,
    song_name: String,
    artist_names: Vec<String>,
    genres: Vec<String>,
}

impl Track {
    pub fn new<A: Into<String>, G: Into<String>>(
        track_id: impl Into<String>,
        song_name: impl Into<String>,
        artist_names: impl IntoIterator<Item = A>,
        genres: impl IntoIterator<Item = G>,
    ) -> Result<Self, DomainError> {
        let track_id = track_id.into();
        let invalid = |reason: &str| DomainError::InvalidTrack {
            track_id: track_id.clone(),
            reason: reason.to_string(),
        };
        if track_id.trim().is_empty() {
            return Err(invalid("empty track_id"));
        }
        let song_name = song_name.into().trim().to_string();
        if song_name.is_empty() {
            return Err(invalid("empty song_name"));
        }
        let artist_names: Vec<String> = artist_names
            .into_iter()
            .map(|a| a.into().trim().to_string())
            .collect();
        if artist_names.is_empty() {
            return Err(invalid("no artists"));
        }
        if artist_names.iter().any(String::is_empty) {
            return Err(invalid("empty artist name"));
        }
        let mut seen = HashSet::new();
        let genres = genres
            .into_iter()
            .map(|g| g.into().trim().to_string())
            .filter(|g| {
                let key = normalize_genre(g);
                !key.is_empty() && seen.insert(key)
            })
            .collect();
        Ok(Self {
            track_id,
            song_name,
            artist_names,
            genres,
        })
    }

    pub fn track_id(&self) -> &str {
        &self.track_id
    }

    pub fn song_name(&self) -> &str {
        &self.song_name
    }

    pub fn artist_names(&self) -> &[String] {
        &self.artist_names
    }

    pub fn primary_artist(&self) -> &str {
        &self.artist_names[0]
    }

    /// Genre labels as ingested (trimmed, deduplicated).
    pub fn genres(&self) -> &[String] {
        &self.genres
    }

    pub fn normalized_genres(&self) -> Vec<String> {
        self.genres.iter().map(|g| normalize_genre(g)).collect()
    }

    /// Normalized (song name, primary artist) pair used for catalog uniqueness
    /// and for matching free-text recommendations back to tracks.
    pub fn song_key(&self) -> (String, String) {
        (
            normalize_text(&self.song_name),
            normalize_text(self.primary_artist()),
        )
    }

    pub fn to_record(&self) -> TrackRecord {
        TrackRecord {
            track_id: self.track_id.clone(),
            song_name: self.song_name.clone(),
            artist_names: self.artist_names.clone(),
            genres: self.genres.clone(),
        }
    }
}

impl TryFrom<TrackRecord> for Track {
    type Error = DomainError;

    fn try_from(r: TrackRecord) -> Result<Self, Self::Error> {
        Track::new(r.track_id, r.song_name, r.artist_names, r.genres)
    }
}

/// Ordered set of unique tracks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Track>", into = "Vec<Track>")]
pub struct Catalog {
    tracks: Vec<Track>,
}

impl Catalog {
    pub fn new(tracks: Vec<Track>) -> Result<Self, DomainError> {
        let mut ids = HashSet::new();
        let mut songs: HashMap<(String, String), &str> = HashMap::new();
        for track in &tracks {
            if !ids.insert(track.track_id()) {
                return Err(DomainError::DuplicateTrackId(track.track_id.clone()));
            }
            if let Some(first) = songs.insert(track.song_key(), track.track_id()) {
                return Err(DomainError::DuplicateSong {
                    first: first.to_string(),
                    second: track.track_id.clone(),
                });
            }
        }
        Ok(Self { tracks })
    }

    /// Builds a catalog keeping the first occurrence of every track_id and
    /// every (song, primary artist) pair. Returns the number of rows skipped.
    pub fn dedup(tracks: impl IntoIterator<Item = Track>) -> (Self, usize) {
        let mut ids = HashSet::new();
        let mut songs = HashSet::new();
        let mut kept = Vec::new();
        let mut skipped = 0;
        for track in tracks {
            if ids.contains(track.track_id()) || songs.contains(&track.song_key()) {
                skipped += 1;
                continue;
            }
            ids.insert(track.track_id.clone());
            songs.insert(track.song_key());
            kept.push(track);
        }
        (Self { tracks: kept }, skipped)
    }

    pub fn tracks(&self) -> &[Track] {
        &self.tracks
    }

    pub fn len(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.is_empty()
    }

    pub fn get(&self, track_id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.track_id == track_id)
    }

    /// First `limit` tracks in catalog order.
    pub fn head(&self, limit: usize) -> &[Track] {
        &self.tracks[..limit.min(self.tracks.len())]
    }
}

impl TryFrom<Vec<Track>> for Catalog {
    type Error = DomainError;

    fn try_from(tracks: Vec<Track>) -> Result<Self, Self::Error> {
        Catalog::new(tracks)
    }
}

impl From<Catalog> for Vec<Track> {
    fn from(c: Catalog) -> Self {
        c.tracks
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub track: Track,
    pub play_count: u64,
    pub last_played: Option<DateTime<Utc>>,
}

impl HistoryEntry {
    /// play_count descending, then last_played descending (missing sorts
    /// last), then track_id ascending.
    fn ranking(a: &Self, b: &Self) -> Ordering {
        b.play_count
            .cmp(&a.play_count)
            .then_with(|| b.last_played.cmp(&a.last_played))
            .then_with(|| a.track.track_id.cmp(&b.track.track_id))
    }
}

/// Wire representation of one history row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub user_id: String,
    pub track: Track,
    pub play_count: u64,
    #[serde(default)]
    pub last_played: Option<DateTime<Utc>>,
}

/// A user's listening history, always kept in most-played-first order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "UserHistoryRepr")]
pub struct UserHistory {
    user_id: String,
    entries: Vec<HistoryEntry>,
}

#[derive(Deserialize)]
struct UserHistoryRepr {
    user_id: String,
    entries: Vec<HistoryEntry>,
}

impl TryFrom<UserHistoryRepr> for UserHistory {
    type Error = DomainError;

    fn try_from(r: UserHistoryRepr) -> Result<Self, Self::Error> {
        Ok(UserHistory::new(r.user_id, r.entries))
    }
}

impl UserHistory {
    /// Sorts the entries and merges repeated plays of the same track
    /// (play counts add up, the latest timestamp wins).
    pub fn new(user_id: impl Into<String>, entries: Vec<HistoryEntry>) -> Self {
        let mut merged: Vec<HistoryEntry> = Vec::with_capacity(entries.len());
        let mut position: HashMap<String, usize> = HashMap::new();
        for entry in entries {
            match position.get(entry.track.track_id()) {
                Some(&i) => {
                    let existing = &mut merged[i];
                    existing.play_count += entry.play_count;
                    existing.last_played = existing.last_played.max(entry.last_played);
                }
                None => {
                    position.insert(entry.track.track_id.clone(), merged.len());
                    merged.push(entry);
                }
            }
        }
        merged.sort_by(HistoryEntry::ranking);
        Self {
            user_id: user_id.into(),
            entries: merged,
        }
    }

    /// Groups wire rows of one user.
    pub fn from_records(
        user_id: impl Into<String>,
        records: Vec<HistoryRecord>,
    ) -> Result<Self, DomainError> {
        let user_id = user_id.into();
        let mut entries = Vec::with_capacity(records.len());
        for r in records {
            if r.user_id != user_id {
                return Err(DomainError::MixedUsers {
                    expected: user_id,
                    found: r.user_id,
                });
            }
            entries.push(HistoryEntry {
                track: r.track,
                play_count: r.play_count,
                last_played: r.last_played,
            });
        }
        Ok(Self::new(user_id, entries))
    }

    pub fn user_id(&self) -> &str {
        &self.user_id
    }

    pub fn entries(&self) -> &[HistoryEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_records(&self) -> Vec<HistoryRecord> {
        self.entries
            .iter()
            .map(|e| HistoryRecord {
                user_id: self.user_id.clone(),
                track: e.track.clone(),
                play_count: e.play_count,
                last_played: e.last_played,
            })
            .collect()
    }
}

/// The `k` genres carried by the most catalog tracks, ties broken by label.
pub fn top_genres(catalog: &Catalog, k: usize) -> Result<Vec<String>, DomainError> {
    if catalog.is_empty() {
        return Err(DomainError::EmptyInput("catalog has no tracks"));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for track in catalog.tracks() {
        for genre in track.normalized_genres() {
            *counts.entry(genre).or_default() += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    // BTreeMap order is lexicographic, and the sort is stable.
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    Ok(ranked.into_iter().take(k).map(|(g, _)| g).collect())
}

/// Uniform sample without replacement of tracks carrying at least one
/// allowed genre. Selected tracks keep their relative catalog order.
pub fn sample_catalog<S: AsRef<str>>(
    catalog: &Catalog,
    allowed_genres: &[S],
    n: usize,
    seed: u64,
) -> Result<Catalog, DomainError> {
    let allowed: BTreeSet<String> = allowed_genres
        .iter()
        .map(|g| normalize_genre(g.as_ref()))
        .collect();
    let eligible: Vec<&Track> = catalog
        .tracks()
        .iter()
        .filter(|t| t.normalized_genres().iter().any(|g| allowed.contains(g)))
        .collect();
    if eligible.is_empty() {
        return Err(DomainError::EmptyInput("no track matches the allowed genres"));
    }
    let amount = n.min(eligible.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = index::sample(&mut rng, eligible.len(), amount).into_vec();
    picked.sort_unstable();
    let tracks = picked.into_iter().map(|i| eligible[i].clone()).collect();
    Ok(Catalog { tracks })
}

/// The `n` most played entries.
pub fn top_played(history: &UserHistory, n: usize) -> UserHistory {
    UserHistory {
        user_id: history.user_id.clone(),
        entries: history.entries.iter().take(n).cloned().collect(),
    }
}
