//! Reading structured answers out of free-form model text.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use tunebench_core::{normalize_genre, Catalog, Track};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ParseError {
    #[error("no JSON array in model output")]
    NoJsonArray { raw: String },
}

/// First JSON array found in `text`.
///
/// Leading prose, markdown fences and trailing text are skipped: every `[`
/// is tried as the start of a JSON value until one parses as an array.
pub fn extract_json_array(text: &str) -> Option<Vec<Value>> {
    text.match_indices('[').find_map(|(start, _)| {
        let mut stream = serde_json::Deserializer::from_str(&text[start..]).into_iter::<Value>();
        match stream.next() {
            Some(Ok(Value::Array(items))) => Some(items),
            _ => None,
        }
    })
}

/// Genre names from a model answer: a JSON array of strings when present,
/// otherwise list items or comma-separated names after the last colon.
pub fn parse_genres(text: &str, max: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut keep = |g: &str| {
        let g = g
            .trim()
            .trim_matches(|c: char| c == '"' || c == '\'' || c == '*' || c == '.' || c == '`')
            .trim();
        (!g.is_empty() && seen.insert(normalize_genre(g))).then(|| g.to_string())
    };
    if let Some(items) = extract_json_array(text) {
        let names: Vec<String> = items
            .iter()
            .filter_map(|v| match v {
                Value::String(s) => Some(s.as_str()),
                Value::Object(o) => o.get("genre").and_then(Value::as_str),
                _ => None,
            })
            .filter_map(&mut keep)
            .take(max)
            .collect();
        if !names.is_empty() {
            return names;
        }
    }
    let bullets: Vec<&str> = text
        .lines()
        .filter_map(|line| {
            let line = line.trim_start();
            let rest = line
                .strip_prefix("- ")
                .or_else(|| line.strip_prefix("* "))
                .or_else(|| {
                    let digits = line.find(|c: char| !c.is_ascii_digit())?;
                    (digits > 0)
                        .then(|| line[digits..].strip_prefix(". ").or_else(|| line[digits..].strip_prefix(") ")))
                        .flatten()
                })?;
            Some(rest.split(':').next().unwrap_or(rest))
        })
        .collect();
    if !bullets.is_empty() {
        return bullets.into_iter().filter_map(&mut keep).take(max).collect();
    }
    let tail = text.rsplit(':').next().unwrap_or(text);
    tail.split([',', '\n'])
        .flat_map(|part| part.split(" and "))
        .filter_map(&mut keep)
        .take(max)
        .collect()
}

/// One recommended track, resolved against the catalog.
///
/// `liked` and `known` are whatever the model emitted; evaluation replaces
/// them with the rater's answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendedTrack {
    pub rank: usize,
    pub track_id: String,
    pub song_name: String,
    pub artist_name: String,
    pub genre: String,
    pub liked: bool,
    pub known: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "reason", content = "detail", rename_all = "snake_case")]
pub enum DropReason {
    /// No catalog track has this song name and artist.
    NotInCatalog,
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedItem {
    pub item: Value,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedRecommendations {
    pub recommendations: Vec<RecommendedTrack>,
    pub dropped: Vec<DroppedItem>,
}

fn coerce_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        Value::Number(n) => match n.as_f64() {
            Some(0.0) => Some(false),
            Some(1.0) => Some(true),
            _ => None,
        },
        Value::String(s) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "yes" | "1" => Some(true),
            "false" | "no" | "0" => Some(false),
            _ => None,
        },
        _ => None,
    }
}

fn key(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lookup from normalized (song, artist) to catalog track. Any listed
/// artist matches, as do all artists joined with ", " or " & ".
struct CatalogIndex<'a> {
    by_song_artist: HashMap<(String, String), &'a Track>,
}

impl<'a> CatalogIndex<'a> {
    fn new(catalog: &'a Catalog) -> Self {
        let mut by_song_artist = HashMap::new();
        for track in catalog.tracks() {
            let song = key(track.song_name());
            let mut artists: Vec<String> = track.artist_names().iter().map(|a| key(a)).collect();
            if artists.len() > 1 {
                artists.push(artists.join(", "));
                artists.push(artists[..track.artist_names().len()].join(" & "));
            }
            for artist in artists {
                // Catalog uniqueness is on the primary artist; the first
                // track claiming a secondary-artist key keeps it.
                by_song_artist
                    .entry((song.clone(), artist))
                    .or_insert(track);
            }
        }
        Self { by_song_artist }
    }

    fn find(&self, song: &str, artist: &str) -> Option<&'a Track> {
        self.by_song_artist.get(&(key(song), key(artist))).copied()
    }
}

fn validate_item(item: &Value) -> Result<(String, String, String, bool, bool), String> {
    let obj = item.as_object().ok_or("item is not an object")?;
    let text_field = |name: &str| -> Result<String, String> {
        match obj.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("{name} is not a string")),
            None => Err(format!("missing {name}")),
        }
    };
    let flag = |name: &str| -> Result<bool, String> {
        let v = obj.get(name).ok_or_else(|| format!("missing {name}"))?;
        coerce_bool(v).ok_or_else(|| format!("{name} is not a boolean"))
    };
    let genre = text_field("genre")?;
    let song = text_field("song_name")?;
    let artist = text_field("artist_name")?;
    if song.trim().is_empty() || artist.trim().is_empty() {
        return Err("empty song_name or artist_name".into());
    }
    Ok((genre, song, artist, flag("liked")?, flag("known")?))
}

/// Validates model recommendations against the catalog.
///
/// Items that do not resolve to a catalog track are moved to the dropped
/// list and never replaced. Repeats of an already accepted track are
/// discarded, and at most `k` tracks are kept.
pub fn parse_recommendations(
    model_text: &str,
    catalog: &Catalog,
    k: usize,
) -> Result<ParsedRecommendations, ParseError> {
    let items = extract_json_array(model_text).ok_or_else(|| ParseError::NoJsonArray {
        raw: model_text.to_string(),
    })?;
    let index = CatalogIndex::new(catalog);
    let mut accepted: HashSet<&str> = HashSet::new();
    let mut out = ParsedRecommendations::default();
    for item in items {
        let (genre, song, artist, liked, known) = match validate_item(&item) {
            Ok(fields) => fields,
            Err(reason) => {
                out.dropped.push(DroppedItem {
                    item,
                    reason: DropReason::Malformed(reason),
                });
                continue;
            }
        };
        let Some(track) = index.find(&song, &artist) else {
            out.dropped.push(DroppedItem {
                item,
                reason: DropReason::NotInCatalog,
            });
            continue;
        };
        if !accepted.insert(track.track_id()) || out.recommendations.len() >= k {
            continue;
        }
        out.recommendations.push(RecommendedTrack {
            rank: out.recommendations.len() + 1,
            track_id: track.track_id().to_string(),
            song_name: track.song_name().to_string(),
            artist_name: track.primary_artist().to_string(),
            genre,
            liked,
            known,
        });
    }
    Ok(out)
}
