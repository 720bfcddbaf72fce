use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicU32, Ordering};

use async_trait::async_trait;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use tunebench_core::cbf::genre_profile;
use tunebench_core::{normalize_genre, HistoryEntry, HistoryRecord, Track, UserHistory};

use super::{BackendError, BackendId, ChatBackend, ChatRequest, ChatResponse};
use crate::parse::{extract_json_array, parse_genres};
use crate::prompts::{context_sections, ContextSource, TaskOutput};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockScript {
    /// Fixed answer per task key.
    Canned(BTreeMap<String, String>),
    /// Answers computed from the prompt's context:
    /// tool tasks echo the tool result, the genre task names the five most
    /// played genres of the history, and the recommendation task picks
    /// catalogue tracks sharing those genres in an order fixed by `salt`.
    Heuristic { salt: u64 },
}

/// Deterministic backend for tests and offline runs.
#[derive(Debug)]
pub struct MockBackend {
    script: MockScript,
    failures_left: AtomicU32,
    failure_status: u16,
    calls: AtomicU32,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        Self {
            script,
            failures_left: AtomicU32::new(0),
            failure_status: 429,
            calls: AtomicU32::new(0),
        }
    }

    pub fn canned<K: Into<String>, V: Into<String>>(replies: impl IntoIterator<Item = (K, V)>) -> Self {
        Self::new(MockScript::Canned(
            replies
                .into_iter()
                .map(|(k, v)| (k.into(), v.into()))
                .collect(),
        ))
    }

    pub fn heuristic(salt: u64) -> Self {
        Self::new(MockScript::Heuristic { salt })
    }

    /// Makes the next `count` calls fail with HTTP `status`.
    pub fn failing_first(self, count: u32, status: u16) -> Self {
        self.failures_left.store(count, Ordering::SeqCst);
        Self {
            failure_status: status,
            ..self
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

#[async_trait]
impl ChatBackend for MockBackend {
    fn id(&self) -> BackendId {
        BackendId::Mock
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let failing = self
            .failures_left
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        if failing {
            return Err(BackendError::from_status(
                self.failure_status,
                "scripted failure".into(),
            ));
        }
        let text = match &self.script {
            MockScript::Canned(replies) => replies.get(&request.task).cloned().ok_or_else(|| {
                BackendError::Malformed(format!("no scripted reply for task {:?}", request.task))
            })?,
            MockScript::Heuristic { salt } => heuristic_reply(*salt, request),
        };
        Ok(ChatResponse { text, usage: None })
    }
}

fn heuristic_reply(salt: u64, request: &ChatRequest) -> String {
    let sections = context_sections(&request.prompt);
    if let Some((_, body)) = sections
        .iter()
        .find(|(source, _)| matches!(source, ContextSource::Tool(_)))
    {
        return body.clone();
    }
    let history = sections
        .iter()
        .find_map(|(_, body)| serde_json::from_str::<Vec<HistoryRecord>>(body.trim()).ok());
    match request.output {
        TaskOutput::Text => "Done.".to_string(),
        TaskOutput::Genres => {
            let genres = history.map(top_history_genres).unwrap_or_default();
            format!(
                "Based on the listening history, the 5 most preferred music genres are:\n```json\n{}\n```",
                serde_json::to_string(&genres).expect("strings serialize")
            )
        }
        TaskOutput::Recommendations => {
            let catalogue = sections
                .iter()
                .find_map(|(_, body)| serde_json::from_str::<Vec<Track>>(body.trim()).ok())
                .unwrap_or_default();
            let genres = sections
                .iter()
                .find(|(_, body)| {
                    extract_json_array(body)
                        .is_some_and(|items| !items.is_empty() && items.iter().all(|v| v.is_string()))
                })
                .map(|(_, body)| parse_genres(body, 5))
                .unwrap_or_default();
            let picks = pick_tracks(salt, catalogue, &genres, 20);
            format!(
                "Here are the recommended songs for the user:\n```json\n{}\n```",
                serde_json::to_string_pretty(&picks).expect("json values serialize")
            )
        }
    }
}

fn top_history_genres(rows: Vec<HistoryRecord>) -> Vec<String> {
    let entries = rows
        .into_iter()
        .map(|r| HistoryEntry {
            track: r.track,
            play_count: r.play_count,
            last_played: r.last_played,
        })
        .collect();
    genre_profile(&UserHistory::new("mock", entries), 5)
        .map(|p| p.labels().into_iter().map(str::to_string).collect())
        .unwrap_or_default()
}

fn pick_tracks(
    salt: u64,
    mut catalogue: Vec<Track>,
    genres: &[String],
    k: usize,
) -> Vec<serde_json::Value> {
    let wanted: HashSet<String> = genres.iter().map(|g| normalize_genre(g)).collect();
    catalogue.sort_by(|a, b| a.track_id().cmp(b.track_id()));
    let (mut matching, mut rest): (Vec<Track>, Vec<Track>) = catalogue
        .into_iter()
        .partition(|t| t.normalized_genres().iter().any(|g| wanted.contains(g)));
    let mut rng = ChaCha8Rng::seed_from_u64(salt);
    matching.shuffle(&mut rng);
    rest.shuffle(&mut rng);
    matching
        .into_iter()
        .chain(rest)
        .take(k)
        .map(|t| {
            let genre = t
                .genres()
                .iter()
                .find(|g| wanted.contains(&normalize_genre(g)))
                .or_else(|| t.genres().first())
                .cloned()
                .unwrap_or_default();
            json!({
                "genre": genre,
                "song_name": t.song_name(),
                "artist_name": t.primary_artist(),
                "liked": false,
                "known": false,
            })
        })
        .collect()
}
