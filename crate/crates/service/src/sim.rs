//! Simulated rater that drives a full blind session over HTTP.
//!
//! The rater likes a track when it shares a genre with the user's five most
//! played genres, knows it when it is in the user's history, and rates a
//! playlist with its number of liked tracks.

use std::collections::{HashMap, HashSet};

use anyhow::{bail, Context};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tunebench_core::cbf::{genre_profile, DEFAULT_PROFILE_GENRES};
use tunebench_core::{HistoryRecord, Track, UserHistory};

use crate::api::ReportBody;
use crate::session::{Answer, SessionRecord, SessionView, TrackView, PLAYLIST_LEN};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RaterPolicy {
    liked_genres: HashSet<String>,
    known_tracks: HashSet<String>,
    track_genres: HashMap<String, Vec<String>>,
}

impl RaterPolicy {
    pub fn new(history: &UserHistory, catalog: &[Track]) -> anyhow::Result<Self> {
        let profile = genre_profile(history, DEFAULT_PROFILE_GENRES).context("building the rater's taste profile")?;
        Ok(Self {
            liked_genres: profile.labels().into_iter().map(str::to_string).collect(),
            known_tracks: history.entries().iter().map(|e| e.track.track_id().to_string()).collect(),
            track_genres: catalog
                .iter()
                .map(|t| (t.track_id().to_string(), t.normalized_genres()))
                .collect(),
        })
    }

    pub fn liked_genres(&self) -> Vec<&str> {
        let mut g: Vec<&str> = self.liked_genres.iter().map(String::as_str).collect();
        g.sort_unstable();
        g
    }

    pub fn judge(&self, track: &TrackView) -> Answer {
        let like = match self.track_genres.get(&track.track_id) {
            Some(genres) => genres.iter().any(|g| self.liked_genres.contains(g)),
            None => self.liked_genres.contains(&tunebench_core::normalize_genre(&track.genre)),
        };
        Answer {
            like,
            known: self.known_tracks.contains(&track.track_id),
        }
    }

    pub fn rating(&self, tracks: &[TrackView]) -> u8 {
        let liked = tracks.iter().filter(|t| self.judge(t).like).count();
        ((liked * 10) as f64 / tracks.len().max(1) as f64).round() as u8
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub session_id: String,
    pub view: SessionView,
    pub export: SessionRecord,
    pub report: ReportBody,
}

async fn read<T: DeserializeOwned>(resp: reqwest::Response, what: &str) -> anyhow::Result<T> {
    let status = resp.status();
    if !status.is_success() {
        let body = resp.text().await.unwrap_or_default();
        bail!("{what}: HTTP {status}: {body}");
    }
    resp.json().await.with_context(|| format!("{what}: malformed body"))
}

/// Creates a session for `user_id`, answers every track, rates every arm
/// and returns the export plus the report that follows.
pub async fn run_eval_sim(base_url: &str, user_id: &str, seed: u64) -> anyhow::Result<SimOutcome> {
    let http = reqwest::Client::new();
    let rows: Vec<HistoryRecord> = read(
        http.get(format!("{base_url}/getUserData/{user_id}")).send().await?,
        "reading history",
    )
    .await?;
    let history = UserHistory::from_records(user_id, rows)?;
    let catalog: Vec<Track> = read(
        http.get(format!("{base_url}/getAllDataEniac?limit={}", usize::MAX)).send().await?,
        "reading catalog",
    )
    .await?;
    let policy = RaterPolicy::new(&history, &catalog)?;

    let view: SessionView = read(
        http.post(format!("{base_url}/sessions"))
            .json(&json!({ "user_id": user_id, "seed": seed }))
            .send()
            .await?,
        "creating session",
    )
    .await?;
    let id = &view.session_id;
    for arm in &view.arms {
        if arm.tracks.len() != PLAYLIST_LEN {
            bail!("arm {} has {} tracks", arm.blind_label, arm.tracks.len());
        }
        for track in &arm.tracks {
            let answer = policy.judge(track);
            let _: serde_json::Value = read(
                http.post(format!("{base_url}/sessions/{id}/responses"))
                    .json(&json!({
                        "blind_label": arm.blind_label,
                        "track_id": track.track_id,
                        "like": answer.like,
                        "known": answer.known,
                    }))
                    .send()
                    .await?,
                "submitting a response",
            )
            .await?;
        }
        let _: serde_json::Value = read(
            http.post(format!("{base_url}/sessions/{id}/rating"))
                .json(&json!({ "blind_label": arm.blind_label, "rating": policy.rating(&arm.tracks) }))
                .send()
                .await?,
            "submitting a rating",
        )
        .await?;
    }
    let export: SessionRecord = read(
        http.get(format!("{base_url}/sessions/{id}/export")).send().await?,
        "exporting session",
    )
    .await?;
    let report: ReportBody = read(http.get(format!("{base_url}/report")).send().await?, "reading report").await?;
    Ok(SimOutcome {
        session_id: id.clone(),
        view,
        export,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use tunebench_core::HistoryEntry;

    fn track(id: &str, genres: &[&str]) -> Track {
        Track::new(id, format!("Song {id}"), ["A"], genres.iter().copied()).unwrap()
    }

    fn view(id: &str, genre: &str) -> TrackView {
        TrackView {
            track_id: id.into(),
            song_name: String::new(),
            artist_name: String::new(),
            genre: genre.into(),
        }
    }

    #[test]
    fn policy_follows_profile_and_history() {
        let history = UserHistory::new(
            "u",
            vec![
                HistoryEntry { track: track("h1", &["Pop"]), play_count: 9, last_played: None },
                HistoryEntry { track: track("h2", &["Jazz"]), play_count: 1, last_played: None },
            ],
        );
        let catalog = vec![track("c1", &["Rock", "POP"]), track("c2", &["Metal"]), track("h1", &["Pop"])];
        let p = RaterPolicy::new(&history, &catalog).unwrap();
        assert_eq!(p.liked_genres(), ["jazz", "pop"]);
        assert_eq!(p.judge(&view("c1", "rock")), Answer { like: true, known: false });
        assert_eq!(p.judge(&view("c2", "pop")), Answer { like: false, known: false });
        assert_eq!(p.judge(&view("h1", "")), Answer { like: true, known: true });
        // Unknown ids fall back to the displayed genre.
        assert_eq!(p.judge(&view("zz", " Jazz ")), Answer { like: true, known: false });
        assert_eq!(p.rating(&[view("c1", ""), view("c2", "")]), 5);
    }
}
