//! Blind evaluation sessions.
//!
//! A session holds one playlist per model. Raters only ever see opaque arm
//! labels; which model produced an arm is stored server-side and released
//! through the export once every arm has been answered and rated.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tunebench_core::metrics::{EvaluationSheet, ModelLabel, TrackResponse, MAX_RATING};

use crate::engine::{EngineRun, PlaylistTrack};

/// Tracks per evaluated playlist.
pub const PLAYLIST_LEN: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    InProgress,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub like: bool,
    pub known: bool,
}

/// Server-side arm, including the hidden model identity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmRecord {
    pub blind_label: String,
    pub model_label: ModelLabel,
    /// The evaluated playlist: the engine's top ranks.
    pub tracks: Vec<PlaylistTrack>,
    /// Everything the engine returned.
    pub full_list: Vec<PlaylistTrack>,
    pub inference_seconds: f64,
    pub responses: BTreeMap<String, Answer>,
    pub rating: Option<u8>,
}

impl ArmRecord {
    pub fn is_complete(&self) -> bool {
        self.responses.len() == self.tracks.len() && self.rating.is_some()
    }

    fn sheet(&self, user_id: &str) -> EvaluationSheet {
        EvaluationSheet {
            user_id: user_id.to_string(),
            model_label: self.model_label,
            responses: self
                .tracks
                .iter()
                .map(|t| {
                    let a = self.responses[&t.track_id];
                    TrackResponse {
                        track_id: t.track_id.clone(),
                        like: a.like,
                        known: a.known,
                    }
                })
                .collect(),
            rating: self.rating.expect("complete arm has a rating"),
            inference_seconds: self.inference_seconds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub user_id: String,
    pub seed: u64,
    pub state: SessionState,
    /// Blind labels in the order arms are shown to the rater.
    pub presentation_order: Vec<String>,
    pub arms: Vec<ArmRecord>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SessionError {
    #[error("{model} returned {got} tracks, a playlist needs {PLAYLIST_LEN}")]
    ShortPlaylist { model: ModelLabel, got: usize },
    #[error("unknown arm {0:?}")]
    UnknownArm(String),
    #[error("track {track_id:?} is not in arm {blind_label:?}")]
    UnknownTrack { blind_label: String, track_id: String },
    #[error("rating {0} is outside 0..={MAX_RATING}")]
    RatingOutOfRange(i64),
    #[error("session is already complete")]
    AlreadyComplete,
}

/// Acknowledgement of one response or rating.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Progress {
    pub session_id: String,
    pub blind_label: String,
    pub answered: usize,
    pub rating: Option<u8>,
    pub arm_complete: bool,
    pub session_complete: bool,
}

fn blind_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    // Upper-case hex cannot spell any model or engine name.
    let mut seen = HashSet::new();
    let mut labels = Vec::with_capacity(n);
    while labels.len() < n {
        let label = format!("{:08X}", rng.random::<u32>());
        if seen.insert(label.clone()) {
            labels.push(label);
        }
    }
    labels
}

impl SessionRecord {
    /// Builds a session from one engine run per model. Each playlist keeps
    /// the top [`PLAYLIST_LEN`] ranks; labels and presentation order come
    /// from `seed`.
    pub fn assemble(
        session_id: impl Into<String>,
        user_id: impl Into<String>,
        seed: u64,
        runs: Vec<(ModelLabel, EngineRun)>,
    ) -> Result<Self, SessionError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels = blind_labels(&mut rng, runs.len());
        let mut arms = Vec::with_capacity(runs.len());
        for ((model_label, run), blind_label) in runs.into_iter().zip(labels) {
            let mut full_list = run.tracks;
            full_list.sort_by_key(|t| t.rank);
            if full_list.len() < PLAYLIST_LEN {
                return Err(SessionError::ShortPlaylist {
                    model: model_label,
                    got: full_list.len(),
                });
            }
            arms.push(ArmRecord {
                blind_label,
                model_label,
                tracks: full_list[..PLAYLIST_LEN].to_vec(),
                full_list,
                inference_seconds: run.inference_seconds,
                responses: BTreeMap::new(),
                rating: None,
            });
        }
        let mut presentation_order: Vec<String> = arms.iter().map(|a| a.blind_label.clone()).collect();
        presentation_order.shuffle(&mut rng);
        Ok(Self {
            session_id: session_id.into(),
            user_id: user_id.into(),
            seed,
            state: SessionState::InProgress,
            presentation_order,
            arms,
        })
    }

    pub fn arm(&self, blind_label: &str) -> Option<&ArmRecord> {
        self.arms.iter().find(|a| a.blind_label == blind_label)
    }

    fn arm_mut(&mut self, blind_label: &str) -> Result<&mut ArmRecord, SessionError> {
        if self.state == SessionState::Complete {
            return Err(SessionError::AlreadyComplete);
        }
        self.arms
            .iter_mut()
            .find(|a| a.blind_label == blind_label)
            .ok_or_else(|| SessionError::UnknownArm(blind_label.to_string()))
    }

    /// Records (or overwrites) the answer for one track.
    pub fn record_response(
        &mut self,
        blind_label: &str,
        track_id: &str,
        answer: Answer,
    ) -> Result<Progress, SessionError> {
        let arm = self.arm_mut(blind_label)?;
        if !arm.tracks.iter().any(|t| t.track_id == track_id) {
            return Err(SessionError::UnknownTrack {
                blind_label: blind_label.to_string(),
                track_id: track_id.to_string(),
            });
        }
        arm.responses.insert(track_id.to_string(), answer);
        Ok(self.settle(blind_label))
    }

    pub fn record_rating(&mut self, blind_label: &str, rating: i64) -> Result<Progress, SessionError> {
        let arm = self.arm_mut(blind_label)?;
        let rating = u8::try_from(rating)
            .ok()
            .filter(|r| *r <= MAX_RATING)
            .ok_or(SessionError::RatingOutOfRange(rating))?;
        arm.rating = Some(rating);
        Ok(self.settle(blind_label))
    }

    fn settle(&mut self, blind_label: &str) -> Progress {
        if self.arms.iter().all(ArmRecord::is_complete) {
            self.state = SessionState::Complete;
        }
        let arm = self.arm(blind_label).expect("arm exists");
        Progress {
            session_id: self.session_id.clone(),
            blind_label: blind_label.to_string(),
            answered: arm.responses.len(),
            rating: arm.rating,
            arm_complete: arm.is_complete(),
            session_complete: self.state == SessionState::Complete,
        }
    }

    /// One sheet per arm; `None` until the session is complete.
    pub fn sheets(&self) -> Option<Vec<EvaluationSheet>> {
        (self.state == SessionState::Complete)
            .then(|| self.arms.iter().map(|a| a.sheet(&self.user_id)).collect())
    }

    /// What a rater may see: no model identity and no timings.
    pub fn view(&self) -> SessionView {
        SessionView {
            session_id: self.session_id.clone(),
            user_id: self.user_id.clone(),
            state: self.state,
            arms: self
                .presentation_order
                .iter()
                .map(|label| {
                    let arm = self.arm(label).expect("presentation order names existing arms");
                    ArmView {
                        blind_label: arm.blind_label.clone(),
                        tracks: arm
                            .tracks
                            .iter()
                            .map(|t| TrackView {
                                track_id: t.track_id.clone(),
                                song_name: t.song_name.clone(),
                                artist_name: t.artist_name.clone(),
                                genre: t.genre.clone(),
                            })
                            .collect(),
                        responses: arm
                            .tracks
                            .iter()
                            .filter_map(|t| {
                                arm.responses.get(&t.track_id).map(|a| TrackResponse {
                                    track_id: t.track_id.clone(),
                                    like: a.like,
                                    known: a.known,
                                })
                            })
                            .collect(),
                        rating: arm.rating,
                        answered: arm.responses.len(),
                        complete: arm.is_complete(),
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrackView {
    pub track_id: String,
    pub song_name: String,
    pub artist_name: String,
    pub genre: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmView {
    pub blind_label: String,
    pub tracks: Vec<TrackView>,
    pub responses: Vec<TrackResponse>,
    pub rating: Option<u8>,
    pub answered: usize,
    pub complete: bool,
}

/// Client payload for a session. Deliberately has no model or engine field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub user_id: String,
    pub state: SessionState,
    pub arms: Vec<ArmView>,
}
