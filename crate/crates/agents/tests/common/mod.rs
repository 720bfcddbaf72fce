#![allow(dead_code)]

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use tunebench_core::{HistoryRecord, Track};

pub const GENRES: [&str; 8] = ["Pop", "Rock", "K-Pop", "Funk Metal", "Jazz", "Samba", "MPB", "Indie"];

pub fn catalogue(n: usize) -> Vec<Track> {
    (0..n)
        .map(|i| {
            Track::new(
                format!("c{i:03}"),
                format!("Catalog Song {i}"),
                vec![format!("Band {}", i % 37)],
                vec![GENRES[i % GENRES.len()], GENRES[(i / 3) % GENRES.len()]],
            )
            .unwrap()
        })
        .collect()
}

/// Pop-heavy listening history of `n` rows.
pub fn history(user: &str, n: usize) -> Vec<HistoryRecord> {
    (0..n)
        .map(|i| HistoryRecord {
            user_id: user.to_string(),
            track: Track::new(
                format!("h{i:03}"),
                format!("Heard {i}"),
                vec!["Someone"],
                vec![GENRES[i % 6], "Pop"],
            )
            .unwrap(),
            play_count: (100 - i) as u64,
            last_played: None,
        })
        .collect()
}

#[derive(Clone)]
pub struct Data {
    pub catalogue: Vec<Track>,
    pub histories: HashMap<String, Vec<HistoryRecord>>,
}

#[derive(Deserialize)]
struct Limit {
    limit: Option<usize>,
}

async fn all_data(State(data): State<Arc<Data>>, Query(q): Query<Limit>) -> Json<Vec<Track>> {
    let limit = q.limit.unwrap_or(300).min(data.catalogue.len());
    Json(data.catalogue[..limit].to_vec())
}

async fn user_data(
    State(data): State<Arc<Data>>,
    Path(user): Path<String>,
) -> Result<Json<Vec<HistoryRecord>>, StatusCode> {
    data.histories
        .get(&user)
        .cloned()
        .map(Json)
        .ok_or(StatusCode::NOT_FOUND)
}

/// Serves the two data endpoints; returns the base URL.
pub async fn serve_data(data: Data) -> String {
    let app = Router::new()
        .route("/getAllDataEniac", get(all_data))
        .route("/getUserData/{user_id}", get(user_data))
        .with_state(Arc::new(data));
    serve(app).await
}

pub async fn serve(app: Router) -> String {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr: SocketAddr = listener.local_addr().unwrap();
    tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    format!("http://{addr}")
}

pub fn default_data() -> Data {
    let mut histories = HashMap::new();
    histories.insert("u1".to_string(), history("u1", 45));
    histories.insert("u3".to_string(), history("u3", 3));
    histories.insert("empty".to_string(), Vec::new());
    Data {
        catalogue: catalogue(300),
        histories,
    }
}
