#![allow(dead_code)]

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use tunebench_core::{Catalog, HistoryEntry, HistoryRecord, Track, UserHistory};
use tunebench_service::{spawn_server, Config, FileStore, RunningServer, Store, StoreRecord};

pub const GENRES: [&str; 8] = ["Pop", "Rock", "Jazz", "Samba", "MPB", "Indie", "Funk Metal", "K-Pop"];

pub fn catalog_track(i: usize) -> Track {
    Track::new(
        format!("c{i:03}"),
        format!("Song {i}"),
        vec![format!("Artist {}", i % 23)],
        vec![GENRES[i % 8], GENRES[(i / 8) % 8]],
    )
    .unwrap()
}

pub fn catalog(n: usize) -> Catalog {
    Catalog::new((0..n).map(catalog_track).collect()).unwrap()
}

/// Rock-and-jazz heavy history; its first ten tracks are also in the catalog.
pub fn history(user: &str, n: usize) -> UserHistory {
    let entries = (0..n)
        .map(|i| {
            let track = if i < 10 {
                catalog_track(i * 3)
            } else {
                Track::new(
                    format!("h{i:03}"),
                    format!("Heard {i}"),
                    vec!["Somebody"],
                    vec![["Rock", "Jazz", "Samba"][i % 3]],
                )
                .unwrap()
            };
            HistoryEntry {
                track,
                play_count: (2 * n - i) as u64,
                last_played: None,
            }
        })
        .collect();
    UserHistory::new(user, entries)
}

pub fn records(histories: &[UserHistory]) -> Vec<HistoryRecord> {
    histories.iter().flat_map(|h| h.to_records()).collect()
}

/// Store holding `n` catalog tracks, user `u1` with 40 rows and user
/// `quiet` with an empty history.
pub fn seeded_store(dir: &Path, n: usize) -> Arc<dyn Store> {
    let store = FileStore::open(dir).unwrap();
    store.put(StoreRecord::Catalog(catalog(n))).unwrap();
    store.put(StoreRecord::History(history("u1", 40))).unwrap();
    store.put(StoreRecord::History(UserHistory::new("quiet", Vec::new()))).unwrap();
    Arc::new(store)
}

pub async fn offline_server(store: Arc<dyn Store>, dir: &Path) -> RunningServer {
    spawn_server(store, Config::offline(dir), SocketAddr::from(([127, 0, 0, 1], 0)))
        .await
        .unwrap()
}

pub async fn start(n: usize) -> (tempfile::TempDir, RunningServer) {
    let dir = tempfile::tempdir().unwrap();
    let store = seeded_store(dir.path(), n);
    let server = offline_server(store, dir.path()).await;
    (dir, server)
}
