//! File-backed document store.
//!
//! Layout under the data directory:
//!
//! ```text
//! catalog.json            active sampled catalog
//! histories/<user>.json   one listening history per user
//! sessions/<id>.json      blind evaluation sessions
//! sheets.jsonl            evaluation sheets of completed sessions
//! ```
//!
//! Every write replaces a whole file through a temporary file and a rename,
//! so readers never observe a partial document. Writers to the same file are
//! serialized.

use std::collections::HashMap;
use std::fs;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::Serialize;
use thiserror::Error;
use tunebench_core::metrics::{read_sheets_jsonl, write_sheets_jsonl, EvaluationSheet, MetricError};
use tunebench_core::{Catalog, UserHistory};

use crate::session::SessionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Catalog,
    History,
    Sheet,
    Session,
}

/// One document written to the store. Sheets append; everything else
/// replaces the previous document with the same key.
#[derive(Debug, Clone)]
pub enum StoreRecord {
    Catalog(Catalog),
    History(UserHistory),
    Sheets(Vec<EvaluationSheet>),
    Session(SessionRecord),
}

impl StoreRecord {
    pub fn kind(&self) -> RecordKind {
        match self {
            StoreRecord::Catalog(_) => RecordKind::Catalog,
            StoreRecord::History(_) => RecordKind::History,
            StoreRecord::Sheets(_) => RecordKind::Sheet,
            StoreRecord::Session(_) => RecordKind::Session,
        }
    }
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed {kind:?} document: {reason}")]
    Corrupt {
        path: PathBuf,
        kind: RecordKind,
        reason: String,
    },
    #[error("invalid key {0:?}")]
    InvalidKey(String),
}

pub trait Store: Send + Sync {
    fn put(&self, record: StoreRecord) -> Result<(), StoreError>;
    fn catalog(&self) -> Result<Option<Catalog>, StoreError>;
    fn history(&self, user_id: &str) -> Result<Option<UserHistory>, StoreError>;
    /// Ids of every user with a stored history, sorted.
    fn users(&self) -> Result<Vec<String>, StoreError>;
    fn session(&self, session_id: &str) -> Result<Option<SessionRecord>, StoreError>;
    fn sheets(&self) -> Result<Vec<EvaluationSheet>, StoreError>;
}

pub struct FileStore {
    root: PathBuf,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl FileStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        for dir in [root.clone(), root.join("histories"), root.join("sessions")] {
            fs::create_dir_all(&dir).map_err(|source| StoreError::Io { path: dir, source })?;
        }
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn catalog_path(&self) -> PathBuf {
        self.root.join("catalog.json")
    }

    fn sheets_path(&self) -> PathBuf {
        self.root.join("sheets.jsonl")
    }

    fn history_path(&self, user_id: &str) -> PathBuf {
        self.root.join("histories").join(format!("{}.json", encode_key(user_id)))
    }

    fn session_path(&self, session_id: &str) -> Result<PathBuf, StoreError> {
        if session_id.is_empty() || !session_id.chars().all(is_plain) {
            return Err(StoreError::InvalidKey(session_id.to_string()));
        }
        Ok(self.root.join("sessions").join(format!("{session_id}.json")))
    }

    fn lock_for(&self, path: &Path) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("lock table poisoned");
        locks.entry(path.to_path_buf()).or_default().clone()
    }

    fn write_atomic(&self, path: &Path, bytes: &[u8]) -> Result<(), StoreError> {
        let io = |source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        };
        let dir = path.parent().expect("store paths have a parent");
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(bytes).map_err(io)?;
        tmp.as_file().sync_all().map_err(io)?;
        tmp.persist(path).map_err(|e| io(e.error))?;
        Ok(())
    }

    fn write_json<T: Serialize>(&self, path: &Path, value: &T) -> Result<(), StoreError> {
        let bytes = serde_json::to_vec_pretty(value).expect("store documents serialize");
        let lock = self.lock_for(path);
        let _guard = lock.lock().expect("record lock poisoned");
        self.write_atomic(path, &bytes)
    }

    fn read_json<T: serde::de::DeserializeOwned>(
        &self,
        path: &Path,
        kind: RecordKind,
    ) -> Result<Option<T>, StoreError> {
        let bytes = match fs::read(path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => {
                return Err(StoreError::Io {
                    path: path.to_path_buf(),
                    source,
                })
            }
        };
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| StoreError::Corrupt {
                path: path.to_path_buf(),
                kind,
                reason: e.to_string(),
            })
    }

    fn append_sheets(&self, sheets: &[EvaluationSheet]) -> Result<(), StoreError> {
        let path = self.sheets_path();
        let lock = self.lock_for(&path);
        let _guard = lock.lock().expect("record lock poisoned");
        let mut bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Vec::new(),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        if !bytes.is_empty() && !bytes.ends_with(b"\n") {
            bytes.push(b'\n');
        }
        write_sheets_jsonl(&mut bytes, sheets).expect("writing to a Vec cannot fail");
        self.write_atomic(&path, &bytes)
    }
}

impl Store for FileStore {
    fn put(&self, record: StoreRecord) -> Result<(), StoreError> {
        match record {
            StoreRecord::Catalog(c) => self.write_json(&self.catalog_path(), &c),
            StoreRecord::History(h) => self.write_json(&self.history_path(h.user_id()), &h),
            StoreRecord::Sheets(s) => self.append_sheets(&s),
            StoreRecord::Session(s) => self.write_json(&self.session_path(&s.session_id)?, &s),
        }
    }

    fn catalog(&self) -> Result<Option<Catalog>, StoreError> {
        self.read_json(&self.catalog_path(), RecordKind::Catalog)
    }

    fn history(&self, user_id: &str) -> Result<Option<UserHistory>, StoreError> {
        self.read_json(&self.history_path(user_id), RecordKind::History)
    }

    fn users(&self) -> Result<Vec<String>, StoreError> {
        let dir = self.root.join("histories");
        let entries = fs::read_dir(&dir).map_err(|source| StoreError::Io {
            path: dir.clone(),
            source,
        })?;
        let mut users = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|source| StoreError::Io {
                path: dir.clone(),
                source,
            })?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if let Some(user) = name.strip_suffix(".json").and_then(decode_key) {
                users.push(user);
            }
        }
        users.sort();
        Ok(users)
    }

    fn session(&self, session_id: &str) -> Result<Option<SessionRecord>, StoreError> {
        match self.session_path(session_id) {
            Ok(path) => self.read_json(&path, RecordKind::Session),
            Err(StoreError::InvalidKey(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn sheets(&self) -> Result<Vec<EvaluationSheet>, StoreError> {
        let path = self.sheets_path();
        let file = match fs::File::open(&path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(source) => return Err(StoreError::Io { path, source }),
        };
        read_sheets_jsonl(BufReader::new(file)).map_err(|e: MetricError| StoreError::Corrupt {
            path,
            kind: RecordKind::Sheet,
            reason: e.to_string(),
        })
    }
}

fn is_plain(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '-' || c == '_'
}

/// File name for an arbitrary key: plain keys map to themselves, anything
/// else is hex-encoded behind a `~` prefix.
fn encode_key(key: &str) -> String {
    if !key.is_empty() && key.chars().all(is_plain) {
        key.to_string()
    } else {
        format!("~{}", hex::encode(key.as_bytes()))
    }
}

fn decode_key(name: &str) -> Option<String> {
    match name.strip_prefix('~') {
        Some(encoded) => String::from_utf8(hex::decode(encoded).ok()?).ok(),
        None => Some(name.to_string()),
    }
}
