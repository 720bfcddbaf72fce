//! HTTP tools the reading agents call before answering.

use std::time::Duration;

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use thiserror::Error;
use tunebench_core::{HistoryRecord, Track};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ToolError {
    #[error("GET {url} failed: {message}")]
    Network { url: String, message: String },
    #[error("GET {url}: not found")]
    NotFound { url: String },
    #[error("GET {url}: HTTP {status}")]
    Status { url: String, status: u16 },
    #[error("GET {url}: malformed response: {message}")]
    Parse { url: String, message: String },
}

#[derive(Debug, Clone)]
pub struct ToolClient {
    http: reqwest::Client,
}

impl Default for ToolClient {
    fn default() -> Self {
        Self::new(Duration::from_secs(30))
    }
}

impl ToolClient {
    pub fn new(timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .build()
            .expect("reqwest client builds with default TLS");
        Self { http }
    }

    async fn get_rows<T: DeserializeOwned>(&self, url: &str) -> Result<Vec<T>, ToolError> {
        let response = self
            .http
            .get(url)
            .send()
            .await
            .map_err(|e| ToolError::Network {
                url: url.to_string(),
                message: e.to_string(),
            })?;
        match response.status() {
            StatusCode::NOT_FOUND => {
                return Err(ToolError::NotFound {
                    url: url.to_string(),
                })
            }
            s if !s.is_success() => {
                return Err(ToolError::Status {
                    url: url.to_string(),
                    status: s.as_u16(),
                })
            }
            _ => {}
        }
        let body = response.bytes().await.map_err(|e| ToolError::Network {
            url: url.to_string(),
            message: e.to_string(),
        })?;
        serde_json::from_slice(&body).map_err(|e| ToolError::Parse {
            url: url.to_string(),
            message: e.to_string(),
        })
    }

    /// Catalog rows in served order.
    pub async fn get_catalogue(&self, url: &str) -> Result<Vec<Track>, ToolError> {
        self.get_rows(url).await
    }

    /// History rows, keeping only the first `limit`.
    pub async fn get_user_history(
        &self,
        url: &str,
        limit: Option<usize>,
    ) -> Result<Vec<HistoryRecord>, ToolError> {
        let mut rows: Vec<HistoryRecord> = self.get_rows(url).await?;
        if let Some(limit) = limit {
            rows.truncate(limit);
        }
        Ok(rows)
    }
}
