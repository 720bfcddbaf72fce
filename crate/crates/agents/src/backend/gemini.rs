use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendId, ChatBackend, ChatRequest, ChatResponse, EndpointConfig, TokenUsage};

/// Google `generateContent` endpoint for Gemini 2.0 Flash.
pub struct GeminiBackend {
    endpoint: EndpointConfig,
    http: reqwest::Client,
}

#[derive(Serialize)]
struct Body<'a> {
    contents: [Content<'a>; 1],
}

#[derive(Serialize)]
struct Content<'a> {
    role: &'static str,
    parts: [Part<'a>; 1],
}

#[derive(Serialize)]
struct Part<'a> {
    text: &'a str,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct Reply {
    #[serde(default)]
    candidates: Vec<Candidate>,
    usage_metadata: Option<UsageMetadata>,
}

#[derive(Deserialize)]
struct Candidate {
    content: Option<ReplyContent>,
}

#[derive(Deserialize)]
struct ReplyContent {
    #[serde(default)]
    parts: Vec<ReplyPart>,
}

#[derive(Deserialize)]
struct ReplyPart {
    text: Option<String>,
}

#[derive(Deserialize)]
#[serde(rename_all = "camelCase")]
struct UsageMetadata {
    #[serde(default)]
    prompt_token_count: u64,
    #[serde(default)]
    candidates_token_count: u64,
}

impl GeminiBackend {
    pub fn new(endpoint: EndpointConfig) -> Self {
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .expect("reqwest client builds with default TLS");
        Self { endpoint, http }
    }
}

#[async_trait]
impl ChatBackend for GeminiBackend {
    fn id(&self) -> BackendId {
        BackendId::Gemini20Flash
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let url = format!(
            "{}/models/{}:generateContent",
            self.endpoint.base_url.trim_end_matches('/'),
            BackendId::Gemini20Flash.as_str()
        );
        let body = Body {
            contents: [Content {
                role: "user",
                parts: [Part {
                    text: &request.prompt,
                }],
            }],
        };
        let response = self
            .http
            .post(&url)
            .header("x-goog-api-key", &self.endpoint.api_key)
            .json(&body)
            .send()
            .await
            .map_err(BackendError::from_reqwest)?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().await.unwrap_or_default();
            return Err(BackendError::from_status(status.as_u16(), text));
        }
        let reply: Reply = response
            .json()
            .await
            .map_err(|e| BackendError::Malformed(e.to_string()))?;
        let text: String = reply
            .candidates
            .into_iter()
            .next()
            .and_then(|c| c.content)
            .map(|c| c.parts.into_iter().filter_map(|p| p.text).collect())
            .ok_or_else(|| BackendError::Malformed("no candidates in reply".into()))?;
        Ok(ChatResponse {
            text,
            usage: reply.usage_metadata.map(|u| TokenUsage {
                prompt_tokens: u.prompt_token_count,
                completion_tokens: u.candidates_token_count,
            }),
        })
    }
}
