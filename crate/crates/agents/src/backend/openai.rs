use async_trait::async_trait;
use serde::{Deserialize, Serialize};

use super::{BackendError, BackendId, ChatBackend, ChatRequest, ChatResponse, EndpointConfig, TokenUsage};

/// OpenAI-style `/chat/completions` endpoint (Groq serves LLaMA this way).
pub struct OpenAiCompatibleBackend {
    id: BackendId,
    endpoint: EndpointConfig,
    http: reqwest::Client,
}

#[derive(Serialize)]
struct Body<'a> {
    model: &'a str,
    messages: [Message<'a>; 1],
}

#[derive(Serialize)]
struct Message<'a> {
    role: &'static str,
    content: &'a str,
}

#[derive(Deserialize)]
struct Reply {
    choices: Vec<Choice>,
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

impl OpenAiCompatibleBackend {
    pub fn new(id: BackendId, endpoint: EndpointConfig) -> Self {
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .expect("reqwest client builds with default TLS");
        Self { id, endpoint, http }
    }
}

#[async_trait]
impl ChatBackend for OpenAiCompatibleBackend {
    fn id(&self) -> BackendId {
        self.id
    }

    async fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        let url = format!(
            "{}/chat/completions",
            self.endpoint.base_url.trim_end_matches('/')
        );
        // Temperature is left at the provider default.
        let body = Body {
            model: self.id.as_str(),
            messages: [Message {
                role: "user",
                content: &request.prompt,
            }],
        };
        let response = self
            .http
            .post(&url)
            .bearer_auth(&self.endpoint.api_key)
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
        let text = reply
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Malformed("no choices in reply".into()))?;
        Ok(ChatResponse {
            text,
            usage: reply.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
        })
    }
}
