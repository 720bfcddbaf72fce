mod common;

use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};
use tunebench_agents::backend::{
    backend_from_env, complete_with_retry, ChatRequest, EndpointConfig, GeminiBackend,
    OpenAiCompatibleBackend,
};
use tunebench_agents::prompts::TaskOutput;
use tunebench_agents::tools::{ToolClient, ToolError};
use tunebench_agents::{BackendError, BackendId, ChatBackend, MockBackend, RetryPolicy};

fn fast_retry() -> RetryPolicy {
    RetryPolicy {
        max_attempts: 3,
        initial_backoff: Duration::from_millis(5),
        multiplier: 2,
    }
}

fn request(prompt: &str) -> ChatRequest {
    ChatRequest {
        task: "t".into(),
        output: TaskOutput::Text,
        prompt: prompt.into(),
    }
}

#[tokio::test]
async fn catalogue_tool_reads_rows_in_order() {
    let base = common::serve_data(common::default_data()).await;
    let tools = ToolClient::default();
    let rows = tools
        .get_catalogue(&format!("{base}/getAllDataEniac?limit=300"))
        .await
        .unwrap();
    assert_eq!(rows.len(), 300);
    assert_eq!(rows[0].track_id(), "c000");
    assert_eq!(rows[299].track_id(), "c299");
    let none = tools
        .get_catalogue(&format!("{base}/getAllDataEniac?limit=0"))
        .await
        .unwrap();
    assert!(none.is_empty());
}

#[tokio::test]
async fn unreachable_host_is_a_tool_error() {
    // Bind then drop to get a port nobody listens on.
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let err = ToolClient::new(Duration::from_secs(2))
        .get_catalogue(&format!("http://127.0.0.1:{port}/getAllDataEniac?limit=300"))
        .await
        .unwrap_err();
    assert!(matches!(err, ToolError::Network { .. }), "{err:?}");
}

#[tokio::test]
async fn history_tool_truncates_to_thirty() {
    let base = common::serve_data(common::default_data()).await;
    let tools = ToolClient::default();
    let rows = tools
        .get_user_history(&format!("{base}/getUserData/u1"), Some(30))
        .await
        .unwrap();
    assert_eq!(rows.len(), 30);
    assert_eq!(rows[0].track.track_id(), "h000");
    let few = tools
        .get_user_history(&format!("{base}/getUserData/u3"), Some(30))
        .await
        .unwrap();
    assert_eq!(few.len(), 3);
    let err = tools
        .get_user_history(&format!("{base}/getUserData/ghost"), Some(30))
        .await
        .unwrap_err();
    assert!(matches!(err, ToolError::NotFound { .. }));
}

#[tokio::test]
async fn malformed_tool_payload_is_a_parse_error() {
    let app = Router::new().route(
        "/getAllDataEniac",
        axum::routing::get(|| async { "not json" }),
    );
    let base = common::serve(app).await;
    let err = ToolClient::default()
        .get_catalogue(&format!("{base}/getAllDataEniac?limit=300"))
        .await
        .unwrap_err();
    assert!(matches!(err, ToolError::Parse { .. }));
}

#[tokio::test]
async fn mock_retries_after_two_rate_limits() {
    let backend = MockBackend::canned([("t", "fine")]).failing_first(2, 429);
    let done = complete_with_retry(&backend, &request("hi"), fast_retry())
        .await
        .unwrap();
    assert_eq!(done.response.text, "fine");
    assert_eq!(done.attempts, 3);
    assert_eq!(backend.calls(), 3);
}

#[tokio::test]
async fn retries_are_bounded() {
    let backend = MockBackend::canned([("t", "fine")]).failing_first(3, 503);
    let err = complete_with_retry(&backend, &request("hi"), fast_retry())
        .await
        .unwrap_err();
    assert!(err.is_retryable());
    assert_eq!(backend.calls(), 3);

    let rejected = MockBackend::canned([("t", "fine")]).failing_first(1, 400);
    let err = complete_with_retry(&rejected, &request("hi"), fast_retry())
        .await
        .unwrap_err();
    assert!(matches!(err, BackendError::Rejected { status: 400, .. }));
    assert_eq!(rejected.calls(), 1);
}

#[derive(Default)]
struct Stub {
    calls: AtomicU32,
}

async fn chat_completions(
    State(stub): State<Arc<Stub>>,
    headers: HeaderMap,
    Json(body): Json<Value>,
) -> (StatusCode, Json<Value>) {
    let n = stub.calls.fetch_add(1, Ordering::SeqCst);
    assert_eq!(headers["authorization"], "Bearer test-key");
    assert_eq!(body["model"], "llama-3.3-70b-versatile");
    assert!(body.get("temperature").is_none());
    if n < 2 {
        return (
            StatusCode::TOO_MANY_REQUESTS,
            Json(json!({"error": {"message": "rate limited"}})),
        );
    }
    let prompt = body["messages"][0]["content"].as_str().unwrap().to_string();
    (
        StatusCode::OK,
        Json(json!({
            "choices": [{"message": {"role": "assistant", "content": format!("echo: {prompt}")}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 7}
        })),
    )
}

#[tokio::test]
async fn openai_compatible_backend_retries_http_429() {
    let stub = Arc::new(Stub::default());
    let app = Router::new()
        .route("/chat/completions", post(chat_completions))
        .with_state(stub.clone());
    let base = common::serve(app).await;
    let backend = OpenAiCompatibleBackend::new(
        BackendId::Llama33_70bVersatile,
        EndpointConfig {
            base_url: base,
            api_key: "test-key".into(),
            timeout: Duration::from_secs(5),
        },
    );
    let done = complete_with_retry(&backend, &request("hello"), fast_retry())
        .await
        .unwrap();
    assert_eq!(done.attempts, 3);
    assert_eq!(done.response.text, "echo: hello");
    let usage = done.response.usage.unwrap();
    assert_eq!((usage.prompt_tokens, usage.completion_tokens), (11, 7));
    assert_eq!(stub.calls.load(Ordering::SeqCst), 3);
}

#[tokio::test]
async fn gemini_backend_wire_format() {
    let app = Router::new().route(
        "/models/gemini-2.0-flash:generateContent",
        post(|headers: HeaderMap, Json(body): Json<Value>| async move {
            assert_eq!(headers["x-goog-api-key"], "g-key");
            let prompt = body["contents"][0]["parts"][0]["text"].as_str().unwrap().to_string();
            Json(json!({
                "candidates": [{"content": {"role": "model", "parts": [{"text": "A: "}, {"text": prompt}]}}],
                "usageMetadata": {"promptTokenCount": 5, "candidatesTokenCount": 3}
            }))
        }),
    );
    let base = common::serve(app).await;
    let lookup = |k: &str| match k {
        "GEMINI_API_KEY" => Some("g-key".to_string()),
        "GEMINI_BASE_URL" => Some(base.clone()),
        _ => None,
    };
    let backend = backend_from_env(BackendId::Gemini20Flash, lookup, Duration::from_secs(5)).unwrap();
    let reply = backend.complete(&request("ping")).await.unwrap();
    assert_eq!(reply.text, "A: ping");
    assert_eq!(reply.usage.unwrap().completion_tokens, 3);

    let direct = GeminiBackend::new(EndpointConfig {
        base_url: format!("{}/missing", common::serve(Router::new()).await),
        api_key: "g-key".into(),
        timeout: Duration::from_secs(5),
    });
    assert!(matches!(
        direct.complete(&request("ping")).await,
        Err(BackendError::Rejected { status: 404, .. })
    ));
}

#[tokio::test]
async fn dead_backend_is_transient() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let backend = OpenAiCompatibleBackend::new(
        BackendId::Llama33_70bVersatile,
        EndpointConfig {
            base_url: format!("http://127.0.0.1:{port}"),
            api_key: "k".into(),
            timeout: Duration::from_secs(2),
        },
    );
    let err = backend.complete(&request("x")).await.unwrap_err();
    assert!(err.is_retryable(), "{err:?}");
}
