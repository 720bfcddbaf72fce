mod common;

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};
use tunebench_agents::pipeline::TaskError;
use tunebench_agents::prompts::{ContextEntry, ContextSource};
use tunebench_agents::tools::ToolError;
use tunebench_agents::{
    MockBackend, Pipeline, PipelineConfig, PromptBook, RetryPolicy,
};

fn pipeline(base: &str) -> Pipeline {
    let mut config = PipelineConfig::new(base);
    config.retry = RetryPolicy {
        max_attempts: 3,
        initial_backoff: Duration::from_millis(5),
        multiplier: 2,
    };
    Pipeline::new(Arc::new(PromptBook::default()), config)
}

/// Twenty catalogue songs with one invented song planted at position 5.
fn scripted_recommendations() -> String {
    let catalogue = common::catalogue(300);
    let mut items: Vec<Value> = catalogue
        .iter()
        .step_by(7)
        .take(20)
        .map(|t| {
            json!({
                "genre": t.genres()[0],
                "song_name": t.song_name(),
                "artist_name": t.primary_artist(),
                "liked": true,
                "known": false
            })
        })
        .collect();
    items.insert(
        5,
        json!({"genre": "Pop", "song_name": "Never Recorded", "artist_name": "Ghost Band", "liked": true, "known": false}),
    );
    format!(
        "Here is your playlist:\n```json\n{}\n```\nEnjoy!",
        serde_json::to_string_pretty(&items).unwrap()
    )
}

fn scripted_backend() -> MockBackend {
    MockBackend::canned([
        ("read_catalogue", "The catalogue has 300 songs.".to_string()),
        ("read_history", "The user mostly listens to pop.".to_string()),
        (
            "infer_genres",
            "The 5 most preferred genres are: Pop, Rock, K-Pop, Funk Metal, Jazz".to_string(),
        ),
        ("recommend", scripted_recommendations()),
    ])
}

#[tokio::test]
async fn scripted_run_end_to_end() {
    let base = common::serve_data(common::default_data()).await;
    let p = pipeline(&base);
    let backend = scripted_backend();
    let result = p.run("u1", &backend).await.unwrap();

    let order: Vec<&str> = result.transcript.iter().map(|e| e.task.as_str()).collect();
    assert_eq!(order, ["read_catalogue", "read_history", "infer_genres", "recommend"]);
    let agents: Vec<&str> = result.transcript.iter().map(|e| e.agent.as_str()).collect();
    assert_eq!(agents, ["ReadingAgt", "AnalistAgt", "ExtractAgt", "RecommendAgt"]);

    assert_eq!(result.recommendations.len(), 20);
    assert_eq!(result.inferred_genres, ["Pop", "Rock", "K-Pop", "Funk Metal", "Jazz"]);
    assert_eq!(result.dropped_hallucinations.len(), 1);
    assert_eq!(result.dropped_hallucinations[0].item["song_name"], "Never Recorded");
    let catalogue = common::catalogue(300);
    for rec in &result.recommendations {
        assert!(catalogue.iter().any(|t| t.track_id() == rec.track_id));
    }

    let tool_calls: Vec<_> = result
        .transcript
        .iter()
        .map(|e| e.tool_call.as_ref().map(|c| (c.tool.as_str(), c.rows)))
        .collect();
    assert_eq!(
        tool_calls,
        [
            Some(("GetMusicCatalogueTool", 300)),
            Some(("GetUserHistoryDataTool", 30)),
            None,
            None
        ]
    );
    // The history agent sees 30 rows even though 45 are stored.
    let history_prompt = &result.transcript[1].prompt;
    assert!(history_prompt.contains("\"h029\""));
    assert!(!history_prompt.contains("\"h030\""));
    assert!(result.transcript[0]
        .prompt
        .contains(&format!("{base}/getAllDataEniac?limit=300")));
    assert!(result.transcript[3].prompt.contains("Pop, Rock, K-Pop"));
    assert!(result.timing_seconds > 0.0);
}

#[tokio::test]
async fn scripted_runs_are_identical() {
    let base = common::serve_data(common::default_data()).await;
    let p = pipeline(&base);
    let a = p.run("u1", &scripted_backend()).await.unwrap();
    let b = p.run("u1", &scripted_backend()).await.unwrap();
    assert_eq!(a.without_timing(), b.without_timing());
    let json_a = serde_json::to_string(&a.without_timing()).unwrap();
    let json_b = serde_json::to_string(&b.without_timing()).unwrap();
    assert_eq!(json_a, json_b);
}

#[tokio::test]
async fn missing_user_aborts_at_history_task() {
    let base = common::serve_data(common::default_data()).await;
    let err = pipeline(&base).run("ghost", &scripted_backend()).await.unwrap_err();
    assert_eq!(err.task, "read_history");
    assert_eq!(err.transcript.len(), 1);
    assert!(matches!(err.source, TaskError::Tool(ToolError::NotFound { .. })));
}

#[tokio::test]
async fn unparseable_recommendations_abort_with_full_transcript() {
    let base = common::serve_data(common::default_data()).await;
    let backend = MockBackend::canned([
        ("read_catalogue", "ok"),
        ("read_history", "ok"),
        ("infer_genres", "pop"),
        ("recommend", "I would suggest some nice pop songs."),
    ]);
    let err = pipeline(&base).run("u1", &backend).await.unwrap_err();
    assert_eq!(err.task, "recommend");
    assert_eq!(err.transcript.len(), 4);
    assert!(matches!(err.source, TaskError::Parse(_)));
}

#[tokio::test]
async fn run_task_returns_scripted_text() {
    let base = common::serve_data(common::default_data()).await;
    let p = pipeline(&base);
    let book = PromptBook::default();
    let backend = MockBackend::canned([("read_catalogue", "exact reply")]);
    let mut context = Vec::new();
    let run = p
        .run_task(book.task("read_catalogue").unwrap(), "u1", &backend, &mut context)
        .await
        .unwrap();
    assert_eq!(run.entry.output, "exact reply");
    assert_eq!(run.entry.attempts, 1);
    assert_eq!(run.catalogue.unwrap().len(), 300);
    let sources: Vec<&ContextSource> = context.iter().map(|c| &c.source).collect();
    assert_eq!(
        sources,
        [
            &ContextSource::Tool("GetMusicCatalogueTool".into()),
            &ContextSource::Task("read_catalogue".into())
        ]
    );
}

#[tokio::test]
async fn run_task_retries_rate_limits() {
    let base = common::serve_data(common::default_data()).await;
    let p = pipeline(&base);
    let book = PromptBook::default();
    let backend = MockBackend::canned([("infer_genres", "pop")]).failing_first(2, 429);
    let mut context = vec![ContextEntry {
        source: ContextSource::Task("read_history".into()),
        text: "[]".into(),
    }];
    let run = p
        .run_task(book.task("infer_genres").unwrap(), "u1", &backend, &mut context)
        .await
        .unwrap();
    assert_eq!(run.entry.output, "pop");
    assert_eq!(run.entry.attempts, 3);
}

#[tokio::test]
async fn heuristic_genre_task_names_five_genres() {
    let base = common::serve_data(common::default_data()).await;
    let p = pipeline(&base);
    let book = PromptBook::default();
    let backend = MockBackend::heuristic(0);
    let mut context = Vec::new();
    for key in ["read_history", "infer_genres"] {
        p.run_task(book.task(key).unwrap(), "u1", &backend, &mut context)
            .await
            .unwrap();
    }
    let answer = &context.last().unwrap().text;
    // Play-count totals over the first 30 rows: pop 2565, rock 435,
    // k-pop 430, funk metal 425, jazz 420, samba 415.
    let genres = tunebench_agents::parse::parse_genres(answer, 5);
    assert_eq!(genres, ["pop", "rock", "k-pop", "funk metal", "jazz"]);
}

#[tokio::test]
async fn heuristic_pipeline_recommends_from_catalogue() {
    let base = common::serve_data(common::default_data()).await;
    let p = pipeline(&base);
    let a = p.run("u1", &MockBackend::heuristic(1)).await.unwrap();
    assert_eq!(a.recommendations.len(), 20);
    assert_eq!(a.inferred_genres.len(), 5);
    assert!(a.dropped_hallucinations.is_empty());
    let again = p.run("u1", &MockBackend::heuristic(1)).await.unwrap();
    assert_eq!(a.without_timing(), again.without_timing());
    let other = p.run("u1", &MockBackend::heuristic(2)).await.unwrap();
    assert_ne!(a.recommendations, other.recommendations);
}

#[tokio::test]
async fn concurrent_runs_share_a_pipeline() {
    let base = common::serve_data(common::default_data()).await;
    let p = Arc::new(pipeline(&base));
    let backend = Arc::new(MockBackend::heuristic(3));
    let handles: Vec<_> = ["u1", "u3", "u1"]
        .into_iter()
        .map(|user| {
            let p = p.clone();
            let backend = backend.clone();
            tokio::spawn(async move { p.run(user, backend.as_ref()).await.map(|r| r.recommendations.len()) })
        })
        .collect();
    for h in handles {
        assert_eq!(h.await.unwrap().unwrap(), 20);
    }
}
