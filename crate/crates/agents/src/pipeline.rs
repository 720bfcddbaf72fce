//! Sequential execution of the prompt book's tasks.
//!
//! Tasks run strictly in book order. Each answer becomes context for the
//! tasks that declare it, and an agent with a tool has the tool result added
//! to its context before the model is called.

use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tunebench_core::Catalog;

use crate::backend::{complete_with_retry, BackendError, ChatBackend, ChatRequest, RetryPolicy, TokenUsage};
use crate::parse::{parse_genres, parse_recommendations, DroppedItem, ParseError, RecommendedTrack};
use crate::prompts::{
    render_prompt, ContextEntry, ContextSource, PromptBook, PromptError, TaskOutput, TaskSpec, ToolKind,
};
use crate::tools::{ToolClient, ToolError};

pub const DEFAULT_RECOMMENDATIONS: usize = 20;
pub const MAX_INFERRED_GENRES: usize = 5;

#[derive(Debug, Clone)]
pub struct PipelineConfig {
    /// Base URL of the service exposing the catalogue and history endpoints.
    pub base_url: String,
    pub recommendations: usize,
    pub retry: RetryPolicy,
    pub tool_timeout: Duration,
}

impl PipelineConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            recommendations: DEFAULT_RECOMMENDATIONS,
            retry: RetryPolicy::default(),
            tool_timeout: Duration::from_secs(30),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub tool: String,
    pub url: String,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub task: String,
    pub agent: String,
    pub prompt: String,
    pub tool_call: Option<ToolCall>,
    pub output: String,
    pub attempts: u32,
    pub latency_seconds: f64,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub recommendations: Vec<RecommendedTrack>,
    pub inferred_genres: Vec<String>,
    pub transcript: Vec<TranscriptEntry>,
    pub timing_seconds: f64,
    pub dropped_hallucinations: Vec<DroppedItem>,
}

impl PipelineResult {
    /// Copy with every wall-clock measurement zeroed, for comparing runs.
    pub fn without_timing(&self) -> Self {
        let mut copy = self.clone();
        copy.timing_seconds = 0.0;
        for entry in &mut copy.transcript {
            entry.latency_seconds = 0.0;
        }
        copy
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaskError {
    #[error(transparent)]
    Tool(#[from] ToolError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("{0}")]
    Prompt(String),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("{0}")]
    Contract(String),
}

impl From<PromptError> for TaskError {
    fn from(e: PromptError) -> Self {
        TaskError::Prompt(e.to_string())
    }
}

/// A failed run with everything completed before the failure.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("task {task:?} failed: {source}")]
pub struct PipelineError {
    pub task: String,
    pub source: TaskError,
    pub transcript: Vec<TranscriptEntry>,
}

/// Raw answer of one task plus call metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRun {
    pub entry: TranscriptEntry,
    /// Catalog served by a catalogue tool, when this task used one.
    pub catalogue: Option<Catalog>,
}

#[derive(Clone)]
pub struct Pipeline {
    book: Arc<PromptBook>,
    tools: ToolClient,
    config: PipelineConfig,
}

impl Pipeline {
    pub fn new(book: Arc<PromptBook>, config: PipelineConfig) -> Self {
        Self {
            tools: ToolClient::new(config.tool_timeout),
            book,
            config,
        }
    }

    pub fn book(&self) -> &PromptBook {
        &self.book
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Runs one task. `context` receives the tool result (when the agent
    /// has a tool) and then the task's answer.
    pub async fn run_task(
        &self,
        task: &TaskSpec,
        user_id: &str,
        backend: &dyn ChatBackend,
        context: &mut Vec<ContextEntry>,
    ) -> Result<TaskRun, TaskError> {
        let agent = self
            .book
            .agent(&task.agent)
            .ok_or_else(|| TaskError::Contract(format!("unknown agent {:?}", task.agent)))?;
        let task = self.book.resolve_task(task, &self.config.base_url, user_id);

        let mut tool_call = None;
        let mut catalogue = None;
        if let Some(tool) = self.book.agent_tool(agent) {
            let url = tool.resolve_url(&self.config.base_url, user_id);
            let (text, rows) = match tool.kind {
                ToolKind::Catalogue => {
                    let rows = self.tools.get_catalogue(&url).await?;
                    let text = serde_json::to_string(&rows).expect("tracks serialize");
                    let n = rows.len();
                    catalogue = Some(Catalog::dedup(rows).0);
                    (text, n)
                }
                ToolKind::UserHistory => {
                    let rows = self.tools.get_user_history(&url, tool.result_limit).await?;
                    (serde_json::to_string(&rows).expect("history rows serialize"), rows.len())
                }
            };
            context.push(ContextEntry {
                source: ContextSource::Tool(tool.name.clone()),
                text,
            });
            tool_call = Some(ToolCall {
                tool: tool.name.clone(),
                url,
                rows,
            });
        }

        let prompt = render_prompt(agent, &task, context)?;
        let request = ChatRequest {
            task: task.key.clone(),
            output: task.output,
            prompt,
        };
        let started = Instant::now();
        let completion = complete_with_retry(backend, &request, self.config.retry).await?;
        let latency = started.elapsed().as_secs_f64();
        context.push(ContextEntry {
            source: ContextSource::Task(task.key.clone()),
            text: completion.response.text.clone(),
        });
        Ok(TaskRun {
            entry: TranscriptEntry {
                task: task.key.clone(),
                agent: agent.name.clone(),
                prompt: request.prompt,
                tool_call,
                output: completion.response.text,
                attempts: completion.attempts,
                latency_seconds: latency,
                usage: completion.response.usage,
            },
            catalogue,
        })
    }

    /// Runs every task in order and reads the genre and recommendation
    /// answers. Recommendations are checked against the catalog served to
    /// the catalogue tool.
    pub async fn run(
        &self,
        user_id: &str,
        backend: &dyn ChatBackend,
    ) -> Result<PipelineResult, PipelineError> {
        let started = Instant::now();
        let mut context = Vec::new();
        let mut transcript: Vec<TranscriptEntry> = Vec::new();
        let mut catalogue: Option<Catalog> = None;
        let mut inferred_genres = Vec::new();
        let mut parsed = None;

        for task in &self.book.tasks {
            let fail = |source: TaskError, transcript: &[TranscriptEntry]| PipelineError {
                task: task.key.clone(),
                source,
                transcript: transcript.to_vec(),
            };
            let run = self
                .run_task(task, user_id, backend, &mut context)
                .await
                .map_err(|e| fail(e, &transcript))?;
            if run.catalogue.is_some() {
                catalogue = run.catalogue;
            }
            let output = run.entry.output.clone();
            transcript.push(run.entry);
            tracing::debug!(task = %task.key, user = user_id, "task completed");

            match task.output {
                TaskOutput::Text => {}
                TaskOutput::Genres => {
                    inferred_genres = parse_genres(&output, MAX_INFERRED_GENRES);
                }
                TaskOutput::Recommendations => {
                    let catalog = catalogue.as_ref().ok_or_else(|| {
                        fail(
                            TaskError::Contract("no catalogue was read before recommending".into()),
                            &transcript,
                        )
                    })?;
                    let result = parse_recommendations(&output, catalog, self.config.recommendations)
                        .map_err(|e| fail(e.into(), &transcript))?;
                    parsed = Some(result);
                }
            }
        }

        let parsed = parsed.ok_or_else(|| PipelineError {
            task: self.book.tasks.last().map(|t| t.key.clone()).unwrap_or_default(),
            source: TaskError::Contract("prompt book has no recommendation task".into()),
            transcript: transcript.clone(),
        })?;
        if !parsed.dropped.is_empty() {
            tracing::info!(
                user = user_id,
                dropped = parsed.dropped.len(),
                "dropped recommendations outside the catalogue"
            );
        }
        Ok(PipelineResult {
            recommendations: parsed.recommendations,
            inferred_genres,
            transcript,
            timing_seconds: started.elapsed().as_secs_f64(),
            dropped_hallucinations: parsed.dropped,
        })
    }
}
