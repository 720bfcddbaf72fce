//! Multi-agent recommendation pipeline.
//!
//! Four zero-shot agents run one after another: two read the catalogue and
//! the user's history through HTTP tools, one infers the user's favourite
//! genres, and one writes the final recommendation list. Answers are parsed
//! strictly and every recommended song must exist in the served catalogue.

pub mod backend;
pub mod parse;
pub mod pipeline;
pub mod prompts;
pub mod tools;

pub use backend::{BackendError, BackendId, ChatBackend, MockBackend, MockScript, RetryPolicy};
pub use parse::{parse_recommendations, DroppedItem, RecommendedTrack};
pub use pipeline::{Pipeline, PipelineConfig, PipelineError, PipelineResult};
pub use prompts::{render_prompt, PromptBook};
