//! Agent, tool and task definitions, and zero-shot prompt rendering.
//!
//! The definitions live in a TOML file so they can be audited and swapped
//! without rebuilding; [`PromptBook::default`] uses the bundled copy.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUNDLED: &str = include_str!("../data/prompts.toml");

#[derive(Debug, Error)]
pub enum PromptError {
    #[error("reading prompt book: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing prompt book: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid prompt book: {0}")]
    Invalid(String),
    #[error("task {task:?} is not assigned to agent {agent:?}")]
    WrongAgent { task: String, agent: String },
    #[error("task {task:?} is missing context from {missing:?}")]
    MissingContext { task: String, missing: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    /// Fetches catalog rows.
    Catalogue,
    /// Fetches a user's history rows, truncated to `result_limit`.
    UserHistory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub kind: ToolKind,
    pub description: String,
    /// Path (and query) relative to the service base URL.
    pub endpoint_template: String,
    #[serde(default)]
    pub result_limit: Option<usize>,
}

impl ToolSpec {
    pub fn resolve_url(&self, base_url: &str, user_id: &str) -> String {
        format!(
            "{}{}",
            base_url.trim_end_matches('/'),
            self.endpoint_template.replace("{user_id}", user_id)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub name: String,
    pub role: String,
    pub goal: String,
    pub backstory: String,
    #[serde(default)]
    pub tool: Option<String>,
}

/// What the pipeline reads out of a task's answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskOutput {
    Text,
    Genres,
    Recommendations,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub key: String,
    pub agent: String,
    pub description: String,
    pub expected_output: String,
    pub output: TaskOutput,
    /// Keys of earlier tasks whose answers this task sees.
    #[serde(default)]
    pub context: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBook {
    pub tools: Vec<ToolSpec>,
    pub agents: Vec<AgentSpec>,
    pub tasks: Vec<TaskSpec>,
}

impl Default for PromptBook {
    fn default() -> Self {
        Self::parse(BUNDLED).expect("bundled prompt book is valid")
    }
}

impl PromptBook {
    pub fn parse(text: &str) -> Result<Self, PromptError> {
        let book: PromptBook = toml::from_str(text)?;
        book.validate()?;
        Ok(book)
    }

    pub fn load(path: &Path) -> Result<Self, PromptError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn bundled_source() -> &'static str {
        BUNDLED
    }

    pub fn agent(&self, name: &str) -> Option<&AgentSpec> {
        self.agents.iter().find(|a| a.name == name)
    }

    pub fn tool(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn task(&self, key: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.key == key)
    }

    pub fn agent_tool(&self, agent: &AgentSpec) -> Option<&ToolSpec> {
        agent.tool.as_deref().and_then(|t| self.tool(t))
    }

    fn validate(&self) -> Result<(), PromptError> {
        let invalid = |msg: String| Err(PromptError::Invalid(msg));
        let mut names = HashSet::new();
        for tool in &self.tools {
            if !names.insert(tool.name.as_str()) {
                return invalid(format!("duplicate tool {:?}", tool.name));
            }
            if !tool.endpoint_template.starts_with('/') {
                return invalid(format!("tool {:?} endpoint must start with '/'", tool.name));
            }
            if tool.result_limit == Some(0) {
                return invalid(format!("tool {:?} has a zero result limit", tool.name));
            }
        }
        names.clear();
        for agent in &self.agents {
            if !names.insert(agent.name.as_str()) {
                return invalid(format!("duplicate agent {:?}", agent.name));
            }
            if agent.goal.trim().is_empty() || agent.backstory.trim().is_empty() {
                return invalid(format!("agent {:?} needs a goal and a backstory", agent.name));
            }
            if let Some(tool) = &agent.tool {
                if self.tool(tool).is_none() {
                    return invalid(format!("agent {:?} uses unknown tool {tool:?}", agent.name));
                }
            }
        }
        let mut earlier: HashSet<&str> = HashSet::new();
        for task in &self.tasks {
            let Some(agent) = self.agent(&task.agent) else {
                return invalid(format!("task {:?} uses unknown agent {:?}", task.key, task.agent));
            };
            if task.description.contains("{url}") && agent.tool.is_none() {
                return invalid(format!("task {:?} mentions {{url}} but its agent has no tool", task.key));
            }
            for dep in &task.context {
                if !earlier.contains(dep.as_str()) {
                    return invalid(format!(
                        "task {:?} takes context from {dep:?}, which does not run before it",
                        task.key
                    ));
                }
            }
            if !earlier.insert(task.key.as_str()) {
                return invalid(format!("duplicate task {:?}", task.key));
            }
        }
        if self.tasks.is_empty() {
            return invalid("no tasks".into());
        }
        Ok(())
    }

    /// Task with `{url}` and `{user_id}` expanded for one run.
    pub fn resolve_task(&self, task: &TaskSpec, base_url: &str, user_id: &str) -> TaskSpec {
        let url = self
            .agent(&task.agent)
            .and_then(|a| self.agent_tool(a))
            .map(|t| t.resolve_url(base_url, user_id))
            .unwrap_or_default();
        TaskSpec {
            description: task
                .description
                .replace("{url}", &url)
                .replace("{user_id}", user_id),
            ..task.clone()
        }
    }
}

/// Where a piece of prompt context came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "name", rename_all = "snake_case")]
pub enum ContextSource {
    Task(String),
    Tool(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextEntry {
    pub source: ContextSource,
    pub text: String,
}

const CONTEXT_INTRO: &str = "This is the context you're working with:";

fn section_header(source: &ContextSource) -> String {
    match source {
        ContextSource::Task(key) => format!("--- output of task {key} ---"),
        ContextSource::Tool(name) => format!("--- result of tool {name} ---"),
    }
}

/// Renders one zero-shot prompt: role, goal, backstory, task, expected
/// output, then the context sections the task declares followed by the
/// agent's tool result. No examples are injected.
pub fn render_prompt(
    agent: &AgentSpec,
    task: &TaskSpec,
    context: &[ContextEntry],
) -> Result<String, PromptError> {
    if task.agent != agent.name {
        return Err(PromptError::WrongAgent {
            task: task.key.clone(),
            agent: agent.name.clone(),
        });
    }
    let mut sections: Vec<&ContextEntry> = Vec::new();
    for dep in &task.context {
        let source = ContextSource::Task(dep.clone());
        let entry = context
            .iter()
            .find(|e| e.source == source)
            .ok_or_else(|| PromptError::MissingContext {
                task: task.key.clone(),
                missing: dep.clone(),
            })?;
        sections.push(entry);
    }
    if let Some(tool) = &agent.tool {
        let source = ContextSource::Tool(tool.clone());
        let entry = context
            .iter()
            .find(|e| e.source == source)
            .ok_or_else(|| PromptError::MissingContext {
                task: task.key.clone(),
                missing: tool.clone(),
            })?;
        sections.push(entry);
    }

    let mut prompt = format!(
        "You are {role}.\nYour personal goal is: {goal}\n{backstory}\n\nCurrent task: {description}\n\nThis is the expected criteria for your final answer: {expected}\n",
        role = agent.role,
        goal = agent.goal,
        backstory = agent.backstory,
        description = task.description,
        expected = task.expected_output,
    );
    if !sections.is_empty() {
        prompt.push('\n');
        prompt.push_str(CONTEXT_INTRO);
        prompt.push('\n');
        for entry in sections {
            prompt.push_str(&section_header(&entry.source));
            prompt.push('\n');
            prompt.push_str(entry.text.trim_end());
            prompt.push('\n');
        }
    }
    Ok(prompt)
}

/// Splits the context part of a rendered prompt back into sections.
pub fn context_sections(prompt: &str) -> Vec<(ContextSource, String)> {
    let Some((_, tail)) = prompt.split_once(CONTEXT_INTRO) else {
        return Vec::new();
    };
    let mut out: Vec<(ContextSource, String)> = Vec::new();
    for line in tail.lines() {
        let header = line
            .strip_prefix("--- ")
            .and_then(|l| l.strip_suffix(" ---"));
        let source = header.and_then(|h| {
            if let Some(key) = h.strip_prefix("output of task ") {
                Some(ContextSource::Task(key.to_string()))
            } else {
                h.strip_prefix("result of tool ")
                    .map(|name| ContextSource::Tool(name.to_string()))
            }
        });
        match (source, out.last_mut()) {
            (Some(source), _) => out.push((source, String::new())),
            (None, Some((_, body))) => {
                if !body.is_empty() {
                    body.push('\n');
                }
                body.push_str(line);
            }
            (None, None) => {}
        }
    }
    out
}
