use std::path::PathBuf;
use std::time::Duration;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_ENGINE_TIMEOUT: Duration = Duration::from_secs(300);

/// How the two LLM engines are backed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlmMode {
    /// Hosted models; requires `GROQ_API_KEY` / `GEMINI_API_KEY`.
    Live,
    /// Offline heuristic backends with a distinct salt per engine.
    Offline,
}

#[derive(Clone)]
pub struct Config {
    pub port: u16,
    pub data_dir: PathBuf,
    pub groq_api_key: Option<String>,
    pub gemini_api_key: Option<String>,
    pub groq_base_url: Option<String>,
    pub gemini_base_url: Option<String>,
    pub engine_timeout: Duration,
    pub llm_mode: LlmMode,
}

impl std::fmt::Debug for Config {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let set = |k: &Option<String>| if k.is_some() { "<set>" } else { "<unset>" };
        f.debug_struct("Config")
            .field("port", &self.port)
            .field("data_dir", &self.data_dir)
            .field("groq_api_key", &set(&self.groq_api_key))
            .field("gemini_api_key", &set(&self.gemini_api_key))
            .field("groq_base_url", &self.groq_base_url)
            .field("gemini_base_url", &self.gemini_base_url)
            .field("engine_timeout", &self.engine_timeout)
            .field("llm_mode", &self.llm_mode)
            .finish()
    }
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("invalid value {value:?} for {name}")]
pub struct ConfigError {
    pub name: &'static str,
    pub value: String,
}

impl Config {
    /// Reads `PORT`, `DATA_DIR`, `GROQ_API_KEY`, `GEMINI_API_KEY`,
    /// `ENGINE_TIMEOUT_SECONDS` and the optional base-URL overrides.
    pub fn from_lookup(lookup: impl Fn(&str) -> Option<String>) -> Result<Self, ConfigError> {
        let nonblank = |name: &str| lookup(name).filter(|v| !v.trim().is_empty());
        let port = match nonblank("PORT") {
            Some(v) => v.trim().parse().map_err(|_| ConfigError { name: "PORT", value: v })?,
            None => DEFAULT_PORT,
        };
        let engine_timeout = match nonblank("ENGINE_TIMEOUT_SECONDS") {
            Some(v) => match v.trim().parse::<f64>() {
                Ok(s) if s.is_finite() && s > 0.0 => Duration::from_secs_f64(s),
                _ => {
                    return Err(ConfigError {
                        name: "ENGINE_TIMEOUT_SECONDS",
                        value: v,
                    })
                }
            },
            None => DEFAULT_ENGINE_TIMEOUT,
        };
        Ok(Self {
            port,
            data_dir: nonblank("DATA_DIR").map_or_else(|| PathBuf::from("data"), PathBuf::from),
            groq_api_key: nonblank("GROQ_API_KEY"),
            gemini_api_key: nonblank("GEMINI_API_KEY"),
            groq_base_url: nonblank("GROQ_BASE_URL"),
            gemini_base_url: nonblank("GEMINI_BASE_URL"),
            engine_timeout,
            llm_mode: LlmMode::Live,
        })
    }

    pub fn from_env() -> Result<Self, ConfigError> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    /// Offline configuration rooted at `data_dir`, used by tests and `eval-sim`.
    pub fn offline(data_dir: impl Into<PathBuf>) -> Self {
        Self {
            port: 0,
            data_dir: data_dir.into(),
            groq_api_key: None,
            gemini_api_key: None,
            groq_base_url: None,
            gemini_base_url: None,
            engine_timeout: DEFAULT_ENGINE_TIMEOUT,
            llm_mode: LlmMode::Offline,
        }
    }

    /// Variable lookup handed to the backend factory.
    pub(crate) fn backend_var(&self, name: &str) -> Option<String> {
        match name {
            "GROQ_API_KEY" => self.groq_api_key.clone(),
            "GEMINI_API_KEY" => self.gemini_api_key.clone(),
            "GROQ_BASE_URL" => self.groq_base_url.clone(),
            "GEMINI_BASE_URL" => self.gemini_base_url.clone(),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars<'a>(pairs: &'a [(&'a str, &'a str)]) -> impl Fn(&str) -> Option<String> + 'a {
        move |k| pairs.iter().find(|(n, _)| *n == k).map(|(_, v)| v.to_string())
    }

    #[test]
    fn defaults_when_unset() {
        let c = Config::from_lookup(vars(&[])).unwrap();
        assert_eq!(c.port, DEFAULT_PORT);
        assert_eq!(c.data_dir, PathBuf::from("data"));
        assert_eq!(c.engine_timeout, DEFAULT_ENGINE_TIMEOUT);
        assert!(c.groq_api_key.is_none());
        assert_eq!(c.llm_mode, LlmMode::Live);
    }

    #[test]
    fn reads_every_variable() {
        let c = Config::from_lookup(vars(&[
            ("PORT", "9001"),
            ("DATA_DIR", "/tmp/tb"),
            ("GROQ_API_KEY", "g"),
            ("GEMINI_API_KEY", " "),
            ("ENGINE_TIMEOUT_SECONDS", "2.5"),
        ]))
        .unwrap();
        assert_eq!(c.port, 9001);
        assert_eq!(c.data_dir, PathBuf::from("/tmp/tb"));
        assert_eq!(c.groq_api_key.as_deref(), Some("g"));
        assert_eq!(c.gemini_api_key, None);
        assert_eq!(c.engine_timeout, Duration::from_millis(2500));
        assert!(!format!("{c:?}").contains("\"g\""));
    }

    #[test]
    fn rejects_bad_numbers() {
        assert_eq!(
            Config::from_lookup(vars(&[("PORT", "http")])).unwrap_err().name,
            "PORT"
        );
        assert!(Config::from_lookup(vars(&[("ENGINE_TIMEOUT_SECONDS", "-1")])).is_err());
    }
}
