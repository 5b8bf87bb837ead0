//! TOML configuration with environment overrides.

use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use serde::Deserialize;
use stylemirror::embedding::DEFAULT_SEED;
use stylemirror::ChunkMode;

pub const ENV_CONFIG: &str = "STYLEMIRROR_CONFIG";
pub const ENV_STATE: &str = "STYLEMIRROR_STATE";
pub const ENV_EMBEDDER_URL: &str = "STYLEMIRROR_EMBEDDER_URL";

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderChoice {
    Builtin,
    /// Base URL of a server speaking the `/embed` protocol.
    Remote(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub min_support: f64,
    pub chunk_mode: ChunkMode,
    pub embedder: EmbedderChoice,
    pub lm_order: usize,
    pub smoothing_k: f64,
    pub candidate_cap: usize,
    pub seed: u64,
    pub stopword_path: Option<PathBuf>,
    pub state_path: PathBuf,
    pub gec_command: Option<String>,
    /// Per-request timeout for the remote embedder, in seconds.
    pub remote_timeout_secs: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            min_support: 0.006,
            chunk_mode: ChunkMode::Phrase,
            embedder: EmbedderChoice::Builtin,
            lm_order: 3,
            smoothing_k: 0.1,
            candidate_cap: 512,
            seed: DEFAULT_SEED,
            stopword_path: None,
            state_path: PathBuf::from("stylemirror.state.json"),
            gec_command: None,
            remote_timeout_secs: 30,
        }
    }
}

/// Invalid configuration, reported as a usage error.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::error::Error for ConfigError {}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in config {}", path.display()))
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| -> Result<()> { Err(ConfigError(m).into()) };
        if !(self.min_support > 0.0 && self.min_support <= 1.0) {
            return err(format!("min_support {} outside (0, 1]", self.min_support));
        }
        if !(2..=6).contains(&self.lm_order) {
            return err(format!("lm_order {} outside 2..=6", self.lm_order));
        }
        if !(self.smoothing_k.is_finite() && self.smoothing_k > 0.0) {
            return err(format!("smoothing_k {} must be positive", self.smoothing_k));
        }
        if self.candidate_cap == 0 {
            return err("candidate_cap must be at least 1".into());
        }
        if self.remote_timeout_secs == 0 {
            return err("remote_timeout_secs must be at least 1".into());
        }
        if let EmbedderChoice::Remote(url) = &self.embedder {
            if !(url.starts_with("http://") || url.starts_with("https://")) {
                return err(format!("remote embedder URL {url:?} is not http(s)"));
            }
        }
        Ok(())
    }

    /// Apply `STYLEMIRROR_STATE` and `STYLEMIRROR_EMBEDDER_URL`.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(p) = get(ENV_STATE).filter(|s| !s.is_empty()) {
            self.state_path = PathBuf::from(p);
        }
        if let Some(u) = get(ENV_EMBEDDER_URL).filter(|s| !s.is_empty()) {
            self.embedder = EmbedderChoice::Remote(u);
        }
        self.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let cfg = Config::parse("").unwrap();
        assert_eq!(cfg, Config::default());
        let cfg = Config::parse(
            "min_support = 0.05\nchunk_mode = \"token\"\nembedder = { remote = \"http://localhost:9\" }\n",
        )
        .unwrap();
        assert_eq!(cfg.min_support, 0.05);
        assert_eq!(cfg.chunk_mode, ChunkMode::Token);
        assert_eq!(cfg.embedder, EmbedderChoice::Remote("http://localhost:9".into()));
    }

    #[test]
    fn rejects_unknown_and_out_of_range() {
        assert!(Config::parse("min_suport = 0.1").is_err());
        assert!(Config::parse("min_support = 0.0").is_err());
        assert!(Config::parse("lm_order = 1").is_err());
        assert!(Config::parse("smoothing_k = -1.0").is_err());
        assert!(Config::parse("candidate_cap = 0").is_err());
        assert!(Config::parse("embedder = { remote = \"ftp://x\" }").is_err());
    }

    #[test]
    fn environment_wins() {
        let mut cfg = Config::default();
        cfg.apply_env(|k| match k {
            ENV_STATE => Some("/tmp/x.json".into()),
            ENV_EMBEDDER_URL => Some("http://127.0.0.1:1".into()),
            _ => None,
        })
        .unwrap();
        assert_eq!(cfg.state_path, PathBuf::from("/tmp/x.json"));
        assert_eq!(cfg.embedder, EmbedderChoice::Remote("http://127.0.0.1:1".into()));
    }
}
