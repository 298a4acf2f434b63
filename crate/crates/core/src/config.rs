//! TOML run configuration: `[scoring]`, `[embedding]`, `[generator]`,
//! `[[references]]` and `[run]`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::providers::{ProviderConfig, ProviderMode};
use crate::scoring::ScoringConfig;
use crate::similarity::{EmbeddingConfig, EmbeddingMode};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("missing config key {0}")]
    MissingKey(String),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("config syntax: {0}")]
    Syntax(String),
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

impl ConfigError {
    /// The dotted key a [`ConfigError::MissingKey`] refers to.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::MissingKey(k) => Some(k),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_seed() -> u64 {
    1
}

fn default_concurrency() -> usize {
    8
}

impl Default for RunSettings {
    fn default() -> Self {
        Self { seed: default_seed(), max_concurrency: default_concurrency(), cache_dir: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub scoring: ScoringConfig,
    pub embedding: EmbeddingConfig,
    /// Model producing the wrong/corrected pairs.
    pub generator: ProviderConfig,
    pub references: Vec<ProviderConfig>,
    #[serde(default)]
    pub run: RunSettings,
}

const SCORING_KEYS: [&str; 11] = [
    "divergence",
    "n_contrastive",
    "n_neighbors",
    "neighbor_bounds",
    "penalty_source",
    "random_pool_count",
    "random_pool_hi",
    "temperature_tau",
    "lambda_mode",
    "reference_mode",
    "penalty_enabled",
];

fn require(table: &toml::Table, section: &str, keys: &[&str]) -> Result<(), ConfigError> {
    let Some(inner) = table.get(section) else {
        return Err(ConfigError::MissingKey(section.to_string()));
    };
    let Some(inner) = inner.as_table() else {
        return Err(ConfigError::Invalid(format!("{section} must be a table")));
    };
    for key in keys {
        if !inner.contains_key(*key) {
            return Err(ConfigError::MissingKey(format!("{section}.{key}")));
        }
    }
    Ok(())
}

fn resolve(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Syntax(e.message().to_string()))?;
        require(&table, "scoring", &SCORING_KEYS)?;
        if let Some(b) = table.get("scoring").and_then(|s| s.get("neighbor_bounds")).and_then(|b| b.as_table()) {
            for key in ["lo", "hi"] {
                if !b.contains_key(key) {
                    return Err(ConfigError::MissingKey(format!("scoring.neighbor_bounds.{key}")));
                }
            }
        }
        require(&table, "embedding", &["dim"])?;
        require(&table, "generator", &["id", "model", "mode"])?;
        match table.get("references").and_then(|r| r.as_array()) {
            None => return Err(ConfigError::MissingKey("references".into())),
            Some(refs) if refs.is_empty() => return Err(ConfigError::Invalid("at least one [[references]] entry is required".into())),
            Some(refs) => {
                for (i, r) in refs.iter().enumerate() {
                    for key in ["id", "model", "mode"] {
                        if r.get(key).is_none() {
                            return Err(ConfigError::MissingKey(format!("references[{i}].{key}")));
                        }
                    }
                }
            }
        }
        let config: RunConfig = table.try_into().map_err(|e: toml::de::Error| ConfigError::Invalid(e.message().to_string()))?;
        config.validate()?;
        Ok(config)
    }

    /// Loads a config file; relative paths inside resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        let mut config = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.embedding.fixture_dir);
        resolve(base, &mut self.run.cache_dir);
        for p in std::iter::once(&mut self.generator).chain(self.references.iter_mut()) {
            resolve(base, &mut p.fixture_dir);
            resolve(base, &mut p.mock_responses);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scoring.validate().map_err(ConfigError::Invalid)?;
        if self.embedding.dim < 2 {
            return Err(ConfigError::Invalid("embedding.dim must be at least 2".into()));
        }
        if self.run.max_concurrency == 0 {
            return Err(ConfigError::Invalid("run.max_concurrency must be positive".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for r in &self.references {
            if !seen.insert(r.id.as_str()) {
                return Err(ConfigError::Invalid(format!("duplicate reference id {:?}", r.id)));
            }
        }
        if let Some(single) = &self.scoring.single_reference {
            if !seen.contains(single.as_str()) {
                return Err(ConfigError::Invalid(format!("scoring.single_reference {single:?} is not a configured reference")));
            }
        }
        Ok(())
    }

    /// Forces every provider and the embedder into one mode.
    pub fn override_mode(&mut self, mode: ProviderMode) {
        self.generator.mode = mode;
        for r in &mut self.references {
            r.mode = mode;
        }
        self.embedding.mode = match mode {
            ProviderMode::Live => EmbeddingMode::Live,
            ProviderMode::Replay => EmbeddingMode::Replay,
            ProviderMode::Mock => EmbeddingMode::Mock,
        };
    }

    /// Reference whose sampled answers feed the multi-sample cell.
    pub fn single_reference(&self) -> &ProviderConfig {
        self.scoring.single_reference.as_ref().and_then(|id| self.references.iter().find(|r| &r.id == id)).unwrap_or(&self.references[0])
    }
}
