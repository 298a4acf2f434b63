use std::path::PathBuf;

use fewl::config::ConfigError;
use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dataset(#[from] fewl::dataset::DatasetError),
    #[error("{0}")]
    Provider(String),
    #[error(transparent)]
    Pipeline(#[from] fewl::pipeline::PipelineError),
    #[error(transparent)]
    Ranking(#[from] fewl::ranking::RankingError),
    #[error(transparent)]
    Curate(#[from] fewl::curate::CurateError),
    #[error(transparent)]
    Theory(#[from] fewl::theorylab::TheoryError),
    #[error(transparent)]
    Cache(#[from] fewl::providers::CacheError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("theory checks failed")]
    ChecksFailed,
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }

    fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(ConfigError::MissingKey(_)) => "missing_config_key",
            CliError::Config(_) => "config",
            CliError::Dataset(_) => "dataset",
            CliError::Provider(_) => "provider",
            CliError::Pipeline(_) => "pipeline",
            CliError::Ranking(_) => "ranking",
            CliError::Curate(_) => "curate",
            CliError::Theory(_) => "theory",
            CliError::Cache(_) => "cache",
            CliError::Io { .. } => "io",
            CliError::Json { .. } => "json",
            CliError::ChecksFailed => "checks_failed",
        }
    }

    /// One-line machine-readable form for stderr.
    pub fn to_json(&self) -> String {
        let mut v = json!({"error": self.kind(), "message": self.to_string()});
        if let CliError::Config(e) = self {
            if let Some(key) = e.key() {
                v["key"] = json!(key);
            }
        }
        v.to_string()
    }
}
