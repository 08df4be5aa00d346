//! Run configuration file (TOML, one section per stage).
//!
//! ```toml
//! [paths]
//! corpus = "corpus.csv"
//! criteria = "criteria.txt"
//! out_dir = "out"
//!
//! [split]
//! train_size = 315
//! seed = 7
//! mode = "enriched"
//! enrichment_target = 0.384
//!
//! [inference]
//! temperatures = [0.1, 0.4, 0.8]
//! endpoint = "http://localhost:8000/v1/chat/completions"
//! model = "screening-model"
//! ```
//!
//! Relative paths are resolved against the directory holding the config file. Unknown
//! keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::agreement::BootstrapSpec;
use crate::corpus::{CorpusFormat, SplitSpec};
use crate::inference::InferenceConfig;
use crate::promptkit::ChatMarkers;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("{key} = {path} does not exist")]
    Unresolvable { key: String, path: PathBuf },
    #[error("missing required setting {0}")]
    Missing(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathsSection {
    pub corpus: Option<PathBuf>,
    pub corpus_format: Option<CorpusFormat>,
    pub template: Option<PathBuf>,
    pub criteria: Option<PathBuf>,
    pub split_manifest: Option<PathBuf>,
    pub ledger: Option<PathBuf>,
    pub replay: Option<PathBuf>,
    pub record: Option<PathBuf>,
    pub ratings: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InferenceSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    /// Which split of the manifest to screen: `test`, `train` or `all` (whole corpus).
    pub subset: String,
    #[serde(flatten)]
    pub config: InferenceConfig,
}

impl Default for InferenceSection {
    fn default() -> Self {
        Self {
            endpoint: None,
            model: None,
            subset: "test".into(),
            config: InferenceConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapSection {
    pub enabled: bool,
    #[serde(flatten)]
    pub spec: BootstrapSpec,
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self {
            enabled: true,
            spec: BootstrapSpec::default(),
        }
    }
}

// `flatten` cannot be combined with `deny_unknown_fields`, so the two sections that
// extend a library struct peel off their own keys and hand the rest to the strict type.
fn take_key<T, E>(table: &mut toml::Table, key: &str) -> Result<Option<T>, E>
where
    T: serde::de::DeserializeOwned,
    E: serde::de::Error,
{
    table
        .remove(key)
        .map(|v| v.try_into().map_err(|e| E::custom(format!("{key}: {e}"))))
        .transpose()
}

impl<'de> Deserialize<'de> for InferenceSection {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(deserializer)?;
        let endpoint = take_key(&mut table, "endpoint")?;
        let model = take_key(&mut table, "model")?;
        let subset = take_key(&mut table, "subset")?.unwrap_or_else(|| "test".to_string());
        let config = toml::Value::Table(table).try_into().map_err(serde::de::Error::custom)?;
        Ok(Self {
            endpoint,
            model,
            subset,
            config,
        })
    }
}

impl<'de> Deserialize<'de> for BootstrapSection {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let mut table = toml::Table::deserialize(deserializer)?;
        let enabled = take_key(&mut table, "enabled")?.unwrap_or(true);
        let spec = toml::Value::Table(table).try_into().map_err(serde::de::Error::custom)?;
        Ok(Self { enabled, spec })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "text" => Ok(ReportFormat::Text),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub paths: PathsSection,
    pub split: Option<SplitSpec>,
    pub markers: Option<ChatMarkers>,
    pub inference: InferenceSection,
    pub bootstrap: BootstrapSection,
    pub report: ReportSection,
}

impl RunConfigFile {
    pub fn parse(text: &str, path: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Reads the file and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg = Self::parse(&text, path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.paths.resolve_against(base);
        Ok(cfg)
    }
}

impl PathsSection {
    fn resolve_against(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        for p in [
            &mut self.corpus,
            &mut self.template,
            &mut self.criteria,
            &mut self.split_manifest,
            &mut self.ledger,
            &mut self.replay,
            &mut self.record,
            &mut self.ratings,
            &mut self.out_dir,
        ] {
            fix(p);
        }
    }
}

/// The value of a required path setting, checked to exist.
pub fn require_existing(key: &str, path: Option<&Path>) -> Result<PathBuf, ConfigError> {
    let path = path.ok_or_else(|| ConfigError::Missing(key.to_string()))?;
    if !path.exists() {
        return Err(ConfigError::Unresolvable {
            key: key.to_string(),
            path: path.to_path_buf(),
        });
    }
    Ok(path.to_path_buf())
}
