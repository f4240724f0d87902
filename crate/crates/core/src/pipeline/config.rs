use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::decision::{DecisionRule, MockOracleConfig, Normalization, RemoteConfig};
use crate::extraction::ExtractionConfig;
use crate::kb::{RelationKind, DEFAULT_POOL_TOP_K};

pub const ENDPOINT_ENV: &str = "CC_SCORER_ENDPOINT";
pub const DEFAULT_GZIP_THRESHOLD: u64 = 8 << 20;

/// A run configuration, read from TOML. Relative paths resolve against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Usually supplied on the command line.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing)]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub prompts: PromptsConfig,
    #[serde(default)]
    pub scoring: ScoringConfig,
    #[serde(default)]
    pub report: ReportConfig,
    #[serde(default)]
    pub artifacts: ArtifactConfig,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dump: PathBuf,
    pub dataset: PathBuf,
    pub word_list: PathBuf,
    pub frequency_list: PathBuf,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// Relations kept at ingestion; all fourteen when absent.
    #[serde(default)]
    pub relations: Option<Vec<RelationKind>>,
}

fn default_top_k() -> usize {
    DEFAULT_POOL_TOP_K
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptsConfig {
    /// Alternate prompt file; the built-in one when absent.
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScoringConfig {
    pub backend: BackendKind,
    pub rule: DecisionRule,
    pub normalization: Normalization,
    pub mock: MockOracleConfig,
    /// `c1<TAB>Relation<TAB>c2` lines the mock always knows.
    pub known_facts: Option<PathBuf>,
    pub remote: Option<RemoteConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReportConfig {
    pub concept_top: usize,
    pub concept_min_count: usize,
    pub relation_min_count: usize,
}

impl Default for ReportConfig {
    fn default() -> Self {
        ReportConfig {
            concept_top: crate::metrics::CONCEPT_BREAKDOWN_TOP,
            concept_min_count: crate::metrics::CONCEPT_BREAKDOWN_MIN_COUNT,
            relation_min_count: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactConfig {
    /// Line-delimited artifacts larger than this are written gzip-compressed.
    pub gzip_threshold_bytes: u64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        ArtifactConfig {
            gzip_threshold_bytes: DEFAULT_GZIP_THRESHOLD,
        }
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<RunConfig, PipelineError> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        if let Ok(endpoint) = std::env::var(ENDPOINT_ENV) {
            if !endpoint.is_empty() {
                cfg.set_endpoint(endpoint);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("reading {}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_toml_str(&text, &base)
    }

    /// Points the remote backend at `endpoint`, creating its section if
    /// needed.
    pub fn set_endpoint(&mut self, endpoint: String) {
        match &mut self.scoring.remote {
            Some(remote) => remote.endpoint = endpoint,
            None => self.scoring.remote = Some(RemoteConfig::new(endpoint, "default")),
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.data.top_k == 0 {
            return bad("data.top_k must be positive".into());
        }
        if self.extraction.max_ngram == 0 {
            return bad("extraction.max_ngram must be positive".into());
        }
        if let Some(relations) = &self.data.relations {
            if relations.is_empty() {
                return bad("data.relations must not be empty".into());
            }
            if relations.iter().collect::<BTreeSet<_>>().len() != relations.len() {
                return bad("data.relations lists a relation twice".into());
            }
        }
        self.scoring.mock.validate().map_err(PipelineError::Config)?;
        if self.scoring.backend == BackendKind::Remote && self.scoring.remote.is_none() {
            return bad(format!(
                "remote backend selected but no [scoring.remote] section or {ENDPOINT_ENV}"
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn relations(&self) -> Vec<RelationKind> {
        self.data
            .relations
            .clone()
            .unwrap_or_else(|| RelationKind::ALL.to_vec())
    }

    pub fn require_seed(&self) -> Result<u64, PipelineError> {
        self.seed
            .ok_or_else(|| PipelineError::Config("a seed is required for this stage (--seed)".into()))
    }
}
