//! Staged, resumable runs.
//!
//! Stages run in a fixed order, each reading only the artifacts of earlier
//! stages from the run directory. `manifest.json` records every artifact's
//! digest plus a fingerprint of the inputs that produced it; a stage whose
//! fingerprint and artifacts are unchanged is skipped, and upstream
//! artifacts are re-verified before any stage runs.

mod artifacts;
mod config;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

pub use artifacts::{locate, read_json, read_jsonl, ArtifactHeader, FileEntry, SCHEMA_VERSION};
pub use config::{
    ArtifactConfig, BackendKind, DataConfig, PromptsConfig, ReportConfig, RunConfig, ScoringConfig,
    DEFAULT_GZIP_THRESHOLD, ENDPOINT_ENV,
};
pub use report::{write_report, ReportRow};

use crate::dataset::{load_dataset, DatasetError};
use crate::decision::{
    decide_anchor, decide_fact, AnchorDecision, MockOracle, RemoteScorer, ScoreError, Scorer, Verdict,
};
use crate::extraction::{build_background_set, AnchorExample, BackgroundSet, MiningError};
use crate::hashing::sha256_hex;
use crate::kb::{
    build_dictionary_pool, decode_store, encode_store, parse_dump_file, parse_fact_line, read_frequency_list,
    read_word_list, Concept, Fact, KbError,
};
use crate::metrics::{
    bias_report, breakdown, conceptual_consistency, relation_mean_background, score_record, BiasRow, BreakdownMode,
    BreakdownRow, ConsistencyResult, Degeneracy, MetricsError, RelationMean, ScoreRecord,
};
use crate::prompt::{PromptError, PromptSet};

pub const MANIFEST: &str = "manifest.json";
pub const KB_FILE: &str = "kb.bin";
pub const ANCHORS_FILE: &str = "anchors.jsonl";
pub const BACKGROUND_FILE: &str = "background.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const DECISIONS_FILE: &str = "anchor_decisions.jsonl";
pub const SCORES_FILE: &str = "scores.jsonl";
pub const METRICS_FILE: &str = "metrics.json";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("stage `{stage}` has not completed: {detail}")]
    MissingStage { stage: Stage, detail: String },
    #[error("scoring backend: {0}")]
    Backend(#[from] ScoreError),
}

impl PipelineError {
    pub fn io(path: &Path, source: std::io::Error) -> PipelineError {
        PipelineError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 2 for configuration, 4 for backend, 3 for data and I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::Backend(_) => 4,
            _ => 3,
        }
    }
}

impl From<KbError> for PipelineError {
    fn from(e: KbError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<MiningError> for PipelineError {
    fn from(e: MiningError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

impl From<PromptError> for PipelineError {
    fn from(e: PromptError) -> Self {
        PipelineError::Config(e.to_string())
    }
}

impl From<MetricsError> for PipelineError {
    fn from(e: MetricsError) -> Self {
        PipelineError::Data(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Extract,
    Score,
    Metrics,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 5] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::Score,
        Stage::Metrics,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::Score => "score",
            Stage::Metrics => "metrics",
            Stage::Report => "report",
        }
    }

    /// Stages whose artifacts this one reads.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Extract => &[Stage::Ingest],
            Stage::Score => &[Stage::Extract],
            Stage::Metrics => &[Stage::Extract, Stage::Score],
            Stage::Report => &[Stage::Metrics],
        }
    }

    pub fn needs_seed(self) -> bool {
        matches!(self, Stage::Extract | Stage::Score)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub fingerprint: String,
    /// Digests of external input files read by the stage.
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, FileEntry>,
    pub counts: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Manifest {
    fn new(config: &RunConfig) -> Manifest {
        Manifest {
            tool_version: env!("CARGO_PKG_VERSION").to_owned(),
            seed: config.seed,
            config: serde_json::to_value(config).expect("config serializes"),
            stages: BTreeMap::new(),
        }
    }

    pub fn load(run_dir: &Path) -> Result<Option<Manifest>, PipelineError> {
        let path = run_dir.join(MANIFEST);
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }
}

/// Run-level results written by the metrics stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub seed: Option<u64>,
    pub backend: String,
    pub rule: crate::decision::DecisionRule,
    pub normalization: crate::decision::Normalization,
    pub n_anchors: usize,
    pub consistency: Option<ConsistencyResult>,
    /// Set when consistency is undefined, e.g. no anchor answered correctly.
    pub consistency_flag: Option<Degeneracy>,
    pub task_accuracy: f64,
    pub mean_s_b: Option<f64>,
    pub relation_background: RelationMean,
    pub bias: BiasRow,
    pub breakdown_relation: Vec<BreakdownRow>,
    pub breakdown_concept: Vec<BreakdownRow>,
}

pub fn backend_label(scoring: &ScoringConfig) -> String {
    match scoring.backend {
        BackendKind::Mock => {
            let m = &scoring.mock;
            format!(
                "mock(knowledge_rate={}, yes_bias={}, coupling={})",
                m.knowledge_rate, m.yes_bias, m.anchor_policy.coupling
            )
        }
        BackendKind::Remote => match &scoring.remote {
            Some(r) => format!("remote({})", r.model),
            None => "remote".into(),
        },
    }
}

fn file_digest(path: &Path) -> Result<String, PipelineError> {
    Ok(sha256_hex(&artifacts::read_raw(path)?))
}

pub struct Pipeline {
    config: RunConfig,
    run_dir: PathBuf,
    manifest: Manifest,
    force: bool,
}

impl Pipeline {
    /// Opens the run directory, keeping completed stages from an existing
    /// manifest. Without a seed, the one recorded there is reused.
    pub fn open(mut config: RunConfig) -> Result<Pipeline, PipelineError> {
        let run_dir = config.output_dir();
        std::fs::create_dir_all(&run_dir).map_err(|e| PipelineError::io(&run_dir, e))?;
        let old = Manifest::load(&run_dir)?;
        if config.seed.is_none() {
            config.seed = old.as_ref().and_then(|m| m.seed);
        }
        let mut manifest = Manifest::new(&config);
        if let Some(old) = old {
            manifest.stages = old.stages;
        }
        Ok(Pipeline {
            config,
            run_dir,
            manifest,
            force: false,
        })
    }

    /// Re-run selected stages even when their artifacts are current.
    pub fn force(mut self, force: bool) -> Self {
        self.force = force;
        self
    }

    pub fn run_dir(&self) -> &Path {
        &self.run_dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn run(&mut self, stages: &[Stage]) -> Result<&Manifest, PipelineError> {
        let mut ordered: Vec<Stage> = stages.to_vec();
        ordered.sort();
        ordered.dedup();
        if ordered.iter().any(|s| s.needs_seed()) {
            self.config.require_seed()?;
        }
        for stage in ordered {
            self.run_stage(stage)?;
        }
        Ok(&self.manifest)
    }

    fn verify(&self, stage: Stage) -> Result<(), PipelineError> {
        let record = self
            .manifest
            .stages
            .get(&stage)
            .ok_or_else(|| PipelineError::MissingStage {
                stage,
                detail: "no entry in the run manifest".into(),
            })?;
        for entry in record.artifacts.values() {
            let path = self.run_dir.join(&entry.path);
            if !path.exists() {
                return Err(PipelineError::MissingStage {
                    stage,
                    detail: format!("artifact {} is missing", entry.path),
                });
            }
            if file_digest(&path)? != entry.sha256 {
                return Err(PipelineError::Data(format!(
                    "artifact {} of stage `{stage}` no longer matches the manifest",
                    entry.path
                )));
            }
        }
        Ok(())
    }

    fn is_current(&self, stage: Stage, fingerprint: &str) -> bool {
        match self.manifest.stages.get(&stage) {
            Some(rec) => rec.fingerprint == fingerprint && self.verify(stage).is_ok(),
            None => false,
        }
    }

    fn inputs(&self, stage: Stage) -> Result<BTreeMap<String, String>, PipelineError> {
        let cfg = &self.config;
        let mut files: Vec<(&str, PathBuf)> = Vec::new();
        match stage {
            Stage::Ingest => {
                files.push(("dump", cfg.resolve(&cfg.data.dump)));
                files.push(("word_list", cfg.resolve(&cfg.data.word_list)));
                files.push(("frequency_list", cfg.resolve(&cfg.data.frequency_list)));
            }
            Stage::Extract => files.push(("dataset", cfg.resolve(&cfg.data.dataset))),
            Stage::Score => {
                if let Some(p) = &cfg.prompts.path {
                    files.push(("prompts", cfg.resolve(p)));
                }
                if let Some(p) = &cfg.scoring.known_facts {
                    files.push(("known_facts", cfg.resolve(p)));
                }
            }
            Stage::Metrics | Stage::Report => {}
        }
        files
            .into_iter()
            .map(|(name, path)| {
                if !path.exists() {
                    return Err(PipelineError::Config(format!(
                        "{name} file {} does not exist",
                        path.display()
                    )));
                }
                Ok((name.to_owned(), file_digest(&path)?))
            })
            .collect()
    }

    fn fingerprint(&self, stage: Stage, inputs: &BTreeMap<String, String>) -> String {
        let cfg = &self.config;
        let settings = match stage {
            Stage::Ingest => json!({"top_k": cfg.data.top_k, "relations": cfg.relations()}),
            Stage::Extract => json!({"extraction": cfg.extraction, "seed": cfg.seed}),
            Stage::Score => json!({"scoring": cfg.scoring, "prompts": cfg.prompts, "seed": cfg.seed}),
            Stage::Metrics | Stage::Report => json!({"report": cfg.report}),
        };
        let upstream: BTreeMap<&str, Vec<&str>> = stage
            .upstream()
            .iter()
            .map(|s| {
                let hashes = self
                    .manifest
                    .stages
                    .get(s)
                    .map(|r| r.artifacts.values().map(|e| e.sha256.as_str()).collect())
                    .unwrap_or_default();
                (s.name(), hashes)
            })
            .collect();
        let material = json!({
            "stage": stage,
            "settings": settings,
            "inputs": inputs,
            "upstream": upstream,
            "schema_version": SCHEMA_VERSION,
        });
        sha256_hex(material.to_string().as_bytes())
    }

    fn run_stage(&mut self, stage: Stage) -> Result<(), PipelineError> {
        for up in Stage::ALL.into_iter().filter(|&s| s < stage) {
            self.verify(up)?;
        }
        let inputs = self.inputs(stage)?;
        let fingerprint = self.fingerprint(stage, &inputs);
        if !self.force && self.is_current(stage, &fingerprint) {
            log::info!("stage {stage}: up to date");
            return Ok(());
        }
        log::info!("stage {stage}: running");
        let (artifacts, counts) = match stage {
            Stage::Ingest => self.ingest()?,
            Stage::Extract => self.extract()?,
            Stage::Score => self.score()?,
            Stage::Metrics => self.metrics()?,
            Stage::Report => self.report()?,
        };
        self.manifest.stages.retain(|&s, _| s <= stage);
        self.manifest.stages.insert(
            stage,
            StageRecord {
                fingerprint,
                inputs,
                artifacts,
                counts,
            },
        );
        if stage.needs_seed() {
            self.manifest.seed = self.config.seed;
        }
        self.save_manifest()
    }

    fn save_manifest(&self) -> Result<(), PipelineError> {
        artifacts::write_json(&self.run_dir, MANIFEST, &self.manifest).map(|_| ())
    }

    fn artifact_path(&self, stage: Stage, name: &str) -> Result<PathBuf, PipelineError> {
        locate(&self.run_dir, name).ok_or_else(|| PipelineError::MissingStage {
            stage,
            detail: format!("artifact {name} is missing"),
        })
    }

    fn gzip_threshold(&self) -> u64 {
        self.config.artifacts.gzip_threshold_bytes
    }

    fn ingest(&self) -> Result<StageOutput, PipelineError> {
        let cfg = &self.config;
        let (store, diag) = parse_dump_file(&cfg.resolve(&cfg.data.dump), &cfg.relations())?;
        let words = read_word_list(&cfg.resolve(&cfg.data.word_list))?;
        let frequencies = read_frequency_list(&cfg.resolve(&cfg.data.frequency_list))?;
        let in_kb = words
            .iter()
            .filter(|w| Concept::new(w).is_some_and(|c| store.contains(&c)))
            .map(String::as_str);
        let pool = build_dictionary_pool(in_kb, &frequencies, cfg.data.top_k)?;
        if pool.is_empty() {
            log::warn!("negative pool is empty: no word-list entry is both frequent and in the graph");
        }
        let entry = artifacts::write_bytes(&self.run_dir, KB_FILE, &encode_store(&store, &pool), u64::MAX)?;
        let counts = BTreeMap::from([
            ("rows".to_owned(), diag.rows),
            ("malformed".to_owned(), diag.malformed),
            ("filtered_relation".to_owned(), diag.filtered_relation),
            ("filtered_language".to_owned(), diag.filtered_language),
            ("duplicates".to_owned(), diag.duplicates),
            ("edges".to_owned(), store.edge_count() as u64),
            ("concepts".to_owned(), store.vocabulary().len() as u64),
            ("pool".to_owned(), pool.len() as u64),
        ]);
        Ok((BTreeMap::from([("kb".to_owned(), entry)]), counts))
    }

    fn extract(&self) -> Result<StageOutput, PipelineError> {
        let seed = self.config.require_seed()?;
        let kb = decode_store(&artifacts::read_raw(&self.artifact_path(Stage::Ingest, KB_FILE)?)?)?;
        let anchors = load_dataset(&self.config.resolve(&self.config.data.dataset))?;
        let mut ids = BTreeSet::new();
        if let Some(dup) = anchors.iter().find(|a| !ids.insert(a.id())) {
            return Err(PipelineError::Data(format!("anchor id `{}` appears twice", dup.id())));
        }
        let extraction = self.config.extraction;
        let backgrounds: Vec<BackgroundSet> = anchors
            .par_iter()
            .map(|a| build_background_set(a, &kb.store, &kb.pool, seed, &extraction))
            .collect::<Result<_, _>>()?;
        let header = |name| ArtifactHeader::new(name, Some(seed));
        let a = artifacts::write_jsonl(
            &self.run_dir,
            ANCHORS_FILE,
            &header("anchors"),
            &anchors,
            self.gzip_threshold(),
        )?;
        let b = artifacts::write_jsonl(
            &self.run_dir,
            BACKGROUND_FILE,
            &header("background"),
            &backgrounds,
            self.gzip_threshold(),
        )?;
        let sum = |f: &dyn Fn(&BackgroundSet) -> usize| backgrounds.iter().map(f).sum::<usize>() as u64;
        let counts = BTreeMap::from([
            ("anchors".to_owned(), anchors.len() as u64),
            ("anchors_with_background".to_owned(), sum(&|b| (!b.is_empty()) as usize)),
            ("positives".to_owned(), sum(&|b| b.pairs.len())),
            ("negatives".to_owned(), sum(&|b| b.negatives().count())),
            ("mining_failures".to_owned(), sum(&|b| b.mining_failures())),
            ("matched_concepts".to_owned(), sum(&|b| b.concepts.len())),
        ]);
        Ok((
            BTreeMap::from([("anchors".to_owned(), a), ("background".to_owned(), b)]),
            counts,
        ))
    }

    fn load_extracted(&self) -> Result<Extracted, PipelineError> {
        let (ha, anchors): (_, Vec<AnchorExample>) =
            read_jsonl(&self.artifact_path(Stage::Extract, ANCHORS_FILE)?, "anchors")?;
        let (_, backgrounds): (_, Vec<BackgroundSet>) =
            read_jsonl(&self.artifact_path(Stage::Extract, BACKGROUND_FILE)?, "background")?;
        if anchors.len() != backgrounds.len() || anchors.iter().zip(&backgrounds).any(|(a, b)| a.id() != b.anchor_id) {
            return Err(PipelineError::Data(
                "anchors and background artifacts are misaligned".into(),
            ));
        }
        Ok((anchors, backgrounds, ha.seed))
    }

    fn prompt_set(&self) -> Result<PromptSet, PipelineError> {
        match &self.config.prompts.path {
            Some(p) => Ok(PromptSet::from_path(&self.config.resolve(p))?),
            None => Ok(PromptSet::builtin()),
        }
    }

    pub fn build_scorer(&self) -> Result<Box<dyn Scorer>, PipelineError> {
        let scoring = &self.config.scoring;
        match scoring.backend {
            BackendKind::Mock => {
                let mut mock = scoring.mock.clone();
                mock.seed = self.config.require_seed()?;
                if let Some(path) = &scoring.known_facts {
                    mock.known_facts = read_known_facts(&self.config.resolve(path))?;
                }
                Ok(Box::new(MockOracle::new(mock).map_err(PipelineError::Config)?))
            }
            BackendKind::Remote => {
                let remote = scoring
                    .remote
                    .clone()
                    .ok_or_else(|| PipelineError::Config("remote backend has no endpoint".into()))?;
                Ok(Box::new(RemoteScorer::new(remote)?))
            }
        }
    }

    fn score(&self) -> Result<StageOutput, PipelineError> {
        let seed = self.config.require_seed()?;
        let (anchors, backgrounds, extract_seed) = self.load_extracted()?;
        if extract_seed != Some(seed) {
            let used = extract_seed.map_or_else(|| "none".to_owned(), |s| s.to_string());
            return Err(PipelineError::Config(format!(
                "seed {seed} differs from the seed used for extraction ({used}); rerun extract"
            )));
        }
        let prompts = self.prompt_set()?;
        let scorer = self.build_scorer()?;
        let scoring = &self.config.scoring;
        let facts: Vec<Fact> = backgrounds
            .iter()
            .flat_map(|b| b.facts().cloned())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let threads = rayon::ThreadPoolBuilder::new()
            .num_threads(scorer.max_in_flight().max(1))
            .build()
            .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
        let (verdicts, decisions) = threads.install(|| -> Result<_, PipelineError> {
            let verdicts: Vec<Verdict> = facts
                .par_iter()
                .map(|f| decide_fact(f, &prompts, scorer.as_ref(), scoring.rule, scoring.normalization))
                .collect::<Result<_, _>>()?;
            let decisions: Vec<AnchorDecision> = anchors
                .par_iter()
                .zip(&backgrounds)
                .map(|(a, b)| {
                    let positives: Vec<Fact> = b.positives().cloned().collect();
                    decide_anchor(a, &positives, &prompts, scorer.as_ref(), scoring.normalization)
                })
                .collect::<Result<_, _>>()?;
            Ok((verdicts, decisions))
        })?;
        let header = |name| ArtifactHeader::new(name, Some(seed));
        let v = artifacts::write_jsonl(
            &self.run_dir,
            VERDICTS_FILE,
            &header("verdicts"),
            &verdicts,
            self.gzip_threshold(),
        )?;
        let d = artifacts::write_jsonl(
            &self.run_dir,
            DECISIONS_FILE,
            &header("anchor_decisions"),
            &decisions,
            self.gzip_threshold(),
        )?;
        let fact_variants: usize = facts.iter().map(|f| prompts.enumerate_fact_variants(f).len()).sum();
        let anchor_variants: usize = anchors.iter().map(|a| prompts.enumerate_anchor_variants(a).len()).sum();
        let counts = BTreeMap::from([
            ("facts".to_owned(), facts.len() as u64),
            ("verdicts".to_owned(), verdicts.len() as u64),
            ("fact_variants".to_owned(), fact_variants as u64),
            ("anchor_variants".to_owned(), anchor_variants as u64),
            ("anchor_decisions".to_owned(), decisions.len() as u64),
        ]);
        Ok((
            BTreeMap::from([("verdicts".to_owned(), v), ("anchor_decisions".to_owned(), d)]),
            counts,
        ))
    }

    fn metrics(&self) -> Result<StageOutput, PipelineError> {
        let (_, backgrounds, seed) = self.load_extracted()?;
        let (_, verdicts): (_, Vec<Verdict>) =
            read_jsonl(&self.artifact_path(Stage::Score, VERDICTS_FILE)?, "verdicts")?;
        let (_, decisions): (_, Vec<AnchorDecision>) =
            read_jsonl(&self.artifact_path(Stage::Score, DECISIONS_FILE)?, "anchor_decisions")?;
        if decisions.len() != backgrounds.len() {
            return Err(PipelineError::Data("anchor decisions do not cover every anchor".into()));
        }
        let by_fact: HashMap<Fact, Verdict> = verdicts.iter().map(|v| (v.fact.clone(), v.clone())).collect();
        let records: Vec<ScoreRecord> = backgrounds
            .iter()
            .zip(&decisions)
            .map(|(b, d)| {
                if b.anchor_id != d.anchor_id {
                    return Err(PipelineError::Data(format!(
                        "decision for {} is out of order",
                        d.anchor_id
                    )));
                }
                Ok(score_record(b, d, &by_fact)?)
            })
            .collect::<Result<_, PipelineError>>()?;
        let summary = summarize(&self.config, seed, &records, &verdicts);
        let s = artifacts::write_jsonl(
            &self.run_dir,
            SCORES_FILE,
            &ArtifactHeader::new("scores", seed),
            &records,
            self.gzip_threshold(),
        )?;
        let m = artifacts::write_json(&self.run_dir, METRICS_FILE, &summary)?;
        let counts = BTreeMap::from([
            ("anchors".to_owned(), records.len() as u64),
            (
                "excluded".to_owned(),
                records.iter().filter(|r| r.s_b.is_none()).count() as u64,
            ),
            (
                "correct_anchors".to_owned(),
                records.iter().filter(|r| r.s_a == 1).count() as u64,
            ),
        ]);
        Ok((
            BTreeMap::from([("scores".to_owned(), s), ("metrics".to_owned(), m)]),
            counts,
        ))
    }

    fn report(&self) -> Result<StageOutput, PipelineError> {
        let summary: MetricsSummary = read_json(&self.artifact_path(Stage::Metrics, METRICS_FILE)?)?;
        let rows = [ReportRow {
            label: summary.backend.clone(),
            summary,
        }];
        let entries = write_report(&rows, &self.run_dir, REPORT_DIR)?;
        let count = entries.len() as u64;
        Ok((
            entries.into_iter().map(|e| (e.path.clone(), e)).collect(),
            BTreeMap::from([("files".to_owned(), count)]),
        ))
    }
}

type StageOutput = (BTreeMap<String, FileEntry>, BTreeMap<String, u64>);

/// Anchors, their backgrounds and the extraction seed.
type Extracted = (Vec<AnchorExample>, Vec<BackgroundSet>, Option<u64>);

pub fn summarize(
    config: &RunConfig,
    seed: Option<u64>,
    records: &[ScoreRecord],
    verdicts: &[Verdict],
) -> MetricsSummary {
    let (consistency, consistency_flag) = match conceptual_consistency(records) {
        Ok(c) => {
            let flag = c.degenerate;
            if flag == Some(Degeneracy::AllCorrect) {
                log::warn!("every scored anchor is correct; consistency is trivially 1");
            }
            (Some(c), flag)
        }
        Err(MetricsError::NoPositiveLabels) => {
            log::warn!("no anchor was answered correctly; consistency is undefined");
            (None, Some(Degeneracy::NoneCorrect))
        }
        Err(e) => {
            log::warn!("consistency is undefined: {e}");
            (None, None)
        }
    };
    let defined: Vec<f64> = records.iter().filter_map(|r| r.s_b).collect();
    let report = &config.report;
    MetricsSummary {
        seed,
        backend: backend_label(&config.scoring),
        rule: config.scoring.rule,
        normalization: config.scoring.normalization,
        n_anchors: records.len(),
        consistency,
        consistency_flag,
        task_accuracy: if records.is_empty() {
            0.0
        } else {
            records.iter().map(|r| r.s_a as f64).sum::<f64>() / records.len() as f64
        },
        mean_s_b: (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64),
        relation_background: relation_mean_background(verdicts),
        bias: bias_report("all", verdicts),
        breakdown_relation: breakdown(records, BreakdownMode::Relation, report.relation_min_count, None),
        breakdown_concept: breakdown(
            records,
            BreakdownMode::Concept,
            report.concept_min_count,
            Some(report.concept_top),
        ),
    }
}

pub fn read_known_facts(path: &Path) -> Result<BTreeSet<Fact>, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fact = parse_fact_line(line).ok_or_else(|| {
            PipelineError::Data(format!("{}:{}: expected c1<TAB>Relation<TAB>c2", path.display(), i + 1))
        })?;
        out.insert(fact);
    }
    Ok(out)
}

/// Loads the metrics of finished runs for a combined report.
pub fn load_summary(run_dir: &Path) -> Result<MetricsSummary, PipelineError> {
    let path = locate(run_dir, METRICS_FILE).ok_or_else(|| PipelineError::MissingStage {
        stage: Stage::Metrics,
        detail: format!("{} has no {METRICS_FILE}", run_dir.display()),
    })?;
    read_json(&path)
}
