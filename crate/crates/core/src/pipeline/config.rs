//! Pipeline configuration: one TOML file plus environment overrides for endpoints and
//! secrets. Relative paths resolve against the config file's directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::StageError;
use crate::corpus::SamplingConfig;
use crate::ingest::CountryCode;
use crate::labeling::{default_english_countries, LabelConfig, MappingTable};
use crate::par::Execution;

pub const ENV_METADATA_BASE_URL: &str = "L1DRIFT_METADATA_BASE_URL";
pub const ENV_CHAT_BASE_URL: &str = "L1DRIFT_CHAT_BASE_URL";
pub const ENV_MODEL: &str = "L1DRIFT_MODEL";
/// Bearer token for the chat-completion endpoint. Never written to manifests.
pub const ENV_CHAT_API_KEY: &str = "L1DRIFT_CHAT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Endpoints {
    /// `https://...` for the live API or `file://<dir>` to replay recorded works.
    pub metadata_base_url: String,
    pub chat_base_url: String,
    pub model: String,
    pub requests_per_second: f64,
    pub max_attempts: u32,
    /// Serve only from cache; any miss fails the stage.
    pub offline: bool,
    pub bypass_cache: bool,
}

impl Default for Endpoints {
    fn default() -> Self {
        Endpoints {
            metadata_base_url: crate::ingest::openalex::DEFAULT_BASE_URL.into(),
            chat_base_url: "http://localhost:8000/v1".into(),
            model: "Qwen/Qwen3-8B".into(),
            requests_per_second: 5.0,
            max_attempts: 4,
            offline: false,
            bypass_cache: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LabelingSection {
    pub english_countries: Vec<String>,
    /// CSV `country_code,label`; the built-in eight-country table when absent.
    pub mapping_table: Option<PathBuf>,
    /// JSON object name → raw model response. When set, no chat endpoint is used.
    pub origin_stub: Option<PathBuf>,
}

impl Default for LabelingSection {
    fn default() -> Self {
        LabelingSection {
            english_countries: default_english_countries().iter().map(|c| c.to_string()).collect(),
            mapping_table: None,
            origin_stub: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub alpha: f64,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection { alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub work_dir: PathBuf,
    pub cache_dir: PathBuf,
    /// One OpenAlex id or DOI per line, for `fetch`.
    pub ids: Option<PathBuf>,
    /// Papers dump for `label`; defaults to the fetch output.
    pub papers: Option<PathBuf>,
    /// Labeled pool for the evaluation corpus; defaults to the label output.
    pub eval_pool: Option<PathBuf>,
    /// Labeled pool for the training corpus; no training corpus when absent.
    pub train_pool: Option<PathBuf>,
    /// Evaluation and training corpora for `prompt`; default to the corpus outputs.
    pub eval_corpus: Option<PathBuf>,
    pub train_corpus: Option<PathBuf>,
    /// Few-shot exemplars JSONL `{title, abstract, label, era?}`.
    pub exemplars: Option<PathBuf>,
    /// Predictions JSONL `{paper_id, era, gold, raw_output}` for `evaluate`.
    pub predictions: Option<PathBuf>,
    /// Report or counts JSON for `compare`; defaults to the evaluate report.
    pub counts: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            work_dir: PathBuf::from("run"),
            cache_dir: PathBuf::from("cache"),
            ids: None,
            papers: None,
            eval_pool: None,
            train_pool: None,
            eval_corpus: None,
            train_corpus: None,
            exemplars: None,
            predictions: None,
            counts: None,
        }
    }
}

/// Which prompt files the `prompt` stage writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PromptRegime {
    /// Few-shot prompts for the evaluation corpus.
    Fewshot,
    /// Fine-tuning examples for the training corpus.
    Finetune,
    #[default]
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PromptSection {
    pub regime: PromptRegime,
}

/// QLoRA hyperparameters kept for the record. Nothing in this crate trains a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinetuneConfigRecord {
    pub epochs: u32,
    pub batch_size: u32,
    pub gradient_accumulation: u32,
    pub learning_rate: f64,
    pub lora_rank: u32,
    pub lora_alpha: u32,
    pub lora_dropout: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FinetuneRecords {
    pub qwen3_14b: FinetuneConfigRecord,
    pub gemma3_12b_it: FinetuneConfigRecord,
}

impl Default for FinetuneRecords {
    fn default() -> Self {
        FinetuneRecords {
            qwen3_14b: FinetuneConfigRecord {
                epochs: 2,
                batch_size: 8,
                gradient_accumulation: 4,
                learning_rate: 1.0e-3,
                lora_rank: 16,
                lora_alpha: 64,
                lora_dropout: 0.0001,
                weight_decay: 0.0,
            },
            gemma3_12b_it: FinetuneConfigRecord {
                epochs: 3,
                batch_size: 16,
                gradient_accumulation: 2,
                learning_rate: 2.0e-4,
                lora_rank: 16,
                lora_alpha: 32,
                lora_dropout: 0.1,
                weight_decay: 0.01,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub endpoints: Endpoints,
    pub labeling: LabelingSection,
    pub sampling: SamplingConfig,
    pub evaluation: EvaluationSection,
    pub prompt: PromptSection,
    pub paths: Paths,
    pub execution: Execution,
    pub finetune: FinetuneRecords,
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, StageError> {
        toml::from_str(s).map_err(|e| StageError::ConfigInvalid(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, applies env
    /// overrides and validates.
    pub fn load(path: &Path) -> Result<Self, StageError> {
        let text =
            std::fs::read_to_string(path).map_err(|e| StageError::ConfigInvalid(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.apply_env();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let p = &mut self.paths;
        fix(&mut p.work_dir);
        fix(&mut p.cache_dir);
        for opt in [
            &mut p.ids,
            &mut p.papers,
            &mut p.eval_pool,
            &mut p.train_pool,
            &mut p.eval_corpus,
            &mut p.train_corpus,
            &mut p.exemplars,
            &mut p.predictions,
            &mut p.counts,
            &mut self.labeling.mapping_table,
            &mut self.labeling.origin_stub,
        ]
        .into_iter()
        .flatten()
        {
            fix(opt);
        }
        if let Some(dir) = self.endpoints.metadata_base_url.strip_prefix("file://") {
            let dir = Path::new(dir);
            if dir.is_relative() {
                self.endpoints.metadata_base_url = format!("file://{}", base.join(dir).display());
            }
        }
    }

    pub fn apply_env(&mut self) {
        let get = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        if let Some(v) = get(ENV_METADATA_BASE_URL) {
            self.endpoints.metadata_base_url = v;
        }
        if let Some(v) = get(ENV_CHAT_BASE_URL) {
            self.endpoints.chat_base_url = v;
        }
        if let Some(v) = get(ENV_MODEL) {
            self.endpoints.model = v;
        }
    }

    pub fn validate(&self) -> Result<(), StageError> {
        let bad = |m: String| Err(StageError::ConfigInvalid(m));
        if !(self.evaluation.alpha > 0.0 && self.evaluation.alpha < 1.0) {
            return bad(format!("alpha {} not in (0, 1)", self.evaluation.alpha));
        }
        let rps = self.endpoints.requests_per_second;
        if rps.is_nan() || rps <= 0.0 {
            return bad("requests_per_second must be positive".into());
        }
        if self.endpoints.max_attempts == 0 {
            return bad("max_attempts must be at least 1".into());
        }
        self.english_countries()?;
        self.sampling.validate().map_err(|e| StageError::ConfigInvalid(e.to_string()))
    }

    pub fn english_countries(&self) -> Result<BTreeSet<CountryCode>, StageError> {
        self.labeling
            .english_countries
            .iter()
            .map(|c| CountryCode::parse(c).map_err(|e| StageError::ConfigInvalid(e.to_string())))
            .collect()
    }

    pub fn label_config(&self) -> Result<LabelConfig, StageError> {
        let mapping = match &self.labeling.mapping_table {
            Some(p) => {
                if !p.exists() {
                    return Err(StageError::MissingInput(p.clone()));
                }
                MappingTable::load(p).map_err(|e| StageError::ConfigInvalid(e.to_string()))?
            }
            None => MappingTable::default(),
        };
        Ok(LabelConfig { english_countries: self.english_countries()?, mapping })
    }

    pub fn stage_dir(&self, stage: super::Stage) -> PathBuf {
        self.paths.work_dir.join(stage.dir_name())
    }
}
