//! File-based stages. Each stage reads its inputs, writes every output into a staging
//! directory, then moves the files into place and writes `manifest.json` last. A failed
//! stage leaves `<stage>.FAILED` next to its outputs and no manifest.

mod config;
mod output;
mod stages;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    Endpoints, EvaluationSection, FinetuneConfigRecord, FinetuneRecords, LabelingSection, Paths, PipelineConfig,
    PromptRegime, PromptSection, ENV_CHAT_API_KEY, ENV_CHAT_BASE_URL, ENV_METADATA_BASE_URL, ENV_MODEL,
};
pub use output::{FileDigest, StageManifest, MANIFEST_FILE};
pub use stages::{ExemplarEntry, PromptLine};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Fetch,
    Label,
    BuildCorpus,
    Prompt,
    Evaluate,
    Compare,
}

impl Stage {
    pub const ALL: [Stage; 6] =
        [Stage::Fetch, Stage::Label, Stage::BuildCorpus, Stage::Prompt, Stage::Evaluate, Stage::Compare];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Fetch => "fetch",
            Stage::Label => "label",
            Stage::BuildCorpus => "build-corpus",
            Stage::Prompt => "prompt",
            Stage::Evaluate => "evaluate",
            Stage::Compare => "compare",
        }
    }

    /// Output directory name under the work dir.
    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::BuildCorpus => "corpus",
            s => s.as_str(),
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum StageError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("stage failed: {0}")]
    StageFailed(String),
}

impl StageError {
    /// Process exit status for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            StageError::ConfigInvalid(_) => 2,
            StageError::MissingInput(_) => 3,
            StageError::StageFailed(_) => 4,
        }
    }

    fn failed(e: impl std::fmt::Display) -> Self {
        StageError::StageFailed(e.to_string())
    }
}

/// Runs one stage, writing into `cfg.stage_dir(stage)`.
pub fn run_stage(stage: Stage, cfg: &PipelineConfig) -> Result<StageManifest, StageError> {
    run_stage_into(stage, cfg, &cfg.stage_dir(stage))
}

/// Runs one stage into an explicit output directory.
pub fn run_stage_into(
    stage: Stage,
    cfg: &PipelineConfig,
    out_dir: &std::path::Path,
) -> Result<StageManifest, StageError> {
    cfg.validate()?;
    crate::prompts::verify_templates().map_err(StageError::failed)?;
    let result = stages::execute(stage, cfg)
        .and_then(|produced| output::commit(out_dir, stage, cfg, produced).map_err(StageError::failed));
    match result {
        Ok(m) => Ok(m),
        Err(e) => {
            log::error!("{stage}: {e}");
            output::mark_failed(out_dir, stage, &e);
            Err(e)
        }
    }
}

/// Runs `stages` in order, stopping at the first failure.
pub fn run_all(stages: &[Stage], cfg: &PipelineConfig) -> Result<Vec<StageManifest>, StageError> {
    stages.iter().map(|&s| run_stage(s, cfg)).collect()
}
