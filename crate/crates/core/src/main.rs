use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use l1drift::par::Execution;
use l1drift::pipeline::{self, PipelineConfig, PromptRegime, Stage, StageError};

#[derive(Parser)]
#[command(name = "l1drift", version, about = "Native-language identification corpus and evaluation pipeline")]
struct Cli {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `sampling.rng_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `evaluation.alpha`.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    /// Overrides `paths.work_dir`.
    #[arg(long, global = true)]
    work_dir: Option<PathBuf>,
    /// Overrides `paths.cache_dir`.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    /// Serve network requests from the cache only.
    #[arg(long, global = true)]
    offline: bool,
    /// Force single-threaded execution.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegimeArg {
    Fewshot,
    Finetune,
    Both,
}

#[derive(Subcommand)]
enum Command {
    /// Fetch work metadata for a list of ids.
    Fetch {
        #[arg(long)]
        ids: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Assign L1 labels from author name origin and affiliations.
    Label {
        #[arg(long)]
        papers: Option<PathBuf>,
        /// JSON object of recorded name → response pairs, instead of a live model.
        #[arg(long)]
        origin_stub: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample the evaluation corpus and, given a training pool, the training corpus.
    BuildCorpus {
        /// Labeled pool for the evaluation corpus.
        #[arg(long)]
        pool: Option<PathBuf>,
        #[arg(long)]
        train_pool: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render prompt files.
    Prompt {
        #[arg(long, value_enum, default_value_t = RegimeArg::Both)]
        regime: RegimeArg,
        #[arg(long)]
        exemplars: Option<PathBuf>,
        #[arg(long)]
        eval_corpus: Option<PathBuf>,
        #[arg(long)]
        train_corpus: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score predictions per era and compare eras.
    Evaluate {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pairwise Fisher tests from a report or per-era counts.
    Compare {
        #[arg(long)]
        counts: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every stage in order.
    Run,
    /// Check the embedded prompt templates against their pinned digests.
    VerifyTemplates,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, StageError> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => {
            let mut c = PipelineConfig::default();
            c.apply_env();
            c
        }
    };
    if let Some(seed) = cli.seed {
        cfg.sampling.rng_seed = seed;
    }
    if let Some(alpha) = cli.alpha {
        cfg.evaluation.alpha = alpha;
    }
    if let Some(dir) = &cli.work_dir {
        cfg.paths.work_dir = dir.clone();
    }
    if let Some(dir) = &cli.cache_dir {
        cfg.paths.cache_dir = dir.clone();
    }
    if cli.offline {
        cfg.endpoints.offline = true;
    }
    if cli.sequential {
        cfg.execution = Execution::Sequential;
    }
    Ok(cfg)
}

fn set(slot: &mut Option<PathBuf>, value: &Option<PathBuf>) {
    if value.is_some() {
        slot.clone_from(value);
    }
}

fn run(cli: Cli) -> Result<(), StageError> {
    let mut cfg = load_config(&cli)?;
    let (stage, out) = match &cli.command {
        Command::VerifyTemplates => {
            l1drift::prompts::verify_templates().map_err(|e| StageError::StageFailed(e.to_string()))?;
            for (name, digest) in l1drift::prompts::template_checksums() {
                println!("{digest}  {name}");
            }
            return Ok(());
        }
        Command::Run => {
            cfg.validate()?;
            for m in pipeline::run_all(&Stage::ALL, &cfg)? {
                println!("{}: {} outputs", m.stage, m.outputs.len());
            }
            return Ok(());
        }
        Command::Fetch { ids, out } => {
            set(&mut cfg.paths.ids, ids);
            (Stage::Fetch, out)
        }
        Command::Label { papers, origin_stub, out } => {
            set(&mut cfg.paths.papers, papers);
            set(&mut cfg.labeling.origin_stub, origin_stub);
            (Stage::Label, out)
        }
        Command::BuildCorpus { pool, train_pool, out } => {
            set(&mut cfg.paths.eval_pool, pool);
            set(&mut cfg.paths.train_pool, train_pool);
            (Stage::BuildCorpus, out)
        }
        Command::Prompt { regime, exemplars, eval_corpus, train_corpus, out } => {
            cfg.prompt.regime = match regime {
                RegimeArg::Fewshot => PromptRegime::Fewshot,
                RegimeArg::Finetune => PromptRegime::Finetune,
                RegimeArg::Both => PromptRegime::Both,
            };
            set(&mut cfg.paths.exemplars, exemplars);
            set(&mut cfg.paths.eval_corpus, eval_corpus);
            set(&mut cfg.paths.train_corpus, train_corpus);
            (Stage::Prompt, out)
        }
        Command::Evaluate { predictions, out } => {
            set(&mut cfg.paths.predictions, predictions);
            (Stage::Evaluate, out)
        }
        Command::Compare { counts, out } => {
            set(&mut cfg.paths.counts, counts);
            (Stage::Compare, out)
        }
    };
    cfg.validate()?;
    let out_dir = out.clone().unwrap_or_else(|| cfg.stage_dir(stage));
    let manifest = pipeline::run_stage_into(stage, &cfg, &out_dir)?;
    for o in &manifest.outputs {
        println!("{}  {}", o.sha256, out_dir.join(&o.path).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
