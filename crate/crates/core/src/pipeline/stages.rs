//! Stage bodies. Each returns the bytes it wants written; nothing here touches the
//! output directory.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::output::Produced;
use super::{PipelineConfig, PromptRegime, Stage, StageError, ENV_CHAT_API_KEY};
use crate::corpus::{build_eval_cells, cross_dedup, sample_training, write_rows, CellStats, CorpusRow, Era, PoolPaper};
use crate::ingest::http::{FileTransport, RetryPolicy, UreqTransport};
use crate::ingest::{
    dedup_by_id, read_dump, write_dump, CachedHttp, DiskCache, DumpFormat, IngestError, MetadataClient, RateLimiter,
    SystemClock, Transport,
};
use crate::labeling::origin::{ChatOriginClient, OriginClient, StubOriginClient};
use crate::labeling::{label_papers, L1Label, LabelConfig, LabelOutcome, MappingTable};
use crate::par;
use crate::prompts::{build_fewshot_prompt, build_finetune_example, Exemplar, PromptBundle};
use crate::stats::report::{compare_all, comparisons_csv};
use crate::stats::{era_report, AccuracyCounts, PredictionInput, PredictionRecord};

pub(crate) fn execute(stage: Stage, cfg: &PipelineConfig) -> Result<Produced, StageError> {
    match stage {
        Stage::Fetch => fetch(cfg),
        Stage::Label => label(cfg),
        Stage::BuildCorpus => build_corpus(cfg),
        Stage::Prompt => prompt(cfg),
        Stage::Evaluate => evaluate(cfg),
        Stage::Compare => compare(cfg),
    }
}

fn parse_jsonl<T: DeserializeOwned>(bytes: &[u8], path: &Path) -> Result<Vec<T>, StageError> {
    let text = std::str::from_utf8(bytes).map_err(|e| StageError::failed(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| StageError::failed(format!("{}:{}: {e}", path.display(), i + 1)))
        })
        .collect()
}

fn to_jsonl<T: Serialize>(items: &[T]) -> Vec<u8> {
    let mut out = Vec::new();
    for it in items {
        serde_json::to_writer(&mut out, it).expect("serializable");
        out.push(b'\n');
    }
    out
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("serializable");
    out.push(b'\n');
    out
}

fn required(opt: &Option<PathBuf>, key: &str, stage: Stage) -> Result<PathBuf, StageError> {
    opt.clone().ok_or_else(|| StageError::ConfigInvalid(format!("{stage} needs paths.{key}")))
}

fn upstream(opt: &Option<PathBuf>, cfg: &PipelineConfig, from: Stage, file: &str) -> PathBuf {
    opt.clone().unwrap_or_else(|| cfg.stage_dir(from).join(file))
}

fn http_client(cfg: &PipelineConfig, base_url: &str, cache_sub: &str) -> Result<Arc<CachedHttp>, StageError> {
    let ep = &cfg.endpoints;
    let transport: Arc<dyn Transport> = match base_url.strip_prefix("file://") {
        Some(dir) => Arc::new(FileTransport::new(dir)),
        None => Arc::new(UreqTransport::new(Duration::from_secs(60))),
    };
    let cache =
        DiskCache::open(cfg.paths.cache_dir.join(cache_sub)).map_err(|e| StageError::failed(format!("cache: {e}")))?;
    let limiter = RateLimiter::new(ep.requests_per_second, Arc::new(SystemClock::default()));
    let http = CachedHttp::new(transport, Some(cache), limiter)
        .with_retry(RetryPolicy { max_attempts: ep.max_attempts, ..RetryPolicy::default() })
        .offline(ep.offline)
        .bypass_cache(ep.bypass_cache);
    Ok(Arc::new(http))
}

fn fetch(cfg: &PipelineConfig) -> Result<Produced, StageError> {
    let mut p = Produced::default();
    let ids_path = required(&cfg.paths.ids, "ids", Stage::Fetch)?;
    let ids_bytes = p.read_input(&ids_path)?;
    let mut seen = BTreeSet::new();
    let ids: Vec<String> = String::from_utf8_lossy(&ids_bytes)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter(|l| seen.insert(l.to_string()))
        .map(String::from)
        .collect();

    let base = &cfg.endpoints.metadata_base_url;
    let client = MetadataClient::new(base.as_str(), http_client(cfg, base, "openalex")?);
    let results = par::map(cfg.execution, &ids, |id| client.fetch_work(id));

    let mut papers = Vec::new();
    let mut errors = Vec::new();
    for (id, res) in ids.iter().zip(results) {
        match res {
            Ok(rec) => papers.push(rec),
            Err(e @ (IngestError::NotFound(_) | IngestError::Malformed { .. } | IngestError::MissingYear)) => {
                let kind = match e {
                    IngestError::NotFound(_) => "not_found",
                    IngestError::MissingYear => "missing_year",
                    _ => "malformed",
                };
                errors.push(json!({ "id": id, "kind": kind, "message": e.to_string() }));
            }
            Err(e) => return Err(StageError::failed(format!("{id}: {e}"))),
        }
    }
    let dropped = dedup_by_id(&mut papers);
    let mut dump = Vec::new();
    write_dump(&mut dump, &papers).map_err(StageError::failed)?;
    p.add("papers.jsonl", dump);
    p.add("fetch_errors.jsonl", to_jsonl(&errors));
    p.add(
        "fetch_summary.json",
        to_json(&json!({
            "requested": ids.len(),
            "fetched": papers.len(),
            "errors": errors.len(),
            "duplicate_ids": dropped,
        })),
    );
    Ok(p)
}

fn label(cfg: &PipelineConfig) -> Result<Produced, StageError> {
    let mut p = Produced::default();
    let papers_path = upstream(&cfg.paths.papers, cfg, Stage::Fetch, "papers.jsonl");
    let bytes = p.read_input(&papers_path)?;
    let load = read_dump(bytes.as_slice(), DumpFormat::Arxiv).map_err(StageError::failed)?;
    for v in &load.violations {
        log::warn!("{}:{}: {}", papers_path.display(), v.line, v.message);
    }

    let mapping = match &cfg.labeling.mapping_table {
        Some(path) => MappingTable::from_csv(p.read_input(path)?.as_slice())
            .map_err(|e| StageError::ConfigInvalid(format!("{}: {e}", path.display())))?,
        None => MappingTable::default(),
    };
    let label_cfg = LabelConfig { english_countries: cfg.english_countries()?, mapping };
    let client: Box<dyn OriginClient> = match &cfg.labeling.origin_stub {
        Some(path) => {
            let raw = p.read_input(path)?;
            Box::new(
                StubOriginClient::from_json(&raw)
                    .map_err(|e| StageError::ConfigInvalid(format!("{}: {e}", path.display())))?,
            )
        }
        None => {
            let ep = &cfg.endpoints;
            let http = http_client(cfg, &ep.chat_base_url, "chat")?;
            let key = std::env::var(ENV_CHAT_API_KEY).ok().filter(|k| !k.is_empty());
            Box::new(ChatOriginClient::new(&ep.chat_base_url, &ep.model, http).with_api_key(key))
        }
    };

    let outcomes =
        label_papers(&load.records, client.as_ref(), &label_cfg, cfg.execution).map_err(StageError::failed)?;
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    for o in outcomes {
        match o {
            LabelOutcome::Labeled(l) => labeled.push(l),
            LabelOutcome::Unlabeled(u) => unlabeled.push(u),
        }
    }
    let mut by_label: BTreeMap<L1Label, usize> = BTreeMap::new();
    for l in &labeled {
        *by_label.entry(l.label).or_default() += 1;
    }
    let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
    for u in &unlabeled {
        let v = serde_json::to_value(&u.reason).expect("serializable");
        let reason = v["reason"].as_str().unwrap_or("unknown").to_string();
        *by_reason.entry(reason).or_default() += 1;
    }
    p.add("labeled.jsonl", to_jsonl(&labeled));
    p.add("unlabeled.jsonl", to_jsonl(&unlabeled));
    p.add(
        "label_summary.json",
        to_json(&json!({
            "papers": load.records.len(),
            "schema_violations": load.violations.len(),
            "labeled": labeled.len(),
            "unlabeled": unlabeled.len(),
            "by_label": by_label,
            "unlabeled_by_reason": by_reason,
        })),
    );
    Ok(p)
}

fn build_corpus(cfg: &PipelineConfig) -> Result<Produced, StageError> {
    let mut p = Produced::default();
    let eval_path = upstream(&cfg.paths.eval_pool, cfg, Stage::Label, "labeled.jsonl");
    let eval_pool: Vec<PoolPaper> = parse_jsonl(&p.read_input(&eval_path)?, &eval_path)?;
    let (eval_rows, eval_manifest) = build_eval_cells(&eval_pool, &cfg.sampling).map_err(StageError::failed)?;

    if let Some(train_path) = &cfg.paths.train_pool {
        let train_pool: Vec<PoolPaper> = parse_jsonl(&p.read_input(train_path)?, train_path)?;
        let (train_rows, mut train_manifest) =
            sample_training(&train_pool, &cfg.sampling).map_err(StageError::failed)?;
        let (kept, report) = cross_dedup(&train_rows, &eval_rows);
        for m in &report {
            log::info!(
                "dropped training paper {} ({:?} match with {})",
                m.train_paper_id,
                m.matched_by,
                m.eval_paper_id
            );
        }
        train_manifest.cells = L1Label::ALL
            .iter()
            .map(|l| {
                let n = kept.iter().filter(|r| r.label == *l).count();
                (l.to_string(), CellStats { unique_count: n, duplicated_count: 0 })
            })
            .collect();
        train_manifest.dedup_report = report.clone();
        train_manifest.total_rows = kept.len();
        p.add("train.jsonl", rows_bytes(&kept)?);
        p.add("train_manifest.json", to_json(&train_manifest));
        p.add("dedup_report.json", to_json(&report));
    }
    p.add("eval.jsonl", rows_bytes(&eval_rows)?);
    p.add("eval_manifest.json", to_json(&eval_manifest));
    Ok(p)
}

fn rows_bytes(rows: &[CorpusRow]) -> Result<Vec<u8>, StageError> {
    let mut out = Vec::new();
    write_rows(&mut out, rows).map_err(StageError::failed)?;
    Ok(out)
}

/// Exemplar file line. Exemplars without an era apply to every era.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExemplarEntry {
    #[serde(flatten)]
    pub exemplar: Exemplar,
    #[serde(default)]
    pub era: Option<Era>,
}

/// One line of a prompts file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptLine {
    pub paper_id: String,
    pub era: Era,
    pub gold: L1Label,
    pub system: String,
    pub user: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub completion: Option<String>,
}

impl PromptLine {
    fn new(row: &CorpusRow, bundle: PromptBundle, completion: Option<String>) -> Self {
        PromptLine {
            paper_id: row.paper_id.clone(),
            era: row.era,
            gold: row.label,
            system: bundle.system,
            user: bundle.user,
            completion,
        }
    }
}

fn prompt(cfg: &PipelineConfig) -> Result<Produced, StageError> {
    let mut p = Produced::default();
    let regime = cfg.prompt.regime;
    let prompt_err = |e: crate::prompts::PromptError| StageError::failed(e);

    if matches!(regime, PromptRegime::Fewshot | PromptRegime::Both) {
        let ex_path = required(&cfg.paths.exemplars, "exemplars", Stage::Prompt)?;
        let entries: Vec<ExemplarEntry> = parse_jsonl(&p.read_input(&ex_path)?, &ex_path)?;
        let per_era: BTreeMap<Era, Vec<Exemplar>> = Era::ALL
            .iter()
            .map(|&era| {
                let set =
                    entries.iter().filter(|e| e.era.is_none_or(|x| x == era)).map(|e| e.exemplar.clone()).collect();
                (era, set)
            })
            .collect();
        let eval_path = upstream(&cfg.paths.eval_corpus, cfg, Stage::BuildCorpus, "eval.jsonl");
        let rows: Vec<CorpusRow> = parse_jsonl(&p.read_input(&eval_path)?, &eval_path)?;
        let lines = par::try_map(cfg.execution, &rows, |r| {
            build_fewshot_prompt(&r.title, &r.abstract_text, &per_era[&r.era]).map(|b| PromptLine::new(r, b, None))
        })
        .map_err(prompt_err)?;
        p.add("prompts_fewshot.jsonl", to_jsonl(&lines));
    }
    if matches!(regime, PromptRegime::Finetune | PromptRegime::Both) {
        let train_path = upstream(&cfg.paths.train_corpus, cfg, Stage::BuildCorpus, "train.jsonl");
        let rows: Vec<CorpusRow> = parse_jsonl(&p.read_input(&train_path)?, &train_path)?;
        let lines = par::try_map(cfg.execution, &rows, |r| {
            build_finetune_example(&r.title, &r.abstract_text, r.label).map(|(b, c)| PromptLine::new(r, b, Some(c)))
        })
        .map_err(prompt_err)?;
        p.add("prompts_finetune.jsonl", to_jsonl(&lines));
    }
    Ok(p)
}

fn evaluate(cfg: &PipelineConfig) -> Result<Produced, StageError> {
    let mut p = Produced::default();
    let path = required(&cfg.paths.predictions, "predictions", Stage::Evaluate)?;
    let inputs: Vec<PredictionInput> = parse_jsonl(&p.read_input(&path)?, &path)?;
    let preds: Vec<PredictionRecord> = inputs.into_iter().map(Into::into).collect();
    let report = era_report(&preds, cfg.evaluation.alpha, cfg.execution).map_err(StageError::failed)?;
    p.add("report.json", report.to_json());
    p.add("metrics.csv", report.metrics_csv());
    for era in report.eras.keys() {
        let csv = report.confusion_csv(*era).expect("era present");
        p.add(&format!("confusion_{era}.csv"), csv);
    }
    p.add("comparisons.csv", report.comparisons_csv());
    Ok(p)
}

/// Accepts an evaluation report (uses its `counts`) or a bare `{era: {correct, total}}`
/// object.
fn compare(cfg: &PipelineConfig) -> Result<Produced, StageError> {
    let mut p = Produced::default();
    let path = upstream(&cfg.paths.counts, cfg, Stage::Evaluate, "report.json");
    let raw: Value = serde_json::from_slice(&p.read_input(&path)?)
        .map_err(|e| StageError::failed(format!("{}: {e}", path.display())))?;
    let counts_value = raw.get("counts").cloned().unwrap_or(raw);
    let counts: BTreeMap<Era, AccuracyCounts> =
        serde_json::from_value(counts_value).map_err(|e| StageError::failed(format!("{}: {e}", path.display())))?;
    for c in counts.values() {
        AccuracyCounts::new(c.correct, c.total).map_err(StageError::failed)?;
    }
    let comparisons = compare_all(&counts, cfg.evaluation.alpha).map_err(StageError::failed)?;
    p.add(
        "comparisons.json",
        to_json(&json!({
            "alpha": cfg.evaluation.alpha,
            "counts": counts,
            "comparisons": comparisons,
        })),
    );
    p.add("comparisons.csv", comparisons_csv(&comparisons));
    Ok(p)
}
