//! End-to-end stage runner.
//!
//! Each stage reads its inputs from files written by the previous one, so any
//! suffix of the chain can be re-run against an existing output directory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::caption::{self, CaptionError, FileProvider, MockProvider, RemoteProvider, RetryPolicy, SceneDescription};
use crate::eval::{self, EvalError, EvalRecord, EvalReport, FoldItem, Smoothing};
use crate::identify::{self, IdentifyError, KeywordLexicon, ScreenVerdict};
use crate::ingest::{self, Dataset, FrameRecord, IngestError};
use crate::jsonl::{self, JsonlError};
use crate::label::Label;
use crate::projection::pca_2d;
use crate::select::{self, MultiViewGroup, SelectError, SelectionConfig};
use crate::similarity::{self, SimilarityConfig, SimilarityError, SimilarityGraph};

pub const GRAPH_FILE: &str = "graph.jsonl";
pub const GROUPS_FILE: &str = "groups.jsonl";
pub const DESCRIPTIONS_FILE: &str = "descriptions.jsonl";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{path}: {source}")]
    Ingest {
        path: PathBuf,
        #[source]
        source: IngestError,
    },
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error(transparent)]
    Caption(#[from] CaptionError),
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    File(#[from] JsonlError),
    #[error("{0}")]
    Config(String),
    #[error("{stage}: group {group_id:?} has no {missing}")]
    Inconsistent {
        stage: &'static str,
        group_id: String,
        missing: &'static str,
    },
}

impl PipelineError {
    pub fn is_provider_failure(&self) -> bool {
        matches!(self, PipelineError::Caption(e) if e.is_provider_failure())
    }
}

type Result<T> = std::result::Result<T, PipelineError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderChoice {
    #[default]
    Mock,
    File,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionConfig {
    pub provider: ProviderChoice,
    /// Base URL of the captioning service (remote provider).
    pub endpoint: Option<String>,
    /// Captions file (file provider).
    pub captions: Option<PathBuf>,
    /// Optional cache of remote captions kept across runs.
    pub cache: Option<PathBuf>,
    pub concurrency: usize,
    pub attempts: u32,
    pub backoff_ms: u64,
    pub timeout_secs: u64,
}

impl Default for CaptionConfig {
    fn default() -> Self {
        let retry = RetryPolicy::default();
        CaptionConfig {
            provider: ProviderChoice::Mock,
            endpoint: None,
            captions: None,
            cache: None,
            concurrency: 4,
            attempts: retry.attempts,
            backoff_ms: retry.initial_backoff.as_millis() as u64,
            timeout_secs: retry.timeout.as_secs(),
        }
    }
}

impl CaptionConfig {
    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            attempts: self.attempts.max(1),
            initial_backoff: std::time::Duration::from_millis(self.backoff_ms),
            timeout: std::time::Duration::from_secs(self.timeout_secs.max(1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub folds: usize,
    pub seed: u64,
    /// Add-one smoothing of higher-order BLEU precisions.
    pub smoothing: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            folds: 4,
            seed: 42,
            smoothing: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub embeddings: PathBuf,
    pub output: PathBuf,
    pub lexicon: Option<PathBuf>,
    pub similarity: SimilarityConfig,
    pub selection: SelectionConfig,
    pub caption: CaptionConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn new(manifest: impl Into<PathBuf>, embeddings: impl Into<PathBuf>, output: impl Into<PathBuf>) -> Self {
        PipelineConfig {
            manifest: manifest.into(),
            embeddings: embeddings.into(),
            output: output.into(),
            lexicon: None,
            similarity: SimilarityConfig::default(),
            selection: SelectionConfig::default(),
            caption: CaptionConfig::default(),
            eval: EvalConfig::default(),
        }
    }

    /// Checks parameters and that every referenced input file exists.
    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        self.selection.validate()?;
        let mut inputs = vec![
            ("manifest", Some(&self.manifest)),
            ("embeddings", Some(&self.embeddings)),
        ];
        inputs.push(("lexicon", self.lexicon.as_ref()));
        if self.caption.provider == ProviderChoice::File {
            if self.caption.captions.is_none() {
                return Err(PipelineError::Config("file provider needs a captions path".into()));
            }
            inputs.push(("captions", self.caption.captions.as_ref()));
        }
        if self.caption.provider == ProviderChoice::Remote && self.caption.endpoint.is_none() {
            return Err(PipelineError::Config("remote provider needs an endpoint".into()));
        }
        for (what, path) in inputs {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(PipelineError::Config(format!("{what} file not found: {}", p.display())));
                }
            }
        }
        if self.eval.folds < 2 {
            return Err(PipelineError::Config("folds must be at least 2".into()));
        }
        Ok(())
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| {
        PipelineError::File(JsonlError::Io {
            path: dir.to_path_buf(),
            source,
        })
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| {
        PipelineError::File(JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| {
        PipelineError::File(JsonlError::Io {
            path: path.to_path_buf(),
            source,
        })
    })
}

fn to_pretty_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable report");
    s.push('\n');
    s
}

pub fn load_manifest(path: &Path) -> Result<Vec<FrameRecord>> {
    ingest::parse_manifest(path).map_err(|source| PipelineError::Ingest {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_dataset(manifest: &Path, embeddings: &Path) -> Result<Dataset> {
    let frames = load_manifest(manifest)?;
    let m = ingest::load_embeddings(embeddings).map_err(|source| PipelineError::Ingest {
        path: embeddings.to_path_buf(),
        source,
    })?;
    ingest::validate_dataset(frames, m).map_err(|source| PipelineError::Ingest {
        path: embeddings.to_path_buf(),
        source,
    })
}

pub fn load_lexicon(path: Option<&Path>) -> Result<KeywordLexicon> {
    Ok(match path {
        Some(p) => KeywordLexicon::load(p)?,
        None => KeywordLexicon::default(),
    })
}

/// Builds the graph and selects groups; writes `graph.jsonl` and `groups.jsonl`.
pub fn select_stage(
    dataset: &Dataset,
    sim: &SimilarityConfig,
    sel: &SelectionConfig,
    out: &Path,
) -> Result<(SimilarityGraph, Vec<MultiViewGroup>)> {
    ensure_dir(out)?;
    let graph = similarity::build_graph(dataset, sim)?;
    let groups = select::select_views(&graph, sel)?;
    graph.write(&out.join(GRAPH_FILE))?;
    select::write_groups(&out.join(GROUPS_FILE), &groups)?;
    Ok((graph, groups))
}

/// Captions every group; writes `descriptions.jsonl`.
pub fn caption_stage(
    groups: &[MultiViewGroup],
    frames: &[FrameRecord],
    cfg: &CaptionConfig,
    out: &Path,
) -> Result<Vec<SceneDescription>> {
    ensure_dir(out)?;
    let provider: Box<dyn caption::CaptionProvider> = match cfg.provider {
        ProviderChoice::Mock => Box::new(MockProvider::new(frames)),
        ProviderChoice::File => {
            let path = cfg
                .captions
                .as_deref()
                .ok_or_else(|| PipelineError::Config("file provider needs a captions path".into()))?;
            Box::new(FileProvider::load(path)?)
        }
        ProviderChoice::Remote => {
            let endpoint = cfg
                .endpoint
                .as_deref()
                .ok_or_else(|| PipelineError::Config("remote provider needs an endpoint".into()))?;
            Box::new(RemoteProvider::new(endpoint, frames, cfg.retry_policy()))
        }
    };
    let descriptions = match (&cfg.cache, cfg.provider) {
        (Some(cache), ProviderChoice::Remote) => {
            caption::caption_groups_cached(groups, provider.as_ref(), cfg.concurrency, cache)?
        }
        _ => caption::caption_groups(groups, provider.as_ref(), cfg.concurrency)?,
    };
    caption::write_descriptions(&out.join(DESCRIPTIONS_FILE), &descriptions)?;
    Ok(descriptions)
}

/// Identifies screen types in each description; writes `verdicts.jsonl`.
pub fn identify_stage(
    descriptions: &[SceneDescription],
    lexicon: &KeywordLexicon,
    out: &Path,
) -> Result<Vec<ScreenVerdict>> {
    ensure_dir(out)?;
    let verdicts: Vec<ScreenVerdict> = descriptions
        .iter()
        .map(|d| identify::identify(&d.group_id, &d.text, lexicon))
        .collect();
    identify::write_verdicts(&out.join(VERDICTS_FILE), &verdicts)?;
    Ok(verdicts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub folds: Vec<EvalReport>,
    pub aggregate: EvalReport,
}

/// Joins groups, labels, descriptions and verdicts into evaluation records.
/// Groups without any labelled member are skipped.
pub fn eval_records(
    groups: &[MultiViewGroup],
    frames: &[FrameRecord],
    descriptions: &[SceneDescription],
    verdicts: &[ScreenVerdict],
) -> Result<Vec<EvalRecord>> {
    let labels: HashMap<String, Label> = frames
        .iter()
        .filter_map(|f| f.label.map(|l| (f.frame_id.clone(), l)))
        .collect();
    let by_id: HashMap<&str, &FrameRecord> = frames.iter().map(|f| (f.frame_id.as_str(), f)).collect();
    let texts: HashMap<&str, &str> = descriptions
        .iter()
        .map(|d| (d.group_id.as_str(), d.text.as_str()))
        .collect();
    let verdicts: HashMap<&str, &ScreenVerdict> = verdicts.iter().map(|v| (v.group_id.as_str(), v)).collect();
    let mut records = Vec::new();
    for g in groups {
        let Some(actual) = g.majority_label(&labels) else {
            continue;
        };
        let v = verdicts
            .get(g.group_id.as_str())
            .ok_or_else(|| PipelineError::Inconsistent {
                stage: "evaluate",
                group_id: g.group_id.clone(),
                missing: "verdict",
            })?;
        let mut references: Vec<String> = Vec::new();
        for f in &g.frame_ids {
            if let Some(a) = by_id.get(f.as_str()).and_then(|r| r.annotation.as_ref()) {
                if !references.contains(a) {
                    references.push(a.clone());
                }
            }
        }
        records.push(EvalRecord {
            group_id: g.group_id.clone(),
            candidate: texts.get(g.group_id.as_str()).map(|t| t.to_string()),
            references,
            predicted: v.primary_type,
            predicted_binary: v.binary,
            actual,
        });
    }
    Ok(records)
}

/// Scores verdicts per fold and overall; writes `report/`.
pub fn evaluate_stage(records: &[EvalRecord], cfg: &EvalConfig, out: &Path) -> Result<EvalSummary> {
    let dir = out.join(REPORT_DIR);
    ensure_dir(&dir)?;
    let items: Vec<FoldItem> = records
        .iter()
        .map(|r| FoldItem {
            group_id: r.group_id.clone(),
            label: Some(r.actual),
        })
        .collect();
    let folds = eval::make_folds(&items, cfg.folds, cfg.seed)?;
    let smoothing = if cfg.smoothing {
        Smoothing::AddOne
    } else {
        Smoothing::None
    };
    let (fold_reports, aggregate) = eval::cross_validate(records, &folds, smoothing)?;
    eval::write_records(&dir.join("records.jsonl"), records)?;
    write_text(&dir.join("folds.json"), &to_pretty_json(&folds))?;
    for r in &fold_reports {
        let id = r.fold_id.expect("fold reports carry an id");
        write_text(&dir.join(format!("fold-{id}.json")), &to_pretty_json(r))?;
    }
    write_text(&dir.join("aggregate.json"), &to_pretty_json(&aggregate))?;
    Ok(EvalSummary {
        folds: fold_reports,
        aggregate,
    })
}

pub fn read_reports(out: &Path) -> Result<EvalSummary> {
    let dir = out.join(REPORT_DIR);
    let parse = |p: PathBuf| -> Result<EvalReport> {
        let text = read_text(&p)?;
        serde_json::from_str(&text).map_err(|e| {
            PipelineError::File(JsonlError::Parse {
                path: p,
                line: e.line(),
                message: e.to_string(),
            })
        })
    };
    let aggregate = parse(dir.join("aggregate.json"))?;
    let mut folds = Vec::new();
    for i in 1.. {
        let p = dir.join(format!("fold-{i}.json"));
        if !p.exists() {
            break;
        }
        folds.push(parse(p)?);
    }
    Ok(EvalSummary { folds, aggregate })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSummary {
    pub config: Option<SimilarityConfig>,
    pub nodes: usize,
    pub edges: usize,
    pub isolated_nodes: usize,
    pub mean_degree: f64,
    pub groups: usize,
    pub grouped_frames: usize,
}

/// Writes tabular outputs for plotting: per-type accuracy, a 2-D PCA of
/// group-mean embeddings and a graph summary.
pub fn report_stage(dataset: &Dataset, out: &Path) -> Result<()> {
    let graph = SimilarityGraph::read(&out.join(GRAPH_FILE))?;
    let groups = select::read_groups(&out.join(GROUPS_FILE))?;
    let summary = read_reports(out)?;
    let dir = out.join(REPORT_DIR);
    ensure_dir(&dir)?;

    let mut per_type = String::from("fold,type,accuracy\n");
    for r in summary.folds.iter().chain(std::iter::once(&summary.aggregate)) {
        let fold = r.fold_id.map_or_else(|| "all".to_owned(), |f| f.to_string());
        for (t, acc) in &r.per_type_accuracy {
            writeln!(per_type, "{fold},{t},{acc}").expect("string write");
        }
    }
    write_text(&dir.join("per_type.csv"), &per_type)?;

    let labels: HashMap<String, Label> = dataset
        .frames()
        .iter()
        .filter_map(|f| f.label.map(|l| (f.frame_id.clone(), l)))
        .collect();
    let mut means = Vec::with_capacity(groups.len());
    for g in &groups {
        let mut m = vec![0.0f64; dataset.embeddings().dim()];
        for f in &g.frame_ids {
            let i = dataset.position(f).ok_or_else(|| PipelineError::Inconsistent {
                stage: "report",
                group_id: g.group_id.clone(),
                missing: "embedding for a member frame",
            })?;
            for (a, &v) in m.iter_mut().zip(dataset.vector(i)) {
                *a += f64::from(v);
            }
        }
        let k = g.frame_ids.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= k);
        means.push(m);
    }
    let mut pca = String::from("group_id,label,pc1,pc2\n");
    for (g, p) in groups.iter().zip(pca_2d(&means)) {
        let label = g.majority_label(&labels).map_or("", |l| l.as_str());
        writeln!(pca, "{},{},{},{}", g.group_id, label, p[0], p[1]).expect("string write");
    }
    write_text(&dir.join("pca.csv"), &pca)?;

    let n = graph.node_count();
    let gs = GraphSummary {
        config: graph.config().copied(),
        nodes: n,
        edges: graph.edges().len(),
        isolated_nodes: (0..n).filter(|&v| graph.degree(v) == 0).count(),
        mean_degree: if n == 0 {
            0.0
        } else {
            2.0 * graph.edges().len() as f64 / n as f64
        },
        groups: groups.len(),
        grouped_frames: groups.iter().map(|g| g.frame_ids.len()).sum(),
    };
    write_text(&dir.join("graph_summary.json"), &to_pretty_json(&gs))?;
    Ok(())
}

/// Runs every stage in order.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvalSummary> {
    cfg.validate()?;
    let dataset = load_dataset(&cfg.manifest, &cfg.embeddings)?;
    let lexicon = load_lexicon(cfg.lexicon.as_deref())?;
    let out = cfg.output.as_path();
    let (_, groups) = select_stage(&dataset, &cfg.similarity, &cfg.selection, out)?;
    let descriptions = caption_stage(&groups, dataset.frames(), &cfg.caption, out)?;
    let verdicts = identify_stage(&descriptions, &lexicon, out)?;
    let records = eval_records(&groups, dataset.frames(), &descriptions, &verdicts)?;
    let summary = evaluate_stage(&records, &cfg.eval, out)?;
    report_stage(&dataset, out)?;
    Ok(summary)
}

/// Reads a stage's JSON Lines output.
pub fn read_stage<T: serde::de::DeserializeOwned>(out: &Path, file: &str) -> Result<Vec<T>> {
    Ok(jsonl::read(&out.join(file))?)
}
