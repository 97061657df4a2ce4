//! Triage state: work items rebuilt from append-only JSONL logs.
//!
//! Three logs live in the data directory. `articles.log` holds batch headers
//! and articles, `predictions.log` the cascade output for every article, and
//! `decisions.log` reviewer decisions. Lines are only ever appended; state at
//! startup is the replay of all three.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::{Mutex, RwLock};

use chrono::{DateTime, SecondsFormat, Utc};
use mlmscreen_core::corpus::parse_articles;
use mlmscreen_core::explain::{explain_prediction, ExplainError, ExplainMode, Explanation};
use mlmscreen_core::pipeline::PipelineError;
use mlmscreen_core::{Article, ConfusionCounts, Label, ModelBundle, Pipeline, RuleId, RuleThresholds, ScreeningPrediction};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const ARTICLES_LOG: &str = "articles.log";
pub const PREDICTIONS_LOG: &str = "predictions.log";
pub const DECISIONS_LOG: &str = "decisions.log";
pub const DEFAULT_PAGE_SIZE: usize = 50;
pub const MAX_PAGE_SIZE: usize = 1000;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("no model bundle is loaded")]
    NoBundle,
    #[error("{0}")]
    Malformed(String),
    #[error("unknown article id {0:?}")]
    NotFound(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{log} line {line}: {detail}")]
    Corrupt { log: &'static str, line: usize, detail: String },
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Explain(#[from] ExplainError),
}

impl ServiceError {
    /// Short machine-readable kind for error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            ServiceError::NoBundle => "no_bundle",
            ServiceError::Malformed(_) => "malformed_request",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Io { .. } => "io_error",
            ServiceError::Corrupt { .. } => "corrupt_store",
            ServiceError::Pipeline(_) | ServiceError::Explain(_) => "pipeline_error",
        }
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now()
    }
}

/// Always returns the same instant; for reproducible logs.
pub struct FixedClock(pub DateTime<Utc>);

impl Clock for FixedClock {
    fn now(&self) -> DateTime<Utc> {
        self.0
    }
}

fn timestamp(clock: &dyn Clock) -> String {
    clock.now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pending,
    Reviewed,
}

impl FromStr for Status {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pending" => Ok(Status::Pending),
            "reviewed" => Ok(Status::Reviewed),
            other => Err(format!("unknown status {other:?} (expected pending or reviewed)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Relevant,
    NotRelevant,
}

impl Verdict {
    pub fn as_label(self) -> Label {
        match self {
            Verdict::Relevant => Label::SuspectAdverse,
            Verdict::NotRelevant => Label::NotSuspect,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewDecision {
    /// Position in the decision log, from 1.
    pub sequence: u64,
    pub article_id: String,
    pub decision: Verdict,
    pub reviewer: String,
    pub timestamp: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// A reviewer's submission; the service assigns sequence and timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecisionRequest {
    pub decision: Verdict,
    pub reviewer: String,
    #[serde(default)]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum ArticleRecord {
    Batch {
        batch_id: u64,
        received_utc: String,
        size: usize,
    },
    Article {
        batch_id: u64,
        article: Article,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct PredictionRecord {
    batch_id: u64,
    predicted_utc: String,
    bundle_digest: String,
    thresholds: RuleThresholds,
    prediction: ScreeningPrediction,
}

#[derive(Debug, Clone)]
struct Entry {
    batch_id: u64,
    article: Article,
    prediction: ScreeningPrediction,
    bundle_digest: String,
    /// Indices into `State::decisions`, oldest first.
    decisions: Vec<usize>,
}

impl Entry {
    fn status(&self) -> Status {
        if self.decisions.is_empty() {
            Status::Pending
        } else {
            Status::Reviewed
        }
    }
}

#[derive(Default)]
struct State {
    entries: Vec<Entry>,
    index: HashMap<String, usize>,
    decisions: Vec<ReviewDecision>,
    last_batch: u64,
}

impl State {
    fn latest_decision(&self, e: &Entry) -> Option<&ReviewDecision> {
        e.decisions.last().map(|&i| &self.decisions[i])
    }

    fn work_item(&self, e: &Entry, explanation: Option<Explanation>) -> WorkItem {
        WorkItem {
            batch_id: e.batch_id,
            article: e.article.clone(),
            prediction: e.prediction.clone(),
            status: e.status(),
            decision: self.latest_decision(e).cloned(),
            explanation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkItem {
    pub batch_id: u64,
    pub article: Article,
    pub prediction: ScreeningPrediction,
    pub status: Status,
    /// The decision currently governing status.
    pub decision: Option<ReviewDecision>,
    pub explanation: Option<Explanation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSummary {
    pub batch_id: u64,
    pub size: usize,
    pub by_label: BTreeMap<String, usize>,
    pub by_rule: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecisionAck {
    pub article_id: String,
    pub sequence: u64,
    pub status: Status,
    /// Number of decisions recorded for the article, this one included.
    pub history_len: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QueueFilter {
    pub status: Option<Status>,
    pub label: Option<Label>,
    pub rule: Option<RuleId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuePage {
    pub page: usize,
    pub page_size: usize,
    /// Items matching the filter across all pages.
    pub total: usize,
    pub items: Vec<WorkItem>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArticleDetail {
    pub item: WorkItem,
    pub trace: mlmscreen_core::rules::RuleTrace,
    /// Every decision for the article, oldest first.
    pub history: Vec<ReviewDecision>,
    /// Digest of the bundle that produced the prediction.
    pub bundle_digest: String,
    /// Why no explanation is available (out-of-envelope articles).
    pub explanation_unavailable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueStats {
    pub total: usize,
    pub by_status: BTreeMap<String, usize>,
    pub by_label: BTreeMap<String, usize>,
    pub by_rule: BTreeMap<String, usize>,
    pub decisions: usize,
    pub thresholds: Option<RuleThresholds>,
    pub bundle_digest: Option<String>,
    /// Predictions against the latest reviewer decision of decided items.
    pub confusion: ConfusionCounts,
}

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub data_dir: PathBuf,
    pub explain_mode: ExplainMode,
    pub explain_samples: usize,
    pub explain_seed: u64,
    /// Rendered factsheet JSON served at /v1/factsheet.
    pub factsheet: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        ServiceConfig {
            data_dir: data_dir.into(),
            explain_mode: ExplainMode::SampledLime,
            explain_samples: mlmscreen_core::explain::DEFAULT_SAMPLE_COUNT,
            explain_seed: 0,
            factsheet: None,
        }
    }
}

struct Logs {
    articles: File,
    predictions: File,
    decisions: File,
}

pub struct TriageService {
    config: ServiceConfig,
    pipeline: Option<Pipeline>,
    bundle_digest: Option<String>,
    clock: Box<dyn Clock>,
    /// Held for the whole of every mutation, so writes are serialized.
    writer: Mutex<Logs>,
    state: RwLock<State>,
    explanations: Mutex<HashMap<String, Explanation>>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ServiceError + '_ {
    move |source| ServiceError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn read_log<T: for<'de> Deserialize<'de>>(dir: &Path, log: &'static str) -> Result<Vec<T>, ServiceError> {
    let path = dir.join(log);
    let text = match fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(&path)(e)),
    };
    if !text.is_empty() && !text.ends_with('\n') {
        return Err(ServiceError::Corrupt {
            log,
            line: text.lines().count(),
            detail: "last line is incomplete".into(),
        });
    }
    text.lines()
        .enumerate()
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| ServiceError::Corrupt {
                log,
                line: i + 1,
                detail: e.to_string(),
            })
        })
        .collect()
}

fn replay(dir: &Path) -> Result<State, ServiceError> {
    let articles: Vec<ArticleRecord> = read_log(dir, ARTICLES_LOG)?;
    let predictions: Vec<PredictionRecord> = read_log(dir, PREDICTIONS_LOG)?;
    let decisions: Vec<ReviewDecision> = read_log(dir, DECISIONS_LOG)?;
    let mut state = State::default();
    let mut by_id: HashMap<String, PredictionRecord> = HashMap::new();
    for (i, p) in predictions.into_iter().enumerate() {
        let id = p.prediction.article_id.clone();
        if by_id.insert(id.clone(), p).is_some() {
            return Err(ServiceError::Corrupt {
                log: PREDICTIONS_LOG,
                line: i + 1,
                detail: format!("second prediction for {id:?}"),
            });
        }
    }
    for (i, rec) in articles.into_iter().enumerate() {
        match rec {
            ArticleRecord::Batch { batch_id, .. } => state.last_batch = state.last_batch.max(batch_id),
            ArticleRecord::Article { batch_id, article } => {
                let corrupt = |detail: String| ServiceError::Corrupt {
                    log: ARTICLES_LOG,
                    line: i + 1,
                    detail,
                };
                if state.index.contains_key(&article.id) {
                    return Err(corrupt(format!("duplicate article {:?}", article.id)));
                }
                let p = by_id
                    .remove(&article.id)
                    .ok_or_else(|| corrupt(format!("article {:?} has no prediction", article.id)))?;
                state.index.insert(article.id.clone(), state.entries.len());
                state.entries.push(Entry {
                    batch_id,
                    article,
                    prediction: p.prediction,
                    bundle_digest: p.bundle_digest,
                    decisions: Vec::new(),
                });
            }
        }
    }
    if let Some(id) = by_id.keys().min() {
        return Err(ServiceError::Corrupt {
            log: PREDICTIONS_LOG,
            line: 0,
            detail: format!("prediction for unknown article {id:?}"),
        });
    }
    for (i, d) in decisions.into_iter().enumerate() {
        let &idx = state.index.get(&d.article_id).ok_or_else(|| ServiceError::Corrupt {
            log: DECISIONS_LOG,
            line: i + 1,
            detail: format!("decision for unknown article {:?}", d.article_id),
        })?;
        state.entries[idx].decisions.push(state.decisions.len());
        state.decisions.push(d);
    }
    Ok(state)
}

fn open_append(path: &Path) -> Result<File, ServiceError> {
    OpenOptions::new().create(true).append(true).open(path).map_err(io_err(path))
}

fn append(file: &mut File, path: &Path, lines: &str) -> Result<(), ServiceError> {
    file.write_all(lines.as_bytes()).map_err(io_err(path))?;
    file.sync_data().map_err(io_err(path))
}

fn json_line<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string(v).expect("log records serialize");
    s.push('\n');
    s
}

fn zeroed<I: IntoIterator<Item = String>>(keys: I) -> BTreeMap<String, usize> {
    keys.into_iter().map(|k| (k, 0)).collect()
}

fn label_keys() -> BTreeMap<String, usize> {
    zeroed([Label::SuspectAdverse, Label::NotSuspect].map(|l| l.as_str().to_string()))
}

fn rule_keys() -> BTreeMap<String, usize> {
    zeroed(RuleId::ALL.map(|r| r.as_str().to_string()))
}

impl TriageService {
    /// Opens (creating if needed) the data directory and replays its logs.
    pub fn open(config: ServiceConfig, bundle: Option<ModelBundle>, clock: Box<dyn Clock>) -> Result<Self, ServiceError> {
        let dir = config.data_dir.clone();
        fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        let state = replay(&dir)?;
        let logs = Logs {
            articles: open_append(&dir.join(ARTICLES_LOG))?,
            predictions: open_append(&dir.join(PREDICTIONS_LOG))?,
            decisions: open_append(&dir.join(DECISIONS_LOG))?,
        };
        let bundle_digest = bundle.as_ref().map(ModelBundle::digest);
        Ok(TriageService {
            config,
            pipeline: bundle.map(Pipeline::new),
            bundle_digest,
            clock,
            writer: Mutex::new(logs),
            state: RwLock::new(state),
            explanations: Mutex::new(HashMap::new()),
        })
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    /// Parses a JSONL or JSON-array payload and enqueues it.
    pub fn enqueue_payload(&self, payload: &str) -> Result<BatchSummary, ServiceError> {
        if payload.trim().is_empty() {
            return self.enqueue_batch(Vec::new());
        }
        let parsed = parse_articles(payload).map_err(|e| ServiceError::Malformed(e.to_string()))?;
        if let Some(r) = parsed.rejects.first() {
            return Err(ServiceError::Malformed(format!(
                "{} invalid record(s); first at line {}: {}",
                parsed.rejects.len(),
                r.line,
                r.reason
            )));
        }
        self.enqueue_batch(parsed.items)
    }

    /// Pipelines every article and persists it as a work item. The batch is
    /// rejected as a whole if any id is already queued.
    pub fn enqueue_batch(&self, articles: Vec<Article>) -> Result<BatchSummary, ServiceError> {
        let pipeline = self.pipeline.as_ref().ok_or(ServiceError::NoBundle)?;
        let digest = self.bundle_digest.clone().unwrap_or_default();
        let mut logs = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        {
            let state = self.read();
            let mut seen = HashSet::new();
            for a in &articles {
                if state.index.contains_key(&a.id) || !seen.insert(a.id.as_str()) {
                    return Err(ServiceError::Malformed(format!("duplicate article id {:?}", a.id)));
                }
            }
        }
        let predictions = pipeline.predict_batch(&articles)?;
        let batch_id = self.read().last_batch + 1;
        let now = timestamp(self.clock.as_ref());

        let mut article_lines = json_line(&ArticleRecord::Batch {
            batch_id,
            received_utc: now.clone(),
            size: articles.len(),
        });
        let mut prediction_lines = String::new();
        let mut summary = BatchSummary {
            batch_id,
            size: articles.len(),
            by_label: label_keys(),
            by_rule: rule_keys(),
        };
        for (a, p) in articles.iter().zip(&predictions) {
            article_lines += &json_line(&ArticleRecord::Article {
                batch_id,
                article: a.clone(),
            });
            prediction_lines += &json_line(&PredictionRecord {
                batch_id,
                predicted_utc: now.clone(),
                bundle_digest: digest.clone(),
                thresholds: pipeline.thresholds(),
                prediction: p.clone(),
            });
            *summary.by_label.entry(p.label.as_str().into()).or_default() += 1;
            *summary.by_rule.entry(p.fired_rule.as_str().into()).or_default() += 1;
        }
        let dir = &self.config.data_dir;
        append(&mut logs.articles, &dir.join(ARTICLES_LOG), &article_lines)?;
        append(&mut logs.predictions, &dir.join(PREDICTIONS_LOG), &prediction_lines)?;

        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        state.last_batch = batch_id;
        for (article, prediction) in articles.into_iter().zip(predictions) {
            let pos = state.entries.len();
            state.index.insert(article.id.clone(), pos);
            state.entries.push(Entry {
                batch_id,
                article,
                prediction,
                bundle_digest: digest.clone(),
                decisions: Vec::new(),
            });
        }
        Ok(summary)
    }

    /// Matching items in ingest order; `page` counts from 0.
    pub fn next_items(&self, filter: &QueueFilter, page: usize, page_size: usize) -> Result<QueuePage, ServiceError> {
        if page_size == 0 || page_size > MAX_PAGE_SIZE {
            return Err(ServiceError::Malformed(format!("page_size must be in 1..={MAX_PAGE_SIZE}")));
        }
        let state = self.read();
        let cache = self.explanations.lock().unwrap_or_else(|e| e.into_inner());
        let matching: Vec<&Entry> = state
            .entries
            .iter()
            .filter(|e| filter.status.is_none_or(|s| e.status() == s))
            .filter(|e| filter.label.is_none_or(|l| e.prediction.label == l))
            .filter(|e| filter.rule.is_none_or(|r| e.prediction.fired_rule == r))
            .collect();
        let items = matching
            .iter()
            .skip(page.saturating_mul(page_size))
            .take(page_size)
            .map(|e| state.work_item(e, cache.get(&e.article.id).cloned()))
            .collect();
        Ok(QueuePage {
            page,
            page_size,
            total: matching.len(),
            items,
        })
    }

    /// The work item with its decision history; the explanation is computed
    /// on first request and cached.
    pub fn article(&self, id: &str) -> Result<ArticleDetail, ServiceError> {
        let (article, in_envelope) = {
            let state = self.read();
            let &idx = state.index.get(id).ok_or_else(|| ServiceError::NotFound(id.to_string()))?;
            let e = &state.entries[idx];
            (e.article.clone(), e.prediction.envelope.in_envelope)
        };
        let mut unavailable = None;
        let explanation = if !in_envelope {
            unavailable = Some("article is outside the operating envelope; see the rule trace".to_string());
            None
        } else if let Some(pipeline) = &self.pipeline {
            let cached = self.explanations.lock().unwrap_or_else(|e| e.into_inner()).get(id).cloned();
            match cached {
                Some(e) => Some(e),
                None => {
                    let doc = pipeline.analyze(&article)?.doc;
                    let e = explain_prediction(
                        &doc,
                        pipeline,
                        self.config.explain_mode,
                        self.config.explain_samples,
                        self.config.explain_seed,
                    )?;
                    self.explanations
                        .lock()
                        .unwrap_or_else(|e| e.into_inner())
                        .insert(id.to_string(), e.clone());
                    Some(e)
                }
            }
        } else {
            unavailable = Some("no model bundle is loaded".to_string());
            None
        };
        let state = self.read();
        let e = &state.entries[state.index[id]];
        Ok(ArticleDetail {
            item: state.work_item(e, explanation),
            trace: e.prediction.trace.clone(),
            history: e.decisions.iter().map(|&i| state.decisions[i].clone()).collect(),
            bundle_digest: e.bundle_digest.clone(),
            explanation_unavailable: unavailable,
        })
    }

    /// Appends a decision; the latest decision governs status.
    pub fn record_decision(&self, article_id: &str, req: DecisionRequest) -> Result<DecisionAck, ServiceError> {
        if req.reviewer.trim().is_empty() {
            return Err(ServiceError::Malformed("reviewer must not be empty".into()));
        }
        let mut logs = self.writer.lock().unwrap_or_else(|e| e.into_inner());
        let (idx, sequence) = {
            let state = self.read();
            let &idx = state
                .index
                .get(article_id)
                .ok_or_else(|| ServiceError::NotFound(article_id.to_string()))?;
            (idx, state.decisions.len() as u64 + 1)
        };
        let decision = ReviewDecision {
            sequence,
            article_id: article_id.to_string(),
            decision: req.decision,
            reviewer: req.reviewer,
            timestamp: timestamp(self.clock.as_ref()),
            note: req.note,
        };
        let path = self.config.data_dir.join(DECISIONS_LOG);
        append(&mut logs.decisions, &path, &json_line(&decision))?;
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        let pos = state.decisions.len();
        state.decisions.push(decision);
        state.entries[idx].decisions.push(pos);
        Ok(DecisionAck {
            article_id: article_id.to_string(),
            sequence,
            status: Status::Reviewed,
            history_len: state.entries[idx].decisions.len(),
        })
    }

    pub fn stats(&self) -> QueueStats {
        let state = self.read();
        let mut by_status = zeroed(["pending".to_string(), "reviewed".to_string()]);
        let mut by_label = label_keys();
        let mut by_rule = rule_keys();
        let mut confusion = ConfusionCounts::default();
        for e in &state.entries {
            let status = match e.status() {
                Status::Pending => "pending",
                Status::Reviewed => "reviewed",
            };
            *by_status.entry(status.into()).or_default() += 1;
            *by_label.entry(e.prediction.label.as_str().into()).or_default() += 1;
            *by_rule.entry(e.prediction.fired_rule.as_str().into()).or_default() += 1;
            if let Some(d) = state.latest_decision(e) {
                confusion.add(e.prediction.label, d.decision.as_label());
            }
        }
        QueueStats {
            total: state.entries.len(),
            by_status,
            by_label,
            by_rule,
            decisions: state.decisions.len(),
            thresholds: self.pipeline.as_ref().map(Pipeline::thresholds),
            bundle_digest: self.bundle_digest.clone(),
            confusion,
        }
    }

    /// The configured factsheet JSON, if any.
    pub fn factsheet(&self) -> Result<serde_json::Value, ServiceError> {
        let path = self
            .config
            .factsheet
            .as_ref()
            .ok_or_else(|| ServiceError::NotFound("factsheet".into()))?;
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        serde_json::from_str(&text).map_err(|e| ServiceError::Corrupt {
            log: "factsheet",
            line: e.line(),
            detail: e.to_string(),
        })
    }
}
