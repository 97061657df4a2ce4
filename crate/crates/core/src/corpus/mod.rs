//! Corpus ingestion, deduplication, labelling and splitting.
//!
//! The classifier only ever sees the title and abstract of an article; every
//! other field is carried for provenance and auditing.

mod split;
mod synth;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use split::{
    split_holdout, split_sizes, stratified_split, upsample_minority, CorpusSplits, SplitSpec,
};
pub use synth::{generate_synthetic_corpus, AmbiguityVariant, SYNTHETIC_SOURCE_PREFIX};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate article id {id:?} on line {line} (first seen on line {first_line})")]
    DuplicateId {
        id: String,
        line: usize,
        first_line: usize,
    },
    #[error("corpus must contain at least one article of each label")]
    MissingLabel,
    #[error("corpus of {size} items is too small: split sizes train={train} validation={validation} test={test}")]
    SplitTooSmall {
        size: usize,
        train: usize,
        validation: usize,
        test: usize,
    },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("unsupported corpus format {0:?} (expected jsonl or csv)")]
    UnknownFormat(String),
}

/// Gold label for the binary screening task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    SuspectAdverse,
    NotSuspect,
}

impl Label {
    pub fn is_positive(self) -> bool {
        matches!(self, Label::SuspectAdverse)
    }

    pub fn from_positive(positive: bool) -> Self {
        if positive {
            Label::SuspectAdverse
        } else {
            Label::NotSuspect
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::SuspectAdverse => "suspect_adverse",
            Label::NotSuspect => "not_suspect",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "suspect_adverse" | "suspect" => Ok(Label::SuspectAdverse),
            "not_suspect" => Ok(Label::NotSuspect),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

/// The screening unit: an identifier plus raw title and abstract text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Article {
    pub fn new(id: impl Into<String>, title: impl Into<String>, abstract_text: impl Into<String>) -> Self {
        Article {
            id: id.into(),
            title: title.into(),
            abstract_text: abstract_text.into(),
            source: None,
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("missing id".into());
        }
        if self.title.trim().is_empty() && self.abstract_text.trim().is_empty() {
            return Err("title and abstract are both empty".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecondReview {
    pub label: Label,
    pub annotator: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledArticle {
    pub article: Article,
    pub label: Label,
    pub annotator: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_review: Option<SecondReview>,
    /// Selection category the article was retrieved under, used as an
    /// optional extra stratification key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl LabeledArticle {
    pub fn new(article: Article, label: Label, annotator: impl Into<String>) -> Self {
        LabeledArticle {
            article,
            label,
            annotator: annotator.into(),
            second_review: None,
            category: None,
        }
    }

    pub fn id(&self) -> &str {
        &self.article.id
    }
}

/// One line of a JSONL corpus file (or one CSV row).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    #[serde(default)]
    pub id: String,
    #[serde(default)]
    pub title: String,
    #[serde(default, rename = "abstract")]
    pub abstract_text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotator: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub second_annotator: Option<String>,
}

impl CorpusRecord {
    fn article(&self) -> Article {
        Article {
            id: self.id.trim().to_string(),
            title: self.title.clone(),
            abstract_text: self.abstract_text.clone(),
            source: self.source.clone().filter(|s| !s.is_empty()),
        }
    }

    fn labeled(&self) -> Result<LabeledArticle, String> {
        let article = self.article();
        article.validate()?;
        let label: Label = self
            .label
            .as_deref()
            .ok_or_else(|| "missing label".to_string())?
            .parse()?;
        let annotator = self.annotator.clone().unwrap_or_default();
        let second_review = match (&self.second_label, &self.second_annotator) {
            (None, None) => None,
            (Some(l), Some(a)) => {
                if a == &annotator {
                    return Err("second reviewer must differ from the first annotator".into());
                }
                Some(SecondReview {
                    label: l.parse()?,
                    annotator: a.clone(),
                })
            }
            _ => return Err("second review needs both second_label and second_annotator".into()),
        };
        Ok(LabeledArticle {
            article,
            label,
            annotator,
            second_review,
            category: self.category.clone().filter(|c| !c.is_empty()),
        })
    }

    pub fn from_labeled(item: &LabeledArticle) -> Self {
        CorpusRecord {
            id: item.article.id.clone(),
            title: item.article.title.clone(),
            abstract_text: item.article.abstract_text.clone(),
            source: item.article.source.clone(),
            label: Some(item.label.as_str().to_string()),
            annotator: Some(item.annotator.clone()),
            category: item.category.clone(),
            second_label: item.second_review.as_ref().map(|r| r.label.as_str().to_string()),
            second_annotator: item.second_review.as_ref().map(|r| r.annotator.clone()),
        }
    }

    pub fn from_article(article: &Article) -> Self {
        CorpusRecord {
            id: article.id.clone(),
            title: article.title.clone(),
            abstract_text: article.abstract_text.clone(),
            source: article.source.clone(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestFormat {
    Jsonl,
    Csv,
}

impl IngestFormat {
    /// Picks the format from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => IngestFormat::Csv,
            _ => IngestFormat::Jsonl,
        }
    }
}

impl FromStr for IngestFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" | "json" => Ok(IngestFormat::Jsonl),
            "csv" => Ok(IngestFormat::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// A record that failed validation; `line` is 1-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Reject {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested<T> {
    pub items: Vec<T>,
    pub rejects: Vec<Reject>,
}

fn read_records(path: &Path, format: IngestFormat) -> Result<Vec<(usize, Result<CorpusRecord, String>)>, CorpusError> {
    let io_err = |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut out = Vec::new();
    match format {
        IngestFormat::Jsonl => {
            let text = fs::read_to_string(path).map_err(io_err)?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let parsed = serde_json::from_str::<CorpusRecord>(line).map_err(|e| format!("malformed json: {e}"));
                out.push((i + 1, parsed));
            }
        }
        IngestFormat::Csv => {
            let file = fs::File::open(path).map_err(io_err)?;
            let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
            for result in reader.deserialize::<CorpusRecord>() {
                match result {
                    Ok(rec) => {
                        // header is line 1
                        let line = out.len() + 2;
                        out.push((line, Ok(rec)));
                    }
                    Err(e) => {
                        let line = e.position().map(|p| p.line() as usize).unwrap_or(out.len() + 2);
                        if matches!(e.kind(), csv::ErrorKind::Io(_)) {
                            return Err(CorpusError::Csv(e));
                        }
                        out.push((line, Err(format!("malformed csv row: {e}"))));
                    }
                }
            }
        }
    }
    Ok(out)
}

fn collect_unique<T>(
    records: Vec<(usize, Result<CorpusRecord, String>)>,
    convert: impl Fn(&CorpusRecord) -> Result<T, String>,
    id_of: impl Fn(&T) -> &str,
) -> Result<Ingested<T>, CorpusError> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut items = Vec::new();
    let mut rejects = Vec::new();
    for (line, rec) in records {
        match rec.and_then(|r| convert(&r)) {
            Ok(item) => {
                let id = id_of(&item).to_string();
                if let Some(&first_line) = seen.get(&id) {
                    return Err(CorpusError::DuplicateId { id, line, first_line });
                }
                seen.insert(id, line);
                items.push(item);
            }
            Err(reason) => rejects.push(Reject { line, reason }),
        }
    }
    Ok(Ingested { items, rejects })
}

/// Parses unlabeled articles in file order. Record-level problems become
/// rejects; a duplicate id aborts the whole ingest.
pub fn ingest_articles(path: &Path, format: IngestFormat) -> Result<Ingested<Article>, CorpusError> {
    let records = read_records(path, format)?;
    collect_unique(
        records,
        |r| {
            let a = r.article();
            a.validate().map(|_| a)
        },
        |a| &a.id,
    )
}

/// Like [`ingest_articles`] but every record must carry a label.
pub fn ingest_labeled(path: &Path, format: IngestFormat) -> Result<Ingested<LabeledArticle>, CorpusError> {
    let records = read_records(path, format)?;
    collect_unique(records, |r| r.labeled(), |a| &a.article.id)
}

/// Parses a JSONL or JSON-array payload held in memory (used by the HTTP
/// batch endpoint).
pub fn parse_articles(payload: &str) -> Result<Ingested<Article>, CorpusError> {
    let trimmed = payload.trim_start();
    let records: Vec<(usize, Result<CorpusRecord, String>)> = if trimmed.starts_with('[') {
        match serde_json::from_str::<Vec<CorpusRecord>>(trimmed) {
            Ok(v) => v.into_iter().enumerate().map(|(i, r)| (i + 1, Ok(r))).collect(),
            Err(e) => vec![(1, Err(format!("malformed json array: {e}")))],
        }
    } else {
        payload
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str::<CorpusRecord>(l).map_err(|e| format!("malformed json: {e}"))))
            .collect()
    };
    collect_unique(
        records,
        |r| {
            let a = r.article();
            a.validate().map(|_| a)
        },
        |a| &a.id,
    )
}

pub fn write_labeled_jsonl(path: &Path, items: &[LabeledArticle]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(&labeled_jsonl_bytes(items))?;
    w.flush()
}

pub fn write_articles_jsonl(path: &Path, items: &[Article]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for a in items {
        serde_json::to_writer(&mut w, &CorpusRecord::from_article(a))?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Canonical JSONL bytes of a labeled corpus (one record per line, LF).
pub fn labeled_jsonl_bytes(items: &[LabeledArticle]) -> Vec<u8> {
    let mut buf = Vec::new();
    for item in items {
        serde_json::to_writer(&mut buf, &CorpusRecord::from_labeled(item)).expect("record serializes");
        buf.push(b'\n');
    }
    buf
}

/// SHA-256 over the canonical JSONL encoding, order-sensitive.
pub fn corpus_digest(items: &[LabeledArticle]) -> String {
    crate::digest::sha256_hex(&labeled_jsonl_bytes(items))
}

fn dedup_key(a: &Article) -> String {
    let joined = format!("{}\n{}", a.title, a.abstract_text);
    joined
        .split_whitespace()
        .map(|w| w.to_lowercase())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A dropped duplicate and the id of the article it duplicates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DroppedDuplicate {
    pub id: String,
    pub duplicate_of: String,
}

/// Normalized exact-match deduplication; the first occurrence is kept.
pub fn deduplicate(articles: &[Article]) -> (Vec<Article>, Vec<DroppedDuplicate>) {
    let mut first: HashMap<String, String> = HashMap::new();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for a in articles {
        let key = dedup_key(a);
        match first.get(&key) {
            Some(orig) => dropped.push(DroppedDuplicate {
                id: a.id.clone(),
                duplicate_of: orig.clone(),
            }),
            None => {
                first.insert(key, a.id.clone());
                kept.push(a.clone());
            }
        }
    }
    (kept, dropped)
}

pub(crate) fn label_counts(items: &[LabeledArticle]) -> (usize, usize) {
    let pos = items.iter().filter(|i| i.label.is_positive()).count();
    (pos, items.len() - pos)
}

#[cfg(test)]
pub(crate) fn ids(items: &[LabeledArticle]) -> std::collections::HashSet<&str> {
    items.iter().map(|i| i.id()).collect()
}
