//! Run configuration: built-in defaults, overlaid by a TOML file, overlaid
//! by command-line flags.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use mlmscreen_core::explain::{ExplainMode, DEFAULT_SAMPLE_COUNT};
use mlmscreen_core::factsheet::DisclosureTexts;
use serde::{Deserialize, Serialize};

use crate::args::Flags;

/// Problems with flags or configuration; reported with exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn usage(msg: impl Into<String>) -> UsageError {
    UsageError(msg.into())
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeOverrides {
    pub min_tokens: Option<usize>,
    pub max_tokens: Option<usize>,
    pub languages: Option<Vec<String>>,
    pub invalid_title_prefixes: Option<Vec<String>>,
    pub invalid_abstract_prefixes: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticFile {
    pub size: Option<usize>,
    pub positive_rate: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeFile {
    pub addr: Option<String>,
    pub factsheet: Option<PathBuf>,
}

/// The TOML file. Every key is optional; relative paths are resolved
/// against the file's directory.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub corpus: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed: Option<u64>,
    pub grid_step: Option<f64>,
    pub target_recall: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub mode: Option<String>,
    pub explain_samples: Option<usize>,
    pub train_fraction: Option<f64>,
    pub stratify_by_category: Option<bool>,
    pub frozen_time: Option<String>,
    #[serde(default)]
    pub envelope: EnvelopeOverrides,
    #[serde(default)]
    pub synthetic: SyntheticFile,
    #[serde(default)]
    pub serve: ServeFile,
    #[serde(default)]
    pub factsheet: DisclosureTexts,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, UsageError> {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: FileConfig =
            toml::from_str(&text).map_err(|e| usage(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.corpus,
            &mut cfg.bundle,
            &mut cfg.out,
            &mut cfg.report,
            &mut cfg.serve.factsheet,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }
}

/// Fully resolved settings for one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Settings {
    pub corpus: Option<PathBuf>,
    pub bundle: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub seed: u64,
    pub grid_step: f64,
    pub target_recalls: Vec<f64>,
    pub runs: usize,
    pub mode: ExplainMode,
    pub explain_samples: usize,
    pub train_fraction: f64,
    pub stratify_by_category: bool,
    pub frozen_time: Option<DateTime<Utc>>,
    pub size: usize,
    pub positive_rate: f64,
    pub addr: SocketAddr,
    pub factsheet_json: Option<PathBuf>,
    #[serde(skip)]
    pub envelope: EnvelopeOverrides,
    #[serde(skip)]
    pub texts: DisclosureTexts,
}

pub const DEFAULT_TARGETS: [f64; 5] = [0.91, 0.93, 0.95, 0.97, 0.99];

fn parse_time(s: &str) -> Result<DateTime<Utc>, UsageError> {
    DateTime::parse_from_rfc3339(s)
        .map(|t| t.with_timezone(&Utc))
        .map_err(|e| usage(format!("--frozen-time {s:?} is not an RFC 3339 timestamp: {e}")))
}

impl Settings {
    pub fn resolve(flags: &Flags, file: FileConfig) -> Result<Self, UsageError> {
        let mode_text = flags.mode.clone().or(file.mode).unwrap_or_else(|| "sampled_lime".into());
        let mode = mode_text.parse().map_err(|e| usage(format!("--mode: {e}")))?;
        let frozen_time = flags.frozen_time.as_deref().or(file.frozen_time.as_deref()).map(parse_time).transpose()?;
        let addr_text = flags.addr.clone().or(file.serve.addr).unwrap_or_else(|| "127.0.0.1:8080".into());
        let addr = addr_text.parse().map_err(|e| usage(format!("--addr {addr_text:?}: {e}")))?;
        let targets = if flags.target_recall.is_empty() {
            file.target_recall.unwrap_or_else(|| DEFAULT_TARGETS.to_vec())
        } else {
            flags.target_recall.clone()
        };
        let s = Settings {
            corpus: flags.corpus.clone().or(file.corpus),
            bundle: flags.bundle.clone().or(file.bundle),
            out: flags.out.clone().or(file.out),
            report: flags.report.clone().or(file.report),
            seed: flags.seed.or(file.seed).unwrap_or(7),
            grid_step: flags.grid_step.or(file.grid_step).unwrap_or(0.01),
            target_recalls: targets,
            runs: flags.runs.or(file.runs).unwrap_or(10),
            mode,
            explain_samples: file.explain_samples.unwrap_or(DEFAULT_SAMPLE_COUNT),
            train_fraction: file.train_fraction.unwrap_or(0.9),
            stratify_by_category: file.stratify_by_category.unwrap_or(true),
            frozen_time,
            size: flags.size.or(file.synthetic.size).unwrap_or(5000),
            positive_rate: flags.positive_rate.or(file.synthetic.positive_rate).unwrap_or(0.3),
            addr,
            factsheet_json: flags.factsheet.clone().or(file.serve.factsheet),
            envelope: file.envelope,
            texts: file.factsheet,
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), UsageError> {
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(usage(format!("grid step must be in (0, 1], got {}", self.grid_step)));
        }
        if self.target_recalls.is_empty() {
            return Err(usage("at least one target recall is required"));
        }
        if let Some(t) = self.target_recalls.iter().find(|t| !(**t > 0.0 && **t <= 1.0)) {
            return Err(usage(format!("target recall must be in (0, 1], got {t}")));
        }
        if self.runs == 0 {
            return Err(usage("runs must be at least 1"));
        }
        if self.explain_samples == 0 {
            return Err(usage("explain_samples must be at least 1"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(usage(format!("train_fraction must be in (0, 1), got {}", self.train_fraction)));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 1.0) {
            return Err(usage(format!("positive rate must be in (0, 1), got {}", self.positive_rate)));
        }
        if let (Some(lo), Some(hi)) = (self.envelope.min_tokens, self.envelope.max_tokens) {
            if lo > hi {
                return Err(usage(format!("envelope min_tokens {lo} exceeds max_tokens {hi}")));
            }
        }
        Ok(())
    }

    /// The target used when a single threshold pair must be chosen.
    pub fn operating_target(&self) -> f64 {
        *self.target_recalls.last().expect("validated non-empty")
    }

    pub fn now(&self) -> DateTime<Utc> {
        self.frozen_time.unwrap_or_else(Utc::now)
    }
}
