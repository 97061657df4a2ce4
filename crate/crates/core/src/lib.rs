//! Screening pipeline for medical literature monitoring.
//!
//! Articles (title + abstract only) flow through preprocessing, two scorer
//! slots and a fixed rule cascade. Thresholds are calibrated to minimize the
//! false positive rate at an operator-chosen target recall, predictions are
//! explained at sentence level, and public factsheets are generated from the
//! model bundle and the experiment report.

pub mod bundle;
pub mod calibrate;
pub mod corpus;
pub mod digest;
pub mod explain;
pub mod factsheet;
pub mod language;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod preprocess;
pub mod rules;
pub mod stats;

pub use bundle::{ModelBundle, BUNDLE_VERSION};
pub use calibrate::{CalibrationResult, ExperimentReport, GridSpec};
pub use corpus::{Article, Label, LabeledArticle};
pub use metrics::ConfusionCounts;
pub use pipeline::Pipeline;
pub use preprocess::{EnvelopeConfig, EnvelopeVerdict, TokenizedDoc};
pub use rules::{RuleId, RuleThresholds, ScreeningPrediction};
