//! Public factsheet: intended use, operating envelope, model summary, data
//! composition and performance, rendered as JSON and Markdown.
//!
//! Disclosure prose is operator-supplied; generation only enforces that it
//! is present. Every performance number is copied from the experiment report.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{DataComposition, ModelBundle};
use crate::calibrate::ExperimentReport;
use crate::explain::{DEFAULT_SAMPLE_COUNT, KERNEL_WIDTH};
use crate::rules::RuleThresholds;

pub const JSON_FILE: &str = "factsheet.json";
pub const MARKDOWN_FILE: &str = "FACTSHEET.md";

#[derive(Debug, Error)]
pub enum FactsheetError {
    #[error("report was produced under bundle {report}, but the bundle digest is {bundle}")]
    DigestMismatch { bundle: String, report: String },
    #[error("mandatory section {0} is missing or empty")]
    MissingSection(&'static str),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisclosureTexts {
    pub intended_use: Option<String>,
    pub out_of_scope_uses: Option<String>,
    pub limitations: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatingEnvelope {
    pub languages: Vec<String>,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub invalid_title_prefixes: Vec<String>,
    pub invalid_abstract_prefixes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub scorer_a_algorithm: String,
    pub scorer_b_algorithm: String,
    pub thresholds: RuleThresholds,
    pub rule_cascade: Vec<String>,
    pub explanation_method: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceRow {
    pub target_recall: f64,
    pub mean_test_fpr: f64,
    pub mean_test_recall: f64,
    pub recall_min: f64,
    pub recall_q1: f64,
    pub recall_median: f64,
    pub recall_q3: f64,
    pub recall_max: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Version {
    pub bundle_digest: String,
    pub date: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvaluationProtocol {
    pub corpus_digest: String,
    pub base_seed: u64,
    pub runs: usize,
    pub grid_step: String,
    pub holdout_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactSheet {
    pub intended_use: String,
    pub out_of_scope_uses: String,
    pub operating_envelope: OperatingEnvelope,
    pub model_summary: ModelSummary,
    pub training_data_composition: DataComposition,
    pub evaluation: EvaluationProtocol,
    /// Sorted ascending by target recall.
    pub performance: Vec<PerformanceRow>,
    pub limitations: String,
    pub version: Version,
}

fn required(text: &Option<String>, name: &'static str) -> Result<String, FactsheetError> {
    match text {
        Some(t) if !t.trim().is_empty() => Ok(t.trim().to_string()),
        _ => Err(FactsheetError::MissingSection(name)),
    }
}

pub fn generate_factsheet(
    bundle: &ModelBundle,
    report: &ExperimentReport,
    texts: &DisclosureTexts,
) -> Result<(FactSheet, String), FactsheetError> {
    let digest = bundle.digest();
    if digest != report.bundle_digest {
        return Err(FactsheetError::DigestMismatch {
            bundle: digest,
            report: report.bundle_digest.clone(),
        });
    }
    let intended_use = required(&texts.intended_use, "intended_use")?;
    let out_of_scope_uses = required(&texts.out_of_scope_uses, "out_of_scope_uses")?;
    let limitations = required(&texts.limitations, "limitations")?;
    let mut performance: Vec<PerformanceRow> = report
        .targets
        .iter()
        .map(|t| PerformanceRow {
            target_recall: t.target_recall,
            mean_test_fpr: t.test_fpr.mean,
            mean_test_recall: t.test_recall.mean,
            recall_min: t.test_recall.min,
            recall_q1: t.test_recall.q1,
            recall_median: t.test_recall.median,
            recall_q3: t.test_recall.q3,
            recall_max: t.test_recall.max,
        })
        .collect();
    if performance.is_empty() {
        return Err(FactsheetError::MissingSection("performance"));
    }
    performance.sort_by(|a, b| a.target_recall.total_cmp(&b.target_recall));
    let t = bundle.thresholds;
    let sheet = FactSheet {
        intended_use,
        out_of_scope_uses,
        operating_envelope: OperatingEnvelope {
            languages: bundle.envelope.allowed_languages.clone(),
            min_tokens: bundle.envelope.min_tokens,
            max_tokens: bundle.envelope.max_tokens,
            invalid_title_prefixes: bundle.envelope.invalid_title_prefixes.clone(),
            invalid_abstract_prefixes: bundle.envelope.invalid_abstract_prefixes.clone(),
        },
        model_summary: ModelSummary {
            scorer_a_algorithm: bundle.scorer_a.algorithm.clone(),
            scorer_b_algorithm: bundle.scorer_b.algorithm.clone(),
            thresholds: t,
            rule_cascade: vec![
                "R1_envelope: outside the operating envelope -> suspect_adverse (human screening)".into(),
                format!("R2_scorer_a: score_a >= {} -> suspect_adverse", t.theta_a),
                format!("R3_scorer_b_highconf: score_b >= {} -> suspect_adverse", t.theta_b),
                "R4_identifiable_patient: identifiable patient mention -> suspect_adverse".into(),
                "R5_default: not_suspect".into(),
            ],
            explanation_method: format!(
                "sentence-level deletion on scorer A: exhaustive ablation, or LIME with {DEFAULT_SAMPLE_COUNT} \
                 masks (keep probability 0.5, kernel exp(-(1-f)^2/{KERNEL_WIDTH}), weighted least squares)"
            ),
        },
        training_data_composition: bundle.composition.clone(),
        evaluation: EvaluationProtocol {
            corpus_digest: report.corpus_digest.clone(),
            base_seed: report.base_seed,
            runs: report.runs,
            grid_step: report.grid_step.to_string(),
            holdout_size: report.holdout_size,
        },
        performance,
        limitations,
        version: Version {
            bundle_digest: digest,
            date: bundle.created_utc.clone(),
        },
    };
    let md = render_markdown(&sheet);
    Ok((sheet, md))
}

pub fn render_markdown(s: &FactSheet) -> String {
    let mut o = String::new();
    let e = &s.operating_envelope;
    let m = &s.model_summary;
    let c = &s.training_data_composition;
    let _ = writeln!(o, "# Screening model factsheet\n");
    let _ = writeln!(o, "## Intended use\n\n{}\n", s.intended_use);
    let _ = writeln!(o, "## Out-of-scope uses\n\n{}\n", s.out_of_scope_uses);
    let _ = writeln!(o, "## Operating envelope\n");
    let _ = writeln!(o, "- Languages: {}", e.languages.join(", "));
    let _ = writeln!(o, "- Token bounds: {} to {}", e.min_tokens, e.max_tokens);
    let _ = writeln!(o, "- Invalid title prefixes: {}", e.invalid_title_prefixes.join(", "));
    let _ = writeln!(o, "- Invalid abstract prefixes: {}", e.invalid_abstract_prefixes.join(", "));
    let _ = writeln!(o, "\nArticles outside the envelope are not scored; they are routed to human screening.\n");
    let _ = writeln!(o, "## Model summary\n");
    let _ = writeln!(o, "- Scorer A: {}", m.scorer_a_algorithm);
    let _ = writeln!(o, "- Scorer B: {}", m.scorer_b_algorithm);
    let _ = writeln!(o, "- Rule cascade (first match wins):");
    for r in &m.rule_cascade {
        let _ = writeln!(o, "  - {r}");
    }
    let _ = writeln!(o, "- Explanations: {}\n", m.explanation_method);
    let _ = writeln!(o, "## Training data composition\n");
    let _ = writeln!(o, "- Corpus digest: {}", c.corpus_digest);
    let _ = writeln!(o, "- Corpus size: {}", c.corpus_size);
    let _ = writeln!(
        o,
        "- Training split: {} ({} suspect_adverse, {} not_suspect; {} after upsampling)",
        c.training_size, c.suspect_adverse, c.not_suspect, c.upsampled_size
    );
    for (cat, n) in &c.categories {
        let _ = writeln!(o, "- Category {cat}: {n}");
    }
    let ev = &s.evaluation;
    let _ = writeln!(o, "\n## Performance\n");
    let _ = writeln!(
        o,
        "Thresholds calibrated on validation halves of a {}-article holdout, evaluated on the test halves; {} runs from seed {}, grid step {}.\n",
        ev.holdout_size, ev.runs, ev.base_seed, ev.grid_step
    );
    let _ = writeln!(o, "| target recall | mean test fpr | mean test recall | recall min | recall q1 | recall median | recall q3 | recall max |");
    let _ = writeln!(o, "|---|---|---|---|---|---|---|---|");
    for r in &s.performance {
        let _ = writeln!(
            o,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            r.target_recall,
            r.mean_test_fpr,
            r.mean_test_recall,
            r.recall_min,
            r.recall_q1,
            r.recall_median,
            r.recall_q3,
            r.recall_max
        );
    }
    let _ = writeln!(o, "\n## Limitations\n\n{}\n", s.limitations);
    let _ = writeln!(o, "## Version\n");
    let _ = writeln!(o, "- Bundle digest: {}", s.version.bundle_digest);
    let _ = writeln!(o, "- Date: {}", s.version.date);
    o
}

/// Numbers in the Markdown performance table, row by row.
pub fn performance_table_numbers(markdown: &str) -> Vec<Vec<f64>> {
    let Some(start) = markdown.find("## Performance") else {
        return Vec::new();
    };
    markdown[start..]
        .lines()
        .skip_while(|l| !l.starts_with("| target recall"))
        .skip(2)
        .take_while(|l| l.starts_with('|'))
        .map(|l| l.split('|').filter_map(|c| c.trim().parse::<f64>().ok()).collect())
        .collect()
}

pub fn write_factsheet(dir: &Path, sheet: &FactSheet, markdown: &str) -> Result<(), FactsheetError> {
    let io = |p: &Path| {
        let path = p.display().to_string();
        move |source| FactsheetError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let json = serde_json::to_string_pretty(sheet).expect("factsheet serializes") + "\n";
    let p = dir.join(JSON_FILE);
    fs::write(&p, json).map_err(io(&p))?;
    let p = dir.join(MARKDOWN_FILE);
    fs::write(&p, markdown).map_err(io(&p))
}
