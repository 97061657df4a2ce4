//! The fixed rule cascade turning envelope verdict, scores and patient
//! mentions into a final label with a complete trace.
//!
//! Order: R1 envelope, R2 scorer A, R3 scorer B (high confidence),
//! R4 identifiable patient, R5 default. All comparisons are inclusive.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::preprocess::{EnvelopeVerdict, PatientMention, TokenizedDoc};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RuleError {
    #[error("scores supplied for out-of-envelope article {0}")]
    ScoresOutsideEnvelope(String),
    #[error("missing scores for in-envelope article {0}")]
    MissingScores(String),
    #[error("threshold {name}={value} outside [0, 1]")]
    InvalidThreshold { name: &'static str, value: String },
    #[error("unknown rule id {0:?}")]
    UnknownRule(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RuleId {
    #[serde(rename = "R1_envelope")]
    R1Envelope,
    #[serde(rename = "R2_scorer_a")]
    R2ScorerA,
    #[serde(rename = "R3_scorer_b_highconf")]
    R3ScorerBHighConf,
    #[serde(rename = "R4_identifiable_patient")]
    R4IdentifiablePatient,
    #[serde(rename = "R5_default")]
    R5Default,
}

impl RuleId {
    pub const ALL: [RuleId; 5] = [
        RuleId::R1Envelope,
        RuleId::R2ScorerA,
        RuleId::R3ScorerBHighConf,
        RuleId::R4IdentifiablePatient,
        RuleId::R5Default,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleId::R1Envelope => "R1_envelope",
            RuleId::R2ScorerA => "R2_scorer_a",
            RuleId::R3ScorerBHighConf => "R3_scorer_b_highconf",
            RuleId::R4IdentifiablePatient => "R4_identifiable_patient",
            RuleId::R5Default => "R5_default",
        }
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleId {
    type Err = RuleError;

    /// Accepts the full id ("R4_identifiable_patient") or its prefix ("R4").
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RuleId::ALL
            .into_iter()
            .find(|r| r.as_str().eq_ignore_ascii_case(s) || r.as_str()[..2].eq_ignore_ascii_case(s))
            .ok_or_else(|| RuleError::UnknownRule(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RuleThresholds {
    pub theta_a: f64,
    pub theta_b: f64,
}

impl RuleThresholds {
    pub fn new(theta_a: f64, theta_b: f64) -> Result<Self, RuleError> {
        let t = RuleThresholds { theta_a, theta_b };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<(), RuleError> {
        for (name, value) in [("theta_a", self.theta_a), ("theta_b", self.theta_b)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(RuleError::InvalidThreshold {
                    name,
                    value: value.to_string(),
                });
            }
        }
        Ok(())
    }
}

impl Default for RuleThresholds {
    fn default() -> Self {
        RuleThresholds {
            theta_a: 0.5,
            theta_b: 0.95,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub rule_id: RuleId,
    pub evaluated: bool,
    pub fired: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleTrace {
    pub entries: Vec<TraceEntry>,
}

impl RuleTrace {
    pub fn fired(&self) -> Option<RuleId> {
        self.entries.iter().find(|e| e.fired).map(|e| e.rule_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningPrediction {
    pub article_id: String,
    pub label: Label,
    pub fired_rule: RuleId,
    pub score_a: Option<f64>,
    pub score_b: Option<f64>,
    pub envelope: EnvelopeVerdict,
    pub mentions: Vec<PatientMention>,
    pub trace: RuleTrace,
}

/// The cascade decision on already-extracted inputs. `scores` is ignored
/// when `in_envelope` is false.
pub fn decide(in_envelope: bool, scores: (f64, f64), has_patient: bool, t: &RuleThresholds) -> RuleId {
    if !in_envelope {
        RuleId::R1Envelope
    } else if scores.0 >= t.theta_a {
        RuleId::R2ScorerA
    } else if scores.1 >= t.theta_b {
        RuleId::R3ScorerBHighConf
    } else if has_patient {
        RuleId::R4IdentifiablePatient
    } else {
        RuleId::R5Default
    }
}

pub fn label_for(rule: RuleId) -> Label {
    Label::from_positive(rule != RuleId::R5Default)
}

/// Runs the cascade. Scores must be present exactly when the article is in
/// the envelope.
pub fn apply_rule_cascade(
    doc: &TokenizedDoc,
    envelope: &EnvelopeVerdict,
    mentions: &[PatientMention],
    scores: Option<(f64, f64)>,
    thresholds: &RuleThresholds,
) -> Result<ScreeningPrediction, RuleError> {
    match (envelope.in_envelope, scores.is_some()) {
        (false, true) => return Err(RuleError::ScoresOutsideEnvelope(doc.article_id.clone())),
        (true, false) => return Err(RuleError::MissingScores(doc.article_id.clone())),
        _ => {}
    }
    let fired = decide(
        envelope.in_envelope,
        scores.unwrap_or((0.0, 0.0)),
        !mentions.is_empty(),
        thresholds,
    );
    let details = |rule: RuleId| -> String {
        match rule {
            RuleId::R1Envelope if envelope.in_envelope => "in_envelope".into(),
            RuleId::R1Envelope => format!(
                "reasons={}",
                envelope.reasons.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(",")
            ),
            RuleId::R2ScorerA => format!("score_a={} theta_a={}", scores.unwrap().0, thresholds.theta_a),
            RuleId::R3ScorerBHighConf => format!("score_b={} theta_b={}", scores.unwrap().1, thresholds.theta_b),
            RuleId::R4IdentifiablePatient if mentions.is_empty() => "mentions=none".into(),
            RuleId::R4IdentifiablePatient => format!(
                "mentions={}",
                mentions.iter().map(|m| format!("{:?}", m.surface)).collect::<Vec<_>>().join(",")
            ),
            RuleId::R5Default => "default".into(),
        }
    };
    let entries = RuleId::ALL
        .into_iter()
        .map(|rule| {
            let evaluated = rule <= fired;
            TraceEntry {
                rule_id: rule,
                evaluated,
                fired: rule == fired,
                detail: if evaluated { details(rule) } else { String::new() },
            }
        })
        .collect();
    Ok(ScreeningPrediction {
        article_id: doc.article_id.clone(),
        label: label_for(fired),
        fired_rule: fired,
        score_a: scores.map(|s| s.0),
        score_b: scores.map(|s| s.1),
        envelope: envelope.clone(),
        mentions: mentions.to_vec(),
        trace: RuleTrace { entries },
    })
}

/// Tab-separated audit line: article_id, fired_rule, label, score_a,
/// score_b, reasons, timestamp. Absent fields are written as `-`.
pub fn audit_line(p: &ScreeningPrediction, at: DateTime<Utc>) -> String {
    let score = |s: Option<f64>| s.map_or("-".to_string(), |v| v.to_string());
    let reasons = if p.envelope.reasons.is_empty() {
        "-".to_string()
    } else {
        p.envelope.reasons.iter().map(|r| r.as_str()).collect::<Vec<_>>().join(",")
    };
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}",
        p.article_id,
        p.fired_rule,
        p.label,
        score(p.score_a),
        score(p.score_b),
        reasons,
        at.to_rfc3339_opts(SecondsFormat::Secs, true)
    )
}
