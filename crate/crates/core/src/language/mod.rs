//! Character-trigram language identification.
//!
//! Each bundled language is represented by its most frequent trigrams
//! (ranked), and an input is assigned to the language whose ranking is
//! closest under the out-of-place measure.

use std::collections::HashMap;
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Trigrams kept per language profile.
pub const PROFILE_SIZE: usize = 300;
/// Inputs shorter than this (in characters) get confidence 0.
pub const MIN_CONFIDENT_CHARS: usize = 20;
/// Relative margin over the runner-up that maps to full confidence.
const FULL_CONFIDENCE_MARGIN: f64 = 0.15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LanguageError {
    #[error("undetectable: input has no letters")]
    Undetectable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageGuess {
    /// ISO-639-1 code.
    pub code: String,
    pub confidence: f64,
}

#[derive(Debug, Clone)]
pub struct LanguageProfile {
    code: String,
    ranks: HashMap<String, usize>,
}

impl LanguageProfile {
    pub fn from_text(code: impl Into<String>, text: &str) -> Self {
        let ranked = ranked_trigrams(text);
        let ranks = ranked
            .into_iter()
            .take(PROFILE_SIZE)
            .enumerate()
            .map(|(r, g)| (g, r))
            .collect();
        LanguageProfile {
            code: code.into(),
            ranks,
        }
    }

    pub fn code(&self) -> &str {
        &self.code
    }

    /// Normalized out-of-place distance in [0, 1].
    fn distance(&self, doc: &[String]) -> f64 {
        let total: usize = doc
            .iter()
            .enumerate()
            .map(|(r, g)| match self.ranks.get(g) {
                Some(&lr) => r.abs_diff(lr),
                None => PROFILE_SIZE,
            })
            .sum();
        total as f64 / (doc.len() * PROFILE_SIZE) as f64
    }
}

fn trigram_counts(text: &str) -> HashMap<String, usize> {
    let lowered: String = text
        .chars()
        .map(|c| if c.is_alphabetic() { c.to_lowercase().next().unwrap_or(c) } else { ' ' })
        .collect();
    let mut counts = HashMap::new();
    for word in lowered.split_whitespace() {
        let padded: Vec<char> = std::iter::once(' ').chain(word.chars()).chain(std::iter::once(' ')).collect();
        for w in padded.windows(3) {
            *counts.entry(w.iter().collect::<String>()).or_insert(0) += 1;
        }
    }
    counts
}

/// Trigrams by descending frequency, ties broken lexicographically.
fn ranked_trigrams(text: &str) -> Vec<String> {
    let mut v: Vec<(String, usize)> = trigram_counts(text).into_iter().collect();
    v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    v.into_iter().map(|(g, _)| g).collect()
}

#[derive(Debug, Clone)]
pub struct LanguageIdentifier {
    profiles: Vec<LanguageProfile>,
}

impl LanguageIdentifier {
    pub fn new(profiles: Vec<LanguageProfile>) -> Self {
        LanguageIdentifier { profiles }
    }

    /// Shared identifier over the bundled profiles (en, fr, de, es, pt, it).
    pub fn bundled() -> &'static LanguageIdentifier {
        static BUNDLED: OnceLock<LanguageIdentifier> = OnceLock::new();
        BUNDLED.get_or_init(|| {
            LanguageIdentifier::new(
                BUNDLED_TEXTS
                    .iter()
                    .map(|(code, text)| LanguageProfile::from_text(*code, text))
                    .collect(),
            )
        })
    }

    pub fn codes(&self) -> Vec<&str> {
        self.profiles.iter().map(|p| p.code()).collect()
    }

    pub fn detect(&self, text: &str) -> Result<LanguageGuess, LanguageError> {
        let doc: Vec<String> = ranked_trigrams(text).into_iter().take(PROFILE_SIZE).collect();
        if doc.is_empty() || self.profiles.is_empty() {
            return Err(LanguageError::Undetectable);
        }
        let mut scored: Vec<(f64, &str)> = self.profiles.iter().map(|p| (p.distance(&doc), p.code())).collect();
        // the code tie-break keeps the result independent of registration order
        scored.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)));
        let (best, code) = scored[0];
        let confidence = if text.trim().chars().count() < MIN_CONFIDENT_CHARS {
            0.0
        } else {
            match scored.get(1) {
                Some(&(second, _)) if second > 0.0 => ((second - best) / second / FULL_CONFIDENCE_MARGIN).clamp(0.0, 1.0),
                Some(_) => 0.0,
                None => 1.0,
            }
        };
        Ok(LanguageGuess {
            code: code.to_string(),
            confidence,
        })
    }
}

const BUNDLED_TEXTS: &[(&str, &str)] = &[
    ("en", include_str!("profiles/en.txt")),
    ("fr", include_str!("profiles/fr.txt")),
    ("de", include_str!("profiles/de.txt")),
    ("es", include_str!("profiles/es.txt")),
    ("pt", include_str!("profiles/pt.txt")),
    ("it", include_str!("profiles/it.txt")),
];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn english_abstract_is_confident() {
        let text = "Hypercalcemia is a rare complication of vitamin D supplementation. We describe a woman who developed symptomatic hypercalcemia after taking high doses for several months, and we discuss the management of this condition.";
        assert!(text.len() >= 200);
        let g = LanguageIdentifier::bundled().detect(text).unwrap();
        assert_eq!(g.code, "en");
        assert!(g.confidence >= 0.5, "confidence {}", g.confidence);
    }

    #[test]
    fn french_sentence() {
        let g = LanguageIdentifier::bundled()
            .detect("Le patient a développé une éruption cutanée après le traitement.")
            .unwrap();
        assert_eq!(g.code, "fr");
        assert!(g.confidence >= 0.5, "confidence {}", g.confidence);
    }

    #[test]
    fn empty_is_undetectable() {
        assert_eq!(LanguageIdentifier::bundled().detect(""), Err(LanguageError::Undetectable));
        assert_eq!(LanguageIdentifier::bundled().detect("  12 345 "), Err(LanguageError::Undetectable));
    }

    #[test]
    fn short_input_has_zero_confidence() {
        let g = LanguageIdentifier::bundled().detect("Erratum").unwrap();
        assert_eq!(g.confidence, 0.0);
    }

    #[test]
    fn registration_order_does_not_matter() {
        let fwd = LanguageIdentifier::bundled().clone();
        let mut rev_profiles = fwd.profiles.clone();
        rev_profiles.reverse();
        let rev = LanguageIdentifier::new(rev_profiles);
        for text in [
            "Der Patient wurde mit Fieber aufgenommen.",
            "la la la",
            "Os resultados sugerem um risco baixo de recidiva.",
            "x",
        ] {
            assert_eq!(fwd.detect(text), rev.detect(text));
        }
    }
}
