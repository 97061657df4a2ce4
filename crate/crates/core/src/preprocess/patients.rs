//! Pattern-based extraction of identifiable-patient mentions.

use serde::{Deserialize, Serialize};

use super::TokenizedDoc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MentionKind {
    AgeSexIndividual,
    ExplicitCaseReport,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientMention {
    pub start: usize,
    pub end: usize,
    pub surface: String,
    pub kind: MentionKind,
}

/// `head`, then at most `max_gap` tokens, then `tail` (e.g. "a case of" ...
/// "in a patient").
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GappedPhrase {
    pub head: String,
    pub tail: String,
    pub max_gap: usize,
}

/// Pattern lists; stored in the model bundle, not hard-coded in the rule.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientPatterns {
    pub age_units: Vec<String>,
    pub person_nouns: Vec<String>,
    /// How many tokens after "old" may hold the person noun.
    pub person_window: usize,
    pub case_report_phrases: Vec<String>,
    pub gapped_phrases: Vec<GappedPhrase>,
}

impl Default for PatientPatterns {
    fn default() -> Self {
        let s = |xs: &[&str]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        PatientPatterns {
            age_units: s(&["year", "month", "week", "day"]),
            person_nouns: s(&["man", "woman", "male", "female", "boy", "girl", "patient", "infant", "neonate"]),
            person_window: 3,
            case_report_phrases: s(&["case report of", "we report a case"]),
            gapped_phrases: vec![GappedPhrase {
                head: "a case of".into(),
                tail: "in a patient".into(),
                max_gap: 12,
            }],
        }
    }
}

const ONES: &[&str] = &[
    "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "eleven", "twelve", "thirteen",
    "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen",
];
const TENS: &[&str] = &["twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"];

fn ones_value(w: &str) -> Option<u32> {
    ONES.iter().position(|x| *x == w).map(|p| p as u32 + 1)
}

fn tens_value(w: &str) -> Option<u32> {
    TENS.iter().position(|x| *x == w).map(|p| (p as u32 + 2) * 10)
}

/// A piece of a hyphen-split token, remembering which token it came from.
struct Part<'a> {
    text: &'a str,
    token: usize,
    last_in_token: bool,
    first_in_token: bool,
}

fn parts(doc: &TokenizedDoc) -> Vec<Part<'_>> {
    let mut out = Vec::new();
    for (ti, t) in doc.tokens.iter().enumerate() {
        let pieces: Vec<&str> = t.text.split(['-', '\u{2010}', '\u{2011}']).collect();
        let n = pieces.len();
        for (pi, p) in pieces.into_iter().enumerate() {
            out.push(Part {
                text: p,
                token: ti,
                first_in_token: pi == 0,
                last_in_token: pi + 1 == n,
            });
        }
    }
    out
}

/// Number of parts consumed by a number expression starting at `i`.
fn number_at(parts: &[Part<'_>], i: usize) -> Option<usize> {
    let p = parts.get(i)?;
    if !p.text.is_empty() && p.text.len() <= 3 && p.text.bytes().all(|b| b.is_ascii_digit()) {
        return Some(1);
    }
    if tens_value(p.text).is_some() {
        // "twenty-two" / "twenty two"
        if parts.get(i + 1).is_some_and(|q| ones_value(q.text).is_some_and(|v| v < 10)) {
            return Some(2);
        }
        return Some(1);
    }
    ones_value(p.text).map(|_| 1)
}

fn is_unit(patterns: &PatientPatterns, w: &str) -> bool {
    patterns
        .age_units
        .iter()
        .any(|u| w == u || w.strip_suffix('s') == Some(u.as_str()))
}

fn age_mentions(doc: &TokenizedDoc, patterns: &PatientPatterns) -> Vec<PatientMention> {
    let ps = parts(doc);
    let mut out = Vec::new();
    let mut i = 0;
    while i < ps.len() {
        if !ps[i].first_in_token {
            i += 1;
            continue;
        }
        let Some(n) = number_at(&ps, i) else {
            i += 1;
            continue;
        };
        let unit = i + n;
        let old = unit + 1;
        let matched = ps.get(unit).is_some_and(|p| is_unit(patterns, p.text))
            && ps.get(old).is_some_and(|p| p.text == "old" && p.last_in_token);
        if !matched {
            i += 1;
            continue;
        }
        let first_tok = ps[i].token;
        let old_tok = ps[old].token;
        let mut last_tok = old_tok;
        for t in old_tok + 1..=(old_tok + patterns.person_window).min(doc.tokens.len().saturating_sub(1)) {
            if patterns.person_nouns.iter().any(|p| p == &doc.tokens[t].text) {
                last_tok = t;
            }
        }
        let (start, end) = (doc.tokens[first_tok].start, doc.tokens[last_tok].end);
        out.push(PatientMention {
            start,
            end,
            surface: doc.text[start..end].to_string(),
            kind: MentionKind::AgeSexIndividual,
        });
        i = old + 1;
    }
    out
}

fn phrase_tokens(p: &str) -> Vec<String> {
    p.split_whitespace().map(str::to_lowercase).collect()
}

fn matches_at(doc: &TokenizedDoc, at: usize, phrase: &[String]) -> bool {
    phrase.len() <= doc.tokens.len().saturating_sub(at)
        && phrase.iter().enumerate().all(|(k, w)| &doc.tokens[at + k].text == w)
}

fn case_report_mentions(doc: &TokenizedDoc, patterns: &PatientPatterns) -> Vec<PatientMention> {
    let mut out = Vec::new();
    let mut push = |first: usize, last: usize| {
        let (start, end) = (doc.tokens[first].start, doc.tokens[last].end);
        out.push(PatientMention {
            start,
            end,
            surface: doc.text[start..end].to_string(),
            kind: MentionKind::ExplicitCaseReport,
        });
    };
    let phrases: Vec<Vec<String>> = patterns.case_report_phrases.iter().map(|p| phrase_tokens(p)).collect();
    let gapped: Vec<(Vec<String>, Vec<String>, usize)> = patterns
        .gapped_phrases
        .iter()
        .map(|g| (phrase_tokens(&g.head), phrase_tokens(&g.tail), g.max_gap))
        .collect();
    for i in 0..doc.tokens.len() {
        for p in &phrases {
            if !p.is_empty() && matches_at(doc, i, p) {
                push(i, i + p.len() - 1);
            }
        }
        for (head, tail, gap) in &gapped {
            if head.is_empty() || tail.is_empty() || !matches_at(doc, i, head) {
                continue;
            }
            let from = i + head.len();
            if let Some(j) = (from..=from + gap).find(|&j| matches_at(doc, j, tail)) {
                push(i, j + tail.len() - 1);
            }
        }
    }
    out
}

/// Age expressions ("58-year-old woman") and explicit case-report phrases,
/// ordered by span; overlapping matches keep the earlier (then longer) one.
pub fn extract_patient_mentions(doc: &TokenizedDoc, patterns: &PatientPatterns) -> Vec<PatientMention> {
    let mut all = age_mentions(doc, patterns);
    all.extend(case_report_mentions(doc, patterns));
    all.sort_by(|a, b| a.start.cmp(&b.start).then(b.end.cmp(&a.end)));
    let mut out: Vec<PatientMention> = Vec::new();
    for m in all {
        if out.last().is_some_and(|prev| m.start < prev.end) {
            continue;
        }
        out.push(m);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Article;
    use crate::preprocess::normalize_tokenize;
    use proptest::prelude::*;

    fn mentions(text: &str) -> Vec<PatientMention> {
        let d = normalize_tokenize(&Article::new("X", "", text));
        extract_patient_mentions(&d, &PatientPatterns::default())
    }

    #[test]
    fn hyphenated_age_with_person() {
        let m = mentions("A 58-year-old woman developed hypercalcemia");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].kind, MentionKind::AgeSexIndividual);
        assert_eq!(m[0].surface, "58-year-old woman");
    }

    #[test]
    fn male_patient_extends_to_last_person_noun() {
        let m = mentions("46-year-old male patient");
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].surface, "46-year-old male patient");
    }

    #[test]
    fn animal_dosing_has_no_mention() {
        assert!(mentions("Mice were dosed at 10 mg/kg for 30 days").is_empty());
    }

    #[test]
    fn spelled_and_spaced_forms() {
        assert_eq!(mentions("a twenty-two-year-old man")[0].surface, "twenty-two-year-old man");
        assert_eq!(mentions("a 6 months old infant")[0].surface, "6 months old infant");
        assert_eq!(mentions("Seven-year-old girl")[0].surface, "Seven-year-old girl");
        assert_eq!(mentions("a 70-year old")[0].surface, "70-year old");
        assert!(mentions("Twenty-two patients experienced peripheral neuropathy").is_empty());
    }

    #[test]
    fn case_report_phrases() {
        let m = mentions("We report a case of rash. This is a case of severe rash in a patient.");
        assert_eq!(m.len(), 2);
        assert!(m.iter().all(|x| x.kind == MentionKind::ExplicitCaseReport));
        assert_eq!(m[0].surface, "We report a case");
        assert_eq!(m[1].surface, "a case of severe rash in a patient");
        assert_eq!(mentions("Case report of hepatotoxicity")[0].surface, "Case report of");
    }

    proptest! {
        #[test]
        fn surface_equals_slice(prefix in "[a-z ]{0,20}", age in 1u32..99, unit in 0usize..4, tail in "[a-z ]{0,20}") {
            let units = ["year", "month", "week", "day"];
            let text = format!("{prefix} {age}-{}-old woman {tail} we report a case", units[unit]);
            let d = normalize_tokenize(&Article::new("X", "T", &text));
            let ms = extract_patient_mentions(&d, &PatientPatterns::default());
            prop_assert!(!ms.is_empty());
            for m in &ms {
                prop_assert_eq!(&d.text[m.start..m.end], m.surface.as_str());
            }
            for w in ms.windows(2) {
                prop_assert!(w[0].end <= w[1].start);
            }
        }
    }
}
