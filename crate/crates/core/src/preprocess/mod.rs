//! Text normalization, tokenization, sentence splitting and operating
//! envelope checks.

mod patients;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use crate::corpus::Article;
use crate::language::{LanguageError, LanguageGuess, LanguageIdentifier};

pub use patients::{extract_patient_mentions, GappedPhrase, MentionKind, PatientMention, PatientPatterns};

/// Separator placed between title and abstract in [`TokenizedDoc::text`].
pub const TITLE_SEPARATOR: &str = "\n";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    /// Lowercased surface form.
    pub text: String,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedDoc {
    pub article_id: String,
    /// `title + "\n" + abstract`; every span indexes bytes of this string.
    pub text: String,
    pub title_end: usize,
    pub tokens: Vec<Token>,
    pub sentences: Vec<SentenceSpan>,
    pub language: Option<LanguageGuess>,
    pub token_count: usize,
}

impl TokenizedDoc {
    pub fn title(&self) -> &str {
        &self.text[..self.title_end]
    }

    pub fn abstract_text(&self) -> &str {
        &self.text[self.title_end + TITLE_SEPARATOR.len()..]
    }

    pub fn slice(&self, start: usize, end: usize) -> &str {
        &self.text[start..end]
    }

    /// Sentence index of every token.
    pub fn token_sentences(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.tokens.len());
        let mut s = 0;
        for t in &self.tokens {
            while s < self.sentences.len() && self.sentences[s].end <= t.start {
                s += 1;
            }
            out.push(s.min(self.sentences.len().saturating_sub(1)));
        }
        out
    }

    /// Token strings of the sentences whose `keep` flag is set.
    pub fn tokens_keeping(&self, keep: &[bool]) -> Vec<&str> {
        self.tokens
            .iter()
            .zip(self.token_sentences())
            .filter(|(_, s)| keep.get(*s).copied().unwrap_or(false))
            .map(|(t, _)| t.text.as_str())
            .collect()
    }

    pub fn token_strs(&self) -> Vec<&str> {
        self.tokens.iter().map(|t| t.text.as_str()).collect()
    }
}

fn is_hyphen(s: &str) -> bool {
    matches!(s, "-" | "\u{2010}" | "\u{2011}")
}

fn is_wordlike(s: &str) -> bool {
    s.chars().any(char::is_alphanumeric)
}

fn tokenize(text: &str) -> Vec<Token> {
    let segs: Vec<(usize, &str)> = text.split_word_bound_indices().collect();
    let mut tokens: Vec<Token> = Vec::new();
    let mut i = 0;
    while i < segs.len() {
        let (start, seg) = segs[i];
        if !is_wordlike(seg) {
            i += 1;
            continue;
        }
        let mut end = start + seg.len();
        let mut j = i + 1;
        // glue word-hyphen-word chains ("46-year-old") into one token
        while j + 1 < segs.len() && is_hyphen(segs[j].1) && is_wordlike(segs[j + 1].1) {
            end = segs[j + 1].0 + segs[j + 1].1.len();
            j += 2;
        }
        let surface: String = text[start..end].chars().filter(|c| !c.is_control()).collect();
        tokens.push(Token {
            text: surface.to_lowercase(),
            start,
            end,
        });
        i = j;
    }
    tokens
}

/// Abbreviations whose trailing period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "vs.", "e.g.", "i.e.", "dr.", "fig.", "figs.", "et al.", "al.", "approx.", "no.", "nos.", "mr.", "mrs.",
    "ms.", "prof.", "ref.", "refs.", "eq.", "cf.", "ca.", "st.", "vol.", "resp.", "incl.", "inc.", "ltd.",
    "co.", "jr.", "sr.", "min.", "max.", "mg.", "tab.", "suppl.",
];

fn is_closing(c: char) -> bool {
    matches!(c, ')' | ']' | '"' | '\'' | '\u{2019}' | '\u{201D}')
}

fn is_opening(c: char) -> bool {
    matches!(c, '(' | '[' | '"' | '\'' | '\u{2018}' | '\u{201C}')
}

fn ends_with_abbreviation(region: &str, punct_end: usize) -> bool {
    let head = &region[..punct_end];
    let word_start = head.rfind(char::is_whitespace).map(|p| p + 1).unwrap_or(0);
    let word = head[word_start..].trim_start_matches(is_opening).to_lowercase();
    if ABBREVIATIONS.contains(&word.as_str()) {
        return true;
    }
    // "et al." spans two words
    let before = head[..word_start].trim_end();
    word == "al." && before.to_lowercase().ends_with("et")
}

fn trimmed(text: &str, start: usize, end: usize) -> Option<(usize, usize)> {
    let s = &text[start..end];
    let lead = s.len() - s.trim_start().len();
    let trail = s.len() - s.trim_end().len();
    let (a, b) = (start + lead, end - trail);
    (a < b).then_some((a, b))
}

/// Boundaries (absolute byte offsets) at which `region` is split.
fn sentence_breaks(region: &str, offset: usize) -> Vec<usize> {
    let chars: Vec<(usize, char)> = region.char_indices().collect();
    let mut breaks = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i].1;
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '.' | '!' | '?') {
                j += 1;
            }
            while j < chars.len() && is_closing(chars[j].1) {
                j += 1;
            }
            let punct_end = chars.get(j).map(|x| x.0).unwrap_or(region.len());
            if j < chars.len() && chars[j].1.is_whitespace() {
                let mut k = j;
                while k < chars.len() && chars[k].1.is_whitespace() {
                    k += 1;
                }
                while k < chars.len() && is_opening(chars[k].1) {
                    k += 1;
                }
                let next_ok = chars.get(k).is_some_and(|&(_, n)| n.is_uppercase() || n.is_ascii_digit());
                if next_ok && !(c == '.' && ends_with_abbreviation(region, punct_end)) {
                    breaks.push(offset + punct_end);
                }
            }
            i = j.max(i + 1);
        } else {
            i += 1;
        }
    }
    breaks
}

/// Rule-based sentence spans: the title is always its own sentence, the
/// abstract is split at `.`/`!`/`?` followed by whitespace and an uppercase
/// letter or digit, unless the period closes a known abbreviation.
pub fn split_sentences(doc: &TokenizedDoc) -> Vec<SentenceSpan> {
    let mut spans = Vec::new();
    if let Some((a, b)) = trimmed(&doc.text, 0, doc.title_end) {
        spans.push((a, b));
    }
    let abs_start = (doc.title_end + TITLE_SEPARATOR.len()).min(doc.text.len());
    let region = &doc.text[abs_start..];
    let mut cursor = abs_start;
    for brk in sentence_breaks(region, abs_start).into_iter().chain(std::iter::once(doc.text.len())) {
        if let Some(span) = trimmed(&doc.text, cursor, brk) {
            spans.push(span);
        }
        cursor = brk;
    }
    spans
        .into_iter()
        .enumerate()
        .map(|(index, (start, end))| SentenceSpan { index, start, end })
        .collect()
}

/// Builds the tokenized document (language left unset).
pub fn normalize_tokenize(article: &Article) -> TokenizedDoc {
    let text = format!("{}{}{}", article.title, TITLE_SEPARATOR, article.abstract_text);
    let tokens = tokenize(&text);
    let mut doc = TokenizedDoc {
        article_id: article.id.clone(),
        title_end: article.title.len(),
        token_count: tokens.len(),
        tokens,
        text,
        sentences: Vec::new(),
        language: None,
    };
    doc.sentences = split_sentences(&doc);
    doc
}

pub fn detect_language(doc: &TokenizedDoc, identifier: &LanguageIdentifier) -> Result<LanguageGuess, LanguageError> {
    identifier.detect(&doc.text)
}

/// Tokenizes and attaches the detected language.
pub fn preprocess(article: &Article, identifier: &LanguageIdentifier) -> TokenizedDoc {
    let mut doc = normalize_tokenize(article);
    doc.language = detect_language(&doc, identifier).ok();
    doc
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EnvelopeReason {
    NonEnglish,
    TooShort,
    TooLong,
    InvalidFormat,
}

impl EnvelopeReason {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvelopeReason::NonEnglish => "NonEnglish",
            EnvelopeReason::TooShort => "TooShort",
            EnvelopeReason::TooLong => "TooLong",
            EnvelopeReason::InvalidFormat => "InvalidFormat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub allowed_languages: Vec<String>,
    /// Case-insensitive title prefixes marking a known invalid format.
    pub invalid_title_prefixes: Vec<String>,
    pub invalid_abstract_prefixes: Vec<String>,
}

impl Default for EnvelopeConfig {
    fn default() -> Self {
        EnvelopeConfig {
            min_tokens: 10,
            max_tokens: 600,
            allowed_languages: vec!["en".into()],
            invalid_title_prefixes: vec!["erratum".into(), "corrigendum".into(), "retraction".into()],
            invalid_abstract_prefixes: vec!["[this corrects the article".into()],
        }
    }
}

impl EnvelopeConfig {
    /// Token bounds at the 1st and 99th percentiles (nearest rank) of the
    /// training documents' token counts.
    pub fn from_training_counts(counts: &[usize]) -> Self {
        let mut sorted = counts.to_vec();
        sorted.sort_unstable();
        let mut cfg = EnvelopeConfig::default();
        if !sorted.is_empty() {
            cfg.min_tokens = nearest_rank(&sorted, 1.0);
            cfg.max_tokens = nearest_rank(&sorted, 99.0);
        }
        cfg
    }
}

fn nearest_rank(sorted: &[usize], pct: f64) -> usize {
    let rank = ((pct / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeMeasurement {
    pub language: Option<String>,
    pub language_confidence: f64,
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeVerdict {
    pub in_envelope: bool,
    pub reasons: Vec<EnvelopeReason>,
    pub measured: EnvelopeMeasurement,
}

fn starts_with_ci(text: &str, prefix: &str) -> bool {
    let t = text.trim_start().to_lowercase();
    t.starts_with(&prefix.to_lowercase())
}

/// Checks every envelope predicate; reasons accumulate.
pub fn check_envelope(doc: &TokenizedDoc, bounds: &EnvelopeConfig) -> EnvelopeVerdict {
    let mut reasons = Vec::new();
    let allowed = doc
        .language
        .as_ref()
        .is_some_and(|l| bounds.allowed_languages.iter().any(|a| a == &l.code));
    if !allowed {
        reasons.push(EnvelopeReason::NonEnglish);
    }
    if doc.token_count < bounds.min_tokens {
        reasons.push(EnvelopeReason::TooShort);
    }
    if doc.token_count > bounds.max_tokens {
        reasons.push(EnvelopeReason::TooLong);
    }
    let bad_title = bounds.invalid_title_prefixes.iter().any(|p| starts_with_ci(doc.title(), p));
    let bad_abstract = bounds
        .invalid_abstract_prefixes
        .iter()
        .any(|p| starts_with_ci(doc.abstract_text(), p));
    if bad_title || bad_abstract {
        reasons.push(EnvelopeReason::InvalidFormat);
    }
    EnvelopeVerdict {
        in_envelope: reasons.is_empty(),
        reasons,
        measured: EnvelopeMeasurement {
            language: doc.language.as_ref().map(|l| l.code.clone()),
            language_confidence: doc.language.as_ref().map_or(0.0, |l| l.confidence),
            token_count: doc.token_count,
        },
    }
}
