//! 1-gram and 2-gram vocabularies and sparse count features.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Raw n-gram counts.
    #[default]
    Counts,
    /// 1 for every n-gram present.
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabConfig {
    pub min_df: usize,
    pub max_size: Option<usize>,
    pub lowercase: bool,
    #[serde(default)]
    pub weighting: Weighting,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            min_df: 2,
            max_size: Some(20_000),
            lowercase: true,
            weighting: Weighting::Counts,
        }
    }
}

/// Sparse `(index, count)` pairs with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub dim: usize,
    pub entries: Vec<(u32, u32)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> u32 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0, |p| self.entries[p].1)
    }
}

/// N-grams of a token stream: every token, then every adjacent pair joined by
/// a space.
pub fn ngrams<S: AsRef<str>>(tokens: &[S], lowercase: bool) -> Vec<String> {
    let norm = |s: &str| if lowercase { s.to_lowercase() } else { s.to_string() };
    let toks: Vec<String> = tokens.iter().map(|t| norm(t.as_ref())).collect();
    let mut out = toks.clone();
    out.extend(toks.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabFile", into = "VocabFile")]
pub struct Vocabulary {
    config: VocabConfig,
    terms: Vec<String>,
    df: Vec<usize>,
    index: HashMap<String, u32>,
}

#[derive(Serialize, Deserialize)]
struct VocabFile {
    config: VocabConfig,
    terms: Vec<String>,
    df: Vec<usize>,
}

impl From<VocabFile> for Vocabulary {
    fn from(f: VocabFile) -> Self {
        let index = f.terms.iter().enumerate().map(|(i, t)| (t.clone(), i as u32)).collect();
        Vocabulary {
            config: f.config,
            terms: f.terms,
            df: f.df,
            index,
        }
    }
}

impl From<Vocabulary> for VocabFile {
    fn from(v: Vocabulary) -> Self {
        VocabFile {
            config: v.config,
            terms: v.terms,
            df: v.df,
        }
    }
}

impl Vocabulary {
    /// Builds from token streams. Entries with df below `min_df` are dropped;
    /// over `max_size`, the highest-df entries are kept (ties lexicographic).
    /// Indices are assigned in lexicographic order.
    pub fn build<S: AsRef<str>>(docs: &[Vec<S>], config: &VocabConfig) -> Result<Self, ModelError> {
        if docs.is_empty() {
            return Err(ModelError::EmptyTrainingSet);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in docs {
            let unique: BTreeSet<String> = ngrams(doc, config.lowercase).into_iter().collect();
            for g in unique {
                *df.entry(g).or_insert(0) += 1;
            }
        }
        let mut kept: Vec<(String, usize)> = df.into_iter().filter(|(_, d)| *d >= config.min_df).collect();
        if let Some(max) = config.max_size {
            if kept.len() > max {
                kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
                kept.truncate(max);
                kept.sort_by(|a, b| a.0.cmp(&b.0));
            }
        }
        let (terms, df): (Vec<String>, Vec<usize>) = kept.into_iter().unzip();
        Ok(VocabFile {
            config: config.clone(),
            terms,
            df,
        }
        .into())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn config(&self) -> &VocabConfig {
        &self.config
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn df(&self, term: &str) -> Option<usize> {
        self.index.get(term).map(|&i| self.df[i as usize])
    }

    pub fn index_of(&self, term: &str) -> Option<u32> {
        self.index.get(term).copied()
    }

    /// Counts of in-vocabulary n-grams; everything else is ignored.
    pub fn featurize<S: AsRef<str>>(&self, tokens: &[S]) -> FeatureVector {
        let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
        for g in ngrams(tokens, self.config.lowercase) {
            if let Some(&i) = self.index.get(&g) {
                *counts.entry(i).or_insert(0) += 1;
            }
        }
        let binary = self.config.weighting == Weighting::Binary;
        FeatureVector {
            dim: self.len(),
            entries: counts.into_iter().map(|(i, c)| (i, if binary { 1 } else { c })).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs() -> Vec<Vec<&'static str>> {
        vec![vec!["severe", "nausea"], vec!["severe", "rash"]]
    }

    fn cfg(min_df: usize, max_size: Option<usize>) -> VocabConfig {
        VocabConfig {
            min_df,
            max_size,
            ..Default::default()
        }
    }

    #[test]
    fn enumeration_and_cutoffs() {
        let v = Vocabulary::build(&docs(), &cfg(1, None)).unwrap();
        assert_eq!(v.terms(), ["nausea", "rash", "severe", "severe nausea", "severe rash"]);
        let v2 = Vocabulary::build(&docs(), &cfg(2, None)).unwrap();
        assert_eq!(v2.terms(), ["severe"]);
        let v3 = Vocabulary::build(&docs(), &cfg(1, Some(2))).unwrap();
        assert_eq!(v3.terms(), ["nausea", "severe"]);
        assert_eq!(v3.df("severe"), Some(2));
        assert!(Vocabulary::build::<&str>(&[], &cfg(1, None)).is_err());
    }

    #[test]
    fn featurize_counts() {
        let v = Vocabulary::build(&docs(), &cfg(1, None)).unwrap();
        let f = v.featurize(&["severe", "nausea"]);
        let got: Vec<(&str, u32)> = f.entries.iter().map(|&(i, c)| (v.terms()[i as usize].as_str(), c)).collect();
        assert_eq!(got, [("nausea", 1), ("severe", 1), ("severe nausea", 1)]);
        assert!(v.featurize(&["unknown", "words"]).is_empty());
        let f = v.featurize(&["nausea", "nausea"]);
        assert_eq!(f.entries, [(0, 2)]);
        assert_eq!(f.get(0), 2);
        assert_eq!(f.get(3), 0);
    }

    #[test]
    fn binary_weighting() {
        let c = VocabConfig {
            weighting: Weighting::Binary,
            ..cfg(1, None)
        };
        let v = Vocabulary::build(&docs(), &c).unwrap();
        assert_eq!(v.featurize(&["nausea", "nausea"]).entries, [(0, 1)]);
    }

    #[test]
    fn serde_round_trip() {
        let v = Vocabulary::build(&docs(), &cfg(1, None)).unwrap();
        let back: Vocabulary = serde_json::from_str(&serde_json::to_string(&v).unwrap()).unwrap();
        assert_eq!(back, v);
        assert_eq!(back.index_of("severe rash"), Some(4));
    }
}
