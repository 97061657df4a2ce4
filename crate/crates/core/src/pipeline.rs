//! End-to-end screening: preprocess, envelope check, scoring (only inside
//! the envelope), patient extraction and the rule cascade. Also trains a
//! bundle from a labelled corpus.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{DataComposition, ModelBundle};
use crate::corpus::{self, Article, CorpusError, CorpusSplits, LabeledArticle, SplitSpec};
use crate::language::LanguageIdentifier;
use crate::models::{
    self, FeatureVector, ForestParams, LogisticParams, ModelError, TrainingContext, VocabConfig, Vocabulary,
};
use crate::preprocess::{
    self, check_envelope, extract_patient_mentions, EnvelopeConfig, EnvelopeVerdict, PatientMention, PatientPatterns,
    TokenizedDoc,
};
use crate::rules::{apply_rule_cascade, RuleError, RuleThresholds, ScreeningPrediction};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// Everything the cascade needs for one article.
#[derive(Debug, Clone, PartialEq)]
pub struct Analysis {
    pub doc: TokenizedDoc,
    pub envelope: EnvelopeVerdict,
    pub mentions: Vec<PatientMention>,
    /// `(score_a, score_b)`, present only inside the envelope.
    pub scores: Option<(f64, f64)>,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    bundle: ModelBundle,
    identifier: &'static LanguageIdentifier,
}

impl Pipeline {
    pub fn new(bundle: ModelBundle) -> Self {
        Pipeline {
            bundle,
            identifier: LanguageIdentifier::bundled(),
        }
    }

    pub fn bundle(&self) -> &ModelBundle {
        &self.bundle
    }

    pub fn into_bundle(self) -> ModelBundle {
        self.bundle
    }

    pub fn thresholds(&self) -> RuleThresholds {
        self.bundle.thresholds
    }

    pub fn set_thresholds(&mut self, t: RuleThresholds) {
        self.bundle.thresholds = t;
    }

    pub fn tokenize(&self, article: &Article) -> TokenizedDoc {
        preprocess::preprocess(article, self.identifier)
    }

    pub fn features(&self, tokens: &[&str]) -> FeatureVector {
        self.bundle.vocabulary.featurize(tokens)
    }

    /// Scorer A on a raw token stream.
    pub fn score_a_tokens(&self, tokens: &[&str]) -> Result<f64, ModelError> {
        self.bundle.scorer_a.score(&self.features(tokens))
    }

    pub fn scores(&self, doc: &TokenizedDoc) -> Result<(f64, f64), ModelError> {
        let x = self.features(&doc.token_strs());
        Ok((self.bundle.scorer_a.score(&x)?, self.bundle.scorer_b.score(&x)?))
    }

    pub fn analyze(&self, article: &Article) -> Result<Analysis, PipelineError> {
        let doc = self.tokenize(article);
        let envelope = check_envelope(&doc, &self.bundle.envelope);
        let mentions = extract_patient_mentions(&doc, &self.bundle.patterns);
        let scores = if envelope.in_envelope { Some(self.scores(&doc)?) } else { None };
        Ok(Analysis {
            doc,
            envelope,
            mentions,
            scores,
        })
    }

    pub fn decide(&self, a: &Analysis, t: &RuleThresholds) -> Result<ScreeningPrediction, PipelineError> {
        Ok(apply_rule_cascade(&a.doc, &a.envelope, &a.mentions, a.scores, t)?)
    }

    pub fn predict(&self, article: &Article) -> Result<ScreeningPrediction, PipelineError> {
        self.decide(&self.analyze(article)?, &self.bundle.thresholds)
    }

    /// Analyses in input order; items are processed in parallel.
    pub fn analyze_batch(&self, articles: &[Article]) -> Result<Vec<Analysis>, PipelineError> {
        articles.par_iter().map(|a| self.analyze(a)).collect()
    }

    pub fn predict_batch(&self, articles: &[Article]) -> Result<Vec<ScreeningPrediction>, PipelineError> {
        articles.par_iter().map(|a| self.predict(a)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub train_fraction: f64,
    pub stratify_by_category: bool,
    pub vocab: VocabConfig,
    pub scorer_a: LogisticParams,
    pub scorer_b: ForestParams,
    pub thresholds: RuleThresholds,
    pub patterns: PatientPatterns,
    /// Languages and invalid-format markers; token bounds are replaced by
    /// training percentiles unless `token_bounds` is set.
    pub envelope: EnvelopeConfig,
    pub token_bounds: Option<(usize, usize)>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 7,
            train_fraction: 0.9,
            stratify_by_category: true,
            vocab: VocabConfig::default(),
            scorer_a: LogisticParams::default(),
            scorer_b: ForestParams::default(),
            thresholds: RuleThresholds::default(),
            patterns: PatientPatterns::default(),
            envelope: EnvelopeConfig::default(),
            token_bounds: None,
        }
    }
}

impl TrainConfig {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            train_fraction: self.train_fraction,
            seed: self.seed,
            stratify_by_category: self.stratify_by_category,
        }
    }
}

/// Splits the corpus, upsamples the training split and trains both scorers.
/// Returns the bundle and the splits it was trained on.
pub fn train_bundle(
    corpus: &[LabeledArticle],
    cfg: &TrainConfig,
    created_utc: &str,
) -> Result<(ModelBundle, CorpusSplits), PipelineError> {
    let splits = corpus::stratified_split(corpus, &cfg.split_spec())?;
    let bundle = train_on_split(corpus, &splits.train, cfg, created_utc)?;
    Ok((bundle, splits))
}

pub fn train_on_split(
    corpus: &[LabeledArticle],
    train: &[LabeledArticle],
    cfg: &TrainConfig,
    created_utc: &str,
) -> Result<ModelBundle, PipelineError> {
    let upsampled = corpus::upsample_minority(train, cfg.seed)?;
    let docs: Vec<TokenizedDoc> = train
        .par_iter()
        .map(|item| preprocess::normalize_tokenize(&item.article))
        .collect();
    let token_streams: Vec<Vec<&str>> = docs.iter().map(|d| d.token_strs()).collect();
    let vocabulary = Vocabulary::build(&token_streams, &cfg.vocab)?;
    let by_id: BTreeMap<&str, usize> = train.iter().enumerate().map(|(i, a)| (a.id(), i)).collect();
    let xs: Vec<FeatureVector> = upsampled
        .par_iter()
        .map(|item| vocabulary.featurize(&token_streams[by_id[item.id()]]))
        .collect();
    let labels: Vec<_> = upsampled.iter().map(|i| i.label).collect();
    let corpus_digest = corpus::corpus_digest(corpus);
    let ctx = TrainingContext {
        corpus_digest: corpus_digest.clone(),
        trained_utc: created_utc.to_string(),
    };
    let scorer_a = models::train_scorer_a(&xs, &labels, &cfg.scorer_a, cfg.seed, &ctx)?;
    let scorer_b = models::train_scorer_b(&xs, &labels, &cfg.scorer_b, cfg.seed, &ctx)?;

    let counts: Vec<usize> = docs.iter().map(|d| d.token_count).collect();
    let mut envelope = cfg.envelope.clone();
    let (lo, hi) = cfg.token_bounds.unwrap_or_else(|| {
        let p = EnvelopeConfig::from_training_counts(&counts);
        (p.min_tokens, p.max_tokens)
    });
    envelope.min_tokens = lo;
    envelope.max_tokens = hi;

    let positives = train.iter().filter(|i| i.label.is_positive()).count();
    let mut categories = BTreeMap::new();
    for item in train {
        *categories
            .entry(item.category.clone().unwrap_or_else(|| "uncategorized".into()))
            .or_insert(0) += 1;
    }
    Ok(ModelBundle {
        vocabulary,
        scorer_a,
        scorer_b,
        envelope,
        thresholds: cfg.thresholds,
        patterns: cfg.patterns.clone(),
        composition: DataComposition {
            corpus_digest: corpus_digest.clone(),
            corpus_size: corpus.len(),
            training_size: train.len(),
            suspect_adverse: positives,
            not_suspect: train.len() - positives,
            upsampled_size: upsampled.len(),
            categories,
        },
        created_utc: created_utc.to_string(),
        training_corpus_digest: corpus_digest,
        seed: cfg.seed,
    })
}
