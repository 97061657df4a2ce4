//! N-gram features and the two scorer slots.
//!
//! Slot A is the primary scorer (reference algorithm: L2-regularized logistic
//! regression). Slot B is the high-confidence fallback (random forest). Both
//! map a [`FeatureVector`] to a score in [0, 1].

pub mod forest;
pub mod logistic;
pub mod vocab;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

pub use forest::{ForestParams, RandomForest};
pub use logistic::{LogisticModel, LogisticParams};
pub use vocab::{FeatureVector, VocabConfig, Vocabulary, Weighting};

pub const ALGORITHM_A: &str = "logistic_regression_l2_gd";
pub const ALGORITHM_B: &str = "random_forest_gini";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("empty training set")]
    EmptyTrainingSet,
    #[error("training set contains a single label")]
    SingleLabel,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{features} feature vectors but {labels} labels")]
    LabelCountMismatch { features: usize, labels: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ScorerSlot {
    A,
    B,
}

impl fmt::Display for ScorerSlot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScorerSlot::A => "A",
            ScorerSlot::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub corpus_digest: String,
    pub seed: u64,
    pub trained_utc: String,
    /// Hyperparameters as JSON, for disclosure.
    pub hyperparameters: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScorerModel {
    Logistic(LogisticModel),
    Forest(RandomForest),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedScorer {
    pub slot: ScorerSlot,
    pub algorithm: String,
    pub dimension: usize,
    pub metadata: TrainingMetadata,
    pub model: ScorerModel,
}

impl TrainedScorer {
    pub fn score(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        if x.dim != self.dimension {
            return Err(ModelError::DimensionMismatch {
                expected: self.dimension,
                got: x.dim,
            });
        }
        let s = match &self.model {
            ScorerModel::Logistic(m) => m.score(x),
            ScorerModel::Forest(f) => f.score(x),
        };
        Ok(s.clamp(0.0, 1.0))
    }
}

/// Where a scorer's training data came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingContext {
    pub corpus_digest: String,
    pub trained_utc: String,
}

fn check_training_set(xs: &[FeatureVector], labels: &[Label]) -> Result<(usize, Vec<bool>), ModelError> {
    if xs.is_empty() {
        return Err(ModelError::EmptyTrainingSet);
    }
    if xs.len() != labels.len() {
        return Err(ModelError::LabelCountMismatch {
            features: xs.len(),
            labels: labels.len(),
        });
    }
    let dim = xs[0].dim;
    if let Some(bad) = xs.iter().find(|x| x.dim != dim) {
        return Err(ModelError::DimensionMismatch {
            expected: dim,
            got: bad.dim,
        });
    }
    let ys: Vec<bool> = labels.iter().map(|l| l.is_positive()).collect();
    if ys.iter().all(|&y| y) || ys.iter().all(|&y| !y) {
        return Err(ModelError::SingleLabel);
    }
    Ok((dim, ys))
}

pub fn train_scorer_a(
    xs: &[FeatureVector],
    labels: &[Label],
    params: &LogisticParams,
    seed: u64,
    ctx: &TrainingContext,
) -> Result<TrainedScorer, ModelError> {
    let (dim, ys) = check_training_set(xs, labels)?;
    let model = logistic::train(xs, &ys, dim, params, seed);
    Ok(TrainedScorer {
        slot: ScorerSlot::A,
        algorithm: ALGORITHM_A.into(),
        dimension: dim,
        metadata: TrainingMetadata {
            corpus_digest: ctx.corpus_digest.clone(),
            seed,
            trained_utc: ctx.trained_utc.clone(),
            hyperparameters: serde_json::to_value(params).expect("params serialize"),
        },
        model: ScorerModel::Logistic(model),
    })
}

pub fn train_scorer_b(
    xs: &[FeatureVector],
    labels: &[Label],
    params: &ForestParams,
    seed: u64,
    ctx: &TrainingContext,
) -> Result<TrainedScorer, ModelError> {
    let (dim, ys) = check_training_set(xs, labels)?;
    let model = forest::train(xs, &ys, dim, params, seed);
    Ok(TrainedScorer {
        slot: ScorerSlot::B,
        algorithm: ALGORITHM_B.into(),
        dimension: dim,
        metadata: TrainingMetadata {
            corpus_digest: ctx.corpus_digest.clone(),
            seed,
            trained_utc: ctx.trained_utc.clone(),
            hyperparameters: serde_json::to_value(params).expect("params serialize"),
        },
        model: ScorerModel::Forest(model),
    })
}
