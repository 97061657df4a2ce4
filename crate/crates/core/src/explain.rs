//! Sentence-level explanations of scorer A.
//!
//! Exhaustive ablation removes one sentence at a time. Sampled LIME scores
//! random sentence masks and fits a weighted linear surrogate; when every
//! mask fits in the sample budget, all masks are enumerated instead.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelError;
use crate::pipeline::Pipeline;
use crate::preprocess::{check_envelope, EnvelopeReason, TokenizedDoc};

pub const DEFAULT_SAMPLE_COUNT: usize = 500;
/// Kernel width of the proximity weight `exp(-(1 - kept_fraction)^2 / w)`.
pub const KERNEL_WIDTH: f64 = 0.25;
const RIDGE: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum ExplainError {
    #[error("article is outside the operating envelope: {0:?}")]
    OutOfEnvelope(Vec<EnvelopeReason>),
    #[error("document has no sentences")]
    NoSentences,
    #[error("sample count must be positive")]
    NoSamples,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("unknown explanation mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExplainMode {
    ExhaustiveAblation,
    SampledLime,
}

impl ExplainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            ExplainMode::ExhaustiveAblation => "exhaustive_ablation",
            ExplainMode::SampledLime => "sampled_lime",
        }
    }
}

impl fmt::Display for ExplainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExplainMode {
    type Err = ExplainError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exhaustive_ablation" | "exhaustive" | "ablation" => Ok(ExplainMode::ExhaustiveAblation),
            "sampled_lime" | "lime" => Ok(ExplainMode::SampledLime),
            other => Err(ExplainError::UnknownMode(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceAttribution {
    pub index: usize,
    pub start: usize,
    pub end: usize,
    /// Positive values support SuspectAdverse.
    pub influence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub article_id: String,
    pub mode: ExplainMode,
    /// Scorer A on the full document.
    pub base_score: f64,
    /// Masks scored in sampled mode (0 in exhaustive mode).
    pub samples: usize,
    pub seed: u64,
    /// Sorted by |influence| descending, then sentence index.
    pub attributions: Vec<SentenceAttribution>,
}

impl Explanation {
    pub fn top(&self) -> Option<&SentenceAttribution> {
        self.attributions.first()
    }
}

/// Explains `doc` under any token-stream scorer.
pub fn explain_with<F>(
    doc: &TokenizedDoc,
    score: F,
    mode: ExplainMode,
    sample_count: usize,
    seed: u64,
) -> Result<Explanation, ExplainError>
where
    F: Fn(&[&str]) -> Result<f64, ModelError> + Sync,
{
    let k = doc.sentences.len();
    if k == 0 {
        return Err(ExplainError::NoSentences);
    }
    let score_mask = |keep: &[bool]| score(&doc.tokens_keeping(keep));
    let base_score = score_mask(&vec![true; k])?;
    let (influences, samples) = match mode {
        ExplainMode::ExhaustiveAblation => {
            let inf = (0..k)
                .into_par_iter()
                .map(|i| {
                    let keep: Vec<bool> = (0..k).map(|j| j != i).collect();
                    score_mask(&keep).map(|s| base_score - s)
                })
                .collect::<Result<Vec<f64>, ModelError>>()?;
            (inf, 0)
        }
        ExplainMode::SampledLime => {
            if sample_count == 0 {
                return Err(ExplainError::NoSamples);
            }
            let masks = lime_masks(k, sample_count, seed);
            let ys = masks
                .par_iter()
                .map(|m| score_mask(m))
                .collect::<Result<Vec<f64>, ModelError>>()?;
            (fit_surrogate(&masks, &ys, k), masks.len())
        }
    };
    let mut attributions: Vec<SentenceAttribution> = doc
        .sentences
        .iter()
        .zip(influences)
        .map(|(s, influence)| SentenceAttribution {
            index: s.index,
            start: s.start,
            end: s.end,
            influence,
        })
        .collect();
    attributions.sort_by(|a, b| {
        b.influence
            .abs()
            .total_cmp(&a.influence.abs())
            .then(a.index.cmp(&b.index))
    });
    Ok(Explanation {
        article_id: doc.article_id.clone(),
        mode,
        base_score,
        samples,
        seed,
        attributions,
    })
}

/// Every mask when `2^k <= sample_count`, otherwise `sample_count` masks with
/// each sentence kept independently with probability 0.5.
pub fn lime_masks(k: usize, sample_count: usize, seed: u64) -> Vec<Vec<bool>> {
    if k < usize::BITS as usize - 1 && (1usize << k) <= sample_count {
        return (0..1usize << k).map(|m| (0..k).map(|i| m >> i & 1 == 1).collect()).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..sample_count)
        .map(|_| (0..k).map(|_| rng.gen_bool(0.5)).collect())
        .collect()
}

pub fn proximity_weight(mask: &[bool]) -> f64 {
    let frac = mask.iter().filter(|&&b| b).count() as f64 / mask.len() as f64;
    (-(1.0 - frac).powi(2) / KERNEL_WIDTH).exp()
}

/// Weighted least squares `y ~ b0 + sum_i b_i * mask_i`; returns `b_1..b_k`.
fn fit_surrogate(masks: &[Vec<bool>], ys: &[f64], k: usize) -> Vec<f64> {
    let d = k + 1;
    let mut a = vec![vec![0.0; d + 1]; d];
    for (m, &y) in masks.iter().zip(ys) {
        let w = proximity_weight(m);
        let row: Vec<f64> = std::iter::once(1.0)
            .chain(m.iter().map(|&b| if b { 1.0 } else { 0.0 }))
            .collect();
        for r in 0..d {
            for c in 0..d {
                a[r][c] += w * row[r] * row[c];
            }
            a[r][d] += w * row[r] * y;
        }
    }
    for (r, row) in a.iter_mut().enumerate() {
        row[r] += RIDGE;
    }
    let beta = solve(a);
    beta[1..].to_vec()
}

/// Gaussian elimination with partial pivoting on an augmented matrix.
fn solve(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .expect("non-empty");
        a.swap(col, pivot);
        let p = a[col][col];
        if p.abs() < 1e-300 {
            continue;
        }
        for r in col + 1..n {
            let f = a[r][col] / p;
            if f != 0.0 {
                for c in col..=n {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| a[r][c] * x[c]).sum();
        x[r] = if a[r][r].abs() < 1e-300 { 0.0 } else { (a[r][n] - s) / a[r][r] };
    }
    x
}

/// Explains scorer A of the pipeline's bundle. The document must be inside
/// the bundle's operating envelope.
pub fn explain_prediction(
    doc: &TokenizedDoc,
    pipeline: &Pipeline,
    mode: ExplainMode,
    sample_count: usize,
    seed: u64,
) -> Result<Explanation, ExplainError> {
    let verdict = check_envelope(doc, &pipeline.bundle().envelope);
    if !verdict.in_envelope {
        return Err(ExplainError::OutOfEnvelope(verdict.reasons));
    }
    explain_with(doc, |t| pipeline.score_a_tokens(t), mode, sample_count, seed)
}
