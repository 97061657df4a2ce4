//! Threshold calibration: grid search over `(theta_a, theta_b)` minimizing
//! the cascade false positive rate subject to a recall target on validation
//! data, and the repeated-resampling experiment built on it.

mod experiment;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;
use crate::metrics::{false_positive_rate, recall, ConfusionCounts};
use crate::pipeline::{Analysis, PipelineError};
use crate::rules::{decide, label_for, RuleThresholds};

pub use experiment::{
    aggregate_csv, evaluate_with_bundle, plot_data, run_repeated_experiments, runs_csv, ExperimentConfig,
    ExperimentReport, RunResult, TargetReport,
};

#[derive(Debug, Error)]
pub enum CalibrationError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("target recall {0} outside (0, 1]")]
    InvalidTarget(f64),
    #[error("validation data needs at least one gold positive and one gold negative")]
    SingleClassValidation,
    #[error("no grid point reaches the target recall")]
    Infeasible,
    #[error("degenerate split: {0}")]
    DegenerateSplit(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub theta_a: Vec<f64>,
    pub theta_b: Vec<f64>,
    pub target_recall: f64,
}

/// `0, 1/n, ..., 1` for `step = 1/n`. Values are exact quotients, so a step
/// of 0.05 yields 0.7 rather than `14 * 0.05`.
pub fn uniform_grid(step: f64) -> Result<Vec<f64>, CalibrationError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CalibrationError::InvalidGrid(format!("step {step} outside (0, 1]")));
    }
    let n = (1.0 / step).round();
    if (n * step - 1.0).abs() > 1e-9 {
        return Err(CalibrationError::InvalidGrid(format!("step {step} does not divide 1")));
    }
    let n = n as usize;
    Ok((0..=n).map(|i| i as f64 / n as f64).collect())
}

impl GridSpec {
    pub fn uniform(step: f64, target_recall: f64) -> Result<Self, CalibrationError> {
        let g = uniform_grid(step)?;
        let spec = GridSpec {
            theta_a: g.clone(),
            theta_b: g,
            target_recall,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        if !(self.target_recall > 0.0 && self.target_recall <= 1.0) {
            return Err(CalibrationError::InvalidTarget(self.target_recall));
        }
        validate_axis("theta_a", &self.theta_a)?;
        validate_axis("theta_b", &self.theta_b)
    }
}

fn validate_axis(name: &str, values: &[f64]) -> Result<(), CalibrationError> {
    if values.first() != Some(&0.0) {
        return Err(CalibrationError::InvalidGrid(format!("{name} grid must start at 0.0")));
    }
    if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CalibrationError::InvalidGrid(format!("{name} grid leaves [0, 1]")));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CalibrationError::InvalidGrid(format!("{name} grid is not strictly ascending")));
    }
    Ok(())
}

/// One validation document as seen by the cascade.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationItem {
    pub score_a: f64,
    pub score_b: f64,
    pub patient: bool,
    pub in_envelope: bool,
    pub gold: Label,
}

impl CalibrationItem {
    pub fn from_analysis(a: &Analysis, gold: Label) -> Self {
        let (score_a, score_b) = a.scores.unwrap_or((0.0, 0.0));
        CalibrationItem {
            score_a,
            score_b,
            patient: !a.mentions.is_empty(),
            in_envelope: a.envelope.in_envelope,
            gold,
        }
    }

    pub fn predict(&self, t: &RuleThresholds) -> Label {
        label_for(decide(self.in_envelope, (self.score_a, self.score_b), self.patient, t))
    }
}

pub fn confusion_at(items: &[CalibrationItem], t: &RuleThresholds) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for it in items {
        c.add(it.predict(t), it.gold);
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub target_recall: f64,
    pub thresholds: RuleThresholds,
    pub validation_recall: f64,
    pub validation_fpr: f64,
    pub feasible: bool,
    pub candidates: usize,
    pub counts: ConfusionCounts,
}

/// True-positive and false-positive counts at every grid point.
pub struct CountTable {
    theta_a: Vec<f64>,
    theta_b: Vec<f64>,
    positives: usize,
    negatives: usize,
    /// `tp[i][j]`, `fp[i][j]` at `(theta_a[i], theta_b[j])`.
    tp: Vec<Vec<usize>>,
    fp: Vec<Vec<usize>>,
}

impl CountTable {
    /// An item the cascade can label negative is negative at `(i, j)` exactly
    /// when `i >= ka` and `j >= kb`, where `ka` (`kb`) counts grid values not
    /// above its score. Negatives per point are therefore 2D prefix sums of
    /// the `(ka, kb)` histogram.
    pub fn build(items: &[CalibrationItem], theta_a: &[f64], theta_b: &[f64]) -> Result<Self, CalibrationError> {
        let positives = items.iter().filter(|i| i.gold.is_positive()).count();
        let negatives = items.len() - positives;
        if positives == 0 || negatives == 0 {
            return Err(CalibrationError::SingleClassValidation);
        }
        let (na, nb) = (theta_a.len(), theta_b.len());
        let mut hist = [vec![vec![0usize; nb + 1]; na + 1], vec![vec![0usize; nb + 1]; na + 1]];
        for it in items {
            if !it.in_envelope || it.patient {
                continue;
            }
            let ka = theta_a.partition_point(|&v| v <= it.score_a);
            let kb = theta_b.partition_point(|&v| v <= it.score_b);
            hist[it.gold.is_positive() as usize][ka][kb] += 1;
        }
        for h in hist.iter_mut() {
            for a in 0..=na {
                for b in 0..=nb {
                    let up = if a > 0 { h[a - 1][b] } else { 0 };
                    let left = if b > 0 { h[a][b - 1] } else { 0 };
                    let diag = if a > 0 && b > 0 { h[a - 1][b - 1] } else { 0 };
                    h[a][b] = h[a][b] + up + left - diag;
                }
            }
        }
        let [neg_hist, pos_hist] = hist;
        let tp = (0..na)
            .map(|i| (0..nb).map(|j| positives - pos_hist[i][j]).collect())
            .collect();
        let fp = (0..na)
            .map(|i| (0..nb).map(|j| negatives - neg_hist[i][j]).collect())
            .collect();
        Ok(CountTable {
            theta_a: theta_a.to_vec(),
            theta_b: theta_b.to_vec(),
            positives,
            negatives,
            tp,
            fp,
        })
    }

    pub fn counts(&self, i: usize, j: usize) -> ConfusionCounts {
        let (tp, fp) = (self.tp[i][j], self.fp[i][j]);
        ConfusionCounts {
            tp,
            fp,
            tn: self.negatives - fp,
            fn_: self.positives - tp,
        }
    }

    /// Minimal fp among points with recall >= target; ties go to more true
    /// positives, then higher theta_a, then higher theta_b.
    pub fn select(&self, target_recall: f64) -> Result<CalibrationResult, CalibrationError> {
        if !(target_recall > 0.0 && target_recall <= 1.0) {
            return Err(CalibrationError::InvalidTarget(target_recall));
        }
        let mut best: Option<(usize, usize)> = None;
        for i in 0..self.theta_a.len() {
            for j in 0..self.theta_b.len() {
                let tp = self.tp[i][j];
                if (tp as f64 / self.positives as f64) < target_recall {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bi, bj)) => {
                        let (bfp, btp) = (self.fp[bi][bj], self.tp[bi][bj]);
                        (self.fp[i][j], std::cmp::Reverse(tp), std::cmp::Reverse(i), std::cmp::Reverse(j))
                            < (bfp, std::cmp::Reverse(btp), std::cmp::Reverse(bi), std::cmp::Reverse(bj))
                    }
                };
                if better {
                    best = Some((i, j));
                }
            }
        }
        let (i, j) = best.ok_or(CalibrationError::Infeasible)?;
        let counts = self.counts(i, j);
        Ok(CalibrationResult {
            target_recall,
            thresholds: RuleThresholds {
                theta_a: self.theta_a[i],
                theta_b: self.theta_b[j],
            },
            validation_recall: recall(&counts).expect("positives present"),
            validation_fpr: false_positive_rate(&counts).expect("negatives present"),
            feasible: true,
            candidates: self.theta_a.len() * self.theta_b.len(),
            counts,
        })
    }
}

pub fn grid_search_thresholds(items: &[CalibrationItem], grid: &GridSpec) -> Result<CalibrationResult, CalibrationError> {
    grid.validate()?;
    let result = CountTable::build(items, &grid.theta_a, &grid.theta_b)?.select(grid.target_recall)?;
    debug_assert!(result.validation_recall >= grid.target_recall);
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item(a: f64, gold: bool) -> CalibrationItem {
        CalibrationItem {
            score_a: a,
            score_b: 0.0,
            patient: false,
            in_envelope: true,
            gold: Label::from_positive(gold),
        }
    }

    fn example() -> Vec<CalibrationItem> {
        let mut v: Vec<_> = [0.9, 0.8, 0.7, 0.2].iter().map(|&a| item(a, true)).collect();
        v.extend([0.6, 0.5, 0.1].iter().map(|&a| item(a, false)));
        v
    }

    #[test]
    fn uniform_grid_is_exact() {
        let g = uniform_grid(0.05).unwrap();
        assert_eq!(g.len(), 21);
        assert_eq!(g[14], 0.7);
        assert_eq!(g[20], 1.0);
        assert_eq!(uniform_grid(0.01).unwrap().len(), 101);
        assert!(uniform_grid(0.3).is_err());
        assert!(uniform_grid(0.0).is_err());
    }

    #[test]
    fn worked_example_target_075() {
        let r = grid_search_thresholds(&example(), &GridSpec::uniform(0.05, 0.75).unwrap()).unwrap();
        // every theta_a in (0.6, 0.7] gives recall 3/4 and fpr 0; the
        // higher-theta_a tie-break picks 0.7
        assert_eq!(r.thresholds.theta_a, 0.7);
        assert_eq!(r.validation_recall, 0.75);
        assert_eq!(r.validation_fpr, 0.0);
        assert_eq!(r.candidates, 21 * 21);
    }

    #[test]
    fn worked_example_target_1() {
        let r = grid_search_thresholds(&example(), &GridSpec::uniform(0.05, 1.0).unwrap()).unwrap();
        assert_eq!(r.thresholds.theta_a, 0.2);
        assert_eq!(r.validation_recall, 1.0);
        assert!((r.validation_fpr - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn single_class_is_an_error() {
        let only_pos: Vec<_> = (0..3).map(|i| item(i as f64 / 3.0, true)).collect();
        assert!(matches!(
            grid_search_thresholds(&only_pos, &GridSpec::uniform(0.1, 0.9).unwrap()),
            Err(CalibrationError::SingleClassValidation)
        ));
    }

    #[test]
    fn grid_validation() {
        let mut g = GridSpec::uniform(0.1, 0.9).unwrap();
        g.theta_a.remove(0);
        assert!(g.validate().is_err());
        assert!(GridSpec::uniform(0.1, 0.0).is_err());
        assert!(GridSpec::uniform(0.1, 1.1).is_err());
    }

    #[test]
    fn always_positive_items_fix_the_floor() {
        let mut items = example();
        items.push(CalibrationItem {
            patient: true,
            ..item(0.0, false)
        });
        items.push(CalibrationItem {
            in_envelope: false,
            ..item(0.0, true)
        });
        let r = grid_search_thresholds(&items, &GridSpec::uniform(0.05, 0.8).unwrap()).unwrap();
        assert_eq!(r.counts, confusion_at(&items, &r.thresholds));
        assert!(r.counts.fp >= 1);
    }
}
