//! Repeated-resampling experiment: train once, then for every run re-draw
//! the validation/test halves of the held-out data, calibrate on validation
//! for each target recall and evaluate on test.

use std::collections::HashMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{uniform_grid, CalibrationError, CalibrationItem, CountTable};
use crate::bundle::ModelBundle;
use crate::corpus::{self, CorpusError, LabeledArticle};
use crate::metrics::{false_positive_rate, recall, ConfusionCounts};
use crate::pipeline::{train_bundle, Pipeline, PipelineError, TrainConfig};
use crate::stats::Summary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub runs: usize,
    pub base_seed: u64,
    pub targets: Vec<f64>,
    pub grid_step: f64,
    pub stratify_by_category: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            runs: 10,
            base_seed: 7,
            targets: vec![0.91, 0.93, 0.95, 0.97, 0.99],
            grid_step: 0.01,
            stratify_by_category: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub theta_a: f64,
    pub theta_b: f64,
    pub validation_recall: f64,
    pub validation_fpr: f64,
    pub test_recall: f64,
    pub test_fpr: f64,
    pub test_counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetReport {
    pub target_recall: f64,
    pub runs: Vec<RunResult>,
    pub test_recall: Summary,
    pub test_fpr: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub bundle_digest: String,
    pub corpus_digest: String,
    pub base_seed: u64,
    pub runs: usize,
    pub run_seeds: Vec<u64>,
    pub grid_step: f64,
    pub holdout_size: usize,
    /// Sorted ascending by target recall.
    pub targets: Vec<TargetReport>,
}

impl ExperimentReport {
    pub fn target(&self, target_recall: f64) -> Option<&TargetReport> {
        self.targets.iter().find(|t| t.target_recall == target_recall)
    }
}

fn degenerate(e: PipelineError) -> CalibrationError {
    match e {
        PipelineError::Corpus(c @ (CorpusError::SplitTooSmall { .. } | CorpusError::MissingLabel)) => {
            CalibrationError::DegenerateSplit(c.to_string())
        }
        other => CalibrationError::Pipeline(other),
    }
}

/// Trains a bundle on the training split drawn with `base_seed` and runs the
/// experiment on the held-out remainder.
pub fn run_repeated_experiments(
    corpus: &[LabeledArticle],
    train: &TrainConfig,
    cfg: &ExperimentConfig,
    created_utc: &str,
) -> Result<(ExperimentReport, ModelBundle), CalibrationError> {
    let train = TrainConfig {
        seed: cfg.base_seed,
        stratify_by_category: cfg.stratify_by_category,
        ..train.clone()
    };
    let (bundle, splits) = train_bundle(corpus, &train, created_utc).map_err(degenerate)?;
    let report = evaluate_with_bundle(&bundle, &splits.holdout(), &corpus::corpus_digest(corpus), cfg)?;
    Ok((report, bundle))
}

/// The experiment against an already-trained bundle. `holdout` must be
/// disjoint from the bundle's training data.
pub fn evaluate_with_bundle(
    bundle: &ModelBundle,
    holdout: &[LabeledArticle],
    corpus_digest: &str,
    cfg: &ExperimentConfig,
) -> Result<ExperimentReport, CalibrationError> {
    if cfg.runs == 0 {
        return Err(CalibrationError::DegenerateSplit("runs must be at least 1".into()));
    }
    let grid = uniform_grid(cfg.grid_step)?;
    let mut targets = cfg.targets.clone();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    for &t in &targets {
        if !(t > 0.0 && t <= 1.0) {
            return Err(CalibrationError::InvalidTarget(t));
        }
    }

    let pipeline = Pipeline::new(bundle.clone());
    let articles: Vec<_> = holdout.iter().map(|i| i.article.clone()).collect();
    let analyses = pipeline.analyze_batch(&articles)?;
    let items: HashMap<&str, CalibrationItem> = holdout
        .iter()
        .zip(&analyses)
        .map(|(h, a)| (h.id(), CalibrationItem::from_analysis(a, h.label)))
        .collect();

    let mut per_target: Vec<Vec<RunResult>> = vec![Vec::new(); targets.len()];
    let mut run_seeds = Vec::with_capacity(cfg.runs);
    for run in 0..cfg.runs {
        let seed = cfg.base_seed.wrapping_add(run as u64);
        run_seeds.push(seed);
        let (validation, test) = corpus::split_holdout(holdout, cfg.stratify_by_category, seed)
            .map_err(|e| CalibrationError::DegenerateSplit(e.to_string()))?;
        let v_items: Vec<CalibrationItem> = validation.iter().map(|i| items[i.id()]).collect();
        let t_items: Vec<CalibrationItem> = test.iter().map(|i| items[i.id()]).collect();
        let table = CountTable::build(&v_items, &grid, &grid).map_err(|e| match e {
            CalibrationError::SingleClassValidation => {
                CalibrationError::DegenerateSplit(format!("run {run}: validation split has a single class"))
            }
            other => other,
        })?;
        for (k, &target) in targets.iter().enumerate() {
            let cal = table.select(target)?;
            let counts = super::confusion_at(&t_items, &cal.thresholds);
            let single = || CalibrationError::DegenerateSplit(format!("run {run}: test split has a single class"));
            per_target[k].push(RunResult {
                run,
                seed,
                theta_a: cal.thresholds.theta_a,
                theta_b: cal.thresholds.theta_b,
                validation_recall: cal.validation_recall,
                validation_fpr: cal.validation_fpr,
                test_recall: recall(&counts).map_err(|_| single())?,
                test_fpr: false_positive_rate(&counts).map_err(|_| single())?,
                test_counts: counts,
            });
        }
    }
    let targets = targets
        .into_iter()
        .zip(per_target)
        .map(|(target_recall, runs)| {
            let recalls: Vec<f64> = runs.iter().map(|r| r.test_recall).collect();
            let fprs: Vec<f64> = runs.iter().map(|r| r.test_fpr).collect();
            TargetReport {
                target_recall,
                test_recall: Summary::of(&recalls),
                test_fpr: Summary::of(&fprs),
                runs,
            }
        })
        .collect();
    Ok(ExperimentReport {
        bundle_digest: bundle.digest(),
        corpus_digest: corpus_digest.to_string(),
        base_seed: cfg.base_seed,
        runs: cfg.runs,
        run_seeds,
        grid_step: cfg.grid_step,
        holdout_size: holdout.len(),
        targets,
    })
}

/// Per-run CSV: target_recall, run, test_recall, test_fpr, theta_a, theta_b.
pub fn runs_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("target_recall,run,test_recall,test_fpr,theta_a,theta_b\n");
    for t in &report.targets {
        for r in &t.runs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                t.target_recall, r.run, r.test_recall, r.test_fpr, r.theta_a, r.theta_b
            );
        }
    }
    out
}

/// Aggregate CSV: target_recall, mean_fpr.
pub fn aggregate_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("target_recall,mean_fpr\n");
    for t in &report.targets {
        let _ = writeln!(out, "{},{}", t.target_recall, t.test_fpr.mean);
    }
    out
}

/// Plot series `(file name, contents)`: obtained test recall and test fpr per
/// target, as whitespace-separated columns.
pub fn plot_data(report: &ExperimentReport) -> Vec<(&'static str, String)> {
    let series = |pick: fn(&TargetReport) -> &Summary| {
        let mut out = String::from("# target mean min q1 median q3 max\n");
        for t in &report.targets {
            let s = pick(t);
            let _ = writeln!(
                out,
                "{} {} {} {} {} {} {}",
                t.target_recall, s.mean, s.min, s.q1, s.median, s.q3, s.max
            );
        }
        out
    };
    vec![
        ("recall.dat", series(|t| &t.test_recall)),
        ("fpr.dat", series(|t| &t.test_fpr)),
    ]
}
