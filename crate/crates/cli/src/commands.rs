use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use chrono::SecondsFormat;
use mlmscreen_core::calibrate::{
    aggregate_csv, evaluate_with_bundle, grid_search_thresholds, plot_data, runs_csv, CalibrationItem, ExperimentConfig,
    ExperimentReport, GridSpec,
};
use mlmscreen_core::corpus::{
    corpus_digest, generate_synthetic_corpus, ingest_articles, ingest_labeled, labeled_jsonl_bytes, stratified_split,
    CorpusSplits, IngestFormat, Reject, SplitSpec,
};
use mlmscreen_core::digest::{file_digest, DigestEntry};
use mlmscreen_core::explain::explain_prediction;
use mlmscreen_core::factsheet::{generate_factsheet, write_factsheet, JSON_FILE, MARKDOWN_FILE};
use mlmscreen_core::pipeline::{train_bundle, TrainConfig};
use mlmscreen_core::rules::audit_line;
use mlmscreen_core::{LabeledArticle, ModelBundle, Pipeline};
use mlmscreen_service::{ServiceConfig, SystemClock, TriageService};
use serde::Serialize;
use serde_json::{json, Value};

use crate::args::Command;
use crate::config::{usage, Settings, UsageError};

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Usage(#[from] UsageError),
    #[error("{0:#}")]
    Operational(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Operational(_) => 1,
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Inputs, outputs and details of one invocation; written as
/// `run_manifest.json` in the output directory.
#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    tool_version: &'static str,
    command: &'static str,
    started_utc: String,
    finished_utc: String,
    seed: u64,
    settings: &'a Settings,
    inputs: Vec<DigestEntry>,
    outputs: Vec<DigestEntry>,
    details: Value,
}

struct Run<'a> {
    command: Command,
    settings: &'a Settings,
    started: String,
    inputs: Vec<DigestEntry>,
    outputs: Vec<String>,
}

fn stamp(s: &Settings) -> String {
    s.now().to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn required<'a>(value: &'a Option<PathBuf>, flag: &str, command: Command) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| usage(format!("{} requires --{flag} (or `{flag}` in the config file)", command.name())).into())
}

fn write(dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
    let path = dir.join(name);
    fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

fn jsonl<T: Serialize>(items: impl IntoIterator<Item = T>) -> String {
    items
        .into_iter()
        .map(|v| serde_json::to_string(&v).expect("records serialize") + "\n")
        .collect()
}

impl<'a> Run<'a> {
    fn new(command: Command, settings: &'a Settings) -> Self {
        Run {
            command,
            settings,
            started: stamp(settings),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn input_file(&mut self, path: &Path) -> anyhow::Result<()> {
        self.inputs.push(DigestEntry {
            name: path.display().to_string(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    fn input_digest(&mut self, name: String, sha256: String) {
        self.inputs.push(DigestEntry { name, sha256 });
    }

    fn output(&mut self, dir: &Path, name: &str, bytes: impl AsRef<[u8]>) -> anyhow::Result<()> {
        write(dir, name, bytes)?;
        self.outputs.push(name.to_string());
        Ok(())
    }

    fn finish(self, dir: &Path, details: Value) -> anyhow::Result<()> {
        let outputs = self
            .outputs
            .iter()
            .map(|name| {
                Ok(DigestEntry {
                    name: name.clone(),
                    sha256: file_digest(&dir.join(name))?,
                })
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool_version: env!("CARGO_PKG_VERSION"),
            command: self.command.name(),
            started_utc: self.started,
            finished_utc: stamp(self.settings),
            seed: self.settings.seed,
            settings: self.settings,
            inputs: self.inputs,
            outputs,
            details,
        };
        write(dir, RUN_MANIFEST, serde_json::to_string_pretty(&manifest)? + "\n")
    }
}

fn out_dir(s: &Settings, command: Command) -> Result<&Path> {
    let dir = required(&s.out, "out", command)?;
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    Ok(dir)
}

fn first_reject(path: &Path, rejects: &[Reject]) -> anyhow::Error {
    let r = &rejects[0];
    anyhow::anyhow!(
        "{}: {} invalid record(s); first at line {}: {} (run `ingest` to inspect them)",
        path.display(),
        rejects.len(),
        r.line,
        r.reason
    )
}

/// A labeled corpus that must ingest without rejects.
fn clean_corpus(path: &Path) -> anyhow::Result<Vec<LabeledArticle>> {
    let ingested = ingest_labeled(path, IngestFormat::from_path(path))?;
    if !ingested.rejects.is_empty() {
        return Err(first_reject(path, &ingested.rejects));
    }
    Ok(ingested.items)
}

fn load_bundle(s: &Settings, command: Command) -> Result<(PathBuf, ModelBundle)> {
    let dir = required(&s.bundle, "bundle", command)?;
    let bundle = ModelBundle::load(dir).with_context(|| format!("cannot load bundle {}", dir.display()))?;
    Ok((dir.to_path_buf(), bundle))
}

pub fn dispatch(command: Command, s: &Settings) -> Result<()> {
    match command {
        Command::Ingest => ingest(s),
        Command::Synth => synth(s),
        Command::Train => train(s),
        Command::Calibrate => experiment(s, Command::Calibrate),
        Command::Evaluate => experiment(s, Command::Evaluate),
        Command::Predict => predict(s),
        Command::Explain => explain(s),
        Command::Factsheet => factsheet(s),
        Command::Serve => serve(s),
    }
}

fn ingest(s: &Settings) -> Result<()> {
    let corpus = required(&s.corpus, "corpus", Command::Ingest)?;
    let out = out_dir(s, Command::Ingest)?;
    let mut run = Run::new(Command::Ingest, s);
    run.input_file(corpus)?;
    let ingested = ingest_labeled(corpus, IngestFormat::from_path(corpus)).context("ingest failed")?;
    run.output(out, "corpus.jsonl", labeled_jsonl_bytes(&ingested.items))?;
    run.output(out, "rejects.jsonl", jsonl(&ingested.rejects))?;
    let positives = ingested.items.iter().filter(|i| i.label.is_positive()).count();
    println!(
        "ingested {} articles ({} suspect_adverse), rejected {}",
        ingested.items.len(),
        positives,
        ingested.rejects.len()
    );
    run.finish(
        out,
        json!({
            "articles": ingested.items.len(),
            "suspect_adverse": positives,
            "rejects": ingested.rejects.len(),
            "corpus_digest": corpus_digest(&ingested.items),
        }),
    )?;
    Ok(())
}

fn synth(s: &Settings) -> Result<()> {
    let out = out_dir(s, Command::Synth)?;
    let mut run = Run::new(Command::Synth, s);
    let corpus = generate_synthetic_corpus(s.size, s.positive_rate, s.seed).context("synthetic generation failed")?;
    run.output(out, "corpus.jsonl", labeled_jsonl_bytes(&corpus))?;
    println!("wrote {} synthetic articles to {}", corpus.len(), out.join("corpus.jsonl").display());
    run.finish(
        out,
        json!({
            "size": s.size,
            "positive_rate": s.positive_rate,
            "corpus_digest": corpus_digest(&corpus),
        }),
    )?;
    Ok(())
}

fn train_config(s: &Settings) -> Result<TrainConfig> {
    let mut cfg = TrainConfig {
        seed: s.seed,
        train_fraction: s.train_fraction,
        stratify_by_category: s.stratify_by_category,
        ..TrainConfig::default()
    };
    let e = &s.envelope;
    cfg.token_bounds = match (e.min_tokens, e.max_tokens) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => return Err(usage("envelope min_tokens and max_tokens must be set together").into()),
    };
    if let Some(l) = &e.languages {
        cfg.envelope.allowed_languages = l.clone();
    }
    if let Some(p) = &e.invalid_title_prefixes {
        cfg.envelope.invalid_title_prefixes = p.clone();
    }
    if let Some(p) = &e.invalid_abstract_prefixes {
        cfg.envelope.invalid_abstract_prefixes = p.clone();
    }
    Ok(cfg)
}

fn train(s: &Settings) -> Result<()> {
    let corpus_path = required(&s.corpus, "corpus", Command::Train)?;
    let cfg = train_config(s)?;
    let out = out_dir(s, Command::Train)?;
    let mut run = Run::new(Command::Train, s);
    run.input_file(corpus_path)?;
    let corpus = clean_corpus(corpus_path)?;
    let (bundle, splits) = train_bundle(&corpus, &cfg, &stamp(s)).context("training failed")?;
    bundle.save(out).with_context(|| format!("cannot save bundle to {}", out.display()))?;
    let digest = bundle.digest();
    println!("trained bundle {digest} on {} articles", splits.train.len());
    run.finish(
        out,
        json!({
            "bundle_digest": digest,
            "corpus_digest": bundle.training_corpus_digest,
            "train": splits.train.len(),
            "validation": splits.validation.len(),
            "test": splits.test.len(),
        }),
    )?;
    Ok(())
}

/// Recreates the split the bundle was trained on.
fn bundle_splits(s: &Settings, bundle: &ModelBundle, corpus: &[LabeledArticle]) -> anyhow::Result<CorpusSplits> {
    let digest = corpus_digest(corpus);
    if digest != bundle.training_corpus_digest {
        bail!(
            "corpus digest {digest} does not match the bundle's training corpus {}",
            bundle.training_corpus_digest
        );
    }
    let spec = SplitSpec {
        train_fraction: s.train_fraction,
        seed: bundle.seed,
        stratify_by_category: s.stratify_by_category,
    };
    let splits = stratified_split(corpus, &spec)?;
    if splits.train.len() != bundle.composition.training_size {
        bail!(
            "train_fraction {} gives {} training articles but the bundle was trained on {}",
            s.train_fraction,
            splits.train.len(),
            bundle.composition.training_size
        );
    }
    Ok(splits)
}

fn write_report(run: &mut Run, out: &Path, report: &ExperimentReport) -> anyhow::Result<()> {
    run.output(out, "report.json", serde_json::to_string_pretty(report)? + "\n")?;
    run.output(out, "runs.csv", runs_csv(report))?;
    run.output(out, "aggregate.csv", aggregate_csv(report))?;
    for (name, data) in plot_data(report) {
        run.output(out, name, data)?;
    }
    Ok(())
}

fn experiment(s: &Settings, command: Command) -> Result<()> {
    let corpus_path = required(&s.corpus, "corpus", command)?;
    let (bundle_dir, mut bundle) = load_bundle(s, command)?;
    let out = out_dir(s, command)?;
    let mut run = Run::new(command, s);
    run.input_file(corpus_path)?;
    run.input_digest("bundle".into(), bundle.digest());
    let corpus = clean_corpus(corpus_path)?;
    let splits = bundle_splits(s, &bundle, &corpus)?;
    let cfg = ExperimentConfig {
        runs: s.runs,
        base_seed: s.seed,
        targets: s.target_recalls.clone(),
        grid_step: s.grid_step,
        stratify_by_category: s.stratify_by_category,
    };
    let report = evaluate_with_bundle(&bundle, &splits.holdout(), &corpus_digest(&corpus), &cfg)
        .context("experiment failed")?;
    write_report(&mut run, out, &report)?;
    for t in &report.targets {
        println!(
            "target {:.2}: mean test recall {:.4}, mean test fpr {:.4}",
            t.target_recall, t.test_recall.mean, t.test_fpr.mean
        );
    }
    let mut details = json!({ "bundle_digest": report.bundle_digest, "corpus_digest": report.corpus_digest });
    if command == Command::Calibrate {
        let target = s.operating_target();
        let pipeline = Pipeline::new(bundle.clone());
        let articles: Vec<_> = splits.validation.iter().map(|i| i.article.clone()).collect();
        let items: Vec<CalibrationItem> = pipeline
            .analyze_batch(&articles)
            .context("scoring the validation split failed")?
            .iter()
            .zip(&splits.validation)
            .map(|(a, gold)| CalibrationItem::from_analysis(a, gold.label))
            .collect();
        let grid = GridSpec::uniform(s.grid_step, target).context("invalid grid")?;
        let result = grid_search_thresholds(&items, &grid).context("calibration failed")?;
        run.output(out, "calibration.json", serde_json::to_string_pretty(&result).expect("calibration serializes") + "\n")?;
        bundle.thresholds = result.thresholds;
        bundle
            .save(&bundle_dir)
            .with_context(|| format!("cannot update bundle {}", bundle_dir.display()))?;
        println!(
            "thresholds for target recall {target}: theta_a={} theta_b={} (validation recall {:.4}, fpr {:.4})",
            result.thresholds.theta_a, result.thresholds.theta_b, result.validation_recall, result.validation_fpr
        );
        details["thresholds"] = serde_json::to_value(result.thresholds).expect("thresholds serialize");
    }
    run.finish(out, details)?;
    Ok(())
}

fn predict(s: &Settings) -> Result<()> {
    let (_, bundle) = load_bundle(s, Command::Predict)?;
    let corpus_path = required(&s.corpus, "corpus", Command::Predict)?;
    let out = out_dir(s, Command::Predict)?;
    let mut run = Run::new(Command::Predict, s);
    run.input_file(corpus_path)?;
    run.input_digest("bundle".into(), bundle.digest());
    let ingested = ingest_articles(corpus_path, IngestFormat::from_path(corpus_path)).context("ingest failed")?;
    let pipeline = Pipeline::new(bundle);
    let predictions = pipeline.predict_batch(&ingested.items).context("prediction failed")?;
    let at = s.now();
    let audit: String = predictions.iter().map(|p| audit_line(p, at) + "\n").collect();
    run.output(out, "predictions.jsonl", jsonl(&predictions))?;
    run.output(out, "audit.log", audit)?;
    run.output(out, "rejects.jsonl", jsonl(&ingested.rejects))?;
    let mut by_label: BTreeMap<&str, usize> = BTreeMap::new();
    let mut by_rule: BTreeMap<&str, usize> = BTreeMap::new();
    for p in &predictions {
        *by_label.entry(p.label.as_str()).or_default() += 1;
        *by_rule.entry(p.fired_rule.as_str()).or_default() += 1;
    }
    println!(
        "screened {} articles: {:?}; rejected {}",
        predictions.len(),
        by_label,
        ingested.rejects.len()
    );
    run.finish(
        out,
        json!({
            "articles": predictions.len(),
            "rejects": ingested.rejects.len(),
            "thresholds": pipeline.thresholds(),
            "by_label": by_label,
            "by_rule": by_rule,
        }),
    )?;
    Ok(())
}

fn explain(s: &Settings) -> Result<()> {
    let (_, bundle) = load_bundle(s, Command::Explain)?;
    let corpus_path = required(&s.corpus, "corpus", Command::Explain)?;
    let out = out_dir(s, Command::Explain)?;
    let mut run = Run::new(Command::Explain, s);
    run.input_file(corpus_path)?;
    run.input_digest("bundle".into(), bundle.digest());
    let ingested = ingest_articles(corpus_path, IngestFormat::from_path(corpus_path)).context("ingest failed")?;
    let pipeline = Pipeline::new(bundle);
    let mut lines = String::new();
    let mut explained = 0;
    for article in &ingested.items {
        let analysis = pipeline.analyze(article).context("analysis failed")?;
        let record = if analysis.envelope.in_envelope {
            explained += 1;
            let e = explain_prediction(&analysis.doc, &pipeline, s.mode, s.explain_samples, s.seed)
                .with_context(|| format!("cannot explain {}", article.id))?;
            serde_json::to_value(e).expect("explanations serialize")
        } else {
            json!({
                "article_id": article.id,
                "unavailable": "outside the operating envelope",
                "reasons": analysis.envelope.reasons,
            })
        };
        lines += &(serde_json::to_string(&record).expect("records serialize") + "\n");
    }
    run.output(out, "explanations.jsonl", lines)?;
    println!(
        "explained {explained} of {} articles with {}",
        ingested.items.len(),
        s.mode
    );
    run.finish(
        out,
        json!({ "mode": s.mode, "samples": s.explain_samples, "explained": explained, "articles": ingested.items.len() }),
    )?;
    Ok(())
}

fn factsheet(s: &Settings) -> Result<()> {
    let (_, bundle) = load_bundle(s, Command::Factsheet)?;
    let report_path = required(&s.report, "report", Command::Factsheet)?;
    let out = out_dir(s, Command::Factsheet)?;
    let mut run = Run::new(Command::Factsheet, s);
    run.input_file(report_path)?;
    run.input_digest("bundle".into(), bundle.digest());
    let text = fs::read_to_string(report_path).with_context(|| format!("cannot read {}", report_path.display()))?;
    let report: ExperimentReport =
        serde_json::from_str(&text).with_context(|| format!("{} is not an experiment report", report_path.display()))?;
    let (sheet, markdown) = generate_factsheet(&bundle, &report, &s.texts).context("factsheet generation failed")?;
    write_factsheet(out, &sheet, &markdown).context("cannot write factsheet")?;
    run.outputs.extend([JSON_FILE.to_string(), MARKDOWN_FILE.to_string()]);
    println!("wrote {} and {}", out.join(JSON_FILE).display(), out.join(MARKDOWN_FILE).display());
    run.finish(out, json!({ "bundle_digest": sheet.version.bundle_digest }))?;
    Ok(())
}

fn serve(s: &Settings) -> Result<()> {
    let data_dir = out_dir(s, Command::Serve)?;
    let bundle = match &s.bundle {
        Some(_) => Some(load_bundle(s, Command::Serve)?.1),
        None => None,
    };
    let mut run = Run::new(Command::Serve, s);
    if let Some(b) = &bundle {
        run.input_digest("bundle".into(), b.digest());
    }
    let mut config = ServiceConfig::new(data_dir);
    config.explain_mode = s.mode;
    config.explain_samples = s.explain_samples;
    config.explain_seed = s.seed;
    config.factsheet = s.factsheet_json.clone();
    let service = TriageService::open(config, bundle, Box::new(SystemClock)).context("cannot open the triage store")?;
    run.finish(data_dir, json!({ "addr": s.addr.to_string() }))?;
    let runtime = tokio::runtime::Runtime::new().context("cannot start the async runtime")?;
    println!("serving /v1 on http://{}", s.addr);
    runtime
        .block_on(mlmscreen_service::serve(Arc::new(service), s.addr))
        .with_context(|| format!("server on {} failed", s.addr))?;
    Ok(())
}
