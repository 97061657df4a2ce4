use std::collections::HashSet;
use std::sync::OnceLock;

use mlmscreen_core::bundle::BundleError;
use mlmscreen_core::calibrate::{run_repeated_experiments, CalibrationError, ExperimentConfig};
use mlmscreen_core::corpus::{generate_synthetic_corpus, AmbiguityVariant, CorpusSplits};
use mlmscreen_core::explain::{explain_prediction, ExplainError, ExplainMode};
use mlmscreen_core::factsheet::{generate_factsheet, performance_table_numbers, DisclosureTexts, FactsheetError};
use mlmscreen_core::pipeline::{train_bundle, TrainConfig};
use mlmscreen_core::{Article, Label, LabeledArticle, ModelBundle, Pipeline, RuleId, RuleThresholds};
use proptest::prelude::*;

const CREATED: &str = "2024-01-01T00:00:00Z";

fn trained() -> &'static (ModelBundle, CorpusSplits) {
    static CELL: OnceLock<(ModelBundle, CorpusSplits)> = OnceLock::new();
    CELL.get_or_init(|| {
        let corpus = generate_synthetic_corpus(800, 0.3, 7).unwrap();
        train_bundle(&corpus, &TrainConfig::default(), CREATED).unwrap()
    })
}

fn pipeline() -> Pipeline {
    Pipeline::new(trained().0.clone())
}

fn holdout_articles() -> Vec<Article> {
    trained().1.holdout().into_iter().map(|i| i.article).collect()
}

fn random_articles(n: usize, seed: u64) -> Vec<Article> {
    generate_synthetic_corpus(n.max(10), 0.3, seed)
        .unwrap()
        .into_iter()
        .take(n)
        .map(|i| i.article)
        .collect()
}

#[test]
fn bundle_round_trip_preserves_scores() {
    let dir = tempfile::tempdir().unwrap();
    let bundle = &trained().0;
    bundle.save(dir.path()).unwrap();
    let loaded = ModelBundle::load(dir.path()).unwrap();
    assert_eq!(loaded.digest(), bundle.digest());
    assert_eq!(loaded.thresholds, RuleThresholds { theta_a: 0.5, theta_b: 0.95 });
    let (before, after) = (Pipeline::new(bundle.clone()), Pipeline::new(loaded));
    let mut drift: f64 = 0.0;
    for article in random_articles(100, 99) {
        let doc = before.tokenize(&article);
        let (a0, b0) = before.scores(&doc).unwrap();
        let (a1, b1) = after.scores(&doc).unwrap();
        drift = drift.max((a0 - a1).abs()).max((b0 - b1).abs());
    }
    assert!(drift <= 1e-12, "drift {drift}");
}

#[test]
fn corrupted_member_is_refused_by_name() {
    let dir = tempfile::tempdir().unwrap();
    trained().0.save(dir.path()).unwrap();
    let path = dir.path().join("scorer_a.json");
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    match ModelBundle::load(dir.path()) {
        Err(e @ BundleError::DigestMismatch { .. }) => {
            let BundleError::DigestMismatch { member, .. } = &e else { unreachable!() };
            assert_eq!(member, "scorer_a");
            assert!(e.to_string().contains("scorer_a"));
        }
        other => panic!("expected digest mismatch, got {other:?}"),
    }
}

#[test]
fn thresholds_round_trip_through_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut bundle = trained().0.clone();
    bundle.thresholds = RuleThresholds::new(0.37, 0.81).unwrap();
    bundle.save(dir.path()).unwrap();
    assert_eq!(ModelBundle::load(dir.path()).unwrap().thresholds, bundle.thresholds);
    assert_eq!(ModelBundle::load(dir.path()).unwrap().digest(), trained().0.digest());
}

#[test]
fn positive_template_outscores_negative_template() {
    let p = pipeline();
    let pos = Article::new(
        "P",
        "Hepatotoxicity associated with amiodarone: a case report",
        "A 71-year-old man developed hepatotoxicity while on amiodarone. Symptoms resolved after discontinuation of amiodarone.",
    );
    let neg = Article::new(
        "N",
        "Pharmacokinetics of metformin in healthy volunteers",
        "The pharmacokinetics of metformin were characterized in 24 healthy volunteers aged 18 to 45 years. \
         Maximum plasma concentration was reached after 3 hours. The elimination half-life was 6.2 hours.",
    );
    let sa = p.scores(&p.tokenize(&pos)).unwrap().0;
    let sn = p.scores(&p.tokenize(&neg)).unwrap().0;
    assert!(sa > sn, "{sa} <= {sn}");
}

#[test]
fn exhaustive_influences_match_independent_recomputation() {
    let p = pipeline();
    let bundle = p.bundle();
    for article in holdout_articles().iter().take(30) {
        let analysis = p.analyze(article).unwrap();
        if !analysis.envelope.in_envelope {
            continue;
        }
        let doc = &analysis.doc;
        let e = explain_prediction(doc, &p, ExplainMode::ExhaustiveAblation, 0, 0).unwrap();
        assert_eq!(e.attributions.len(), doc.sentences.len());
        let score = |tokens: Vec<&str>| {
            let x = bundle.vocabulary.featurize(&tokens);
            bundle.scorer_a.score(&x).unwrap()
        };
        let full = score(doc.tokens.iter().map(|t| t.text.as_str()).collect());
        assert_eq!(e.base_score, full);
        for attr in &e.attributions {
            let kept = doc
                .tokens
                .iter()
                .filter(|t| !(t.start >= attr.start && t.end <= attr.end))
                .map(|t| t.text.as_str())
                .collect();
            assert_eq!(attr.influence, full - score(kept), "sentence {}", attr.index);
        }
        let order: Vec<f64> = e.attributions.iter().map(|a| a.influence.abs()).collect();
        assert!(order.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn lime_top_sentence_agrees_with_ablation_on_short_documents() {
    let p = pipeline();
    let mut checked = 0;
    for article in random_articles(300, 123) {
        let analysis = p.analyze(&article).unwrap();
        let n = analysis.doc.sentences.len();
        if !analysis.envelope.in_envelope || n > 4 {
            continue;
        }
        let exhaustive = explain_prediction(&analysis.doc, &p, ExplainMode::ExhaustiveAblation, 0, 0).unwrap();
        let lime = explain_prediction(&analysis.doc, &p, ExplainMode::SampledLime, 1 << n, 5).unwrap();
        assert_eq!(lime.samples, 1 << n);
        assert_eq!(lime.top().unwrap().index, exhaustive.top().unwrap().index, "{}", article.id);
        checked += 1;
    }
    assert!(checked >= 10, "only {checked} short documents");
}

#[test]
fn lime_is_seed_deterministic() {
    let p = pipeline();
    let article = &holdout_articles()[0];
    let doc = p.analyze(article).unwrap().doc;
    let a = explain_prediction(&doc, &p, ExplainMode::SampledLime, 200, 9).unwrap();
    let b = explain_prediction(&doc, &p, ExplainMode::SampledLime, 200, 9).unwrap();
    assert_eq!(a, b);
}

#[test]
fn explaining_outside_the_envelope_fails() {
    let p = pipeline();
    let doc = p.analyze(&Article::new("X", "Erratum", "[This corrects the article on page 4.]")).unwrap().doc;
    assert!(matches!(
        explain_prediction(&doc, &p, ExplainMode::ExhaustiveAblation, 0, 0),
        Err(ExplainError::OutOfEnvelope(_))
    ));
}

fn assert_routed_by_r1(p: &Pipeline, article: &Article) -> Result<(), TestCaseError> {
    let pred = p.predict(article).unwrap();
    prop_assert_eq!(pred.label, Label::SuspectAdverse);
    prop_assert_eq!(pred.fired_rule, RuleId::R1Envelope);
    prop_assert!(pred.score_a.is_none() && pred.score_b.is_none());
    for entry in &pred.trace.entries {
        if matches!(entry.rule_id, RuleId::R2ScorerA | RuleId::R3ScorerBHighConf) {
            prop_assert!(!entry.evaluated);
        }
    }
    Ok(())
}

const FRENCH: &[&str] = &[
    "Le patient a présenté une éruption cutanée après le traitement.",
    "Une insuffisance rénale aiguë est survenue chez une femme de soixante ans.",
    "Les symptômes ont disparu après l'arrêt du médicament.",
    "Nous rapportons le cas d'un homme hospitalisé pour une hépatite.",
];
const GERMAN: &[&str] = &[
    "Bei der Patientin trat nach Beginn der Therapie eine schwere Hyponatriämie auf.",
    "Nach Absetzen des Medikaments normalisierten sich die Laborwerte.",
    "Wir beschreiben den klinischen Verlauf einer Frau mit Gelbsucht.",
];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn non_english_inputs_go_to_human_screening(picks in prop::collection::vec(0usize..7, 2..6)) {
        let text: Vec<&str> = picks.iter().map(|&i| if i < 4 { FRENCH[i] } else { GERMAN[i - 4] }).collect();
        let article = Article::new("F", text[0], text[1..].join(" "));
        assert_routed_by_r1(&pipeline(), &article)?;
    }

    #[test]
    fn over_length_inputs_go_to_human_screening(extra in 1usize..50, seed in 0u64..1000) {
        let p = pipeline();
        let max = p.bundle().envelope.max_tokens;
        let base = &random_articles(1, seed)[0];
        let filler = " Median follow-up was twelve months.".repeat(max / 5 + extra);
        let article = Article::new("L", base.title.clone(), format!("{}{}", base.abstract_text, filler));
        assert_routed_by_r1(&p, &article)?;
    }

    #[test]
    fn errata_go_to_human_screening(prefix in prop::sample::select(vec!["Erratum", "Corrigendum", "RETRACTION"]), seed in 0u64..1000) {
        let base = &random_articles(1, seed)[0];
        let article = Article::new("E", format!("{prefix}: {}", base.title), base.abstract_text.clone());
        assert_routed_by_r1(&pipeline(), &article)?;
    }
}

fn texts() -> DisclosureTexts {
    DisclosureTexts {
        intended_use: Some("Pre-screening of literature abstracts.".into()),
        out_of_scope_uses: Some("Autonomous decisions.".into()),
        limitations: Some("Synthetic evaluation only.".into()),
    }
}

fn small_experiment() -> (mlmscreen_core::ExperimentReport, ModelBundle) {
    let corpus = generate_synthetic_corpus(600, 0.3, 7).unwrap();
    let cfg = ExperimentConfig {
        runs: 2,
        ..ExperimentConfig::default()
    };
    run_repeated_experiments(&corpus, &TrainConfig::default(), &cfg, CREATED).unwrap()
}

#[test]
fn factsheet_numbers_come_from_the_report() {
    let (report, bundle) = small_experiment();
    let (sheet, md) = generate_factsheet(&bundle, &report, &texts()).unwrap();
    let mut allowed: HashSet<u64> = HashSet::new();
    for t in &report.targets {
        allowed.insert(t.target_recall.to_bits());
        for s in [&t.test_recall, &t.test_fpr] {
            for v in [s.mean, s.min, s.q1, s.median, s.q3, s.max] {
                allowed.insert(v.to_bits());
            }
        }
    }
    let rows = performance_table_numbers(&md);
    assert_eq!(rows.len(), report.targets.len());
    for v in rows.iter().flatten() {
        assert!(allowed.contains(&v.to_bits()), "{v} is not in the report");
    }
    assert_eq!(sheet.version.bundle_digest, bundle.digest());
    for section in ["## Intended use", "## Out-of-scope uses", "## Operating envelope", "## Limitations", "## Version"] {
        assert!(md.contains(section), "{section}");
    }
}

#[test]
fn factsheet_refuses_mismatched_bundle_or_missing_text() {
    let (report, bundle) = small_experiment();
    let mut other = bundle.clone();
    other.seed += 1;
    other.composition.corpus_size += 1;
    assert!(matches!(
        generate_factsheet(&other, &report, &texts()),
        Err(FactsheetError::DigestMismatch { .. })
    ));
    let missing = DisclosureTexts {
        limitations: None,
        ..texts()
    };
    assert!(matches!(
        generate_factsheet(&bundle, &report, &missing),
        Err(FactsheetError::MissingSection("limitations"))
    ));
}

#[test]
fn experiments_are_deterministic() {
    let corpus = generate_synthetic_corpus(400, 0.3, 3).unwrap();
    let cfg = ExperimentConfig {
        runs: 1,
        ..ExperimentConfig::default()
    };
    let (a, _) = run_repeated_experiments(&corpus, &TrainConfig::default(), &cfg, CREATED).unwrap();
    let (b, _) = run_repeated_experiments(&corpus, &TrainConfig::default(), &cfg, CREATED).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.targets.len(), 5);
    for t in &a.targets {
        assert_eq!(t.runs.len(), 1);
    }
}

#[test]
fn tiny_corpus_is_a_degenerate_split() {
    let corpus: Vec<LabeledArticle> = (0..3)
        .map(|i| {
            LabeledArticle::new(
                Article::new(format!("T{i}"), "Title", "Some abstract text."),
                Label::from_positive(i == 0),
                "a",
            )
        })
        .collect();
    let err = run_repeated_experiments(&corpus, &TrainConfig::default(), &ExperimentConfig::default(), CREATED).unwrap_err();
    assert!(matches!(err, CalibrationError::DegenerateSplit(_)), "{err:?}");
}

#[test]
fn synthetic_corpus_has_every_ambiguity_variant() {
    let corpus = generate_synthetic_corpus(100, 0.3, 1).unwrap();
    assert_eq!(corpus.iter().filter(|i| i.label.is_positive()).count(), 30);
    let variants: HashSet<_> = corpus
        .iter()
        .filter_map(|i| i.article.source.as_deref().and_then(AmbiguityVariant::from_source))
        .collect();
    assert_eq!(variants.len(), 3);
}
