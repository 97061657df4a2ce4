use std::collections::HashSet;

use mlmscreen_core::language::LanguageIdentifier;
use mlmscreen_core::preprocess::normalize_tokenize;
use mlmscreen_core::Article;

fn whatlang_code(lang: whatlang::Lang) -> Option<&'static str> {
    use whatlang::Lang::*;
    Some(match lang {
        Eng => "en",
        Fra => "fr",
        Deu => "de",
        Spa => "es",
        Por => "pt",
        Ita => "it",
        _ => return None,
    })
}

#[test]
fn language_identification_agrees_with_reference_tool() {
    let fixture = include_str!("fixtures/languages.tsv");
    let id = LanguageIdentifier::bundled();
    let mut agree = 0;
    let mut total = 0;
    let mut disagreements = Vec::new();
    for line in fixture.lines().filter(|l| !l.trim().is_empty()) {
        let (gold, text) = line.split_once('\t').expect("code<TAB>text");
        total += 1;
        let ours = id.detect(text).expect("detectable").code;
        let reference = whatlang::detect_lang(text).and_then(whatlang_code);
        assert_eq!(reference, Some(gold), "fixture label disagrees with the reference tool: {text}");
        if reference == Some(ours.as_str()) {
            agree += 1;
        } else {
            disagreements.push((gold.to_string(), ours));
        }
    }
    assert_eq!(total, 60);
    assert!(agree >= 58, "agreement {agree}/60, disagreements {disagreements:?}");
}

#[test]
fn fixture_examples_are_confident() {
    let id = LanguageIdentifier::bundled();
    let fr = id.detect("Le patient a développé une éruption cutanée après le traitement.").unwrap();
    assert_eq!(fr.code, "fr");
    assert!(fr.confidence >= 0.5);
    let en = "A 58-year-old woman developed hypercalcemia after taking high-dose vitamin D supplements \
              for three months. Serum calcium normalized after the supplement was stopped and fluids were given.";
    let g = id.detect(en).unwrap();
    assert_eq!(g.code, "en");
    assert!(g.confidence >= 0.5);
}

#[test]
fn sentence_boundaries_agree_with_hand_split_fixture() {
    let fixture = include_str!("fixtures/sentences.txt");
    let mut gold_total = 0;
    let mut matched = 0;
    for (n, line) in fixture.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let gold: Vec<&str> = line.split(" | ").map(str::trim).collect();
        let doc = normalize_tokenize(&Article::new(format!("S{n}"), "", gold.join(" ")));
        let ours: HashSet<&str> = doc.sentences.iter().map(|s| doc.slice(s.start, s.end)).collect();
        gold_total += gold.len();
        matched += gold.iter().filter(|g| ours.contains(*g)).count();
    }
    assert_eq!(gold_total, 50);
    let agreement = matched as f64 / gold_total as f64;
    assert!(agreement >= 0.95, "exact boundary agreement {matched}/{gold_total}");
}
