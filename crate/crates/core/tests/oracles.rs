use std::time::Instant;

use mlmscreen_core::calibrate::{grid_search_thresholds, CalibrationItem, CountTable, GridSpec};
use mlmscreen_core::metrics::{cohens_kappa, confusion_from_lists, false_positive_rate, recall, ConfusionCounts};
use mlmscreen_core::rules::decide;
use mlmscreen_core::{Label, RuleId, RuleThresholds};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn label(b: bool) -> Label {
    Label::from_positive(b)
}

fn random_labels(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Vec<Label> {
    (0..n).map(|_| label(rng.gen_bool(p))).collect()
}

#[test]
fn metrics_match_brute_force_on_random_cases() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let n = rng.gen_range(1..200);
        let p = rng.gen_range(0.0..=1.0);
        let pred = random_labels(&mut rng, n, p);
        let q = rng.gen_range(0.0..=1.0);
        let gold = random_labels(&mut rng, n, q);

        let (mut tp, mut fp, mut tn, mut fn_) = (0, 0, 0, 0);
        for i in 0..n {
            match (pred[i] == Label::SuspectAdverse, gold[i] == Label::SuspectAdverse) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, false) => tn += 1,
                (false, true) => fn_ += 1,
            }
        }
        let c = confusion_from_lists(&pred, &gold).unwrap();
        assert_eq!(c, ConfusionCounts { tp, fp, tn, fn_ });
        match recall(&c) {
            Ok(r) => assert_eq!(r, tp as f64 / (tp + fn_) as f64),
            Err(_) => assert_eq!(tp + fn_, 0),
        }
        match false_positive_rate(&c) {
            Ok(f) => assert_eq!(f, fp as f64 / (fp + tn) as f64),
            Err(_) => assert_eq!(fp + tn, 0),
        }

        // contingency table of the two annotators
        let (a, b) = (&pred, &gold);
        let mut t = [[0u128; 2]; 2];
        for i in 0..n {
            t[a[i].is_positive() as usize][b[i].is_positive() as usize] += 1;
        }
        let nn = n as u128;
        let observed = (t[0][0] + t[1][1]) * nn;
        let chance = (t[1][0] + t[1][1]) * (t[0][1] + t[1][1]) + (t[0][0] + t[0][1]) * (t[0][0] + t[1][0]);
        let expected = if chance == nn * nn {
            1.0
        } else {
            (observed as f64 - chance as f64) / ((nn * nn - chance) as f64)
        };
        assert_eq!(cohens_kappa(a, b).unwrap(), expected);
    }
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn fpr_spot_values() {
    let c = |fp, tn| ConfusionCounts { tp: 0, fp, tn, fn_: 0 };
    assert_eq!(false_positive_rate(&c(45, 55)).unwrap(), 0.45);
    assert_eq!(false_positive_rate(&c(22, 78)).unwrap(), 0.22);
}

#[test]
fn kappa_limits() {
    let mixed = [Label::SuspectAdverse, Label::NotSuspect, Label::SuspectAdverse, Label::NotSuspect];
    assert_eq!(cohens_kappa(&mixed, &mixed).unwrap(), 1.0);
    let flipped: Vec<Label> = mixed.iter().map(|l| label(!l.is_positive())).collect();
    assert_eq!(cohens_kappa(&mixed, &flipped).unwrap(), -1.0);
    let constant = [Label::NotSuspect; 5];
    assert_eq!(cohens_kappa(&constant, &constant).unwrap(), 1.0);
}

/// Scores are drawn partly from the grid itself so ties at thresholds occur.
fn random_items(rng: &mut ChaCha8Rng, n: usize, grid_n: usize) -> Vec<CalibrationItem> {
    let score = |rng: &mut ChaCha8Rng, gold: bool| {
        let s: f64 = if rng.gen_bool(0.3) {
            rng.gen_range(0..=grid_n) as f64 / grid_n as f64
        } else {
            rng.gen_range(0.0..=1.0)
        };
        if gold {
            (s + 0.15).min(1.0)
        } else {
            s
        }
    };
    let mut items: Vec<CalibrationItem> = (0..n)
        .map(|_| {
            let gold = rng.gen_bool(0.3);
            CalibrationItem {
                score_a: score(rng, gold),
                score_b: score(rng, gold),
                patient: rng.gen_bool(0.05),
                in_envelope: rng.gen_bool(0.95),
                gold: label(gold),
            }
        })
        .collect();
    items[0].gold = Label::SuspectAdverse;
    items[1].gold = Label::NotSuspect;
    items
}

/// The cascade written out from its definition.
fn brute_predict(it: &CalibrationItem, ta: f64, tb: f64) -> bool {
    !it.in_envelope || it.score_a >= ta || it.score_b >= tb || it.patient
}

struct Best {
    theta_a: f64,
    theta_b: f64,
    fp: usize,
    tp: usize,
}

fn brute_force(items: &[CalibrationItem], grid: &GridSpec) -> (Best, usize) {
    let pos = items.iter().filter(|i| i.gold.is_positive()).count();
    let mut feasible = 0;
    let mut best: Option<Best> = None;
    for &ta in &grid.theta_a {
        for &tb in &grid.theta_b {
            let (mut tp, mut fp) = (0, 0);
            for it in items {
                if brute_predict(it, ta, tb) {
                    if it.gold.is_positive() {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            if (tp as f64 / pos as f64) < grid.target_recall {
                continue;
            }
            feasible += 1;
            let replace = match &best {
                None => true,
                Some(b) => {
                    fp < b.fp
                        || (fp == b.fp && tp > b.tp)
                        || (fp == b.fp && tp == b.tp && ta > b.theta_a)
                        || (fp == b.fp && tp == b.tp && ta == b.theta_a && tb > b.theta_b)
                }
            };
            if replace {
                best = Some(Best { theta_a: ta, theta_b: tb, fp, tp });
            }
        }
    }
    (best.expect("grid contains 0.0, so some point is feasible"), feasible)
}

#[test]
fn grid_search_equals_exhaustive_enumeration() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..100 {
        let grid_n = rng.gen_range(1..=50);
        let n = rng.gen_range(2..=500);
        let target = [0.5, 0.75, 0.91, 0.95, 0.99, 1.0][case % 6];
        let items = random_items(&mut rng, n, grid_n);
        let grid = GridSpec::uniform(1.0 / grid_n as f64, target).unwrap();
        let got = grid_search_thresholds(&items, &grid).unwrap();
        let (want, feasible_count) = brute_force(&items, &grid);
        assert_eq!(
            (got.thresholds.theta_a, got.thresholds.theta_b),
            (want.theta_a, want.theta_b),
            "case {case}"
        );
        assert_eq!((got.counts.fp, got.counts.tp), (want.fp, want.tp), "case {case}");
        assert!(got.validation_recall >= target);

        // the feasible set agrees point by point
        let table = CountTable::build(&items, &grid.theta_a, &grid.theta_b).unwrap();
        let pos = items.iter().filter(|i| i.gold.is_positive()).count();
        let mut table_feasible = 0;
        for i in 0..grid.theta_a.len() {
            for j in 0..grid.theta_b.len() {
                let c = table.counts(i, j);
                let flagged: Vec<_> = items
                    .iter()
                    .filter(|it| brute_predict(it, grid.theta_a[i], grid.theta_b[j]))
                    .collect();
                let direct_tp = flagged.iter().filter(|it| it.gold.is_positive()).count();
                assert_eq!((c.tp, c.fp), (direct_tp, flagged.len() - direct_tp));
                if c.tp as f64 / pos as f64 >= target {
                    table_feasible += 1;
                }
            }
        }
        assert_eq!(table_feasible, feasible_count);
    }
    assert!(started.elapsed().as_secs_f64() < 60.0);
}

#[test]
fn returned_thresholds_reach_target_and_fpr_is_monotone_in_target() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let items = random_items(&mut rng, 300, 100);
        let table = CountTable::build(&items, &grid(), &grid()).unwrap();
        let mut last = -1.0;
        for t in [0.91, 0.93, 0.95, 0.97, 0.99] {
            let r = table.select(t).unwrap();
            assert!(r.validation_recall >= t);
            assert!(r.validation_fpr >= last, "fpr decreased at target {t}");
            last = r.validation_fpr;
        }
    }
}

fn grid() -> Vec<f64> {
    (0..=100).map(|i| i as f64 / 100.0).collect()
}

#[test]
fn target_one_is_always_feasible() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let items = random_items(&mut rng, 50, 20);
        let r = grid_search_thresholds(&items, &GridSpec::uniform(0.05, 1.0).unwrap()).unwrap();
        assert!(r.feasible);
        assert_eq!(r.validation_recall, 1.0);
    }
}

#[test]
fn single_class_validation_is_rejected() {
    let items = vec![
        CalibrationItem {
            score_a: 0.4,
            score_b: 0.1,
            patient: false,
            in_envelope: true,
            gold: Label::NotSuspect,
        };
        4
    ];
    assert!(grid_search_thresholds(&items, &GridSpec::uniform(0.1, 0.9).unwrap()).is_err());
}

#[test]
fn cascade_dominates_scorer_a_alone() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let t = RuleThresholds::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)).unwrap();
        let n = rng.gen_range(1..100);
        let (mut cascade_tp, mut a_tp) = (0, 0);
        for _ in 0..n {
            let a: f64 = rng.gen_range(0.0..=1.0);
            let b: f64 = rng.gen_range(0.0..=1.0);
            let patient = rng.gen_bool(0.2);
            let gold = rng.gen_bool(0.4);
            let rule = decide(true, (a, b), patient, &t);
            let cascade_pos = rule != RuleId::R5Default;
            if a >= t.theta_a {
                assert!(cascade_pos);
                a_tp += gold as usize;
            }
            cascade_tp += (cascade_pos && gold) as usize;
        }
        assert!(cascade_tp >= a_tp);
    }
}

#[test]
fn lowering_a_threshold_never_removes_positives() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..500 {
        let a: f64 = rng.gen_range(0.0..=1.0);
        let b: f64 = rng.gen_range(0.0..=1.0);
        let patient = rng.gen_bool(0.2);
        let hi = RuleThresholds::new(rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0)).unwrap();
        let lo = RuleThresholds::new(hi.theta_a * rng.gen_range(0.0..=1.0), hi.theta_b * rng.gen_range(0.0..=1.0)).unwrap();
        let pos = |t: &RuleThresholds| decide(true, (a, b), patient, t) != RuleId::R5Default;
        assert!(!pos(&hi) || pos(&lo));
    }
}
