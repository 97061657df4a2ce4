//! Confusion counts, recall, false positive rate and Cohen's kappa.
//!
//! The positive class is [`Label::SuspectAdverse`]. Undefined metrics are
//! errors, never sentinel values.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Label;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("length mismatch: {left} predictions vs {right} gold labels")]
    LengthMismatch { left: usize, right: usize },
    #[error("{0} is undefined: denominator is zero")]
    Undefined(&'static str),
    #[error("empty input")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn add(&mut self, predicted: Label, gold: Label) {
        match (predicted.is_positive(), gold.is_positive()) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    /// Key-value text block, one `key=value` per line.
    pub fn to_kv(&self) -> String {
        let mut out = format!("tp={}\nfp={}\ntn={}\nfn={}\n", self.tp, self.fp, self.tn, self.fn_);
        if let Ok(r) = recall(self) {
            out.push_str(&format!("recall={r}\n"));
        }
        if let Ok(f) = false_positive_rate(self) {
            out.push_str(&format!("fpr={f}\n"));
        }
        out
    }
}

impl fmt::Display for ConfusionCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "tp={} fp={} tn={} fn={}", self.tp, self.fp, self.tn, self.fn_)
    }
}

/// Counts over `(predicted, gold)` pairs.
pub fn confusion_counts(pairs: &[(Label, Label)]) -> ConfusionCounts {
    let mut c = ConfusionCounts::default();
    for &(p, g) in pairs {
        c.add(p, g);
    }
    c
}

/// Counts over two aligned label lists.
pub fn confusion_from_lists(predicted: &[Label], gold: &[Label]) -> Result<ConfusionCounts, MetricError> {
    if predicted.len() != gold.len() {
        return Err(MetricError::LengthMismatch {
            left: predicted.len(),
            right: gold.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (&p, &g) in predicted.iter().zip(gold) {
        c.add(p, g);
    }
    Ok(c)
}

pub fn recall(c: &ConfusionCounts) -> Result<f64, MetricError> {
    let d = c.tp + c.fn_;
    if d == 0 {
        return Err(MetricError::Undefined("recall"));
    }
    Ok(c.tp as f64 / d as f64)
}

pub fn false_positive_rate(c: &ConfusionCounts) -> Result<f64, MetricError> {
    let d = c.fp + c.tn;
    if d == 0 {
        return Err(MetricError::Undefined("false positive rate"));
    }
    Ok(c.fp as f64 / d as f64)
}

/// Cohen's kappa between two annotators. When chance agreement is 1 (both
/// annotators constant and identical) the result is 1.0.
pub fn cohens_kappa(a: &[Label], b: &[Label]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    // kappa = (n * agree - S) / (n^2 - S) with S = n^2 * p_e, in integers
    let n = a.len() as u128;
    let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as u128;
    let a_pos = a.iter().filter(|l| l.is_positive()).count() as u128;
    let b_pos = b.iter().filter(|l| l.is_positive()).count() as u128;
    let s = a_pos * b_pos + (n - a_pos) * (n - b_pos);
    if s == n * n {
        return Ok(1.0);
    }
    Ok(((n * agree) as f64 - s as f64) / ((n * n - s) as f64))
}

pub const CSV_HEADER: &str = "tp,fp,tn,fn,recall,fpr";

/// CSV row matching [`CSV_HEADER`]; undefined ratios are left empty.
pub fn csv_row(c: &ConfusionCounts) -> String {
    let r = recall(c).map(|v| v.to_string()).unwrap_or_default();
    let f = false_positive_rate(c).map(|v| v.to_string()).unwrap_or_default();
    format!("{},{},{},{},{r},{f}", c.tp, c.fp, c.tn, c.fn_)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{NotSuspect as N, SuspectAdverse as S};

    #[test]
    fn four_way_enumeration() {
        let c = confusion_counts(&[(S, S), (S, N), (N, N), (N, S)]);
        assert_eq!((c.tp, c.fp, c.tn, c.fn_), (1, 1, 1, 1));
        assert_eq!(confusion_counts(&[]), ConfusionCounts::default());
    }

    #[test]
    fn recall_and_fpr_values() {
        let c = ConfusionCounts { tp: 99, fn_: 1, ..Default::default() };
        assert_eq!(recall(&c).unwrap(), 0.99);
        assert_eq!(recall(&ConfusionCounts::default()), Err(MetricError::Undefined("recall")));
        let c = ConfusionCounts { fp: 45, tn: 55, ..Default::default() };
        assert_eq!(false_positive_rate(&c).unwrap(), 0.45);
        let c = ConfusionCounts { fp: 22, tn: 78, ..Default::default() };
        assert_eq!(false_positive_rate(&c).unwrap(), 0.22);
        assert!(false_positive_rate(&ConfusionCounts { tp: 3, ..Default::default() }).is_err());
    }

    #[test]
    fn kappa_examples() {
        let bits = |v: &[u8]| v.iter().map(|&x| Label::from_positive(x == 1)).collect::<Vec<_>>();
        let a = bits(&[1, 1, 1, 1, 1, 0, 0, 0, 0, 0]);
        let b = bits(&[1, 1, 1, 1, 0, 0, 0, 0, 0, 1]);
        assert!((cohens_kappa(&a, &b).unwrap() - 0.6).abs() < 1e-12);
        assert_eq!(cohens_kappa(&a, &a).unwrap(), 1.0);
        let flipped: Vec<Label> = a.iter().map(|l| Label::from_positive(!l.is_positive())).collect();
        assert_eq!(cohens_kappa(&a, &flipped).unwrap(), -1.0);
        assert_eq!(cohens_kappa(&[S, S], &[S, S]).unwrap(), 1.0);
        assert_eq!(cohens_kappa(&[], &[]), Err(MetricError::Empty));
        assert!(cohens_kappa(&[S], &[S, N]).is_err());
    }

    #[test]
    fn kv_and_csv() {
        let c = ConfusionCounts { tp: 1, fp: 1, tn: 3, fn_: 0 };
        assert_eq!(c.to_kv(), "tp=1\nfp=1\ntn=3\nfn=0\nrecall=1\nfpr=0.25\n");
        assert_eq!(csv_row(&c), "1,1,3,0,1,0.25");
    }
}
