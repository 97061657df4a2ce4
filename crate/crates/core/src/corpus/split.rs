use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{label_counts, CorpusError, Label, LabeledArticle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    /// Fraction of the corpus assigned to training; the remainder is halved
    /// into validation (floor) and test (rest).
    pub train_fraction: f64,
    pub seed: u64,
    /// Stratify on (label, selection category) instead of label alone.
    pub stratify_by_category: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.90,
            seed: 0,
            stratify_by_category: false,
        }
    }
}

impl SplitSpec {
    pub fn with_seed(seed: u64) -> Self {
        SplitSpec {
            seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(CorpusError::InvalidParameter(format!(
                "train_fraction must be in (0,1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSplits {
    pub train: Vec<LabeledArticle>,
    pub validation: Vec<LabeledArticle>,
    pub test: Vec<LabeledArticle>,
}

impl CorpusSplits {
    /// Validation and test together, in original corpus order.
    pub fn holdout(&self) -> Vec<LabeledArticle> {
        let mut all = self.validation.clone();
        all.extend(self.test.iter().cloned());
        all
    }
}

/// Sizes (train, validation, test) for a corpus of `n` items.
pub fn split_sizes(n: usize, train_fraction: f64) -> (usize, usize, usize) {
    // the epsilon keeps e.g. 10 * 0.9 from flooring to 8
    let train = ((n as f64) * train_fraction + 1e-9).floor() as usize;
    let train = train.min(n);
    let rest = n - train;
    let validation = rest / 2;
    (train, validation, rest - validation)
}

type StratumKey = (Label, Option<String>);

fn stratum_key(item: &LabeledArticle, by_category: bool) -> StratumKey {
    let cat = if by_category { item.category.clone() } else { None };
    (item.label, cat)
}

/// Integer allocation matrix `[split][stratum]` whose row sums are the split
/// sizes, whose column sums are the stratum sizes, and whose every cell is the
/// floor or ceiling of the proportional target `split * stratum / n`.
///
/// Cells start at the floor; the leftover units are placed by a unit-capacity
/// max-flow between rows and columns with a non-zero fractional part. An
/// integral solution always exists because the fractional parts themselves are
/// a feasible fractional flow.
pub(crate) fn allocate(split_sizes: &[usize], strata: &[usize]) -> Vec<Vec<usize>> {
    let n: usize = strata.iter().sum();
    debug_assert_eq!(n, split_sizes.iter().sum::<usize>());
    let rows = split_sizes.len();
    let cols = strata.len();
    let mut alloc = vec![vec![0usize; cols]; rows];
    if n == 0 {
        return alloc;
    }
    let mut frac = vec![vec![0usize; cols]; rows];
    for j in 0..rows {
        for k in 0..cols {
            let prod = split_sizes[j] * strata[k];
            alloc[j][k] = prod / n;
            frac[j][k] = prod % n;
        }
    }
    let mut row_need: Vec<usize> = (0..rows)
        .map(|j| split_sizes[j] - alloc[j].iter().sum::<usize>())
        .collect();
    let mut col_need: Vec<usize> = (0..cols)
        .map(|k| strata[k] - (0..rows).map(|j| alloc[j][k]).sum::<usize>())
        .collect();
    // extra[j][k] == 1 when the ceiling was taken
    let mut extra = vec![vec![false; cols]; rows];

    // candidate columns per row, larger fractional part first
    let order: Vec<Vec<usize>> = (0..rows)
        .map(|j| {
            let mut ks: Vec<usize> = (0..cols).filter(|&k| frac[j][k] > 0).collect();
            ks.sort_by(|&a, &b| frac[j][b].cmp(&frac[j][a]).then(a.cmp(&b)));
            ks
        })
        .collect();

    fn augment(
        j: usize,
        order: &[Vec<usize>],
        extra: &mut [Vec<bool>],
        col_need: &mut [usize],
        visited: &mut [bool],
    ) -> bool {
        for &k in &order[j] {
            if extra[j][k] || visited[k] {
                continue;
            }
            visited[k] = true;
            if col_need[k] > 0 {
                col_need[k] -= 1;
                extra[j][k] = true;
                return true;
            }
            // reroute a unit that another row placed in column k
            for j2 in 0..extra.len() {
                if j2 != j && extra[j2][k] {
                    extra[j2][k] = false;
                    if augment(j2, order, extra, col_need, visited) {
                        extra[j][k] = true;
                        return true;
                    }
                    extra[j2][k] = true;
                }
            }
        }
        false
    }

    for j in 0..rows {
        while row_need[j] > 0 {
            let mut visited = vec![false; cols];
            let ok = augment(j, &order, &mut extra, &mut col_need, &mut visited);
            assert!(ok, "controlled rounding always has an integral solution");
            row_need[j] -= 1;
        }
    }
    for j in 0..rows {
        for k in 0..cols {
            if extra[j][k] {
                alloc[j][k] += 1;
            }
        }
    }
    alloc
}

/// Stratified partition into groups of the given sizes. Labels are allocated
/// first, then categories within each label, so per-label counts stay within
/// one item of their target even when stratifying by category. Items keep
/// their original relative order inside each group.
fn partition_stratified(
    items: &[LabeledArticle],
    sizes: &[usize],
    by_category: bool,
    seed: u64,
) -> Vec<Vec<LabeledArticle>> {
    let mut strata: BTreeMap<Label, BTreeMap<StratumKey, Vec<usize>>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        strata
            .entry(item.label)
            .or_default()
            .entry(stratum_key(item, by_category))
            .or_default()
            .push(i);
    }
    let label_sizes: Vec<usize> = strata.values().map(|m| m.values().map(Vec::len).sum()).collect();
    let label_alloc = allocate(sizes, &label_sizes);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut group_of = vec![0usize; items.len()];
    for (l, cats) in strata.values().enumerate() {
        let row_sizes: Vec<usize> = label_alloc.iter().map(|row| row[l]).collect();
        let cat_sizes: Vec<usize> = cats.values().map(Vec::len).collect();
        let alloc = allocate(&row_sizes, &cat_sizes);
        for (k, members) in cats.values().enumerate() {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            let mut cursor = 0;
            for (j, row) in alloc.iter().enumerate() {
                for &idx in &shuffled[cursor..cursor + row[k]] {
                    group_of[idx] = j;
                }
                cursor += row[k];
            }
        }
    }
    let mut groups = vec![Vec::new(); sizes.len()];
    for (i, item) in items.iter().enumerate() {
        groups[group_of[i]].push(item.clone());
    }
    groups
}

/// Stratified train/validation/test split, deterministic given the seed.
pub fn stratified_split(corpus: &[LabeledArticle], spec: &SplitSpec) -> Result<CorpusSplits, CorpusError> {
    spec.validate()?;
    let (pos, neg) = label_counts(corpus);
    if pos == 0 || neg == 0 {
        return Err(CorpusError::MissingLabel);
    }
    let (train, validation, test) = split_sizes(corpus.len(), spec.train_fraction);
    if train == 0 || validation == 0 || test == 0 {
        return Err(CorpusError::SplitTooSmall {
            size: corpus.len(),
            train,
            validation,
            test,
        });
    }
    let mut groups = partition_stratified(corpus, &[train, validation, test], spec.stratify_by_category, spec.seed);
    let test = groups.pop().unwrap();
    let validation = groups.pop().unwrap();
    let train = groups.pop().unwrap();
    Ok(CorpusSplits { train, validation, test })
}

/// Re-draws the validation/test halves of a held-out set. Validation gets the
/// floor of half.
pub fn split_holdout(
    holdout: &[LabeledArticle],
    by_category: bool,
    seed: u64,
) -> Result<(Vec<LabeledArticle>, Vec<LabeledArticle>), CorpusError> {
    let validation = holdout.len() / 2;
    let test = holdout.len() - validation;
    if validation == 0 {
        return Err(CorpusError::SplitTooSmall {
            size: holdout.len(),
            train: 0,
            validation,
            test,
        });
    }
    let mut groups = partition_stratified(holdout, &[validation, test], by_category, seed);
    let test = groups.pop().unwrap();
    let validation = groups.pop().unwrap();
    Ok((validation, test))
}

/// Duplicates minority-label items (sampling with replacement) until both
/// labels have equal counts. Originals come first, in input order.
pub fn upsample_minority(train: &[LabeledArticle], seed: u64) -> Result<Vec<LabeledArticle>, CorpusError> {
    let (pos, neg) = label_counts(train);
    if pos == 0 || neg == 0 {
        return Err(CorpusError::MissingLabel);
    }
    let mut out = train.to_vec();
    if pos == neg {
        return Ok(out);
    }
    let minority = if pos < neg { Label::SuspectAdverse } else { Label::NotSuspect };
    let pool: Vec<&LabeledArticle> = train.iter().filter(|i| i.label == minority).collect();
    let missing = pos.max(neg) - pos.min(neg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..missing {
        out.push(pool[rng.gen_range(0..pool.len())].clone());
    }
    Ok(out)
}
