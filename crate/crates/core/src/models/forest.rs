//! Random forest of Gini-split decision trees over sparse count features.
//!
//! Each tree is grown on a bootstrap sample with `max_features` candidate
//! features per node drawn from those not constant in the node. A leaf votes
//! with the positive fraction of the (unweighted) training set reaching it,
//! and the forest score is the mean vote.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::vocab::FeatureVector;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Candidate features per node; `None` means `floor(sqrt(d))`.
    pub max_features: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 50,
            max_depth: 8,
            min_samples_split: 2,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: u32,
        /// Values `<= threshold` go left.
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn leaf_of(&self, x: &FeatureVector) -> usize {
        let mut at = 0usize;
        loop {
            match &self.nodes[at] {
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x.get(*feature) as f64 <= *threshold { *left } else { *right } as usize;
                }
                Node::Leaf { .. } => return at,
            }
        }
    }

    pub fn vote(&self, x: &FeatureVector) -> f64 {
        match self.nodes[self.leaf_of(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_of returns leaves"),
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], at: usize) -> usize {
            match &nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left as usize).max(go(nodes, *right as usize)),
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

impl RandomForest {
    pub fn votes(&self, x: &FeatureVector) -> Vec<f64> {
        self.trees.iter().map(|t| t.vote(x)).collect()
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        if self.trees.is_empty() {
            return 0.0;
        }
        (self.votes(x).iter().sum::<f64>() / self.trees.len() as f64).clamp(0.0, 1.0)
    }
}

/// Per-tree scratch space indexed by feature.
struct Scratch {
    count: Vec<u32>,
    min: Vec<u32>,
    max: Vec<u32>,
    slot: Vec<u32>,
}

struct Builder<'a> {
    xs: &'a [FeatureVector],
    ys: &'a [bool],
    weight: Vec<u64>,
    params: &'a ForestParams,
    max_features: usize,
    nodes: Vec<Node>,
    scratch: Scratch,
}

impl Builder<'_> {
    fn totals(&self, samples: &[usize]) -> (u64, u64) {
        samples.iter().fold((0, 0), |(p, n), &s| {
            if self.ys[s] {
                (p + self.weight[s], n)
            } else {
                (p, n + self.weight[s])
            }
        })
    }

    /// Features taking more than one value among the node's samples.
    fn non_constant(&mut self, samples: &[usize]) -> Vec<u32> {
        let sc = &mut self.scratch;
        let mut touched = Vec::new();
        for &s in samples {
            for &(f, c) in &self.xs[s].entries {
                let fi = f as usize;
                if sc.count[fi] == 0 {
                    touched.push(f);
                    sc.min[fi] = c;
                    sc.max[fi] = c;
                } else {
                    sc.min[fi] = sc.min[fi].min(c);
                    sc.max[fi] = sc.max[fi].max(c);
                }
                sc.count[fi] += 1;
            }
        }
        let mut out: Vec<u32> = touched
            .iter()
            .copied()
            .filter(|&f| (sc.count[f as usize] as usize) < samples.len() || sc.min[f as usize] != sc.max[f as usize])
            .collect();
        for &f in &touched {
            sc.count[f as usize] = 0;
        }
        out.sort_unstable();
        out
    }

    /// Best `(gain, feature, threshold)` over the candidate features.
    fn best_split(&mut self, samples: &[usize], features: &[u32], totals: (u64, u64)) -> Option<(f64, u32, f64)> {
        let sc = &mut self.scratch;
        let mut values: Vec<Vec<(u32, u64, u64)>> = vec![Vec::new(); features.len()];
        for (k, &f) in features.iter().enumerate() {
            sc.slot[f as usize] = k as u32;
        }
        for &s in samples {
            let (wp, wn) = if self.ys[s] { (self.weight[s], 0) } else { (0, self.weight[s]) };
            for &(f, c) in &self.xs[s].entries {
                let k = sc.slot[f as usize];
                if k != u32::MAX {
                    values[k as usize].push((c, wp, wn));
                }
            }
        }
        for &f in features {
            sc.slot[f as usize] = u32::MAX;
        }
        let (tp, tn) = totals;
        let total = (tp + tn) as f64;
        let parent = ((tp * tp + tn * tn) as f64) / total;
        let mut best: Option<(f64, u32, f64)> = None;
        for (k, vals) in values.iter_mut().enumerate() {
            vals.sort_unstable_by_key(|v| v.0);
            let nz_pos: u64 = vals.iter().map(|v| v.1).sum();
            let nz_neg: u64 = vals.iter().map(|v| v.2).sum();
            // zeros sit left of every non-zero value
            let mut left = (tp - nz_pos, tn - nz_neg);
            let mut last = 0u32;
            let mut i = 0;
            while i < vals.len() {
                let v = vals[i].0;
                let right = (tp - left.0, tn - left.1);
                let (wl, wr) = ((left.0 + left.1) as f64, (right.0 + right.1) as f64);
                if wl > 0.0 && wr > 0.0 {
                    let score = ((left.0 * left.0 + left.1 * left.1) as f64) / wl
                        + ((right.0 * right.0 + right.1 * right.1) as f64) / wr;
                    let gain = (score - parent) / total;
                    let threshold = (last as f64 + v as f64) / 2.0;
                    if best.is_none_or(|b| gain > b.0) {
                        best = Some((gain, features[k], threshold));
                    }
                }
                while i < vals.len() && vals[i].0 == v {
                    left.0 += vals[i].1;
                    left.1 += vals[i].2;
                    i += 1;
                }
                last = v;
            }
        }
        best
    }

    fn grow(&mut self, samples: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> u32 {
        let id = self.nodes.len() as u32;
        self.nodes.push(Node::Leaf { value: 0.0 });
        let totals = self.totals(&samples);
        let weight = totals.0 + totals.1;
        if depth >= self.params.max_depth
            || totals.0 == 0
            || totals.1 == 0
            || weight < self.params.min_samples_split as u64
        {
            return id;
        }
        let candidates = self.non_constant(&samples);
        if candidates.is_empty() {
            return id;
        }
        let m = self.max_features.min(candidates.len());
        let chosen: Vec<u32> = sample(rng, candidates.len(), m).into_iter().map(|i| candidates[i]).collect();
        let Some((gain, feature, threshold)) = self.best_split(&samples, &chosen, totals) else {
            return id;
        };
        if gain <= 1e-12 {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = samples
            .into_iter()
            .partition(|&s| self.xs[s].get(feature) as f64 <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id as usize] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }
}

fn grow_tree(xs: &[FeatureVector], ys: &[bool], dim: usize, params: &ForestParams, seed: u64, index: usize) -> Tree {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let n = xs.len();
    let mut weight = vec![0u64; n];
    for _ in 0..n {
        weight[rng.gen_range(0..n)] += 1;
    }
    let in_bag: Vec<usize> = (0..n).filter(|&s| weight[s] > 0).collect();
    let max_features = params
        .max_features
        .unwrap_or_else(|| (dim as f64).sqrt().floor() as usize)
        .max(1);
    let mut b = Builder {
        xs,
        ys,
        weight,
        params,
        max_features,
        nodes: Vec::new(),
        scratch: Scratch {
            count: vec![0; dim],
            min: vec![0; dim],
            max: vec![0; dim],
            slot: vec![u32::MAX; dim],
        },
    };
    b.grow(in_bag, 0, &mut rng);
    let mut tree = Tree { nodes: b.nodes };
    let mut reach = vec![(0u64, 0u64); tree.nodes.len()];
    for (x, &y) in xs.iter().zip(ys) {
        let leaf = tree.leaf_of(x);
        reach[leaf].0 += y as u64;
        reach[leaf].1 += 1;
    }
    for (node, (pos, all)) in tree.nodes.iter_mut().zip(reach) {
        if let Node::Leaf { value } = node {
            *value = if all == 0 { 0.0 } else { pos as f64 / all as f64 };
        }
    }
    tree
}

/// Trees are grown in parallel; tree `i` draws from stream `i` of the seeded
/// generator, so the result does not depend on scheduling.
pub fn train(xs: &[FeatureVector], ys: &[bool], dim: usize, params: &ForestParams, seed: u64) -> RandomForest {
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|i| grow_tree(xs, ys, dim, params, seed, i))
        .collect();
    RandomForest { trees }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(entries: &[(u32, u32)]) -> FeatureVector {
        FeatureVector {
            dim: 3,
            entries: entries.to_vec(),
        }
    }

    #[test]
    fn single_feature_split() {
        let xs = vec![fv(&[(0, 1)]), fv(&[(0, 2)]), fv(&[(1, 1)]), fv(&[])];
        let ys = vec![true, true, false, false];
        let params = ForestParams {
            n_trees: 5,
            max_features: Some(3),
            ..Default::default()
        };
        let f = train(&xs, &ys, 3, &params, 3);
        for (x, y) in xs.iter().zip(&ys) {
            let s = f.score(x);
            assert_eq!(s >= 0.5, *y, "score {s}");
        }
        assert!(f.trees.iter().all(|t| t.depth() <= 8));
    }

    #[test]
    fn score_is_mean_vote() {
        let xs: Vec<FeatureVector> = (0..40).map(|i| fv(&[(i % 3, 1 + i % 5)])).collect();
        let ys: Vec<bool> = (0..40).map(|i| i % 3 == 0 || i % 7 == 0).collect();
        let f = train(&xs, &ys, 3, &ForestParams::default(), 11);
        for x in &xs {
            let v = f.votes(x);
            assert_eq!(f.score(x), v.iter().sum::<f64>() / v.len() as f64);
        }
    }
}
