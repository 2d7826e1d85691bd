use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Criterion, ForestParams};

/// Splits must reduce impurity by more than this to be kept. Guards against
/// floating-point residue on splits that change nothing.
pub const MIN_IMPURITY_DECREASE: f64 = 1e-13;

/// Node impurity for a binary class count.
pub fn impurity(n_pos: usize, n_neg: usize, criterion: Criterion) -> f64 {
    let n = (n_pos + n_neg) as f64;
    if n == 0.0 {
        return 0.0;
    }
    let p = n_pos as f64 / n;
    let q = n_neg as f64 / n;
    match criterion {
        Criterion::Gini => 1.0 - p * p - q * q,
        Criterion::Entropy => {
            let h = |x: f64| if x > 0.0 { -x * x.log2() } else { 0.0 };
            h(p) + h(q)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub feature: usize,
    pub threshold: f64,
    pub decrease: f64,
}

impl Split {
    // Larger decrease wins; ties go to the lower feature, then lower threshold.
    fn beats(&self, other: &Split) -> bool {
        if self.decrease != other.decrease {
            return self.decrease > other.decrease;
        }
        if self.feature != other.feature {
            return self.feature < other.feature;
        }
        self.threshold < other.threshold
    }
}

/// Row-major feature matrix with binary labels.
#[derive(Debug, Clone)]
pub struct Samples<'a> {
    pub x: &'a [f64],
    pub y: &'a [bool],
    pub n_features: usize,
}

impl Samples<'_> {
    pub fn value(&self, row: usize, feature: usize) -> f64 {
        self.x[row * self.n_features + feature]
    }

    fn counts(&self, rows: &[usize]) -> (usize, usize) {
        let pos = rows.iter().filter(|&&r| self.y[r]).count();
        (pos, rows.len() - pos)
    }
}

/// Best threshold on a single feature, or `None` when the feature is
/// constant over `rows`. The returned decrease may be zero or negative.
fn best_on_feature(data: &Samples, rows: &[usize], feature: usize, criterion: Criterion, scratch: &mut Vec<(f64, bool)>) -> Option<Split> {
    scratch.clear();
    scratch.extend(rows.iter().map(|&r| (data.value(r, feature), data.y[r])));
    scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    if scratch.first()?.0 == scratch.last()?.0 {
        return None;
    }
    let n = scratch.len();
    let total_pos = scratch.iter().filter(|s| s.1).count();
    let parent = impurity(total_pos, n - total_pos, criterion);
    let mut best: Option<Split> = None;
    let mut left_pos = 0;
    for i in 0..n - 1 {
        if scratch[i].1 {
            left_pos += 1;
        }
        let (lo, hi) = (scratch[i].0, scratch[i + 1].0);
        if lo == hi {
            continue;
        }
        let n_left = i + 1;
        let n_right = n - n_left;
        let right_pos = total_pos - left_pos;
        let child = (n_left as f64 / n as f64) * impurity(left_pos, n_left - left_pos, criterion)
            + (n_right as f64 / n as f64) * impurity(right_pos, n_right - right_pos, criterion);
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi || !threshold.is_finite() {
            threshold = lo;
        }
        let cand = Split { feature, threshold, decrease: parent - child };
        if best.as_ref().is_none_or(|b| cand.beats(b)) {
            best = Some(cand);
        }
    }
    best
}

/// Best split of `rows` over the given features. Thresholds are midpoints
/// between consecutive distinct values; samples with `value <= threshold`
/// go left. Returns `None` if no split decreases impurity.
pub fn best_split(data: &Samples, rows: &[usize], features: &[usize], criterion: Criterion) -> Option<Split> {
    let mut scratch = Vec::with_capacity(rows.len());
    let mut best: Option<Split> = None;
    for &f in features {
        if let Some(s) = best_on_feature(data, rows, f, criterion, &mut scratch) {
            if best.as_ref().is_none_or(|b| s.beats(b)) {
                best = Some(s);
            }
        }
    }
    best.filter(|s| s.decrease > MIN_IMPURITY_DECREASE)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TreeNode {
    Internal { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { n_pos: usize, n_neg: usize },
}

/// A fitted tree stored as a node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn leaf_for(&self, features: &[f64]) -> (usize, usize) {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                TreeNode::Internal { feature, threshold, left, right } => {
                    i = if features[feature] <= threshold { left } else { right };
                }
                TreeNode::Leaf { n_pos, n_neg } => return (n_pos, n_neg),
            }
        }
    }

    /// Positive fraction at the leaf reached by `features`.
    pub fn predict(&self, features: &[f64]) -> f64 {
        let (p, n) = self.leaf_for(features);
        p as f64 / (p + n) as f64
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match nodes[i] {
                TreeNode::Internal { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
                TreeNode::Leaf { .. } => 0,
            }
        }
        walk(&self.nodes, 0)
    }

    /// Features used by at least one split.
    pub fn split_features(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes.iter().filter_map(|n| match n {
            TreeNode::Internal { feature, .. } => Some(*feature),
            TreeNode::Leaf { .. } => None,
        })
    }
}

pub(crate) struct TreeBuilder<'a, R: Rng> {
    data: &'a Samples<'a>,
    params: &'a ForestParams,
    rng: &'a mut R,
    nodes: Vec<TreeNode>,
    scratch: Vec<(f64, bool)>,
    feature_order: Vec<usize>,
}

impl<'a, R: Rng> TreeBuilder<'a, R> {
    pub(crate) fn new(data: &'a Samples<'a>, params: &'a ForestParams, rng: &'a mut R) -> Self {
        TreeBuilder {
            data,
            params,
            rng,
            nodes: Vec::new(),
            scratch: Vec::new(),
            feature_order: (0..data.n_features).collect(),
        }
    }

    pub(crate) fn build(mut self, rows: &mut [usize]) -> Tree {
        self.grow(rows, 0);
        Tree { nodes: self.nodes }
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let (n_pos, n_neg) = self.data.counts(rows);
        self.nodes.push(TreeNode::Leaf { n_pos, n_neg });

        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || rows.len() < self.params.min_samples_split || n_pos == 0 || n_neg == 0 {
            return id;
        }
        let Some(split) = self.choose_split(rows) else {
            return id;
        };

        let data = self.data;
        let mut mid = 0;
        for i in 0..rows.len() {
            if data.value(rows[i], split.feature) <= split.threshold {
                rows.swap(i, mid);
                mid += 1;
            }
        }
        let (left_rows, right_rows) = rows.split_at_mut(mid);
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[id] = TreeNode::Internal { feature: split.feature, threshold: split.threshold, left, right };
        id
    }

    // Draws features in random order until `k` non-constant ones have been
    // examined, then keeps the best split among them.
    fn choose_split(&mut self, rows: &[usize]) -> Option<Split> {
        let d = self.data.n_features;
        let k = self.params.max_features.count(d);
        for i in 0..d {
            let j = self.rng.random_range(i..d);
            self.feature_order.swap(i, j);
        }
        let mut best: Option<Split> = None;
        let mut visited = 0;
        for idx in 0..d {
            if visited == k {
                break;
            }
            let f = self.feature_order[idx];
            if let Some(s) = best_on_feature(self.data, rows, f, self.params.criterion, &mut self.scratch) {
                visited += 1;
                if best.as_ref().is_none_or(|b| s.beats(b)) {
                    best = Some(s);
                }
            }
        }
        best.filter(|s| s.decrease > MIN_IMPURITY_DECREASE)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impurity_cases() {
        assert_eq!(impurity(0, 7, Criterion::Gini), 0.0);
        assert_eq!(impurity(5, 5, Criterion::Gini), 0.5);
        assert_eq!(impurity(3, 1, Criterion::Gini), 0.375);
        assert_eq!(impurity(5, 5, Criterion::Entropy), 1.0);
        assert_eq!(impurity(0, 3, Criterion::Entropy), 0.0);
        let h = impurity(3, 1, Criterion::Entropy);
        assert!((h - (-(0.75f64 * 0.75f64.log2()) - 0.25 * 0.25f64.log2())).abs() < 1e-15);
    }

    #[test]
    fn one_dimensional_split() {
        let x = [0.1, 0.2, 0.8, 0.9];
        let y = [false, false, true, true];
        let data = Samples { x: &x, y: &y, n_features: 1 };
        let s = best_split(&data, &[0, 1, 2, 3], &[0], Criterion::Gini).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
        assert_eq!(s.decrease, 0.5);
    }

    #[test]
    fn pure_node_has_no_split() {
        let x = [0.1, 0.2, 0.3];
        let y = [true; 3];
        let data = Samples { x: &x, y: &y, n_features: 1 };
        assert!(best_split(&data, &[0, 1, 2], &[0], Criterion::Gini).is_none());
    }

    #[test]
    fn ties_prefer_lower_feature() {
        // both features separate perfectly with the same decrease
        let x = [0.0, 10.0, 0.0, 10.0, 1.0, 20.0, 1.0, 20.0];
        let y = [false, false, true, true];
        let data = Samples { x: &x, y: &y, n_features: 2 };
        let s = best_split(&data, &[0, 1, 2, 3], &[1, 0], Criterion::Gini).unwrap();
        assert_eq!(s.feature, 0);
        assert_eq!(s.threshold, 0.5);
    }

    #[test]
    fn constant_feature_is_skipped() {
        let x = [1.0, 1.0, 1.0, 1.0];
        let y = [false, true, false, true];
        let data = Samples { x: &x, y: &y, n_features: 1 };
        assert!(best_split(&data, &[0, 1, 2, 3], &[0], Criterion::Entropy).is_none());
    }
}
