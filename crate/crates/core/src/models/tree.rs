//! CART tree builder shared by the decision tree, both forests and gradient
//! boosting.
//!
//! Classification trees store class distributions in their leaves;
//! regression trees (used by boosting) store one value. Importance is the
//! total weighted impurity decrease per feature.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Gini,
    Entropy,
    SquaredError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn count(self, n_features: usize) -> usize {
        let n = n_features as f64;
        let k = match self {
            MaxFeatures::All => n_features,
            MaxFeatures::Sqrt => n.sqrt().floor() as usize,
            MaxFeatures::Log2 => n.log2().floor() as usize,
        };
        k.clamp(1, n_features.max(1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Exhaustive scan over midpoints between sorted distinct values.
    Best,
    /// One uniform threshold per candidate feature (extremely randomized).
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    pub criterion: Criterion,
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
    pub split_rule: SplitRule,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            criterion: Criterion::Gini,
            max_depth: None,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
            split_rule: SplitRule::Best,
        }
    }
}

pub enum Targets<'a> {
    Classes { y: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

impl Targets<'_> {
    fn stats_len(&self) -> usize {
        match self {
            Targets::Classes { n_classes, .. } => *n_classes,
            Targets::Values(_) => 3,
        }
    }

    #[inline]
    fn add(&self, stats: &mut [f64], row: usize, w: f64) {
        match self {
            Targets::Classes { y, .. } => stats[y[row]] += w,
            Targets::Values(v) => {
                let t = v[row];
                stats[0] += w;
                stats[1] += w * t;
                stats[2] += w * t * t;
            }
        }
    }

    fn weight(&self, stats: &[f64]) -> f64 {
        match self {
            Targets::Classes { .. } => stats.iter().sum(),
            Targets::Values(_) => stats[0],
        }
    }
}

fn impurity(criterion: Criterion, stats: &[f64], total: f64) -> f64 {
    if total <= 0.0 {
        return 0.0;
    }
    match criterion {
        Criterion::Gini => 1.0 - stats.iter().map(|c| (c / total).powi(2)).sum::<f64>(),
        Criterion::Entropy => -stats
            .iter()
            .filter(|&&c| c > 0.0)
            .map(|c| {
                let p = c / total;
                p * p.log2()
            })
            .sum::<f64>(),
        Criterion::SquaredError => {
            let mean = stats[1] / total;
            (stats[2] / total - mean * mean).max(0.0)
        }
    }
}

/// Row orders of every feature, sorted by value then row index.
#[derive(Debug, Clone)]
pub struct Presorted {
    order: Vec<Vec<u32>>,
}

impl Presorted {
    pub fn new(x: &DMatrix<f64>) -> Self {
        let n = x.nrows();
        let order = (0..x.ncols())
            .map(|f| {
                let col = x.column(f);
                let mut idx: Vec<u32> = (0..n as u32).collect();
                idx.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self { order }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: Vec<f64>,
        n_samples: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
        n_samples: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    pub n_features: usize,
    /// Unnormalized weighted impurity decrease per feature.
    pub impurity_decrease: Vec<f64>,
}

impl Tree {
    /// Index of the leaf reached by a row of `x`.
    pub fn leaf_of(&self, x: &DMatrix<f64>, row: usize) -> usize {
        let mut node = 0;
        loop {
            match &self.nodes[node] {
                Node::Leaf { .. } => return node,
                Node::Split { feature, threshold, left, right, .. } => {
                    node = if x[(row, *feature)] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    pub fn leaf_value(&self, x: &DMatrix<f64>, row: usize) -> &[f64] {
        match &self.nodes[self.leaf_of(x, row)] {
            Node::Leaf { value, .. } => value,
            Node::Split { .. } => unreachable!("leaf_of returns leaves"),
        }
    }

    pub fn set_leaf_value(&mut self, node: usize, v: Vec<f64>) {
        if let Node::Leaf { value, .. } = &mut self.nodes[node] {
            *value = v;
        }
    }

    /// Impurity importance normalized to sum to one (all zeros for a stump
    /// without splits).
    pub fn importance(&self) -> Vec<f64> {
        normalize(&self.impurity_decrease)
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }
}

pub(crate) fn normalize(v: &[f64]) -> Vec<f64> {
    let total: f64 = v.iter().sum();
    if total > 0.0 {
        v.iter().map(|x| x / total).collect()
    } else {
        vec![0.0; v.len()]
    }
}

struct Candidate {
    feature: usize,
    threshold: f64,
    improvement: f64,
}

struct Builder<'a> {
    params: TreeParams,
    x: &'a DMatrix<f64>,
    presorted: Option<&'a Presorted>,
    targets: &'a Targets<'a>,
    weights: &'a [f64],
    node_of: Vec<u32>,
    features: Vec<usize>,
    scratch: Vec<u32>,
}

impl Builder<'_> {
    fn node_stats(&self, rows: &[u32]) -> Vec<f64> {
        let mut s = vec![0.0; self.targets.stats_len()];
        for &r in rows {
            self.targets.add(&mut s, r as usize, self.weights[r as usize]);
        }
        s
    }

    fn leaf_value(&self, stats: &[f64]) -> Vec<f64> {
        let w = self.targets.weight(stats);
        match self.targets {
            Targets::Classes { .. } => stats.iter().map(|c| if w > 0.0 { c / w } else { 0.0 }).collect(),
            Targets::Values(_) => vec![if w > 0.0 { stats[1] / w } else { 0.0 }],
        }
    }

    fn is_constant(&self, f: usize, rows: &[u32]) -> bool {
        let col = self.x.column(f);
        let first = col[rows[0] as usize];
        rows.iter().all(|&r| col[r as usize] == first)
    }

    fn candidate_features(&mut self, rows: &[u32], rng: &mut ChaCha8Rng) -> Vec<usize> {
        let n_features = self.x.ncols();
        let mtry = self.params.max_features.count(n_features);
        let mut chosen = Vec::with_capacity(mtry);
        if mtry >= n_features {
            chosen.extend((0..n_features).filter(|&f| !self.is_constant(f, rows)));
            return chosen;
        }
        let mut visited = 0;
        while chosen.len() < mtry && visited < n_features {
            let j = rng.random_range(visited..n_features);
            self.features.swap(visited, j);
            let f = self.features[visited];
            visited += 1;
            if !self.is_constant(f, rows) {
                chosen.push(f);
            }
        }
        chosen.sort_unstable();
        chosen
    }

    fn ordered_rows(&mut self, f: usize, node: u32, rows: &[u32]) -> Vec<u32> {
        match self.presorted {
            Some(p) => {
                self.scratch.clear();
                let node_of = &self.node_of;
                self.scratch.extend(p.order[f].iter().copied().filter(|&r| node_of[r as usize] == node));
                std::mem::take(&mut self.scratch)
            }
            None => {
                let col = self.x.column(f);
                let mut v = rows.to_vec();
                v.sort_by(|&a, &b| col[a as usize].total_cmp(&col[b as usize]).then(a.cmp(&b)));
                v
            }
        }
    }

    fn best_split_on(&mut self, f: usize, node: u32, rows: &[u32], total: &[f64], parent: f64) -> Option<Candidate> {
        let ordered = self.ordered_rows(f, node, rows);
        let col = self.x.column(f);
        let crit = self.params.criterion;
        let min_leaf = self.params.min_samples_leaf;
        let n = ordered.len();
        let w_total = self.targets.weight(total);
        let mut left = vec![0.0; total.len()];
        let mut right = vec![0.0; total.len()];
        let mut best: Option<Candidate> = None;
        for i in 0..n - 1 {
            let r = ordered[i] as usize;
            self.targets.add(&mut left, r, self.weights[r]);
            let (v, next) = (col[r], col[ordered[i + 1] as usize]);
            let n_left = i + 1;
            if v >= next || n_left < min_leaf || n - n_left < min_leaf {
                continue;
            }
            for k in 0..total.len() {
                right[k] = total[k] - left[k];
            }
            let wl = self.targets.weight(&left);
            let wr = w_total - wl;
            let improvement = parent - wl * impurity(crit, &left, wl) - wr * impurity(crit, &right, wr);
            if best.as_ref().is_none_or(|b| improvement > b.improvement) {
                let mut threshold = v + (next - v) / 2.0;
                if threshold >= next {
                    threshold = v;
                }
                best = Some(Candidate { feature: f, threshold, improvement });
            }
        }
        if self.presorted.is_some() {
            self.scratch = ordered;
        }
        best
    }

    fn random_split_on(&self, f: usize, rows: &[u32], total: &[f64], parent: f64, rng: &mut ChaCha8Rng) -> Option<Candidate> {
        let col = self.x.column(f);
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for &r in rows {
            let v = col[r as usize];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        let mut threshold = lo + rng.random::<f64>() * (hi - lo);
        if threshold >= hi {
            threshold = lo;
        }
        let mut left = vec![0.0; total.len()];
        let mut n_left = 0;
        for &r in rows {
            if col[r as usize] <= threshold {
                self.targets.add(&mut left, r as usize, self.weights[r as usize]);
                n_left += 1;
            }
        }
        let min_leaf = self.params.min_samples_leaf;
        if n_left < min_leaf || rows.len() - n_left < min_leaf {
            return None;
        }
        let right: Vec<f64> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
        let w_total = self.targets.weight(total);
        let wl = self.targets.weight(&left);
        let wr = w_total - wl;
        let crit = self.params.criterion;
        let improvement = parent - wl * impurity(crit, &left, wl) - wr * impurity(crit, &right, wr);
        Some(Candidate { feature: f, threshold, improvement })
    }
}

/// Grows one tree on `rows` (distinct row indices of `x`) with per-row
/// `weights` (indexed by row of `x`).
pub fn grow(
    params: &TreeParams,
    x: &DMatrix<f64>,
    presorted: Option<&Presorted>,
    targets: &Targets<'_>,
    rows: &[usize],
    weights: &[f64],
    rng: &mut ChaCha8Rng,
) -> Tree {
    let n_features = x.ncols();
    let mut b = Builder {
        params: *params,
        x,
        presorted,
        targets,
        weights,
        node_of: vec![u32::MAX; x.nrows()],
        features: (0..n_features).collect(),
        scratch: Vec::new(),
    };
    let mut nodes: Vec<Node> = Vec::new();
    let mut importance = vec![0.0; n_features];
    let root_rows: Vec<u32> = rows.iter().map(|&r| r as u32).collect();
    for &r in &root_rows {
        b.node_of[r as usize] = 0;
    }
    nodes.push(Node::Leaf { value: Vec::new(), n_samples: root_rows.len() });
    // (node id, rows, depth)
    let mut stack = vec![(0usize, root_rows, 0usize)];
    while let Some((id, node_rows, depth)) = stack.pop() {
        let stats = b.node_stats(&node_rows);
        let w = targets.weight(&stats);
        let node_impurity = impurity(params.criterion, &stats, w);
        let n = node_rows.len();
        let stop = params.max_depth.is_some_and(|d| depth >= d)
            || n < params.min_samples_split
            || n < 2 * params.min_samples_leaf
            || node_impurity <= 1e-15;
        let mut best: Option<Candidate> = None;
        if !stop {
            let parent = w * node_impurity;
            let candidates = b.candidate_features(&node_rows, rng);
            for f in candidates {
                let c = match params.split_rule {
                    SplitRule::Best => b.best_split_on(f, id as u32, &node_rows, &stats, parent),
                    SplitRule::Random => b.random_split_on(f, &node_rows, &stats, parent, rng),
                };
                if let Some(c) = c {
                    if best.as_ref().is_none_or(|bc| c.improvement > bc.improvement) {
                        best = Some(c);
                    }
                }
            }
        }
        match best {
            Some(c) => {
                let col = x.column(c.feature);
                let (left_rows, right_rows): (Vec<u32>, Vec<u32>) =
                    node_rows.iter().partition(|&&r| col[r as usize] <= c.threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: Vec::new(), n_samples: left_rows.len() });
                nodes.push(Node::Leaf { value: Vec::new(), n_samples: right_rows.len() });
                for &r in &left_rows {
                    b.node_of[r as usize] = left as u32;
                }
                for &r in &right_rows {
                    b.node_of[r as usize] = right as u32;
                }
                importance[c.feature] += c.improvement.max(0.0);
                nodes[id] = Node::Split { feature: c.feature, threshold: c.threshold, left, right, n_samples: n };
                stack.push((right, right_rows, depth + 1));
                stack.push((left, left_rows, depth + 1));
            }
            None => {
                nodes[id] = Node::Leaf { value: b.leaf_value(&stats), n_samples: n };
            }
        }
    }
    Tree { nodes, n_features, impurity_decrease: importance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    fn grow_classes(params: TreeParams, x: &DMatrix<f64>, y: &[usize], k: usize) -> Tree {
        let targets = Targets::Classes { y, n_classes: k };
        let rows: Vec<usize> = (0..x.nrows()).collect();
        let w = vec![1.0; x.nrows()];
        let pre = Presorted::new(x);
        grow(&params, x, Some(&pre), &targets, &rows, &w, &mut rng_from(0))
    }

    #[test]
    fn single_split_on_informative_feature() {
        let x = DMatrix::from_fn(8, 5, |r, c| if c == 3 { r as f64 } else { 1.0 });
        let y: Vec<usize> = (0..8).map(|r| usize::from(r >= 4)).collect();
        let t = grow_classes(TreeParams::default(), &x, &y, 2);
        assert_eq!(t.depth(), 1);
        match &t.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 3);
                assert_eq!(*threshold, 3.5);
            }
            n => panic!("{n:?}"),
        }
        assert_eq!(t.importance(), vec![0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn presorted_and_node_sorting_agree() {
        let mut rng = rng_from(4);
        let x = DMatrix::from_fn(60, 6, |_, _| (rng.random::<f64>() * 10.0).round());
        let y: Vec<usize> = (0..60).map(|r| usize::from(x[(r, 1)] + x[(r, 4)] > 10.0)).collect();
        let targets = Targets::Classes { y: &y, n_classes: 2 };
        let rows: Vec<usize> = (0..60).collect();
        let w = vec![1.0; 60];
        let pre = Presorted::new(&x);
        let p = TreeParams::default();
        let a = grow(&p, &x, Some(&pre), &targets, &rows, &w, &mut rng_from(1));
        let b = grow(&p, &x, None, &targets, &rows, &w, &mut rng_from(1));
        assert_eq!(a, b);
    }

    #[test]
    fn regression_tree_fits_step() {
        let x = DMatrix::from_fn(10, 1, |r, _| r as f64);
        let v: Vec<f64> = (0..10).map(|r| if r < 5 { -1.0 } else { 2.0 }).collect();
        let targets = Targets::Values(&v);
        let rows: Vec<usize> = (0..10).collect();
        let p = TreeParams { criterion: Criterion::SquaredError, max_depth: Some(1), ..Default::default() };
        let t = grow(&p, &x, None, &targets, &rows, &[1.0; 10], &mut rng_from(0));
        assert_eq!(t.leaf_value(&x, 0), &[-1.0]);
        assert_eq!(t.leaf_value(&x, 9), &[2.0]);
    }

    #[test]
    fn min_samples_leaf_is_respected() {
        let x = DMatrix::from_fn(10, 1, |r, _| r as f64);
        let y: Vec<usize> = (0..10).map(|r| usize::from(r == 0)).collect();
        let p = TreeParams { min_samples_leaf: 3, ..Default::default() };
        let t = grow_classes(p, &x, &y, 2);
        for node in &t.nodes {
            if let Node::Leaf { n_samples, .. } = node {
                assert!(*n_samples >= 3);
            }
        }
    }
}
