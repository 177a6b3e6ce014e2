//! Multiclass gradient boosting with softmax link.
//!
//! Every round fits one regression tree per class to the residuals
//! `y_ik - p_ik` and replaces its leaf values with a single Newton step.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::tree::{grow, normalize, Criterion, MaxFeatures, Presorted, SplitRule, Targets, Tree, TreeParams};
use super::{balanced_weights, load_blob, positive_usize, softmax_rows, Classifier, ModelFamily, ParamReader, Params};
use crate::error::{Error, Result};
use crate::seed::{derive_seed, rng_from};
use crate::tune::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoostingParams {
    pub n_estimators: usize,
    pub learning_rate: f64,
    pub tree: TreeParams,
    pub balanced: bool,
}

impl Default for BoostingParams {
    fn default() -> Self {
        Self {
            n_estimators: 100,
            learning_rate: 0.1,
            tree: TreeParams {
                criterion: Criterion::SquaredError,
                max_depth: Some(3),
                min_samples_split: 2,
                min_samples_leaf: 1,
                max_features: MaxFeatures::All,
                split_rule: SplitRule::Best,
            },
            balanced: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradientBoosting {
    pub init: Vec<f64>,
    pub learning_rate: f64,
    /// `rounds[m][k]` is the tree for class `k` in round `m`.
    pub rounds: Vec<Vec<Tree>>,
    pub n_features: usize,
    /// Weighted mean multinomial deviance on the training set after each round.
    pub train_deviance: Vec<f64>,
}

fn deviance(raw: &DMatrix<f64>, y: &[usize], w: &[f64]) -> f64 {
    let p = softmax_rows(raw);
    let total: f64 = w.iter().sum();
    y.iter()
        .enumerate()
        .map(|(i, &c)| -w[i] * p[(i, c)].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / total
}

pub fn fit_boosting(p: &BoostingParams, x: &DMatrix<f64>, y: &[usize], k: usize, seed: u64) -> GradientBoosting {
    let n = x.nrows();
    let w = if p.balanced { balanced_weights(y, k) } else { vec![1.0; n] };
    let total_w: f64 = w.iter().sum();
    let mut prior = vec![0.0; k];
    for (i, &c) in y.iter().enumerate() {
        prior[c] += w[i] / total_w;
    }
    let init: Vec<f64> = prior.iter().map(|p| p.max(f64::MIN_POSITIVE).ln()).collect();
    let mut raw = DMatrix::from_fn(n, k, |_, c| init[c]);
    let presorted = Presorted::new(x);
    let rows: Vec<usize> = (0..n).collect();
    let scale = (k as f64 - 1.0) / k as f64;
    let mut rounds = Vec::with_capacity(p.n_estimators);
    let mut train_deviance = Vec::with_capacity(p.n_estimators);
    for m in 0..p.n_estimators {
        let prob = softmax_rows(&raw);
        let mut round = Vec::with_capacity(k);
        let mut updates = Vec::with_capacity(k);
        for c in 0..k {
            let resid: Vec<f64> = (0..n).map(|i| f64::from(u8::from(y[i] == c)) - prob[(i, c)]).collect();
            let mut rng = rng_from(derive_seed(seed, &["round".into(), m.into(), c.into()]));
            let targets = Targets::Values(&resid);
            let mut tree = grow(&p.tree, x, Some(&presorted), &targets, &rows, &w, &mut rng);
            let leaves: Vec<usize> = (0..n).map(|i| tree.leaf_of(x, i)).collect();
            let mut num = vec![0.0; tree.nodes.len()];
            let mut den = vec![0.0; tree.nodes.len()];
            for i in 0..n {
                let r = resid[i];
                num[leaves[i]] += w[i] * r;
                den[leaves[i]] += w[i] * r.abs() * (1.0 - r.abs());
            }
            for leaf in 0..tree.nodes.len() {
                let gamma = if den[leaf].abs() < 1e-150 { 0.0 } else { scale * num[leaf] / den[leaf] };
                tree.set_leaf_value(leaf, vec![gamma]);
            }
            let delta: Vec<f64> = leaves.iter().map(|&l| tree_leaf(&tree, l)).collect();
            updates.push(delta);
            round.push(tree);
        }
        for (c, delta) in updates.into_iter().enumerate() {
            for i in 0..n {
                raw[(i, c)] += p.learning_rate * delta[i];
            }
        }
        train_deviance.push(deviance(&raw, y, &w));
        rounds.push(round);
    }
    GradientBoosting { init, learning_rate: p.learning_rate, rounds, n_features: x.ncols(), train_deviance }
}

fn tree_leaf(tree: &Tree, node: usize) -> f64 {
    match &tree.nodes[node] {
        super::tree::Node::Leaf { value, .. } => value.first().copied().unwrap_or(0.0),
        super::tree::Node::Split { .. } => 0.0,
    }
}

impl GradientBoosting {
    pub fn raw_scores(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.init.len();
        let mut raw = DMatrix::from_fn(x.nrows(), k, |_, c| self.init[c]);
        for round in &self.rounds {
            for (c, tree) in round.iter().enumerate() {
                for i in 0..x.nrows() {
                    raw[(i, c)] += self.learning_rate * tree.leaf_value(x, i)[0];
                }
            }
        }
        raw
    }
}

impl Classifier for GradientBoosting {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.init.len()
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        Some(softmax_rows(&self.raw_scores(x)))
    }

    fn importance(&self) -> Option<Vec<f64>> {
        let mut total = vec![0.0; self.n_features];
        for tree in self.rounds.iter().flatten() {
            for (t, v) in total.iter_mut().zip(tree.importance()) {
                *t += v;
            }
        }
        let imp = normalize(&total);
        if imp.iter().all(|&v| v == 0.0) {
            return Some(vec![1.0 / self.n_features as f64; self.n_features]);
        }
        Some(imp)
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("boosting model serializes")
    }
}

pub struct GradientBoostingFamily;

impl GradientBoostingFamily {
    pub fn params(params: &Params) -> Result<BoostingParams> {
        let mut r = ParamReader::new("gradient_boosting", params);
        let d = BoostingParams::default();
        let n_estimators = positive_usize(r.int("n_estimators", 100)?, "n_estimators", 1)?;
        let learning_rate = r.real("learning_rate", d.learning_rate)?;
        if !(learning_rate > 0.0 && learning_rate <= 1.0) {
            return Err(Error::Config(format!("learning_rate must be in (0, 1], got {learning_rate}")));
        }
        let max_depth = match r.opt_int("max_depth")? {
            Some(v) => Some(positive_usize(v, "max_depth", 1)?),
            None if params.contains_key("max_depth") => None,
            None => d.tree.max_depth,
        };
        let min_samples_split = positive_usize(r.int("min_samples_split", 2)?, "min_samples_split", 2)?;
        let min_samples_leaf = positive_usize(r.int("min_samples_leaf", 1)?, "min_samples_leaf", 1)?;
        let balanced = r.cat("class_weight", "none", &["none", "balanced"])? == "balanced";
        r.finish()?;
        Ok(BoostingParams {
            n_estimators,
            learning_rate,
            tree: TreeParams { max_depth, min_samples_split, min_samples_leaf, ..d.tree },
            balanced,
        })
    }
}

impl ModelFamily for GradientBoostingFamily {
    fn name(&self) -> &str {
        "gradient_boosting"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new()
            .int("n_estimators", 50, 500)
            .real("learning_rate", 0.01, 0.3)
            .int("max_depth", 3, 10)
            .int("min_samples_split", 2, 20)
            .int("min_samples_leaf", 1, 20)
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        let p = Self::params(params)?;
        Ok(Box::new(fit_boosting(&p, x, y, k, seed)))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<GradientBoosting>(blob)
    }
}
