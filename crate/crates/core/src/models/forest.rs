//! Decision tree, random forest and extra trees.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tree::{grow, normalize, Criterion, MaxFeatures, Presorted, SplitRule, Targets, Tree, TreeParams};
use super::{balanced_weights, load_blob, positive_usize, Classifier, ModelFamily, ParamReader, Params};
use crate::error::Result;
use crate::seed::{derive_seed, rng_from};
use crate::tune::SearchSpace;

/// Tree-building options shared by the three tree families.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    pub balanced: bool,
}

fn read_tree_params(r: &mut ParamReader<'_>, max_features: &str, split_rule: SplitRule) -> Result<TreeParams> {
    let criterion = match r.cat("criterion", "gini", &["gini", "entropy"])?.as_str() {
        "entropy" => Criterion::Entropy,
        _ => Criterion::Gini,
    };
    let max_depth = match r.opt_int("max_depth")? {
        Some(d) => Some(positive_usize(d, "max_depth", 1)?),
        None => None,
    };
    let min_samples_split = positive_usize(r.int("min_samples_split", 2)?, "min_samples_split", 2)?;
    let min_samples_leaf = positive_usize(r.int("min_samples_leaf", 1)?, "min_samples_leaf", 1)?;
    let max_features = match r.cat("max_features", max_features, &["sqrt", "log2", "all"])?.as_str() {
        "sqrt" => MaxFeatures::Sqrt,
        "log2" => MaxFeatures::Log2,
        _ => MaxFeatures::All,
    };
    Ok(TreeParams { criterion, max_depth, min_samples_split, min_samples_leaf, max_features, split_rule })
}

fn read_class_weight(r: &mut ParamReader<'_>) -> Result<bool> {
    Ok(r.cat("class_weight", "none", &["none", "balanced"])? == "balanced")
}

/// Averaged class-distribution trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeEnsemble {
    pub trees: Vec<Tree>,
    pub n_features: usize,
    pub n_classes: usize,
}

/// Fits `n_estimators` classification trees. Tree `t` uses its own RNG
/// stream derived from `seed` and `t`.
pub fn fit_forest(p: &ForestParams, x: &DMatrix<f64>, y: &[usize], n_classes: usize, seed: u64) -> TreeEnsemble {
    let n = x.nrows();
    let presorted = (p.tree.split_rule == SplitRule::Best).then(|| Presorted::new(x));
    let base_w = if p.balanced { balanced_weights(y, n_classes) } else { vec![1.0; n] };
    let targets = Targets::Classes { y, n_classes };
    let all_rows: Vec<usize> = (0..n).collect();
    let trees = (0..p.n_estimators)
        .map(|t| {
            let mut rng = rng_from(derive_seed(seed, &["tree".into(), t.into()]));
            if p.bootstrap {
                let mut counts = vec![0u32; n];
                for _ in 0..n {
                    counts[rng.random_range(0..n)] += 1;
                }
                let rows: Vec<usize> = (0..n).filter(|&i| counts[i] > 0).collect();
                let w: Vec<f64> = (0..n).map(|i| base_w[i] * f64::from(counts[i])).collect();
                grow(&p.tree, x, presorted.as_ref(), &targets, &rows, &w, &mut rng)
            } else {
                grow(&p.tree, x, presorted.as_ref(), &targets, &all_rows, &base_w, &mut rng)
            }
        })
        .collect();
    TreeEnsemble { trees, n_features: x.ncols(), n_classes }
}

impl Classifier for TreeEnsemble {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x.nrows(), self.n_classes);
        for tree in &self.trees {
            for r in 0..x.nrows() {
                for (c, v) in tree.leaf_value(x, r).iter().enumerate() {
                    out[(r, c)] += v;
                }
            }
        }
        out /= self.trees.len() as f64;
        Some(out)
    }

    fn importance(&self) -> Option<Vec<f64>> {
        let mut total = vec![0.0; self.n_features];
        for tree in &self.trees {
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
        serde_json::to_value(self).expect("tree ensemble serializes")
    }
}

fn tree_space(space: SearchSpace) -> SearchSpace {
    space
        .int("max_depth", 3, 30)
        .int("min_samples_split", 2, 20)
        .int("min_samples_leaf", 1, 20)
        .categorical("criterion", &["gini", "entropy"])
}

pub struct DecisionTreeFamily;

impl ModelFamily for DecisionTreeFamily {
    fn name(&self) -> &str {
        "decision_tree"
    }

    fn search_space(&self) -> SearchSpace {
        tree_space(SearchSpace::new())
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        let mut r = ParamReader::new(self.name(), params);
        let tree = read_tree_params(&mut r, "all", SplitRule::Best)?;
        let balanced = read_class_weight(&mut r)?;
        r.finish()?;
        let p = ForestParams { n_estimators: 1, tree, bootstrap: false, balanced };
        Ok(Box::new(fit_forest(&p, x, y, k, seed)))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<TreeEnsemble>(blob)
    }
}

fn read_forest(family: &str, params: &Params, bootstrap: bool, rule: SplitRule) -> Result<ForestParams> {
    let mut r = ParamReader::new(family, params);
    let n_estimators = positive_usize(r.int("n_estimators", 100)?, "n_estimators", 1)?;
    let tree = read_tree_params(&mut r, "sqrt", rule)?;
    let balanced = read_class_weight(&mut r)?;
    r.finish()?;
    Ok(ForestParams { n_estimators, tree, bootstrap, balanced })
}

pub struct RandomForestFamily;

impl ModelFamily for RandomForestFamily {
    fn name(&self) -> &str {
        "random_forest"
    }

    fn search_space(&self) -> SearchSpace {
        tree_space(SearchSpace::new().int("n_estimators", 50, 500)).categorical("max_features", &["sqrt", "log2", "all"])
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        let p = read_forest(self.name(), params, true, SplitRule::Best)?;
        Ok(Box::new(fit_forest(&p, x, y, k, seed)))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<TreeEnsemble>(blob)
    }
}

pub struct ExtraTreesFamily;

impl ModelFamily for ExtraTreesFamily {
    fn name(&self) -> &str {
        "extra_trees"
    }

    fn search_space(&self) -> SearchSpace {
        tree_space(SearchSpace::new().int("n_estimators", 50, 500))
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, seed: u64) -> Result<Box<dyn Classifier>> {
        let p = read_forest(self.name(), params, false, SplitRule::Random)?;
        Ok(Box::new(fit_forest(&p, x, y, k, seed)))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<TreeEnsemble>(blob)
    }
}
