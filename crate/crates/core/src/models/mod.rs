//! Classifier registry and the uniform fit / predict / probability /
//! importance contract.
//!
//! Families implement [`ModelFamily`]; fitted models implement
//! [`Classifier`] over *local* class indices `0..k` for the classes seen in
//! training. [`FittedModel`] maps those back to the task's global label
//! space and always returns probability matrices with one column per global
//! class.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tune::SearchSpace;

pub mod baseline;
pub mod boosting;
pub mod forest;
pub mod knn;
pub mod linear;
pub mod logistic;
pub mod naive_bayes;
pub mod plsda;
pub mod tree;

/// A single hyperparameter value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Real(f64),
    Cat(String),
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Real(v) => write!(f, "{v}"),
            ParamValue::Cat(v) => f.write_str(v),
        }
    }
}

pub type Params = BTreeMap<String, ParamValue>;

/// Model family name, hyperparameters and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub hyperparams: Params,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into(), hyperparams: Params::new(), seed: 0 }
    }

    pub fn with_param(mut self, key: &str, value: ParamValue) -> Self {
        self.hyperparams.insert(key.to_string(), value);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Typed access to a parameter map that rejects unknown keys.
pub struct ParamReader<'a> {
    params: &'a Params,
    used: BTreeSet<&'a str>,
    family: &'a str,
}

impl<'a> ParamReader<'a> {
    pub fn new(family: &'a str, params: &'a Params) -> Self {
        Self { params, used: BTreeSet::new(), family }
    }

    fn get(&mut self, key: &'a str) -> Option<&'a ParamValue> {
        self.used.insert(key);
        self.params.get(key)
    }

    fn bad(&self, key: &str, want: &str) -> Error {
        Error::Config(format!("{}: parameter {key} must be {want}", self.family))
    }

    pub fn int(&mut self, key: &'a str, default: i64) -> Result<i64> {
        match self.get(key) {
            None => Ok(default),
            Some(ParamValue::Int(v)) => Ok(*v),
            Some(ParamValue::Real(v)) if v.fract() == 0.0 => Ok(*v as i64),
            Some(_) => Err(self.bad(key, "an integer")),
        }
    }

    pub fn opt_int(&mut self, key: &'a str) -> Result<Option<i64>> {
        match self.get(key) {
            None => Ok(None),
            Some(ParamValue::Cat(s)) if s == "none" => Ok(None),
            Some(ParamValue::Int(v)) => Ok(Some(*v)),
            Some(ParamValue::Real(v)) if v.fract() == 0.0 => Ok(Some(*v as i64)),
            Some(_) => Err(self.bad(key, "an integer or \"none\"")),
        }
    }

    pub fn real(&mut self, key: &'a str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(ParamValue::Real(v)) => Ok(*v),
            Some(ParamValue::Int(v)) => Ok(*v as f64),
            Some(_) => Err(self.bad(key, "a number")),
        }
    }

    pub fn cat(&mut self, key: &'a str, default: &str, allowed: &[&str]) -> Result<String> {
        let v = match self.get(key) {
            None => default.to_string(),
            Some(ParamValue::Cat(s)) => s.clone(),
            Some(ParamValue::Int(i)) => i.to_string(),
            Some(ParamValue::Real(_)) => return Err(self.bad(key, "a category")),
        };
        if allowed.contains(&v.as_str()) {
            Ok(v)
        } else {
            Err(self.bad(key, &format!("one of {allowed:?}")))
        }
    }

    pub fn finish(self) -> Result<()> {
        match self.params.keys().find(|k| !self.used.contains(k.as_str())) {
            Some(k) => Err(Error::Config(format!("{}: unknown parameter {k}", self.family))),
            None => Ok(()),
        }
    }
}

pub(crate) fn positive_usize(v: i64, key: &str, min: usize) -> Result<usize> {
    if v < min as i64 {
        return Err(Error::Config(format!("parameter {key} must be >= {min}, got {v}")));
    }
    Ok(v as usize)
}

/// A trained classifier over local class indices `0..k`.
pub trait Classifier: Send + Sync + fmt::Debug {
    fn n_features(&self) -> usize;

    fn n_classes(&self) -> usize;

    /// Row-stochastic `n x k` class probabilities, or `None` when the model
    /// has no probabilistic output.
    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>>;

    /// Hard predictions; defaults to the probability argmax.
    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        match self.predict_proba(x) {
            Some(p) => argmax_rows(&p),
            None => vec![0; x.nrows()],
        }
    }

    /// False when probabilities are a softmax over uncalibrated scores.
    fn calibrated(&self) -> bool {
        true
    }

    /// Native importance per feature, summing to one.
    fn importance(&self) -> Option<Vec<f64>> {
        None
    }

    /// Serialized fitted parameters.
    fn to_blob(&self) -> serde_json::Value;
}

/// A model family: search space, defaults, training and deserialization.
pub trait ModelFamily: Send + Sync {
    fn name(&self) -> &str;

    fn search_space(&self) -> SearchSpace;

    /// Trains on `y` with labels in `0..n_classes`, every class present.
    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], n_classes: usize, seed: u64)
        -> Result<Box<dyn Classifier>>;

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>>;
}

/// Column index of each row maximum; ties go to the lower index.
pub fn argmax_rows(p: &DMatrix<f64>) -> Vec<usize> {
    (0..p.nrows())
        .map(|r| {
            let mut best = 0;
            for c in 1..p.ncols() {
                if p[(r, c)] > p[(r, best)] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Row-wise softmax of a score matrix.
pub fn softmax_rows(scores: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = scores.clone();
    for r in 0..out.nrows() {
        let max = (0..out.ncols()).map(|c| out[(r, c)]).fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for c in 0..out.ncols() {
            let e = (out[(r, c)] - max).exp();
            out[(r, c)] = e;
            sum += e;
        }
        for c in 0..out.ncols() {
            out[(r, c)] /= sum;
        }
    }
    out
}

/// Name-indexed set of model families.
pub struct Registry {
    families: BTreeMap<String, Arc<dyn ModelFamily>>,
}

impl Registry {
    pub fn empty() -> Self {
        Self { families: BTreeMap::new() }
    }

    /// The nine built-in families.
    pub fn with_builtins() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(forest::DecisionTreeFamily));
        r.register(Arc::new(forest::RandomForestFamily));
        r.register(Arc::new(forest::ExtraTreesFamily));
        r.register(Arc::new(boosting::GradientBoostingFamily));
        r.register(Arc::new(knn::KnnFamily));
        r.register(Arc::new(naive_bayes::GaussianNbFamily));
        r.register(Arc::new(logistic::LogisticRegressionFamily));
        r.register(Arc::new(linear::RidgeFamily));
        r.register(Arc::new(plsda::PlsDaFamily));
        r
    }

    pub fn register(&mut self, family: Arc<dyn ModelFamily>) {
        self.families.insert(family.name().to_string(), family);
    }

    pub fn get(&self, name: &str) -> Result<&Arc<dyn ModelFamily>> {
        self.families
            .get(name)
            .ok_or_else(|| Error::Config(format!("unknown model {name:?}")))
    }

    pub fn names(&self) -> Vec<String> {
        self.families.keys().cloned().collect()
    }
}

/// Process-wide registry of the built-in families.
pub fn builtin() -> &'static Registry {
    static REGISTRY: OnceLock<Registry> = OnceLock::new();
    REGISTRY.get_or_init(Registry::with_builtins)
}

/// Canonical names of the nine built-in families, in report order.
pub const BUILTIN_MODELS: [&str; 9] = [
    "decision_tree",
    "random_forest",
    "extra_trees",
    "gradient_boosting",
    "knn",
    "gaussian_nb",
    "logistic_regression",
    "ridge",
    "plsda",
];

/// A trained model in the task's global label space.
#[derive(Debug, Clone)]
pub struct FittedModel {
    pub spec: ModelSpec,
    /// Global labels seen in training, ascending; local index `i` is `classes[i]`.
    pub classes: Vec<usize>,
    /// Width of the global label space.
    pub n_outputs: usize,
    pub train_time_s: f64,
    pub model_size_bytes: usize,
    inner: Arc<dyn Classifier>,
}

#[derive(Serialize, Deserialize)]
struct ModelBlob {
    spec: ModelSpec,
    classes: Vec<usize>,
    n_outputs: usize,
    params: serde_json::Value,
}

/// Checks that every hyperparameter named in the family's search space
/// lies inside it. `fit` itself accepts any structurally valid value.
pub fn validate_in_space(registry: &Registry, spec: &ModelSpec) -> Result<()> {
    let space = registry.get(&spec.name)?.search_space();
    for (k, v) in &spec.hyperparams {
        if space.params.get(k).is_some_and(|d| !d.contains(v)) {
            return Err(Error::Config(format!("{}: parameter {k}={v} is outside its search space", spec.name)));
        }
    }
    Ok(())
}

/// Trains a model. `y` holds global labels in `0..n_outputs`.
pub fn fit(registry: &Registry, spec: &ModelSpec, x: &DMatrix<f64>, y: &[usize], n_outputs: usize) -> Result<FittedModel> {
    let family = registry.get(&spec.name)?;
    if x.nrows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite value in training matrix"));
    }
    if let Some(bad) = y.iter().find(|&&c| c >= n_outputs) {
        return Err(Error::domain(format!("label {bad} outside 0..{n_outputs}")));
    }
    let classes: Vec<usize> = y.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if classes.len() < 2 {
        return Err(Error::DegenerateLabel(format!(
            "{} needs at least two classes, found {}",
            spec.name,
            classes.len()
        )));
    }
    if x.nrows() < classes.len() {
        return Err(Error::domain("fewer samples than classes"));
    }
    let mut local = vec![0usize; n_outputs];
    for (i, &c) in classes.iter().enumerate() {
        local[c] = i;
    }
    let y_local: Vec<usize> = y.iter().map(|&c| local[c]).collect();
    let start = Instant::now();
    let inner = family.fit(&spec.hyperparams, x, &y_local, classes.len(), spec.seed)?;
    let train_time_s = start.elapsed().as_secs_f64();
    let model_size_bytes = serde_json::to_vec(&inner.to_blob())?.len();
    Ok(FittedModel { spec: spec.clone(), classes, n_outputs, train_time_s, model_size_bytes, inner: Arc::from(inner) })
}

impl FittedModel {
    fn check(&self, x: &DMatrix<f64>) -> Result<()> {
        if x.ncols() != self.inner.n_features() {
            return Err(Error::shape(format!(
                "model trained on {} features, got {}",
                self.inner.n_features(),
                x.ncols()
            )));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.inner.n_features()
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        self.check(x)?;
        Ok(self.inner.predict(x).into_iter().map(|i| self.classes[i]).collect())
    }

    /// Probabilities over the global label space (`n x n_outputs`).
    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
        self.check(x)?;
        Ok(self.inner.predict_proba(x).map(|p| {
            let mut out = DMatrix::zeros(x.nrows(), self.n_outputs);
            for (i, &c) in self.classes.iter().enumerate() {
                out.set_column(c, &p.column(i));
            }
            out
        }))
    }

    pub fn calibrated(&self) -> bool {
        self.inner.calibrated()
    }

    pub fn importance(&self) -> Option<Vec<f64>> {
        self.inner.importance()
    }

    pub fn to_blob(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(ModelBlob {
            spec: self.spec.clone(),
            classes: self.classes.clone(),
            n_outputs: self.n_outputs,
            params: self.inner.to_blob(),
        })?)
    }

    pub fn from_blob(registry: &Registry, blob: &serde_json::Value) -> Result<Self> {
        let b: ModelBlob = serde_json::from_value(blob.clone())?;
        let inner = registry.get(&b.spec.name)?.load(&b.params)?;
        let model_size_bytes = serde_json::to_vec(&b.params)?.len();
        Ok(Self {
            spec: b.spec,
            classes: b.classes,
            n_outputs: b.n_outputs,
            train_time_s: 0.0,
            model_size_bytes,
            inner: Arc::from(inner),
        })
    }
}

pub(crate) fn load_blob<T: serde::de::DeserializeOwned + Classifier + 'static>(
    blob: &serde_json::Value,
) -> Result<Box<dyn Classifier>> {
    Ok(Box::new(serde_json::from_value::<T>(blob.clone())?))
}

/// Per-sample weights inversely proportional to class frequency.
pub(crate) fn balanced_weights(y: &[usize], n_classes: usize) -> Vec<f64> {
    let mut counts = vec![0usize; n_classes];
    for &c in y {
        counts[c] += 1;
    }
    let n = y.len() as f64;
    y.iter().map(|&c| n / (n_classes as f64 * counts[c] as f64)).collect()
}
