//! Standardisation, optional PCA and model fitting, all estimated from
//! training rows only.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, SVD};
use serde::{Deserialize, Serialize};

use crate::balance::BalanceStrategy;
use crate::dataset::{Dataset, Task};
use crate::error::{Error, Result};
use crate::models::{self, FittedModel, ModelSpec, Registry};
use crate::seed::derive_seed;
use crate::transforms::{featurize, BandSubset, GroupMap, SubsetMode};

pub const PIPELINE_VERSION: u32 = 1;
pub const SCALE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerModel {
    pub means: Vec<f64>,
    /// Population standard deviations.
    pub stds: Vec<f64>,
}

pub fn fit_scaler(x: &DMatrix<f64>) -> Result<ScalerModel> {
    if x.nrows() == 0 {
        return Err(Error::domain("cannot fit a scaler on zero rows"));
    }
    let n = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let stds = x
        .column_iter()
        .zip(&means)
        .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    Ok(ScalerModel { means, stds })
}

impl ScalerModel {
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.means.len() {
            return Err(Error::shape(format!("scaler fitted on {} features, got {}", self.means.len(), x.ncols())));
        }
        Ok(DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            let d = if self.stds[c] > SCALE_EPS { self.stds[c] } else { 1.0 };
            (x[(r, c)] - self.means[c]) / d
        }))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `k x F`, orthonormal rows.
    pub components: DMatrix<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub mean: Vec<f64>,
    pub k: usize,
}

pub fn fit_pca(x: &DMatrix<f64>, variance_target: f64) -> Result<PcaModel> {
    if !(variance_target > 0.0 && variance_target <= 1.0) {
        return Err(Error::domain(format!("variance target {variance_target} outside (0, 1]")));
    }
    if x.nrows() < 2 {
        return Err(Error::domain("PCA needs at least two rows"));
    }
    let n = x.nrows() as f64;
    let mean: Vec<f64> = x.column_iter().map(|c| c.sum() / n).collect();
    let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] - mean[c]);
    let svd = SVD::new(centered, false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]).then(a.cmp(&b)));
    let var: Vec<f64> = order.iter().map(|&i| svd.singular_values[i].powi(2)).collect();
    let total: f64 = var.iter().sum();
    let top = var.first().copied().unwrap_or(0.0).sqrt();
    if total <= 0.0 || top <= 1e-10 * x.amax() * n.sqrt() {
        return Err(Error::Degenerate("PCA on a rank-0 matrix (all rows identical)".into()));
    }
    let ratios: Vec<f64> = var.iter().map(|v| v / total).collect();
    let mut k = 0;
    let mut cum = 0.0;
    for r in &ratios {
        k += 1;
        cum += r;
        if cum >= variance_target - 1e-12 {
            break;
        }
    }
    let mut components = DMatrix::zeros(k, x.ncols());
    for (row, &i) in order.iter().take(k).enumerate() {
        let v = v_t.row(i);
        let imax = v.iamax_full().1;
        let sign = if v[imax] < 0.0 { -1.0 } else { 1.0 };
        components.set_row(row, &(v * sign));
    }
    Ok(PcaModel { components, explained_variance_ratio: ratios[..k].to_vec(), mean, k })
}

impl PcaModel {
    pub fn transform(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        if x.ncols() != self.mean.len() {
            return Err(Error::shape(format!("PCA fitted on {} features, got {}", self.mean.len(), x.ncols())));
        }
        let centered = DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| x[(r, c)] - self.mean[c]);
        Ok(centered * self.components.transpose())
    }

    pub fn inverse_transform(&self, scores: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = scores * &self.components;
        for mut row in x.row_iter_mut() {
            row += DVector::from_column_slice(&self.mean).transpose();
        }
        x
    }

    pub fn achieved_ratio(&self) -> f64 {
        self.explained_variance_ratio.iter().sum()
    }
}

fn default_target() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub balance: BalanceStrategy,
    pub use_pca: bool,
    #[serde(default = "default_target")]
    pub pca_variance_target: f64,
    pub model: ModelSpec,
    #[serde(default)]
    pub seed: u64,
}

impl PipelineConfig {
    pub fn new(balance: BalanceStrategy, use_pca: bool, model: ModelSpec) -> Self {
        Self { balance, use_pca, pca_variance_target: 0.95, model, seed: 0 }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pca_variance_target > 0.0 && self.pca_variance_target <= 1.0) {
            return Err(Error::Config(format!("pca_variance_target {} outside (0, 1]", self.pca_variance_target)));
        }
        if self.balance.k_neighbors == 0 {
            return Err(Error::Config("k_neighbors must be >= 1".into()));
        }
        Ok(())
    }
}

/// A trained scaler → PCA → model chain.
#[derive(Debug, Clone)]
pub struct FittedPipeline {
    pub config: PipelineConfig,
    pub scaler: ScalerModel,
    pub pca: Option<PcaModel>,
    pub model: FittedModel,
    /// Training rows after balancing.
    pub n_train: usize,
}

#[derive(Serialize, Deserialize)]
struct PipelineBlob {
    version: u32,
    config: PipelineConfig,
    scaler: ScalerModel,
    pca: Option<PcaModel>,
    n_train: usize,
    model: serde_json::Value,
}

/// Balances, scales, optionally projects and fits on `x`/`y` (global labels
/// in `0..n_outputs`).
pub fn fit_pipeline(
    registry: &Registry,
    cfg: &PipelineConfig,
    x: &DMatrix<f64>,
    y: &[usize],
    n_outputs: usize,
) -> Result<FittedPipeline> {
    cfg.validate()?;
    if x.nrows() == 0 {
        return Err(Error::domain("empty training set"));
    }
    if x.nrows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let balance = BalanceStrategy {
        seed: derive_seed(cfg.seed, &["balance".into(), cfg.balance.seed.into()]),
        ..cfg.balance
    };
    let (xb, yb) = balance.apply(x, y)?;
    let scaler = fit_scaler(&xb)?;
    let xs = scaler.transform(&xb)?;
    let (pca, xm) = if cfg.use_pca {
        let pca = fit_pca(&xs, cfg.pca_variance_target)?;
        let scores = pca.transform(&xs)?;
        (Some(pca), scores)
    } else {
        (None, xs)
    };
    let mut spec = cfg.model.clone();
    spec.seed = derive_seed(cfg.seed, &["model".into(), cfg.model.seed.into()]);
    let mut model = models::fit(registry, &spec, &xm, &yb, n_outputs)?;
    model.spec.seed = cfg.model.seed;
    Ok(FittedPipeline { config: cfg.clone(), scaler, pca, model, n_train: yb.len() })
}

impl FittedPipeline {
    fn features(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let xs = self.scaler.transform(x)?;
        match &self.pca {
            Some(p) => p.transform(&xs),
            None => Ok(xs),
        }
    }

    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        self.model.predict(&self.features(x)?)
    }

    pub fn predict_proba(&self, x: &DMatrix<f64>) -> Result<Option<DMatrix<f64>>> {
        self.model.predict_proba(&self.features(x)?)
    }

    /// Probabilities, or one-hot rows of the hard prediction for models
    /// without probabilities. The flag is true when the fallback was used.
    pub fn proba_or_onehot(&self, x: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
        let f = self.features(x)?;
        if let Some(p) = self.model.predict_proba(&f)? {
            return Ok((p, false));
        }
        let pred = self.model.predict(&f)?;
        Ok((DMatrix::from_fn(x.nrows(), self.model.n_outputs, |r, c| f64::from(u8::from(pred[r] == c))), true))
    }

    pub fn n_outputs(&self) -> usize {
        self.model.n_outputs
    }

    pub fn n_components(&self) -> Option<usize> {
        self.pca.as_ref().map(|p| p.k)
    }

    /// Native importance mapped back to input features. Under PCA the
    /// component importances are spread by squared loadings.
    pub fn input_importance(&self) -> Option<Vec<f64>> {
        let imp = self.model.importance()?;
        Some(match &self.pca {
            None => imp,
            Some(p) => {
                let mut out = vec![0.0; p.components.ncols()];
                for (k, w) in imp.iter().enumerate() {
                    for (f, o) in out.iter_mut().enumerate() {
                        *o += w * p.components[(k, f)].powi(2);
                    }
                }
                out
            }
        })
    }

    pub fn to_blob(&self) -> Result<serde_json::Value> {
        Ok(serde_json::to_value(PipelineBlob {
            version: PIPELINE_VERSION,
            config: self.config.clone(),
            scaler: self.scaler.clone(),
            pca: self.pca.clone(),
            n_train: self.n_train,
            model: self.model.to_blob()?,
        })?)
    }

    pub fn from_blob(registry: &Registry, blob: &serde_json::Value) -> Result<Self> {
        let b: PipelineBlob = serde_json::from_value(blob.clone())?;
        if b.version != PIPELINE_VERSION {
            return Err(Error::Unsupported(format!("pipeline blob version {}", b.version)));
        }
        Ok(Self {
            config: b.config,
            scaler: b.scaler,
            pca: b.pca,
            n_train: b.n_train,
            model: FittedModel::from_blob(registry, &b.model)?,
        })
    }
}

/// Feature matrix with both task labels and sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedData {
    pub x: DMatrix<f64>,
    pub ripeness: Vec<usize>,
    pub firmness: Vec<usize>,
    pub ids: Vec<String>,
    pub group_map: GroupMap,
}

impl PairedData {
    /// Featurizes the given dataset rows.
    pub fn from_dataset(ds: &Dataset, rows: &[usize], subset: Option<&BandSubset>, mode: SubsetMode) -> Result<Self> {
        let (x, group_map) = featurize(ds, rows, subset, mode)?;
        let s = ds.samples();
        Ok(Self {
            x,
            ripeness: rows.iter().map(|&i| s[i].label(Task::Ripeness)).collect(),
            firmness: rows.iter().map(|&i| s[i].label(Task::Firmness)).collect(),
            ids: rows.iter().map(|&i| s[i].sample_id.clone()).collect(),
            group_map,
        })
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn labels(&self, task: Task) -> &[usize] {
        match task {
            Task::Ripeness => &self.ripeness,
            Task::Firmness => &self.firmness,
        }
    }

    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(rows),
            ripeness: rows.iter().map(|&i| self.ripeness[i]).collect(),
            firmness: rows.iter().map(|&i| self.firmness[i]).collect(),
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            group_map: self.group_map.clone(),
        }
    }

    /// Keeps only the listed feature columns.
    pub fn select_features(&self, cols: &[usize]) -> Self {
        Self {
            x: self.x.select_columns(cols),
            group_map: cols.iter().map(|&c| self.group_map[c]).collect(),
            ..self.clone()
        }
    }

    pub fn id_set(&self) -> BTreeSet<&str> {
        self.ids.iter().map(String::as_str).collect()
    }
}

/// One fitted pipeline per task.
#[derive(Debug, Clone)]
pub struct PairedPipelines {
    pub ripeness: FittedPipeline,
    pub firmness: FittedPipeline,
}

impl PairedPipelines {
    pub fn get(&self, task: Task) -> &FittedPipeline {
        match task {
            Task::Ripeness => &self.ripeness,
            Task::Firmness => &self.firmness,
        }
    }
}

/// Fits independent ripeness and firmness pipelines with the same config.
/// Task seeds are derived from the config seed and the task name.
pub fn fit_paired(registry: &Registry, cfg: &PipelineConfig, train: &PairedData) -> Result<PairedPipelines> {
    let fit_task = |task: Task| {
        let c = PipelineConfig { seed: derive_seed(cfg.seed, &[task.as_str().into()]), ..cfg.clone() };
        fit_pipeline(registry, &c, &train.x, train.labels(task), task.n_classes())
    };
    Ok(PairedPipelines { ripeness: fit_task(Task::Ripeness)?, firmness: fit_task(Task::Firmness)? })
}
