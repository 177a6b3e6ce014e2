//! Gaussian naive Bayes.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{load_blob, Classifier, ModelFamily, ParamReader, Params};
use crate::error::{Error, Result};
use crate::tune::SearchSpace;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianNb {
    /// `k x F` class means.
    pub theta: DMatrix<f64>,
    /// `k x F` class variances including the smoothing term.
    pub var: DMatrix<f64>,
    pub log_prior: Vec<f64>,
}

pub fn fit_gnb(x: &DMatrix<f64>, y: &[usize], k: usize, var_smoothing: f64) -> GaussianNb {
    let (n, f) = x.shape();
    let mut max_var: f64 = 0.0;
    for j in 0..f {
        let col = x.column(j);
        let m = col.mean();
        max_var = max_var.max(col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64);
    }
    let eps = var_smoothing * max_var;
    let mut count = vec![0usize; k];
    let mut theta: DMatrix<f64> = DMatrix::zeros(k, f);
    let mut var: DMatrix<f64> = DMatrix::zeros(k, f);
    for (i, &c) in y.iter().enumerate() {
        count[c] += 1;
        for j in 0..f {
            theta[(c, j)] += x[(i, j)];
        }
    }
    for c in 0..k {
        for j in 0..f {
            theta[(c, j)] /= count[c] as f64;
        }
    }
    for (i, &c) in y.iter().enumerate() {
        for j in 0..f {
            var[(c, j)] += (x[(i, j)] - theta[(c, j)]).powi(2);
        }
    }
    for c in 0..k {
        for j in 0..f {
            var[(c, j)] = var[(c, j)] / count[c] as f64 + eps;
        }
    }
    let log_prior = count.iter().map(|&m| (m as f64 / n as f64).ln()).collect();
    GaussianNb { theta, var, log_prior }
}

impl GaussianNb {
    /// Unnormalized log posterior per class.
    pub fn joint_log_likelihood(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let k = self.log_prior.len();
        DMatrix::from_fn(x.nrows(), k, |r, c| {
            let mut ll = self.log_prior[c];
            for j in 0..x.ncols() {
                let v = self.var[(c, j)];
                ll -= 0.5 * (2.0 * std::f64::consts::PI * v).ln() + (x[(r, j)] - self.theta[(c, j)]).powi(2) / (2.0 * v);
            }
            ll
        })
    }
}

impl Classifier for GaussianNb {
    fn n_features(&self) -> usize {
        self.theta.ncols()
    }

    fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        Some(super::softmax_rows(&self.joint_log_likelihood(x)))
    }

    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        super::argmax_rows(&self.joint_log_likelihood(x))
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("naive bayes serializes")
    }
}

pub struct GaussianNbFamily;

impl ModelFamily for GaussianNbFamily {
    fn name(&self) -> &str {
        "gaussian_nb"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new().log_real("var_smoothing", 1e-10, 1e-6)
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        let mut r = ParamReader::new(self.name(), params);
        let vs = r.real("var_smoothing", 1e-9)?;
        r.finish()?;
        if !(vs >= 0.0) {
            return Err(Error::Config(format!("var_smoothing must be >= 0, got {vs}")));
        }
        let m = fit_gnb(x, y, k, vs);
        if m.var.iter().any(|&v| v <= 0.0) {
            return Err(Error::Degenerate("gaussian_nb: zero variance in every feature".into()));
        }
        Ok(Box::new(m))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<GaussianNb>(blob)
    }
}
