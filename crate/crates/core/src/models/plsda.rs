//! PLS discriminant analysis: NIPALS PLS2 regression on dummy-coded labels
//! with argmax prediction.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{load_blob, positive_usize, softmax_rows, Classifier, ModelFamily, ParamReader, Params};
use crate::error::Result;
use crate::tune::SearchSpace;

const NIPALS_TOL: f64 = 1e-6;
const NIPALS_MAX_ITER: usize = 500;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlsDa {
    pub x_mean: DVector<f64>,
    pub x_std: DVector<f64>,
    pub y_mean: DVector<f64>,
    pub y_std: DVector<f64>,
    /// `F x K` coefficients in standardized units.
    pub coef: DMatrix<f64>,
    pub n_components: usize,
}

fn column_stats(m: &DMatrix<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = m.nrows() as f64;
    let mean = DVector::from_fn(m.ncols(), |j, _| m.column(j).mean());
    let std = DVector::from_fn(m.ncols(), |j, _| {
        let ss: f64 = m.column(j).iter().map(|v| (v - mean[j]).powi(2)).sum();
        let s = if n > 1.0 { (ss / (n - 1.0)).sqrt() } else { 0.0 };
        if s > 0.0 {
            s
        } else {
            1.0
        }
    });
    (mean, std)
}

/// Components actually fitted for a request of `requested`.
pub fn clamp_components(requested: usize, n_samples: usize, n_features: usize, n_classes: usize) -> usize {
    requested.min(n_samples).min(n_features).min(n_classes).max(1)
}

pub fn fit_plsda(x: &DMatrix<f64>, y: &[usize], k: usize, requested: usize) -> PlsDa {
    let (n, f) = x.shape();
    let n_components = clamp_components(requested, n, f, k);
    let dummy = DMatrix::from_fn(n, k, |i, c| f64::from(u8::from(y[i] == c)));
    let (x_mean, x_std) = column_stats(x);
    let (y_mean, y_std) = column_stats(&dummy);
    let mut xk = DMatrix::from_fn(n, f, |i, j| (x[(i, j)] - x_mean[j]) / x_std[j]);
    let mut yk = DMatrix::from_fn(n, k, |i, c| (dummy[(i, c)] - y_mean[c]) / y_std[c]);

    let mut weights: Vec<DVector<f64>> = Vec::new();
    let mut x_loadings: Vec<DVector<f64>> = Vec::new();
    let mut y_loadings: Vec<DVector<f64>> = Vec::new();
    for _ in 0..n_components {
        let Some(start) = (0..k).find(|&c| yk.column(c).iter().any(|v| v.abs() > f64::EPSILON)) else {
            break;
        };
        let mut y_score = yk.column(start).into_owned();
        let mut x_w = DVector::zeros(f);
        for _ in 0..NIPALS_MAX_ITER {
            let mut w_new = xk.tr_mul(&y_score) / y_score.dot(&y_score);
            let norm = w_new.norm();
            if norm == 0.0 {
                break;
            }
            w_new /= norm;
            let x_score = &xk * &w_new;
            let y_w = yk.tr_mul(&x_score) / x_score.dot(&x_score);
            y_score = &yk * &y_w / y_w.dot(&y_w);
            let delta = (&w_new - &x_w).norm();
            x_w = w_new;
            if delta < NIPALS_TOL || k == 1 {
                break;
            }
        }
        if x_w.norm() == 0.0 {
            break;
        }
        let imax = x_w.iamax();
        if x_w[imax] < 0.0 {
            x_w = -x_w;
        }
        let t = &xk * &x_w;
        let tt = t.dot(&t);
        if tt <= f64::EPSILON {
            break;
        }
        let p = xk.tr_mul(&t) / tt;
        let q = yk.tr_mul(&t) / tt;
        xk -= &t * p.transpose();
        yk -= &t * q.transpose();
        weights.push(x_w);
        x_loadings.push(p);
        y_loadings.push(q);
    }
    let a = weights.len();
    let coef = if a == 0 {
        DMatrix::zeros(f, k)
    } else {
        let w = DMatrix::from_columns(&weights);
        let p = DMatrix::from_columns(&x_loadings);
        let q = DMatrix::from_columns(&y_loadings);
        let ptw = p.tr_mul(&w);
        let inv = ptw.clone().try_inverse().unwrap_or_else(|| ptw.pseudo_inverse(1e-12).expect("pseudo-inverse"));
        w * inv * q.transpose()
    };
    PlsDa { x_mean, x_std, y_mean, y_std, coef, n_components: a }
}

impl PlsDa {
    /// Predicted dummy responses in original units.
    pub fn decision(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let z = DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| (x[(i, j)] - self.x_mean[j]) / self.x_std[j]);
        let mut s = z * &self.coef;
        for c in 0..s.ncols() {
            for i in 0..s.nrows() {
                s[(i, c)] = s[(i, c)] * self.y_std[c] + self.y_mean[c];
            }
        }
        s
    }
}

impl Classifier for PlsDa {
    fn n_features(&self) -> usize {
        self.x_mean.len()
    }

    fn n_classes(&self) -> usize {
        self.y_mean.len()
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        Some(softmax_rows(&self.decision(x)))
    }

    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        super::argmax_rows(&self.decision(x))
    }

    fn calibrated(&self) -> bool {
        false
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plsda serializes")
    }
}

pub struct PlsDaFamily;

impl ModelFamily for PlsDaFamily {
    fn name(&self) -> &str {
        "plsda"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new().int("n_components", 1, 30)
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        let mut r = ParamReader::new(self.name(), params);
        let requested = positive_usize(r.int("n_components", 2)?, "n_components", 1)?;
        r.finish()?;
        Ok(Box::new(fit_plsda(x, y, k, requested)))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<PlsDa>(blob)
    }
}
