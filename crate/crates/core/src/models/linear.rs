//! Ridge classifier: least squares on ±1 one-hot targets.

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{balanced_weights, load_blob, softmax_rows, Classifier, ModelFamily, ParamReader, Params};
use crate::error::{Error, Result};
use crate::tune::SearchSpace;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Ridge {
    /// `F x K` coefficients.
    pub coef: DMatrix<f64>,
    pub intercept: DVector<f64>,
}

/// Solves the weighted ridge problem with an unpenalized intercept, in the
/// primal when `F <= N` and in the dual otherwise.
pub fn fit_ridge(x: &DMatrix<f64>, y: &[usize], k: usize, alpha: f64, w: &[f64]) -> Result<Ridge> {
    let (n, f) = x.shape();
    let targets = DMatrix::from_fn(n, k, |i, c| if y[i] == c { 1.0 } else { -1.0 });
    let wsum: f64 = w.iter().sum();
    let xm = DVector::from_fn(f, |j, _| (0..n).map(|i| w[i] * x[(i, j)]).sum::<f64>() / wsum);
    let ym = DVector::from_fn(k, |c, _| (0..n).map(|i| w[i] * targets[(i, c)]).sum::<f64>() / wsum);
    let xc = DMatrix::from_fn(n, f, |i, j| w[i].sqrt() * (x[(i, j)] - xm[j]));
    let yc = DMatrix::from_fn(n, k, |i, c| w[i].sqrt() * (targets[(i, c)] - ym[c]));
    let singular = || Error::Degenerate("ridge system is not positive definite".into());
    let coef = if f <= n {
        let mut a = xc.tr_mul(&xc);
        for j in 0..f {
            a[(j, j)] += alpha;
        }
        Cholesky::new(a).ok_or_else(singular)?.solve(&xc.tr_mul(&yc))
    } else {
        let mut g = &xc * xc.transpose();
        for i in 0..n {
            g[(i, i)] += alpha;
        }
        xc.tr_mul(&Cholesky::new(g).ok_or_else(singular)?.solve(&yc))
    };
    let intercept = &ym - coef.tr_mul(&xm);
    Ok(Ridge { coef, intercept })
}

impl Ridge {
    pub fn decision(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut s = x * &self.coef;
        for mut row in s.row_iter_mut() {
            row += self.intercept.transpose();
        }
        s
    }
}

impl Classifier for Ridge {
    fn n_features(&self) -> usize {
        self.coef.nrows()
    }

    fn n_classes(&self) -> usize {
        self.coef.ncols()
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
        serde_json::to_value(self).expect("ridge serializes")
    }
}

pub struct RidgeFamily;

impl ModelFamily for RidgeFamily {
    fn name(&self) -> &str {
        "ridge"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new().log_real("alpha", 0.1, 100.0)
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        let mut r = ParamReader::new(self.name(), params);
        let alpha = r.real("alpha", 1.0)?;
        let balanced = r.cat("class_weight", "none", &["none", "balanced"])? == "balanced";
        r.finish()?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Config(format!("ridge: alpha must be positive, got {alpha}")));
        }
        let w = if balanced { balanced_weights(y, k) } else { vec![1.0; y.len()] };
        Ok(Box::new(fit_ridge(x, y, k, alpha, &w)?))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<Ridge>(blob)
    }
}
