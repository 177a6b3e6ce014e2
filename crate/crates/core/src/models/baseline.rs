//! Majority-class baseline. Not part of the built-in registry; register it
//! explicitly when a chance-level reference is wanted.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{load_blob, Classifier, ModelFamily, ParamReader, Params};
use crate::error::Result;
use crate::tune::SearchSpace;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MajorityClass {
    pub prior: Vec<f64>,
    pub n_features: usize,
}

impl Classifier for MajorityClass {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn n_classes(&self) -> usize {
        self.prior.len()
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        Some(DMatrix::from_fn(x.nrows(), self.prior.len(), |_, c| self.prior[c]))
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("baseline serializes")
    }
}

pub struct MajorityFamily;

impl ModelFamily for MajorityFamily {
    fn name(&self) -> &str {
        "majority"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new()
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        ParamReader::new(self.name(), params).finish()?;
        let mut prior = vec![0.0; k];
        for &c in y {
            prior[c] += 1.0;
        }
        prior.iter_mut().for_each(|p| *p /= y.len() as f64);
        Ok(Box::new(MajorityClass { prior, n_features: x.ncols() }))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<MajorityClass>(blob)
    }
}
