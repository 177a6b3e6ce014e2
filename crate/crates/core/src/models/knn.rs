//! Brute-force k-nearest neighbours.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{load_blob, positive_usize, Classifier, ModelFamily, ParamReader, Params};
use crate::error::{Error, Result};
use crate::tune::SearchSpace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    Uniform,
    Distance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub weights: Weighting,
    pub p: f64,
    pub x: DMatrix<f64>,
    pub y: Vec<usize>,
    pub n_classes: usize,
}

impl Knn {
    fn distance(&self, x: &DMatrix<f64>, row: usize, train: usize) -> f64 {
        let a = x.row(row);
        let b = self.x.row(train);
        if self.p == 2.0 {
            a.iter().zip(b.iter()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt()
        } else if self.p == 1.0 {
            a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs()).sum()
        } else {
            a.iter().zip(b.iter()).map(|(u, v)| (u - v).abs().powf(self.p)).sum::<f64>().powf(1.0 / self.p)
        }
    }

    /// The `k` nearest training rows, nearest first; equal distances keep
    /// training order.
    pub fn neighbors(&self, x: &DMatrix<f64>, row: usize) -> Vec<(usize, f64)> {
        let mut d: Vec<(usize, f64)> = (0..self.x.nrows()).map(|t| (t, self.distance(x, row, t))).collect();
        let k = self.k.min(d.len());
        d.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        d.truncate(k);
        d
    }
}

impl Classifier for Knn {
    fn n_features(&self) -> usize {
        self.x.ncols()
    }

    fn n_classes(&self) -> usize {
        self.n_classes
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        let mut out = DMatrix::zeros(x.nrows(), self.n_classes);
        for r in 0..x.nrows() {
            let nb = self.neighbors(x, r);
            let exact = nb.iter().any(|&(_, d)| d == 0.0);
            for &(t, d) in &nb {
                let w = match self.weights {
                    Weighting::Uniform => 1.0,
                    Weighting::Distance if exact => f64::from(u8::from(d == 0.0)),
                    Weighting::Distance => 1.0 / d,
                };
                out[(r, self.y[t])] += w;
            }
            let s: f64 = out.row(r).sum();
            for c in 0..self.n_classes {
                out[(r, c)] /= s;
            }
        }
        Some(out)
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("knn serializes")
    }
}

pub struct KnnFamily;

impl ModelFamily for KnnFamily {
    fn name(&self) -> &str {
        "knn"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new()
            .int("n_neighbors", 3, 50)
            .categorical("weights", &["uniform", "distance"])
            .int("p", 1, 2)
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        let mut r = ParamReader::new(self.name(), params);
        let n_neighbors = positive_usize(r.int("n_neighbors", 5)?, "n_neighbors", 1)?;
        let weights = match r.cat("weights", "uniform", &["uniform", "distance"])?.as_str() {
            "distance" => Weighting::Distance,
            _ => Weighting::Uniform,
        };
        let p = r.real("p", 2.0)?;
        r.finish()?;
        if p < 1.0 {
            return Err(Error::Config(format!("knn: Minkowski p must be >= 1, got {p}")));
        }
        Ok(Box::new(Knn { k: n_neighbors, weights, p, x: x.clone(), y: y.to_vec(), n_classes: k }))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<Knn>(blob)
    }
}
