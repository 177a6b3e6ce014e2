//! Multinomial logistic regression fitted by full-batch gradient descent
//! with backtracking line search (proximal steps for the L1 penalty).

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{balanced_weights, load_blob, softmax_rows, Classifier, ModelFamily, ParamReader, Params};
use crate::error::{Error, Result};
use crate::tune::SearchSpace;

pub const GRAD_TOL: f64 = 1e-6;
pub const MAX_ITER: usize = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

/// Training problem: rows of `x`, labels, per-sample weights and the inverse
/// regularization strength `c`.
pub struct Problem<'a> {
    pub x: &'a DMatrix<f64>,
    pub y: &'a [usize],
    pub w: &'a [f64],
    pub n_classes: usize,
    pub c: f64,
    pub penalty: Penalty,
}

impl Problem<'_> {
    fn lambda(&self) -> f64 {
        1.0 / (self.c * self.x.nrows() as f64)
    }

    fn scores(&self, theta: &DMatrix<f64>) -> DMatrix<f64> {
        let f = self.x.ncols();
        let mut s = self.x * theta.rows(0, f);
        for mut row in s.row_iter_mut() {
            row += theta.row(f);
        }
        s
    }

    /// Weighted mean cross-entropy plus the L2 term when the penalty is L2.
    /// `theta` is `(F + 1) x K`; the last row is the unpenalized intercept.
    pub fn smooth_loss(&self, theta: &DMatrix<f64>) -> f64 {
        let s = self.scores(theta);
        let n = self.x.nrows() as f64;
        let mut loss = 0.0;
        for (i, &c) in self.y.iter().enumerate() {
            let max = s.row(i).max();
            let lse = max + s.row(i).iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss += self.w[i] * (lse - s[(i, c)]);
        }
        loss /= n;
        if self.penalty == Penalty::L2 {
            loss += 0.5 * self.lambda() * theta.rows(0, self.x.ncols()).norm_squared();
        }
        loss
    }

    /// Smooth loss and its gradient.
    pub fn loss_and_grad(&self, theta: &DMatrix<f64>) -> (f64, DMatrix<f64>) {
        let f = self.x.ncols();
        let n = self.x.nrows() as f64;
        let mut p = softmax_rows(&self.scores(theta));
        for (i, &c) in self.y.iter().enumerate() {
            p[(i, c)] -= 1.0;
            let w = self.w[i] / n;
            for v in p.row_mut(i).iter_mut() {
                *v *= w;
            }
        }
        let mut grad = DMatrix::zeros(f + 1, self.n_classes);
        grad.rows_mut(0, f).copy_from(&self.x.tr_mul(&p));
        for k in 0..self.n_classes {
            grad[(f, k)] = p.column(k).sum();
        }
        if self.penalty == Penalty::L2 {
            let lam = self.lambda();
            let mut top = grad.rows_mut(0, f);
            top += theta.rows(0, f) * lam;
        }
        (self.smooth_loss(theta), grad)
    }

    /// Full objective including the L1 term when present.
    pub fn objective(&self, theta: &DMatrix<f64>) -> f64 {
        let mut v = self.smooth_loss(theta);
        if self.penalty == Penalty::L1 {
            v += self.lambda() * theta.rows(0, self.x.ncols()).iter().map(|t| t.abs()).sum::<f64>();
        }
        v
    }

    fn prox(&self, z: &mut DMatrix<f64>, t: f64) {
        if self.penalty == Penalty::L1 {
            let thr = t * self.lambda();
            for v in z.rows_mut(0, self.x.ncols()).iter_mut() {
                *v = v.signum() * (v.abs() - thr).max(0.0);
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogisticRegression {
    /// `(F + 1) x K`, last row intercepts.
    pub theta: DMatrix<f64>,
    pub n_iter: usize,
    pub converged: bool,
}

pub fn fit_logistic(problem: &Problem<'_>) -> LogisticRegression {
    let f = problem.x.ncols();
    let mut theta = DMatrix::zeros(f + 1, problem.n_classes);
    let (mut fx, mut g) = problem.loss_and_grad(&theta);
    let mut step = 1.0;
    let mut prev: Option<(DMatrix<f64>, DMatrix<f64>)> = None;
    for it in 0..MAX_ITER {
        if problem.penalty == Penalty::L2 && g.amax() < GRAD_TOL {
            return LogisticRegression { theta, n_iter: it, converged: true };
        }
        // Barzilai-Borwein guess for the starting step, then backtrack.
        if let Some((s, d)) = &prev {
            let sd = s.dot(d);
            if sd > 0.0 {
                step = (s.norm_squared() / sd).clamp(1e-10, 1e10);
            }
        }
        let mut t = step;
        let (next, fnext) = loop {
            let mut z = &theta - &g * t;
            problem.prox(&mut z, t);
            let fz = problem.smooth_loss(&z);
            let diff = &z - &theta;
            let ok = match problem.penalty {
                Penalty::L2 => fz <= fx - 1e-4 * t * g.norm_squared(),
                Penalty::L1 => fz <= fx + g.dot(&diff) + diff.norm_squared() / (2.0 * t),
            };
            if ok || t < 1e-20 {
                break (z, fz);
            }
            t *= 0.5;
        };
        let moved = (&next - &theta).amax() / t;
        let (_, gnext) = problem.loss_and_grad(&next);
        prev = Some((&next - &theta, &gnext - &g));
        theta = next;
        fx = fnext;
        g = gnext;
        if problem.penalty == Penalty::L1 && moved < GRAD_TOL {
            return LogisticRegression { theta, n_iter: it + 1, converged: true };
        }
    }
    LogisticRegression { theta, n_iter: MAX_ITER, converged: false }
}

impl LogisticRegression {
    pub fn decision(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let f = x.ncols();
        let mut s = x * self.theta.rows(0, f);
        for mut row in s.row_iter_mut() {
            row += self.theta.row(f);
        }
        s
    }
}

impl Classifier for LogisticRegression {
    fn n_features(&self) -> usize {
        self.theta.nrows() - 1
    }

    fn n_classes(&self) -> usize {
        self.theta.ncols()
    }

    fn predict_proba(&self, x: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        Some(softmax_rows(&self.decision(x)))
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("logistic regression serializes")
    }
}

pub struct LogisticRegressionFamily;

impl ModelFamily for LogisticRegressionFamily {
    fn name(&self) -> &str {
        "logistic_regression"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new().log_real("C", 0.01, 100.0).categorical("penalty", &["l1", "l2"])
    }

    fn fit(&self, params: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _seed: u64) -> Result<Box<dyn Classifier>> {
        let mut r = ParamReader::new(self.name(), params);
        let c = r.real("C", 1.0)?;
        let penalty = match r.cat("penalty", "l2", &["l1", "l2"])?.as_str() {
            "l1" => Penalty::L1,
            _ => Penalty::L2,
        };
        let balanced = r.cat("class_weight", "none", &["none", "balanced"])? == "balanced";
        r.finish()?;
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::Config(format!("logistic_regression: C must be positive, got {c}")));
        }
        let w = if balanced { balanced_weights(y, k) } else { vec![1.0; y.len()] };
        let problem = Problem { x, y, w: &w, n_classes: k, c, penalty };
        let model = fit_logistic(&problem);
        if !model.converged {
            log::debug!("logistic_regression stopped after {} iterations", model.n_iter);
        }
        Ok(Box::new(model))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        load_blob::<LogisticRegression>(blob)
    }
}
