//! Voting, stacking and blending over fitted pipelines.

use std::collections::BTreeSet;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::evaluate::{effective_folds, stratified_folds, stratified_holdout};
use crate::models::{self, argmax_rows, FittedModel, ModelSpec, Registry};
use crate::pipeline::{fit_pipeline, FittedPipeline, PairedData, PipelineConfig};
use crate::seed::derive_seed;

pub const DEFAULT_OOF_FOLDS: usize = 5;
pub const DEFAULT_HOLDOUT_FRAC: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnsembleKind {
    HardVote,
    SoftVote,
    Stacking,
    Blending,
}

impl EnsembleKind {
    pub const ALL: [EnsembleKind; 4] = [Self::HardVote, Self::SoftVote, Self::Stacking, Self::Blending];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HardVote => "hard_vote",
            Self::SoftVote => "soft_vote",
            Self::Stacking => "stacking",
            Self::Blending => "blending",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub kind: EnsembleKind,
    pub base: Vec<PipelineConfig>,
    pub meta: ModelSpec,
    pub oof_folds: usize,
    pub holdout_frac: f64,
    pub seed: u64,
}

impl EnsembleSpec {
    pub fn new(kind: EnsembleKind, base: Vec<PipelineConfig>) -> Self {
        Self {
            kind,
            base,
            meta: ModelSpec::new("logistic_regression"),
            oof_folds: DEFAULT_OOF_FOLDS,
            holdout_frac: DEFAULT_HOLDOUT_FRAC,
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.len() < 2 {
            return Err(Error::Config(format!("an ensemble needs at least 2 base learners, got {}", self.base.len())));
        }
        if !(self.holdout_frac > 0.0 && self.holdout_frac < 1.0) {
            return Err(Error::Config(format!("holdout_frac {} outside (0, 1)", self.holdout_frac)));
        }
        if self.oof_folds < 2 {
            return Err(Error::Config(format!("oof_folds must be >= 2, got {}", self.oof_folds)));
        }
        self.base.iter().try_for_each(PipelineConfig::validate)
    }
}

/// An ensemble for one task.
#[derive(Debug, Clone)]
pub struct TaskEnsemble {
    pub kind: EnsembleKind,
    pub bases: Vec<FittedPipeline>,
    pub meta: Option<FittedModel>,
    pub n_outputs: usize,
    /// Set when the training labels held a single class.
    pub constant: Option<usize>,
    /// Base indices whose probabilities were replaced by one-hot rows.
    pub onehot_bases: BTreeSet<usize>,
}

fn fit_bases(registry: &Registry, cfgs: &[PipelineConfig], x: &DMatrix<f64>, y: &[usize], n_outputs: usize) -> Result<Vec<FittedPipeline>> {
    cfgs.par_iter().map(|c| fit_pipeline(registry, c, x, y, n_outputs)).collect()
}

/// Concatenated base probability rows plus the indices of bases that fell
/// back to one-hot rows.
fn meta_features(bases: &[FittedPipeline], x: &DMatrix<f64>) -> Result<(DMatrix<f64>, BTreeSet<usize>)> {
    let probs = bases.iter().map(|b| b.proba_or_onehot(x)).collect::<Result<Vec<_>>>()?;
    let width: usize = probs.iter().map(|(p, _)| p.ncols()).sum();
    let mut out = DMatrix::zeros(x.nrows(), width);
    let mut col = 0;
    for (p, _) in &probs {
        out.columns_mut(col, p.ncols()).copy_from(p);
        col += p.ncols();
    }
    let flagged = probs.iter().enumerate().filter(|(_, (_, f))| *f).map(|(i, _)| i).collect();
    Ok((out, flagged))
}

fn rows(x: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    x.select_rows(idx)
}

fn pick(y: &[usize], idx: &[usize]) -> Vec<usize> {
    idx.iter().map(|&i| y[i]).collect()
}

fn with_seed(cfgs: &[PipelineConfig], parts: &[crate::seed::SeedPart<'_>]) -> Vec<PipelineConfig> {
    cfgs.iter().map(|c| PipelineConfig { seed: derive_seed(c.seed, parts), ..c.clone() }).collect()
}

/// Fits one task's ensemble. `ids` identify the rows of `x` and are used to
/// check that no out-of-fold prediction comes from a model trained on it.
pub fn fit_task_ensemble(
    registry: &Registry,
    spec: &EnsembleSpec,
    x: &DMatrix<f64>,
    y: &[usize],
    ids: &[String],
    n_outputs: usize,
) -> Result<TaskEnsemble> {
    spec.validate()?;
    if x.nrows() != y.len() || ids.len() != y.len() {
        return Err(Error::shape(format!("{} rows, {} labels, {} ids", x.nrows(), y.len(), ids.len())));
    }
    let distinct: BTreeSet<usize> = y.iter().copied().collect();
    let mut out = TaskEnsemble {
        kind: spec.kind,
        bases: Vec::new(),
        meta: None,
        n_outputs,
        constant: None,
        onehot_bases: BTreeSet::new(),
    };
    if distinct.len() == 1 {
        out.constant = distinct.first().copied();
        return Ok(out);
    }
    let meta_spec = ModelSpec { seed: derive_seed(spec.seed, &["meta".into(), spec.meta.seed.into()]), ..spec.meta.clone() };
    match spec.kind {
        EnsembleKind::HardVote | EnsembleKind::SoftVote => {
            out.bases = fit_bases(registry, &spec.base, x, y, n_outputs)?;
            if spec.kind == EnsembleKind::SoftVote {
                out.onehot_bases = meta_features(&out.bases, &rows(x, &[0]))?.1;
            }
        }
        EnsembleKind::Stacking => {
            let k = effective_folds(y, spec.oof_folds)?;
            let folds = stratified_folds(y, k, derive_seed(spec.seed, &["oof".into()]))?;
            let mut meta_x: Option<DMatrix<f64>> = None;
            for (f, test) in folds.iter().enumerate() {
                let train: Vec<usize> = (0..y.len()).filter(|i| test.binary_search(i).is_err()).collect();
                let seen: BTreeSet<&str> = train.iter().map(|&i| ids[i].as_str()).collect();
                if let Some(&i) = test.iter().find(|&&i| seen.contains(ids[i].as_str())) {
                    return Err(Error::Integrity(format!("sample {} is in fold {f} and its training set", ids[i])));
                }
                let bases = fit_bases(registry, &with_seed(&spec.base, &["oof".into(), f.into()]), &rows(x, &train), &pick(y, &train), n_outputs)?;
                let (feats, flagged) = meta_features(&bases, &rows(x, test))?;
                out.onehot_bases.extend(flagged);
                let m = meta_x.get_or_insert_with(|| DMatrix::zeros(y.len(), feats.ncols()));
                for (r, &i) in test.iter().enumerate() {
                    m.row_mut(i).copy_from(&feats.row(r));
                }
            }
            let meta_x = meta_x.expect("at least two folds");
            out.meta = Some(models::fit(registry, &meta_spec, &meta_x, y, n_outputs)?);
            out.bases = fit_bases(registry, &spec.base, x, y, n_outputs)?;
        }
        EnsembleKind::Blending => {
            let (fit_rows, hold) = stratified_holdout(y, spec.holdout_frac, derive_seed(spec.seed, &["blend".into()]))?;
            out.bases = fit_bases(registry, &spec.base, &rows(x, &fit_rows), &pick(y, &fit_rows), n_outputs)?;
            let (feats, flagged) = meta_features(&out.bases, &rows(x, &hold))?;
            out.onehot_bases.extend(flagged);
            out.meta = Some(models::fit(registry, &meta_spec, &feats, &pick(y, &hold), n_outputs)?);
        }
    }
    Ok(out)
}

/// Plurality of labels per row; ties go to the lowest class index.
pub fn hard_vote(predictions: &[Vec<usize>], n_outputs: usize) -> Vec<usize> {
    let n = predictions.first().map_or(0, Vec::len);
    (0..n)
        .map(|r| {
            let mut counts = vec![0usize; n_outputs];
            predictions.iter().for_each(|p| counts[p[r]] += 1);
            let best = *counts.iter().max().expect("non-empty label space");
            counts.iter().position(|&c| c == best).expect("maximum exists")
        })
        .collect()
}

/// Mean of the probability matrices.
pub fn mean_proba(probs: &[DMatrix<f64>]) -> DMatrix<f64> {
    let mut sum = probs[0].clone();
    probs[1..].iter().for_each(|p| sum += p);
    sum / probs.len() as f64
}

impl TaskEnsemble {
    pub fn predict(&self, x: &DMatrix<f64>) -> Result<Vec<usize>> {
        if let Some(c) = self.constant {
            return Ok(vec![c; x.nrows()]);
        }
        match self.kind {
            EnsembleKind::HardVote => {
                let preds = self.bases.iter().map(|b| b.predict(x)).collect::<Result<Vec<_>>>()?;
                Ok(hard_vote(&preds, self.n_outputs))
            }
            EnsembleKind::SoftVote => {
                let probs = self.bases.iter().map(|b| b.proba_or_onehot(x).map(|(p, _)| p)).collect::<Result<Vec<_>>>()?;
                Ok(argmax_rows(&mean_proba(&probs)))
            }
            EnsembleKind::Stacking | EnsembleKind::Blending => {
                let (feats, _) = meta_features(&self.bases, x)?;
                self.meta.as_ref().expect("meta model is fitted").predict(&feats)
            }
        }
    }
}

/// Ensembles for both tasks.
#[derive(Debug, Clone)]
pub struct FittedEnsemble {
    pub spec: EnsembleSpec,
    pub ripeness: TaskEnsemble,
    pub firmness: TaskEnsemble,
}

impl FittedEnsemble {
    pub fn get(&self, task: Task) -> &TaskEnsemble {
        match task {
            Task::Ripeness => &self.ripeness,
            Task::Firmness => &self.firmness,
        }
    }

    /// True when any base model lacked probabilities.
    pub fn used_onehot(&self) -> bool {
        !self.ripeness.onehot_bases.is_empty() || !self.firmness.onehot_bases.is_empty()
    }
}

pub fn fit_ensemble(registry: &Registry, spec: &EnsembleSpec, train: &PairedData) -> Result<FittedEnsemble> {
    let fit_task = |task: Task| {
        let s = EnsembleSpec { seed: derive_seed(spec.seed, &[task.as_str().into()]), ..spec.clone() };
        fit_task_ensemble(registry, &s, &train.x, train.labels(task), &train.ids, task.n_classes())
    };
    Ok(FittedEnsemble { spec: spec.clone(), ripeness: fit_task(Task::Ripeness)?, firmness: fit_task(Task::Firmness)? })
}

pub fn predict_ensemble(model: &FittedEnsemble, task: Task, x: &DMatrix<f64>) -> Result<Vec<usize>> {
    model.get(task).predict(x)
}

#[cfg(test)]
mod tests;
