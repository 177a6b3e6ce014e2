//! Feature and band importance, consensus band selection and transform
//! group ablation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Task, WavelengthGrid};
use crate::error::{Error, Result};
use crate::evaluate::{task_confusion, task_metrics};
use crate::models::Registry;
use crate::pipeline::{fit_paired, FittedPipeline, PairedData, PipelineConfig};
use crate::seed::{derive_seed, rng_from};
use crate::transforms::{GroupMap, Transform};

pub const DEFAULT_REPEATS: usize = 10;
pub const VIS_CUTOFF_NM: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    #[default]
    Accuracy,
    F1Macro,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImportanceSource {
    #[default]
    Impurity,
    Permutation,
}

/// Task score of hard predictions, with the task's excluded class dropped.
pub fn task_score(task: Task, y_true: &[usize], y_pred: &[usize], metric: ImportanceMetric) -> Result<f64> {
    let mut cm = task_confusion(task, y_true, y_pred)?;
    if let Some(c) = task.excluded_class() {
        cm.drop_true_class(c);
    }
    let m = task_metrics(&cm);
    Ok(match metric {
        ImportanceMetric::Accuracy => m.accuracy,
        ImportanceMetric::F1Macro => m.f1_macro,
    })
}

/// Mean drop in the task score when one column at a time is shuffled.
/// Repeat `r` of feature `f` uses seed `hash(seed, f, r)`.
pub fn permutation_importance(
    model: &FittedPipeline,
    x: &DMatrix<f64>,
    y: &[usize],
    task: Task,
    metric: ImportanceMetric,
    n_repeats: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if x.nrows() == 0 {
        return Err(Error::domain("permutation importance needs at least one row"));
    }
    if n_repeats == 0 {
        return Err(Error::domain("permutation importance needs at least one repeat"));
    }
    let baseline = task_score(task, y, &model.predict(x)?, metric)?;
    (0..x.ncols())
        .into_par_iter()
        .map(|f| {
            let mut xp = x.clone();
            let mut total = 0.0;
            for r in 0..n_repeats {
                let mut col: Vec<f64> = x.column(f).iter().copied().collect();
                col.shuffle(&mut rng_from(derive_seed(seed, &["perm".into(), f.into(), r.into()])));
                xp.column_mut(f).iter_mut().zip(col).for_each(|(d, v)| *d = v);
                total += task_score(task, y, &model.predict(&xp)?, metric)?;
            }
            Ok(baseline - total / n_repeats as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandImportance {
    pub per_band: Vec<f64>,
    pub task: Task,
    pub source: ImportanceSource,
}

/// Sums feature importance over transforms into one value per band.
pub fn band_importance(feature_importance: &[f64], group_map: &GroupMap, n_bands: usize) -> Result<Vec<f64>> {
    if feature_importance.len() != group_map.len() {
        return Err(Error::shape(format!(
            "{} importances for a group map of {} features",
            feature_importance.len(),
            group_map.len()
        )));
    }
    let mut out = vec![0.0; n_bands];
    for (v, g) in feature_importance.iter().zip(group_map) {
        *out.get_mut(g.band).ok_or_else(|| Error::shape(format!("band {} outside {n_bands} bands", g.band)))? += v;
    }
    Ok(out)
}

/// Rank 1 = most important; ties go to the lower band index.
fn descending_ranks(v: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    let mut ranks = vec![0; v.len()];
    for (pos, &i) in order.iter().enumerate() {
        ranks[i] = pos + 1;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusSelection {
    pub band_indices: Vec<usize>,
    pub wavelengths_nm: Vec<f64>,
    pub joint_ranks: Vec<usize>,
}

/// Bands below `cutoff_nm` with the lowest rank sums across the two tasks.
pub fn consensus_bands(
    ripeness: &[f64],
    firmness: &[f64],
    grid: &WavelengthGrid,
    cutoff_nm: f64,
    top_n: usize,
) -> Result<ConsensusSelection> {
    let b = grid.len();
    if ripeness.len() != b || firmness.len() != b {
        return Err(Error::shape(format!(
            "importance lengths {} and {} for a {b}-band grid",
            ripeness.len(),
            firmness.len()
        )));
    }
    let (rr, rf) = (descending_ranks(ripeness), descending_ranks(firmness));
    let wl = grid.as_slice();
    let mut candidates: Vec<(usize, usize)> =
        (0..b).filter(|&i| wl[i] < cutoff_nm).map(|i| (rr[i] + rf[i], i)).collect();
    if candidates.len() < top_n {
        return Err(Error::Capacity(format!(
            "{} bands lie below {cutoff_nm} nm, {top_n} requested",
            candidates.len()
        )));
    }
    candidates.sort_unstable();
    candidates.truncate(top_n);
    Ok(ConsensusSelection {
        band_indices: candidates.iter().map(|&(_, i)| i).collect(),
        wavelengths_nm: candidates.iter().map(|&(_, i)| wl[i]).collect(),
        joint_ranks: candidates.iter().map(|&(j, _)| j).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub removed: Transform,
    pub task: Task,
    pub score_full: f64,
    pub score_without: f64,
    /// `100 (full - without) / full`; negative when removal helps.
    pub drop_pct: f64,
}

/// Retrains without each transform group in turn and scores on `test`.
/// Every variant uses the same config and seed as the full model.
pub fn group_ablation(
    registry: &Registry,
    cfg: &PipelineConfig,
    train: &PairedData,
    test: &PairedData,
    metric: ImportanceMetric,
) -> Result<Vec<AblationRow>> {
    if train.x.ncols() != test.x.ncols() || train.group_map != test.group_map {
        return Err(Error::shape("train and test feature layouts differ"));
    }
    let score = |tr: &PairedData, te: &PairedData| -> Result<[f64; 2]> {
        let fitted = fit_paired(registry, cfg, tr)?;
        let mut out = [0.0; 2];
        for (slot, task) in out.iter_mut().zip(Task::BOTH) {
            *slot = task_score(task, te.labels(task), &fitted.get(task).predict(&te.x)?, metric)?;
        }
        Ok(out)
    };
    let full = score(train, test)?;
    let variants = Transform::ORDER
        .par_iter()
        .map(|&g| {
            let keep: Vec<usize> = (0..train.group_map.len()).filter(|&c| train.group_map[c].transform != g).collect();
            if keep.is_empty() {
                return Err(Error::domain(format!("removing {} leaves no features", g.as_str())));
            }
            Ok((g, score(&train.select_features(&keep), &test.select_features(&keep))?))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(10);
    for (g, without) in variants {
        for (i, task) in Task::BOTH.into_iter().enumerate() {
            let drop_pct = if full[i] == 0.0 { 0.0 } else { 100.0 * (full[i] - without[i]) / full[i] };
            rows.push(AblationRow { removed: g, task, score_full: full[i], score_without: without[i], drop_pct });
        }
    }
    Ok(rows)
}

/// Centred moving mean and population std over `window` bands; windows are
/// truncated at the ends.
pub fn rolling_band_importance(per_band: &[f64], window: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::domain(format!("rolling window must be odd and positive, got {window}")));
    }
    let h = window / 2;
    let n = per_band.len();
    Ok((0..n)
        .map(|i| {
            let w = &per_band[i.saturating_sub(h)..(i + h + 1).min(n)];
            let m = w.iter().sum::<f64>() / w.len() as f64;
            let var = w.iter().map(|v| (v - m).powi(2)).sum::<f64>() / w.len() as f64;
            (m, var.sqrt())
        })
        .unzip())
}
