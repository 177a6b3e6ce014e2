//! Classification metrics, cross-validation and the statistical battery
//! used to compare models.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::models::Registry;
use crate::pipeline::{fit_paired, PairedData, PipelineConfig};
use crate::seed::{derive_seed, rng_from};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<usize>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Zeroes the row of a true class so it no longer counts.
    pub fn drop_true_class(&mut self, class: usize) {
        if let Some(i) = self.classes.iter().position(|&c| c == class) {
            self.counts[i].iter_mut().for_each(|v| *v = 0);
        }
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize], classes: &[usize]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!("{} true labels but {} predictions", y_true.len(), y_pred.len())));
    }
    let pos = |c: usize| {
        classes
            .iter()
            .position(|&k| k == c)
            .ok_or_else(|| Error::domain(format!("label {c} not among classes {classes:?}")))
    };
    let mut counts = vec![vec![0u64; classes.len()]; classes.len()];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        counts[pos(t)?][pos(p)?] += 1;
    }
    Ok(ConfusionMatrix { classes: classes.to_vec(), counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetrics {
    pub accuracy: f64,
    pub per_class: BTreeMap<usize, ClassMetrics>,
    pub f1_macro: f64,
    pub f1_weighted: f64,
    pub n_scored: u64,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Per-class precision, recall and F1 with 0/0 = 0; macro over classes
/// present in the true labels; weighted by true support.
pub fn task_metrics(cm: &ConfusionMatrix) -> TaskMetrics {
    let k = cm.classes.len();
    let total = cm.total();
    let mut per_class = BTreeMap::new();
    let (mut macro_sum, mut present, mut weighted) = (0.0, 0usize, 0.0);
    for i in 0..k {
        let tp = cm.counts[i][i] as f64;
        let support: u64 = cm.counts[i].iter().sum();
        let predicted: u64 = (0..k).map(|r| cm.counts[r][i]).sum();
        let precision = ratio(tp, predicted as f64);
        let recall = ratio(tp, support as f64);
        let f1 = ratio(2.0 * precision * recall, precision + recall);
        if support > 0 {
            macro_sum += f1;
            present += 1;
            weighted += support as f64 / total as f64 * f1;
        }
        per_class.insert(cm.classes[i], ClassMetrics { precision, recall, f1, support });
    }
    TaskMetrics {
        accuracy: ratio(cm.trace() as f64, total as f64),
        per_class,
        f1_macro: ratio(macro_sum, present as f64),
        f1_weighted: weighted,
        n_scored: total,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedMetrics {
    pub ripeness: TaskMetrics,
    pub firmness: TaskMetrics,
    pub overall_accuracy: f64,
    pub mean_f1_macro: f64,
}

/// Combines both tasks; true-`unknown` firmness rows are dropped first.
pub fn paired_metrics(ripeness: &ConfusionMatrix, firmness: &ConfusionMatrix) -> PairedMetrics {
    let mut f = firmness.clone();
    if let Some(unknown) = Task::Firmness.excluded_class() {
        f.drop_true_class(unknown);
    }
    let r = task_metrics(ripeness);
    let f = task_metrics(&f);
    PairedMetrics {
        overall_accuracy: (r.accuracy + f.accuracy) / 2.0,
        mean_f1_macro: (r.f1_macro + f.f1_macro) / 2.0,
        ripeness: r,
        firmness: f,
    }
}

/// Confusion matrix of one task over its full label space.
pub fn task_confusion(task: Task, y_true: &[usize], y_pred: &[usize]) -> Result<ConfusionMatrix> {
    let classes: Vec<usize> = (0..task.n_classes()).collect();
    confusion(y_true, y_pred, &classes)
}

/// Scores paired predictions against paired truth.
pub fn score_paired(
    r_true: &[usize],
    r_pred: &[usize],
    f_true: &[usize],
    f_pred: &[usize],
) -> Result<PairedMetrics> {
    Ok(paired_metrics(
        &task_confusion(Task::Ripeness, r_true, r_pred)?,
        &task_confusion(Task::Firmness, f_true, f_pred)?,
    ))
}

/// Metric names summarised across folds, in report order.
pub const FOLD_METRICS: [&str; 8] = [
    "overall_accuracy",
    "mean_f1_macro",
    "ripeness_accuracy",
    "ripeness_f1_macro",
    "ripeness_f1_weighted",
    "firmness_accuracy",
    "firmness_f1_macro",
    "firmness_f1_weighted",
];

impl PairedMetrics {
    pub fn metric(&self, name: &str) -> Option<f64> {
        Some(match name {
            "overall_accuracy" => self.overall_accuracy,
            "mean_f1_macro" => self.mean_f1_macro,
            "ripeness_accuracy" => self.ripeness.accuracy,
            "ripeness_f1_macro" => self.ripeness.f1_macro,
            "ripeness_f1_weighted" => self.ripeness.f1_weighted,
            "firmness_accuracy" => self.firmness.accuracy,
            "firmness_f1_macro" => self.firmness.f1_macro,
            "firmness_f1_weighted" => self.firmness.f1_weighted,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation across folds.
    pub std: f64,
    pub cv_coefficient: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

/// Mean, sample std, coefficient of variation and `mean ± t(k-1, .025)·std`.
pub fn summarize(values: &[f64]) -> MetricSummary {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    let std = if k > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt()
    } else {
        0.0
    };
    let t = if k > 1 {
        StudentsT::new(0.0, 1.0, (k - 1) as f64).expect("positive dof").inverse_cdf(0.975)
    } else {
        0.0
    };
    MetricSummary {
        mean,
        std,
        cv_coefficient: if mean != 0.0 { std / mean } else { 0.0 },
        ci95_lo: mean - t * std,
        ci95_hi: mean + t * std,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldScores {
    pub per_fold: Vec<PairedMetrics>,
    pub summary: BTreeMap<String, MetricSummary>,
}

impl FoldScores {
    pub fn from_folds(per_fold: Vec<PairedMetrics>) -> Self {
        let summary = FOLD_METRICS
            .iter()
            .map(|&m| {
                let v: Vec<f64> = per_fold.iter().map(|p| p.metric(m).expect("known metric")).collect();
                (m.to_string(), summarize(&v))
            })
            .collect();
        Self { per_fold, summary }
    }

    pub fn values(&self, metric: &str) -> Vec<f64> {
        self.per_fold.iter().filter_map(|p| p.metric(metric)).collect()
    }
}

/// Stratified shuffled fold assignment. Members of each stratum are
/// shuffled, strata are concatenated in ascending key order and positions
/// are dealt to folds round-robin. Returns the test rows of each fold.
pub fn stratified_folds(strata: &[usize], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::domain(format!("need at least 2 folds, got {k}")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut rng = rng_from(seed);
    let mut order = Vec::with_capacity(strata.len());
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        order.extend_from_slice(members);
    }
    let mut folds = vec![Vec::new(); k];
    for (pos, &i) in order.iter().enumerate() {
        folds[pos % k].push(i);
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

/// Joint (ripeness, firmness) stratum of every row.
pub fn joint_strata(data: &PairedData) -> Vec<usize> {
    data.ripeness.iter().zip(&data.firmness).map(|(r, f)| r * 16 + f).collect()
}

/// Stratified holdout: `round(fraction * n_s)` shuffled members of each
/// stratum go to the holdout, always leaving one behind. Returns sorted
/// `(fit, holdout)` rows.
pub fn stratified_holdout(strata: &[usize], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("holdout fraction {fraction} outside (0, 1)")));
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &s) in strata.iter().enumerate() {
        groups.entry(s).or_default().push(i);
    }
    let mut rng = rng_from(seed);
    let (mut fit, mut holdout) = (Vec::new(), Vec::new());
    for members in groups.values_mut() {
        members.shuffle(&mut rng);
        let n_out = ((fraction * members.len() as f64 + 0.5).floor() as usize).min(members.len() - 1);
        holdout.extend_from_slice(&members[..n_out]);
        fit.extend_from_slice(&members[n_out..]);
    }
    fit.sort_unstable();
    holdout.sort_unstable();
    if holdout.is_empty() {
        return Err(Error::Capacity("holdout split is empty".into()));
    }
    Ok((fit, holdout))
}

/// Largest usable fold count: `k` unless some class has fewer than `k`
/// members.
pub fn effective_folds(labels: &[usize], k: usize) -> Result<usize> {
    if k < 2 {
        return Err(Error::domain(format!("need at least 2 folds, got {k}")));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for &c in labels {
        *counts.entry(c).or_default() += 1;
    }
    let min = counts.values().copied().min().unwrap_or(0);
    if min >= k {
        return Ok(k);
    }
    if min < 2 {
        return Err(Error::Capacity(format!("a class has {min} samples; stratified folds need 2")));
    }
    log::warn!("reducing from {k} to {min} folds: smallest class has {min} samples");
    Ok(min)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub k: usize,
    /// Held-out row indices of each fold.
    pub test_folds: Vec<Vec<usize>>,
    pub scores: FoldScores,
}

/// k-fold stratified cross-validation of the paired pipeline. Folds are
/// stratified on the joint (ripeness, firmness) label; each fold refits the
/// whole pipeline on its training rows with seed `hash(seed, fold)`.
pub fn cross_validate(registry: &Registry, cfg: &PipelineConfig, data: &PairedData, k: usize, seed: u64) -> Result<CvResult> {
    let k = effective_folds(&data.ripeness, k)?;
    let test_folds = stratified_folds(&joint_strata(data), k, derive_seed(seed, &["folds".into()]))?;
    let per_fold = test_folds
        .par_iter()
        .enumerate()
        .map(|(i, test)| {
            let train: Vec<usize> = (0..data.len()).filter(|r| test.binary_search(r).is_err()).collect();
            let fold_cfg = PipelineConfig { seed: derive_seed(seed, &["fold".into(), i.into()]), ..cfg.clone() };
            let (tr, te) = (data.select(&train), data.select(test));
            let seen = tr.id_set();
            if let Some(id) = te.ids.iter().find(|id| seen.contains(id.as_str())) {
                return Err(Error::Integrity(format!("fold {i}: sample {id} is in both train and test")));
            }
            let fitted = fit_paired(registry, &fold_cfg, &tr)?;
            let rp = fitted.ripeness.predict(&te.x)?;
            let fp = fitted.firmness.predict(&te.x)?;
            score_paired(&te.ripeness, &rp, &te.firmness, &fp)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CvResult { k, test_folds, scores: FoldScores::from_folds(per_fold) })
}

/// Wilson score interval, clamped to [0, 1].
pub fn wilson_ci(successes: u64, n: u64, confidence: f64) -> Result<(f64, f64)> {
    if n == 0 || successes > n {
        return Err(Error::domain(format!("wilson interval needs 0 <= successes <= n, n >= 1; got {successes}/{n}")));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain(format!("confidence {confidence} outside (0, 1)")));
    }
    let z = Normal::standard().inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes == n { 1.0 } else { (centre + half).min(1.0) };
    Ok((lo, hi))
}

/// Success count implied by a reported rate, rounding halves up.
pub fn successes_from_rate(rate: f64, n: u64) -> u64 {
    (rate * n as f64 + 0.5).floor() as u64
}

/// Paired Cohen's d: mean difference over the sample std of differences.
pub fn cohen_d_paired(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("paired vectors of length {} and {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::domain("paired effect size needs at least two pairs"));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd <= 1e-15 * mean.abs().max(1.0) {
        return Err(Error::Degenerate("differences have zero variance".into()));
    }
    Ok(mean / sd)
}

/// Ranks of one fold's scores, 1 = highest score, ties averaged.
pub fn rank_descending(scores: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &t in &idx[i..=j] {
            ranks[t] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Mean rank of each model (row) across folds (columns).
pub fn mean_ranks(scores: &DMatrix<f64>) -> Vec<f64> {
    let (m, k) = scores.shape();
    let mut sum = vec![0.0; m];
    for j in 0..k {
        let col: Vec<f64> = scores.column(j).iter().copied().collect();
        for (s, r) in sum.iter_mut().zip(rank_descending(&col)) {
            *s += r;
        }
    }
    sum.into_iter().map(|s| s / k as f64).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
}

/// Friedman test on an `M models x k folds` score matrix (higher is better).
pub fn friedman(scores: &DMatrix<f64>) -> Result<FriedmanResult> {
    let (m, k) = scores.shape();
    if m < 2 || k < 2 {
        return Err(Error::domain(format!("friedman needs >= 2 models and folds, got {m}x{k}")));
    }
    let ranks = mean_ranks(scores);
    let mf = m as f64;
    let centre = (mf + 1.0) / 2.0;
    let chi2 = 12.0 * k as f64 / (mf * (mf + 1.0)) * ranks.iter().map(|r| (r - centre).powi(2)).sum::<f64>();
    let dist = ChiSquared::new((m - 1) as f64).expect("positive dof");
    let p_value = if chi2 <= 0.0 { 1.0 } else { dist.sf(chi2) };
    Ok(FriedmanResult { chi2, dof: m - 1, p_value, mean_ranks: ranks })
}

/// Critical values `q_alpha(M)` of the Nemenyi test for M = 2..=20: the
/// studentized range quantile with infinite degrees of freedom divided by
/// sqrt(2), evaluated with scipy.stats.studentized_range.
const Q_05: [f64; 19] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684, 3.218654, 3.268004,
    3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073, 3.543799,
];
const Q_10: [f64; 19] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889, 2.977768, 3.029694,
    3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224, 3.319233,
];

pub fn nemenyi_q(alpha: f64, m: usize) -> Result<f64> {
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(Error::Unsupported(format!("nemenyi alpha {alpha}; tables exist for 0.05 and 0.10")));
    };
    if !(2..=20).contains(&m) {
        return Err(Error::Unsupported(format!("nemenyi table covers 2..=20 models, got {m}")));
    }
    Ok(table[m - 2])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NemenyiResult {
    pub alpha: f64,
    pub q: f64,
    pub critical_difference: f64,
    pub mean_ranks: Vec<f64>,
    /// `significant[i][j]` iff |R_i − R_j| > CD.
    pub significant: Vec<Vec<bool>>,
}

pub fn nemenyi(scores: &DMatrix<f64>, alpha: f64) -> Result<NemenyiResult> {
    let (m, k) = scores.shape();
    if m < 2 || k < 2 {
        return Err(Error::domain(format!("nemenyi needs >= 2 models and folds, got {m}x{k}")));
    }
    let q = nemenyi_q(alpha, m)?;
    let mf = m as f64;
    let cd = q * (mf * (mf + 1.0) / (6.0 * k as f64)).sqrt();
    let ranks = mean_ranks(scores);
    let significant = (0..m)
        .map(|i| (0..m).map(|j| (ranks[i] - ranks[j]).abs() > cd).collect())
        .collect();
    Ok(NemenyiResult { alpha, q, critical_difference: cd, mean_ranks: ranks, significant })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median over columns of the column range minus median over rows of the
/// row range, on the sub-grid selected by `rows` and `cols`.
pub fn median_range_diff(grid: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> f64 {
    let range = |it: &mut dyn Iterator<Item = f64>| {
        let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        hi - lo
    };
    let mut col_ranges: Vec<f64> = cols.iter().map(|&c| range(&mut rows.iter().map(|&r| grid[(r, c)]))).collect();
    let mut row_ranges: Vec<f64> = rows.iter().map(|&r| range(&mut cols.iter().map(|&c| grid[(r, c)]))).collect();
    median(&mut col_ranges) - median(&mut row_ranges)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapCi {
    pub statistic: f64,
    pub lo: f64,
    pub hi: f64,
}

fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let pos = q * (v.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

/// Percentile bootstrap of [`median_range_diff`] on a `models x configs`
/// grid, resampling models and configs with replacement.
pub fn bootstrap_median_range_diff(grid: &DMatrix<f64>, n_resamples: usize, seed: u64, confidence: f64) -> Result<BootstrapCi> {
    let (m, c) = grid.shape();
    if m < 2 || c < 2 {
        return Err(Error::domain(format!("bootstrap needs a grid of at least 2x2, got {m}x{c}")));
    }
    if n_resamples == 0 || !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::domain("bootstrap needs resamples > 0 and confidence in (0, 1)"));
    }
    let all_rows: Vec<usize> = (0..m).collect();
    let all_cols: Vec<usize> = (0..c).collect();
    let statistic = median_range_diff(grid, &all_rows, &all_cols);
    let mut rng = rng_from(seed);
    let mut stats: Vec<f64> = (0..n_resamples)
        .map(|_| {
            let rows: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
            let cols: Vec<usize> = (0..c).map(|_| rng.random_range(0..c)).collect();
            median_range_diff(grid, &rows, &cols)
        })
        .collect();
    stats.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    Ok(BootstrapCi { statistic, lo: quantile_sorted(&stats, tail), hi: quantile_sorted(&stats, 1.0 - tail) })
}

/// Runs `f`, returning its value, wall time in seconds and serialized size.
pub fn measure<T: Serialize>(f: impl FnOnce() -> T) -> Result<(T, f64, usize)> {
    let start = Instant::now();
    let value = f();
    let elapsed = start.elapsed().as_secs_f64();
    let size = serde_json::to_vec(&value)?.len();
    Ok((value, elapsed, size))
}

/// Wall time of `f` in seconds.
pub fn time_it<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let value = f();
    (value, start.elapsed().as_secs_f64())
}
