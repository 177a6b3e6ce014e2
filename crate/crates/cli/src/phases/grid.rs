use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;
use spectrabench::balance::BalanceKind;
use spectrabench::evaluate::{
    bootstrap_median_range_diff, joint_strata, stratified_holdout, summarize, time_it, PairedMetrics,
};
use spectrabench::tune::VALIDATION_FRACTION;

use super::{error_value, put_metrics, with_metrics, Preprocessing};
use crate::config::SelectOn;
use crate::context::{score, Context};
use crate::error::{CliError, CliResult};
use crate::report::{row, Report, Table};

struct Cell {
    pre: Preprocessing,
    model: String,
    test: CliResult<PairedMetrics>,
    validation: Option<CliResult<f64>>,
    n_train: Option<usize>,
    seconds: f64,
}

impl Cell {
    /// The value used for selection; `None` for failed cells.
    fn selection_score(&self, on: SelectOn) -> Option<f64> {
        match on {
            SelectOn::Test => self.test.as_ref().ok().map(|m| m.overall_accuracy),
            SelectOn::Validation => self.validation.as_ref()?.as_ref().ok().copied(),
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn range(it: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi - lo
}

/// Median over models of the range across preprocessing configs, and median
/// over configs of the range across models, on a `models x configs` grid.
pub(crate) fn median_ranges(grid: &DMatrix<f64>) -> (f64, f64) {
    let config_range = median(grid.row_iter().map(|r| range(r.iter().copied())).collect());
    let model_range = median(grid.column_iter().map(|c| range(c.iter().copied())).collect());
    (config_range, model_range)
}

/// Index of the first maximum.
fn first_max(scores: impl Iterator<Item = Option<f64>>) -> Option<(usize, f64)> {
    scores
        .enumerate()
        .filter_map(|(i, s)| s.map(|s| (i, s)))
        .fold(None, |best, (i, s)| match best {
            Some((_, b)) if s <= b => best,
            _ => Some((i, s)),
        })
}

/// Full factorial balance x PCA x model grid on the benchmark test split.
pub fn phase2(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("phase2");
    let p2 = &ctx.cfg.phase2;
    let models = ctx.cfg.model_names();
    let configs: Vec<Preprocessing> =
        p2.strategies.iter().flat_map(|&kind| p2.pca.iter().map(move |&use_pca| Preprocessing { kind, use_pca })).collect();

    let original = ctx.train_test(BalanceKind::Original, None)?;
    let resplit = p2
        .strategies
        .contains(&BalanceKind::StratifiedResplit)
        .then(|| ctx.train_test(BalanceKind::StratifiedResplit, None));
    match &resplit {
        Some(Ok((rs, _))) => report.note(format!("training rows: original {}, stratified resplit {}", original.0.len(), rs.len())),
        Some(Err(e)) => report.note(format!("stratified resplit unavailable: {e}")),
        None => {}
    }
    let data_for = |kind: BalanceKind| match (kind, &resplit) {
        (BalanceKind::StratifiedResplit, Some(r)) => r.as_ref().map_err(|e| e.to_string()),
        _ => Ok(&original),
    };

    let jobs: Vec<(Preprocessing, &String)> = configs.iter().flat_map(|&c| models.iter().map(move |m| (c, m))).collect();
    let cells: Vec<Cell> = jobs
        .par_iter()
        .map(|&(pre, model)| {
            let seed = ctx.unit_seed("phase2", &[pre.kind.as_str(), if pre.use_pca { "pca" } else { "no_pca" }, model]);
            let cfg = ctx.pipeline_config(pre.kind, pre.use_pca, ctx.cfg.model_spec(model), seed);
            let ((test, validation, n_train), seconds) = time_it(|| match data_for(pre.kind) {
                Err(e) => (Err(CliError::Data(spectrabench::Error::Capacity(e))), None, None),
                Ok((train, test)) => {
                    let fitted = ctx.fit_paired(&cfg, train);
                    let n_train = fitted.as_ref().ok().map(|f| f.ripeness.n_train);
                    let test = fitted.and_then(|f| score(&f, test));
                    let validation = (p2.select_on == SelectOn::Validation).then(|| {
                        let (fit, hold) = stratified_holdout(
                            &joint_strata(train),
                            VALIDATION_FRACTION,
                            ctx.unit_seed("phase2", &["holdout", pre.kind.as_str()]),
                        )?;
                        let f = ctx.fit_paired(&cfg, &train.select(&fit))?;
                        Ok(score(&f, &train.select(&hold))?.overall_accuracy)
                    });
                    (test, validation, n_train)
                }
            });
            Cell { pre, model: model.clone(), test, validation, n_train, seconds }
        })
        .collect();

    let validation = p2.select_on == SelectOn::Validation;
    let tail: &[&str] = if validation { &["validation_oa", "n_train", "error"] } else { &["n_train", "error"] };
    let mut grid_t = Table::new(&with_metrics(&["strategy", "pca", "model"], tail));
    for c in &cells {
        let mut r = row(json!({
            "strategy": c.pre.kind.as_str(),
            "pca": c.pre.use_pca,
            "model": c.model,
            "n_train": c.n_train,
            "error": error_value(&c.test),
        }));
        put_metrics(&mut r, c.test.as_ref().ok());
        if validation {
            let v = c.validation.as_ref().and_then(|v| v.as_ref().ok().copied());
            r.insert("validation_oa".into(), json!(v));
        }
        grid_t.push(r);
        report.time(format!("{}/{}/{}", c.pre.kind.as_str(), c.pre.use_pca, c.model), c.seconds);
    }
    report.add_table("grid", grid_t);

    let on = p2.select_on;
    let mut best_t = Table::new(&["model", "strategy", "pca", "overall_accuracy", "selection_score"]);
    for m in &models {
        let own: Vec<&Cell> = cells.iter().filter(|c| &c.model == m).collect();
        if let Some((i, s)) = first_max(own.iter().map(|c| c.selection_score(on))) {
            let c = own[i];
            best_t.push(row(json!({
                "model": m,
                "strategy": c.pre.kind.as_str(),
                "pca": c.pre.use_pca,
                "overall_accuracy": c.test.as_ref().ok().map(|t| t.overall_accuracy),
                "selection_score": s,
            })));
        }
    }
    report.add_table("best_per_model", best_t);

    let mut summary_t = Table::new(&["strategy", "pca", "mean_oa", "std_oa", "mean_selection_score", "n_models"]);
    let mut means = Vec::new();
    for &pre in &configs {
        let own: Vec<&Cell> = cells.iter().filter(|c| c.pre == pre).collect();
        let oa: Vec<f64> = own.iter().filter_map(|c| c.test.as_ref().ok().map(|m| m.overall_accuracy)).collect();
        let sel: Vec<f64> = own.iter().filter_map(|c| c.selection_score(on)).collect();
        let s = (!oa.is_empty()).then(|| summarize(&oa));
        let mean_sel = (!sel.is_empty()).then(|| sel.iter().sum::<f64>() / sel.len() as f64);
        means.push(mean_sel);
        summary_t.push(row(json!({
            "strategy": pre.kind.as_str(),
            "pca": pre.use_pca,
            "mean_oa": s.map(|s| s.mean),
            "std_oa": s.map(|s| s.std),
            "mean_selection_score": mean_sel,
            "n_models": oa.len(),
        })));
    }
    report.add_table("strategy_summary", summary_t);

    let mut selected_t = Table::new(&["strategy", "pca", "select_on", "mean_selection_score"]);
    match first_max(means.into_iter()) {
        Some((i, s)) => selected_t.push(row(json!({
            "strategy": configs[i].kind.as_str(),
            "pca": configs[i].use_pca,
            "select_on": if validation { "validation" } else { "test" },
            "mean_selection_score": s,
        }))),
        None => report.note("every grid cell failed; nothing selected"),
    }
    if !validation {
        report.note("preprocessing is selected on test-set accuracy; --select-on validation avoids this leakage");
    }
    report.add_table("selected", selected_t);

    let complete = cells.iter().all(|c| c.test.is_ok());
    if !complete {
        report.note("bootstrap skipped: some grid cells failed");
    } else if models.len() < 2 || configs.len() < 2 {
        report.note("bootstrap skipped: it needs at least two models and two preprocessing configs");
    } else {
        let grid = DMatrix::from_fn(models.len(), configs.len(), |m, c| {
            cells[c * models.len() + m].test.as_ref().map(|t| t.overall_accuracy).unwrap_or(f64::NAN)
        });
        let (config_range, model_range) = median_ranges(&grid);
        let ci = bootstrap_median_range_diff(&grid, p2.bootstrap_resamples, ctx.unit_seed("phase2", &["bootstrap"]), 0.95)?;
        let mut t = Table::new(&[
            "median_preprocessing_range",
            "median_model_range",
            "difference",
            "ci95_lo",
            "ci95_hi",
            "n_resamples",
        ]);
        t.push(row(json!({
            "median_preprocessing_range": config_range,
            "median_model_range": model_range,
            "difference": ci.statistic,
            "ci95_lo": ci.lo,
            "ci95_hi": ci.hi,
            "n_resamples": p2.bootstrap_resamples,
        })));
        report.add_table("bootstrap", t);
    }
    let failures = cells.iter().filter(|c| c.test.is_err()).count();
    if failures > 0 {
        report.note(format!("{failures} grid cells failed; see the error column"));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_ranges_on_additive_grid() {
        // rows a_i = 0, 1, 5; columns b_j = 0, 2: config range 2, model range 5
        let g = DMatrix::from_fn(3, 2, |i, j| [0.0, 1.0, 5.0][i] + [0.0, 2.0][j]);
        assert_eq!(median_ranges(&g), (2.0, 5.0));
    }

    #[test]
    fn first_max_prefers_the_earliest_tie_and_skips_failures() {
        assert_eq!(first_max([None, Some(0.5), Some(0.7), Some(0.7)].into_iter()), Some((2, 0.7)));
        assert_eq!(first_max([None, None].into_iter()), None);
    }
}
