use rayon::prelude::*;
use serde_json::json;
use spectrabench::evaluate::{successes_from_rate, time_it, wilson_ci, PairedMetrics};
use spectrabench::pipeline::PairedData;
use spectrabench::transforms::BandSubset;
use spectrabench::tune::Study;

use super::{error_value, put_metrics, selected_preprocessing, with_metrics, Preprocessing};
use crate::context::{score, Context};
use crate::error::CliResult;
use crate::report::{row, Report, Table};

pub(crate) struct TunedScore {
    pub model: String,
    pub outcome: CliResult<(Study, PairedMetrics)>,
    pub seconds: f64,
}

/// Tunes every configured model on the training rows of `pre` and scores
/// the refit pipelines on the test split.
pub(crate) fn tuned_scores(
    ctx: &Context,
    pre: Preprocessing,
    subset: Option<&BandSubset>,
    phase: &str,
) -> CliResult<Vec<TunedScore>> {
    let (train, test) = ctx.train_test(pre.kind, subset)?;
    let tag = subset.map_or("full", |s| s.name.as_str());
    Ok(ctx
        .cfg
        .model_names()
        .par_iter()
        .map(|m| {
            let (outcome, seconds) = time_it(|| tune_one(ctx, pre, m, &train, &test, phase, tag));
            TunedScore { model: m.clone(), outcome, seconds }
        })
        .collect())
}

fn tune_one(
    ctx: &Context,
    pre: Preprocessing,
    model: &str,
    train: &PairedData,
    test: &PairedData,
    phase: &str,
    tag: &str,
) -> CliResult<(Study, PairedMetrics)> {
    let base = ctx.pipeline_config(pre.kind, pre.use_pca, ctx.cfg.model_spec(model), ctx.unit_seed(phase, &[tag, model]));
    let space = ctx.registry.get(model)?.search_space();
    // An empty space has a single point; one trial evaluates it.
    let n_trials = if space.params.is_empty() { 1 } else { ctx.cfg.phase3.n_trials };
    let (study, _, fitted) = ctx.optimize(&base, &space, train, n_trials, ctx.unit_seed(phase, &[tag, model, "tpe"]))?;
    Ok((study, score(&fitted, test)?))
}

pub(crate) const RESULT_HEAD: [&str; 3] = ["model", "strategy", "pca"];
pub(crate) const RESULT_TAIL: [&str; 7] =
    ["best_objective", "best_trial", "n_trials", "oa_ci95_lo", "oa_ci95_hi", "params", "error"];

/// One results row; the Wilson interval treats OA as a proportion of the
/// `n_test` test samples.
pub(crate) fn result_row(t: &TunedScore, pre: Preprocessing, n_test: usize) -> CliResult<crate::report::Row> {
    let mut r = row(json!({
        "model": t.model,
        "strategy": pre.kind.as_str(),
        "pca": pre.use_pca,
        "error": error_value(&t.outcome),
    }));
    if let Ok((study, m)) = &t.outcome {
        let (lo, hi) = wilson_ci(successes_from_rate(m.overall_accuracy, n_test as u64), n_test as u64, 0.95)?;
        r.extend(row(json!({
            "best_objective": study.best_objective,
            "best_trial": study.best_trial,
            "n_trials": study.history.len(),
            "oa_ci95_lo": lo,
            "oa_ci95_hi": hi,
            "params": serde_json::to_string(&study.best_params)?,
        })));
    }
    put_metrics(&mut r, t.outcome.as_ref().ok().map(|(_, m)| m));
    Ok(r)
}

/// TPE studies per model on the phase 2 preprocessing.
pub fn phase3(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("phase3");
    let pre = selected_preprocessing(ctx, &mut report);
    let n_test = ctx.train_test(pre.kind, None)?.1.len();
    let scores = tuned_scores(ctx, pre, None, "phase3")?;

    let mut results = Table::new(&with_metrics(&RESULT_HEAD, &RESULT_TAIL));
    let mut history = Table::new(&["model", "trial", "objective", "best_so_far", "params", "error"]);
    for t in &scores {
        results.push(result_row(t, pre, n_test)?);
        report.time(format!("{}.study_s", t.model), t.seconds);
        if let Ok((study, _)) = &t.outcome {
            for (rec, best) in study.history.iter().zip(study.best_curve()) {
                history.push(row(json!({
                    "model": t.model,
                    "trial": rec.trial_index,
                    "objective": rec.objective,
                    "best_so_far": best,
                    "params": serde_json::to_string(&rec.params)?,
                    "error": rec.error,
                })));
            }
        }
    }
    report.add_table("results", results);
    report.add_table("history", history);
    Ok(report)
}
