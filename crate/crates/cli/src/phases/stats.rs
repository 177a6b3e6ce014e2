use nalgebra::DMatrix;
use rayon::prelude::*;
use serde_json::json;
use spectrabench::evaluate::{
    cohen_d_paired, cross_validate, friedman, nemenyi, successes_from_rate, time_it, wilson_ci, CvResult, FOLD_METRICS,
};
use spectrabench::models::Params;

use super::{concat, put_metrics, selected_preprocessing, spec_with, tuned_models, with_metrics, Preprocessing};
use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::report::{row, Report, Table};

/// Metric the rank tests are run on.
pub const RANK_METRIC: &str = "mean_f1_macro";

struct Plan {
    model: String,
    pre: Preprocessing,
    params: Params,
}

fn plans(ctx: &Context, report: &mut Report) -> Vec<Plan> {
    let tuned = tuned_models(ctx);
    if tuned.is_none() {
        report.note("phase3 report not found; cross-validating configured defaults");
    }
    let fallback = match &tuned {
        Some(_) => None,
        None => Some(selected_preprocessing(ctx, report)),
    };
    ctx.cfg
        .model_names()
        .into_iter()
        .map(|m| {
            let t = tuned.as_ref().and_then(|ts| ts.iter().find(|t| t.model == m));
            match t {
                Some(t) => Plan { model: m, pre: t.pre, params: t.params.clone() },
                None => Plan { model: m, pre: fallback.unwrap_or(Preprocessing::ORIGINAL), params: Params::new() },
            }
        })
        .collect()
}

/// k-fold CV of every model with its tuned parameters, then Wilson
/// intervals, Friedman, Nemenyi and the paired task-asymmetry effect size.
pub fn phase4(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("phase4");
    let plans = plans(ctx, &mut report);
    let k = ctx.cfg.phase4.cv_k;
    // Every model shares the fold assignment so the rank tests compare like with like.
    let cv_seed = ctx.unit_seed("phase4", &["cv"]);
    let runs: Vec<(CliResult<(CvResult, usize)>, f64)> = plans
        .par_iter()
        .map(|p| {
            time_it(|| {
                let (train, test) = ctx.train_test(p.pre.kind, None)?;
                let pool = concat(&train, &test);
                let cfg = ctx.pipeline_config(p.pre.kind, p.pre.use_pca, spec_with(ctx, &p.model, &p.params), 0);
                Ok((cross_validate(&ctx.registry, &cfg, &pool, k, cv_seed)?, pool.len()))
            })
        })
        .collect();

    let mut folds = Table::new(&with_metrics(&["model", "fold"], &[]));
    let mut summary = Table::new(&["model", "metric", "mean", "std", "cv_coefficient", "ci95_lo", "ci95_hi"]);
    let mut wilson = Table::new(&["model", "overall_accuracy", "n", "ci95_lo", "ci95_hi"]);
    let mut errors = Table::new(&["model", "error"]);
    let mut ok: Vec<(&Plan, &CvResult)> = Vec::new();
    for (p, (run, secs)) in plans.iter().zip(&runs) {
        report.time(format!("{}.cv_s", p.model), *secs);
        let (cv, n) = match run {
            Ok(v) => v,
            Err(e) => {
                errors.push(row(json!({ "model": p.model, "error": e.to_string() })));
                continue;
            }
        };
        if cv.k != k {
            report.note(format!("{}: {} folds instead of {k}", p.model, cv.k));
        }
        for (i, m) in cv.scores.per_fold.iter().enumerate() {
            let mut r = row(json!({ "model": p.model, "fold": i }));
            put_metrics(&mut r, Some(m));
            folds.push(r);
        }
        for name in FOLD_METRICS {
            let s = cv.scores.summary[name];
            summary.push(row(json!({
                "model": p.model,
                "metric": name,
                "mean": s.mean,
                "std": s.std,
                "cv_coefficient": s.cv_coefficient,
                "ci95_lo": s.ci95_lo,
                "ci95_hi": s.ci95_hi,
            })));
        }
        let oa = cv.scores.summary["overall_accuracy"].mean;
        let (lo, hi) = wilson_ci(successes_from_rate(oa, *n as u64), *n as u64, 0.95)?;
        wilson.push(row(json!({ "model": p.model, "overall_accuracy": oa, "n": n, "ci95_lo": lo, "ci95_hi": hi })));
        ok.push((p, cv));
    }
    report.add_table("folds", folds);
    report.add_table("summary", summary);
    report.add_table("wilson", wilson);
    if !errors.rows.is_empty() {
        report.add_table("errors", errors);
    }

    let kmin = ok.iter().map(|(_, cv)| cv.scores.per_fold.len()).min().unwrap_or(0);
    if ok.len() < 2 || ok.iter().any(|(_, cv)| cv.scores.per_fold.len() != kmin) {
        report.note("rank tests skipped: they need at least two models with the same folds");
        return Ok(report);
    }
    let scores = DMatrix::from_fn(ok.len(), kmin, |m, f| ok[m].1.scores.per_fold[f].mean_f1_macro);
    report.note(format!("Friedman and Nemenyi tests rank models by per-fold {RANK_METRIC}"));
    let fr = friedman(&scores)?;
    let mut t = Table::new(&["metric", "chi2", "dof", "p_value", "n_models", "n_folds"]);
    t.push(row(json!({
        "metric": RANK_METRIC,
        "chi2": fr.chi2,
        "dof": fr.dof,
        "p_value": fr.p_value,
        "n_models": ok.len(),
        "n_folds": kmin,
    })));
    report.add_table("friedman", t);

    let mut ranks = Table::new(&["model", "mean_rank"]);
    for ((p, _), r) in ok.iter().zip(&fr.mean_ranks) {
        ranks.push(row(json!({ "model": p.model, "mean_rank": r })));
    }
    report.add_table("ranks", ranks);

    match nemenyi(&scores, ctx.cfg.phase4.alpha) {
        Ok(ne) => {
            let mut t = Table::new(&["alpha", "q", "critical_difference"]);
            t.push(row(json!({ "alpha": ne.alpha, "q": ne.q, "critical_difference": ne.critical_difference })));
            report.add_table("nemenyi", t);
            let mut pairs = Table::new(&["model_a", "model_b", "rank_difference", "significant"]);
            for i in 0..ok.len() {
                for j in i + 1..ok.len() {
                    pairs.push(row(json!({
                        "model_a": ok[i].0.model,
                        "model_b": ok[j].0.model,
                        "rank_difference": ne.mean_ranks[i] - ne.mean_ranks[j],
                        "significant": ne.significant[i][j],
                    })));
                }
            }
            report.add_table("nemenyi_pairs", pairs);
        }
        Err(e) => report.note(format!("nemenyi skipped: {}", CliError::from(e))),
    }

    let ra: Vec<f64> = ok.iter().map(|(_, cv)| cv.scores.summary["ripeness_accuracy"].mean).collect();
    let fa: Vec<f64> = ok.iter().map(|(_, cv)| cv.scores.summary["firmness_accuracy"].mean).collect();
    match cohen_d_paired(&fa, &ra) {
        Ok(d) => {
            let mut t = Table::new(&["comparison", "cohen_d", "n_models"]);
            t.push(row(json!({ "comparison": "firmness_accuracy - ripeness_accuracy", "cohen_d": d, "n_models": ok.len() })));
            report.add_table("effect_size", t);
        }
        Err(e) => report.note(format!("effect size skipped: {}", CliError::from(e))),
    }
    Ok(report)
}
