use rayon::prelude::*;
use serde_json::json;
use spectrabench::dataset::Task;
use spectrabench::ensemble::{fit_ensemble, predict_ensemble, EnsembleKind, EnsembleSpec};
use spectrabench::evaluate::{score_paired, time_it, PairedMetrics};
use spectrabench::models::Params;

use super::{error_value, put_metrics, selected_preprocessing, spec_with, tuned_models, with_metrics, Preprocessing};
use crate::context::{score, Context};
use crate::error::{CliError, CliResult};
use crate::report::{load_report, report_rows, row, Report, Table};

/// Top models by single-split OA with their tuned parameters: phase 3 when
/// available, else phase 1 defaults, else the configured order.
fn top_models(ctx: &Context, report: &mut Report) -> Vec<(String, Params)> {
    let n = ctx.cfg.phase5.top_n;
    let mut ranked: Vec<(String, Params, f64)> = match tuned_models(ctx) {
        Some(t) => t.into_iter().map(|t| (t.model, t.params, t.overall_accuracy)).collect(),
        None => {
            report.note("phase3 report not found; ranking base learners by phase1 defaults");
            load_report(&ctx.out, "phase1")
                .map(|r| {
                    report_rows(&r, "metrics")
                        .iter()
                        .filter_map(|row| {
                            Some((row.get("model")?.as_str()?.to_string(), Params::new(), row.get("overall_accuracy")?.as_f64()?))
                        })
                        .collect()
                })
                .unwrap_or_default()
        }
    };
    let models = ctx.cfg.model_names();
    ranked.retain(|(m, _, _)| models.contains(m));
    if ranked.is_empty() {
        report.note("no earlier ranking found; using the first configured models");
        return models.into_iter().take(n).map(|m| (m, Params::new())).collect();
    }
    // Stable sort keeps report order among ties.
    ranked.sort_by(|a, b| b.2.total_cmp(&a.2));
    ranked.into_iter().take(n).map(|(m, p, _)| (m, p)).collect()
}

struct Outcome {
    metrics: PairedMetrics,
    onehot: bool,
}

/// Hard/soft voting, stacking and blending over the top base learners, on
/// the original split and on the phase 2 preprocessing.
pub fn phase5(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("phase5");
    let bases = top_models(ctx, &mut report);
    if bases.len() < 2 {
        return Err(CliError::Config(format!("ensembles need at least 2 base models, {} available", bases.len())));
    }
    let best = selected_preprocessing(ctx, &mut report);
    let conditions = [("original", Preprocessing::ORIGINAL), ("best", best)];
    let p5 = &ctx.cfg.phase5;

    let mut base_t = Table::new(&with_metrics(&["condition", "strategy", "pca", "model"], &["error"]));
    let mut ens_t = Table::new(&with_metrics(
        &["condition", "strategy", "pca", "kind"],
        &["best_single_model", "best_single_oa", "delta_oa_pp", "onehot_fallback", "error"],
    ));
    for (cond, pre) in conditions {
        let (train, test) = ctx.train_test(pre.kind, None)?;
        let cfgs: Vec<_> = bases
            .iter()
            .map(|(m, p)| ctx.pipeline_config(pre.kind, pre.use_pca, spec_with(ctx, m, p), ctx.unit_seed("phase5", &[cond, m])))
            .collect();
        let singles: Vec<CliResult<PairedMetrics>> =
            cfgs.par_iter().map(|c| ctx.fit_paired(c, &train).and_then(|f| score(&f, &test))).collect();
        let mut best_single: Option<(&str, f64)> = None;
        for ((m, _), s) in bases.iter().zip(&singles) {
            let mut r = row(json!({
                "condition": cond,
                "strategy": pre.kind.as_str(),
                "pca": pre.use_pca,
                "model": m,
                "error": error_value(s),
            }));
            put_metrics(&mut r, s.as_ref().ok());
            base_t.push(r);
            if let Ok(s) = s {
                if best_single.is_none_or(|(_, b)| s.overall_accuracy > b) {
                    best_single = Some((m, s.overall_accuracy));
                }
            }
        }

        let outcomes: Vec<(CliResult<Outcome>, f64)> = EnsembleKind::ALL
            .par_iter()
            .map(|&kind| {
                time_it(|| {
                    let spec = EnsembleSpec {
                        kind,
                        base: cfgs.clone(),
                        meta: ctx.cfg.model_spec(&p5.meta),
                        oof_folds: p5.oof_folds,
                        holdout_frac: p5.holdout_frac,
                        seed: ctx.unit_seed("phase5", &[cond, kind.as_str()]),
                    };
                    let e = fit_ensemble(&ctx.registry, &spec, &train)?;
                    let metrics = score_paired(
                        &test.ripeness,
                        &predict_ensemble(&e, Task::Ripeness, &test.x)?,
                        &test.firmness,
                        &predict_ensemble(&e, Task::Firmness, &test.x)?,
                    )?;
                    Ok(Outcome { metrics, onehot: e.used_onehot() })
                })
            })
            .collect();
        for (kind, (o, secs)) in EnsembleKind::ALL.iter().zip(&outcomes) {
            report.time(format!("{cond}.{}_s", kind.as_str()), *secs);
            let oa = o.as_ref().ok().map(|o| o.metrics.overall_accuracy);
            let mut r = row(json!({
                "condition": cond,
                "strategy": pre.kind.as_str(),
                "pca": pre.use_pca,
                "kind": kind.as_str(),
                "best_single_model": best_single.map(|b| b.0),
                "best_single_oa": best_single.map(|b| b.1),
                "delta_oa_pp": oa.zip(best_single).map(|(oa, b)| 100.0 * (oa - b.1)),
                "onehot_fallback": o.as_ref().ok().map(|o| o.onehot),
                "error": error_value(o),
            }));
            put_metrics(&mut r, o.as_ref().ok().map(|o| &o.metrics));
            ens_t.push(r);
        }
    }
    report.add_table("bases", base_t);
    report.add_table("ensembles", ens_t);
    Ok(report)
}
