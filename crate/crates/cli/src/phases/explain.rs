use serde_json::json;
use spectrabench::dataset::Task;
use spectrabench::explain::{
    band_importance, consensus_bands, group_ablation, permutation_importance, rolling_band_importance, ImportanceSource,
};
use spectrabench::models::Params;
use spectrabench::transforms::Transform;

use super::{selected_preprocessing, spec_with, tuned_models};
use crate::context::Context;
use crate::error::CliResult;
use crate::report::{row, Report, Table};

/// Band and transform-group importance for one model, consensus VIS bands
/// and leave-one-group-out ablation.
pub fn phase6(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("phase6");
    let p6 = &ctx.cfg.phase6;
    let (pre, params) = match tuned_models(ctx).and_then(|ts| ts.into_iter().find(|t| t.model == p6.model)) {
        Some(t) => (t.pre, t.params),
        None => {
            report.note(format!("no phase3 result for {}; using configured defaults", p6.model));
            (selected_preprocessing(ctx, &mut report), Params::new())
        }
    };
    let (train, test) = ctx.train_test(pre.kind, None)?;
    let cfg = ctx.pipeline_config(pre.kind, pre.use_pca, spec_with(ctx, &p6.model, &params), ctx.unit_seed("phase6", &["fit"]));
    let fitted = ctx.fit_paired(&cfg, &train)?;
    let metric_name = serde_json::to_value(p6.metric)?;

    let mut model_t = Table::new(&["model", "strategy", "pca", "task", "source", "metric", "params"]);
    let grid = ctx.dataset.grid();
    let n_bands = grid.len();
    let mut per_task = Vec::new();
    for task in Task::BOTH {
        let model = fitted.get(task);
        let (imp, source) = match model.input_importance() {
            Some(imp) if !p6.permutation => (imp, ImportanceSource::Impurity),
            found => {
                if found.is_none() {
                    report.note(format!("{} has no built-in importance; using permutation importance", p6.model));
                }
                let seed = ctx.unit_seed("phase6", &["perm", task.as_str()]);
                let imp = permutation_importance(model, &test.x, test.labels(task), task, p6.metric, p6.n_repeats, seed)?;
                (imp, ImportanceSource::Permutation)
            }
        };
        model_t.push(row(json!({
            "model": p6.model,
            "strategy": pre.kind.as_str(),
            "pca": pre.use_pca,
            "task": task.as_str(),
            "source": source,
            "metric": metric_name,
            "params": serde_json::to_string(&params)?,
        })));
        per_task.push((task, imp));
    }
    report.add_table("model", model_t);

    let mut bands_t = Table::new(&["task", "band", "wavelength_nm", "importance", "rolling_mean", "rolling_std"]);
    let mut groups_t = Table::new(&["task", "transform", "importance", "share"]);
    let mut per_band = Vec::new();
    for (task, imp) in &per_task {
        let pb = band_importance(imp, &train.group_map, n_bands)?;
        let (mean, std) = rolling_band_importance(&pb, p6.window)?;
        for (b, wl) in grid.as_slice().iter().enumerate() {
            bands_t.push(row(json!({
                "task": task.as_str(),
                "band": b,
                "wavelength_nm": wl,
                "importance": pb[b],
                "rolling_mean": mean[b],
                "rolling_std": std[b],
            })));
        }
        let total: f64 = imp.iter().sum();
        for t in Transform::ORDER {
            let s: f64 = imp.iter().zip(&train.group_map).filter(|(_, g)| g.transform == t).map(|(v, _)| v).sum();
            groups_t.push(row(json!({
                "task": task.as_str(),
                "transform": t.as_str(),
                "importance": s,
                "share": if total == 0.0 { None } else { Some(s / total) },
            })));
        }
        per_band.push(pb);
    }
    report.add_table("bands", bands_t);
    report.add_table("groups", groups_t);

    let mut consensus_t = Table::new(&["rank", "band", "wavelength_nm", "joint_rank"]);
    match consensus_bands(&per_band[0], &per_band[1], grid, p6.cutoff_nm, p6.top_n) {
        Ok(sel) => {
            for (i, ((b, wl), j)) in sel.band_indices.iter().zip(&sel.wavelengths_nm).zip(&sel.joint_ranks).enumerate() {
                consensus_t.push(row(json!({ "rank": i + 1, "band": b, "wavelength_nm": wl, "joint_rank": j })));
            }
        }
        Err(e) => report.note(format!("consensus bands skipped: {e}")),
    }
    report.add_table("consensus", consensus_t);

    let mut ablation_t = Table::new(&["removed", "task", "metric", "score_full", "score_without", "drop_pct"]);
    for a in group_ablation(&ctx.registry, &cfg, &train, &test, p6.metric)? {
        ablation_t.push(row(json!({
            "removed": a.removed.as_str(),
            "task": a.task.as_str(),
            "metric": metric_name,
            "score_full": a.score_full,
            "score_without": a.score_without,
            "drop_pct": a.drop_pct,
        })));
    }
    report.add_table("ablation", ablation_t);
    Ok(report)
}
