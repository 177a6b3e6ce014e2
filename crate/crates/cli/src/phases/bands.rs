use std::collections::BTreeMap;

use serde_json::json;

use super::baseline::default_scores;
use super::tuning::tuned_scores;
use super::{error_value, put_metrics, selected_preprocessing, tuned_models, with_metrics};
use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::report::{load_report, report_rows, row, Report, Table};

fn recovery(oa: Option<f64>, full: Option<&f64>) -> Option<f64> {
    match (oa, full) {
        (Some(oa), Some(&full)) if full > 0.0 => Some(oa / full),
        _ => None,
    }
}

/// Defaults and tuned models on reduced band subsets, with accuracy
/// recovered relative to the full spectrum.
pub fn bands(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("bands");
    let subsets = ctx.cfg.band_subsets()?;
    let n_bands = ctx.dataset.grid().len();
    for s in &subsets {
        s.validate_for(n_bands).map_err(|e| CliError::Config(format!("band subset {}: {e}", s.name)))?;
    }

    let full_default: BTreeMap<String, f64> = match load_report(&ctx.out, "phase1") {
        Some(r) => report_rows(&r, "metrics")
            .iter()
            .filter_map(|row| Some((row.get("model")?.as_str()?.to_string(), row.get("overall_accuracy")?.as_f64()?)))
            .collect(),
        None => {
            report.note("phase1 report not found; computing the full-spectrum reference here");
            default_scores(ctx, None, "phase1")?
                .into_iter()
                .filter_map(|s| Some((s.model, s.metrics.ok()?.overall_accuracy)))
                .collect()
        }
    };
    let full_tuned: Option<BTreeMap<String, f64>> =
        tuned_models(ctx).map(|ts| ts.into_iter().map(|t| (t.model, t.overall_accuracy)).collect());
    if full_tuned.is_none() {
        report.note("phase3 report not found; tuned recovery ratios are left empty");
    }
    let pre = selected_preprocessing(ctx, &mut report);

    let tail = ["full_spectrum_oa", "recovery", "error"];
    let mut base_t = Table::new(&with_metrics(&["subset", "bands", "n_features", "model"], &tail));
    let mut tuned_t = Table::new(&with_metrics(
        &["subset", "bands", "n_features", "model", "strategy", "pca"],
        &["params", "full_spectrum_oa", "recovery", "error"],
    ));
    for s in &subsets {
        let indices = serde_json::to_value(&s.indices)?;
        let n_features = ctx.train_test(pre.kind, Some(s))?.0.x.ncols();
        for d in default_scores(ctx, Some(s), "bands")? {
            let full = full_default.get(&d.model);
            let oa = d.metrics.as_ref().ok().map(|m| m.overall_accuracy);
            let mut r = row(json!({
                "subset": s.name,
                "bands": indices,
                "n_features": n_features,
                "model": d.model,
                "full_spectrum_oa": full,
                "recovery": recovery(oa, full),
                "error": error_value(&d.metrics),
            }));
            put_metrics(&mut r, d.metrics.as_ref().ok());
            base_t.push(r);
            report.time(format!("{}.{}.default_s", s.name, d.model), d.seconds);
        }
        for t in tuned_scores(ctx, pre, Some(s), "bands")? {
            let full = full_tuned.as_ref().and_then(|f| f.get(&t.model));
            let ok = t.outcome.as_ref().ok();
            let mut r = row(json!({
                "subset": s.name,
                "bands": indices,
                "n_features": n_features,
                "model": t.model,
                "strategy": pre.kind.as_str(),
                "pca": pre.use_pca,
                "params": ok.map(|(st, _)| serde_json::to_string(&st.best_params)).transpose()?,
                "full_spectrum_oa": full,
                "recovery": recovery(ok.map(|(_, m)| m.overall_accuracy), full),
                "error": error_value(&t.outcome),
            }));
            put_metrics(&mut r, ok.map(|(_, m)| m));
            tuned_t.push(r);
            report.time(format!("{}.{}.tuned_s", s.name, t.model), t.seconds);
        }
    }
    report.add_table("baseline", base_t);
    report.add_table("tuned", tuned_t);
    Ok(report)
}
