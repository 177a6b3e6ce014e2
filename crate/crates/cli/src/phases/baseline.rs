use rayon::prelude::*;
use serde_json::json;
use spectrabench::evaluate::{time_it, PairedMetrics};
use spectrabench::transforms::BandSubset;

use super::{error_value, put_metrics, with_metrics, Preprocessing};
use crate::context::{score, Context};
use crate::error::CliResult;
use crate::report::{row, Report, Table};

pub(crate) struct ModelScore {
    pub model: String,
    pub metrics: CliResult<PairedMetrics>,
    pub seconds: f64,
}

/// Every configured model with its configured defaults, trained on the
/// original training split and scored on the test split.
pub(crate) fn default_scores(ctx: &Context, subset: Option<&BandSubset>, phase: &str) -> CliResult<Vec<ModelScore>> {
    let pre = Preprocessing::ORIGINAL;
    let (train, test) = ctx.train_test(pre.kind, subset)?;
    let tag = subset.map_or("full", |s| s.name.as_str());
    Ok(ctx
        .cfg
        .model_names()
        .par_iter()
        .map(|m| {
            let cfg = ctx.pipeline_config(pre.kind, pre.use_pca, ctx.cfg.model_spec(m), ctx.unit_seed(phase, &[tag, m]));
            let (metrics, seconds) = time_it(|| ctx.fit_paired(&cfg, &train).and_then(|f| score(&f, &test)));
            ModelScore { model: m.clone(), metrics, seconds }
        })
        .collect())
}

/// Defaults baseline: one metrics row per model.
pub fn phase1(ctx: &Context) -> CliResult<Report> {
    let mut report = Report::new("phase1");
    let scores = default_scores(ctx, None, "phase1")?;
    let mut t = Table::new(&with_metrics(&["model"], &["error"]));
    for s in &scores {
        let mut r = row(json!({ "model": s.model, "error": error_value(&s.metrics) }));
        put_metrics(&mut r, s.metrics.as_ref().ok());
        t.push(r);
        report.time(format!("{}.fit_and_score_s", s.model), s.seconds);
    }
    report.add_table("metrics", t);
    Ok(report)
}
