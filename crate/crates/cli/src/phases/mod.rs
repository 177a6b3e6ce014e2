//! The benchmark phases. Each returns a [`Report`]; writing is left to the
//! caller.

mod bands;
mod baseline;
mod data;
mod ensemble;
mod explain;
mod grid;
mod stats;
mod tuning;

pub use bands::bands;
pub use baseline::phase1;
pub use data::{synth, validate};
pub use ensemble::phase5;
pub use explain::phase6;
pub use grid::phase2;
pub use stats::phase4;
pub use tuning::phase3;

use serde_json::{json, Value};
use spectrabench::balance::BalanceKind;
use spectrabench::evaluate::{PairedMetrics, FOLD_METRICS};
use spectrabench::models::{ModelSpec, Params};
use spectrabench::pipeline::PairedData;

use crate::context::Context;
use crate::error::CliResult;
use crate::report::{load_report, report_rows, Report, Row};

/// Column list: `head`, the eight paired metrics, then `tail`.
pub(crate) fn with_metrics<'a>(head: &[&'a str], tail: &[&'a str]) -> Vec<&'a str> {
    head.iter().chain(FOLD_METRICS.iter()).chain(tail).copied().collect()
}

/// Adds the eight paired metrics to `row`; nulls when `m` is absent.
pub(crate) fn put_metrics(row: &mut Row, m: Option<&PairedMetrics>) {
    for name in FOLD_METRICS {
        row.insert(name.into(), m.and_then(|m| m.metric(name)).map_or(Value::Null, |v| json!(v)));
    }
}

pub(crate) fn error_value<T>(r: &CliResult<T>) -> Value {
    match r {
        Ok(_) => Value::Null,
        Err(e) => Value::String(e.to_string()),
    }
}

pub(crate) fn kind_from_str(s: &str) -> Option<BalanceKind> {
    serde_json::from_value(Value::String(s.into())).ok()
}

/// Preprocessing chosen in phase 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct Preprocessing {
    pub kind: BalanceKind,
    pub use_pca: bool,
}

impl Preprocessing {
    pub const ORIGINAL: Preprocessing = Preprocessing { kind: BalanceKind::Original, use_pca: false };
}

/// The phase 2 selection from the output directory, or the original split
/// without PCA (with a note) when phase 2 has not been run.
pub(crate) fn selected_preprocessing(ctx: &Context, report: &mut Report) -> Preprocessing {
    let found = load_report(&ctx.out, "phase2").and_then(|r| {
        let row = report_rows(&r, "selected").first().copied().cloned()?;
        Some(Preprocessing { kind: kind_from_str(row.get("strategy")?.as_str()?)?, use_pca: row.get("pca")?.as_bool()? })
    });
    found.unwrap_or_else(|| {
        report.note("phase2 report not found; using the original split without PCA");
        Preprocessing::ORIGINAL
    })
}

/// A model's tuned configuration as recorded by phase 3.
#[derive(Debug, Clone)]
pub(crate) struct Tuned {
    pub model: String,
    pub pre: Preprocessing,
    pub params: Params,
    pub overall_accuracy: f64,
}

/// Successful phase 3 rows, in report order.
pub(crate) fn tuned_models(ctx: &Context) -> Option<Vec<Tuned>> {
    let r = load_report(&ctx.out, "phase3")?;
    let rows = report_rows(&r, "results");
    Some(
        rows.iter()
            .filter(|row| row.get("error").is_none_or(Value::is_null))
            .filter_map(|row| {
                Some(Tuned {
                    model: row.get("model")?.as_str()?.to_string(),
                    pre: Preprocessing {
                        kind: kind_from_str(row.get("strategy")?.as_str()?)?,
                        use_pca: row.get("pca")?.as_bool()?,
                    },
                    params: serde_json::from_str(row.get("params")?.as_str()?).ok()?,
                    overall_accuracy: row.get("overall_accuracy")?.as_f64()?,
                })
            })
            .collect(),
    )
}

/// Config defaults overlaid with tuned parameters.
pub(crate) fn spec_with(ctx: &Context, model: &str, params: &Params) -> ModelSpec {
    let mut spec = ctx.cfg.model_spec(model);
    spec.hyperparams.extend(params.iter().map(|(k, v)| (k.clone(), v.clone())));
    spec
}

/// Rows of `a` followed by rows of `b`.
pub(crate) fn concat(a: &PairedData, b: &PairedData) -> PairedData {
    let na = a.len();
    let x = nalgebra::DMatrix::from_fn(na + b.len(), a.x.ncols(), |r, c| if r < na { a.x[(r, c)] } else { b.x[(r - na, c)] });
    PairedData {
        x,
        ripeness: a.ripeness.iter().chain(&b.ripeness).copied().collect(),
        firmness: a.firmness.iter().chain(&b.firmness).copied().collect(),
        ids: a.ids.iter().chain(&b.ids).cloned().collect(),
        group_map: a.group_map.clone(),
    }
}
