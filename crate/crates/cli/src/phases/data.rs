use std::fs;
use std::io::BufWriter;

use serde_json::json;
use spectrabench::dataset::{write_feature_table, Manifest, Split, Task};

use crate::config::DataConfig;
use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::report::{row, Report, Table};

const SPLITS: [Split; 3] = [Split::Train, Split::Test, Split::Unassigned];

/// Writes the synthetic dataset as a feature table plus manifest, and a
/// config that points at them.
pub fn synth(ctx: &Context) -> CliResult<Report> {
    if ctx.cfg.data.synthetic.is_none() {
        return Err(CliError::Config("synth needs a [data.synthetic] section".into()));
    }
    fs::create_dir_all(&ctx.out).map_err(CliError::write(&ctx.out))?;
    let table = ctx.out.join("features.csv");
    let manifest = ctx.out.join("manifest.toml");
    let file = fs::File::create(&table).map_err(CliError::write(&table))?;
    write_feature_table(&ctx.dataset, BufWriter::new(file))?;
    let grid = ctx.dataset.grid();
    Manifest { camera: "synthetic".into(), band_count: grid.len(), wavelengths_nm: grid.as_slice().to_vec() }
        .write(&manifest)?;

    let mut cfg = ctx.cfg.clone();
    cfg.data = DataConfig { table: Some("features.csv".into()), manifest: Some("manifest.toml".into()), synthetic: None };
    let config = ctx.out.join("config.toml");
    fs::write(&config, cfg.to_toml()?).map_err(CliError::write(&config))?;

    let mut report = Report::new("synth");
    let mut t = Table::new(&["file", "rows"]);
    t.push(row(json!({ "file": "features.csv", "rows": ctx.dataset.len() })));
    t.push(row(json!({ "file": "manifest.toml", "rows": grid.len() })));
    t.push(row(json!({ "file": "config.toml", "rows": null })));
    report.add_table("files", t);
    Ok(report)
}

/// Loads and checks the configured data and summarises its splits.
pub fn validate(ctx: &Context) -> CliResult<Report> {
    let ds = &ctx.dataset;
    let mut report = Report::new("validate");
    let grid = ds.grid().as_slice();
    report.note(format!("{} bands from {:.1} to {:.1} nm", grid.len(), grid[0], grid[grid.len() - 1]));

    let mut splits = Table::new(&["split", "count"]);
    let mut fruits = Table::new(&["split", "fruit", "count"]);
    for split in SPLITS {
        splits.push(row(json!({ "split": split, "count": ds.count(split) })));
        for (fruit, n) in ds.fruit_counts(split) {
            fruits.push(row(json!({ "split": split, "fruit": fruit.to_string(), "count": n })));
        }
    }
    report.add_table("splits", splits);
    report.add_table("fruits", fruits);

    let mut labels = Table::new(&["task", "class", "split", "count"]);
    for task in Task::BOTH {
        let names = task.class_names();
        for split in SPLITS {
            let mut counts = vec![0usize; names.len()];
            for &i in &ds.indices(split) {
                counts[ds.samples()[i].label(task)] += 1;
            }
            for (name, n) in names.iter().zip(counts) {
                labels.push(row(json!({ "task": task.as_str(), "class": name, "split": split, "count": n })));
            }
        }
    }
    report.add_table("labels", labels);
    Ok(report)
}
