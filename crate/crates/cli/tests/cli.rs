use std::path::{Path, PathBuf};
use std::process::Command;

use serde_json::Value;
use tempfile::TempDir;

const BASE: &str = r#"
seed = 5
models = ["decision_tree", "extra_trees", "knn", "majority"]

[data.synthetic]
seed = 2
class_counts = [30, 30, 30]
n_bands = 120

[phase2]
strategies = ["original", "smote", "undersample"]
bootstrap_resamples = 100

[phase3]
n_trials = 3

[phase4]
cv_k = 10

[phase6]
n_repeats = 2
"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("run.toml"), config).unwrap();
        Run { dir }
    }

    fn out(&self) -> PathBuf {
        self.dir.path().join("out")
    }

    fn exec(&self, phase: &str, extra: &[&str]) -> std::process::Output {
        Command::new(env!("CARGO_BIN_EXE_spectrabench"))
            .arg(phase)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out())
            .args(extra)
            .env("RUST_LOG", "error")
            .output()
            .unwrap()
    }

    fn ok(&self, phase: &str, extra: &[&str]) {
        let o = self.exec(phase, extra);
        assert!(o.status.success(), "{phase}: {}", String::from_utf8_lossy(&o.stderr));
    }

    fn report(&self, phase: &str) -> Value {
        serde_json::from_slice(&std::fs::read(self.out().join(format!("{phase}.json"))).unwrap()).unwrap()
    }
}

fn rows<'a>(report: &'a Value, table: &str) -> &'a Vec<Value> {
    report["tables"][table]["rows"].as_array().unwrap_or_else(|| panic!("table {table} missing"))
}

fn f(row: &Value, key: &str) -> f64 {
    row[key].as_f64().unwrap_or_else(|| panic!("{key} missing in {row}"))
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

#[test]
fn phase1_learns_and_reruns_identically() {
    let run = Run::new(BASE);
    run.ok("phase1", &[]);
    let r = run.report("phase1");
    let metrics = rows(&r, "metrics");
    assert_eq!(metrics.len(), 4);
    for row in metrics {
        let oa = f(row, "overall_accuracy");
        match row["model"].as_str().unwrap() {
            "decision_tree" | "extra_trees" => assert!(oa >= 0.9, "{row}"),
            "majority" => assert!(oa < 0.6, "{row}"),
            _ => {}
        }
    }
    assert_eq!(r["seed"], 5);
    assert_eq!(r["config_hash"].as_str().unwrap().len(), 64);

    let first = read(&run.out().join("phase1.json"));
    let csv = read(&run.out().join("phase1_metrics.csv"));
    run.ok("phase1", &[]);
    assert_eq!(first, read(&run.out().join("phase1.json")));
    assert_eq!(csv, read(&run.out().join("phase1_metrics.csv")));

    run.ok("phase1", &["--models", "knn"]);
    assert_eq!(rows(&run.report("phase1"), "metrics").len(), 1);
    run.ok("phase1", &["--seed", "6"]);
    assert_ne!(first, read(&run.out().join("phase1.json")));
}

#[test]
fn phase2_grid_covers_every_cell() {
    let run = Run::new(BASE);
    run.ok("phase2", &["--models", "decision_tree,knn"]);
    let r = run.report("phase2");
    assert_eq!(rows(&r, "grid").len(), 3 * 2 * 2);
    assert_eq!(rows(&r, "strategy_summary").len(), 6);
    assert_eq!(rows(&r, "best_per_model").len(), 2);
    assert_eq!(rows(&r, "selected").len(), 1);
    let b = &rows(&r, "bootstrap")[0];
    assert!(f(b, "ci95_lo") <= f(b, "difference") && f(b, "difference") <= f(b, "ci95_hi"));
    assert!(r["notes"].to_string().contains("leakage"));

    run.ok("phase2", &["--models", "decision_tree,knn", "--select-on", "validation"]);
    let r = run.report("phase2");
    assert!(rows(&r, "grid").iter().all(|row| row["validation_oa"].is_f64()));
    assert_eq!(rows(&r, "selected")[0]["select_on"], "validation");
}

#[test]
fn phase4_rank_tests_and_folds() {
    let run = Run::new(BASE);
    run.ok("phase4", &[]);
    let r = run.report("phase4");
    let fr = &rows(&r, "friedman")[0];
    assert_eq!(fr["dof"], 3);
    assert_eq!(fr["n_folds"], 10);
    let nem = &rows(&r, "nemenyi")[0];
    assert!((f(nem, "q") - 2.569032).abs() < 1e-9);
    assert_eq!(rows(&r, "nemenyi_pairs").len(), 6);
    let ranks = rows(&r, "ranks");
    let majority = ranks.iter().find(|row| row["model"] == "majority").unwrap();
    assert!(f(majority, "mean_rank") >= 3.5, "{majority}");
    assert_eq!(rows(&r, "folds").len(), 4 * 10);
    for w in rows(&r, "wilson") {
        assert!(f(w, "ci95_lo") <= f(w, "overall_accuracy") && f(w, "overall_accuracy") <= f(w, "ci95_hi"));
    }
}

#[test]
fn later_phases_consume_earlier_reports() {
    let run = Run::new(BASE);
    for p in ["phase2", "phase3", "phase5", "phase6"] {
        run.ok(p, &["--models", "decision_tree,extra_trees,knn"]);
    }
    let p3 = run.report("phase3");
    let results = rows(&p3, "results");
    assert_eq!(results.len(), 3);
    let p2 = run.report("phase2");
    let selected = &rows(&p2, "selected")[0];
    assert!(results.iter().all(|row| row["strategy"] == selected["strategy"]));
    assert_eq!(rows(&p3, "history").len(), 9);

    let p5 = run.report("phase5");
    assert_eq!(rows(&p5, "ensembles").len(), 2 * 4);
    assert_eq!(rows(&p5, "bases").len(), 2 * 3);

    let p6 = run.report("phase6");
    assert_eq!(rows(&p6, "bands").len(), 2 * 120);
    assert_eq!(rows(&p6, "ablation").len(), 10);
    let consensus = rows(&p6, "consensus");
    assert_eq!(consensus.len(), 3);
    assert!(consensus.iter().all(|row| f(row, "wavelength_nm") < 700.0));
    for task in ["ripeness", "firmness"] {
        let share: f64 = rows(&p6, "groups").iter().filter(|g| g["task"] == task).map(|g| f(g, "share")).sum();
        assert!((share - 1.0).abs() < 1e-9, "{task}: {share}");
    }
}

#[test]
fn band_subsets_use_their_indices() {
    let config = format!("{BASE}\n[bands]\nsubsets = [\"vis3\", \"rgb\"]\ncustom = [3, 40, 70, 110]\n");
    let run = Run::new(&config);
    run.ok("bands", &["--models", "extra_trees"]);
    let r = run.report("bands");
    let base = rows(&r, "baseline");
    assert_eq!(base.len(), 3);
    let by = |name: &str| base.iter().find(|row| row["subset"] == name).unwrap();
    assert_eq!(by("vis3")["bands"], serde_json::json!([18, 52, 89]));
    assert_eq!(by("rgb")["bands"], serde_json::json!([19, 56, 93]));
    assert_eq!(by("vis3")["n_features"], 15);
    assert_eq!(by("custom")["n_features"], 20);
    assert!(base.iter().all(|row| row["recovery"].is_f64()));
    assert_eq!(rows(&r, "tuned").len(), 3);
}

#[test]
fn synth_output_round_trips_through_validate() {
    let run = Run::new(BASE);
    run.ok("synth", &[]);
    let out = run.out();
    for f in ["features.csv", "manifest.toml", "config.toml"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let o = Command::new(env!("CARGO_BIN_EXE_spectrabench"))
        .args(["validate", "--config"])
        .arg(out.join("config.toml"))
        .arg("--out")
        .arg(run.dir.path().join("checked"))
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_slice(&read(&run.dir.path().join("checked/validate.json"))).unwrap();
    let total: u64 = rows(&r, "splits").iter().map(|row| row["count"].as_u64().unwrap()).sum();
    assert_eq!(total, 90);
    assert!(r["provenance"].as_str().unwrap().contains("sha256:"));
}

#[test]
fn exit_codes_separate_config_and_data_errors() {
    let run = Run::new(BASE);
    assert_eq!(run.exec("phase1", &["--models", "svm"]).status.code(), Some(2));

    let bad = Run::new(&format!("colour = 1\n{BASE}"));
    assert_eq!(bad.exec("phase1", &[]).status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_spectrabench"))
        .args(["phase1", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    run.ok("synth", &[]);
    let table = run.out().join("features.csv");
    let text = String::from_utf8(read(&table)).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    lines[1] = lines[1].replacen(',', ",not_a_fruit_row,", 1);
    std::fs::write(&table, lines.join("\n")).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_spectrabench"))
        .args(["validate", "--config"])
        .arg(run.out().join("config.toml"))
        .arg("--out")
        .arg(run.dir.path().join("x"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn resume_reuses_cached_fits() {
    let run = Run::new(BASE);
    run.ok("phase3", &["--models", "knn,decision_tree", "--resume"]);
    let first = read(&run.out().join("phase3.json"));
    let cached = std::fs::read_dir(run.out().join("cache")).unwrap().count();
    assert!(cached >= 2);
    run.ok("phase3", &["--models", "knn,decision_tree", "--resume"]);
    assert_eq!(first, read(&run.out().join("phase3.json")));
    assert_eq!(cached, std::fs::read_dir(run.out().join("cache")).unwrap().count());
}

#[test]
fn markdown_is_optional() {
    let run = Run::new(BASE);
    run.ok("validate", &[]);
    assert!(!run.out().join("validate.md").exists());
    run.ok("validate", &["--markdown"]);
    assert!(String::from_utf8(read(&run.out().join("validate.md"))).unwrap().contains("splits"));
}
