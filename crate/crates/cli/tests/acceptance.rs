//! Acceptance checks. Prints one PASS/FAIL/SKIP line per criterion and
//! exits non-zero when any criterion fails.
//!
//! Criterion 4 needs the public VIS feature tables: point
//! `SPECTRABENCH_REAL_CONFIG` at a run config whose `[data]` section names
//! them.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use rand::Rng;
use spectrabench::balance::{smote, BalanceKind, BalanceStrategy};
use spectrabench::dataset::{synth_dataset, Dataset, Sample, Split, SynthSpec, Task, WavelengthGrid};
use spectrabench::ensemble::{fit_task_ensemble, EnsembleKind, EnsembleSpec};
use spectrabench::evaluate::{
    bootstrap_median_range_diff, cohen_d_paired, confusion, cross_validate, friedman, nemenyi, paired_metrics,
    task_metrics, wilson_ci,
};
use spectrabench::models::boosting::{fit_boosting, BoostingParams};
use spectrabench::models::{builtin, ModelSpec, ParamValue, Params};
use spectrabench::pipeline::{fit_paired, PairedData, PipelineConfig};
use spectrabench::seed::rng_from;
use spectrabench::transforms::{continuum, continuum_removal, first_derivative, snv, SubsetMode};
use spectrabench::tune::{run_study, suggest_random, SearchSpace};
use spectrabench::Error;
use spectrabench_cli::config::RunConfig;
use spectrabench_cli::context::{Context, Options};
use spectrabench_cli::report::{load_report, report_rows};
use spectrabench_cli::{run_phase, Command};

enum Verdict {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Verdict;

fn verdict(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)*) => {
        if !$cond {
            return Verdict::Fail(format!($($fmt)*));
        }
    };
}

macro_rules! tryv {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(e) => return Verdict::Fail(format!("{}: {e}", stringify!($e))),
        }
    };
}

// Ripeness and firmness accuracies (%) of the twenty published phase 3 models.
const RA: [f64; 20] = [
    63.0, 60.9, 58.0, 54.3, 52.2, 48.6, 47.1, 48.6, 44.2, 39.9, 50.7, 42.0, 41.3, 31.9, 39.1, 42.0, 44.9, 37.7, 37.0,
    47.8,
];
const FA: [f64; 20] = [
    87.0, 86.2, 80.4, 80.4, 79.0, 81.9, 80.4, 75.4, 73.9, 78.3, 66.7, 74.6, 72.5, 81.9, 73.2, 65.9, 54.3, 55.8, 55.1,
    29.0,
];

fn c1_wilson() -> Verdict {
    let (lo, hi) = tryv!(wilson_ci(104, 138, 0.95));
    verdict((lo - 0.676).abs() <= 0.001 && (hi - 0.818).abs() <= 0.001, format!("wilson_ci(104, 138) = [{lo:.4}, {hi:.4}]"))
}

fn c2_cohen() -> Verdict {
    let d = tryv!(cohen_d_paired(&FA, &RA));
    verdict((d - 1.84).abs() <= 0.02, format!("paired d(FA, RA) = {d:.4}"))
}

fn c3_oa() -> Verdict {
    // 63 of 100 ripeness and 87 of 100 firmness predictions correct.
    let r_true: Vec<usize> = (0..100).map(|i| i % 3).collect();
    let r_pred: Vec<usize> = r_true.iter().enumerate().map(|(i, &c)| if i < 63 { c } else { (c + 1) % 3 }).collect();
    let f_true: Vec<usize> = (0..100).map(|i| i % 3).collect();
    let f_pred: Vec<usize> = f_true.iter().enumerate().map(|(i, &c)| if i < 87 { c } else { (c + 1) % 3 }).collect();
    let r = tryv!(confusion(&r_true, &r_pred, &[0, 1, 2]));
    let f = tryv!(confusion(&f_true, &f_pred, &[0, 1, 2, 3]));
    let m = paired_metrics(&r, &f);
    verdict(100.0 * m.overall_accuracy == 75.0, format!("OA = {}", 100.0 * m.overall_accuracy))
}

fn real_config() -> Option<PathBuf> {
    std::env::var_os("SPECTRABENCH_REAL_CONFIG").map(PathBuf::from)
}

fn c4_real_data() -> Verdict {
    let Some(path) = real_config() else {
        return Verdict::Skip("set SPECTRABENCH_REAL_CONFIG to a config naming the public feature tables".into());
    };
    let mut cfg = tryv!(RunConfig::load(&path));
    cfg.models = Some(vec!["extra_trees".into()]);
    cfg.phase2.strategies = vec![BalanceKind::StratifiedResplit];
    cfg.phase2.pca = vec![false];
    cfg.resplit.counts = spectrabench_cli::config::ResplitCounts::Preset(spectrabench_cli::config::CountPreset::Paper);
    cfg.bands.subsets = vec!["vis3".into(), "rgb".into()];
    cfg.bands.custom = None;
    cfg.phase3.n_trials = 1;
    let dir = tryv!(tempfile::tempdir());
    let ctx = tryv!(Context::new(cfg, &Options { out: dir.path().into(), resume: false, markdown: false }));
    let start = Instant::now();
    for c in [Command::Phase1, Command::Phase2, Command::Bands] {
        let r = tryv!(run_phase(&ctx, c));
        tryv!(ctx.write(&r));
    }
    let p2 = load_report(dir.path(), "phase2").unwrap_or_default();
    let oa = report_rows(&p2, "grid").first().and_then(|r| r.get("overall_accuracy")?.as_f64());
    let bands = load_report(dir.path(), "bands").unwrap_or_default();
    let rec: Vec<(String, f64)> = report_rows(&bands, "baseline")
        .iter()
        .filter_map(|r| Some((r.get("subset")?.as_str()?.to_string(), r.get("recovery")?.as_f64()?)))
        .collect();
    let Some(oa) = oa else { return Verdict::Fail("no phase2 OA".into()) };
    let ok = (100.0 * oa - 75.0).abs() <= 5.0 && rec.len() == 2 && rec.iter().all(|(_, r)| *r >= 0.9);
    verdict(ok, format!("ExtraTrees resplit OA {:.1}%, recovery {rec:?}, {:.0}s", 100.0 * oa, start.elapsed().as_secs_f64()))
}

fn grid(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    let mut w = 400.0;
    (0..n)
        .map(|_| {
            w += rng.random_range(0.5..5.0);
            w
        })
        .collect()
}

fn c5_transforms() -> Verdict {
    let mut rng = rng_from(5);
    for t in 0..1000 {
        let n = rng.random_range(3..80);
        let wl = grid(&mut rng, n);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..1.0)).collect();
        let c = tryv!(continuum(&s, &wl));
        let cr = tryv!(continuum_removal(&s, &wl));
        ensure!(c.iter().zip(&s).all(|(c, s)| *c >= s - 1e-12), "spectrum {t}: hull below the spectrum");
        ensure!(cr[0] == 1.0 && cr[n - 1] == 1.0, "spectrum {t}: endpoint CR {} {}", cr[0], cr[n - 1]);
        ensure!(cr.iter().all(|v| *v > 0.0 && *v <= 1.0 + 1e-12), "spectrum {t}: CR outside (0, 1]");
    }
    for t in 0..100 {
        let (a, b, c) = (rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1e-3..1e-3));
        let step = rng.random_range(0.5..5.0);
        let wl: Vec<f64> = (0..50).map(|i| 400.0 + step * i as f64).collect();
        let s: Vec<f64> = wl.iter().map(|l| a + b * l + c * l * l).collect();
        let d = tryv!(first_derivative(&s, &wl));
        for i in 1..49 {
            let exact = b + 2.0 * c * wl[i];
            ensure!((d[i] - exact).abs() <= 1e-8 * (1.0 + exact.abs()), "quadratic {t}, band {i}: {} vs {exact}", d[i]);
        }
        let lin: Vec<f64> = wl.iter().map(|l| a + b * l).collect();
        ensure!(tryv!(first_derivative(&lin, &wl)).iter().all(|v| (v - b).abs() <= 1e-9), "linear {t}");
    }
    for t in 0..1000 {
        let n = rng.random_range(2..100);
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let z = tryv!(snv(&s));
        let mean = z.iter().sum::<f64>() / n as f64;
        let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
        ensure!(mean.abs() <= 1e-9 && (sd - 1.0).abs() <= 1e-9, "snv {t}: mean {mean}, sd {sd}");
    }
    Verdict::Pass("1000 hulls, 100 quadratics, 1000 SNV spectra".into())
}

fn brute_prf(y: &[usize], p: &[usize], c: usize) -> (f64, f64, f64) {
    let tp = y.iter().zip(p).filter(|(&a, &b)| a == c && b == c).count() as f64;
    let fp = y.iter().zip(p).filter(|(&a, &b)| a != c && b == c).count() as f64;
    let fneg = y.iter().zip(p).filter(|(&a, &b)| a == c && b != c).count() as f64;
    let prec = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
    let rec = if tp + fneg > 0.0 { tp / (tp + fneg) } else { 0.0 };
    let f1 = if prec + rec > 0.0 { 2.0 * prec * rec / (prec + rec) } else { 0.0 };
    (prec, rec, f1)
}

fn c6_statistics() -> Verdict {
    let mut rng = rng_from(6);
    for t in 0..200 {
        let n = rng.random_range(1..60);
        let y: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let p: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let m = task_metrics(&tryv!(confusion(&y, &p, &[0, 1, 2, 3])));
        let acc = y.iter().zip(&p).filter(|(a, b)| a == b).count() as f64 / n as f64;
        ensure!((m.accuracy - acc).abs() < 1e-12, "vector {t}: accuracy");
        let present: Vec<usize> = (0..4).filter(|c| y.contains(c)).collect();
        let (mut macro_f1, mut weighted) = (0.0, 0.0);
        for c in 0..4 {
            let (pr, rc, f1) = brute_prf(&y, &p, c);
            let cm = &m.per_class[&c];
            ensure!((cm.precision - pr).abs() < 1e-12 && (cm.recall - rc).abs() < 1e-12 && (cm.f1 - f1).abs() < 1e-12, "vector {t}, class {c}");
            if present.contains(&c) {
                macro_f1 += f1 / present.len() as f64;
                weighted += f1 * y.iter().filter(|&&v| v == c).count() as f64 / n as f64;
            }
        }
        ensure!((m.f1_macro - macro_f1).abs() < 1e-12 && (m.f1_weighted - weighted).abs() < 1e-12, "vector {t}: averaged F1");
    }
    let order = DMatrix::from_row_slice(3, 2, &[0.9, 0.8, 0.5, 0.6, 0.1, 0.2]);
    let fr = tryv!(friedman(&order));
    ensure!((fr.chi2 - 4.0).abs() < 1e-12 && fr.dof == 2, "strict order: chi2 {} dof {}", fr.chi2, fr.dof);
    let ties = tryv!(friedman(&DMatrix::from_element(4, 5, 0.7)));
    ensure!(ties.chi2 == 0.0, "full ties: chi2 {}", ties.chi2);
    let ranked = DMatrix::from_fn(20, 10, |m, f| 1.0 - 0.01 * m as f64 + 1e-4 * f as f64);
    let ne = tryv!(nemenyi(&ranked, 0.05));
    ensure!(ne.significant[0][19] && !ne.significant[0][1], "nemenyi pairs, CD {}", ne.critical_difference);
    let g = DMatrix::from_fn(6, 5, |m, c| 0.5 + 0.03 * m as f64 + 0.01 * c as f64 + 0.002 * ((m * c) % 3) as f64);
    let a = tryv!(bootstrap_median_range_diff(&g, 2000, 9, 0.95));
    let b = tryv!(bootstrap_median_range_diff(&g, 2000, 9, 0.95));
    ensure!(a == b, "bootstrap differs between identical runs");
    verdict(true, format!("200 label vectors; chi2 {}; CD {:.3}; bootstrap [{:.4}, {:.4}]", fr.chi2, ne.critical_difference, a.lo, a.hi))
}

fn c7_smote() -> Verdict {
    let mut rng = rng_from(7);
    for t in 0..100 {
        let n_classes = rng.random_range(2..5);
        let sizes: Vec<usize> = (0..n_classes).map(|_| rng.random_range(2..25)).collect();
        let dims = rng.random_range(1..6);
        let y: Vec<usize> = sizes.iter().enumerate().flat_map(|(c, &s)| std::iter::repeat_n(c, s)).collect();
        let x = DMatrix::from_fn(y.len(), dims, |_, _| rng.random_range(-3.0..3.0));
        let k = rng.random_range(1..6);
        let (xs, ys) = tryv!(smote(&x, &y, k, t));
        let max = *sizes.iter().max().unwrap();
        for c in 0..n_classes {
            ensure!(ys.iter().filter(|&&v| v == c).count() == max, "dataset {t}: class {c} not equalised");
        }
        ensure!(xs.rows(0, x.nrows()) == x, "dataset {t}: originals changed");
        for r in x.nrows()..xs.nrows() {
            let c = ys[r];
            let p = xs.row(r);
            let members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
            let on_segment = members.iter().any(|&a| {
                members.iter().any(|&b| {
                    if a == b {
                        return false;
                    }
                    let (xa, xb) = (x.row(a), x.row(b));
                    let d = xb - xa;
                    let dd = d.dot(&d);
                    let u = if dd > 0.0 { (p - xa).dot(&d) / dd } else { 0.0 };
                    (-1e-9..=1.0 + 1e-9).contains(&u) && (xa + d * u - p).amax() <= 1e-9
                })
            });
            ensure!(on_segment, "dataset {t}: synthetic row {r} off every same-class segment");
        }
    }
    Verdict::Pass("100 random datasets".into())
}

fn synth_data(seed: u64, separation: f64, test_fraction: f64) -> Result<(Dataset, PairedData, PairedData), Error> {
    let spec = SynthSpec { class_counts: [40, 40, 40], n_bands: 30, separation, test_fraction, ..SynthSpec::default() };
    let ds = synth_dataset(seed, &spec)?;
    let train = PairedData::from_dataset(&ds, &ds.indices(Split::Train), None, SubsetMode::default())?;
    let test = PairedData::from_dataset(&ds, &ds.indices(Split::Test), None, SubsetMode::default())?;
    Ok((ds, train, test))
}

fn config(model: &str, use_pca: bool) -> PipelineConfig {
    PipelineConfig::new(BalanceStrategy::new(BalanceKind::Smote), use_pca, ModelSpec::new(model)).with_seed(3)
}

fn c8_leakage() -> Verdict {
    let (ds, train, test) = tryv!(synth_data(8, 3.0, 0.3));
    // Corrupt every test spectrum and rebuild the features.
    let samples: Vec<Sample> = ds
        .samples()
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if s.split == Split::Test {
                s.spectrum.iter_mut().enumerate().for_each(|(i, v)| *v = 0.2 + 0.6 * ((i * 7 + s.sample_id.len()) % 11) as f64 / 11.0);
            }
            s
        })
        .collect();
    let grid = WavelengthGrid::new(ds.grid().as_slice().to_vec()).expect("valid grid");
    let mutated = tryv!(Dataset::new(grid, samples, "mutated"));
    let train2 = tryv!(PairedData::from_dataset(&mutated, &mutated.indices(Split::Train), None, SubsetMode::default()));
    let test2 = tryv!(PairedData::from_dataset(&mutated, &mutated.indices(Split::Test), None, SubsetMode::default()));
    ensure!(test2.x != test.x, "mutation did not reach the test features");
    let cfg = config("knn", true);
    let a = tryv!(fit_paired(builtin(), &cfg, &train));
    let b = tryv!(fit_paired(builtin(), &cfg, &train2));
    for task in Task::BOTH {
        let (pa, pb) = (a.get(task), b.get(task));
        ensure!(pa.scaler == pb.scaler && pa.pca == pb.pca, "{} scaler/PCA moved with test rows", task.as_str());
    }

    let pool = concat(&train, &test);
    let cv = tryv!(cross_validate(builtin(), &config("gaussian_nb", false), &pool, 5, 11));
    let mut seen = BTreeSet::new();
    for (f, fold) in cv.test_folds.iter().enumerate() {
        let test_ids: BTreeSet<&str> = fold.iter().map(|&i| pool.ids[i].as_str()).collect();
        let train_ids: BTreeSet<&str> =
            (0..pool.len()).filter(|i| !fold.contains(i)).map(|i| pool.ids[i].as_str()).collect();
        ensure!(test_ids.is_disjoint(&train_ids), "fold {f} overlaps its training rows");
        ensure!(fold.iter().all(|&i| seen.insert(i)), "row in two folds");
    }
    ensure!(seen.len() == pool.len(), "folds do not cover the pool");

    let base = vec![config("gaussian_nb", false), config("decision_tree", false)];
    let spec = EnsembleSpec::new(EnsembleKind::Stacking, base).with_seed(4);
    let y = train.labels(Task::Ripeness);
    tryv!(fit_task_ensemble(builtin(), &spec, &train.x, y, &train.ids, 3));
    // A sample duplicated under one id would train the model that scores it.
    let mut rows: Vec<usize> = (0..train.len()).collect();
    rows.push(0);
    let dup = train.select(&rows);
    match fit_task_ensemble(builtin(), &spec, &dup.x, dup.labels(Task::Ripeness), &dup.ids, 3) {
        Err(Error::Integrity(_)) => {}
        other => return Verdict::Fail(format!("duplicated id not rejected: {:?}", other.map(|_| ()))),
    }
    Verdict::Pass(format!("{} folds disjoint; scaler/PCA fixed under test mutation; stacking rejects id reuse", cv.k))
}

/// Rows of `a` followed by rows of `b`.
fn concat(a: &PairedData, b: &PairedData) -> PairedData {
    let rows: Vec<usize> = (0..a.len()).collect();
    let mut out = a.select(&rows);
    out.x = DMatrix::from_fn(a.len() + b.len(), a.x.ncols(), |r, c| if r < a.len() { a.x[(r, c)] } else { b.x[(r - a.len(), c)] });
    out.ripeness.extend_from_slice(&b.ripeness);
    out.firmness.extend_from_slice(&b.firmness);
    out.ids.extend(b.ids.iter().cloned());
    out
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

fn c9_tpe() -> Verdict {
    let space = SearchSpace::new().real("x", 0.0, 1.0).real("y", 0.0, 1.0);
    let get = |p: &Params, k: &str| match p[k] {
        ParamValue::Real(v) => v,
        _ => f64::NAN,
    };
    let f = |p: &Params| (get(p, "x") - 0.3).powi(2) + (get(p, "y") - 0.7).powi(2);
    let mut tpe = Vec::new();
    let mut random = Vec::new();
    for seed in 0..20 {
        let study = tryv!(run_study(&space, 60, seed, |p, _| Ok(-f(p))));
        tpe.push(-study.best_objective);
        random.push((0..60).map(|t| f(&suggest_random(&space, seed, t))).fold(f64::INFINITY, f64::min));
    }
    let (t, r) = (median(tpe), median(random));
    verdict(t < r, format!("median regret TPE {t:.2e}, random {r:.2e}"))
}

const E2E_CONFIG: &str = r#"
seed = 21
models = ["decision_tree", "knn", "gaussian_nb"]

[data.synthetic]
seed = 4
class_counts = [24, 24, 24]
n_bands = 24

[phase2]
strategies = ["original", "smote"]
bootstrap_resamples = 200

[phase3]
n_trials = 6

[phase4]
cv_k = 5
"#;

fn run_all(dir: &Path) -> Result<(), String> {
    let cfg = RunConfig::parse(E2E_CONFIG, dir).map_err(|e| e.to_string())?;
    let ctx = Context::new(cfg, &Options { out: dir.into(), resume: false, markdown: true }).map_err(|e| e.to_string())?;
    for c in [Command::Phase1, Command::Phase2, Command::Phase3, Command::Phase4] {
        let r = run_phase(&ctx, c).map_err(|e| e.to_string())?;
        ctx.write(&r).map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn report_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| !n.ends_with("_timings.json"))
        .map(|n| (n.clone(), std::fs::read(dir.join(&n)).unwrap_or_default()))
        .collect();
    out.sort();
    out
}

fn c10_determinism() -> Verdict {
    let (a, b) = (tryv!(tempfile::tempdir()), tryv!(tempfile::tempdir()));
    tryv!(run_all(a.path()));
    tryv!(run_all(b.path()));
    let (fa, fb) = (report_files(a.path()), report_files(b.path()));
    ensure!(fa.len() > 10, "only {} report files", fa.len());
    ensure!(fa.iter().any(|(n, _)| n == "phase4_friedman.csv"), "phase4 rank tests missing");
    for ((na, da), (nb, db)) in fa.iter().zip(&fb) {
        ensure!(na == nb && da == db, "{na} differs from {nb}");
    }
    verdict(fa.len() == fb.len(), format!("{} report files byte-identical", fa.len()))
}

fn c11_learnability() -> Verdict {
    let spec = SynthSpec { separation: 5.0, test_fraction: 0.0, ..SynthSpec::default() };
    let ds = tryv!(synth_dataset(11, &spec));
    let all: Vec<usize> = (0..ds.len()).collect();
    let data = tryv!(PairedData::from_dataset(&ds, &all, None, SubsetMode::default()));
    let cfg = PipelineConfig::new(BalanceStrategy::new(BalanceKind::Original), false, ModelSpec::new("extra_trees"));
    let cv = tryv!(cross_validate(builtin(), &cfg, &data, 5, 12));
    let oa = cv.scores.summary["overall_accuracy"].mean;
    ensure!(oa >= 0.9, "ExtraTrees CV OA {oa:.3}");
    let y = data.labels(Task::Ripeness);
    let gb = fit_boosting(&BoostingParams { n_estimators: 50, ..Default::default() }, &data.x, y, 3, 5);
    let monotone = gb.train_deviance.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    verdict(
        monotone,
        format!("ExtraTrees CV OA {oa:.3}; deviance {:.4} -> {:.4} over {} rounds", gb.train_deviance[0], gb.train_deviance.last().unwrap(), gb.train_deviance.len()),
    )
}

fn main() {
    let checks: [(u32, &str, Check); 11] = [
        (1, "wilson interval", c1_wilson),
        (2, "paired effect size", c2_cohen),
        (3, "overall accuracy", c3_oa),
        (4, "real-data reproduction", c4_real_data),
        (5, "transform oracles", c5_transforms),
        (6, "metric and statistics oracles", c6_statistics),
        (7, "smote properties", c7_smote),
        (8, "leakage", c8_leakage),
        (9, "tpe sanity", c9_tpe),
        (10, "end-to-end determinism", c10_determinism),
        (11, "end-to-end learnability", c11_learnability),
    ];
    let mut failed = 0;
    for (id, name, check) in checks {
        let start = Instant::now();
        let v = check();
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match v {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Skip(d) => ("SKIP", d),
        };
        println!("{tag} {id:>2} {name}: {detail} ({secs:.2}s)");
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
