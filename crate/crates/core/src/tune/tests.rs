use super::*;
use crate::balance::{BalanceKind, BalanceStrategy};
use crate::dataset::{synth_dataset, Split, SynthSpec};
use crate::models::{builtin, ModelSpec};
use crate::transforms::SubsetMode;
use proptest::prelude::*;
use rand::Rng;

fn record(t: usize, params: Params, objective: f64) -> TrialRecord {
    TrialRecord { trial_index: t, params, objective, duration_s: 0.0, error: None }
}

fn real(p: &Params, k: &str) -> f64 {
    match p[k] {
        ParamValue::Real(v) => v,
        ParamValue::Int(v) => v as f64,
        ParamValue::Cat(_) => panic!("categorical"),
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn mixed_space() -> SearchSpace {
    SearchSpace::new()
        .int("depth", 3, 30)
        .real("rate", 0.01, 0.3)
        .log_real("c", 0.01, 100.0)
        .categorical("kind", &["a", "b", "c"])
}

#[test]
fn startup_suggestion_is_uniform_within_bounds() {
    let space = mixed_space();
    for t in 0..200 {
        let p = suggest(&[], &space, 1, t);
        assert!(space.contains(&p), "{p:?}");
    }
    assert_eq!(suggest(&[], &space, 1, 3), suggest(&[], &space, 1, 3));
    assert_ne!(suggest(&[], &space, 1, 3), suggest(&[], &space, 1, 4));
}

#[test]
fn suggestions_concentrate_near_the_optimum() {
    let space = SearchSpace::new().real("x", 0.0, 1.0);
    let study = run_study(&space, 50, 7, |p, _| Ok(-(real(p, "x") - 0.3).powi(2))).unwrap();
    let dist = |range: std::ops::Range<usize>| median(range.map(|t| (real(&study.history[t].params, "x") - 0.3).abs()).collect());
    let (early, late) = (dist(0..10), dist(39..50));
    assert!(late < early, "late {late} early {early}");
}

#[test]
fn categorical_winner_is_preferred() {
    let space = SearchSpace::new().categorical("kind", &["a", "b", "c", "d"]);
    let study = run_study(&space, 50, 3, |p, _| Ok(if p["kind"].to_string() == "c" { 1.0 } else { 0.0 })).unwrap();
    let hits = study.history[10..].iter().filter(|t| t.params["kind"].to_string() == "c").count();
    assert!(hits as f64 / 40.0 > 0.5, "{hits}/40");
}

#[test]
fn every_suggestion_stays_in_bounds() {
    let space = mixed_space();
    let mut rng = rng_from(5);
    let mut history = Vec::new();
    for t in 0..40 {
        let p = suggest_random(&space, 9, t);
        history.push(record(t, p, rng.random()));
    }
    for t in 0..10_000 {
        let p = suggest(&history[..10 + t % 30], &space, t as u64, t);
        assert!(space.contains(&p), "{p:?}");
    }
}

#[test]
fn best_curve_is_monotone_and_ends_at_best() {
    let space = mixed_space();
    let study = run_study(&space, 30, 2, |p, _| Ok((real(p, "rate") * 10.0).sin().abs())).unwrap();
    let curve = study.best_curve();
    assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    assert_eq!(*curve.last().unwrap(), study.best_objective);
    assert_eq!(study.history[study.best_trial].params, study.best_params);
}

#[test]
fn single_trial_is_the_best() {
    let space = mixed_space();
    let study = run_study(&space, 1, 11, |_, _| Ok(0.4)).unwrap();
    assert_eq!(study.history.len(), 1);
    assert_eq!(study.best_params, suggest(&[], &space, 11, 0));
    assert_eq!(study.best_objective, 0.4);
    assert!(run_study(&space, 0, 11, |_, _| Ok(0.4)).is_err());
}

#[test]
fn failing_trials_score_zero_and_continue() {
    let space = SearchSpace::new().real("x", 0.0, 1.0);
    let study = run_study(&space, 12, 4, |p, t| match t % 3 {
        0 => Err(Error::Degenerate("boom".into())),
        1 => Ok(f64::NAN),
        _ => Ok(real(p, "x")),
    })
    .unwrap();
    assert_eq!(study.history.len(), 12);
    for t in &study.history {
        if t.trial_index % 3 < 2 {
            assert_eq!(t.objective, 0.0);
            assert!(t.error.is_some());
        }
    }
}

#[test]
fn study_is_deterministic() {
    let space = mixed_space();
    let f = |p: &Params, _: usize| Ok(-(real(p, "rate") - 0.1).powi(2) - (real(p, "c").ln()).powi(2) / 100.0);
    let a = run_study(&space, 25, 17, f).unwrap();
    let b = run_study(&space, 25, 17, f).unwrap();
    let strip = |s: &Study| s.history.iter().map(|t| (t.params.clone(), t.objective)).collect::<Vec<_>>();
    assert_eq!(strip(&a), strip(&b));
}

fn quadratic_regret(tpe: bool, seed: u64) -> f64 {
    let space = SearchSpace::new().real("x", 0.0, 1.0).real("y", 0.0, 1.0);
    let f = |p: &Params| -((real(p, "x") - 0.3).powi(2) + (real(p, "y") - 0.7).powi(2));
    if tpe {
        -run_study(&space, 60, seed, |p, _| Ok(f(p))).unwrap().best_objective
    } else {
        (0..60).map(|t| -f(&suggest_random(&space, seed, t))).fold(f64::INFINITY, f64::min)
    }
}

#[test]
fn tpe_beats_random_search_on_a_quadratic() {
    let tpe = median((0..20).map(|s| quadratic_regret(true, s)).collect());
    let random = median((0..20).map(|s| quadratic_regret(false, s)).collect());
    assert!(tpe < random, "tpe {tpe} random {random}");
}

fn train_data(seed: u64, separation: f64) -> PairedData {
    let spec = SynthSpec { class_counts: [30, 30, 30], n_bands: 30, separation, test_fraction: 0.0, ..SynthSpec::default() };
    let ds = synth_dataset(seed, &spec).unwrap();
    PairedData::from_dataset(&ds, &ds.indices(Split::Train), None, SubsetMode::default()).unwrap()
}

fn base(model: &str) -> PipelineConfig {
    PipelineConfig::new(BalanceStrategy::new(BalanceKind::Original), false, ModelSpec::new(model))
}

#[test]
fn holdout_split_is_seventy_thirty() {
    let data = train_data(1, 5.0);
    let obj = HoldoutObjective::new(builtin(), &base("gaussian_nb"), &data, 3).unwrap();
    assert_eq!(obj.fit.len() + obj.valid.len(), data.len());
    let frac = obj.valid.len() as f64 / data.len() as f64;
    assert!((frac - 0.3).abs() < 0.08, "{frac}");
    let overlap = obj.fit.id_set().intersection(&obj.valid.id_set()).count();
    assert_eq!(overlap, 0);
}

#[test]
fn optimize_is_deterministic_and_refits_on_everything() {
    let data = train_data(2, 4.0);
    let registry = builtin();
    let space = registry.get("knn").unwrap().search_space();
    let a = optimize(registry, &base("knn"), &space, &data, 6, 9).unwrap();
    let b = optimize(registry, &base("knn"), &space, &data, 6, 9).unwrap();
    let strip = |s: &Study| s.history.iter().map(|t| (t.params.clone(), t.objective)).collect::<Vec<_>>();
    assert_eq!(strip(&a.study), strip(&b.study));
    assert_eq!(a.fitted.ripeness.n_train, data.len());
    assert_eq!(a.config.model.hyperparams, a.study.best_params);
    assert!(a.study.history.iter().all(|t| (0.0..=1.0).contains(&t.objective)));
}

#[test]
fn invalid_trials_do_not_abort_optimization() {
    let data = train_data(3, 4.0);
    // min_samples_split below 2 is rejected by the tree family.
    let space = SearchSpace::new().int("min_samples_split", 0, 3);
    let out = optimize(builtin(), &base("decision_tree"), &space, &data, 12, 1).unwrap();
    let failed: Vec<_> = out.study.history.iter().filter(|t| t.error.is_some()).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|t| t.objective == 0.0));
    assert!(out.study.best_objective > 0.0);
}

#[test]
fn tuned_objective_matches_or_beats_defaults() {
    let registry = builtin();
    let space = registry.get("knn").unwrap().search_space();
    let wins = (0..20u64)
        .filter(|&seed| {
            let data = train_data(100 + seed, 2.0);
            let cfg = base("knn");
            let obj = HoldoutObjective::new(registry, &cfg, &data, seed).unwrap();
            let default = obj.score(&Params::new(), 0).unwrap();
            let tuned = optimize(registry, &cfg, &space, &data, 15, seed).unwrap();
            tuned.study.best_objective >= default
        })
        .count();
    assert!(wins >= 18, "{wins}/20");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn suggestions_respect_random_spaces(
        lo in -50i64..50, span in 0i64..40, rlo in -5.0f64..5.0, rspan in 1e-3f64..10.0,
        llo in 1e-6f64..1.0, ratio in 1.5f64..1e4, seed in 0u64..1000, n_hist in 0usize..30,
    ) {
        let space = SearchSpace::new()
            .int("i", lo, lo + span)
            .real("r", rlo, rlo + rspan)
            .log_real("l", llo, llo * ratio)
            .categorical("c", &["x", "y"]);
        let mut rng = rng_from(seed);
        let history: Vec<TrialRecord> =
            (0..n_hist).map(|t| record(t, suggest_random(&space, seed, t), rng.random())).collect();
        for t in 0..5 {
            let p = suggest(&history, &space, seed, n_hist + t);
            prop_assert!(space.contains(&p), "{:?}", p);
        }
    }
}
