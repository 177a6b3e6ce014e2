use super::*;
use crate::balance::{BalanceKind, BalanceStrategy};
use crate::dataset::{synth_dataset, Split, SynthSpec};
use crate::models::{builtin, Classifier, ModelFamily, Params};
use crate::transforms::SubsetMode;
use crate::tune::SearchSpace;
use std::sync::Arc;

fn cfg(model: &str, seed: u64) -> PipelineConfig {
    PipelineConfig::new(BalanceStrategy::new(BalanceKind::Original), false, ModelSpec::new(model)).with_seed(seed)
}

fn split(separation: f64) -> (PairedData, PairedData) {
    let spec = SynthSpec { class_counts: [40, 40, 40], n_bands: 30, separation, test_fraction: 0.25, ..SynthSpec::default() };
    let ds = synth_dataset(5, &spec).unwrap();
    let get = |s| PairedData::from_dataset(&ds, &ds.indices(s), None, SubsetMode::default()).unwrap();
    (get(Split::Train), get(Split::Test))
}

#[test]
fn hard_vote_takes_the_plurality() {
    assert_eq!(hard_vote(&[vec![0], vec![0], vec![1]], 2), vec![0]);
    assert_eq!(hard_vote(&[vec![2], vec![1]], 3), vec![1]);
    assert_eq!(hard_vote(&[vec![2, 0], vec![2, 1], vec![0, 1]], 3), vec![2, 1]);
}

#[test]
fn soft_vote_hand_mean() {
    let a = DMatrix::from_row_slice(1, 2, &[0.6, 0.4]);
    let b = DMatrix::from_row_slice(1, 2, &[0.2, 0.8]);
    let m = mean_proba(&[a, b]);
    assert!((m[(0, 0)] - 0.4).abs() < 1e-15 && (m[(0, 1)] - 0.6).abs() < 1e-15);
    assert_eq!(argmax_rows(&m), vec![1]);
}

#[test]
fn identical_bases_reproduce_the_single_model() {
    let (train, test) = split(8.0);
    let base = cfg("decision_tree", 3);
    let single = fit_pipeline(builtin(), &base, &train.x, &train.ripeness, 3).unwrap().predict(&test.x).unwrap();
    for kind in EnsembleKind::ALL {
        let spec = EnsembleSpec::new(kind, vec![base.clone(); 3]).with_seed(1);
        let e = fit_task_ensemble(builtin(), &spec, &train.x, &train.ripeness, &train.ids, 3).unwrap();
        let got = e.predict(&test.x).unwrap();
        if kind == EnsembleKind::Blending {
            // Bases see only 80% of the rows, so compare with that single model.
            let (fit_rows, _) = stratified_holdout(&train.ripeness, 0.2, derive_seed(1, &["blend".into()])).unwrap();
            let sub = train.select(&fit_rows);
            let single = fit_pipeline(builtin(), &base, &sub.x, &sub.ripeness, 3).unwrap().predict(&test.x).unwrap();
            assert_eq!(got, single, "{kind:?}");
        } else {
            assert_eq!(got, single, "{kind:?}");
        }
    }
}

#[test]
fn hard_vote_output_is_some_base_prediction() {
    let (train, test) = split(1.5);
    let bases = vec![cfg("decision_tree", 1), cfg("knn", 1), cfg("gaussian_nb", 1), cfg("ridge", 1)];
    let spec = EnsembleSpec::new(EnsembleKind::HardVote, bases);
    let e = fit_task_ensemble(builtin(), &spec, &train.x, &train.firmness, &train.ids, 4).unwrap();
    let preds: Vec<Vec<usize>> = e.bases.iter().map(|b| b.predict(&test.x).unwrap()).collect();
    let vote = e.predict(&test.x).unwrap();
    for (r, v) in vote.iter().enumerate() {
        assert!(preds.iter().any(|p| p[r] == *v));
    }
}

#[test]
fn every_strategy_learns_separable_data() {
    let (train, test) = split(6.0);
    let bases = vec![cfg("extra_trees", 1), cfg("gaussian_nb", 1), cfg("knn", 1)];
    for kind in EnsembleKind::ALL {
        let spec = EnsembleSpec::new(kind, bases.clone()).with_seed(4);
        let e = fit_ensemble(builtin(), &spec, &train).unwrap();
        let pred = predict_ensemble(&e, Task::Ripeness, &test.x).unwrap();
        let acc = pred.iter().zip(&test.ripeness).filter(|(a, b)| a == b).count() as f64 / test.len() as f64;
        assert!(acc > 0.9, "{kind:?}: {acc}");
        assert!(!e.used_onehot());
    }
}

#[test]
fn single_class_training_predicts_that_class() {
    let (train, test) = split(4.0);
    let y = vec![2; train.len()];
    for kind in EnsembleKind::ALL {
        let spec = EnsembleSpec::new(kind, vec![cfg("knn", 0), cfg("gaussian_nb", 0)]);
        let e = fit_task_ensemble(builtin(), &spec, &train.x, &y, &train.ids, 3).unwrap();
        assert_eq!(e.predict(&test.x).unwrap(), vec![2; test.len()]);
    }
}

#[test]
fn out_of_fold_predictions_never_see_their_sample() {
    let (train, _) = split(4.0);
    let spec = EnsembleSpec::new(EnsembleKind::Stacking, vec![cfg("knn", 0), cfg("gaussian_nb", 0)]);
    // Every id shared by two rows: some fold will hold one copy while training on the other.
    let dup: Vec<String> = (0..train.len()).map(|i| format!("s{}", i / 2)).collect();
    let err = fit_task_ensemble(builtin(), &spec, &train.x, &train.ripeness, &dup, 3).unwrap_err();
    assert!(matches!(err, Error::Integrity(_)));
    assert!(fit_task_ensemble(builtin(), &spec, &train.x, &train.ripeness, &train.ids, 3).is_ok());
}

#[test]
fn ensemble_spec_is_validated() {
    let one = EnsembleSpec::new(EnsembleKind::SoftVote, vec![cfg("knn", 0)]);
    assert!(matches!(one.validate(), Err(Error::Config(_))));
    let mut bad = EnsembleSpec::new(EnsembleKind::Blending, vec![cfg("knn", 0), cfg("knn", 1)]);
    bad.holdout_frac = 1.0;
    assert!(matches!(bad.validate(), Err(Error::Config(_))));
}

#[test]
fn ensembles_are_deterministic() {
    let (train, test) = split(2.0);
    let spec = EnsembleSpec::new(EnsembleKind::Stacking, vec![cfg("random_forest", 2), cfg("knn", 0)]).with_seed(9);
    let a = fit_ensemble(builtin(), &spec, &train).unwrap();
    let b = fit_ensemble(builtin(), &spec, &train).unwrap();
    for task in Task::BOTH {
        assert_eq!(predict_ensemble(&a, task, &test.x).unwrap(), predict_ensemble(&b, task, &test.x).unwrap());
    }
}

#[derive(Debug, serde::Serialize, serde::Deserialize)]
struct Nearest {
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    k: usize,
}

impl Classifier for Nearest {
    fn n_features(&self) -> usize {
        self.x[0].len()
    }

    fn n_classes(&self) -> usize {
        self.k
    }

    fn predict_proba(&self, _: &DMatrix<f64>) -> Option<DMatrix<f64>> {
        None
    }

    fn predict(&self, x: &DMatrix<f64>) -> Vec<usize> {
        (0..x.nrows())
            .map(|r| {
                let d = |i: usize| self.x[i].iter().enumerate().map(|(c, v)| (v - x[(r, c)]).powi(2)).sum::<f64>();
                let best = (0..self.y.len()).min_by(|&a, &b| d(a).total_cmp(&d(b))).unwrap();
                self.y[best]
            })
            .collect()
    }

    fn to_blob(&self) -> serde_json::Value {
        serde_json::to_value(self).unwrap()
    }
}

struct NearestFamily;

impl ModelFamily for NearestFamily {
    fn name(&self) -> &str {
        "nearest"
    }

    fn search_space(&self) -> SearchSpace {
        SearchSpace::new()
    }

    fn fit(&self, _: &Params, x: &DMatrix<f64>, y: &[usize], k: usize, _: u64) -> Result<Box<dyn Classifier>> {
        let rows = (0..x.nrows()).map(|r| x.row(r).iter().copied().collect()).collect();
        Ok(Box::new(Nearest { x: rows, y: y.to_vec(), k }))
    }

    fn load(&self, blob: &serde_json::Value) -> Result<Box<dyn Classifier>> {
        Ok(Box::new(serde_json::from_value::<Nearest>(blob.clone())?))
    }
}

#[test]
fn bases_without_probabilities_fall_back_to_one_hot() {
    let (train, test) = split(6.0);
    let mut registry = Registry::with_builtins();
    registry.register(Arc::new(NearestFamily));
    for kind in [EnsembleKind::SoftVote, EnsembleKind::Stacking] {
        let spec = EnsembleSpec::new(kind, vec![cfg("nearest", 0), cfg("gaussian_nb", 0)]);
        let e = fit_ensemble(&registry, &spec, &train).unwrap();
        let pred = predict_ensemble(&e, Task::Ripeness, &test.x).unwrap();
        assert_eq!(pred.len(), test.len());
        assert!(e.used_onehot());
        assert_eq!(e.ripeness.onehot_bases, BTreeSet::from([0]));
    }
}
