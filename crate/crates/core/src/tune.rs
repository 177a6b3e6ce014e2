//! Tree-structured Parzen estimator search over hyperparameter spaces.
//!
//! The sampler is univariate: every parameter gets its own good/bad density
//! pair and its own candidate set. Suggestions are a pure function of the
//! history, the space, the seed and the trial index.

use std::collections::BTreeMap;
use std::time::Instant;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;

use crate::error::{Error, Result};
use crate::evaluate::{joint_strata, score_paired, stratified_holdout};
use crate::models::{ParamValue, Params, Registry};
use crate::pipeline::{fit_paired, PairedData, PairedPipelines, PipelineConfig};
use crate::seed::{derive_seed, rng_from};

pub const N_STARTUP: usize = 10;
pub const GAMMA: f64 = 0.25;
pub const N_CANDIDATES: usize = 24;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Int { low: i64, high: i64, log: bool },
    Real { low: f64, high: f64, log: bool },
    Categorical { choices: Vec<String> },
}

impl Domain {
    pub fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("search space {name}: {m}")));
        match self {
            Domain::Int { low, high, log } => {
                if low > high {
                    return bad("empty integer range");
                }
                if *log && *low <= 0 {
                    return bad("log range must be positive");
                }
            }
            Domain::Real { low, high, log } => {
                if !(low <= high) || !low.is_finite() || !high.is_finite() {
                    return bad("empty real range");
                }
                if *log && *low <= 0.0 {
                    return bad("log range must be positive");
                }
            }
            Domain::Categorical { choices } => {
                if choices.is_empty() {
                    return bad("no categories");
                }
            }
        }
        Ok(())
    }

    pub fn contains(&self, v: &ParamValue) -> bool {
        match (self, v) {
            (Domain::Int { low, high, .. }, ParamValue::Int(i)) => low <= i && i <= high,
            (Domain::Real { low, high, .. }, ParamValue::Real(r)) => low <= r && r <= high,
            (Domain::Real { low, high, .. }, ParamValue::Int(i)) => *low <= *i as f64 && *i as f64 <= *high,
            (Domain::Categorical { choices }, ParamValue::Cat(c)) => choices.contains(c),
            (Domain::Categorical { choices }, ParamValue::Int(i)) => choices.contains(&i.to_string()),
            _ => false,
        }
    }

    /// Numeric bounds in the internal (possibly log) coordinate. Integers
    /// are widened by half a step so that the end values are reachable.
    fn internal_bounds(&self) -> (f64, f64, bool) {
        match *self {
            Domain::Int { low, high, log } => {
                let (lo, hi) = (low as f64 - 0.5, high as f64 + 0.5);
                if log {
                    ((low as f64 - 0.5).max(0.5).ln(), hi.ln(), true)
                } else {
                    (lo, hi, false)
                }
            }
            Domain::Real { low, high, log } => {
                if log {
                    (low.ln(), high.ln(), true)
                } else {
                    (low, high, false)
                }
            }
            Domain::Categorical { .. } => unreachable!("categorical has no numeric bounds"),
        }
    }

    fn to_internal(&self, v: &ParamValue) -> Option<f64> {
        let x = match v {
            ParamValue::Int(i) => *i as f64,
            ParamValue::Real(r) => *r,
            ParamValue::Cat(_) => return None,
        };
        let log = matches!(self, Domain::Int { log: true, .. } | Domain::Real { log: true, .. });
        Some(if log { x.ln() } else { x })
    }

    fn from_internal(&self, u: f64) -> ParamValue {
        match *self {
            Domain::Int { low, high, log } => {
                let x = if log { u.exp() } else { u };
                ParamValue::Int((x.round() as i64).clamp(low, high))
            }
            Domain::Real { low, high, log } => {
                let x = if log { u.exp() } else { u };
                ParamValue::Real(x.clamp(low, high))
            }
            Domain::Categorical { .. } => unreachable!("categorical has no numeric coordinate"),
        }
    }

    fn uniform(&self, rng: &mut ChaCha8Rng) -> ParamValue {
        match self {
            Domain::Int { low, high, log: false } => ParamValue::Int(rng.random_range(*low..=*high)),
            Domain::Categorical { choices } => ParamValue::Cat(choices[rng.random_range(0..choices.len())].clone()),
            _ => {
                let (lo, hi, _) = self.internal_bounds();
                let u = if hi > lo { rng.random_range(lo..hi) } else { lo };
                self.from_internal(u)
            }
        }
    }
}

/// Named parameter domains.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub params: BTreeMap<String, Domain>,
}

impl SearchSpace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn int(mut self, name: &str, low: i64, high: i64) -> Self {
        self.params.insert(name.into(), Domain::Int { low, high, log: false });
        self
    }

    pub fn real(mut self, name: &str, low: f64, high: f64) -> Self {
        self.params.insert(name.into(), Domain::Real { low, high, log: false });
        self
    }

    pub fn log_real(mut self, name: &str, low: f64, high: f64) -> Self {
        self.params.insert(name.into(), Domain::Real { low, high, log: true });
        self
    }

    pub fn categorical(mut self, name: &str, choices: &[&str]) -> Self {
        self.params
            .insert(name.into(), Domain::Categorical { choices: choices.iter().map(|c| c.to_string()).collect() });
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.params.iter().try_for_each(|(k, d)| d.validate(k))
    }

    pub fn contains(&self, params: &Params) -> bool {
        self.params.iter().all(|(k, d)| params.get(k).is_some_and(|v| d.contains(v)))
    }
}

/// One evaluated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_index: usize,
    pub params: Params,
    pub objective: f64,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

/// Mixture of Gaussians truncated to `[lo, hi]`, one per observation plus a
/// broad prior component centred on the range.
struct Parzen {
    mus: Vec<f64>,
    sigmas: Vec<f64>,
    lo: f64,
    hi: f64,
}

impl Parzen {
    fn new(obs: &[f64], lo: f64, hi: f64) -> Self {
        let width = (hi - lo).max(f64::EPSILON);
        let mut mus: Vec<f64> = obs.to_vec();
        mus.push(0.5 * (lo + hi));
        let mut order: Vec<usize> = (0..mus.len()).collect();
        order.sort_by(|&a, &b| mus[a].total_cmp(&mus[b]).then(a.cmp(&b)));
        let sorted: Vec<f64> = order.iter().map(|&i| mus[i]).collect();
        let min_bw = width / (1.0 + mus.len() as f64).min(100.0);
        let mut sigmas = vec![0.0; mus.len()];
        for (pos, &i) in order.iter().enumerate() {
            let left = if pos == 0 { sorted[pos] - lo } else { sorted[pos] - sorted[pos - 1] };
            let right = if pos + 1 == sorted.len() { hi - sorted[pos] } else { sorted[pos + 1] - sorted[pos] };
            sigmas[i] = left.max(right).clamp(min_bw, width);
        }
        let prior = mus.len() - 1;
        sigmas[prior] = width;
        Self { mus, sigmas, lo, hi }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        let i = rng.random_range(0..self.mus.len());
        for _ in 0..1000 {
            let z: f64 = StandardNormal.sample(rng);
            let x = self.mus[i] + self.sigmas[i] * z;
            if x >= self.lo && x <= self.hi {
                return x;
            }
        }
        self.mus[i].clamp(self.lo, self.hi)
    }

    fn log_pdf(&self, x: f64) -> f64 {
        let mut total = 0.0;
        for (&mu, &s) in self.mus.iter().zip(&self.sigmas) {
            let mass = std_normal_cdf((self.hi - mu) / s) - std_normal_cdf((self.lo - mu) / s);
            let z = (x - mu) / s;
            let dens = (-0.5 * z * z).exp() / (s * (2.0 * std::f64::consts::PI).sqrt());
            total += dens / mass.max(1e-300);
        }
        (total / self.mus.len() as f64).max(1e-300).ln()
    }
}

fn split_history(history: &[TrialRecord]) -> (Vec<&TrialRecord>, Vec<&TrialRecord>) {
    let mut sorted: Vec<&TrialRecord> = history.iter().collect();
    sorted.sort_by(|a, b| b.objective.total_cmp(&a.objective).then(a.trial_index.cmp(&b.trial_index)));
    let n_good = ((GAMMA * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let bad = sorted.split_off(n_good);
    (sorted, bad)
}

fn suggest_numeric(domain: &Domain, name: &str, good: &[&TrialRecord], bad: &[&TrialRecord], rng: &mut ChaCha8Rng) -> ParamValue {
    let (lo, hi, _) = domain.internal_bounds();
    let obs = |set: &[&TrialRecord]| -> Vec<f64> {
        set.iter()
            .filter_map(|t| t.params.get(name).and_then(|v| domain.to_internal(v)))
            .map(|u| u.clamp(lo, hi))
            .collect()
    };
    let l = Parzen::new(&obs(good), lo, hi);
    let g = Parzen::new(&obs(bad), lo, hi);
    let mut best = (f64::NEG_INFINITY, 0.5 * (lo + hi));
    for _ in 0..N_CANDIDATES {
        let x = l.sample(rng);
        let score = l.log_pdf(x) - g.log_pdf(x);
        if score > best.0 {
            best = (score, x);
        }
    }
    domain.from_internal(best.1)
}

fn suggest_categorical(choices: &[String], name: &str, good: &[&TrialRecord], bad: &[&TrialRecord], rng: &mut ChaCha8Rng) -> ParamValue {
    let probs = |set: &[&TrialRecord]| -> Vec<f64> {
        let mut counts = vec![1.0; choices.len()];
        for t in set {
            let label = t.params.get(name).map(|v| v.to_string());
            if let Some(i) = label.and_then(|l| choices.iter().position(|c| *c == l)) {
                counts[i] += 1.0;
            }
        }
        let total: f64 = counts.iter().sum();
        counts.into_iter().map(|c| c / total).collect()
    };
    let l = probs(good);
    let g = probs(bad);
    let mut best = (f64::NEG_INFINITY, 0);
    for _ in 0..N_CANDIDATES {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = choices.len() - 1;
        for (i, p) in l.iter().enumerate() {
            acc += p;
            if u < acc {
                pick = i;
                break;
            }
        }
        let score = l[pick].ln() - g[pick].ln();
        if score > best.0 {
            best = (score, pick);
        }
    }
    ParamValue::Cat(choices[best.1].clone())
}

/// Proposes the next point. Uniform while fewer than [`N_STARTUP`] trials
/// exist, TPE afterwards.
pub fn suggest(history: &[TrialRecord], space: &SearchSpace, seed: u64, trial_index: usize) -> Params {
    let mut rng = rng_from(derive_seed(seed, &["tpe".into(), trial_index.into()]));
    if history.len() < N_STARTUP {
        return space.params.iter().map(|(k, d)| (k.clone(), d.uniform(&mut rng))).collect();
    }
    let (good, bad) = split_history(history);
    space
        .params
        .iter()
        .map(|(k, d)| {
            let v = match d {
                Domain::Categorical { choices } => suggest_categorical(choices, k, &good, &bad, &mut rng),
                _ => suggest_numeric(d, k, &good, &bad, &mut rng),
            };
            (k.clone(), v)
        })
        .collect()
}

/// Uniform random suggestion, the baseline TPE is compared against.
pub fn suggest_random(space: &SearchSpace, seed: u64, trial_index: usize) -> Params {
    let mut rng = rng_from(derive_seed(seed, &["random".into(), trial_index.into()]));
    space.params.iter().map(|(k, d)| (k.clone(), d.uniform(&mut rng))).collect()
}

/// Outcome of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Study {
    pub best_params: Params,
    pub best_objective: f64,
    pub best_trial: usize,
    pub history: Vec<TrialRecord>,
}

impl Study {
    /// Best objective over each history prefix.
    pub fn best_curve(&self) -> Vec<f64> {
        self.history
            .iter()
            .scan(f64::NEG_INFINITY, |best, t| {
                *best = best.max(t.objective);
                Some(*best)
            })
            .collect()
    }
}

/// Runs `n_trials` sequential TPE trials maximizing `objective`. Trials
/// whose objective errors are recorded with objective 0.
pub fn run_study<F>(space: &SearchSpace, n_trials: usize, seed: u64, mut objective: F) -> Result<Study>
where
    F: FnMut(&Params, usize) -> Result<f64>,
{
    space.validate()?;
    if n_trials == 0 {
        return Err(Error::domain("a study needs at least one trial"));
    }
    let mut history: Vec<TrialRecord> = Vec::with_capacity(n_trials);
    for t in 0..n_trials {
        let params = suggest(&history, space, seed, t);
        let start = Instant::now();
        let (obj, error) = match objective(&params, t) {
            Ok(v) if v.is_finite() => (v, None),
            Ok(v) => (0.0, Some(format!("non-finite objective {v}"))),
            Err(e) => {
                log::warn!("trial {t} failed: {e}");
                (0.0, Some(e.to_string()))
            }
        };
        history.push(TrialRecord { trial_index: t, params, objective: obj, duration_s: start.elapsed().as_secs_f64(), error });
    }
    let best = history
        .iter()
        .fold(&history[0], |b, t| if t.objective > b.objective { t } else { b });
    Ok(Study { best_params: best.params.clone(), best_objective: best.objective, best_trial: best.trial_index, history })
}

/// Fraction of the training rows held out to score each trial.
pub const VALIDATION_FRACTION: f64 = 0.3;

/// A fixed stratified fit/validation split used to score hyperparameters.
pub struct HoldoutObjective<'a> {
    registry: &'a Registry,
    base: PipelineConfig,
    fit: PairedData,
    valid: PairedData,
}

impl<'a> HoldoutObjective<'a> {
    pub fn new(registry: &'a Registry, base: &PipelineConfig, train: &PairedData, seed: u64) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::domain("cannot tune on an empty training set"));
        }
        let (fit, valid) = stratified_holdout(&joint_strata(train), VALIDATION_FRACTION, derive_seed(seed, &["holdout".into()]))?;
        Ok(Self { registry, base: base.clone(), fit: train.select(&fit), valid: train.select(&valid) })
    }

    /// Base config with `params` laid over its hyperparameters.
    pub fn config(&self, params: &Params, seed: u64) -> PipelineConfig {
        let mut cfg = self.base.clone();
        cfg.model.hyperparams.extend(params.iter().map(|(k, v)| (k.clone(), v.clone())));
        cfg.seed = seed;
        cfg
    }

    /// Mean macro-F1 of both task pipelines on the validation rows.
    pub fn score(&self, params: &Params, seed: u64) -> Result<f64> {
        let fitted = fit_paired(self.registry, &self.config(params, seed), &self.fit)?;
        let m = score_paired(
            &self.valid.ripeness,
            &fitted.ripeness.predict(&self.valid.x)?,
            &self.valid.firmness,
            &fitted.firmness.predict(&self.valid.x)?,
        )?;
        Ok(m.mean_f1_macro)
    }
}

/// Result of [`optimize`]: the study and the pipelines refit on all
/// training rows with the best parameters.
pub struct Optimized {
    pub study: Study,
    pub config: PipelineConfig,
    pub fitted: PairedPipelines,
}

/// Tunes `base.model` over `space` on a stratified 70/30 split of `train`,
/// then refits the best configuration on the whole of `train`.
pub fn optimize(
    registry: &Registry,
    base: &PipelineConfig,
    space: &SearchSpace,
    train: &PairedData,
    n_trials: usize,
    seed: u64,
) -> Result<Optimized> {
    registry.get(&base.model.name)?;
    let objective = HoldoutObjective::new(registry, base, train, seed)?;
    let study = run_study(space, n_trials, seed, |params, t| {
        objective.score(params, derive_seed(seed, &["trial".into(), t.into()]))
    })?;
    let config = objective.config(&study.best_params, base.seed);
    let fitted = fit_paired(registry, &config, train)?;
    Ok(Optimized { study, config, fitted })
}

#[cfg(test)]
mod tests;
