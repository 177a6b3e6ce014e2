//! Run configuration, read from TOML.
//!
//! ```toml
//! seed = 42
//! models = ["extra_trees", "knn"]
//!
//! [data]
//! table = "features.csv"        # relative to this file
//! manifest = "manifest.toml"
//!
//! [params.knn]
//! n_neighbors = 7
//!
//! [resplit]
//! counts = "auto"               # or "paper", or { avocado = 130, kiwi = 130 }
//!
//! [phase2]
//! strategies = ["original", "stratified_resplit", "smote", "oversample", "undersample"]
//! pca = [false, true]
//!
//! [phase3]
//! n_trials = 100
//! ```
//!
//! `[data.synthetic]` (generator seed plus any synthetic-spec field) can
//! replace `table`/`manifest`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spectrabench::balance::BalanceKind;
use spectrabench::dataset::{Fruit, SynthSpec};
use spectrabench::explain::{ImportanceMetric, DEFAULT_REPEATS, VIS_CUTOFF_NM};
use spectrabench::models::{validate_in_space, ModelSpec, Params, Registry, BUILTIN_MODELS};
use spectrabench::transforms::{BandSubset, SubsetMode};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub models: Option<Vec<String>>,
    /// Default hyperparameters per model family.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Params>,
    pub data: DataConfig,
    #[serde(default)]
    pub resplit: ResplitConfig,
    #[serde(default)]
    pub phase2: Phase2Config,
    #[serde(default)]
    pub phase3: Phase3Config,
    #[serde(default)]
    pub phase4: Phase4Config,
    #[serde(default)]
    pub phase5: Phase5Config,
    #[serde(default)]
    pub phase6: Phase6Config,
    #[serde(default)]
    pub bands: BandsConfig,
    /// Directory that relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticData {
    #[serde(default)]
    pub seed: u64,
    #[serde(flatten)]
    pub spec: SynthSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountPreset {
    /// Equal per-fruit cap, as large as the original training size allows.
    Auto,
    /// avocado 130, kiwi 130, mango 56, kaki 55, papaya 43.
    Paper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResplitCounts {
    Preset(CountPreset),
    PerFruit(BTreeMap<String, usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResplitConfig {
    pub counts: ResplitCounts,
}

impl Default for ResplitConfig {
    fn default() -> Self {
        Self { counts: ResplitCounts::Preset(CountPreset::Auto) }
    }
}

pub const PAPER_RESPLIT: [(Fruit, usize); 5] = [
    (Fruit::Avocado, 130),
    (Fruit::Kiwi, 130),
    (Fruit::Mango, 56),
    (Fruit::Kaki, 55),
    (Fruit::Papaya, 43),
];

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SelectOn {
    /// Benchmark test split, as in the original protocol.
    #[default]
    Test,
    /// A stratified 30% holdout of the training rows.
    Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phase2Config {
    pub strategies: Vec<BalanceKind>,
    pub pca: Vec<bool>,
    pub pca_variance_target: f64,
    pub k_neighbors: usize,
    pub bootstrap_resamples: usize,
    pub select_on: SelectOn,
}

impl Default for Phase2Config {
    fn default() -> Self {
        Self {
            strategies: BalanceKind::ALL.to_vec(),
            pca: vec![false, true],
            pca_variance_target: 0.95,
            k_neighbors: 5,
            bootstrap_resamples: 10_000,
            select_on: SelectOn::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phase3Config {
    pub n_trials: usize,
}

impl Default for Phase3Config {
    fn default() -> Self {
        Self { n_trials: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phase4Config {
    pub cv_k: usize,
    pub alpha: f64,
}

impl Default for Phase4Config {
    fn default() -> Self {
        Self { cv_k: 10, alpha: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phase5Config {
    pub top_n: usize,
    pub oof_folds: usize,
    pub holdout_frac: f64,
    pub meta: String,
}

impl Default for Phase5Config {
    fn default() -> Self {
        Self { top_n: 5, oof_folds: 5, holdout_frac: 0.2, meta: "logistic_regression".into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Phase6Config {
    pub model: String,
    pub permutation: bool,
    pub n_repeats: usize,
    pub metric: ImportanceMetric,
    pub window: usize,
    pub cutoff_nm: f64,
    pub top_n: usize,
}

impl Default for Phase6Config {
    fn default() -> Self {
        Self {
            model: "extra_trees".into(),
            permutation: false,
            n_repeats: DEFAULT_REPEATS,
            metric: ImportanceMetric::Accuracy,
            window: 5,
            cutoff_nm: VIS_CUTOFF_NM,
            top_n: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BandsConfig {
    /// Preset names (`vis3`, `rgb`).
    pub subsets: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub custom: Option<Vec<usize>>,
    pub mode: SubsetMode,
}

impl Default for BandsConfig {
    fn default() -> Self {
        Self { subsets: vec!["vis3".into(), "rgb".into()], custom: None, mode: SubsetMode::default() }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn parse(text: &str, base_dir: &Path) -> CliResult<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| config_err(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|source| CliError::ReadConfig { path: path.to_path_buf(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    pub fn to_toml(&self) -> CliResult<String> {
        toml::to_string(self).map_err(|e| config_err(e.to_string()))
    }

    /// Canonical JSON used for the config hash.
    pub fn canonical_json(&self) -> CliResult<String> {
        Ok(serde_json::to_string(&serde_json::to_value(self)?)?)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn model_names(&self) -> Vec<String> {
        match &self.models {
            Some(m) => m.clone(),
            None => BUILTIN_MODELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Configured defaults for `name`.
    pub fn model_spec(&self, name: &str) -> ModelSpec {
        ModelSpec { hyperparams: self.params.get(name).cloned().unwrap_or_default(), ..ModelSpec::new(name) }
    }

    pub fn band_subsets(&self) -> CliResult<Vec<BandSubset>> {
        let mut out = self
            .bands
            .subsets
            .iter()
            .map(|n| BandSubset::preset(n).ok_or_else(|| config_err(format!("unknown band subset preset {n:?}"))))
            .collect::<CliResult<Vec<_>>>()?;
        if let Some(idx) = &self.bands.custom {
            out.push(BandSubset::new("custom", idx.clone()).map_err(|e| config_err(e.to_string()))?);
        }
        Ok(out)
    }

    /// Checks everything that can be checked without loading the data.
    pub fn validate(&self, registry: &Registry, check_paths: bool) -> CliResult<()> {
        let models = self.model_names();
        if models.is_empty() {
            return Err(config_err("the model list is empty"));
        }
        for (i, m) in models.iter().enumerate() {
            if models[..i].contains(m) {
                return Err(config_err(format!("model {m:?} is listed twice")));
            }
            registry.get(m)?;
        }
        for name in self.params.keys() {
            validate_in_space(registry, &self.model_spec(name))?;
        }
        registry.get(&self.phase5.meta)?;
        registry.get(&self.phase6.model)?;
        match (&self.data.table, &self.data.manifest, &self.data.synthetic) {
            (Some(t), Some(m), None) => {
                if check_paths {
                    for p in [t, m] {
                        let full = self.resolve(p);
                        if !full.is_file() {
                            return Err(config_err(format!("data file {} does not exist", full.display())));
                        }
                    }
                }
            }
            (None, None, Some(_)) => {}
            _ => return Err(config_err("[data] needs either table and manifest, or a synthetic section")),
        }
        if let ResplitCounts::PerFruit(m) = &self.resplit.counts {
            if m.is_empty() {
                return Err(config_err("resplit counts are empty"));
            }
        }
        let p2 = &self.phase2;
        if p2.strategies.is_empty() || p2.pca.is_empty() {
            return Err(config_err("phase2 strategies and pca must be non-empty"));
        }
        if !(p2.pca_variance_target > 0.0 && p2.pca_variance_target <= 1.0) {
            return Err(config_err("phase2.pca_variance_target must lie in (0, 1]"));
        }
        if p2.k_neighbors == 0 || p2.bootstrap_resamples == 0 {
            return Err(config_err("phase2.k_neighbors and bootstrap_resamples must be positive"));
        }
        if self.phase3.n_trials == 0 {
            return Err(config_err("phase3.n_trials must be positive"));
        }
        if self.phase4.cv_k < 2 {
            return Err(config_err("phase4.cv_k must be at least 2"));
        }
        if !(self.phase4.alpha > 0.0 && self.phase4.alpha < 1.0) {
            return Err(config_err("phase4.alpha must lie in (0, 1)"));
        }
        let p5 = &self.phase5;
        if p5.top_n < 2 || p5.oof_folds < 2 || !(p5.holdout_frac > 0.0 && p5.holdout_frac < 1.0) {
            return Err(config_err("phase5 needs top_n >= 2, oof_folds >= 2 and holdout_frac in (0, 1)"));
        }
        let p6 = &self.phase6;
        if p6.n_repeats == 0 || p6.top_n == 0 || p6.window.is_multiple_of(2) {
            return Err(config_err("phase6 needs n_repeats >= 1, top_n >= 1 and an odd window"));
        }
        self.band_subsets()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[data.synthetic]\nseed = 3\nn_bands = 40\n";

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg = RunConfig::parse(MINIMAL, Path::new(".")).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.phase3.n_trials, 100);
        assert_eq!(cfg.phase4.cv_k, 10);
        assert_eq!(cfg.phase2.strategies.len(), 5);
        assert_eq!(cfg.data.synthetic.as_ref().unwrap().spec.n_bands, 40);
        assert_eq!(cfg.model_names().len(), 9);
        cfg.validate(&Registry::with_builtins(), true).unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("sede = 1\n{MINIMAL}");
        assert!(matches!(RunConfig::parse(&text, Path::new(".")), Err(CliError::Config(_))));
        let text = format!("[phase4]\ncv = 3\n{MINIMAL}");
        assert!(RunConfig::parse(&text, Path::new(".")).is_err());
    }

    #[test]
    fn resplit_counts_accept_presets_and_maps() {
        let text = format!("[resplit]\ncounts = \"paper\"\n{MINIMAL}");
        let cfg = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert_eq!(cfg.resplit.counts, ResplitCounts::Preset(CountPreset::Paper));
        let text = format!("[resplit]\ncounts = {{ kiwi = 4, mango = 2 }}\n{MINIMAL}");
        let cfg = RunConfig::parse(&text, Path::new(".")).unwrap();
        assert!(matches!(cfg.resplit.counts, ResplitCounts::PerFruit(ref m) if m["kiwi"] == 4));
    }

    #[test]
    fn semantic_checks() {
        let reg = Registry::with_builtins();
        let bad = |extra: &str| {
            let cfg = RunConfig::parse(&format!("{extra}\n{MINIMAL}"), Path::new(".")).unwrap();
            cfg.validate(&reg, true).unwrap_err()
        };
        assert!(matches!(bad("models = [\"svm\"]"), CliError::Config(_)));
        assert!(matches!(bad("models = [\"knn\", \"knn\"]"), CliError::Config(_)));
        assert!(matches!(bad("[params.knn]\nn_neighbors = 500"), CliError::Config(_)));
        assert!(matches!(bad("[bands]\nsubsets = [\"cmyk\"]"), CliError::Config(_)));
        let no_data = RunConfig::parse("[data]\ntable = \"missing.csv\"\nmanifest = \"m.toml\"\n", Path::new("/nonexistent"));
        assert!(matches!(no_data.unwrap().validate(&reg, true), Err(CliError::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let text = format!("models = [\"knn\"]\n[params.knn]\nn_neighbors = 7\n{MINIMAL}");
        let cfg = RunConfig::parse(&text, Path::new(".")).unwrap();
        let again = RunConfig::parse(&cfg.to_toml().unwrap(), Path::new(".")).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.canonical_json().unwrap(), again.canonical_json().unwrap());
    }
}
