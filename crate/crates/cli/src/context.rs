//! Loaded data, registry and output settings shared by every phase.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use spectrabench::balance::{BalanceKind, BalanceStrategy};
use spectrabench::dataset::{load_feature_table, stratified_resplit, synth_dataset, Dataset, Fruit, Split};
use spectrabench::evaluate::{score_paired, PairedMetrics};
use spectrabench::models::baseline::MajorityFamily;
use spectrabench::models::{ModelSpec, Registry};
use spectrabench::pipeline::{self, FittedPipeline, PairedData, PairedPipelines, PipelineConfig};
use spectrabench::seed::{derive_seed, SeedPart};
use spectrabench::transforms::BandSubset;
use spectrabench::tune::{self, SearchSpace, Study};

use crate::cache::{fingerprint, key, sha256_hex, Cache};
use crate::config::{CountPreset, ResplitCounts, RunConfig, PAPER_RESPLIT};
use crate::error::{CliError, CliResult};
use crate::report::{Header, Report};

/// Built-in families plus the majority-class baseline.
pub fn cli_registry() -> Registry {
    let mut r = Registry::with_builtins();
    r.register(Arc::new(MajorityFamily));
    r
}

#[derive(Debug, Clone, Default)]
pub struct Options {
    pub out: PathBuf,
    pub resume: bool,
    pub markdown: bool,
}

pub struct Context {
    pub cfg: RunConfig,
    pub registry: Registry,
    pub dataset: Dataset,
    pub header: Header,
    pub out: PathBuf,
    pub cache: Cache,
    pub markdown: bool,
}

/// Largest equal per-fruit cap whose total stays within `budget`.
pub fn water_fill(available: &BTreeMap<Fruit, usize>, budget: usize) -> BTreeMap<Fruit, usize> {
    let total = |cap: usize| available.values().map(|&a| a.min(cap)).sum::<usize>();
    let (mut lo, mut hi) = (0, available.values().copied().max().unwrap_or(0));
    while lo < hi {
        let mid = (lo + hi).div_ceil(2);
        if total(mid) <= budget {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    available.iter().map(|(f, &a)| (f.clone(), a.min(lo))).collect()
}

fn load_dataset(cfg: &RunConfig) -> CliResult<(Dataset, String)> {
    if let Some(s) = &cfg.data.synthetic {
        let ds = synth_dataset(s.seed, &s.spec)?;
        let prov = ds.provenance().to_string();
        return Ok((ds, prov));
    }
    let (table, manifest) = match (&cfg.data.table, &cfg.data.manifest) {
        (Some(t), Some(m)) => (cfg.resolve(t), cfg.resolve(m)),
        _ => return Err(CliError::Config("[data] needs table and manifest".into())),
    };
    let describe = |p: &Path| -> CliResult<String> {
        let bytes = std::fs::read(p).map_err(|e| CliError::Data(e.into()))?;
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        Ok(format!("{name} sha256:{}", sha256_hex(&bytes)))
    };
    let prov = format!("{}; {}", describe(&table)?, describe(&manifest)?);
    Ok((load_feature_table(&table, &manifest)?, prov))
}

#[derive(Serialize, Deserialize)]
struct StudyEntry {
    study: Study,
    config: PipelineConfig,
    ripeness: Value,
    firmness: Value,
}

impl Context {
    pub fn new(cfg: RunConfig, opts: &Options) -> CliResult<Self> {
        let registry = cli_registry();
        cfg.validate(&registry, true)?;
        let (dataset, provenance) = load_dataset(&cfg)?;
        let header = Header { config_hash: sha256_hex(cfg.canonical_json()?.as_bytes()), seed: cfg.seed, provenance };
        Ok(Self {
            registry,
            dataset,
            header,
            out: opts.out.clone(),
            cache: Cache::new(&opts.out, opts.resume),
            markdown: opts.markdown,
            cfg,
        })
    }

    pub fn write(&self, report: &Report) -> CliResult<Vec<PathBuf>> {
        report.write(&self.out, &self.header, self.markdown)
    }

    /// Seed of one unit of work: global seed, phase, then identifying parts.
    pub fn unit_seed(&self, phase: &str, parts: &[&str]) -> u64 {
        let mut path: Vec<spectrabench::seed::SeedPart<'_>> = vec![phase.into()];
        path.extend(parts.iter().map(|&p| SeedPart::from(p)));
        derive_seed(self.cfg.seed, &path)
    }

    pub fn pipeline_config(&self, kind: BalanceKind, use_pca: bool, model: ModelSpec, seed: u64) -> PipelineConfig {
        PipelineConfig {
            balance: BalanceStrategy { k_neighbors: self.cfg.phase2.k_neighbors, ..BalanceStrategy::new(kind) },
            use_pca,
            pca_variance_target: self.cfg.phase2.pca_variance_target,
            model,
            seed,
        }
    }

    fn paired(&self, ds: &Dataset, split: Split, subset: Option<&BandSubset>) -> CliResult<PairedData> {
        let rows = ds.indices(split);
        if rows.is_empty() {
            return Err(CliError::Data(spectrabench::Error::Capacity(format!("the {} split is empty", split.as_str()))));
        }
        Ok(PairedData::from_dataset(ds, &rows, subset, self.cfg.bands.mode)?)
    }

    /// Per-fruit training counts for the stratified resplit.
    pub fn resplit_counts(&self) -> BTreeMap<Fruit, usize> {
        match &self.cfg.resplit.counts {
            ResplitCounts::Preset(CountPreset::Paper) => PAPER_RESPLIT.iter().cloned().collect(),
            ResplitCounts::PerFruit(m) => m.iter().map(|(k, &v)| (Fruit::from(k.clone()), v)).collect(),
            ResplitCounts::Preset(CountPreset::Auto) => {
                let mut available = BTreeMap::new();
                for s in self.dataset.samples().iter().filter(|s| s.split != Split::Test) {
                    *available.entry(s.fruit.clone()).or_insert(0) += 1;
                }
                water_fill(&available, self.dataset.count(Split::Train))
            }
        }
    }

    /// The dataset with its training partition replaced by a fruit-balanced
    /// draw; the test partition is checked to be unchanged.
    pub fn resplit(&self) -> CliResult<Dataset> {
        let test_ids = self.dataset.ids(Split::Test);
        let ds = stratified_resplit(&self.dataset, &test_ids, &self.resplit_counts(), derive_seed(self.cfg.seed, &["resplit".into()]))?;
        if ds.ids(Split::Test) != test_ids {
            return Err(CliError::Data(spectrabench::Error::Integrity("resplit changed the test partition".into())));
        }
        Ok(ds)
    }

    /// Training and test rows for a balancing strategy: the resplit training
    /// partition for `stratified_resplit`, the original one otherwise.
    pub fn train_test(&self, kind: BalanceKind, subset: Option<&BandSubset>) -> CliResult<(PairedData, PairedData)> {
        let test = self.paired(&self.dataset, Split::Test, subset)?;
        let train = match kind {
            BalanceKind::StratifiedResplit => self.paired(&self.resplit()?, Split::Train, subset)?,
            _ => self.paired(&self.dataset, Split::Train, subset)?,
        };
        let seen = train.id_set();
        if let Some(id) = test.ids.iter().find(|id| seen.contains(id.as_str())) {
            return Err(CliError::Data(spectrabench::Error::Integrity(format!("sample {id} is in train and test"))));
        }
        Ok((train, test))
    }

    /// Fits both task pipelines, reusing cached ones under `--resume`.
    pub fn fit_paired(&self, cfg: &PipelineConfig, train: &PairedData) -> CliResult<PairedPipelines> {
        let k = key(&[&serde_json::to_string(cfg)?, &fingerprint(&train.ids, &train.x)]);
        if let Some([r, f]) = self.cache.get::<[Value; 2]>("pipeline", &k) {
            match (FittedPipeline::from_blob(&self.registry, &r), FittedPipeline::from_blob(&self.registry, &f)) {
                (Ok(ripeness), Ok(firmness)) => return Ok(PairedPipelines { ripeness, firmness }),
                _ => log::warn!("cached pipeline {k} does not load; refitting"),
            }
        }
        let fitted = pipeline::fit_paired(&self.registry, cfg, train)?;
        self.cache.put("pipeline", &k, &[fitted.ripeness.to_blob()?, fitted.firmness.to_blob()?])?;
        Ok(fitted)
    }

    /// Tunes `base` over `space`, reusing a cached study under `--resume`.
    pub fn optimize(
        &self,
        base: &PipelineConfig,
        space: &SearchSpace,
        train: &PairedData,
        n_trials: usize,
        seed: u64,
    ) -> CliResult<(Study, PipelineConfig, PairedPipelines)> {
        let k = key(&[
            &serde_json::to_string(base)?,
            &serde_json::to_string(space)?,
            &n_trials.to_string(),
            &seed.to_string(),
            &fingerprint(&train.ids, &train.x),
        ]);
        if let Some(e) = self.cache.get::<StudyEntry>("study", &k) {
            if let (Ok(ripeness), Ok(firmness)) =
                (FittedPipeline::from_blob(&self.registry, &e.ripeness), FittedPipeline::from_blob(&self.registry, &e.firmness))
            {
                return Ok((e.study, e.config, PairedPipelines { ripeness, firmness }));
            }
        }
        let o = tune::optimize(&self.registry, base, space, train, n_trials, seed)?;
        let entry = StudyEntry {
            study: o.study,
            config: o.config,
            ripeness: o.fitted.ripeness.to_blob()?,
            firmness: o.fitted.firmness.to_blob()?,
        };
        self.cache.put("study", &k, &entry)?;
        Ok((entry.study, entry.config, o.fitted))
    }
}

/// Scores both task pipelines on `test`.
pub fn score(fitted: &PairedPipelines, test: &PairedData) -> CliResult<PairedMetrics> {
    Ok(score_paired(
        &test.ripeness,
        &fitted.ripeness.predict(&test.x)?,
        &test.firmness,
        &fitted.firmness.predict(&test.x)?,
    )?)
}
