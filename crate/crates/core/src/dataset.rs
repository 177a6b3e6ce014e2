//! Spectral datasets: loading, validation, label semantics, splitting and a
//! synthetic generator for desk-scale runs.
//!
//! A feature table is a CSV with header
//! `sample_id,fruit,ripeness,firmness_gf,split,b000,...,b{B-1}` and a TOML
//! manifest carrying the wavelength grid:
//!
//! ```toml
//! camera = "Specim FX10"
//! band_count = 224
//! wavelengths_nm = [398.0, 400.7, ...]
//! ```

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

/// Strictly increasing wavelengths in nanometres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct WavelengthGrid(Vec<f64>);

impl WavelengthGrid {
    pub fn new(wavelengths_nm: Vec<f64>) -> Result<Self> {
        if wavelengths_nm.len() < 2 {
            return Err(Error::Schema(format!(
                "wavelength grid needs at least 2 bands, got {}",
                wavelengths_nm.len()
            )));
        }
        if let Some(bad) = wavelengths_nm.iter().find(|w| !w.is_finite() || **w <= 0.0) {
            return Err(Error::Schema(format!("invalid wavelength {bad}")));
        }
        if wavelengths_nm.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Schema("wavelengths must be strictly increasing".into()));
        }
        Ok(Self(wavelengths_nm))
    }

    /// Evenly spaced grid from `start` to `end` inclusive.
    pub fn linspace(start: f64, end: f64, bands: usize) -> Result<Self> {
        if bands < 2 {
            return Err(Error::Schema("wavelength grid needs at least 2 bands".into()));
        }
        let step = (end - start) / (bands - 1) as f64;
        Self::new((0..bands).map(|i| start + step * i as f64).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Restricts the grid to the given band indices.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let picked = indices
            .iter()
            .map(|&i| {
                self.0
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::domain(format!("band index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(picked)
    }
}

impl TryFrom<Vec<f64>> for WavelengthGrid {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<WavelengthGrid> for Vec<f64> {
    fn from(g: WavelengthGrid) -> Self {
        g.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum Fruit {
    Avocado,
    Kiwi,
    Mango,
    Kaki,
    Papaya,
    Other(String),
}

impl Fruit {
    pub const PAPER_FRUITS: [Fruit; 5] =
        [Fruit::Avocado, Fruit::Kiwi, Fruit::Mango, Fruit::Kaki, Fruit::Papaya];
}

impl From<String> for Fruit {
    fn from(s: String) -> Self {
        match s.trim().to_ascii_lowercase().as_str() {
            "avocado" => Fruit::Avocado,
            "kiwi" => Fruit::Kiwi,
            "mango" => Fruit::Mango,
            "kaki" => Fruit::Kaki,
            "papaya" => Fruit::Papaya,
            _ => Fruit::Other(s.trim().to_string()),
        }
    }
}

impl From<Fruit> for String {
    fn from(f: Fruit) -> Self {
        f.to_string()
    }
}

impl fmt::Display for Fruit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Fruit::Avocado => f.write_str("avocado"),
            Fruit::Kiwi => f.write_str("kiwi"),
            Fruit::Mango => f.write_str("mango"),
            Fruit::Kaki => f.write_str("kaki"),
            Fruit::Papaya => f.write_str("papaya"),
            Fruit::Other(name) => f.write_str(name),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ripeness {
    Unripe,
    Perfect,
    Overripe,
}

impl Ripeness {
    pub const ALL: [Ripeness; 3] = [Ripeness::Unripe, Ripeness::Perfect, Ripeness::Overripe];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Ripeness::Unripe => "unripe",
            Ripeness::Perfect => "perfect",
            Ripeness::Overripe => "overripe",
        }
    }
}

impl FromStr for Ripeness {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unripe" => Ok(Ripeness::Unripe),
            "perfect" => Ok(Ripeness::Perfect),
            "overripe" => Ok(Ripeness::Overripe),
            _ => Err(()),
        }
    }
}

/// Firmness bin. Ordered `Soft < Medium < Firm < Unknown`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FirmnessClass {
    Soft,
    Medium,
    Firm,
    Unknown,
}

impl FirmnessClass {
    pub const ALL: [FirmnessClass; 4] = [
        FirmnessClass::Soft,
        FirmnessClass::Medium,
        FirmnessClass::Firm,
        FirmnessClass::Unknown,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FirmnessClass::Soft => "soft",
            FirmnessClass::Medium => "medium",
            FirmnessClass::Firm => "firm",
            FirmnessClass::Unknown => "unknown",
        }
    }
}

/// Upper bound (inclusive) of the soft bin in grams-force.
pub const SOFT_MAX_GF: f64 = 1000.0;
/// Upper bound (inclusive) of the medium bin in grams-force.
pub const MEDIUM_MAX_GF: f64 = 2500.0;

/// Bins a penetrometer reading into soft / medium / firm.
///
/// Thresholds are `gf <= 1000` and `gf <= 2500`, so fractional readings in
/// the gaps (1000, 1001) and (2500, 2501) fall into the lower class.
pub fn bin_firmness(gf: Option<f64>) -> Result<FirmnessClass> {
    match gf {
        None => Ok(FirmnessClass::Unknown),
        Some(v) if v.is_nan() || v < 0.0 => {
            Err(Error::domain(format!("firmness must be non-negative, got {v}")))
        }
        Some(v) if v <= SOFT_MAX_GF => Ok(FirmnessClass::Soft),
        Some(v) if v <= MEDIUM_MAX_GF => Ok(FirmnessClass::Medium),
        Some(_) => Ok(FirmnessClass::Firm),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unassigned,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unassigned => "unassigned",
        }
    }
}

/// The two prediction targets trained independently for every model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Ripeness,
    Firmness,
}

impl Task {
    pub const BOTH: [Task; 2] = [Task::Ripeness, Task::Firmness];

    pub fn n_classes(self) -> usize {
        match self {
            Task::Ripeness => Ripeness::ALL.len(),
            Task::Firmness => FirmnessClass::ALL.len(),
        }
    }

    pub fn class_names(self) -> Vec<&'static str> {
        match self {
            Task::Ripeness => Ripeness::ALL.iter().map(|r| r.as_str()).collect(),
            Task::Firmness => FirmnessClass::ALL.iter().map(|f| f.as_str()).collect(),
        }
    }

    /// Class index that is kept for training but dropped from metrics.
    pub fn excluded_class(self) -> Option<usize> {
        match self {
            Task::Ripeness => None,
            Task::Firmness => Some(FirmnessClass::Unknown.index()),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Ripeness => "ripeness",
            Task::Firmness => "firmness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub sample_id: String,
    pub fruit: Fruit,
    pub ripeness: Ripeness,
    pub firmness_gf: Option<f64>,
    pub spectrum: Vec<f64>,
    pub split: Split,
}

impl Sample {
    pub fn firmness_class(&self) -> FirmnessClass {
        // firmness is validated non-negative on construction
        bin_firmness(self.firmness_gf).unwrap_or(FirmnessClass::Unknown)
    }

    pub fn label(&self, task: Task) -> usize {
        match task {
            Task::Ripeness => self.ripeness.index(),
            Task::Firmness => self.firmness_class().index(),
        }
    }
}

/// An immutable, validated collection of samples on a shared grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    grid: WavelengthGrid,
    samples: Vec<Sample>,
    provenance: String,
}

impl Dataset {
    pub fn new(grid: WavelengthGrid, samples: Vec<Sample>, provenance: impl Into<String>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for (row, s) in samples.iter().enumerate() {
            if !seen.insert(s.sample_id.as_str()) {
                return Err(Error::Integrity(format!("duplicate sample_id {:?}", s.sample_id)));
            }
            if s.spectrum.len() != grid.len() {
                return Err(Error::Schema(format!(
                    "row {}: spectrum has {} bands, grid has {}",
                    row + 1,
                    s.spectrum.len(),
                    grid.len()
                )));
            }
            if s.spectrum.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("row {}: non-finite spectrum value", row + 1)));
            }
            if let Some(gf) = s.firmness_gf {
                if !(gf >= 0.0) || !gf.is_finite() {
                    return Err(Error::Schema(format!("row {}: invalid firmness {gf}", row + 1)));
                }
            }
        }
        Ok(Self { grid, samples, provenance: provenance.into() })
    }

    pub fn grid(&self) -> &WavelengthGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Row indices belonging to a split, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        self.samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count(&self, split: Split) -> usize {
        self.samples.iter().filter(|s| s.split == split).count()
    }

    pub fn ids(&self, split: Split) -> BTreeSet<String> {
        self.samples
            .iter()
            .filter(|s| s.split == split)
            .map(|s| s.sample_id.clone())
            .collect()
    }

    pub fn labels(&self, task: Task) -> Vec<usize> {
        self.samples.iter().map(|s| s.label(task)).collect()
    }

    pub fn fruit_counts(&self, split: Split) -> BTreeMap<Fruit, usize> {
        let mut out = BTreeMap::new();
        for s in self.samples.iter().filter(|s| s.split == split) {
            *out.entry(s.fruit.clone()).or_insert(0) += 1;
        }
        out
    }

    /// Returns a copy with split assignments replaced.
    pub fn with_splits(&self, splits: &[Split]) -> Result<Self> {
        if splits.len() != self.samples.len() {
            return Err(Error::shape("one split per sample required"));
        }
        let mut samples = self.samples.clone();
        for (s, &sp) in samples.iter_mut().zip(splits) {
            s.split = sp;
        }
        Ok(Self { grid: self.grid.clone(), samples, provenance: self.provenance.clone() })
    }
}

/// Wavelength grid description stored next to a feature table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub camera: String,
    pub band_count: usize,
    pub wavelengths_nm: Vec<f64>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let m: Manifest =
            toml::from_str(&text).map_err(|e| Error::Schema(format!("manifest {}: {e}", path.display())))?;
        if m.band_count != m.wavelengths_nm.len() {
            return Err(Error::Schema(format!(
                "manifest band_count {} does not match {} wavelengths",
                m.band_count,
                m.wavelengths_nm.len()
            )));
        }
        Ok(m)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| Error::Schema(e.to_string()))?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn grid(&self) -> Result<WavelengthGrid> {
        WavelengthGrid::new(self.wavelengths_nm.clone())
    }
}

const FIXED_COLUMNS: [&str; 5] = ["sample_id", "fruit", "ripeness", "firmness_gf", "split"];

pub fn band_column_name(index: usize, band_count: usize) -> String {
    let width = band_count.saturating_sub(1).to_string().len().max(3);
    format!("b{index:0width$}")
}

/// Loads a feature table CSV and its manifest.
pub fn load_feature_table(table_path: &Path, manifest_path: &Path) -> Result<Dataset> {
    let manifest = Manifest::load(manifest_path)?;
    let grid = manifest.grid()?;
    let file = std::fs::File::open(table_path)?;
    read_feature_table(file, grid, table_path.display().to_string())
}

/// Parses a feature table from any reader against a known grid.
pub fn read_feature_table<R: std::io::Read>(reader: R, grid: WavelengthGrid, provenance: String) -> Result<Dataset> {
    let bands = grid.len();
    let mut rdr = csv::ReaderBuilder::new().flexible(true).has_headers(true).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { row: 0, message: e.to_string() })?
        .clone();
    let expected: Vec<String> = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..bands).map(|i| band_column_name(i, bands)))
        .collect();
    if header.len() != expected.len() || header.iter().zip(&expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::Schema(format!(
            "header must be {},{}..{} ({} columns); found {} columns",
            FIXED_COLUMNS.join(","),
            expected[5],
            expected[expected.len() - 1],
            expected.len(),
            header.len()
        )));
    }

    let mut samples = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::Parse { row, message: e.to_string() })?;
        if record.len() != expected.len() {
            return Err(Error::Schema(format!(
                "row {row}: expected {bands} band values, found {}",
                record.len().saturating_sub(FIXED_COLUMNS.len())
            )));
        }
        let ripeness_token = &record[2];
        let ripeness = ripeness_token.parse::<Ripeness>().map_err(|_| Error::Label {
            row,
            field: "ripeness",
            token: ripeness_token.to_string(),
        })?;
        let firmness_gf = match record[3].trim() {
            "" => None,
            t => {
                let v: f64 = t.parse().map_err(|_| Error::Parse {
                    row,
                    message: format!("firmness_gf {t:?} is not a number"),
                })?;
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(Error::Schema(format!("row {row}: firmness_gf must be non-negative, got {t}")));
                }
                Some(v)
            }
        };
        let split = match record[4].trim().to_ascii_lowercase().as_str() {
            "train" => Split::Train,
            "test" => Split::Test,
            "" | "unassigned" => Split::Unassigned,
            other => {
                return Err(Error::Label { row, field: "split", token: other.to_string() });
            }
        };
        let spectrum = record
            .iter()
            .skip(FIXED_COLUMNS.len())
            .enumerate()
            .map(|(b, t)| {
                t.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse { row, message: format!("band {b}: invalid value {t:?}") })
            })
            .collect::<Result<Vec<_>>>()?;
        samples.push(Sample {
            sample_id: record[0].trim().to_string(),
            fruit: Fruit::from(record[1].to_string()),
            ripeness,
            firmness_gf,
            spectrum,
            split,
        });
    }
    let ds = Dataset::new(grid, samples, provenance)?;
    let train = ds.ids(Split::Train);
    if ds.ids(Split::Test).iter().any(|id| train.contains(id)) {
        return Err(Error::Integrity("train and test share sample ids".into()));
    }
    Ok(ds)
}

/// Formats a value with nine significant digits.
pub fn format_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// Writes a dataset as a feature table CSV (spectra at 9 significant digits).
pub fn write_feature_table<W: std::io::Write>(ds: &Dataset, writer: W) -> Result<()> {
    let bands = ds.grid.len();
    let mut w = csv::Writer::from_writer(writer);
    let header: Vec<String> = FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((0..bands).map(|i| band_column_name(i, bands)))
        .collect();
    w.write_record(&header).map_err(|e| Error::Io(e.into()))?;
    for s in &ds.samples {
        let mut rec = vec![
            s.sample_id.clone(),
            s.fruit.to_string(),
            s.ripeness.as_str().to_string(),
            s.firmness_gf.map(|v| v.to_string()).unwrap_or_default(),
            s.split.as_str().to_string(),
        ];
        rec.extend(s.spectrum.iter().map(|&v| format_sig9(v)));
        w.write_record(&rec).map_err(|e| Error::Io(e.into()))?;
    }
    w.flush()?;
    Ok(())
}

/// Replaces the training partition with a fruit-balanced sample.
///
/// Samples in `fixed_test_ids` stay in the test split. For each fruit in
/// `per_fruit_train_counts`, exactly that many non-test samples are drawn
/// uniformly without replacement; every other non-test sample becomes
/// unassigned.
pub fn stratified_resplit(
    pool: &Dataset,
    fixed_test_ids: &BTreeSet<String>,
    per_fruit_train_counts: &BTreeMap<Fruit, usize>,
    seed: u64,
) -> Result<Dataset> {
    let known: HashSet<&str> = pool.samples.iter().map(|s| s.sample_id.as_str()).collect();
    if let Some(missing) = fixed_test_ids.iter().find(|id| !known.contains(id.as_str())) {
        return Err(Error::Integrity(format!("test id {missing:?} is not in the pool")));
    }
    let mut by_fruit: BTreeMap<&Fruit, Vec<usize>> = BTreeMap::new();
    for (i, s) in pool.samples.iter().enumerate() {
        if !fixed_test_ids.contains(&s.sample_id) {
            by_fruit.entry(&s.fruit).or_default().push(i);
        }
    }
    let mut splits: Vec<Split> = pool
        .samples
        .iter()
        .map(|s| if fixed_test_ids.contains(&s.sample_id) { Split::Test } else { Split::Unassigned })
        .collect();
    let mut rng = rng_from(seed);
    for (fruit, &want) in per_fruit_train_counts {
        let candidates = by_fruit.get(fruit).map(Vec::as_slice).unwrap_or(&[]);
        if candidates.len() < want {
            return Err(Error::Capacity(format!(
                "fruit {fruit}: requested {want} training samples, only {} available",
                candidates.len()
            )));
        }
        for &i in candidates.choose_multiple(&mut rng, want) {
            splits[i] = Split::Train;
        }
    }
    pool.with_splits(&splits)
}

/// Parameters of the synthetic spectral generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    /// Samples per ripeness class (unripe, perfect, overripe).
    pub class_counts: [usize; 3],
    pub n_bands: usize,
    /// Distance between adjacent class absorption depths, in noise units.
    pub separation: f64,
    pub noise_sd: f64,
    pub test_fraction: f64,
    /// Fraction of samples whose firmness reading is withheld.
    pub unknown_fraction: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            class_counts: [60, 60, 60],
            n_bands: 224,
            separation: 5.0,
            noise_sd: 0.01,
            test_fraction: 0.25,
            unknown_fraction: 0.0,
        }
    }
}

fn gaussian_bump(t: f64, center: f64, width: f64) -> f64 {
    (-0.5 * ((t - center) / width).powi(2)).exp()
}

/// Generates a labelled spectral dataset with class-dependent absorption
/// features.
///
/// Every spectrum is a smooth red-edge baseline minus two Gaussian absorption
/// bands: one in the visible range whose depth grows with the ripeness class,
/// one in the near-infrared whose depth grows with the firmness class. Depth
/// steps between adjacent classes are `separation * noise_sd`; i.i.d.
/// Gaussian noise with `noise_sd` is added per band. With `separation = 0`
/// the class-conditional distributions are identical.
pub fn synth_dataset(seed: u64, spec: &SynthSpec) -> Result<Dataset> {
    if spec.n_bands < 2 {
        return Err(Error::domain("synthetic data needs at least 2 bands"));
    }
    if !(0.0..1.0).contains(&spec.test_fraction) || !(0.0..=1.0).contains(&spec.unknown_fraction) {
        return Err(Error::domain("fractions must lie in [0, 1)"));
    }
    if !(spec.noise_sd >= 0.0) || !(spec.separation >= 0.0) {
        return Err(Error::domain("noise and separation must be non-negative"));
    }
    let grid = WavelengthGrid::linspace(398.0, 1004.0, spec.n_bands)?;
    let mut rng = rng_from(seed);
    let noise = Normal::new(0.0, spec.noise_sd).map_err(|e| Error::domain(e.to_string()))?;
    let step = spec.separation * spec.noise_sd;
    let bands = spec.n_bands;

    let mut samples = Vec::new();
    let mut splits_by_class: Vec<Vec<usize>> = Vec::new();
    for (class, &count) in spec.class_counts.iter().enumerate() {
        let ripeness = Ripeness::ALL[class];
        let mut members = Vec::with_capacity(count);
        for _ in 0..count {
            let firm_class = rng.random_range(0..3usize);
            let (lo, hi) = match firm_class {
                0 => (0.0, SOFT_MAX_GF),
                1 => (SOFT_MAX_GF + 1.0, MEDIUM_MAX_GF),
                _ => (MEDIUM_MAX_GF + 1.0, 4000.0),
            };
            let gf = lo + (hi - lo) * rng.random::<f64>();
            let withheld = rng.random::<f64>() < spec.unknown_fraction;
            let spectrum: Vec<f64> = (0..bands)
                .map(|b| {
                    let t = b as f64 / (bands - 1) as f64;
                    let base = 0.25 + 0.05 * t + 0.35 / (1.0 + (-(t - 0.5) / 0.04).exp());
                    let ripe_dip = step * class as f64 * gaussian_bump(t, 0.25, 0.04);
                    let firm_dip = step * firm_class as f64 * gaussian_bump(t, 0.8, 0.05);
                    base - ripe_dip - firm_dip + noise.sample(&mut rng)
                })
                .collect();
            members.push(samples.len());
            samples.push(Sample {
                sample_id: format!("syn-{:05}", samples.len()),
                fruit: Fruit::PAPER_FRUITS[samples.len() % Fruit::PAPER_FRUITS.len()].clone(),
                ripeness,
                firmness_gf: if withheld { None } else { Some(gf) },
                spectrum,
                split: Split::Train,
            });
        }
        splits_by_class.push(members);
    }
    for mut members in splits_by_class {
        members.shuffle(&mut rng);
        let n_test = (spec.test_fraction * members.len() as f64).round() as usize;
        for &i in &members[..n_test] {
            samples[i].split = Split::Test;
        }
    }
    Dataset::new(grid, samples, format!("synthetic(seed={seed})"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid3() -> WavelengthGrid {
        WavelengthGrid::new(vec![400.0, 500.0, 600.0]).unwrap()
    }

    fn csv_text(rows: &[&str]) -> String {
        let mut s = String::from("sample_id,fruit,ripeness,firmness_gf,split,b000,b001,b002\n");
        for r in rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    #[test]
    fn firmness_bin_boundaries() {
        assert_eq!(bin_firmness(Some(0.0)).unwrap(), FirmnessClass::Soft);
        assert_eq!(bin_firmness(Some(1000.0)).unwrap(), FirmnessClass::Soft);
        assert_eq!(bin_firmness(Some(1000.5)).unwrap(), FirmnessClass::Medium);
        assert_eq!(bin_firmness(Some(1001.0)).unwrap(), FirmnessClass::Medium);
        assert_eq!(bin_firmness(Some(2500.0)).unwrap(), FirmnessClass::Medium);
        assert_eq!(bin_firmness(Some(2500.5)).unwrap(), FirmnessClass::Firm);
        assert_eq!(bin_firmness(Some(2501.0)).unwrap(), FirmnessClass::Firm);
        assert_eq!(bin_firmness(None).unwrap(), FirmnessClass::Unknown);
        assert!(matches!(bin_firmness(Some(-1.0)), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn firmness_bins_are_monotone(a in 0.0f64..10_000.0, b in 0.0f64..10_000.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(bin_firmness(Some(lo)).unwrap() <= bin_firmness(Some(hi)).unwrap());
        }
    }

    #[test]
    fn parses_labels_and_splits() {
        let text = csv_text(&[
            "a,avocado,unripe,1200,train,0.1,0.2,0.3",
            "b,Kiwi,overripe,,test,0.3,0.2,0.1",
            "c,lychee,perfect,10,train,0.1,0.1,0.2",
        ]);
        let ds = read_feature_table(text.as_bytes(), grid3(), "t".into()).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.count(Split::Train), 2);
        assert_eq!(ds.samples()[1].firmness_class(), FirmnessClass::Unknown);
        assert_eq!(ds.samples()[2].fruit, Fruit::Other("lychee".into()));
        assert_eq!(ds.samples()[0].label(Task::Firmness), FirmnessClass::Medium.index());
    }

    #[test]
    fn empty_table_keeps_grid() {
        let ds = read_feature_table(csv_text(&[]).as_bytes(), grid3(), "t".into()).unwrap();
        assert!(ds.is_empty());
        assert_eq!(ds.grid().len(), 3);
    }

    #[test]
    fn short_row_is_schema_error_naming_row() {
        let text = csv_text(&["a,avocado,unripe,1,train,0.1,0.2,0.3", "b,kiwi,unripe,1,train,0.1,0.2"]);
        match read_feature_table(text.as_bytes(), grid3(), "t".into()) {
            Err(Error::Schema(msg)) => assert!(msg.contains("row 2"), "{msg}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn bad_tokens_and_duplicates() {
        let bad_label = csv_text(&["a,avocado,green,1,train,0.1,0.2,0.3"]);
        assert!(matches!(
            read_feature_table(bad_label.as_bytes(), grid3(), "t".into()),
            Err(Error::Label { row: 1, field: "ripeness", .. })
        ));
        let dup = csv_text(&["a,avocado,unripe,1,train,0.1,0.2,0.3", "a,kiwi,unripe,1,test,0.1,0.2,0.3"]);
        assert!(matches!(read_feature_table(dup.as_bytes(), grid3(), "t".into()), Err(Error::Integrity(_))));
        let junk = csv_text(&["a,avocado,unripe,1,train,0.1,abc,0.3"]);
        assert!(matches!(
            read_feature_table(junk.as_bytes(), grid3(), "t".into()),
            Err(Error::Parse { row: 1, .. })
        ));
    }

    #[test]
    fn write_then_load_is_stable() {
        let ds = synth_dataset(3, &SynthSpec { class_counts: [4, 4, 4], n_bands: 12, ..Default::default() }).unwrap();
        let mut first = Vec::new();
        write_feature_table(&ds, &mut first).unwrap();
        let back = read_feature_table(first.as_slice(), ds.grid().clone(), "x".into()).unwrap();
        for (a, b) in ds.samples().iter().zip(back.samples()) {
            assert_eq!(a.firmness_gf, b.firmness_gf);
            for (x, y) in a.spectrum.iter().zip(&b.spectrum) {
                assert!(((x - y) / x).abs() < 1e-8);
            }
        }
        let mut second = Vec::new();
        write_feature_table(&back, &mut second).unwrap();
        assert_eq!(first, second);
    }

    fn pool() -> Dataset {
        let grid = grid3();
        let fruits = [Fruit::Avocado, Fruit::Kiwi, Fruit::Papaya];
        let samples = (0..30)
            .map(|i| Sample {
                sample_id: format!("s{i:02}"),
                fruit: fruits[i % 3].clone(),
                ripeness: Ripeness::ALL[i % 3],
                firmness_gf: Some(100.0 * i as f64),
                spectrum: vec![0.1, 0.2, 0.3],
                split: if i < 6 { Split::Test } else { Split::Train },
            })
            .collect();
        Dataset::new(grid, samples, "pool").unwrap()
    }

    #[test]
    fn resplit_keeps_test_and_hits_counts() {
        let p = pool();
        let test = p.ids(Split::Test);
        let counts: BTreeMap<Fruit, usize> =
            [(Fruit::Avocado, 5), (Fruit::Kiwi, 8), (Fruit::Papaya, 3)].into_iter().collect();
        let out = stratified_resplit(&p, &test, &counts, 9).unwrap();
        assert_eq!(out.ids(Split::Test), test);
        assert_eq!(out.fruit_counts(Split::Train), counts);
        assert!(out.ids(Split::Train).is_disjoint(&test));
        let again = stratified_resplit(&p, &test, &counts, 9).unwrap();
        assert_eq!(out, again);
    }

    #[test]
    fn resplit_capacity_error_names_fruit() {
        let p = pool();
        let counts: BTreeMap<Fruit, usize> = [(Fruit::Papaya, 200)].into_iter().collect();
        match stratified_resplit(&p, &p.ids(Split::Test), &counts, 1) {
            Err(Error::Capacity(msg)) => assert!(msg.contains("papaya")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn synth_is_deterministic_and_labelled() {
        let spec = SynthSpec { class_counts: [5, 6, 7], n_bands: 20, ..Default::default() };
        let a = synth_dataset(7, &spec).unwrap();
        let b = synth_dataset(7, &spec).unwrap();
        assert_eq!(a, b);
        let counts: Vec<usize> =
            Ripeness::ALL.iter().map(|r| a.samples().iter().filter(|s| s.ripeness == *r).count()).collect();
        assert_eq!(counts, vec![5, 6, 7]);
        assert!(a.ids(Split::Train).is_disjoint(&a.ids(Split::Test)));
    }
}
