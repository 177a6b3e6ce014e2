//! Spectral representations and feature-vector assembly.
//!
//! Five per-sample transforms are concatenated in a fixed order
//! (raw, first derivative, continuum removed, SNV, derivative of the
//! continuum-removed spectrum), giving `5 * B` features for `B` bands.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Standard-deviation floor below which SNV refuses to divide.
pub const SNV_EPS: f64 = 1e-12;

/// Per-band mean over the foreground pixels of a `P x B` pixel matrix.
pub fn mean_spectrum(pixels: &DMatrix<f64>, foreground: &[bool]) -> Result<Vec<f64>> {
    if foreground.len() != pixels.nrows() {
        return Err(Error::shape(format!(
            "mask has {} entries for {} pixels",
            foreground.len(),
            pixels.nrows()
        )));
    }
    let n = foreground.iter().filter(|&&m| m).count();
    if n == 0 {
        return Err(Error::domain("empty foreground mask"));
    }
    let mut out = vec![0.0; pixels.ncols()];
    for (row, _) in foreground.iter().enumerate().filter(|(_, &m)| m) {
        for (b, acc) in out.iter_mut().enumerate() {
            *acc += pixels[(row, b)];
        }
    }
    out.iter_mut().for_each(|v| *v /= n as f64);
    Ok(out)
}

fn check_lengths(s: &[f64], wavelengths: &[f64]) -> Result<()> {
    if s.len() != wavelengths.len() {
        return Err(Error::shape(format!(
            "spectrum has {} values, grid has {}",
            s.len(),
            wavelengths.len()
        )));
    }
    Ok(())
}

/// First derivative with respect to wavelength.
///
/// Interior bands use central differences over the true wavelength spacing;
/// the two endpoints use one-sided differences, so the output keeps the
/// input length.
pub fn first_derivative(s: &[f64], wavelengths: &[f64]) -> Result<Vec<f64>> {
    check_lengths(s, wavelengths)?;
    let n = s.len();
    if n < 3 {
        return Err(Error::domain(format!("derivative needs at least 3 bands, got {n}")));
    }
    let mut d = Vec::with_capacity(n);
    d.push((s[1] - s[0]) / (wavelengths[1] - wavelengths[0]));
    for i in 1..n - 1 {
        d.push((s[i + 1] - s[i - 1]) / (wavelengths[i + 1] - wavelengths[i - 1]));
    }
    d.push((s[n - 1] - s[n - 2]) / (wavelengths[n - 1] - wavelengths[n - 2]));
    Ok(d)
}

/// Upper convex hull of `(x[i], y[i])`, returned as vertex indices in
/// increasing `x`. Collinear interior points are dropped.
pub fn upper_hull(x: &[f64], y: &[f64]) -> Vec<usize> {
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        while hull.len() >= 2 {
            let o = hull[hull.len() - 2];
            let a = hull[hull.len() - 1];
            let cross = (x[a] - x[o]) * (y[i] - y[o]) - (y[a] - y[o]) * (x[i] - x[o]);
            if cross >= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

/// Piecewise-linear upper-hull continuum evaluated at every band.
pub fn continuum(s: &[f64], wavelengths: &[f64]) -> Result<Vec<f64>> {
    check_lengths(s, wavelengths)?;
    if s.len() < 2 {
        return Err(Error::domain("continuum removal needs at least 2 bands"));
    }
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("non-finite spectrum value"));
    }
    let hull = upper_hull(wavelengths, s);
    let mut c = vec![0.0; s.len()];
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let slope = (s[b] - s[a]) / (wavelengths[b] - wavelengths[a]);
        c[a] = s[a];
        for i in a + 1..b {
            c[i] = s[a] + slope * (wavelengths[i] - wavelengths[a]);
        }
        c[b] = s[b];
    }
    Ok(c)
}

/// Spectrum divided by its upper-hull continuum. Bands where the continuum
/// is not positive map to 1.
pub fn continuum_removal(s: &[f64], wavelengths: &[f64]) -> Result<Vec<f64>> {
    let c = continuum(s, wavelengths)?;
    Ok(s.iter().zip(&c).map(|(&v, &cv)| if cv > 0.0 { v / cv } else { 1.0 }).collect())
}

/// Standard normal variate with the population standard deviation.
pub fn snv(s: &[f64]) -> Result<Vec<f64>> {
    if s.len() < 2 {
        return Err(Error::domain("SNV needs at least 2 bands"));
    }
    let n = s.len() as f64;
    let mean = s.iter().sum::<f64>() / n;
    let sd = (s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    if !(sd > SNV_EPS) {
        return Err(Error::DegenerateSpectrum(sd));
    }
    Ok(s.iter().map(|v| (v - mean) / sd).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Raw,
    D1,
    Cr,
    Snv,
    D1cr,
}

impl Transform {
    /// Concatenation order of the feature vector.
    pub const ORDER: [Transform; 5] = [Transform::Raw, Transform::D1, Transform::Cr, Transform::Snv, Transform::D1cr];

    pub fn as_str(self) -> &'static str {
        match self {
            Transform::Raw => "raw",
            Transform::D1 => "d1",
            Transform::Cr => "cr",
            Transform::Snv => "snv",
            Transform::D1cr => "d1cr",
        }
    }

    /// Applies this transform to a whole spectrum.
    pub fn apply(self, s: &[f64], wavelengths: &[f64]) -> Result<Vec<f64>> {
        match self {
            Transform::Raw => {
                check_lengths(s, wavelengths)?;
                Ok(s.to_vec())
            }
            Transform::D1 => first_derivative(s, wavelengths),
            Transform::Cr => continuum_removal(s, wavelengths),
            Transform::Snv => snv(s),
            Transform::D1cr => first_derivative(&continuum_removal(s, wavelengths)?, wavelengths),
        }
    }
}

/// A named, strictly increasing selection of band indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandSubset {
    pub name: String,
    pub indices: Vec<usize>,
}

impl BandSubset {
    pub fn new(name: impl Into<String>, indices: Vec<usize>) -> Result<Self> {
        if indices.is_empty() || indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("band subset indices must be non-empty and strictly increasing"));
        }
        Ok(Self { name: name.into(), indices })
    }

    /// Visible-range bands at 448, 540 and 640 nm on the 224-band VIS grid.
    pub fn vis3() -> Self {
        Self { name: "vis3".into(), indices: vec![18, 52, 89] }
    }

    /// Approximate Bayer RGB centres at 450, 550 and 651 nm.
    pub fn rgb() -> Self {
        Self { name: "rgb".into(), indices: vec![19, 56, 93] }
    }

    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "vis3" => Some(Self::vis3()),
            "rgb" => Some(Self::rgb()),
            _ => None,
        }
    }

    pub fn validate_for(&self, bands: usize) -> Result<()> {
        match self.indices.iter().find(|&&i| i >= bands) {
            Some(i) => Err(Error::domain(format!("band index {i} out of range for {bands} bands"))),
            None => Ok(()),
        }
    }
}

/// Where band selection happens relative to the transforms.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubsetMode {
    /// Restrict the spectrum first, then transform the reduced spectrum.
    #[default]
    SubsetThenTransform,
    /// Transform the full spectrum, then keep the selected bands.
    TransformThenSubset,
}

/// Origin of one feature: the transform and the band index in the full grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub transform: Transform,
    pub band: usize,
}

pub type GroupMap = Vec<FeatureGroup>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub group_map: GroupMap,
}

/// Group map for a feature vector built from `bands` (full-grid indices).
pub fn group_map_for(bands: &[usize]) -> GroupMap {
    Transform::ORDER
        .iter()
        .flat_map(|&t| bands.iter().map(move |&b| FeatureGroup { transform: t, band: b }))
        .collect()
}

/// Concatenates the five transforms of one spectrum.
pub fn build_feature_vector(
    s: &[f64],
    wavelengths: &[f64],
    subset: Option<&BandSubset>,
    mode: SubsetMode,
) -> Result<FeatureVector> {
    check_lengths(s, wavelengths)?;
    let bands: Vec<usize> = match subset {
        Some(sub) => {
            sub.validate_for(s.len())?;
            sub.indices.clone()
        }
        None => (0..s.len()).collect(),
    };
    let mut values = Vec::with_capacity(5 * bands.len());
    match (subset, mode) {
        (Some(_), SubsetMode::SubsetThenTransform) => {
            let rs: Vec<f64> = bands.iter().map(|&b| s[b]).collect();
            let rw: Vec<f64> = bands.iter().map(|&b| wavelengths[b]).collect();
            for t in Transform::ORDER {
                values.extend(t.apply(&rs, &rw)?);
            }
        }
        _ => {
            for t in Transform::ORDER {
                let full = t.apply(s, wavelengths)?;
                values.extend(bands.iter().map(|&b| full[b]));
            }
        }
    }
    Ok(FeatureVector { values, group_map: group_map_for(&bands) })
}

/// Feature matrix (one row per requested sample) and its group map.
pub fn featurize(
    ds: &Dataset,
    rows: &[usize],
    subset: Option<&BandSubset>,
    mode: SubsetMode,
) -> Result<(DMatrix<f64>, GroupMap)> {
    let wl = ds.grid().as_slice();
    let bands = subset.map_or(wl.len(), |s| s.indices.len());
    let width = 5 * bands;
    let mut x = DMatrix::zeros(rows.len(), width);
    let mut map = match subset {
        Some(sub) => group_map_for(&sub.indices),
        None => group_map_for(&(0..wl.len()).collect::<Vec<_>>()),
    };
    for (r, &i) in rows.iter().enumerate() {
        let sample = ds
            .samples()
            .get(i)
            .ok_or_else(|| Error::shape(format!("row {i} out of range")))?;
        let fv = build_feature_vector(&sample.spectrum, wl, subset, mode).map_err(|e| match e {
            Error::DegenerateSpectrum(sd) => {
                Error::Degenerate(format!("sample {}: SNV standard deviation {sd:e}", sample.sample_id))
            }
            other => other,
        })?;
        for (c, v) in fv.values.into_iter().enumerate() {
            x[(r, c)] = v;
        }
        map = fv.group_map;
    }
    Ok((x, map))
}
