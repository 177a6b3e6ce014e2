//! Training-set class balancing on feature matrices.
//!
//! Balancing always runs on one task's labels at a time and only ever sees
//! training rows.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::rng_from;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalanceKind {
    Original,
    /// Resplitting happens at the dataset level; on matrices it is the identity.
    StratifiedResplit,
    Smote,
    Oversample,
    Undersample,
}

impl BalanceKind {
    pub const ALL: [BalanceKind; 5] = [
        BalanceKind::Original,
        BalanceKind::StratifiedResplit,
        BalanceKind::Smote,
        BalanceKind::Oversample,
        BalanceKind::Undersample,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            BalanceKind::Original => "original",
            BalanceKind::StratifiedResplit => "stratified_resplit",
            BalanceKind::Smote => "smote",
            BalanceKind::Oversample => "oversample",
            BalanceKind::Undersample => "undersample",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceStrategy {
    pub kind: BalanceKind,
    #[serde(default = "default_k")]
    pub k_neighbors: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    5
}

impl BalanceStrategy {
    pub fn new(kind: BalanceKind) -> Self {
        Self { kind, k_neighbors: 5, seed: 0 }
    }

    pub fn apply(&self, x: &DMatrix<f64>, y: &[usize]) -> Result<(DMatrix<f64>, Vec<usize>)> {
        match self.kind {
            BalanceKind::Original | BalanceKind::StratifiedResplit => Ok((x.clone(), y.to_vec())),
            BalanceKind::Smote => smote(x, y, self.k_neighbors, self.seed),
            BalanceKind::Oversample => random_oversample(x, y, self.seed),
            BalanceKind::Undersample => random_undersample(x, y, self.seed),
        }
    }
}

/// Rows of each class, keyed by class label, in input order.
pub fn class_members(y: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut out: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        out.entry(c).or_default().push(i);
    }
    out
}

fn check_input(x: &DMatrix<f64>, y: &[usize]) -> Result<()> {
    if x.nrows() != y.len() {
        return Err(Error::shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    if y.is_empty() {
        return Err(Error::domain("cannot balance an empty training set"));
    }
    Ok(())
}

fn gather(x: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    x.select_rows(rows)
}

fn sq_dist(x: &DMatrix<f64>, a: usize, b: usize) -> f64 {
    (0..x.ncols()).map(|c| (x[(a, c)] - x[(b, c)]).powi(2)).sum()
}

/// Synthetic minority oversampling.
///
/// Each minority class is topped up to the majority count with points
/// `x + u * (nbr - x)`, where `x` is a random class member, `nbr` one of its
/// `k` nearest same-class neighbours (Euclidean, ties to the lower row) and
/// `u ~ U(0, 1)`. The effective `k` is `min(k, class_size - 1)`. Original
/// rows come first, unchanged; synthetic rows follow in class order.
pub fn smote(x: &DMatrix<f64>, y: &[usize], k: usize, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    check_input(x, y)?;
    if k == 0 {
        return Err(Error::domain("SMOTE needs k >= 1"));
    }
    let members = class_members(y);
    let majority = members.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng_from(seed);
    let mut synthetic: Vec<Vec<f64>> = Vec::new();
    let mut synthetic_y = Vec::new();
    for (&class, rows) in &members {
        if rows.len() == majority {
            continue;
        }
        if rows.len() < 2 {
            return Err(Error::DegenerateClass(class));
        }
        let k_eff = k.min(rows.len() - 1);
        let neighbours: Vec<Vec<usize>> = rows
            .iter()
            .map(|&r| {
                let mut cand: Vec<(f64, usize)> =
                    rows.iter().filter(|&&o| o != r).map(|&o| (sq_dist(x, r, o), o)).collect();
                cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                cand.into_iter().take(k_eff).map(|(_, o)| o).collect()
            })
            .collect();
        for _ in 0..majority - rows.len() {
            let p = rng.random_range(0..rows.len());
            let parent = rows[p];
            let nbr = *neighbours[p].choose(&mut rng).expect("k_eff >= 1");
            let u: f64 = rng.random();
            synthetic.push((0..x.ncols()).map(|c| x[(parent, c)] + u * (x[(nbr, c)] - x[(parent, c)])).collect());
            synthetic_y.push(class);
        }
    }
    let n = x.nrows();
    let mut out = DMatrix::zeros(n + synthetic.len(), x.ncols());
    out.rows_mut(0, n).copy_from(x);
    for (i, row) in synthetic.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            out[(n + i, c)] = *v;
        }
    }
    let mut labels = y.to_vec();
    labels.extend(synthetic_y);
    Ok((out, labels))
}

/// Row indices added by random oversampling, in output order.
pub fn oversample_indices(y: &[usize], seed: u64) -> Vec<usize> {
    let members = class_members(y);
    let majority = members.values().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng_from(seed);
    let mut added = Vec::new();
    for rows in members.values() {
        for _ in rows.len()..majority {
            added.push(*rows.choose(&mut rng).expect("non-empty class"));
        }
    }
    added
}

/// Duplicates minority rows (with replacement) up to the majority count.
pub fn random_oversample(x: &DMatrix<f64>, y: &[usize], seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    check_input(x, y)?;
    let mut rows: Vec<usize> = (0..y.len()).collect();
    rows.extend(oversample_indices(y, seed));
    let labels = rows.iter().map(|&r| y[r]).collect();
    Ok((gather(x, &rows), labels))
}

/// Surviving row indices after random undersampling, sorted.
pub fn undersample_indices(y: &[usize], seed: u64) -> Vec<usize> {
    let members = class_members(y);
    let minority = members.values().map(Vec::len).min().unwrap_or(0);
    let mut rng = rng_from(seed);
    let mut kept = Vec::new();
    for rows in members.values() {
        let mut pick = rows.clone();
        pick.shuffle(&mut rng);
        kept.extend_from_slice(&pick[..minority]);
    }
    kept.sort_unstable();
    kept
}

/// Drops rows without replacement so every class has the minority count.
pub fn random_undersample(x: &DMatrix<f64>, y: &[usize], seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    check_input(x, y)?;
    let rows = undersample_indices(y, seed);
    let labels = rows.iter().map(|&r| y[r]).collect();
    Ok((gather(x, &rows), labels))
}
