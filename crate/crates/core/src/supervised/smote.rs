use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_aligned, FeatureKind, FeatureMatrix, TargetVector};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Requested share of minority rows (`revenue > 0`) after resampling.
    pub target_ratio: f64,
    pub seed: u64,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        SmoteConfig { k_neighbors: 5, target_ratio: 0.5, seed: 0 }
    }
}

/// How a synthetic row was built: `seed + u * (neighbor - seed)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticOrigin {
    pub seed_row: usize,
    pub neighbor_row: usize,
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SmoteOutput {
    /// Input rows first, then synthetic ones.
    pub x: FeatureMatrix,
    pub y: TargetVector,
    pub synthetic: Vec<SyntheticOrigin>,
}

fn std_dev(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// SMOTE-NC for a regression target. Minority rows are those with positive
/// revenue. Neighbours are found among minority rows on continuous features
/// standardised by their minority standard deviation; each categorical
/// mismatch adds the median continuous standard deviation (1 after
/// standardisation) squared. A synthetic row interpolates continuous
/// features and both targets with one shared coefficient `u ~ U[0, 1)` and
/// takes each categorical feature from the majority of the seed's
/// neighbours. Enough rows are added that the minority share is
/// `target_ratio` to within one row.
pub fn smote_nc_regression(x: &FeatureMatrix, y: &TargetVector, cfg: &SmoteConfig) -> Result<SmoteOutput> {
    check_aligned(x, y.len())?;
    if cfg.k_neighbors == 0 {
        return Err(Error::invalid("k_neighbors must be at least 1"));
    }
    if !(cfg.target_ratio > 0.0 && cfg.target_ratio <= 1.0) {
        return Err(Error::invalid(format!("target ratio must lie in (0, 1], got {}", cfg.target_ratio)));
    }
    let minority: Vec<usize> = (0..x.n_rows()).filter(|&i| y.revenue[i] > 0.0).collect();
    if minority.len() < cfg.k_neighbors + 1 {
        return Err(Error::invalid(format!(
            "SMOTE needs at least {} minority rows, found {}",
            cfg.k_neighbors + 1,
            minority.len()
        )));
    }
    let n = x.n_rows() as f64;
    let m = minority.len() as f64;
    let needed = if cfg.target_ratio >= 1.0 {
        if minority.len() < x.n_rows() {
            return Err(Error::invalid("a ratio of 1 cannot be reached while majority rows remain"));
        }
        0
    } else {
        ((cfg.target_ratio * n - m) / (1.0 - cfg.target_ratio)).round().max(0.0) as usize
    };

    let cont: Vec<usize> = (0..x.n_cols()).filter(|&j| x.kinds[j] == FeatureKind::Continuous).collect();
    let cat: Vec<usize> = (0..x.n_cols()).filter(|&j| x.kinds[j] == FeatureKind::Categorical).collect();
    let scale: Vec<f64> = cont
        .iter()
        .map(|&j| {
            let col: Vec<f64> = minority.iter().map(|&i| x.get(i, j)).collect();
            let sd = std_dev(&col);
            if sd > 0.0 { 1.0 / sd } else { 0.0 }
        })
        .collect();
    let dist = |a: usize, b: usize| -> f64 {
        let c: f64 = cont.iter().zip(&scale).map(|(&j, s)| ((x.get(a, j) - x.get(b, j)) * s).powi(2)).sum();
        c + cat.iter().filter(|&&j| x.get(a, j) != x.get(b, j)).count() as f64
    };
    let k = cfg.k_neighbors;
    let neighbors: Vec<Vec<usize>> = minority
        .iter()
        .map(|&a| {
            let mut others: Vec<(f64, usize)> = minority.iter().filter(|&&b| b != a).map(|&b| (dist(a, b), b)).collect();
            others.sort_by(|p, q| p.0.total_cmp(&q.0).then(p.1.cmp(&q.1)));
            others.truncate(k);
            others.into_iter().map(|(_, b)| b).collect()
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out_x = x.clone();
    let mut out_y = y.clone();
    let mut synthetic = Vec::with_capacity(needed);
    for s in 0..needed {
        let pick = rng.random_range(0..minority.len());
        let seed_row = minority[pick];
        let nbrs = &neighbors[pick];
        let neighbor_row = nbrs[rng.random_range(0..nbrs.len())];
        let u: f64 = rng.random();
        let mut row = x.row(seed_row).to_vec();
        for &j in &cont {
            let a = x.get(seed_row, j);
            row[j] = a + u * (x.get(neighbor_row, j) - a);
        }
        for &j in &cat {
            row[j] = majority_value(nbrs.iter().map(|&b| x.get(b, j)));
        }
        let lerp = |v: &[f64]| v[seed_row] + u * (v[neighbor_row] - v[seed_row]);
        out_x.push_row(format!("synthetic_{s}"), &row)?;
        out_y.revenue.push(lerp(&y.revenue));
        out_y.purchases.push(lerp(&y.purchases));
        synthetic.push(SyntheticOrigin { seed_row, neighbor_row, coefficient: u });
    }
    Ok(SmoteOutput { x: out_x, y: out_y, synthetic })
}

/// Most frequent value; ties go to the smallest.
fn majority_value(values: impl Iterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    let mut best = (0usize, v[0]);
    let mut i = 0;
    while i < v.len() {
        let j = v[i..].iter().position(|&w| w != v[i]).map_or(v.len(), |p| i + p);
        if j - i > best.0 {
            best = (j - i, v[i]);
        }
        i = j;
    }
    best.1
}
