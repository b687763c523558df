use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_aligned, FeatureMatrix, Learner, Predict, TargetVector};
use crate::error::{Error, Result};

/// Regression tree node; serialised as nested `split` / `leaf` records.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    Leaf {
        value: f64,
        samples: usize,
    },
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: Box<Node>,
        right: Box<Node>,
    },
}

impl Node {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                Node::Leaf { value, .. } => return *value,
                Node::Split { feature, threshold, left, right } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            Node::Leaf { .. } => 0,
            Node::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            Node::Leaf { .. } => 1,
            Node::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` tries all.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        TreeConfig { max_depth: None, min_samples_leaf: 1, max_features: None }
    }
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    y: &'a [f64],
    cfg: &'a TreeConfig,
    rng: ChaCha8Rng,
}

struct Best {
    feature: usize,
    threshold: f64,
    score: f64,
    n_left: usize,
}

impl Builder<'_> {
    fn leaf(&self, rows: &[usize]) -> Node {
        let first = self.y[rows[0]];
        let value = if rows.iter().all(|&i| self.y[i] == first) {
            first
        } else {
            let (lo, hi) = rows.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &i| (a.min(self.y[i]), b.max(self.y[i])));
            (rows.iter().map(|&i| self.y[i]).sum::<f64>() / rows.len() as f64).clamp(lo, hi)
        };
        Node::Leaf { value, samples: rows.len() }
    }

    /// Best variance-reduction split on one feature, maximising
    /// `S_L^2 / n_L + S_R^2 / n_R`.
    fn best_on(&self, rows: &[usize], feature: usize, best: &mut Option<Best>) {
        let min_leaf = self.cfg.min_samples_leaf;
        let mut pairs: Vec<(f64, f64)> = rows.iter().map(|&i| (self.x.get(i, feature), self.y[i])).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        let n = pairs.len();
        let mut left = 0.0;
        for k in 1..n {
            left += pairs[k - 1].1;
            if k < min_leaf || n - k < min_leaf || pairs[k - 1].0 == pairs[k].0 {
                continue;
            }
            let right = total - left;
            let score = left * left / k as f64 + right * right / (n - k) as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let (a, b) = (pairs[k - 1].0, pairs[k].0);
                let mid = a + (b - a) / 2.0;
                let threshold = if mid < b { mid } else { a };
                *best = Some(Best { feature, threshold, score, n_left: k });
            }
        }
    }

    fn build(&mut self, rows: Vec<usize>, depth: usize) -> Node {
        let first = self.y[rows[0]];
        let pure = rows.iter().all(|&i| self.y[i] == first);
        if pure || rows.len() < 2 * self.cfg.min_samples_leaf || self.cfg.max_depth.is_some_and(|d| depth >= d) {
            return self.leaf(&rows);
        }
        let f = self.x.n_cols();
        let draw = self.cfg.max_features.unwrap_or(f).clamp(1, f);
        let mut order: Vec<usize> = if draw < f { sample(&mut self.rng, f, f).into_vec() } else { (0..f).collect() };
        let (tried, rest) = order.split_at_mut(draw);
        let mut best = None;
        for &j in tried.iter() {
            self.best_on(&rows, j, &mut best);
        }
        // keep searching the remaining features when the drawn ones are constant
        for &j in rest.iter() {
            if best.is_some() {
                break;
            }
            self.best_on(&rows, j, &mut best);
        }
        let Some(best) = best else {
            return self.leaf(&rows);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x.get(i, best.feature) <= best.threshold);
        debug_assert_eq!(left.len(), best.n_left);
        Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(self.build(left, depth + 1)),
            right: Box::new(self.build(right, depth + 1)),
        }
    }
}

fn check_finite(y: &[f64]) -> Result<()> {
    if let Some(v) = y.iter().find(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("non-finite target {v}")));
    }
    Ok(())
}

/// CART regression tree grown on `rows` (repeats allowed).
pub fn fit_tree(x: &FeatureMatrix, y: &[f64], rows: Vec<usize>, cfg: &TreeConfig, seed: u64) -> Result<Node> {
    check_aligned(x, y.len())?;
    check_finite(y)?;
    if rows.is_empty() {
        return Err(Error::invalid("tree needs at least one training row"));
    }
    if cfg.min_samples_leaf == 0 {
        return Err(Error::invalid("min_samples_leaf must be at least 1"));
    }
    let mut b = Builder { x, y, cfg, rng: ChaCha8Rng::seed_from_u64(seed) };
    Ok(b.build(rows, 0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeaturesPerSplit {
    /// `Sqrt` with bootstrap, `All` without.
    Auto,
    Sqrt,
    All,
    Count(usize),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub features_per_split: FeaturesPerSplit,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        ForestConfig {
            n_trees: 100,
            max_depth: None,
            min_samples_leaf: 1,
            bootstrap: true,
            features_per_split: FeaturesPerSplit::Auto,
            seed: 0,
        }
    }
}

impl ForestConfig {
    fn max_features(&self, n_features: usize) -> usize {
        let sqrt = (n_features as f64).sqrt().ceil() as usize;
        match self.features_per_split {
            FeaturesPerSplit::Auto if self.bootstrap => sqrt,
            FeaturesPerSplit::Auto | FeaturesPerSplit::All => n_features,
            FeaturesPerSplit::Sqrt => sqrt,
            FeaturesPerSplit::Count(k) => k.clamp(1, n_features),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FittedForest {
    pub feature_names: Vec<String>,
    pub trees: Vec<Node>,
    /// Training target range; predictions are clamped to it.
    pub y_min: f64,
    pub y_max: f64,
}

impl FittedForest {
    pub(crate) fn check_columns(&self, x: &FeatureMatrix) -> Result<()> {
        if x.names != self.feature_names {
            let missing: Vec<&str> = self.feature_names.iter().filter(|n| !x.names.contains(n)).map(|s| s.as_str()).collect();
            return Err(Error::invalid(format!(
                "feature columns {:?} do not match the trained columns {:?} (missing: {})",
                x.names,
                self.feature_names,
                missing.join(", ")
            )));
        }
        Ok(())
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(row)).sum();
        (sum / self.trees.len() as f64).clamp(self.y_min, self.y_max)
    }

    /// Share of trees whose output exceeds `threshold`.
    pub fn vote_fraction(&self, row: &[f64], threshold: f64) -> f64 {
        self.trees.iter().filter(|t| t.predict(row) > threshold).count() as f64 / self.trees.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses without the default nesting limit, which deep trees exceed.
    pub fn from_json(s: &str) -> Result<Self> {
        let mut de = serde_json::Deserializer::from_str(s);
        de.disable_recursion_limit();
        let f = FittedForest::deserialize(&mut de)?;
        de.end()?;
        Ok(f)
    }
}

impl Predict for FittedForest {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.check_columns(x)?;
        Ok((0..x.n_rows()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect())
    }
}

/// Bagged CART regression trees, trained in parallel with one seeded stream
/// per tree.
pub fn fit_random_forest(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig) -> Result<FittedForest> {
    check_aligned(x, y.len())?;
    check_finite(y)?;
    if cfg.n_trees == 0 {
        return Err(Error::invalid("forest needs at least one tree"));
    }
    let n = x.n_rows();
    let tree_cfg = TreeConfig {
        max_depth: cfg.max_depth,
        min_samples_leaf: cfg.min_samples_leaf,
        max_features: Some(cfg.max_features(x.n_cols())),
    };
    let trees = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if cfg.bootstrap { (0..n).map(|_| rng.random_range(0..n)).collect() } else { (0..n).collect() };
            fit_tree(x, y, rows, &tree_cfg, rng.random())
        })
        .collect::<Result<Vec<_>>>()?;
    let (y_min, y_max) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    Ok(FittedForest { feature_names: x.names.clone(), trees, y_min, y_max })
}

impl Learner for ForestConfig {
    type Model = FittedForest;

    fn fit(&self, x: &FeatureMatrix, y: &TargetVector) -> Result<FittedForest> {
        fit_random_forest(x, &y.revenue, self)
    }
}
