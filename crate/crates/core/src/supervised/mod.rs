//! Supervised lifetime-value prediction from early gameplay behaviour:
//! feature extraction, SMOTE-NC resampling for regression targets, random
//! forests, the three-stage payer/count/value composite and k-fold
//! evaluation.

mod eval;
mod features;
mod forest;
mod smote;
mod three_stage;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use eval::{evaluate, kfold_indices, mse, nrmse, EvalMetrics, FoldMetrics, MeanBaseline, ConstantModel};
pub use features::{extract_features, read_feature_csv, write_feature_csv, FeatureSet, FEATURE_NAMES};
pub use forest::{fit_random_forest, FeaturesPerSplit, FittedForest, ForestConfig, Node, TreeConfig, fit_tree};
pub use smote::{smote_nc_regression, SmoteConfig, SmoteOutput, SyntheticOrigin};
pub use three_stage::{fit_three_stage, ThreeStage, ThreeStageModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Categorical,
}

/// Row-major feature table with named, typed columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    pub ids: Vec<String>,
    pub names: Vec<String>,
    pub kinds: Vec<FeatureKind>,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(ids: Vec<String>, names: Vec<String>, kinds: Vec<FeatureKind>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != kinds.len() || names.is_empty() {
            return Err(Error::invalid("feature names and kinds must be non-empty and aligned"));
        }
        if ids.len() != rows.len() {
            return Err(Error::invalid("one id per row required"));
        }
        let mut m = FeatureMatrix { ids: Vec::new(), names, kinds, data: Vec::with_capacity(rows.len() * 8) };
        for (id, row) in ids.into_iter().zip(rows) {
            m.push_row(id, &row)?;
        }
        Ok(m)
    }

    pub fn n_rows(&self) -> usize {
        self.ids.len()
    }

    pub fn n_cols(&self) -> usize {
        self.names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let f = self.n_cols();
        &self.data[i * f..(i + 1) * f]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols() + j]
    }

    pub fn push_row(&mut self, id: String, row: &[f64]) -> Result<()> {
        if row.len() != self.n_cols() {
            return Err(Error::invalid(format!("row {id} has {} values, expected {}", row.len(), self.n_cols())));
        }
        if let Some(v) = row.iter().find(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("row {id} has non-finite feature {v}")));
        }
        self.ids.push(id);
        self.data.extend_from_slice(row);
        Ok(())
    }

    pub fn select(&self, rows: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(rows.len() * self.n_cols());
        for &i in rows {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            names: self.names.clone(),
            kinds: self.kinds.clone(),
            data,
        }
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.get(i, j)).collect()
    }
}

/// Future revenue and purchase count per row.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetVector {
    pub revenue: Vec<f64>,
    /// Purchase counts; real-valued so resampling can interpolate them.
    pub purchases: Vec<f64>,
}

impl TargetVector {
    pub fn new(revenue: Vec<f64>, purchases: Vec<f64>) -> Result<Self> {
        if revenue.len() != purchases.len() {
            return Err(Error::invalid("revenue and purchase targets must align"));
        }
        if revenue.iter().chain(&purchases).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("targets must be finite and non-negative"));
        }
        Ok(TargetVector { revenue, purchases })
    }

    /// Revenue-only targets; counts are 1 for payers and 0 otherwise.
    pub fn from_revenue(revenue: Vec<f64>) -> Result<Self> {
        let purchases = revenue.iter().map(|&r| if r > 0.0 { 1.0 } else { 0.0 }).collect();
        Self::new(revenue, purchases)
    }

    pub fn len(&self) -> usize {
        self.revenue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.revenue.is_empty()
    }

    pub fn select(&self, rows: &[usize]) -> TargetVector {
        TargetVector {
            revenue: rows.iter().map(|&i| self.revenue[i]).collect(),
            purchases: rows.iter().map(|&i| self.purchases[i]).collect(),
        }
    }
}

pub trait Predict {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>>;
}

/// A model family that can be trained on features and targets.
pub trait Learner: Sync {
    type Model: Predict;
    fn fit(&self, x: &FeatureMatrix, y: &TargetVector) -> Result<Self::Model>;
}

pub(crate) fn check_aligned(x: &FeatureMatrix, n: usize) -> Result<()> {
    if x.n_rows() == 0 {
        return Err(Error::invalid("feature matrix is empty"));
    }
    if x.n_rows() != n {
        return Err(Error::invalid(format!("{} feature rows but {n} targets", x.n_rows())));
    }
    Ok(())
}

/// Applies SMOTE-NC to the training data before handing it to `learner`.
#[derive(Clone, Debug)]
pub struct Resampled<L> {
    pub smote: SmoteConfig,
    pub learner: L,
}

impl<L: Learner> Learner for Resampled<L> {
    type Model = L::Model;

    fn fit(&self, x: &FeatureMatrix, y: &TargetVector) -> Result<Self::Model> {
        let out = smote_nc_regression(x, y, &self.smote)?;
        self.learner.fit(&out.x, &out.y)
    }
}
