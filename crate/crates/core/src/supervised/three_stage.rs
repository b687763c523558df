use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::forest::{fit_random_forest, FittedForest, ForestConfig};
use super::{check_aligned, FeatureMatrix, Learner, Predict, TargetVector};
use crate::error::{Error, Result};

/// Payer classifier, purchase-count regressor and mean-value regressor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThreeStageModel {
    /// Trained on 0/1 payer labels; `P(payer)` is the share of trees voting 1.
    pub payer: FittedForest,
    pub count: FittedForest,
    pub value: FittedForest,
}

impl ThreeStageModel {
    pub fn payer_probability(&self, row: &[f64]) -> f64 {
        self.payer.vote_fraction(row, 0.5)
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let p = self.payer_probability(row);
        if p == 0.0 {
            return 0.0;
        }
        p * self.count.predict_row(row) * self.value.predict_row(row)
    }
}

impl Predict for ThreeStageModel {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        self.payer.check_columns(x)?;
        Ok((0..x.n_rows()).into_par_iter().map(|i| self.predict_row(x.row(i))).collect())
    }
}

/// Fits the composite `P(payer) * count * value`. Stages 2 and 3 see payers
/// only, with value taken as revenue per purchase.
pub fn fit_three_stage(x: &FeatureMatrix, y: &TargetVector, cfg: &ForestConfig) -> Result<ThreeStageModel> {
    check_aligned(x, y.len())?;
    let labels: Vec<f64> = y.revenue.iter().map(|&r| if r > 0.0 { 1.0 } else { 0.0 }).collect();
    let payers: Vec<usize> = (0..y.len()).filter(|&i| labels[i] == 1.0).collect();
    if payers.is_empty() {
        return Err(Error::invalid("three-stage model needs at least one payer in the training data"));
    }
    let xp = x.select(&payers);
    let counts: Vec<f64> = payers.iter().map(|&i| y.purchases[i].max(1.0)).collect();
    let values: Vec<f64> = payers.iter().zip(&counts).map(|(&i, c)| y.revenue[i] / c).collect();
    Ok(ThreeStageModel {
        payer: fit_random_forest(x, &labels, cfg)?,
        count: fit_random_forest(&xp, &counts, &ForestConfig { seed: cfg.seed.wrapping_add(1), ..cfg.clone() })?,
        value: fit_random_forest(&xp, &values, &ForestConfig { seed: cfg.seed.wrapping_add(2), ..cfg.clone() })?,
    })
}

/// Learner wrapper for [`fit_three_stage`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ThreeStage {
    pub forest: ForestConfig,
}

impl Learner for ThreeStage {
    type Model = ThreeStageModel;

    fn fit(&self, x: &FeatureMatrix, y: &TargetVector) -> Result<ThreeStageModel> {
        fit_three_stage(x, y, &self.forest)
    }
}
