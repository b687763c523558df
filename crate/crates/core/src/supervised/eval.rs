use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_aligned, FeatureMatrix, Learner, Predict, TargetVector};
use crate::error::{Error, Result};

/// Fold number of each row: a seeded shuffle dealt round-robin into `k` folds.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % k;
    }
    fold
}

pub fn mse(y: &[f64], pred: &[f64]) -> f64 {
    y.iter().zip(pred).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / y.len() as f64
}

/// `RMSE / range`; `None` when the range is zero.
pub fn nrmse(y: &[f64], pred: &[f64], range: f64) -> Option<f64> {
    (range > 0.0).then(|| mse(y, pred).sqrt() / range)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub mse: f64,
    pub nrmse: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    /// Mean of the fold metrics.
    pub mse: f64,
    /// `None` when the revenue target is constant over all rows.
    pub nrmse: Option<f64>,
    pub folds: Vec<FoldMetrics>,
}

/// Seeded k-fold cross-validation on the revenue target. NRMSE is normalised
/// by the range of revenue over all rows.
pub fn evaluate<L: Learner>(learner: &L, x: &FeatureMatrix, y: &TargetVector, k: usize, seed: u64) -> Result<EvalMetrics> {
    check_aligned(x, y.len())?;
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    if x.n_rows() < k {
        return Err(Error::invalid(format!("{} rows cannot fill {k} folds", x.n_rows())));
    }
    let lo = y.revenue.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.revenue.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if range == 0.0 {
        log::warn!("target is constant over all rows; NRMSE is undefined");
    }
    let assignment = kfold_indices(x.n_rows(), k, seed);
    let mut folds = Vec::with_capacity(k);
    for fold in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..x.n_rows()).partition(|&i| assignment[i] == fold);
        let model = learner.fit(&x.select(&train), &y.select(&train))?;
        let pred = model.predict(&x.select(&test))?;
        let truth = y.select(&test).revenue;
        folds.push(FoldMetrics {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            mse: mse(&truth, &pred),
            nrmse: nrmse(&truth, &pred, range),
        });
    }
    let mean = |f: &dyn Fn(&FoldMetrics) -> f64| folds.iter().map(f).sum::<f64>() / k as f64;
    let mse = mean(&|m| m.mse);
    let nrmse = (range > 0.0).then(|| mean(&|m| m.nrmse.unwrap_or(f64::NAN)));
    Ok(EvalMetrics { mse, nrmse, folds })
}

/// Predicts a fixed value for every row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantModel {
    pub value: f64,
}

impl Predict for ConstantModel {
    fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
        Ok(vec![self.value; x.n_rows()])
    }
}

/// Predicts the training mean of revenue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanBaseline;

impl Learner for MeanBaseline {
    type Model = ConstantModel;

    fn fit(&self, x: &FeatureMatrix, y: &TargetVector) -> Result<ConstantModel> {
        check_aligned(x, y.len())?;
        Ok(ConstantModel { value: y.revenue.iter().sum::<f64>() / y.len() as f64 })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::supervised::{FeatureKind, ForestConfig};
    use std::collections::HashMap;
    use std::sync::Mutex;

    fn xy(rev: Vec<f64>) -> (FeatureMatrix, TargetVector) {
        let n = rev.len();
        let rows = (0..n).map(|i| vec![i as f64, (i * i % 17) as f64]).collect();
        let x = FeatureMatrix::new((0..n).map(|i| format!("r{i}")).collect(), vec!["a".into(), "b".into()], vec![FeatureKind::Continuous; 2], rows)
            .unwrap();
        (x, TargetVector::from_revenue(rev).unwrap())
    }

    /// Looks revenue up by row id, so it predicts held-out rows perfectly.
    struct Oracle(Mutex<HashMap<String, f64>>);
    struct OracleModel(HashMap<String, f64>);

    impl Predict for OracleModel {
        fn predict(&self, x: &FeatureMatrix) -> Result<Vec<f64>> {
            Ok(x.ids.iter().map(|id| self.0[id]).collect())
        }
    }

    impl Learner for Oracle {
        type Model = OracleModel;
        fn fit(&self, _: &FeatureMatrix, _: &TargetVector) -> Result<OracleModel> {
            Ok(OracleModel(self.0.lock().unwrap().clone()))
        }
    }

    #[test]
    fn folds_partition_rows() {
        let f = kfold_indices(103, 10, 5);
        let mut sizes = [0; 10];
        for &k in &f {
            sizes[k] += 1;
        }
        assert!(sizes.iter().all(|&s| s == 10 || s == 11));
        assert_eq!(f, kfold_indices(103, 10, 5));
        assert_ne!(f, kfold_indices(103, 10, 6));
    }

    #[test]
    fn perfect_predictor_scores_zero() {
        let rev: Vec<f64> = (0..50).map(|i| (i % 7) as f64 * 2.5).collect();
        let (x, y) = xy(rev.clone());
        let table = x.ids.iter().cloned().zip(rev).collect();
        let m = evaluate(&Oracle(Mutex::new(table)), &x, &y, 10, 1).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.nrmse, Some(0.0));
        assert_eq!(m.folds.len(), 10);
    }

    #[test]
    fn mean_prediction_matches_fold_variance() {
        let rev: Vec<f64> = (0..97).map(|i| ((i * 37) % 23) as f64 + 0.25 * i as f64).collect();
        let (x, y) = xy(rev.clone());
        // in-sample: predicting the mean of a fold gives its variance
        let mean = rev.iter().sum::<f64>() / rev.len() as f64;
        let var = rev.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rev.len() as f64;
        let p = MeanBaseline.fit(&x, &y).unwrap().predict(&x).unwrap();
        assert!((mse(&rev, &p) - var).abs() < 1e-9);
        // out of fold: variance plus the squared train/test mean gap
        let m = evaluate(&MeanBaseline, &x, &y, 5, 2).unwrap();
        let assign = kfold_indices(97, 5, 2);
        for f in &m.folds {
            let test: Vec<f64> = (0..97).filter(|&i| assign[i] == f.fold).map(|i| rev[i]).collect();
            let train: Vec<f64> = (0..97).filter(|&i| assign[i] != f.fold).map(|i| rev[i]).collect();
            let mt = test.iter().sum::<f64>() / test.len() as f64;
            let mr = train.iter().sum::<f64>() / train.len() as f64;
            let vt = test.iter().map(|v| (v - mt).powi(2)).sum::<f64>() / test.len() as f64;
            assert!((f.mse - (vt + (mt - mr).powi(2))).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_target_has_no_nrmse() {
        let (x, y) = xy(vec![3.0; 20]);
        let m = evaluate(&MeanBaseline, &x, &y, 4, 0).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.nrmse, None);
        assert!(m.folds.iter().all(|f| f.nrmse.is_none()));
    }

    #[test]
    fn fold_count_checks() {
        let (x, y) = xy(vec![1.0, 2.0, 3.0]);
        assert!(evaluate(&MeanBaseline, &x, &y, 1, 0).is_err());
        assert!(evaluate(&MeanBaseline, &x, &y, 4, 0).is_err());
    }

    #[test]
    fn forest_cross_validation_is_deterministic() {
        let rev: Vec<f64> = (0..120).map(|i| if i % 9 == 0 { i as f64 } else { 0.0 }).collect();
        let (x, y) = xy(rev);
        let cfg = ForestConfig { n_trees: 10, seed: 3, ..ForestConfig::default() };
        let a = evaluate(&cfg, &x, &y, 10, 4).unwrap();
        assert_eq!(a, evaluate(&cfg, &x, &y, 10, 4).unwrap());
        assert!(a.nrmse.unwrap() > 0.0);
    }
}
