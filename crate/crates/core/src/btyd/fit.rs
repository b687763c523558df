use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{bfgs, multi_start, BfgsConfig, NelderMeadConfig};
use crate::scalar::Real;

/// Maximum-likelihood settings shared by all BTYD fits.
#[derive(Clone, Debug)]
pub struct FitConfig<T> {
    /// Coefficient of the `sum(params^2)` penalty.
    pub penalizer: T,
    /// Number of simplex runs; the first starts unjittered.
    pub n_starts: usize,
    /// Short simplex search run from every start to pick the basin.
    pub screen: NelderMeadConfig<T>,
    /// Quasi-Newton refinement of the best screened point.
    pub polish: BfgsConfig<T>,
    /// Seed of the start jitter.
    pub seed: u64,
    /// Standard deviation of the jitter on log-parameters.
    pub jitter: f64,
}

impl<T: Real> Default for FitConfig<T> {
    fn default() -> Self {
        FitConfig {
            penalizer: T::zero(),
            n_starts: 5,
            screen: NelderMeadConfig { diameter_tol: T::lit(1e-3), max_evals: 100, initial_step: T::lit(0.25), restart: false },
            polish: BfgsConfig::default(),
            seed: 0,
            jitter: 0.5,
        }
    }
}

impl<T: Real> FitConfig<T> {
    pub fn with_penalizer(penalizer: T) -> Self {
        FitConfig { penalizer, ..Self::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult<P, T> {
    pub params: P,
    /// Negative log-likelihood at `params`, without the penalty.
    pub nll: T,
    /// Penalised objective at `params`.
    pub objective: T,
    /// Objective evaluations over all starts and the refinement.
    pub iterations: usize,
    pub converged: bool,
    pub penalizer: T,
    /// Unpenalised negative log-likelihood at each starting point.
    pub start_nlls: Vec<T>,
}

pub(crate) struct RawFit<T> {
    pub params: Vec<T>,
    pub nll: T,
    pub objective: T,
    pub iterations: usize,
    pub converged: bool,
    pub start_nlls: Vec<T>,
}

/// Minimises `nll(params) + penalizer * sum(params^2)` over log-parameters.
/// `default` seeds the jittered starts; `init`, if given, replaces the first
/// start.
pub(crate) fn fit_positive<T, F>(nll: F, default: &[T], init: Option<&[T]>, config: &FitConfig<T>) -> Result<RawFit<T>>
where
    T: Real,
    F: Fn(&[T]) -> Result<T> + Sync,
{
    if !(config.penalizer >= T::zero()) {
        return Err(Error::invalid(format!("penalizer must be non-negative, got {:?}", config.penalizer)));
    }
    let n_starts = config.n_starts.max(1);
    let log_default: Vec<T> = default.iter().map(|v| v.ln()).collect();
    let mut starts = Vec::with_capacity(n_starts);
    starts.push(match init {
        Some(p) => p.iter().map(|v| v.ln()).collect(),
        None => log_default.clone(),
    });
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    while starts.len() < n_starts {
        starts.push(
            log_default
                .iter()
                .map(|&v| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    v + T::lit(config.jitter * z)
                })
                .collect(),
        );
    }
    let penalizer = config.penalizer;
    let objective = |theta: &[T]| -> T {
        let p: Vec<T> = theta.iter().map(|v| v.exp()).collect();
        match nll(&p) {
            Ok(v) => v + penalizer * p.iter().fold(T::zero(), |a, &b| a + b * b),
            Err(_) => T::infinity(),
        }
    };
    let ms = multi_start(&objective, &starts, &config.screen);
    if !ms.best.value.is_finite() {
        return Err(Error::numerical("likelihood is not finite at any explored point"));
    }
    let polished = bfgs(&objective, &ms.best.point, &config.polish);
    let evaluations = ms.runs.iter().map(|r| r.evaluations).sum::<usize>() + polished.evaluations;
    let best = if polished.value <= ms.best.value { polished } else { ms.best };
    let params: Vec<T> = best.point.iter().map(|v| v.exp()).collect();
    let nll_value = nll(&params)?;
    let start_nlls = starts
        .iter()
        .map(|s| nll(&s.iter().map(|v| v.exp()).collect::<Vec<_>>()).unwrap_or(T::infinity()))
        .collect();
    Ok(RawFit {
        params,
        nll: nll_value,
        objective: best.value,
        iterations: evaluations,
        converged: best.converged,
        start_nlls,
    })
}
