//! Buy-till-you-die models: Pareto/NBD and BG/NBD purchase processes, the
//! Gamma-Gamma spend model, discounted CLV and dichotomised lifetimes.
//!
//! Rates are per unit of the summaries' time axis (days unless the summaries
//! were built on a coarser period grid). Gamma mixing distributions use the
//! (shape, rate) convention.

mod bg_nbd;
mod clv;
mod fit;
mod gamma_gamma;
mod pareto_nbd;

use serde::{Deserialize, Serialize};

use crate::data::RfmSummary;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use bg_nbd::{bg_nbd_loglik, fit_bg_nbd, fit_bg_nbd_with, BgNbdParams};
pub use clv::{discounted_clv, expected_lifetime_duration, LifetimeDuration};
pub use fit::{FitConfig, FitResult};
pub use gamma_gamma::{
    conditional_expected_value, fit_gamma_gamma, fit_gamma_gamma_with, gamma_gamma_loglik, GammaGammaParams,
    SpendHistory,
};
pub use pareto_nbd::{fit_pareto_nbd, fit_pareto_nbd_with, pareto_nbd_loglik, ParetoNbdParams};

/// `(x, t_x, T)` of one customer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PurchaseHistory<T> {
    pub frequency: u32,
    pub recency: T,
    pub age: T,
}

impl<T: Real> PurchaseHistory<T> {
    pub fn new(frequency: u32, recency: T, age: T) -> Result<Self> {
        let h = PurchaseHistory { frequency, recency, age };
        h.validate()?;
        Ok(h)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.recency.is_finite()
            && self.age.is_finite()
            && self.recency >= T::zero()
            && self.recency <= self.age
            && (self.frequency > 0 || self.recency == T::zero());
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("inconsistent purchase history {self:?}")))
        }
    }

    /// `x` as a scalar.
    pub fn x(&self) -> T {
        T::from_count(self.frequency as usize)
    }

    /// Same customer observed `extra` time units longer without purchasing.
    pub fn extended(&self, extra: T) -> Self {
        PurchaseHistory { age: self.age + extra, ..*self }
    }
}

impl From<&RfmSummary> for PurchaseHistory<f64> {
    fn from(s: &RfmSummary) -> Self {
        PurchaseHistory { frequency: s.frequency, recency: s.recency, age: s.age }
    }
}

/// Operations shared by the purchase-process models.
pub trait PurchaseModel<T: Real>: Send + Sync {
    fn loglik(&self, h: &PurchaseHistory<T>) -> Result<T>;

    /// Probability the customer is still active at `T`.
    fn p_alive(&self, h: &PurchaseHistory<T>) -> Result<T>;

    /// Expected purchases in `(T + start, T + start + length]`, conditional
    /// on the history.
    fn expected_in_window(&self, h: &PurchaseHistory<T>, start: T, length: T) -> Result<T>;

    /// Expected purchases in `(T, T + tau]`.
    fn expected_transactions(&self, h: &PurchaseHistory<T>, tau: T) -> Result<T> {
        self.expected_in_window(h, T::zero(), tau)
    }
}

/// A fitted purchase model of either family.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum PurchaseParams<T> {
    ParetoNbd(ParetoNbdParams<T>),
    BgNbd(BgNbdParams<T>),
}

impl<T: Real> PurchaseModel<T> for PurchaseParams<T> {
    fn loglik(&self, h: &PurchaseHistory<T>) -> Result<T> {
        match self {
            PurchaseParams::ParetoNbd(p) => p.loglik(h),
            PurchaseParams::BgNbd(p) => p.loglik(h),
        }
    }

    fn p_alive(&self, h: &PurchaseHistory<T>) -> Result<T> {
        match self {
            PurchaseParams::ParetoNbd(p) => p.p_alive(h),
            PurchaseParams::BgNbd(p) => p.p_alive(h),
        }
    }

    fn expected_in_window(&self, h: &PurchaseHistory<T>, start: T, length: T) -> Result<T> {
        match self {
            PurchaseParams::ParetoNbd(p) => p.expected_in_window(h, start, length),
            PurchaseParams::BgNbd(p) => p.expected_in_window(h, start, length),
        }
    }
}

/// Distinct histories with multiplicities.
pub(crate) fn group_histories<T: Real>(histories: &[PurchaseHistory<T>]) -> Vec<(PurchaseHistory<T>, T)> {
    let mut sorted = histories.to_vec();
    sorted.sort_by(|a, b| {
        a.frequency
            .cmp(&b.frequency)
            .then(a.recency.partial_cmp(&b.recency).unwrap_or(std::cmp::Ordering::Equal))
            .then(a.age.partial_cmp(&b.age).unwrap_or(std::cmp::Ordering::Equal))
    });
    let mut out: Vec<(PurchaseHistory<T>, T)> = Vec::new();
    for h in sorted {
        match out.last_mut() {
            Some((last, w)) if *last == h => *w = *w + T::one(),
            _ => out.push((h, T::one())),
        }
    }
    out
}

pub(crate) fn check_positive<T: Real>(names: &[&str], values: &[T]) -> Result<()> {
    for (n, v) in names.iter().zip(values) {
        if !(v.is_finite() && *v > T::zero()) {
            return Err(Error::invalid(format!("parameter {n} must be positive and finite, got {v:?}")));
        }
    }
    Ok(())
}
