use serde::{Deserialize, Serialize};

use super::gamma_gamma::{conditional_expected_value, GammaGammaParams};
use super::{PurchaseHistory, PurchaseModel};
use crate::error::{Error, Result};
use crate::scalar::Real;

fn whole_periods<T: Real>(horizon: T, period: T) -> Result<usize> {
    if !(period > T::zero() && horizon >= T::zero()) {
        return Err(Error::invalid("horizon must be non-negative and period positive"));
    }
    let k = (horizon / period).round();
    if (horizon / period - k).abs() > T::lit(1e-9) {
        return Err(Error::invalid(format!("horizon {horizon:?} is not a multiple of the period {period:?}")));
    }
    k.to_usize().ok_or_else(|| Error::invalid("horizon too long"))
}

/// `sum_k E[purchases in period k] * E[spend] * (1 + rate)^-k` over the
/// `horizon / period` periods following `T`. Discounting is per period, so
/// the first period is discounted once.
pub fn discounted_clv<T: Real, M: PurchaseModel<T> + ?Sized>(
    model: &M,
    spend: &GammaGammaParams<T>,
    history: &PurchaseHistory<T>,
    monetary_value: T,
    horizon: T,
    discount_rate: T,
    period: T,
) -> Result<T> {
    if !(discount_rate >= T::zero()) {
        return Err(Error::invalid("discount rate must be non-negative"));
    }
    let periods = whole_periods(horizon, period)?;
    let value = conditional_expected_value(spend, history.frequency, monetary_value)?;
    let factor = T::one() / (T::one() + discount_rate);
    let mut discount = T::one();
    let mut total = T::zero();
    for k in 0..periods {
        discount = discount * factor;
        let start = T::from_count(k) * period;
        total = total + model.expected_in_window(history, start, period)? * discount;
    }
    Ok(total * value)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LifetimeDuration<T> {
    /// Whole periods after `T` until projected P(alive) drops below the threshold.
    pub remaining_periods: u32,
    /// `T / period + remaining_periods`: the duration from relationship start.
    pub total_periods: T,
    /// The threshold was not crossed within the search limit.
    pub censored: bool,
}

/// Dichotomises P(alive): the customer counts as alive while the projected
/// probability, assuming no further purchases, stays at or above `threshold`.
pub fn expected_lifetime_duration<T: Real, M: PurchaseModel<T> + ?Sized>(
    model: &M,
    history: &PurchaseHistory<T>,
    threshold: T,
    period: T,
    max_periods: u32,
) -> Result<LifetimeDuration<T>> {
    if !(threshold > T::zero() && threshold < T::one()) {
        return Err(Error::invalid(format!("threshold must lie in (0, 1), got {threshold:?}")));
    }
    if !(period > T::zero()) {
        return Err(Error::invalid("period must be positive"));
    }
    let at = |k: u32| model.p_alive(&history.extended(T::from_count(k as usize) * period));
    let done = |k: u32| -> LifetimeDuration<T> {
        LifetimeDuration {
            remaining_periods: k,
            total_periods: history.age / period + T::from_count(k as usize),
            censored: false,
        }
    };
    if at(0)? < threshold {
        return Ok(done(0));
    }
    if at(max_periods)? >= threshold {
        return Ok(LifetimeDuration { censored: true, ..done(max_periods) });
    }
    // P(alive) is non-increasing in the elapsed time: bisect for the first k
    // with at(k) < threshold.
    let (mut lo, mut hi) = (0u32, max_periods);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if at(mid)? < threshold {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(done(hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::average::{basic_clv, BasicClvConfig};
    use crate::btyd::{BgNbdParams, ParetoNbdParams, PurchaseParams};

    fn models() -> [PurchaseParams<f64>; 2] {
        [
            PurchaseParams::ParetoNbd(ParetoNbdParams::new(0.5, 10.0, 0.6, 12.0).unwrap()),
            PurchaseParams::BgNbd(BgNbdParams::new(0.4, 8.0, 0.8, 2.5).unwrap()),
        ]
    }

    fn gg() -> GammaGammaParams<f64> {
        GammaGammaParams::new(6.0, 4.0, 15.0).unwrap()
    }

    #[test]
    fn zero_rate_is_the_plain_composition() {
        let h = PurchaseHistory::new(4, 50.0, 90.0).unwrap();
        for m in models() {
            let clv = discounted_clv(&m, &gg(), &h, 20.0, 180.0, 0.0, 30.0).unwrap();
            let direct = m.expected_transactions(&h, 180.0).unwrap() * conditional_expected_value(&gg(), 4, 20.0).unwrap();
            assert!((clv - direct).abs() < 1e-10 * direct);
            let discounted = discounted_clv(&m, &gg(), &h, 20.0, 180.0, 0.01, 30.0).unwrap();
            assert!(discounted < clv && discounted > 0.0);
        }
    }

    #[test]
    fn strictly_decreasing_in_rate() {
        let h = PurchaseHistory::new(2, 30.0, 60.0).unwrap();
        for m in models() {
            let mut prev = f64::INFINITY;
            for rate in [0.0, 0.005, 0.01, 0.05, 0.2] {
                let v = discounted_clv(&m, &gg(), &h, 20.0, 180.0, rate, 1.0).unwrap();
                assert!(v < prev);
                prev = v;
            }
        }
    }

    #[test]
    fn horizon_must_be_whole_periods() {
        let h = PurchaseHistory::new(2, 30.0, 60.0).unwrap();
        assert!(discounted_clv(&models()[0], &gg(), &h, 20.0, 100.0, 0.01, 30.0).is_err());
    }

    #[test]
    fn duration_boundaries_and_monotonicity() {
        let h = PurchaseHistory::new(3, 20.0, 60.0).unwrap();
        for m in models() {
            let pa = m.p_alive(&h).unwrap();
            let d = expected_lifetime_duration(&m, &h, (pa + 1.0) / 2.0, 7.0, 500).unwrap();
            assert_eq!(d.remaining_periods, 0);
            assert!(!d.censored);
            let mut prev = 0;
            for th in [0.9, 0.7, 0.5, 0.3, 0.1, 0.05] {
                let d = expected_lifetime_duration(&m, &h, th, 7.0, 10_000).unwrap();
                assert!(d.remaining_periods >= prev);
                prev = d.remaining_periods;
            }
            let capped = expected_lifetime_duration(&m, &h, 1e-9, 7.0, 10).unwrap();
            assert!(capped.censored && capped.remaining_periods == 10);
        }
    }

    #[test]
    fn duration_feeds_the_basic_formula() {
        let h = PurchaseHistory::new(5, 80.0, 90.0).unwrap();
        for m in models() {
            let d = expected_lifetime_duration(&m, &h, 0.5, 30.0, 1000).unwrap();
            let cfg = BasicClvConfig::new(25.0f64, 2.0, d.remaining_periods, 0.9, 0.01).unwrap();
            let v = basic_clv(&cfg);
            assert!(v.is_finite() && v > 0.0);
        }
    }
}
