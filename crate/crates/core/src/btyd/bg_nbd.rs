use serde::{Deserialize, Serialize};

use super::fit::{fit_positive, FitConfig, FitResult};
use super::{check_positive, group_histories, PurchaseHistory, PurchaseModel};
use crate::error::{Error, Result};
use crate::scalar::{log_add_exp, Real};
use crate::special::{hyp2f1_ln, ln_gamma};

/// Purchase rate `λ ~ Gamma(r, α)`; after each repeat purchase the customer
/// drops out with probability `p ~ Beta(a, b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BgNbdParams<T> {
    pub r: T,
    pub alpha: T,
    pub a: T,
    pub b: T,
}

/// Half-width of the neighbourhood of `a = 1` where the expectation is
/// interpolated instead of evaluated.
const UNIT_A_GAP: f64 = 1e-3;

impl<T: Real> BgNbdParams<T> {
    pub fn new(r: T, alpha: T, a: T, b: T) -> Result<Self> {
        check_positive(&["r", "alpha", "a", "b"], &[r, alpha, a, b])?;
        Ok(BgNbdParams { r, alpha, a, b })
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.r, self.alpha, self.a, self.b]
    }

    fn from_slice(v: &[T]) -> Self {
        BgNbdParams { r: v[0], alpha: v[1], a: v[2], b: v[3] }
    }

    /// Expected purchases in `(T, T + t]`, evaluated directly (singular at
    /// `a = 1`).
    fn expected_direct(&self, a: T, h: &PurchaseHistory<T>, t: T) -> Result<T> {
        let x = h.x();
        let at = self.alpha + h.age;
        let hyp = hyp2f1_ln(self.r + x, self.b + x, a + self.b + x - T::one(), t / (at + t))?;
        // 1 - (at/(at+t))^(r+x) 2F1, formed in log space: the factors
        // over- and underflow separately for large x
        let bracket = -((self.r + x) * (-(t / (at + t))).ln_1p() + hyp.ln_abs).exp_m1();
        let lead = (a + self.b + x - T::one()) / (a - T::one());
        let p = BgNbdParams { a, ..*self }.p_alive(h)?;
        Ok(p * lead * bracket)
    }

    fn expected_from_start(&self, h: &PurchaseHistory<T>, t: T) -> Result<T> {
        if t == T::zero() {
            return Ok(T::zero());
        }
        let gap = T::lit(UNIT_A_GAP);
        let offset = self.a - T::one();
        let out = if offset.abs() >= gap {
            self.expected_direct(self.a, h, t)?
        } else {
            // cubic Lagrange interpolation through 1 +- gap, 1 +- 2 gap
            let nodes = [-gap - gap, -gap, gap, gap + gap];
            let mut acc = T::zero();
            for (i, &xi) in nodes.iter().enumerate() {
                let mut w = T::one();
                for (j, &xj) in nodes.iter().enumerate() {
                    if i != j {
                        w = w * (offset - xj) / (xi - xj);
                    }
                }
                acc = acc + w * self.expected_direct(T::one() + xi, h, t)?;
            }
            acc
        };
        if out.is_finite() {
            Ok(out.max(T::zero()))
        } else {
            Err(Error::numerical(format!("BG/NBD expectation undefined for {h:?}")))
        }
    }
}

impl<T: Real> PurchaseModel<T> for BgNbdParams<T> {
    fn loglik(&self, h: &PurchaseHistory<T>) -> Result<T> {
        let x = h.x();
        let (r, alpha, a, b) = (self.r, self.alpha, self.a, self.b);
        let a1 = ln_gamma(r + x) - ln_gamma(r) + r * alpha.ln();
        let a2 = ln_gamma(a + b) + ln_gamma(b + x) - ln_gamma(b) - ln_gamma(a + b + x);
        let a3 = -(r + x) * (alpha + h.age).ln();
        let tail = if h.frequency > 0 {
            let a4 = a.ln() - (b + x - T::one()).ln() - (r + x) * (alpha + h.recency).ln();
            log_add_exp(a3, a4)
        } else {
            a3
        };
        let ll = a1 + a2 + tail;
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(Error::numerical(format!("BG/NBD log-likelihood is {ll:?} for {h:?} under {self:?}")))
        }
    }

    /// Exactly 1 when `x = 0`: dropout is only possible after a repeat purchase.
    fn p_alive(&self, h: &PurchaseHistory<T>) -> Result<T> {
        if h.frequency == 0 {
            return Ok(T::one());
        }
        let x = h.x();
        let ln_odds = self.a.ln() - (self.b + x - T::one()).ln()
            + (self.r + x) * ((self.alpha + h.age).ln() - (self.alpha + h.recency).ln());
        Ok(T::one() / (T::one() + ln_odds.exp()))
    }

    fn expected_in_window(&self, h: &PurchaseHistory<T>, start: T, length: T) -> Result<T> {
        if !(start >= T::zero() && length >= T::zero()) {
            return Err(Error::invalid("window start and length must be non-negative"));
        }
        if length == T::zero() {
            return Ok(T::zero());
        }
        let hi = self.expected_from_start(h, start + length)?;
        let lo = self.expected_from_start(h, start)?;
        Ok((hi - lo).max(T::zero()))
    }
}

pub fn bg_nbd_loglik<T: Real>(params: &BgNbdParams<T>, h: &PurchaseHistory<T>) -> Result<T> {
    params.loglik(h)
}

fn cohort_nll<T: Real>(params: &BgNbdParams<T>, groups: &[(PurchaseHistory<T>, T)]) -> Result<T> {
    let mut total = T::zero();
    for (h, w) in groups {
        total = total - *w * params.loglik(h)?;
    }
    Ok(total)
}

fn default_start<T: Real>(histories: &[PurchaseHistory<T>]) -> Vec<T> {
    let n = T::from_count(histories.len());
    let mean_x = histories.iter().fold(T::zero(), |a, h| a + h.x()) / n;
    let mean_t = histories.iter().fold(T::zero(), |a, h| a + h.age) / n;
    let alpha = (mean_t / mean_x.max(T::lit(0.1))).max(T::lit(1e-3));
    vec![T::one(), alpha, T::one(), T::one()]
}

pub fn fit_bg_nbd<T: Real>(histories: &[PurchaseHistory<T>], penalizer: T) -> Result<FitResult<BgNbdParams<T>, T>> {
    fit_bg_nbd_with(histories, &FitConfig::with_penalizer(penalizer), None)
}

pub fn fit_bg_nbd_with<T: Real>(
    histories: &[PurchaseHistory<T>],
    config: &FitConfig<T>,
    init: Option<&BgNbdParams<T>>,
) -> Result<FitResult<BgNbdParams<T>, T>> {
    if histories.is_empty() {
        return Err(Error::invalid("BG/NBD fit needs at least one customer"));
    }
    for h in histories {
        h.validate()?;
    }
    if histories.iter().all(|h| h.frequency == 0) {
        return Err(Error::NonIdentifiable("dropout is not identifiable without repeat purchases".into()));
    }
    let groups = group_histories(histories);
    let init = init.map(|p| p.to_vec());
    let raw = fit_positive(
        |p| cohort_nll(&BgNbdParams::from_slice(p), &groups),
        &default_start(histories),
        init.as_deref(),
        config,
    )?;
    Ok(FitResult {
        params: BgNbdParams::from_slice(&raw.params),
        nll: raw.nll,
        objective: raw.objective,
        iterations: raw.iterations,
        converged: raw.converged,
        penalizer: config.penalizer,
        start_nlls: raw.start_nlls,
    })
}
