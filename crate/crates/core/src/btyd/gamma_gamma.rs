use serde::{Deserialize, Serialize};

use super::check_positive;
use super::fit::{fit_positive, FitConfig, FitResult};
use crate::data::RfmSummary;
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::special::ln_gamma;

/// Spend per transaction `z ~ Gamma(p, ν)` with `ν ~ Gamma(q, γ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaGammaParams<T> {
    pub p: T,
    pub q: T,
    pub gamma: T,
}

impl<T: Real> GammaGammaParams<T> {
    pub fn new(p: T, q: T, gamma: T) -> Result<Self> {
        check_positive(&["p", "q", "gamma"], &[p, q, gamma])?;
        Ok(GammaGammaParams { p, q, gamma })
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.p, self.q, self.gamma]
    }

    fn from_slice(v: &[T]) -> Self {
        GammaGammaParams { p: v[0], q: v[1], gamma: v[2] }
    }

    /// `p γ / (q - 1)`; `None` unless `q > 1`.
    pub fn population_mean(&self) -> Option<T> {
        (self.q > T::one()).then(|| self.p * self.gamma / (self.q - T::one()))
    }
}

/// Number of repeat purchases and their mean value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpendHistory<T> {
    pub frequency: u32,
    pub monetary_value: T,
}

impl From<&RfmSummary> for SpendHistory<f64> {
    fn from(s: &RfmSummary) -> Self {
        SpendHistory { frequency: s.frequency, monetary_value: s.monetary_value }
    }
}

/// Log-density of the observed mean spend `m` of `x` transactions.
pub fn gamma_gamma_loglik<T: Real>(params: &GammaGammaParams<T>, h: &SpendHistory<T>) -> Result<T> {
    if h.frequency == 0 || !(h.monetary_value > T::zero()) {
        return Err(Error::invalid(format!("Gamma-Gamma needs x >= 1 and positive spend, got {h:?}")));
    }
    let x = T::from_count(h.frequency as usize);
    let m = h.monetary_value;
    let GammaGammaParams { p, q, gamma } = *params;
    let px = p * x;
    let ll = ln_gamma(px + q) - ln_gamma(px) - ln_gamma(q) + q * gamma.ln() + (px - T::one()) * m.ln()
        + px * x.ln()
        - (px + q) * (gamma + x * m).ln();
    if ll.is_finite() {
        Ok(ll)
    } else {
        Err(Error::numerical(format!("Gamma-Gamma log-likelihood is {ll:?} for {h:?}")))
    }
}

/// Posterior mean spend `p (γ + x m) / (p x + q - 1)`, a weighted average of
/// the population mean and `m` whose weight on `m` grows with `x`.
pub fn conditional_expected_value<T: Real>(params: &GammaGammaParams<T>, frequency: u32, monetary_value: T) -> Result<T> {
    let x = T::from_count(frequency as usize);
    let denom = params.p * x + params.q - T::one();
    if !(denom > T::zero()) {
        return Err(Error::numerical("conditional spend is infinite (p x + q <= 1)"));
    }
    Ok(params.p * (params.gamma + x * monetary_value) / denom)
}

pub fn fit_gamma_gamma<T: Real>(histories: &[SpendHistory<T>], penalizer: T) -> Result<FitResult<GammaGammaParams<T>, T>> {
    fit_gamma_gamma_with(histories, &FitConfig::with_penalizer(penalizer), None)
}

pub fn fit_gamma_gamma_with<T: Real>(
    histories: &[SpendHistory<T>],
    config: &FitConfig<T>,
    init: Option<&GammaGammaParams<T>>,
) -> Result<FitResult<GammaGammaParams<T>, T>> {
    if histories.is_empty() {
        return Err(Error::invalid("Gamma-Gamma fit needs at least one customer"));
    }
    if let Some(bad) = histories.iter().find(|h| h.frequency == 0 || !(h.monetary_value > T::zero())) {
        return Err(Error::invalid(format!(
            "Gamma-Gamma is fitted on repeat customers only; found {bad:?} (filter frequency > 0)"
        )));
    }
    let mut groups: Vec<(SpendHistory<T>, T)> = Vec::new();
    let mut sorted = histories.to_vec();
    sorted.sort_by(|a, b| {
        a.frequency
            .cmp(&b.frequency)
            .then(a.monetary_value.partial_cmp(&b.monetary_value).unwrap_or(std::cmp::Ordering::Equal))
    });
    for h in sorted {
        match groups.last_mut() {
            Some((last, w)) if *last == h => *w = *w + T::one(),
            _ => groups.push((h, T::one())),
        }
    }
    let nll = |v: &[T]| -> Result<T> {
        let params = GammaGammaParams::from_slice(v);
        let mut total = T::zero();
        for (h, w) in &groups {
            total = total - *w * gamma_gamma_loglik(&params, h)?;
        }
        Ok(total)
    };
    let n = T::from_count(histories.len());
    let mean_m = histories.iter().fold(T::zero(), |a, h| a + h.monetary_value) / n;
    // p = q = 2 puts the population mean at the sample mean
    let default = vec![T::lit(2.0), T::lit(2.0), mean_m * T::lit(0.5)];
    let init = init.map(|p| p.to_vec());
    let raw = fit_positive(nll, &default, init.as_deref(), config)?;
    Ok(FitResult {
        params: GammaGammaParams::from_slice(&raw.params),
        nll: raw.nll,
        objective: raw.objective,
        iterations: raw.iterations,
        converged: raw.converged,
        penalizer: config.penalizer,
        start_nlls: raw.start_nlls,
    })
}
