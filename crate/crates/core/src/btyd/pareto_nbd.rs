use serde::{Deserialize, Serialize};

use super::fit::{fit_positive, FitConfig, FitResult};
use super::{check_positive, group_histories, PurchaseHistory, PurchaseModel};
use crate::error::{Error, Result};
use crate::scalar::{log_add_exp, log_sub_exp, Real};
use crate::special::{hyp2f1_ln, ln_gamma};

/// `ln 2F1(a, b; a+1; z)`. For `0 <= z < 0.9` and `0 < b < a + 1` the Euler
/// form `(1-z)^(1-b) sum_n (a+1-b)_n / (a+1)_n z^n` has positive terms with
/// ratio below `z`, so a short loop suffices; elsewhere the general routine.
fn ln_hyp_shifted<T: Real>(a: T, b: T, z: T) -> Result<T> {
    let p = a + T::one() - b;
    let q = a + T::one();
    if !(z >= T::zero() && z < T::lit(0.9) && p > T::zero() && b > T::zero()) {
        return Ok(hyp2f1_ln(a, b, q, z)?.ln_abs);
    }
    let tail = z / (T::one() - z);
    let mut term = T::one();
    let mut sum = T::one();
    let mut n = T::zero();
    while term * tail > T::epsilon() * sum {
        term = term * (p + n) / (q + n) * z;
        sum = sum + term;
        n = n + T::one();
    }
    Ok((T::one() - b) * (-z).ln_1p() + sum.ln())
}

/// Purchase rate `λ ~ Gamma(r, α)`, death rate `μ ~ Gamma(s, β)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParetoNbdParams<T> {
    pub r: T,
    pub alpha: T,
    pub s: T,
    pub beta: T,
}

impl<T: Real> ParetoNbdParams<T> {
    pub fn new(r: T, alpha: T, s: T, beta: T) -> Result<Self> {
        check_positive(&["r", "alpha", "s", "beta"], &[r, alpha, s, beta])?;
        Ok(ParetoNbdParams { r, alpha, s, beta })
    }

    pub fn to_vec(&self) -> Vec<T> {
        vec![self.r, self.alpha, self.s, self.beta]
    }

    fn from_slice(v: &[T]) -> Self {
        ParetoNbdParams { r: v[0], alpha: v[1], s: v[2], beta: v[3] }
    }

    /// `ln(A0)`, where `s/(r+s+x) * A0` is the death-before-`T` part of the
    /// likelihood (after the common factor). `-inf` when `t_x = T`.
    fn ln_a0(&self, h: &PurchaseHistory<T>) -> Result<T> {
        let x = h.x();
        let rsx = self.r + self.s + x;
        let (big, b, diff) = if self.alpha >= self.beta {
            (self.alpha, self.s + T::one(), self.alpha - self.beta)
        } else {
            (self.beta, self.r + x, self.beta - self.alpha)
        };
        let term = |t: T| -> Result<T> { Ok(ln_hyp_shifted(rsx, b, diff / (big + t))? - rsx * (big + t).ln()) };
        if h.recency >= h.age {
            return Ok(T::neg_infinity());
        }
        Ok(log_sub_exp(term(h.recency)?, term(h.age)?))
    }

    /// Log-likelihood split as `(common, alive, dead)` so that
    /// `ll = common + logaddexp(alive, dead)`.
    fn parts(&self, h: &PurchaseHistory<T>) -> Result<(T, T, T)> {
        let x = h.x();
        let common = ln_gamma(self.r + x) - ln_gamma(self.r) + self.r * self.alpha.ln() + self.s * self.beta.ln();
        let alive = -(self.r + x) * (self.alpha + h.age).ln() - self.s * (self.beta + h.age).ln();
        let dead = self.s.ln() - (self.r + self.s + x).ln() + self.ln_a0(h)?;
        Ok((common, alive, dead))
    }
}

impl<T: Real> PurchaseModel<T> for ParetoNbdParams<T> {
    fn loglik(&self, h: &PurchaseHistory<T>) -> Result<T> {
        let (common, alive, dead) = self.parts(h)?;
        let ll = common + log_add_exp(alive, dead);
        if ll.is_finite() {
            Ok(ll)
        } else {
            Err(Error::numerical(format!("Pareto/NBD log-likelihood is {ll:?} for {h:?} under {self:?}")))
        }
    }

    fn p_alive(&self, h: &PurchaseHistory<T>) -> Result<T> {
        let (_, alive, dead) = self.parts(h)?;
        let p = T::one() / (T::one() + (dead - alive).exp());
        if p.is_finite() {
            Ok(p)
        } else {
            Err(Error::numerical(format!("Pareto/NBD P(alive) undefined for {h:?}")))
        }
    }

    /// Given alive at `T`, `λ ~ Gamma(r+x, α+T)` and `μ ~ Gamma(s, β+T)`, so
    /// the window `(T+u, T+u+v]` expects
    /// `E[λ] (β+T)^s [(β+T+u)^(1-s) - (β+T+u+v)^(1-s)] / (s-1)` purchases.
    fn expected_in_window(&self, h: &PurchaseHistory<T>, start: T, length: T) -> Result<T> {
        if !(start >= T::zero() && length >= T::zero()) {
            return Err(Error::invalid("window start and length must be non-negative"));
        }
        if length == T::zero() {
            return Ok(T::zero());
        }
        let pa = self.p_alive(h)?;
        let b = self.beta + h.age;
        let l1 = (b + start).ln();
        let l2 = (b + start + length).ln();
        let e = T::one() - self.s;
        let delta = l2 - l1;
        // [(b+u)^e - (b+u+v)^e] / (s-1) = (b+u)^e expm1(e Δ) / e
        let window = if e == T::zero() {
            delta
        } else {
            (e * l1).exp() * (e * delta).exp_m1() / e
        };
        let out = pa * (self.r + h.x()) / (self.alpha + h.age) * (self.s * b.ln()).exp() * window;
        if out.is_finite() {
            Ok(out)
        } else {
            Err(Error::numerical("Pareto/NBD expectation overflowed"))
        }
    }
}

pub fn pareto_nbd_loglik<T: Real>(params: &ParetoNbdParams<T>, h: &PurchaseHistory<T>) -> Result<T> {
    params.loglik(h)
}

fn cohort_nll<T: Real>(params: &ParetoNbdParams<T>, groups: &[(PurchaseHistory<T>, T)]) -> Result<T> {
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
    vec![T::one(), alpha, T::one(), mean_t.max(T::lit(1e-3))]
}

/// Fits by maximum likelihood with the default settings.
pub fn fit_pareto_nbd<T: Real>(
    histories: &[PurchaseHistory<T>],
    penalizer: T,
) -> Result<FitResult<ParetoNbdParams<T>, T>> {
    fit_pareto_nbd_with(histories, &FitConfig::with_penalizer(penalizer), None)
}

pub fn fit_pareto_nbd_with<T: Real>(
    histories: &[PurchaseHistory<T>],
    config: &FitConfig<T>,
    init: Option<&ParetoNbdParams<T>>,
) -> Result<FitResult<ParetoNbdParams<T>, T>> {
    if histories.is_empty() {
        return Err(Error::invalid("Pareto/NBD fit needs at least one customer"));
    }
    for h in histories {
        h.validate()?;
    }
    if histories.iter().all(|h| h.frequency == 0) {
        return Err(Error::NonIdentifiable("no customer made a repeat purchase".into()));
    }
    let groups = group_histories(histories);
    let init = init.map(|p| p.to_vec());
    let raw = fit_positive(
        |p| cohort_nll(&ParetoNbdParams::from_slice(p), &groups),
        &default_start(histories),
        init.as_deref(),
        config,
    )?;
    Ok(FitResult {
        params: ParetoNbdParams::from_slice(&raw.params),
        nll: raw.nll,
        objective: raw.objective,
        iterations: raw.iterations,
        converged: raw.converged,
        penalizer: config.penalizer,
        start_nlls: raw.start_nlls,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate;

    fn params() -> ParetoNbdParams<f64> {
        ParetoNbdParams::new(0.5, 10.0, 0.6, 12.0).unwrap()
    }

    fn h(x: u32, tx: f64, t: f64) -> PurchaseHistory<f64> {
        PurchaseHistory::new(x, tx, t).unwrap()
    }

    /// Likelihood built straight from the generative assumptions: gamma
    /// mixtures of the alive and died-at-tau cases, integrated numerically.
    fn oracle_lik(p: &ParetoNbdParams<f64>, hist: &PurchaseHistory<f64>) -> f64 {
        let x = hist.x();
        let lam = |tau: f64| {
            (ln_gamma(p.r + x) - ln_gamma(p.r) + p.r * p.alpha.ln() - (p.r + x) * (p.alpha + tau).ln()).exp()
        };
        let alive = lam(hist.age) * (p.beta / (p.beta + hist.age)).powf(p.s);
        let died = integrate(
            &|tau| lam(tau) * p.s * p.beta.powf(p.s) / (p.beta + tau).powf(p.s + 1.0),
            hist.recency,
            hist.age,
        );
        alive + died
    }

    #[test]
    fn matches_quadrature_oracle() {
        let cases = [
            (params(), h(0, 0.0, 30.0)),
            (params(), h(3, 20.0, 30.0)),
            (params(), h(12, 300.0, 365.0)),
            (ParetoNbdParams::new(2.0, 3.0, 0.4, 1.0).unwrap(), h(5, 2.0, 90.0)),
            (ParetoNbdParams::new(0.3, 1.0, 2.0, 1.0).unwrap(), h(1, 0.5, 10.0)),
        ];
        for (p, hist) in cases {
            let ll = p.loglik(&hist).unwrap();
            let oracle = oracle_lik(&p, &hist).ln();
            assert!((ll - oracle).abs() < 1e-9, "{hist:?}: {ll} vs {oracle}");
        }
    }

    #[test]
    fn outcomes_integrate_to_one() {
        // P(x=0) + sum_x int_0^T L(x, t) t^(x-1)/(x-1)! dt over the ordered
        // purchase times before the last one.
        for p in [params(), ParetoNbdParams::new(1.5, 2.0, 0.8, 5.0).unwrap()] {
            let t_end = 20.0;
            let mut total = p.loglik(&h(0, 0.0, t_end)).unwrap().exp();
            for x in 1..200u32 {
                let lf = ln_gamma(x as f64);
                let mass = integrate(
                    &|t| {
                        if t <= 0.0 {
                            return 0.0;
                        }
                        (p.loglik(&h(x, t, t_end)).unwrap() + (x as f64 - 1.0) * t.ln() - lf).exp()
                    },
                    0.0,
                    t_end,
                );
                total += mass;
                if mass < 1e-16 {
                    break;
                }
            }
            assert!((total - 1.0).abs() < 1e-8, "{total}");
        }
    }

    #[test]
    fn stress_grid_is_finite() {
        for &x in &[0u32, 1, 10, 100, 1000] {
            for &t in &[1.0, 100.0, 10_000.0] {
                for &frac in &[0.0, 0.5, 1.0] {
                    let tx = if x == 0 { 0.0 } else { t * frac };
                    for p in [params(), ParetoNbdParams::new(20.0, 0.5, 0.05, 300.0).unwrap()] {
                        let hist = h(x, tx, t);
                        assert!(p.loglik(&hist).unwrap().is_finite(), "{hist:?}");
                        let pa = p.p_alive(&hist).unwrap();
                        assert!((0.0..=1.0).contains(&pa));
                    }
                }
            }
        }
    }

    #[test]
    fn loglik_decreases_in_x_beyond_mode() {
        let p = params();
        let lls: Vec<f64> = (5..40).map(|x| p.loglik(&h(x, 50.0, 60.0)).unwrap()).collect();
        for w in lls.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn p_alive_decreases_with_age() {
        let p = params();
        let mut prev = 1.0;
        for t in [21.0, 30.0, 60.0, 200.0, 1000.0] {
            let pa = p.p_alive(&h(3, 20.0, t)).unwrap();
            assert!(pa < prev);
            prev = pa;
        }
        assert_eq!(p.p_alive(&h(3, 20.0, 20.0)).unwrap(), 1.0);
    }

    #[test]
    fn expectation_matches_mixture_integral() {
        let p = params();
        for hist in [h(0, 0.0, 30.0), h(4, 25.0, 30.0)] {
            for tau in [1.0, 30.0, 273.0] {
                let e = p.expected_transactions(&hist, tau).unwrap();
                let shape = p.s;
                let rate = p.beta + hist.age;
                let density = |mu: f64| {
                    (shape * rate.ln() + (shape - 1.0) * mu.ln() - rate * mu - ln_gamma(shape)).exp()
                };
                let ln_mu = integrate(&|u: f64| {
                    if u <= 0.0 {
                        return 0.0;
                    }
                    density(u) * (-(-u * tau).exp_m1()) / u
                }, 0.0, 50.0);
                let oracle = p.p_alive(&hist).unwrap() * (p.r + hist.x()) / (p.alpha + hist.age) * ln_mu;
                assert!((e - oracle).abs() < 1e-9 * oracle.max(1.0), "{e} vs {oracle}");
            }
        }
    }

    #[test]
    fn expectation_is_additive_and_handles_unit_shape() {
        for p in [params(), ParetoNbdParams::new(0.5, 10.0, 1.0, 12.0).unwrap()] {
            let hist = h(2, 10.0, 30.0);
            assert_eq!(p.expected_transactions(&hist, 0.0).unwrap(), 0.0);
            let whole = p.expected_transactions(&hist, 100.0).unwrap();
            let parts = p.expected_transactions(&hist, 40.0).unwrap() + p.expected_in_window(&hist, 40.0, 60.0).unwrap();
            assert!((whole - parts).abs() < 1e-12);
        }
        // s = 1 agrees with its neighbours
        let hist = h(2, 10.0, 30.0);
        let at = |s: f64| ParetoNbdParams::new(0.5, 10.0, s, 12.0).unwrap().expected_transactions(&hist, 50.0).unwrap();
        assert!((at(1.0) - 0.5 * (at(1.0 + 1e-7) + at(1.0 - 1e-7))).abs() < 1e-9);
    }

    #[test]
    fn all_zero_frequency_is_non_identifiable() {
        let hs = vec![h(0, 0.0, 10.0); 5];
        assert!(matches!(fit_pareto_nbd(&hs, 0.0), Err(Error::NonIdentifiable(_))));
    }
}
