//! Cohort-level CLV: the Berger-Nasr basic formula, retention curve times
//! ARPDAU, monetization-curve projection and Kaplan-Meier retention.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{Real, Scalar};

/// Inputs of the basic formula. `n` is the horizon in periods.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasicClvConfig<T> {
    /// Gross contribution margin per period.
    pub gc: T,
    /// Promotion cost per period.
    pub m: T,
    pub n: u32,
    /// Retention rate in `[0, 1]`.
    pub r: T,
    /// Discount rate per period.
    pub d: T,
}

impl<T: Scalar> BasicClvConfig<T> {
    pub fn new(gc: T, m: T, n: u32, r: T, d: T) -> Result<Self> {
        if !(r >= T::zero() && r <= T::one()) {
            return Err(Error::invalid(format!("retention rate must lie in [0, 1], got {r:?}")));
        }
        if !(d >= T::zero()) {
            return Err(Error::invalid(format!("discount rate must be non-negative, got {d:?}")));
        }
        Ok(BasicClvConfig { gc, m, n, r, d })
    }
}

/// `GC * sum_{i=0..n} r^i/(1+d)^i - M * sum_{i=1..n} r^(i-1)/(1+d)^(i-0.5)`.
///
/// Promotion spend is charged mid-period, so the cost sum starts at the first
/// period rather than at `i = 0` (which would need `r^-1`).
pub fn basic_clv<T: Real>(config: &BasicClvConfig<T>) -> T {
    let q = config.r / (T::one() + config.d);
    let mut margin = T::zero();
    let mut term = T::one();
    for _ in 0..=config.n {
        margin = margin + term;
        term = term * q;
    }
    let mut cost = T::zero();
    let mut retained = T::one();
    for i in 1..=config.n {
        let exponent = T::from_count(i as usize) - T::lit(0.5);
        cost = cost + retained / (T::one() + config.d).powf(exponent);
        retained = retained * config.r;
    }
    config.gc * margin - config.m * cost
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetentionFamily {
    /// `ret(i) = (1 + i)^-k`
    PowerLaw,
    /// `ret(i) = exp(-k i)`
    Exponential,
}

/// Product-limit step function: `survival[j]` holds from `times[j]` until the
/// next step, and 1 before the first step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSteps<T> {
    pub times: Vec<T>,
    pub survival: Vec<T>,
}

impl<T: Scalar> SurvivalSteps<T> {
    pub fn at(&self, t: T) -> T {
        let idx = self.times.partition_point(|&s| s <= t);
        if idx == 0 {
            T::one()
        } else {
            self.survival[idx - 1]
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum RetentionCurve<T> {
    PowerLaw { k: T, rss: T },
    Exponential { k: T, rss: T },
    KaplanMeier { steps: SurvivalSteps<T> },
}

impl<T: Real> RetentionCurve<T> {
    /// Fraction retained at day `i`.
    pub fn ret(&self, i: T) -> T {
        match self {
            RetentionCurve::PowerLaw { k, .. } => (T::one() + i).powf(-*k),
            RetentionCurve::Exponential { k, .. } => (-*k * i).exp(),
            RetentionCurve::KaplanMeier { steps } => steps.at(i),
        }
    }

    pub fn rss(&self) -> Option<T> {
        match self {
            RetentionCurve::PowerLaw { rss, .. } | RetentionCurve::Exponential { rss, .. } => Some(*rss),
            RetentionCurve::KaplanMeier { .. } => None,
        }
    }
}

fn family_value<T: Real>(family: RetentionFamily, k: T, day: T) -> T {
    match family {
        RetentionFamily::PowerLaw => (T::one() + day).powf(-k),
        RetentionFamily::Exponential => (-k * day).exp(),
    }
}

/// Least-squares fit of the decay rate `k >= 0`.
///
/// A log-spaced scan locates the best bracket, then golden-section search
/// refines it.
pub fn fit_retention_curve<T: Real>(points: &[(T, T)], family: RetentionFamily) -> Result<RetentionCurve<T>> {
    if points.len() < 2 {
        return Err(Error::invalid("retention fit needs at least two points"));
    }
    for &(day, frac) in points {
        if !(day >= T::zero() && day.is_finite()) || !(frac >= T::zero() && frac <= T::one()) {
            return Err(Error::invalid(format!("bad retention point ({day:?}, {frac:?})")));
        }
    }
    if points.iter().all(|p| p.1 == T::zero()) {
        return Err(Error::invalid("all retention fractions are zero"));
    }
    let rss = |k: T| {
        points
            .iter()
            .map(|&(day, frac)| {
                let e = family_value(family, k, day) - frac;
                e * e
            })
            .fold(T::zero(), |a, b| a + b)
    };

    let mut grid = vec![T::zero()];
    for j in 0..=90 {
        grid.push(T::lit(10f64.powf(-6.0 + j as f64 / 10.0)));
    }
    let values: Vec<T> = grid.iter().map(|&k| rss(k)).collect();
    let best = values
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v < values[b] { i } else { b });
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];

    let phi = T::lit((5f64.sqrt() - 1.0) / 2.0);
    let (mut a, mut b) = (lo, hi);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (rss(c), rss(d));
    for _ in 0..200 {
        if (b - a).abs() <= T::lit(1e-14) * (T::one() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = rss(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = rss(d);
        }
    }
    let mut k = (a + b) / T::lit(2.0);
    let mut best_rss = rss(k);
    for cand in [grid[best], lo] {
        let v = rss(cand);
        if v <= best_rss {
            k = cand;
            best_rss = v;
        }
    }
    Ok(match family {
        RetentionFamily::PowerLaw => RetentionCurve::PowerLaw { k, rss: best_rss },
        RetentionFamily::Exponential => RetentionCurve::Exponential { k, rss: best_rss },
    })
}

/// Product-limit estimate from `(length, censored)` pairs. Subjects censored at
/// an event time are still at risk at that time.
pub fn kaplan_meier<T: Scalar>(durations: &[(T, bool)]) -> Result<SurvivalSteps<T>> {
    if durations.is_empty() {
        return Err(Error::invalid("Kaplan-Meier needs at least one duration"));
    }
    if durations.iter().any(|d| !(d.0 >= T::zero())) {
        return Err(Error::invalid("durations must be non-negative"));
    }
    let mut sorted: Vec<(T, bool)> = durations.to_vec();
    sorted.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut at_risk = sorted.len();
    let mut s = T::one();
    let mut steps = SurvivalSteps { times: Vec::new(), survival: Vec::new() };
    let mut i = 0;
    while i < sorted.len() {
        let t = sorted[i].0;
        let mut j = i;
        let mut events = 0usize;
        while j < sorted.len() && sorted[j].0 == t {
            if !sorted[j].1 {
                events += 1;
            }
            j += 1;
        }
        if events > 0 {
            s = s * (T::one() - T::from_count(events) / T::from_count(at_risk));
            steps.times.push(t);
            steps.survival.push(s);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(steps)
}

/// `sum_{i=0..n} arpdau * ret(i)`; day 0 is included.
pub fn retention_clv<T: Real>(arpdau: T, curve: &RetentionCurve<T>, n: u32) -> T {
    (0..=n).map(|i| arpdau * curve.ret(T::from_count(i as usize))).fold(T::zero(), |a, b| a + b)
}

/// Division guard for `rev / mon(n)`.
pub const MONETIZATION_FLOOR: f64 = 1e-9;

/// Piecewise-linear cumulative revenue share through the knots, constant
/// before the first knot and 1 after the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonetizationCurve<T> {
    pub days: Vec<T>,
    pub fractions: Vec<T>,
}

impl<T: Scalar> MonetizationCurve<T> {
    pub fn mon(&self, day: T) -> T {
        let idx = self.days.partition_point(|&d| d <= day);
        if idx == 0 {
            return self.fractions[0];
        }
        if idx == self.days.len() {
            return T::one();
        }
        let (d0, d1) = (self.days[idx - 1], self.days[idx]);
        let (f0, f1) = (self.fractions[idx - 1], self.fractions[idx]);
        f0 + (f1 - f0) * (day - d0) / (d1 - d0)
    }
}

pub fn fit_monetization_curve<T: Scalar>(points: &[(T, T)]) -> Result<MonetizationCurve<T>> {
    if points.is_empty() {
        return Err(Error::invalid("monetization curve needs at least one point"));
    }
    for w in points.windows(2) {
        if !(w[1].0 > w[0].0) {
            return Err(Error::invalid("monetization days must be strictly increasing"));
        }
        if w[1].1 < w[0].1 {
            return Err(Error::invalid(format!("monetization fractions decrease at day {:?}", w[1].0)));
        }
    }
    if points.iter().any(|p| !(p.1 >= T::zero() && p.1 <= T::one())) {
        return Err(Error::invalid("monetization fractions must lie in [0, 1]"));
    }
    let last = points[points.len() - 1].1;
    if (last - T::one()).abs_val() > T::lit(1e-9) {
        return Err(Error::invalid(format!("final monetization fraction must be 1, got {last:?}")));
    }
    let mut fractions: Vec<T> = points.iter().map(|p| p.1).collect();
    let n = fractions.len();
    fractions[n - 1] = T::one();
    Ok(MonetizationCurve { days: points.iter().map(|p| p.0).collect(), fractions })
}

/// `rev / mon(n)`; fails when `mon(n)` is below [`MONETIZATION_FLOOR`].
pub fn monetization_clv<T: Scalar>(revenue_to_date: T, curve: &MonetizationCurve<T>, n: T) -> Result<T> {
    let m = curve.mon(n);
    if m < T::lit(MONETIZATION_FLOOR) {
        return Err(Error::numerical(format!("monetization share {m:?} at day {n:?} is below the floor")));
    }
    Ok(revenue_to_date / m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    type Q = Ratio<i64>;

    fn cfg(gc: f64, m: f64, n: u32, r: f64, d: f64) -> BasicClvConfig<f64> {
        BasicClvConfig::new(gc, m, n, r, d).unwrap()
    }

    /// Geometric-series form, written on `q = r/(1+d)`.
    fn closed_form(c: &BasicClvConfig<f64>) -> f64 {
        let q = c.r / (1.0 + c.d);
        // expm1/ln_1p keep the ratio accurate as q approaches 1
        let geo = |k: u32| match k {
            0 => 0.0,
            _ if q == 1.0 => k as f64,
            _ => -(k as f64 * (q - 1.0).ln_1p()).exp_m1() / (1.0 - q),
        };
        c.gc * geo(c.n + 1) - c.m / (1.0 + c.d).sqrt() * geo(c.n)
    }

    #[test]
    fn basic_examples() {
        assert_eq!(basic_clv(&cfg(100.0, 0.0, 4, 1.0, 0.0)), 500.0);
        assert!((basic_clv(&cfg(100.0, 0.0, 2, 0.5, 0.0)) - 175.0).abs() < 1e-12);
        let v = basic_clv(&cfg(100.0, 20.0, 3, 0.8, 0.1));
        assert!((v - 221.063).abs() < 1e-3, "{v}");
        // period-by-period cash flow
        let mut cash = 0.0;
        for i in 0..=3 {
            cash += 100.0 * 0.8f64.powi(i) / 1.1f64.powi(i);
            if i >= 1 {
                cash -= 20.0 * 0.8f64.powi(i - 1) / 1.1f64.powf(i as f64 - 0.5);
            }
        }
        assert!((v - cash).abs() < 1e-12);
    }

    #[test]
    fn invalid_configs() {
        assert!(BasicClvConfig::new(1.0, 0.0, 1, 1.5, 0.0).is_err());
        assert!(BasicClvConfig::new(1.0, 0.0, 1, 0.5, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn basic_matches_geometric_series(gc in 0.0f64..1000.0, m in 0.0f64..200.0, n in 0u32..200, r in 0.0f64..=1.0, d in 0.0f64..1.0) {
            let c = cfg(gc, m, n, r, d);
            let v = basic_clv(&c);
            prop_assert!((v - closed_form(&c)).abs() <= 1e-10 * v.abs().max(1.0));
        }

        #[test]
        fn basic_monotonicity(gc in 1.0f64..1000.0, n in 1u32..50, r in 0.01f64..0.99, d in 0.0f64..0.5, bump in 0.001f64..0.1) {
            let base = basic_clv(&cfg(gc, 0.0, n, r, d));
            prop_assert!(basic_clv(&cfg(gc, 0.0, n, r, d + bump)) <= base);
            prop_assert!(basic_clv(&cfg(gc, 5.0, n, r, d)) <= base);
            prop_assert!(basic_clv(&cfg(gc + bump, 0.0, n, r, d)) >= base);
            prop_assert!(basic_clv(&cfg(gc, 0.0, n, (r + bump).min(1.0), d)) >= base);
            prop_assert!(basic_clv(&cfg(gc, 0.0, n + 1, r, d)) >= base);
        }

        #[test]
        fn no_attrition_is_exact(gc in -1e6f64..1e6, n in 0u32..1000) {
            prop_assert_eq!(basic_clv(&cfg(gc, 0.0, n, 1.0, 0.0)), (n as f64 + 1.0) * gc);
        }
    }

    #[test]
    fn exponential_recovery() {
        let pts: Vec<(f64, f64)> = (0..60).map(|i| (i as f64, (-0.1 * i as f64).exp())).collect();
        match fit_retention_curve(&pts, RetentionFamily::Exponential).unwrap() {
            RetentionCurve::Exponential { k, rss } => {
                assert!((k - 0.1).abs() < 1e-6, "{k}");
                assert!(rss < 1e-12);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flat_retention_has_zero_decay() {
        let pts: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, 1.0)).collect();
        for fam in [RetentionFamily::Exponential, RetentionFamily::PowerLaw] {
            let c = fit_retention_curve(&pts, fam).unwrap();
            assert_eq!(c.rss(), Some(0.0));
            assert_eq!(c.ret(5.0), 1.0);
        }
    }

    #[test]
    fn mismatched_family_fits_worse() {
        let pts: Vec<(f64, f64)> = (0..90).map(|i| (i as f64, (1.0 + i as f64).powf(-0.6))).collect();
        let pl = fit_retention_curve(&pts, RetentionFamily::PowerLaw).unwrap();
        let ex = fit_retention_curve(&pts, RetentionFamily::Exponential).unwrap();
        assert!(ex.rss().unwrap() > pl.rss().unwrap());
        match pl {
            RetentionCurve::PowerLaw { k, .. } => assert!((k - 0.6).abs() < 1e-6),
            _ => unreachable!(),
        }
    }

    #[test]
    fn degenerate_retention_inputs() {
        assert!(fit_retention_curve(&[(0.0, 0.0), (1.0, 0.0)], RetentionFamily::Exponential).is_err());
        assert!(fit_retention_curve(&[(0.0, 1.0)], RetentionFamily::Exponential).is_err());
        assert!(fit_retention_curve(&[(0.0, 1.0), (1.0, 1.5)], RetentionFamily::Exponential).is_err());
    }

    #[test]
    fn km_two_events() {
        let s = kaplan_meier(&[(1.0, false), (2.0, false)]).unwrap();
        assert_eq!(s.at(1.0), 0.5);
        assert_eq!(s.at(2.0), 0.0);
        assert_eq!(s.at(0.5), 1.0);
    }

    #[test]
    fn km_all_censored() {
        let s = kaplan_meier(&[(1.0, true), (4.0, true), (2.0, true)]).unwrap();
        for t in [0.0, 1.0, 2.0, 4.0, 9.0] {
            assert_eq!(s.at(t), 1.0);
        }
        assert!(kaplan_meier::<f64>(&[]).is_err());
    }

    #[test]
    fn km_with_censoring_by_hand() {
        // at risk 4 at t=1 (1 event) -> 3/4; censor at 2; at risk 2 at t=3 -> 3/4 * 1/2
        let q = |n: i64, d: i64| Q::new(n, d);
        let s = kaplan_meier(&[(q(1, 1), false), (q(2, 1), true), (q(3, 1), false), (q(5, 1), true)]).unwrap();
        assert_eq!(s.at(q(1, 1)), q(3, 4));
        assert_eq!(s.at(q(3, 1)), q(3, 8));
        assert_eq!(s.at(q(10, 1)), q(3, 8));
    }

    proptest! {
        #[test]
        fn km_without_censoring_is_empirical(lengths in prop::collection::vec(0i64..30, 1..40)) {
            let data: Vec<(Q, bool)> = lengths.iter().map(|&l| (Q::from_integer(l), false)).collect();
            let s = kaplan_meier(&data).unwrap();
            let n = lengths.len() as i64;
            for t in 0..32 {
                let survivors = lengths.iter().filter(|&&l| l > t).count() as i64;
                prop_assert_eq!(s.at(Q::from_integer(t)), Q::new(survivors, n));
            }
        }

        #[test]
        fn km_is_monotone_in_unit_interval(data in prop::collection::vec((0.0f64..50.0, any::<bool>()), 1..50)) {
            let s = kaplan_meier(&data).unwrap();
            let mut prev = 1.0;
            for &v in &s.survival {
                prop_assert!((0.0..=1.0).contains(&v) && v <= prev);
                prev = v;
            }
        }

        #[test]
        fn retention_clv_monotone_in_n(arpdau in 0.0f64..10.0, k in 0.0f64..2.0, n in 0u32..100) {
            let c = RetentionCurve::PowerLaw { k, rss: 0.0 };
            prop_assert!(retention_clv(arpdau, &c, n + 1) >= retention_clv(arpdau, &c, n));
        }
    }

    #[test]
    fn retention_clv_examples() {
        let flat = RetentionCurve::Exponential { k: 0.0, rss: 0.0 };
        assert!((retention_clv(0.1f64, &flat, 30) - 3.1).abs() < 1e-12);
        let day0 = RetentionCurve::KaplanMeier { steps: SurvivalSteps { times: vec![1.0], survival: vec![0.0] } };
        assert_eq!(retention_clv(0.5, &day0, 10), 0.5);
        let harmonic = RetentionCurve::PowerLaw { k: 1.0, rss: 0.0 };
        assert!((retention_clv(1.0f64, &harmonic, 3) - 25.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn monetization_examples() {
        let c = fit_monetization_curve(&[(10.0, 0.5), (20.0, 1.0)]).unwrap();
        assert_eq!(monetization_clv(50.0, &c, 10.0).unwrap(), 100.0);
        assert_eq!(monetization_clv(0.0, &c, 10.0).unwrap(), 0.0);
        assert_eq!(monetization_clv(50.0, &c, 20.0).unwrap(), 50.0);
        assert_eq!(c.mon(15.0), 0.75);
        let single = fit_monetization_curve(&[(30.0, 1.0)]).unwrap();
        assert_eq!(single.mon(31.0), 1.0);
        assert_eq!(single.mon(300.0), 1.0);
        assert!(fit_monetization_curve(&[(1.0, 0.6), (2.0, 0.5), (3.0, 1.0)]).is_err());
        let zero = fit_monetization_curve(&[(1.0, 0.0), (2.0, 1.0)]).unwrap();
        assert!(monetization_clv(1.0, &zero, 1.0).unwrap_err().is_numerical());
    }

    #[test]
    fn monetization_knots_reproduced_exactly() {
        let pts: Vec<(Q, Q)> = (1..=6).map(|i| (Q::from_integer(i), Q::new(i * i, 36))).collect();
        let c = fit_monetization_curve(&pts).unwrap();
        for (d, f) in pts {
            assert_eq!(c.mon(d), f);
        }
    }

    proptest! {
        #[test]
        fn projection_never_below_revenue(rev in 0.0f64..1e4, a in 0.01f64..1.0, day in 0.0f64..20.0) {
            let c = fit_monetization_curve(&[(5.0, a), (10.0, 1.0)]).unwrap();
            prop_assert!(monetization_clv(rev, &c, day).unwrap() >= rev);
        }
    }

    #[test]
    fn curves_serialize_with_family_tag() {
        let c = RetentionCurve::PowerLaw { k: 0.25, rss: 0.5 };
        let j = serde_json::to_string(&c).unwrap();
        assert_eq!(j, r#"{"family":"power_law","k":0.25,"rss":0.5}"#);
        assert_eq!(serde_json::from_str::<RetentionCurve<f64>>(&j).unwrap(), c);
    }
}
