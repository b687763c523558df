//! Gamma and Gauss hypergeometric functions.
//!
//! `₂F₁(a, b; c; z)` is evaluated by its power series, choosing between the
//! direct series and Euler's transformation `(1-z)^(c-a-b) ₂F₁(c-a, c-b; c; z)`,
//! with Pfaff's transformation for negative arguments and the `z -> 1-z`
//! connection formula close to `z = 1`. Everything is carried in log space
//! (sign plus log-magnitude) because the buy-till-you-die likelihoods combine
//! values far outside the `f64` range.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Relative truncation tolerance of the series.
const SERIES_TOL: f64 = 1e-15;
/// Maximum number of series terms.
pub const MAX_SERIES_TERMS: usize = 10_000;
/// Above this argument the connection formula is preferred when the series
/// would need more than `CONNECTION_TERMS` terms.
const NEAR_ONE: f64 = 0.9;
const CONNECTION_TERMS: f64 = 250.0;
/// Distance from an integer below which `c - a - b` is treated as degenerate.
const DEGENERATE_GAP: f64 = 1e-3;

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

fn c<T: Real>(v: f64) -> T {
    T::lit(v)
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma<T: Real>(x: T) -> T {
    debug_assert!(x > T::zero());
    if x < c(0.5) {
        // reflection keeps accuracy near the pole at 0
        let pi = T::PI();
        return (pi / (pi * x).sin()).ln() - ln_gamma(T::one() - x);
    }
    let x = x - T::one();
    let mut acc = c::<T>(LANCZOS[0]);
    for (i, &coef) in LANCZOS.iter().enumerate().skip(1) {
        acc = acc + c::<T>(coef) / (x + T::from_count(i));
    }
    let t = x + c(LANCZOS_G + 0.5);
    c::<T>(0.5) * (T::PI() + T::PI()).ln() + (x + c(0.5)) * t.ln() - t + acc.ln()
}

/// Sign and log-magnitude of `1/Γ(x)` for any real `x`; `None` at the
/// poles of `Γ` (where `1/Γ` vanishes).
pub fn ln_recip_gamma<T: Real>(x: T) -> Option<(T, T)> {
    if x > T::zero() {
        return Some((T::one(), -ln_gamma(x)));
    }
    if x == x.floor() {
        return None;
    }
    // Γ(x) = π / (sin(πx) Γ(1-x))
    let s = (T::PI() * x).sin();
    let sign = if s < T::zero() { -T::one() } else { T::one() };
    Some((sign, s.abs().ln() + ln_gamma(T::one() - x) - T::PI().ln()))
}

fn is_nonpositive_int<T: Real>(v: T) -> bool {
    v <= T::zero() && v == v.floor()
}

/// Signed log-magnitude representation `sign * exp(ln_abs)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SignedLog<T> {
    pub sign: T,
    pub ln_abs: T,
}

impl<T: Real> SignedLog<T> {
    pub fn zero() -> Self {
        SignedLog { sign: T::zero(), ln_abs: T::neg_infinity() }
    }

    pub fn value(self) -> T {
        if self.sign == T::zero() {
            T::zero()
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    fn scale(self, ln_factor: T, sign: T) -> Self {
        if self.sign == T::zero() || sign == T::zero() {
            return Self::zero();
        }
        SignedLog { sign: self.sign * sign, ln_abs: self.ln_abs + ln_factor }
    }

    fn add(self, other: Self) -> Self {
        if self.sign == T::zero() {
            return other;
        }
        if other.sign == T::zero() {
            return self;
        }
        let (hi, lo) = if self.ln_abs >= other.ln_abs { (self, other) } else { (other, self) };
        let ratio = (lo.ln_abs - hi.ln_abs).exp();
        let mag = if hi.sign == lo.sign { ratio.ln_1p() } else { (-ratio).ln_1p() };
        if mag == T::neg_infinity() {
            return Self::zero();
        }
        SignedLog { sign: hi.sign, ln_abs: hi.ln_abs + mag }
    }
}

struct SeriesSum<T> {
    value: SignedLog<T>,
    /// log10 of the largest term relative to the final sum; large values
    /// indicate cancellation.
    lost_digits: T,
}

/// Plain power series with rescaling so that intermediate terms never overflow.
fn series<T: Real>(a: T, b: T, cc: T, z: T, max_terms: usize) -> Option<SeriesSum<T>> {
    let big = c::<T>(1e200);
    let tol = c::<T>(SERIES_TOL);
    let mut log_scale = T::zero();
    let mut term = T::one();
    let mut sum = T::one();
    let mut max_term = T::zero();
    let mut max_term_log = T::zero();
    for n in 0..max_terms {
        let nf = T::from_count(n);
        let denom = (cc + nf) * (nf + T::one());
        if denom == T::zero() {
            return None;
        }
        let ratio = (a + nf) * (b + nf) / denom * z;
        term = term * ratio;
        sum = sum + term;
        if term.abs() > max_term {
            max_term = term.abs();
            max_term_log = log_scale;
        }
        if !sum.is_finite() || !term.is_finite() {
            return None;
        }
        if sum.abs() > big || term.abs() > big {
            sum = sum / big;
            term = term / big;
            max_term = max_term / big;
            log_scale = log_scale + big.ln();
        }
        if term == T::zero() {
            break;
        }
        let r = ratio.abs();
        if r < T::one() && term.abs() <= tol * sum.abs() * (T::one() - r) {
            break;
        }
        if n + 1 == max_terms {
            return None;
        }
    }
    if sum == T::zero() {
        return Some(SeriesSum { value: SignedLog::zero(), lost_digits: T::infinity() });
    }
    let sign = if sum < T::zero() { -T::one() } else { T::one() };
    let ln_abs = sum.abs().ln() + log_scale;
    let lost = if max_term > T::zero() {
        (max_term.ln() + max_term_log - ln_abs) / c::<T>(std::f64::consts::LN_10)
    } else {
        T::zero()
    };
    Some(SeriesSum { value: SignedLog { sign, ln_abs }, lost_digits: lost })
}

/// Terms needed by the series: position of the largest term plus the
/// geometric tail at rate `z`.
fn series_cost<T: Real>(a: T, b: T, cc: T, z: T) -> f64 {
    let (a, b, cc, z) = (
        a.to_f64().unwrap_or(f64::INFINITY).abs(),
        b.to_f64().unwrap_or(f64::INFINITY).abs(),
        cc.to_f64().unwrap_or(f64::INFINITY).abs(),
        z.to_f64().unwrap_or(1.0).abs(),
    );
    // (a+n)(b+n)z = (c+n)(n+1)  =>  (z-1) n^2 + (z(a+b) - c - 1) n + (z a b - c) = 0
    let qa = z - 1.0;
    let qb = z * (a + b) - cc - 1.0;
    let qc = z * a * b - cc;
    let disc = qb * qb - 4.0 * qa * qc;
    let peak = if disc > 0.0 && qa != 0.0 {
        ((-qb - disc.sqrt()) / (2.0 * qa)).max(0.0)
    } else {
        0.0
    };
    let tail = if z > 0.0 && z < 1.0 { SERIES_TOL.ln() / z.ln() } else { 0.0 };
    peak + tail
}

/// Positive argument `0 < z < 1`.
fn hyp2f1_positive<T: Real>(a: T, b: T, cc: T, z: T) -> Result<SignedLog<T>> {
    let euler_shift = (T::one() - z).ln() * (cc - a - b);
    let direct_cost = series_cost(a, b, cc, z);
    let euler_cost = series_cost(cc - a, cc - b, cc, z);

    let attempts = if euler_cost < direct_cost {
        [(euler_cost, true), (direct_cost, false)]
    } else {
        [(direct_cost, false), (euler_cost, true)]
    };

    let near_one = z > c(NEAR_ONE);
    if near_one && attempts[0].0 > CONNECTION_TERMS {
        if let Ok(v) = connection(a, b, cc, z) {
            return Ok(v);
        }
    }
    for &(cost, euler) in &attempts {
        if near_one && cost > MAX_SERIES_TERMS as f64 * 0.8 {
            continue;
        }
        let (p, q) = if euler { (cc - a, cc - b) } else { (a, b) };
        if let Some(out) = series(p, q, cc, z, MAX_SERIES_TERMS) {
            if out.lost_digits < c(4.0) {
                let value = if euler { out.value.scale(euler_shift, T::one()) } else { out.value };
                return Ok(value);
            }
        }
    }
    if z > c(0.5) {
        return connection(a, b, cc, z);
    }
    Err(Error::numerical(format!(
        "2F1({a:?}, {b:?}; {cc:?}; {z:?}) series failed to converge"
    )))
}

/// `z -> 1 - z` connection formula, with interpolation in `c` when
/// `c - a - b` sits on or next to an integer.
fn connection<T: Real>(a: T, b: T, cc: T, z: T) -> Result<SignedLog<T>> {
    let m = cc - a - b;
    let k = m.round();
    let gap = c::<T>(DEGENERATE_GAP);
    if (m - k).abs() >= gap {
        return connection_regular(a, b, cc, z);
    }
    // Quintic Lagrange interpolation in c through c_k + {±h, ±2h, ±3h}.
    let c_k = a + b + k;
    let h = gap;
    let offsets = [-h * c(3.0), -h - h, -h, h, h + h, h * c(3.0)];
    let mut vals = Vec::with_capacity(offsets.len());
    for &off in &offsets {
        vals.push(connection_regular(a, b, c_k + off, z)?);
    }
    let top = vals
        .iter()
        .filter(|v| v.sign != T::zero())
        .map(|v| v.ln_abs)
        .fold(T::neg_infinity(), |acc, v| acc.max(v));
    if top == T::neg_infinity() {
        return Ok(SignedLog::zero());
    }
    let x = cc - c_k;
    let mut acc = T::zero();
    for (i, &xi) in offsets.iter().enumerate() {
        let mut w = T::one();
        for (j, &xj) in offsets.iter().enumerate() {
            if i != j {
                w = w * (x - xj) / (xi - xj);
            }
        }
        acc = acc + w * vals[i].sign * (vals[i].ln_abs - top).exp();
    }
    if acc == T::zero() {
        return Ok(SignedLog::zero());
    }
    let sign = if acc < T::zero() { -T::one() } else { T::one() };
    Ok(SignedLog { sign, ln_abs: acc.abs().ln() + top })
}

fn connection_regular<T: Real>(a: T, b: T, cc: T, z: T) -> Result<SignedLog<T>> {
    let m = cc - a - b;
    let w = T::one() - z;
    let first = gamma_ratio(cc, m, cc - a, cc - b)?
        .map(|coef| Ok::<_, Error>(hyp2f1_ln(a, b, T::one() - m, w)?.scale(coef.ln_abs, coef.sign)))
        .transpose()?
        .unwrap_or_else(SignedLog::zero);
    let second = gamma_ratio(cc, -m, a, b)?
        .map(|coef| {
            Ok::<_, Error>(
                hyp2f1_ln(cc - a, cc - b, T::one() + m, w)?.scale(coef.ln_abs + m * w.ln(), coef.sign),
            )
        })
        .transpose()?
        .unwrap_or_else(SignedLog::zero);
    Ok(first.add(second))
}

/// `Γ(n1) Γ(n2) / (Γ(d1) Γ(d2))`; `None` when a denominator sits on a pole.
fn gamma_ratio<T: Real>(n1: T, n2: T, d1: T, d2: T) -> Result<Option<SignedLog<T>>> {
    let num = |x: T| {
        ln_recip_gamma(x)
            .map(|(s, l)| (s, -l))
            .ok_or_else(|| Error::numerical("2F1 connection formula hit a pole of the gamma function"))
    };
    let (s1, l1) = num(n1)?;
    let (s2, l2) = num(n2)?;
    let (Some((s3, l3)), Some((s4, l4))) = (ln_recip_gamma(d1), ln_recip_gamma(d2)) else {
        return Ok(None);
    };
    Ok(Some(SignedLog { sign: s1 * s2 * s3 * s4, ln_abs: l1 + l2 + l3 + l4 }))
}

/// Sign and log-magnitude of `₂F₁(a, b; c; z)` for real parameters and `z <= 1`.
pub fn hyp2f1_ln<T: Real>(a: T, b: T, cc: T, z: T) -> Result<SignedLog<T>> {
    if !(a.is_finite() && b.is_finite() && cc.is_finite() && z.is_finite()) {
        return Err(Error::numerical("2F1 with non-finite argument"));
    }
    if z > T::one() {
        return Err(Error::numerical(format!("2F1 argument {z:?} > 1 is outside the supported domain")));
    }
    if z == T::zero() || a == T::zero() || b == T::zero() {
        return Ok(SignedLog { sign: T::one(), ln_abs: T::zero() });
    }
    let terminating = is_nonpositive_int(a) || is_nonpositive_int(b);
    if is_nonpositive_int(cc) {
        let degree = |v: T| if is_nonpositive_int(v) { -v } else { T::infinity() };
        if !(degree(a).min(degree(b)) < -cc + T::one()) {
            return Err(Error::numerical(format!("2F1 pole at c = {cc:?}")));
        }
    }
    if terminating {
        let out = series(a, b, cc, z, MAX_SERIES_TERMS)
            .ok_or_else(|| Error::numerical("terminating 2F1 series overflowed"))?;
        return Ok(out.value);
    }
    if z == T::one() {
        let m = cc - a - b;
        if m <= T::zero() {
            return Err(Error::numerical("2F1 diverges at z = 1 when c - a - b <= 0"));
        }
        let (s1, l1) = ln_recip_gamma(cc).map(|(s, l)| (s, -l)).ok_or_else(|| Error::numerical("pole"))?;
        let (s2, l2) = ln_recip_gamma(m).map(|(s, l)| (s, -l)).ok_or_else(|| Error::numerical("pole"))?;
        let r3 = ln_recip_gamma(cc - a);
        let r4 = ln_recip_gamma(cc - b);
        return Ok(match (r3, r4) {
            (Some((s3, l3)), Some((s4, l4))) => SignedLog { sign: s1 * s2 * s3 * s4, ln_abs: l1 + l2 + l3 + l4 },
            _ => SignedLog::zero(),
        });
    }
    if z < T::zero() {
        // Pfaff: (1-z)^(-a) 2F1(a, c-b; c; z/(z-1)); pick the variant with the
        // cheaper series and fall back to the other.
        let w = z / (z - T::one());
        let ln1mz = (T::one() - z).ln();
        let first = (a, cc - b);
        let second = (b, cc - a);
        let order = if series_cost(first.0, first.1, cc, w) <= series_cost(second.0, second.1, cc, w) {
            [first, second]
        } else {
            [second, first]
        };
        let mut last_err = None;
        for (p, q) in order {
            match hyp2f1_ln(p, q, cc, w) {
                Ok(v) => return Ok(v.scale(-p * ln1mz, T::one())),
                Err(e) => last_err = Some(e),
            }
        }
        return Err(last_err.unwrap_or_else(|| Error::numerical("2F1 failed")));
    }
    hyp2f1_positive(a, b, cc, z)
}

/// `₂F₁(a, b; c; z)` for real parameters and `z <= 1`.
pub fn hyp2f1<T: Real>(a: T, b: T, cc: T, z: T) -> Result<T> {
    let v = hyp2f1_ln(a, b, cc, z)?.value();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::numerical(format!("2F1({a:?}, {b:?}; {cc:?}; {z:?}) overflows")))
    }
}
