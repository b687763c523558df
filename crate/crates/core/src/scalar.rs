//! Scalar abstractions shared by the numerical modules.
//!
//! Two tiers are used:
//!
//! * [`Scalar`] needs only field arithmetic and ordering. Markov valuation,
//!   the promotion DP, Kaplan-Meier and the retention sums are written
//!   against it, so they run unchanged over `f64`, `f32` or an exact rational
//!   type such as `num_rational::Ratio<i64>`.
//! * [`Real`] adds the transcendental functions needed by the likelihoods,
//!   the hypergeometric series and the optimizer.

use std::fmt::Debug;

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// Ordered field element.
pub trait Scalar: Num + Copy + PartialOrd + FromPrimitive + Debug + 'static {
    fn abs_val(self) -> Self {
        if self < Self::zero() {
            Self::zero() - self
        } else {
            self
        }
    }

    fn max_val(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_val(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Lossy conversion for literals. Panics only if the type cannot
    /// represent ordinary finite constants, which no supported type does.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("scalar literal out of range")
    }

    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count out of range for scalar type")
    }

    /// Integer power by repeated squaring.
    fn pow_int(self, mut exp: u32) -> Self {
        let mut base = self;
        let mut acc = Self::one();
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base;
            }
            base = base * base;
            exp >>= 1;
        }
        acc
    }
}

impl<T> Scalar for T where T: Num + Copy + PartialOrd + FromPrimitive + Debug + 'static {}

/// Floating-point scalar.
pub trait Real: Scalar + Float + FloatConst + ToPrimitive + Send + Sync {}

impl<T> Real for T where T: Scalar + Float + FloatConst + ToPrimitive + Send + Sync {}

/// `ln(exp(a) + exp(b))` without overflow.
pub fn log_add_exp<T: Real>(a: T, b: T) -> T {
    if a == T::neg_infinity() {
        return b;
    }
    if b == T::neg_infinity() {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// `ln(exp(a) - exp(b))` for `a >= b`; `-inf` when they are equal.
pub fn log_sub_exp<T: Real>(a: T, b: T) -> T {
    if b == T::neg_infinity() {
        return a;
    }
    if b >= a {
        return T::neg_infinity();
    }
    a + (-(b - a).exp_m1()).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn pow_int_matches_repeated_multiplication() {
        let half = Ratio::new(1i64, 2);
        assert_eq!(half.pow_int(5), Ratio::new(1, 32));
        assert_eq!(3.0f64.pow_int(0), 1.0);
        assert_eq!(2.0f64.pow_int(10), 1024.0);
    }

    #[test]
    fn abs_and_extrema_work_for_rationals() {
        let a = Ratio::new(-3i64, 4);
        assert_eq!(a.abs_val(), Ratio::new(3, 4));
        assert_eq!(a.max_val(Ratio::new(1, 2)), Ratio::new(1, 2));
        assert_eq!(a.min_val(Ratio::new(1, 2)), a);
    }

    #[test]
    fn log_sum_helpers() {
        let a = 3.0f64.ln();
        let b = 2.0f64.ln();
        assert!((log_add_exp(a, b) - 5.0f64.ln()).abs() < 1e-15);
        assert!((log_sub_exp(a, b) - 0.0).abs() < 1e-15);
        assert_eq!(log_sub_exp(a, a), f64::NEG_INFINITY);
        assert_eq!(log_add_exp(f64::NEG_INFINITY, b), b);
        // large magnitudes
        assert!((log_add_exp(1000.0f64, 1000.0) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
