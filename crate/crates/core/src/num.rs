//! Scalar abstraction shared by the numeric modules.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar the inference and sampling code is written against: f32 or f64.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Complementary error function.
    fn erfc(self) -> Self;
    /// `ln Γ(x)` for x > 0.
    fn ln_gamma(self) -> Self;
}

impl Real for f64 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfc(self)
    }
    #[inline]
    fn ln_gamma(self) -> Self {
        libm::lgamma(self)
    }
}

impl Real for f32 {
    #[inline]
    fn erfc(self) -> Self {
        libm::erfcf(self)
    }
    #[inline]
    fn ln_gamma(self) -> Self {
        libm::lgammaf(self)
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in scalar type")
}

/// Converts a count into `T`.
#[inline]
pub fn from_count<T: Real>(n: u64) -> T {
    T::from_u64(n).expect("count representable in scalar type")
}

/// Normalises non-negative weights in place. Returns false if they sum to zero.
pub fn normalize_in_place<T: Real>(weights: &mut [T]) -> bool {
    let total: T = weights.iter().copied().sum();
    if total <= T::zero() || !total.is_finite() {
        return false;
    }
    for w in weights.iter_mut() {
        *w /= total;
    }
    true
}

/// Turns unnormalised log-weights into a probability vector with max-subtraction.
pub fn softmax_from_logs<T: Real>(logs: &[T]) -> Vec<T> {
    let max = logs
        .iter()
        .copied()
        .fold(T::neg_infinity(), |acc, x| if x > acc { x } else { acc });
    if !max.is_finite() {
        let n = lit::<T>(logs.len() as f64);
        return vec![T::one() / n; logs.len()];
    }
    let mut out: Vec<T> = logs.iter().map(|&l| (l - max).exp()).collect();
    normalize_in_place(&mut out);
    out
}
