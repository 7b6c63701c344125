//! Special functions: digamma and the Gaussian CDF / inverse CDF.

use crate::error::{Error, Result};
use crate::num::{lit, Real};

/// Digamma function ψ(x) for x > 0.
///
/// Uses the recurrence ψ(x) = ψ(x + 1) − 1/x to shift the argument to x ≥ 6
/// and then the asymptotic expansion in 1/x².
pub fn digamma<T: Real>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::DigammaDomain(x.to_f64().unwrap_or(f64::NAN)));
    }
    let mut x = x;
    let mut shift = T::zero();
    let six = lit::<T>(6.0);
    while x < six {
        shift += x.recip();
        x += T::one();
    }
    let inv2 = (x * x).recip();
    // Bernoulli-number coefficients B_2k / 2k for k = 1..7
    let series = inv2
        * (lit::<T>(1.0 / 12.0)
            - inv2
                * (lit::<T>(1.0 / 120.0)
                    - inv2
                        * (lit::<T>(1.0 / 252.0)
                            - inv2
                                * (lit::<T>(1.0 / 240.0)
                                    - inv2
                                        * (lit::<T>(1.0 / 132.0)
                                            - inv2 * (lit::<T>(691.0 / 32760.0) - inv2 * lit::<T>(1.0 / 12.0)))))));
    Ok(x.ln() - lit::<T>(0.5) / x - series - shift)
}

/// Standard normal CDF Φ(z).
#[inline]
pub fn std_normal_cdf<T: Real>(z: T) -> T {
    lit::<T>(0.5) * (-z / T::SQRT_2()).erfc()
}

/// Standard normal density φ(z).
#[inline]
pub fn std_normal_pdf<T: Real>(z: T) -> T {
    let inv_sqrt_2pi = lit::<T>(0.398_942_280_401_432_7);
    inv_sqrt_2pi * (-(z * z) / lit::<T>(2.0)).exp()
}

const ACKLAM_A: [f64; 6] = [
    -3.969_683_028_665_376e1,
    2.209_460_984_245_205e2,
    -2.759_285_104_469_687e2,
    1.383_577_518_672_69e2,
    -3.066_479_806_614_716e1,
    2.506_628_277_459_239,
];
const ACKLAM_B: [f64; 5] = [
    -5.447_609_879_822_406e1,
    1.615_858_368_580_409e2,
    -1.556_989_798_598_866e2,
    6.680_131_188_771_972e1,
    -1.328_068_155_288_572e1,
];
const ACKLAM_C: [f64; 6] = [
    -7.784_894_002_430_293e-3,
    -3.223_964_580_411_365e-1,
    -2.400_758_277_161_838,
    -2.549_732_539_343_734,
    4.374_664_141_464_968,
    2.938_163_982_698_783,
];
const ACKLAM_D: [f64; 4] = [
    7.784_695_709_041_462e-3,
    3.224_671_290_700_398e-1,
    2.445_134_137_142_996,
    3.754_408_661_907_416,
];
const P_LOW: f64 = 0.02425;

fn acklam(p: f64) -> f64 {
    let (a, b, c, d) = (ACKLAM_A, ACKLAM_B, ACKLAM_C, ACKLAM_D);
    if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5])
            / ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
            / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0)
    } else {
        -acklam(1.0 - p)
    }
}

/// Standard normal inverse CDF Φ⁻¹(p).
///
/// Rational approximation (relative error about 1e-9) followed by one Newton
/// step on Φ(x) − p. Returns ±∞ at the endpoints and NaN outside `[0, 1]`.
pub fn std_normal_inv_cdf<T: Real>(p: T) -> T {
    if p.is_nan() || p < T::zero() || p > T::one() {
        return T::nan();
    }
    if p == T::zero() {
        return T::neg_infinity();
    }
    if p == T::one() {
        return T::infinity();
    }
    let x: T = lit(acklam(p.to_f64().unwrap()));
    let density = std_normal_pdf(x);
    if density > T::zero() {
        x - (std_normal_cdf(x) - p) / density
    } else {
        x
    }
}

/// CDF of N(mean, std²) at `x`.
#[inline]
pub fn normal_cdf<T: Real>(x: T, mean: T, std: T) -> T {
    std_normal_cdf((x - mean) / std)
}

/// Inverse CDF of N(mean, std²).
#[inline]
pub fn normal_inv_cdf<T: Real>(p: T, mean: T, std: T) -> T {
    mean + std * std_normal_inv_cdf(p)
}
