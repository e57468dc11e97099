//! Standard normal distribution functions with stable tails.

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;
const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;

/// Below this argument `ln Φ` switches to the scaled-tail formulation.
pub const LOG_CDF_TAIL_SWITCH: f64 = -8.0;

/// Standard normal density.
pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

/// Standard normal CDF `Φ(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// `ln Φ(x)`.
///
/// For `x < -8` this uses `Φ(x) = ½·exp(-x²/2)·erfcx(-x/√2)` so the result
/// stays finite long after `Φ(x)` itself underflows. The only way to get
/// `-∞` back is `x² ` overflowing, i.e. `x < -1.3e154`.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > 0.0 {
        // upper tail via a positive erfc argument, then ln(1 − q)
        (-0.5 * erfc(x * std::f64::consts::FRAC_1_SQRT_2)).ln_1p()
    } else if x >= LOG_CDF_TAIL_SWITCH {
        norm_cdf(x).ln()
    } else {
        let z = -x * std::f64::consts::FRAC_1_SQRT_2;
        -0.5 * x * x + (0.5 * erfcx_large(z)).ln()
    }
}

/// Scaled complementary error function `exp(z²)·erfc(z)` for `z ≳ 5`,
/// by backward evaluation of the Laplace continued fraction.
fn erfcx_large(z: f64) -> f64 {
    debug_assert!(z > 5.0);
    let mut t = z;
    for k in (1..=60).rev() {
        t = z + 0.5 * k as f64 / t;
    }
    FRAC_1_SQRT_PI / t
}

/// Inverse standard normal CDF.
pub fn norm_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

/// Numerically stable `ln Σ exp(xᵢ)`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
