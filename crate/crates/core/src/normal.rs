//! Standard normal helpers shared by the smoothing, model and estimator code.

use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

/// ln(√(2π))
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

#[inline]
pub fn pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * PI).sqrt())
}

#[inline]
pub fn ln_pdf(x: f64, mean: f64, sd: f64) -> f64 {
    let z = (x - mean) / sd;
    -0.5 * z * z - sd.ln() - LN_SQRT_2PI
}

/// Standard normal CDF.
#[inline]
pub fn cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / SQRT_2)
}

/// Standard normal quantile; `q` must lie in (0, 1).
///
/// The inverse error function is only good to about 1e-10, so one Newton
/// step against the full-precision CDF follows.
pub fn quantile(q: f64) -> f64 {
    let z = -SQRT_2 * erfc_inv(2.0 * q);
    let slope = pdf(z, 0.0, 1.0);
    if z.is_finite() && slope > 0.0 {
        z - (cdf(z) - q) / slope
    } else {
        z
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert!((pdf(0.0, 0.0, 1.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
        assert!((cdf(1.0) - 0.841_344_746_068_542_9).abs() < 1e-14);
        assert!((quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-14);
        assert!((cdf(-0.5) - 0.308_537_538_725_986_9).abs() < 1e-16);
        assert_eq!(quantile(0.5), 0.0);
        assert!((ln_pdf(0.3, 0.1, 2.0) - pdf(0.3, 0.1, 2.0).ln()).abs() < 1e-14);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for &z in &[-5.0, -2.5, -0.1, 0.0, 0.7, 3.0] {
            assert!((quantile(cdf(z)) - z).abs() < 1e-9, "z={z}");
        }
    }
}
