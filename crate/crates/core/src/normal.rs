//! Standard normal distribution helpers.

use libm::erfc;
use statrs::function::erf::erfc_inv;
use std::f64::consts::{PI, SQRT_2};

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// P(Z ≤ x).
pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Upper tail P(Z ≥ x).
pub fn sf(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

/// Quantile function Φ⁻¹(u), accurate to ~1e-11 relative; used for sampling.
#[inline]
pub fn inv_cdf_fast(u: f64) -> f64 {
    -SQRT_2 * erfc_inv(2.0 * u)
}

/// Quantile function Φ⁻¹(u) for u ∈ (0, 1), polished by one Halley step.
pub fn inv_cdf(u: f64) -> f64 {
    if u > 0.5 {
        // 1 − u is exact here
        return -lower_quantile(1.0 - u);
    }
    lower_quantile(u)
}

fn lower_quantile(u: f64) -> f64 {
    let x = inv_cdf_fast(u);
    if !x.is_finite() {
        return x;
    }
    let e = cdf(x) - u;
    x - e / (pdf(x) + 0.5 * x * e)
}

/// Upper-tail quantile: the x with P(Z ≥ x) = q.
pub fn inv_sf(q: f64) -> f64 {
    -inv_cdf(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_quantiles() {
        assert!((inv_sf(0.1) - 1.281_551_565_544_600_4).abs() < 1e-12);
        assert!((inv_sf(0.05) - 1.644_853_626_951_472_9).abs() < 1e-12);
        assert!(inv_cdf(0.5).abs() < 1e-15);
    }

    #[test]
    fn inverse_round_trip() {
        for &u in &[1e-12, 1e-6, 0.01, 0.3, 0.5, 0.77, 0.999, 1.0 - 1e-9] {
            let x = inv_cdf(u);
            assert!((cdf(x) - u).abs() <= 1e-12 * u.max(1e-3), "u = {u}");
            assert!((sf(inv_sf(u)) - u).abs() <= 1e-12 * u.max(1e-3));
        }
    }
}
