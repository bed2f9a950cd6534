//! Chi-squared and standard normal distribution kernels.
//!
//! The incomplete gamma function comes from `statrs` and the complementary
//! error function from `libm`; quantiles are solved here by safeguarded
//! Newton iteration.

use statrs::function::gamma::{gamma_lr, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

/// `P(χ²_r <= x)`. `χ²_0` is the point mass at zero.
pub fn chi2_cdf(r: u32, x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    if r == 0 {
        return if x >= 0.0 { 1.0 } else { 0.0 };
    }
    if x <= 0.0 {
        return 0.0;
    }
    if x == f64::INFINITY {
        return 1.0;
    }
    gamma_lr(r as f64 / 2.0, x / 2.0)
}

/// `P(χ²_r > x)`, computed directly for accuracy in the upper tail.
pub fn chi2_sf(r: u32, x: f64) -> f64 {
    if r == 0 {
        return if x >= 0.0 { 0.0 } else { 1.0 };
    }
    if x <= 0.0 {
        return 1.0;
    }
    if x == f64::INFINITY {
        return 0.0;
    }
    gamma_ur(r as f64 / 2.0, x / 2.0)
}

fn chi2_density(r: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = r as f64 / 2.0;
    ((k - 1.0) * x.ln() - x / 2.0 - k * std::f64::consts::LN_2 - ln_gamma(k)).exp()
}

/// The `p` quantile of `χ²_r`; returns 0 for `r = 0`.
pub fn chi2_quantile(r: u32, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("probability must lie in (0, 1), got {p}")));
    }
    if r == 0 {
        return Ok(0.0);
    }
    let rf = r as f64;
    // Wilson-Hilferty start.
    let z = normal_quantile(p)?;
    let h = 2.0 / (9.0 * rf);
    let mut q = rf * (1.0 - h + z * h.sqrt()).powi(3);
    if !(q > 0.0) {
        q = (p * (rf / 2.0) * (ln_gamma(rf / 2.0)).exp() * 2f64.powf(rf / 2.0)).powf(2.0 / rf).max(1e-300);
    }

    // Residual on the better-conditioned tail.
    let upper = p > 0.5;
    let residual = |x: f64| if upper { (1.0 - p) - chi2_sf(r, x) } else { chi2_cdf(r, x) - p };

    let (mut lo, mut hi) = (0.0_f64, f64::INFINITY);
    for _ in 0..200 {
        let f = residual(q);
        if f == 0.0 {
            return Ok(q);
        }
        if f < 0.0 {
            lo = lo.max(q);
        } else {
            hi = hi.min(q);
        }
        let dens = chi2_density(r, q);
        let mut next = if dens > 0.0 { q - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if hi.is_finite() { 0.5 * (lo + hi) } else { 2.0 * q.max(1.0) };
        }
        if (next - q).abs() <= 1e-15 * q.max(1e-300) {
            return Ok(next);
        }
        q = next;
    }
    Err(Error::Convergence(format!("chi-squared quantile r={r}, p={p}")))
}

/// Standard normal CDF; `normal_cdf(f64::INFINITY) == 1`.
pub fn normal_cdf(t: f64) -> f64 {
    if t == f64::INFINITY {
        return 1.0;
    }
    if t == f64::NEG_INFINITY {
        return 0.0;
    }
    0.5 * libm::erfc(-t / std::f64::consts::SQRT_2)
}

/// Standard normal quantile: Acklam's rational approximation followed by a
/// Halley correction step.
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("probability must lie in (0, 1), got {p}")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] =
        [7.784_695_709_041_462e-3, 3.224_671_290_700_398e-1, 2.445_134_137_142_996, 3.754_408_661_907_416];
    const P_LOW: f64 = 0.024_25;

    let x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    let mut x = x;
    for _ in 0..2 {
        // Work with the smaller tail so the residual keeps relative precision.
        let e = if x <= 0.0 { normal_cdf(x) - p } else { (1.0 - p) - normal_cdf(-x) };
        let u = e * (2.0 * std::f64::consts::PI).sqrt() * (x * x / 2.0).exp();
        x -= u / (1.0 + x * u / 2.0);
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn point_mass_convention() {
        assert_eq!(chi2_quantile(0, 0.95).unwrap(), 0.0);
        assert_eq!(chi2_cdf(0, 0.0), 1.0);
        assert_eq!(chi2_cdf(1, 0.0), 0.0);
    }

    #[test]
    fn two_degrees_closed_form() {
        let q = chi2_quantile(2, 0.95).unwrap();
        assert!((q - (-2.0 * 0.05_f64.ln())).abs() < 1e-12);
        assert!((q - 5.991_464_547).abs() < 1e-9);
        // 5.991464 is the quantile truncated to six decimals.
        assert!((chi2_cdf(2, 5.991464) - 0.95).abs() < 2e-8);
        for x in [0.1, 1.0, 3.0, 10.0] {
            assert!((chi2_cdf(2, x) - (1.0 - (-x / 2.0).exp())).abs() < 1e-14);
        }
    }

    #[test]
    fn quantile_domain() {
        assert!(chi2_quantile(3, 0.0).is_err());
        assert!(chi2_quantile(3, 1.0).is_err());
        assert!(normal_quantile(-0.1).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn normal_basics() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert_eq!(normal_cdf(f64::INFINITY), 1.0);
        assert_eq!(normal_cdf(f64::NEG_INFINITY), 0.0);
        for p in [1e-10, 0.001, 0.02, 0.3, 0.5, 0.7, 0.975, 0.999, 1.0 - 1e-9] {
            let x = normal_quantile(p).unwrap();
            assert!((normal_cdf(x) - p).abs() <= 1e-12 * p.max(1e-3), "p={p}");
        }
    }

    #[test]
    fn small_r_small_p() {
        let q = chi2_quantile(1, 1e-6).unwrap();
        assert!((chi2_cdf(1, q) - 1e-6).abs() < 1e-15);
        let q = chi2_quantile(10, 0.001).unwrap();
        assert!((chi2_cdf(10, q) - 0.001).abs() < 1e-14);
    }
}
