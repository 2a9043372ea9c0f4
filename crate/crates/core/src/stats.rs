//! Small statistics toolbox: log-gamma, exact binomial tails and intervals,
//! Wilson score intervals, the normal CDF, and log-sum-exp.
//!
//! Binomial tails are computed in log space so that probabilities far below
//! f64's subnormal range still come out with a usable logarithm.

use crate::error::{Error, Result};

/// Lanczos approximation (g = 7, 9 terms), accurate to ~1e-13 relative.
/// For x < 0.5 the reflection formula is used and the log of |Gamma(x)|
/// is returned.
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        // Reflection formula.
        let pi = std::f64::consts::PI;
        (pi / (pi * x).sin().abs()).ln() - ln_gamma(1.0 - x)
    } else {
        let x = x - 1.0;
        let mut acc = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            acc += c / (x + i as f64);
        }
        let t = x + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
    }
}

/// ln C(n, k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0)
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::Domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(())
}

/// ln P(X = k) for X ~ Binomial(n, p).
pub fn binomial_log_pmf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_p(p)?;
    if k > n {
        return Ok(f64::NEG_INFINITY);
    }
    if p == 0.0 {
        return Ok(if k == 0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if p == 1.0 {
        return Ok(if k == n { 0.0 } else { f64::NEG_INFINITY });
    }
    let k_f = k as f64;
    let n_f = n as f64;
    Ok(ln_choose(n, k) + k_f * p.ln() + (n_f - k_f) * (-p).ln_1p())
}

/// ln P(X <= k), exact summation in log space.
pub fn binomial_log_cdf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_p(p)?;
    if k >= n {
        // Full support: exactly 1 regardless of summation roundoff.
        return Ok(0.0);
    }
    let terms: Vec<f64> =
        (0..=k).map(|j| binomial_log_pmf(j, n, p)).collect::<Result<_>>()?;
    Ok(logsumexp(&terms))
}

/// ln P(X >= k).
pub fn binomial_log_sf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_p(p)?;
    if k == 0 {
        return Ok(0.0);
    }
    if k > n {
        return Ok(f64::NEG_INFINITY);
    }
    let terms: Vec<f64> =
        (k..=n).map(|j| binomial_log_pmf(j, n, p)).collect::<Result<_>>()?;
    Ok(logsumexp(&terms))
}

/// Exact lower-tail test probability P(X <= k) under Binomial(n, p).
pub fn binomial_test_lower(k: u64, n: u64, p: f64) -> Result<f64> {
    Ok(binomial_log_cdf(k, n, p)?.exp())
}

/// Exact upper-tail test probability P(X >= k) under Binomial(n, p).
pub fn binomial_test_upper(k: u64, n: u64, p: f64) -> Result<f64> {
    Ok(binomial_log_sf(k, n, p)?.exp())
}

/// Smallest equal-tailed interval [lo, hi] with
/// P(X < lo) <= (1-mass)/2 and P(X > hi) <= (1-mass)/2.
pub fn binomial_central_interval(n: u64, p: f64, mass: f64) -> Result<(u64, u64)> {
    check_p(p)?;
    if !(0.0 < mass && mass < 1.0) {
        return Err(Error::Domain(format!("interval mass {mass} outside (0, 1)")));
    }
    let tail = 0.5 * (1.0 - mass);
    let ln_tail = tail.ln();
    let mut lo = 0;
    for k in 0..=n {
        // First k whose CDF strictly exceeds the lower tail mass.
        if binomial_log_cdf(k, n, p)? > ln_tail {
            lo = k;
            break;
        }
    }
    let mut hi = n;
    for k in (0..=n).rev() {
        if binomial_log_sf(k, n, p)? > ln_tail {
            hi = k;
            break;
        }
    }
    Ok((lo, hi))
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, n: u64, z: f64) -> Result<(f64, f64)> {
    if n == 0 {
        return Err(Error::Domain("wilson interval needs n > 0".into()));
    }
    if successes > n {
        return Err(Error::Domain(format!("successes {successes} > trials {n}")));
    }
    if !(z > 0.0 && z.is_finite()) {
        return Err(Error::Domain(format!("z must be positive, got {z}")));
    }
    let n_f = n as f64;
    let p_hat = successes as f64 / n_f;
    let z2 = z * z;
    let denom = 1.0 + z2 / n_f;
    let center = (p_hat + z2 / (2.0 * n_f)) / denom;
    let hw = z * (p_hat * (1.0 - p_hat) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / denom;
    Ok(((center - hw).max(0.0), (center + hw).min(1.0)))
}

/// Standard normal CDF via an Abramowitz-Stegun rational approximation of
/// erf (absolute error below 1.5e-7).
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * (1.0 + erf(z / std::f64::consts::SQRT_2))
}

fn erf(x: f64) -> f64 {
    let sign = if x < 0.0 { -1.0 } else { 1.0 };
    let x = x.abs();
    let t = 1.0 / (1.0 + 0.327_591_1 * x);
    let poly = t
        * (0.254_829_592
            + t * (-0.284_496_736 + t * (1.421_413_741 + t * (-1.453_152_027 + t * 1.061_405_429))));
    sign * (1.0 - poly * (-x * x).exp())
}

/// ln(sum exp(v_i)); negative infinity for an empty slice.
pub fn logsumexp(vals: &[f64]) -> f64 {
    let m = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Sample mean.
pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (n - 1 denominator).
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_gamma_matches_factorials_and_reflection() {
        let mut fact = 1.0f64;
        for n in 1..=20u64 {
            // ln Gamma(n+1) = ln n!
            fact *= n as f64;
            assert!(
                (ln_gamma(n as f64 + 1.0) - fact.ln()).abs() < 1e-10 * fact.ln().abs().max(1.0),
                "n = {n}"
            );
        }
        let sqrt_pi = std::f64::consts::PI.sqrt();
        assert!((ln_gamma(0.5) - sqrt_pi.ln()).abs() < 1e-12);
        // Gamma(-0.5) = -2 sqrt(pi); ln of its magnitude via reflection.
        assert!((ln_gamma(-0.5) - (2.0 * sqrt_pi).ln()).abs() < 1e-10);
    }

    /// Exact binomial pmf for small n using integer coefficients.
    fn exact_pmf(k: u64, n: u64, p: f64) -> f64 {
        let mut c = 1.0f64;
        for j in 0..k {
            c = c * (n - j) as f64 / (j + 1) as f64;
        }
        c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32)
    }

    #[test]
    fn binomial_pmf_and_tails_match_direct_summation() {
        let n = 20;
        let p = 0.23;
        let mut cdf = 0.0;
        for k in 0..=n {
            let pmf = binomial_log_pmf(k, n, p).unwrap().exp();
            let exact = exact_pmf(k, n, p);
            assert!((pmf - exact).abs() < 1e-12, "pmf k={k}: {pmf} vs {exact}");
            cdf += exact;
            let got = binomial_log_cdf(k, n, p).unwrap().exp();
            assert!((got - cdf).abs() < 1e-10, "cdf k={k}");
            let sf: f64 = (k..=n).map(|j| exact_pmf(j, n, p)).sum();
            let got_sf = binomial_log_sf(k, n, p).unwrap().exp();
            assert!((got_sf - sf).abs() < 1e-10, "sf k={k}");
        }
        assert!((cdf - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rare_event_tail_stays_in_log_space() {
        // P(X = 0) for n = 150000, p = 1/5000 is about 9.3e-14; its log is
        // n ln(1 - p) = -30.003.
        let lp = binomial_log_pmf(0, 150_000, 1.0 / 5000.0).unwrap();
        assert!((lp - 150_000.0 * (1.0 - 1.0 / 5000.0f64).ln()).abs() < 1e-9);
        assert!((lp + 30.003).abs() < 1e-2, "lp = {lp}");
        let p0 = binomial_test_lower(0, 150_000, 1.0 / 5000.0).unwrap();
        assert!((p0 / 9.3e-14 - 1.0).abs() < 0.01, "p0 = {p0}");
    }

    #[test]
    fn central_interval_has_requested_coverage() {
        let n = 3200;
        let p = 1.0 / 16.0;
        let (lo, hi) = binomial_central_interval(n, p, 0.999).unwrap();
        assert!(lo < hi);
        // Interval must straddle the mean and hold at least the mass.
        let mean = n as f64 * p;
        assert!((lo as f64) < mean && mean < hi as f64);
        let inside: f64 = (lo..=hi).map(|k| binomial_log_pmf(k, n, p).unwrap().exp()).sum();
        assert!(inside >= 0.999, "coverage {inside}");
        // Each tail individually within its budget.
        if lo > 0 {
            assert!(binomial_log_cdf(lo - 1, n, p).unwrap().exp() <= 0.0005 + 1e-12);
        }
        assert!(binomial_log_sf(hi + 1, n, p).unwrap().exp() <= 0.0005 + 1e-12);
    }

    #[test]
    fn wilson_interval_known_value() {
        let (lo, hi) = wilson_interval(10, 100, 1.96).unwrap();
        assert!((lo - 0.05523).abs() < 1e-4, "lo = {lo}");
        assert!((hi - 0.17437).abs() < 1e-4, "hi = {hi}");
        // Degenerate counts stay inside [0, 1].
        let (lo, hi) = wilson_interval(0, 50, 1.96).unwrap();
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.12);
        let (lo, hi) = wilson_interval(50, 50, 1.96).unwrap();
        assert!(lo > 0.88 && lo < 1.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn normal_cdf_anchors() {
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-9);
        assert!((normal_cdf(1.96) - 0.975_002).abs() < 1e-5);
        assert!((normal_cdf(-1.0) - 0.158_655).abs() < 1e-5);
        assert!(normal_cdf(8.0) > 1.0 - 1e-14);
    }

    #[test]
    fn logsumexp_basics() {
        let v = [2.0f64.ln(), 3.0f64.ln()];
        assert!((logsumexp(&v) - 5.0f64.ln()).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
        // Extreme offsets cancel.
        let v = [-1000.0 + 2.0f64.ln(), -1000.0 + 3.0f64.ln()];
        assert!((logsumexp(&v) - (-1000.0 + 5.0f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn mean_and_variance() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert!((mean(&xs) - 2.5).abs() < 1e-15);
        assert!((sample_variance(&xs) - 5.0 / 3.0).abs() < 1e-12);
        assert!(mean(&[]).is_nan());
        assert!(sample_variance(&[1.0]).is_nan());
    }

    #[test]
    fn invalid_arguments_rejected() {
        assert!(binomial_log_pmf(1, 10, -0.1).is_err());
        assert!(binomial_log_pmf(1, 10, 1.5).is_err());
        assert!(binomial_central_interval(10, 0.5, 0.0).is_err());
        assert!(binomial_central_interval(10, 0.5, 1.0).is_err());
        assert!(wilson_interval(5, 0, 1.96).is_err());
        assert!(wilson_interval(5, 4, 1.96).is_err());
        assert!(wilson_interval(1, 4, 0.0).is_err());
    }
}
