//! Kolmogorov–Smirnov statistic and asymptotic p-values.

/// Two-sided KS statistic of a sample against a reference CDF.
/// The sample slice is sorted in place.
pub fn ks_statistic<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> f64 {
    assert!(!sample.is_empty());
    sample.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sample.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sample.iter().enumerate() {
        let f = cdf(x);
        d = d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    d
}

/// Survival function of the Kolmogorov distribution,
/// Q(x) = 2 Σ_{k≥1} (-1)^(k-1) e^(-2 k² x²), with the theta-function form
/// for small x. Accurate to well below 1e-10.
pub fn kolmogorov_sf(x: f64) -> f64 {
    assert!(x >= 0.0, "kolmogorov_sf: negative argument");
    if x < 1e-8 {
        return 1.0;
    }
    if x < 1.0 {
        // F(x) = sqrt(2π)/x Σ_{k≥1} exp(-(2k-1)² π² / (8x²))
        let mut sum = 0.0;
        for k in 1..200u32 {
            let m = (2 * k - 1) as f64;
            let term = (-m * m * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp();
            sum += term;
            if term < 1e-16 * sum.max(1e-300) {
                break;
            }
        }
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * sum
    } else {
        let mut sum = 0.0;
        for k in 1..200u32 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * x * x).exp();
            sum += if k % 2 == 1 { term } else { -term };
            if term < 1e-14 * sum.abs().max(1e-300) {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for a sample of size n with statistic d.
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    kolmogorov_sf(d * (n as f64).sqrt())
}
