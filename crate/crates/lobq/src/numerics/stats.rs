//! Deterministic aggregation helpers for Monte Carlo experiments.
//!
//! Sums are pairwise so results do not depend on reduction order or thread
//! count, and standard errors come from path-level batching.

/// Pairwise (cascade) summation: O(log n) error growth, fixed association.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    pairwise_sum(xs) / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
    pairwise_sum(&sq) / (xs.len() - 1) as f64
}

#[derive(Debug, Clone, Copy)]
pub struct BatchEstimate {
    pub mean: f64,
    pub se: f64,
    pub batches: usize,
}

/// Mean and standard error from batch means over path-level values.
/// Uses at least `min_batches` batches (default caller passes 30).
pub fn batch_se(xs: &[f64], min_batches: usize) -> BatchEstimate {
    let n = xs.len();
    let b = min_batches.max(30).min(n.max(1));
    let m = mean(xs);
    if n < 2 * b {
        // too few points to batch meaningfully; fall back to iid SE
        let se = (variance(xs) / n as f64).sqrt();
        return BatchEstimate { mean: m, se, batches: n };
    }
    let per = n / b;
    let used = per * b;
    let batch_means: Vec<f64> = (0..b).map(|i| mean(&xs[i * per..(i + 1) * per])).collect();
    let _ = used;
    let bv = variance(&batch_means);
    BatchEstimate { mean: m, se: (bv / b as f64).sqrt(), batches: b }
}

/// Sample mean vector and covariance matrix of 6-dimensional rows.
pub fn mean_cov6(rows: &[[f64; 6]]) -> ([f64; 6], [[f64; 6]; 6]) {
    let n = rows.len();
    assert!(n >= 2);
    let mut means = [0.0f64; 6];
    for j in 0..6 {
        let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
        means[j] = mean(&col);
    }
    let mut cov = [[0.0f64; 6]; 6];
    for j in 0..6 {
        for k in j..6 {
            let prods: Vec<f64> =
                rows.iter().map(|r| (r[j] - means[j]) * (r[k] - means[k])).collect();
            let c = pairwise_sum(&prods) / (n - 1) as f64;
            cov[j][k] = c;
            cov[k][j] = c;
        }
    }
    (means, cov)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairwise_matches_naive_on_small_input() {
        let xs = [1.5, -2.25, 3.0, 0.125, 9.0];
        assert_eq!(pairwise_sum(&xs), 1.5 - 2.25 + 3.0 + 0.125 + 9.0);
    }

    #[test]
    fn batch_se_of_iid_uniform() {
        let mut s = crate::rng::Stream::new(17, 0);
        let xs: Vec<f64> = (0..30_000).map(|_| s.uniform()).collect();
        let est = batch_se(&xs, 30);
        // true SE = sqrt(1/12/n) ≈ 0.00167; batch estimate within a factor 2
        let true_se = (1.0 / 12.0f64 / 30_000.0).sqrt();
        assert!(est.se > 0.3 * true_se && est.se < 3.0 * true_se, "se {}", est.se);
        assert!((est.mean - 0.5).abs() < 6.0 * true_se);
    }
}
