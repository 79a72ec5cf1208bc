//! The six-dimensional mark sequence {V_i} and its covariance objects.
//!
//! Order i carries a vector V_i with exactly one positive coordinate: the
//! event type j ∈ {bb, mbb, cbb, ba, mba, cba} is categorical with
//! probabilities p, and the size is drawn from that type's law. Marks are
//! i.i.d., so the long-run covariance sums collapse to single-order moments:
//!
//! ```text
//! V̄_j   = p_j E[size_j]
//! a_jj  = p_j E[s_j²] - V̄_j²          a_jk = -V̄_j V̄_k   (j ≠ k)
//! Σ Σᵀ  = a                            ψ_ij = Σ_k Σ_ik Σ_jk λ + V̄_i V̄_j v_d² λ^κ
//! ```
//!
//! with κ = 1 (`DiffusionTheorem`, the default) or κ = 3 (`LambdaCubed`); the
//! two conventions coincide at λ = 1 and the Monte Carlo harness arbitrates
//! between them elsewhere.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::matrix6::{
    cholesky_semidef, frobenius_norm, mat6_sub, mat6_zeros, max_asymmetry, mat6_mul_transpose,
    psd_clip, Mat6,
};
use crate::output::Json;
use crate::rng::Stream;

pub const ORDER_TYPES: [&str; 6] = ["bb", "mbb", "cbb", "ba", "mba", "cba"];

#[derive(Debug, Error)]
pub enum OrderFlowError {
    #[error("type probabilities must be nonnegative and sum to 1 (sum = {0})")]
    InvalidSimplex(f64),
    #[error("size law invalid: {0}")]
    InvalidSizeLaw(String),
    #[error("matrix not symmetric: max |a_ij - a_ji| = {0}")]
    Asymmetric(f64),
}

/// Marginal law of an order size, strictly positive with finite second moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case")]
pub enum SizeLaw {
    Constant { value: f64 },
    Exponential { mean: f64 },
    /// Geometric on {1, 2, ...} with the given mean (success prob 1/mean).
    GeometricInteger { mean: f64 },
    LogNormal { mu_ln: f64, sigma_ln: f64 },
}

impl SizeLaw {
    pub fn validate(&self) -> Result<(), OrderFlowError> {
        let ok = match *self {
            SizeLaw::Constant { value } => value > 0.0,
            SizeLaw::Exponential { mean } => mean > 0.0,
            SizeLaw::GeometricInteger { mean } => mean >= 1.0,
            SizeLaw::LogNormal { sigma_ln, .. } => sigma_ln >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(OrderFlowError::InvalidSizeLaw(format!("{self:?}")))
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            SizeLaw::Constant { value } => value,
            SizeLaw::Exponential { mean } => mean,
            SizeLaw::GeometricInteger { mean } => mean,
            SizeLaw::LogNormal { mu_ln, sigma_ln } => (mu_ln + 0.5 * sigma_ln * sigma_ln).exp(),
        }
    }

    pub fn second_moment(&self) -> f64 {
        match *self {
            SizeLaw::Constant { value } => value * value,
            SizeLaw::Exponential { mean } => 2.0 * mean * mean,
            SizeLaw::GeometricInteger { mean } => {
                // E[K²] = (2-p)/p² with p = 1/mean
                let p = 1.0 / mean;
                (2.0 - p) / (p * p)
            }
            SizeLaw::LogNormal { mu_ln, sigma_ln } => {
                (2.0 * mu_ln + 2.0 * sigma_ln * sigma_ln).exp()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.second_moment() - m * m
    }

    pub fn sample(&self, rng: &mut Stream) -> f64 {
        match *self {
            SizeLaw::Constant { value } => value,
            SizeLaw::Exponential { mean } => rng.exp(1.0 / mean),
            SizeLaw::GeometricInteger { mean } => rng.geometric(1.0 / mean) as f64,
            SizeLaw::LogNormal { mu_ln, sigma_ln } => (mu_ln + sigma_ln * rng.normal()).exp(),
        }
    }

    /// Supremum of the MGF's domain of finiteness.
    pub fn mgf_domain_sup(&self) -> f64 {
        match *self {
            SizeLaw::Constant { .. } => f64::INFINITY,
            SizeLaw::Exponential { mean } => 1.0 / mean,
            SizeLaw::GeometricInteger { mean } => -(1.0 - 1.0 / mean).ln(),
            SizeLaw::LogNormal { .. } => 0.0,
        }
    }

    /// E[e^(θ s)]; +∞ outside the domain of finiteness.
    pub fn mgf(&self, theta: f64) -> f64 {
        match *self {
            SizeLaw::Constant { value } => (theta * value).exp(),
            SizeLaw::Exponential { mean } => {
                if theta < 1.0 / mean {
                    1.0 / (1.0 - mean * theta)
                } else {
                    f64::INFINITY
                }
            }
            SizeLaw::GeometricInteger { mean } => {
                let p = 1.0 / mean;
                let q = 1.0 - p;
                let w = theta.exp();
                if q * w < 1.0 {
                    p * w / (1.0 - q * w)
                } else {
                    f64::INFINITY
                }
            }
            SizeLaw::LogNormal { mu_ln, sigma_ln } => {
                if theta > 0.0 {
                    f64::INFINITY
                } else if theta == 0.0 {
                    1.0
                } else {
                    lognormal_mgf_moment(mu_ln, sigma_ln, theta, 0)
                }
            }
        }
    }

    /// d/dθ E[e^(θ s)] = E[s e^(θ s)].
    pub fn mgf_d1(&self, theta: f64) -> f64 {
        match *self {
            SizeLaw::Constant { value } => value * (theta * value).exp(),
            SizeLaw::Exponential { mean } => {
                let d = 1.0 - mean * theta;
                if d > 0.0 {
                    mean / (d * d)
                } else {
                    f64::INFINITY
                }
            }
            SizeLaw::GeometricInteger { mean } => {
                let p = 1.0 / mean;
                let q = 1.0 - p;
                let w = theta.exp();
                let d = 1.0 - q * w;
                if d > 0.0 {
                    p * w / (d * d)
                } else {
                    f64::INFINITY
                }
            }
            SizeLaw::LogNormal { mu_ln, sigma_ln } => {
                if theta > 0.0 {
                    f64::INFINITY
                } else {
                    lognormal_mgf_moment(mu_ln, sigma_ln, theta, 1)
                }
            }
        }
    }

    /// d²/dθ² E[e^(θ s)] = E[s² e^(θ s)].
    pub fn mgf_d2(&self, theta: f64) -> f64 {
        match *self {
            SizeLaw::Constant { value } => value * value * (theta * value).exp(),
            SizeLaw::Exponential { mean } => {
                let d = 1.0 - mean * theta;
                if d > 0.0 {
                    2.0 * mean * mean / (d * d * d)
                } else {
                    f64::INFINITY
                }
            }
            SizeLaw::GeometricInteger { mean } => {
                let p = 1.0 / mean;
                let q = 1.0 - p;
                let w = theta.exp();
                let d = 1.0 - q * w;
                if d > 0.0 {
                    p * w / (d * d) + 2.0 * p * q * w * w / (d * d * d)
                } else {
                    f64::INFINITY
                }
            }
            SizeLaw::LogNormal { mu_ln, sigma_ln } => {
                if theta > 0.0 {
                    f64::INFINITY
                } else {
                    lognormal_mgf_moment(mu_ln, sigma_ln, theta, 2)
                }
            }
        }
    }
}

/// E[s^k e^(θ s)] for lognormal s, θ ≤ 0, by quadrature in z = log s.
fn lognormal_mgf_moment(mu_ln: f64, sigma_ln: f64, theta: f64, k: i32) -> f64 {
    if sigma_ln == 0.0 {
        let s = mu_ln.exp();
        return s.powi(k) * (theta * s).exp();
    }
    let f = |z: f64| {
        let s = (mu_ln + sigma_ln * z).exp();
        s.powi(k) * (theta * s).exp() * crate::numerics::normal::norm_pdf(z)
    };
    crate::numerics::quad::adaptive_quad(&f, -12.0, 12.0, 1e-13, 1e-11).value
}

/// Categorical-mixture mark model: i.i.d. draws, one positive coordinate
/// each. Serial dependence between orders is out of scope here; the
/// covariance objects in [`FlowMoments`] are already stored as full
/// matrices, so a dependent sequence would only change how
/// [`long_run_covariance`] fills them in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkModel {
    pub type_probabilities: [f64; 6],
    pub sizes: [SizeLaw; 6],
}

impl MarkModel {
    pub fn new(type_probabilities: [f64; 6], sizes: [SizeLaw; 6]) -> Result<Self, OrderFlowError> {
        let model = MarkModel { type_probabilities, sizes };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), OrderFlowError> {
        let sum: f64 = self.type_probabilities.iter().sum();
        if self.type_probabilities.iter().any(|&p| p < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(OrderFlowError::InvalidSimplex(sum));
        }
        for law in &self.sizes {
            law.validate()?;
        }
        Ok(())
    }

    /// Uniform type probabilities with constant sizes 6·V̄_j, reproducing a
    /// prescribed mean vector exactly.
    pub fn constant_sizes_for_mean(vbar: [f64; 6]) -> Result<Self, OrderFlowError> {
        let sizes = [
            SizeLaw::Constant { value: 6.0 * vbar[0] },
            SizeLaw::Constant { value: 6.0 * vbar[1] },
            SizeLaw::Constant { value: 6.0 * vbar[2] },
            SizeLaw::Constant { value: 6.0 * vbar[3] },
            SizeLaw::Constant { value: 6.0 * vbar[4] },
            SizeLaw::Constant { value: 6.0 * vbar[5] },
        ];
        MarkModel::new([1.0 / 6.0; 6], sizes)
    }

    /// Draw one mark: (type index, raw size).
    pub fn sample_one(&self, rng: &mut Stream) -> (usize, f64) {
        let j = rng.categorical(&self.type_probabilities);
        (j, self.sizes[j].sample(rng))
    }
}

/// Mean vector V̄ with V̄_j = p_j E\[size_j\].
pub fn mean_vector(model: &MarkModel) -> [f64; 6] {
    let mut v = [0.0; 6];
    for j in 0..6 {
        v[j] = model.type_probabilities[j] * model.sizes[j].mean();
    }
    v
}

/// I.i.d. sample of `count` mark vectors.
pub fn sample_marks(model: &MarkModel, count: usize, seed: u64) -> Result<Vec<[f64; 6]>, OrderFlowError> {
    model.validate()?;
    let mut rng = Stream::new(seed, 0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let (j, s) = model.sample_one(&mut rng);
        let mut v = [0.0; 6];
        v[j] = s;
        out.push(v);
    }
    Ok(out)
}

/// Long-run per-order covariance structure (v², ρ, a). For i.i.d. marks the
/// serial-covariance tails vanish and these are single-order moments.
pub fn long_run_covariance(model: &MarkModel) -> ([f64; 6], Mat6, Mat6) {
    let p = &model.type_probabilities;
    let vbar = mean_vector(model);
    let mut a = mat6_zeros();
    for j in 0..6 {
        for k in 0..6 {
            a[j][k] = if j == k {
                p[j] * model.sizes[j].second_moment() - vbar[j] * vbar[j]
            } else {
                -vbar[j] * vbar[k]
            };
        }
    }
    let mut v2 = [0.0; 6];
    for j in 0..6 {
        v2[j] = a[j][j];
    }
    let mut rho = mat6_zeros();
    for j in 0..6 {
        for k in 0..6 {
            let denom = (v2[j] * v2[k]).sqrt();
            rho[j][k] = if j == k {
                if v2[j] > 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else if denom > 0.0 {
                a[j][k] / denom
            } else {
                0.0
            };
        }
    }
    (v2, rho, a)
}

/// Lower-triangular Σ with Σ Σᵀ = a, after clipping negative eigenvalues at
/// zero. Returns (Σ, clipped mass); callers should treat clipped mass above
/// 1e-8 · trace as a data problem.
pub fn sigma_factor(a: &Mat6) -> Result<(Mat6, f64), OrderFlowError> {
    let asym = max_asymmetry(a);
    if asym > 1e-10 {
        return Err(OrderFlowError::Asymmetric(asym));
    }
    // symmetrize exactly before factoring
    let mut sym = *a;
    for i in 0..6 {
        for j in (i + 1)..6 {
            let s = 0.5 * (sym[i][j] + sym[j][i]);
            sym[i][j] = s;
            sym[j][i] = s;
        }
    }
    let (repaired, clipped) = psd_clip(&sym);
    let trace: f64 = (0..6).map(|i| sym[i][i]).sum();
    let l = cholesky_semidef(&repaired, 1e-14 * trace.max(1.0));
    Ok((l, clipped))
}

/// Which power of λ multiplies the v_d² V̄ V̄ᵀ term of ψ.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiConvention {
    /// ψ_ij = Σ_k Σ_ik Σ_jk λ + V̄_i V̄_j v_d² λ  (default)
    #[default]
    DiffusionTheorem,
    /// ψ_ij = Σ_k Σ_ik Σ_jk λ + V̄_i V̄_j v_d² λ³
    LambdaCubed,
}

/// ψ matrix of the centered-flow Brownian limit.
pub fn psi_matrix(
    sigma: &Mat6,
    vbar: &[f64; 6],
    vd2: f64,
    lambda: f64,
    convention: PsiConvention,
) -> Mat6 {
    let lam_pow = match convention {
        PsiConvention::DiffusionTheorem => lambda,
        PsiConvention::LambdaCubed => lambda * lambda * lambda,
    };
    let mut psi = mat6_zeros();
    for i in 0..6 {
        for j in 0..6 {
            let mut s = 0.0;
            for k in 0..6 {
                s += sigma[i][k] * sigma[j][k];
            }
            psi[i][j] = s * lambda + vbar[i] * vbar[j] * vd2 * lam_pow;
        }
    }
    psi
}

/// Everything the limit theorems need about the order flow, bundled.
#[derive(Debug, Clone)]
pub struct FlowMoments {
    pub vbar: [f64; 6],
    pub v2: [f64; 6],
    pub rho: Mat6,
    pub a: Mat6,
    pub sigma: Mat6,
    pub psi: Mat6,
    pub lambda: f64,
    pub vd2: f64,
    pub convention: PsiConvention,
    pub sigma_clipped_mass: f64,
}

impl FlowMoments {
    pub fn compute(
        model: &MarkModel,
        lambda: f64,
        vd2: f64,
        convention: PsiConvention,
    ) -> Result<FlowMoments, OrderFlowError> {
        model.validate()?;
        let vbar = mean_vector(model);
        let (v2, rho, a) = long_run_covariance(model);
        let (sigma, clipped) = sigma_factor(&a)?;
        debug_assert!(
            frobenius_norm(&mat6_sub(&mat6_mul_transpose(&sigma), &a))
                <= 1e-12 * frobenius_norm(&a).max(1.0)
        );
        let psi = psi_matrix(&sigma, &vbar, vd2, lambda, convention);
        Ok(FlowMoments {
            vbar,
            v2,
            rho,
            a,
            sigma,
            psi,
            lambda,
            vd2,
            convention,
            sigma_clipped_mass: clipped,
        })
    }

    pub fn to_json(&self) -> Json {
        let mut o = Json::obj();
        o.push("vbar", Json::num_array(&self.vbar));
        o.push("v2", Json::num_array(&self.v2));
        o.push("rho", Json::matrix(&self.rho));
        o.push("a", Json::matrix(&self.a));
        o.push("sigma", Json::matrix(&self.sigma));
        o.push("psi", Json::matrix(&self.psi));
        o.push("lambda", Json::Num(self.lambda));
        o.push("vd2", Json::Num(self.vd2));
        o
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix6::mat6_identity;

    fn uniform_unit_marks() -> MarkModel {
        MarkModel::new([1.0 / 6.0; 6], std::array::from_fn(|_| SizeLaw::Constant { value: 1.0 }))
            .unwrap()
    }

    #[test]
    fn degenerate_categorical() {
        let model = MarkModel::new(
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            std::array::from_fn(|_| SizeLaw::Constant { value: 4.0 }),
        )
        .unwrap();
        let marks = sample_marks(&model, 1, 7).unwrap();
        assert_eq!(marks[0], [4.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn empty_sample() {
        let marks = sample_marks(&uniform_unit_marks(), 0, 1).unwrap();
        assert!(marks.is_empty());
    }

    #[test]
    fn invalid_simplex_rejected() {
        let r = MarkModel::new(
            [0.5, 0.5, 0.5, 0.0, 0.0, 0.0],
            std::array::from_fn(|_| SizeLaw::Constant { value: 1.0 }),
        );
        assert!(matches!(r, Err(OrderFlowError::InvalidSimplex(_))));
    }

    #[test]
    fn empirical_type_frequencies() {
        // direct counting oracle: each coordinate mean within 0.002 of 1/6
        let marks = sample_marks(&uniform_unit_marks(), 1_000_000, 99).unwrap();
        for j in 0..6 {
            let mean = marks.iter().map(|v| v[j]).sum::<f64>() / marks.len() as f64;
            assert!((mean - 1.0 / 6.0).abs() < 0.002, "coordinate {j}: {mean}");
        }
    }

    #[test]
    fn mean_vector_cases() {
        let m = uniform_unit_marks();
        assert_eq!(mean_vector(&m), [1.0 / 6.0; 6]);

        // exponential sizes scaled by categorical probabilities; the raw
        // weights (0.25, 0.15, 0.20, ...) sum to 1.2 so they are renormalized
        // and the size mean is scaled up to compensate
        let probs = [0.25 / 1.2, 0.15 / 1.2, 0.20 / 1.2, 0.25 / 1.2, 0.15 / 1.2, 0.20 / 1.2];
        let model = MarkModel::new(
            probs,
            std::array::from_fn(|_| SizeLaw::Exponential { mean: 4.8 }),
        )
        .unwrap();
        let v = mean_vector(&model);
        let expect = [1.0, 0.6, 0.8, 1.0, 0.6, 0.8];
        for j in 0..6 {
            assert!((v[j] - expect[j]).abs() < 1e-14);
        }

        // constant-size construction reproducing an arbitrary mean exactly
        let target = [1.0, 0.6, 0.8, 1.0, 0.7, 0.8];
        let model = MarkModel::constant_sizes_for_mean(target).unwrap();
        let v = mean_vector(&model);
        for j in 0..6 {
            assert!((v[j] - target[j]).abs() < 1e-15);
        }

        let single = MarkModel::new(
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            std::array::from_fn(|_| SizeLaw::Exponential { mean: 2.0 }),
        )
        .unwrap();
        assert_eq!(mean_vector(&single)[0], 2.0);
    }

    #[test]
    fn covariance_uniform_unit() {
        // Bernoulli-indicator algebra: a_jj = 5/36, a_jk = -1/36
        let (v2, rho, a) = long_run_covariance(&uniform_unit_marks());
        for j in 0..6 {
            assert!((v2[j] - 5.0 / 36.0).abs() < 1e-15);
            assert!((rho[j][j] - 1.0).abs() < 1e-15);
            for k in 0..6 {
                if j != k {
                    assert!((a[j][k] + 1.0 / 36.0).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn covariance_uniform_unit_empirical() {
        // empirical covariance over 1e6 samples within 5 MC standard errors
        let marks = sample_marks(&uniform_unit_marks(), 1_000_000, 11).unwrap();
        let (_, cov) = crate::numerics::stats::mean_cov6(&marks);
        // SE of a Bernoulli((1/6)) variance estimate is about 4e-4
        for j in 0..6 {
            assert!((cov[j][j] - 5.0 / 36.0).abs() < 5.0 * 4e-4, "{}", cov[j][j]);
            for k in 0..6 {
                if j != k {
                    assert!((cov[j][k] + 1.0 / 36.0).abs() < 5.0 * 3e-4);
                }
            }
        }
    }

    #[test]
    fn covariance_degenerate_cases() {
        let constant = MarkModel::new(
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            std::array::from_fn(|_| SizeLaw::Constant { value: 3.0 }),
        )
        .unwrap();
        let (_, _, a) = long_run_covariance(&constant);
        for row in &a {
            for &x in row {
                assert_eq!(x, 0.0);
            }
        }

        let exp1 = MarkModel::new(
            [1.0, 0.0, 0.0, 0.0, 0.0, 0.0],
            std::array::from_fn(|_| SizeLaw::Exponential { mean: 1.0 }),
        )
        .unwrap();
        let (_, _, a) = long_run_covariance(&exp1);
        assert!((a[0][0] - 1.0).abs() < 1e-15);
        for (j, row) in a.iter().enumerate() {
            for (k, &x) in row.iter().enumerate() {
                if (j, k) != (0, 0) {
                    assert_eq!(x, 0.0);
                }
            }
        }
    }

    #[test]
    fn sigma_factor_identity_and_diag() {
        let (s, clipped) = sigma_factor(&mat6_identity()).unwrap();
        assert_eq!(clipped, 0.0);
        for i in 0..6 {
            for j in 0..6 {
                assert!((s[i][j] - if i == j { 1.0 } else { 0.0 }).abs() < 1e-14);
            }
        }

        let mut d = mat6_zeros();
        d[0][0] = 4.0;
        d[1][1] = 1.0;
        let (s, _) = sigma_factor(&d).unwrap();
        assert!((s[0][0] - 2.0).abs() < 1e-14);
        assert!((s[1][1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_factor_roundtrip() {
        let (_, _, a) = long_run_covariance(&uniform_unit_marks());
        let (s, clipped) = sigma_factor(&a).unwrap();
        // a is singular (rows sum to 0) so tiny clipping is acceptable
        assert!(clipped < 1e-12);
        let back = mat6_mul_transpose(&s);
        assert!(frobenius_norm(&mat6_sub(&back, &a)) < 1e-12 * frobenius_norm(&a).max(1.0));
    }

    #[test]
    fn sigma_factor_rejects_asymmetric() {
        let mut a = mat6_identity();
        a[0][1] = 0.5;
        assert!(matches!(sigma_factor(&a), Err(OrderFlowError::Asymmetric(_))));
    }

    #[test]
    fn psi_uniform_unit_poisson() {
        // λ = 1, v_d² = 1: ψ_jj = 5/36 + 1/36 = 1/6, off-diagonals cancel
        let m = FlowMoments::compute(&uniform_unit_marks(), 1.0, 1.0, PsiConvention::DiffusionTheorem)
            .unwrap();
        for j in 0..6 {
            assert!((m.psi[j][j] - 1.0 / 6.0).abs() < 1e-12, "{}", m.psi[j][j]);
            for k in 0..6 {
                if j != k {
                    assert!(m.psi[j][k].abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn psi_conventions_disagree_for_lambda_2() {
        let sigma = mat6_zeros();
        let vbar = [1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let cubed = psi_matrix(&sigma, &vbar, 1.0, 2.0, PsiConvention::LambdaCubed);
        let diff = psi_matrix(&sigma, &vbar, 1.0, 2.0, PsiConvention::DiffusionTheorem);
        assert!((cubed[0][0] - 8.0).abs() < 1e-14);
        assert!((diff[0][0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn psi_zero_inputs() {
        let psi = psi_matrix(&mat6_zeros(), &[0.0; 6], 1.0, 1.0, PsiConvention::DiffusionTheorem);
        assert!(psi.iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn size_law_moments_against_samples() {
        let laws = [
            SizeLaw::Exponential { mean: 2.5 },
            SizeLaw::GeometricInteger { mean: 4.0 },
            SizeLaw::LogNormal { mu_ln: 0.2, sigma_ln: 0.5 },
        ];
        let mut rng = Stream::new(55, 3);
        for law in &laws {
            let n = 400_000;
            let xs: Vec<f64> = (0..n).map(|_| law.sample(&mut rng)).collect();
            let m = crate::numerics::stats::mean(&xs);
            let sd = (law.variance() / n as f64).sqrt();
            assert!((m - law.mean()).abs() < 5.0 * sd, "{law:?}: {m} vs {}", law.mean());
        }
    }

    #[test]
    fn lognormal_mgf_by_quadrature() {
        // θ < 0 only; spot value against direct Monte Carlo
        let law = SizeLaw::LogNormal { mu_ln: 0.0, sigma_ln: 0.5 };
        assert_eq!(law.mgf(0.5), f64::INFINITY);
        let theta = -0.7;
        let quad = law.mgf(theta);
        let mut rng = Stream::new(4, 0);
        let n = 500_000;
        let mc: f64 =
            (0..n).map(|_| (theta * law.sample(&mut rng)).exp()).sum::<f64>() / n as f64;
        assert!((quad - mc).abs() < 5e-3, "{quad} vs {mc}");
    }

    #[test]
    fn moments_json_has_declared_keys() {
        let m = FlowMoments::compute(&uniform_unit_marks(), 1.0, 1.0, PsiConvention::default())
            .unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&m.to_json().render()).unwrap();
        for key in ["vbar", "v2", "rho", "a", "sigma", "psi", "lambda", "vd2"] {
            assert!(parsed.get(key).is_some(), "missing {key}");
        }
    }
}
