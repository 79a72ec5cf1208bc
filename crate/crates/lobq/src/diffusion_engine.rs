//! Second-order (diffusion) analytics for the queue pair and order position.
//!
//! The centered queue pair converges to a correlated planar Brownian motion
//! with drift μ = λ·A·V̄ and covariance σσᵀ = A·ψ·Aᵀ. After whitening by
//! σ = [[σ₁√(1-ρ²), σ₁ρ], [0, σ₂]] the positive quadrant becomes the wedge
//! 0 < θ < α, and first-passage quantities come out of Bessel series:
//!
//! * survival P(ι > t) — zero-drift Bessel series over odd harmonics, or the
//!   Girsanov-tilted double integral for nonzero drift;
//! * price-decrease P(ι_b < ι_a) — θ₀/α at zero drift, otherwise a double
//!   integral against the boundary-hitting density;
//! * σ_Y²(t) — variance of the Gaussian fluctuation of the order position
//!   around its fluid limit, via the closed form and an independent
//!   integrating-factor quadrature (the quadrature is the reference route);
//! * limiting CDFs of execution-time and depletion-time fluctuations.

use thiserror::Error;

use crate::fluid_engine::{FluidParams, FluidSolution};
use crate::numerics::bessel::bessel_i_scaled;
use crate::numerics::matrix6::Mat6;
use crate::numerics::normal::{norm_cdf, norm_sf};
use crate::numerics::quad::adaptive_quad;
use crate::order_flow::FlowMoments;
use crate::output::Json;

const A_MATRIX: [[f64; 6]; 2] =
    [[1.0, -1.0, -1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 0.0, 1.0, -1.0, -1.0]];

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("covariance not positive definite: eigenvalue {0}")]
    NotPositiveDefinite(f64),
    #[error("correlation out of range: rho = {0}")]
    CorrelationOutOfRange(f64),
    #[error("series did not converge within {cap} terms: partial sum {partial}, last term {last}")]
    SeriesNonConvergence { cap: usize, partial: f64, last: f64 },
    #[error("closed form needs c < 0 and c ≠ -1 (got c = {0}); use the quadrature mode")]
    BranchViolation(f64),
    #[error("side does not deplete (net outflow {0} <= 0)")]
    NonDepletingSide(f64),
    #[error("quadrature failed to meet tolerance: achieved error estimate {estimate}")]
    QuadratureFailure { estimate: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
}

/// Drift, covariance, and wedge geometry of the diffusion limit.
#[derive(Debug, Clone)]
pub struct DiffusionParams {
    pub mu: [f64; 2],
    pub cov: [[f64; 2]; 2],
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    /// wedge angle of the whitened quadrant
    pub alpha: f64,
    /// initial radius in whitened polar coordinates
    pub r0: f64,
    /// initial angle, 0 < θ₀ < α
    pub theta0: f64,
    pub qb: f64,
    pub qa: f64,
    pub psi: Mat6,
    pub lambda: f64,
}

/// Build the diffusion parameters from the flow moments and initial queues.
pub fn derive_diffusion_params(
    moments: &FlowMoments,
    qb: f64,
    qa: f64,
) -> Result<DiffusionParams, DiffusionError> {
    if !(qb > 0.0 && qa > 0.0) {
        return Err(DiffusionError::InvalidParams(format!("qb = {qb}, qa = {qa}")));
    }
    let lambda = moments.lambda;
    let mut mu = [0.0f64; 2];
    for (i, row) in A_MATRIX.iter().enumerate() {
        mu[i] = lambda * row.iter().zip(moments.vbar.iter()).map(|(a, v)| a * v).sum::<f64>();
    }
    // σσᵀ = A ψ Aᵀ
    let mut cov = [[0.0f64; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            let mut s = 0.0;
            for k in 0..6 {
                for l in 0..6 {
                    s += A_MATRIX[i][k] * moments.psi[k][l] * A_MATRIX[j][l];
                }
            }
            cov[i][j] = s;
        }
    }
    // 2×2 eigenvalues for the PD check
    let tr = cov[0][0] + cov[1][1];
    let det = cov[0][0] * cov[1][1] - cov[0][1] * cov[1][0];
    let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
    let eig_min = 0.5 * tr - disc;
    if eig_min <= 0.0 {
        return Err(DiffusionError::NotPositiveDefinite(eig_min));
    }
    let sigma1 = cov[0][0].sqrt();
    let sigma2 = cov[1][1].sqrt();
    let rho = cov[0][1] / (sigma1 * sigma2);
    if !(-1.0 < rho && rho < 1.0) {
        return Err(DiffusionError::CorrelationOutOfRange(rho));
    }
    let root = (1.0 - rho * rho).sqrt();
    // wedge angle: the image of the Q_b = 0 boundary under whitening
    let alpha = root.atan2(-rho);
    let u = qb / sigma1;
    let v = qa / sigma2;
    let r0 = ((u * u + v * v - 2.0 * rho * u * v) / (1.0 - rho * rho)).sqrt();
    let theta0 = (v * root).atan2(u - rho * v);
    debug_assert!(theta0 > 0.0 && theta0 < alpha);
    Ok(DiffusionParams {
        mu,
        cov,
        sigma1,
        sigma2,
        rho,
        alpha,
        r0,
        theta0,
        qb,
        qa,
        psi: moments.psi,
        lambda,
    })
}

impl DiffusionParams {
    pub fn is_zero_drift(&self) -> bool {
        let scale = self.sigma1 + self.sigma2;
        self.mu[0].abs() <= 1e-14 * scale && self.mu[1].abs() <= 1e-14 * scale
    }

    /// Mirror bid and ask: exchanges the roles of the two boundaries,
    /// mapping θ₀ to α - θ₀.
    pub fn swapped(&self) -> DiffusionParams {
        let mut out = self.clone();
        out.mu = [self.mu[1], self.mu[0]];
        out.cov = [[self.cov[1][1], self.cov[1][0]], [self.cov[0][1], self.cov[0][0]]];
        out.sigma1 = self.sigma2;
        out.sigma2 = self.sigma1;
        out.qb = self.qa;
        out.qa = self.qb;
        out.theta0 = self.alpha - self.theta0;
        out
    }

    /// Girsanov constants of the drifted first-passage formulas.
    fn drift_constants(&self) -> DriftConstants {
        let (s1, s2, rho) = (self.sigma1, self.sigma2, self.rho);
        let (m1, m2) = (self.mu[0], self.mu[1]);
        let omr = 1.0 - rho * rho;
        let l1 = (-m1 * s2 + rho * m2 * s1) / (omr * s1 * s1 * s2);
        let l2 = (rho * m1 * s2 - m2 * s1) / (omr * s2 * s2 * s1);
        let l3 = 0.5 * l1 * l1 * s1 * s1
            + rho * l1 * l2 * s1 * s2
            + 0.5 * l2 * l2 * s2 * s2
            + l1 * m1
            + l2 * m2;
        let l4 = l1 * s1 + rho * l2 * s2;
        let l5 = l2 * s2 * omr.sqrt();
        DriftConstants { l1, l2, l3, l4, l5 }
    }

    /// Whitened drift κ = σ⁻¹μ and whitened start x₀ = σ⁻¹(q_b, q_a).
    fn whitened(&self) -> ([f64; 2], [f64; 2]) {
        let (s1, s2, rho) = (self.sigma1, self.sigma2, self.rho);
        let root = (1.0 - rho * rho).sqrt();
        let kappa = [
            (self.mu[0] / s1 - rho * self.mu[1] / s2) / root,
            self.mu[1] / s2,
        ];
        let x0 = [(self.qb / s1 - rho * self.qa / s2) / root, self.qa / s2];
        (kappa, x0)
    }

    /// Perpendicular distances from the start point to the two wedge rays
    /// (line distance, a lower bound on ray distance for angles past π/2).
    fn wall_distances(&self) -> (f64, f64) {
        let d1 = self.r0 * self.theta0.min(std::f64::consts::FRAC_PI_2).sin();
        let d2 = self.r0 * (self.alpha - self.theta0).min(std::f64::consts::FRAC_PI_2).sin();
        (d1, d2)
    }
}

struct DriftConstants {
    l1: f64,
    l2: f64,
    l3: f64,
    l4: f64,
    l5: f64,
}

/// Survival value plus the sub-probability caveat: with a drift component
/// pushing away from the boundary, P(ι > t) includes the event {ι = ∞}.
#[derive(Debug, Clone, Copy)]
pub struct Survival {
    pub value: f64,
    pub includes_never_hit: bool,
}

/// Reflection bound on P(ι ≤ t) for the zero-drift whitened process.
fn exit_probability_bound(params: &DiffusionParams, t: f64) -> f64 {
    let (d1, d2) = params.wall_distances();
    2.0 * (norm_sf(d1 / t.sqrt()) + norm_sf(d2 / t.sqrt()))
}

/// P(ι > t): first-passage survival of the whitened wedge process.
pub fn survival_probability(
    params: &DiffusionParams,
    t: f64,
    series_tol: f64,
) -> Result<Survival, DiffusionError> {
    let value = if params.is_zero_drift() {
        survival_probability_zero_drift(params, t, series_tol)?
    } else {
        survival_probability_drifted(params, t, series_tol)?
    };
    Ok(Survival {
        value,
        includes_never_hit: params.mu[0] > 0.0 || params.mu[1] > 0.0,
    })
}

/// Zero-drift survival: odd-harmonic Bessel series.
pub fn survival_probability_zero_drift(
    params: &DiffusionParams,
    t: f64,
    series_tol: f64,
) -> Result<f64, DiffusionError> {
    if !(t > 0.0) {
        return Err(DiffusionError::InvalidParams(format!("t = {t}")));
    }
    // tiny-t short circuit: the series would need harmonics beyond the cap,
    // but a reflection bound certifies the value to far below tolerance
    let bound = exit_probability_bound(params, t);
    if bound < 1e-13 {
        return Ok(1.0 - bound);
    }
    let (alpha, theta0, r0) = (params.alpha, params.theta0, params.r0);
    let w = r0 * r0 / (4.0 * t);
    let pref = 2.0 * r0 / (2.0 * std::f64::consts::PI * t).sqrt();
    let mut sum = 0.0f64;
    let mut small_streak = 0;
    let cap = 200usize;
    let mut last_term = f64::INFINITY;
    for k in 0..cap {
        let n = (2 * k + 1) as f64;
        let nu = n * std::f64::consts::PI / alpha;
        let term = (n * std::f64::consts::PI * theta0 / alpha).sin() / n
            * (bessel_i_scaled(0.5 * (nu - 1.0), w) + bessel_i_scaled(0.5 * (nu + 1.0), w));
        sum += term;
        last_term = term.abs();
        if last_term <= series_tol * sum.abs().max(1e-300) {
            small_streak += 1;
            if small_streak >= 2 {
                return Ok((pref * sum).clamp(0.0, 1.0));
            }
        } else {
            small_streak = 0;
        }
    }
    Err(DiffusionError::SeriesNonConvergence { cap, partial: pref * sum, last: last_term })
}

/// Drifted survival: Girsanov-tilted series with nested radial and angular
/// quadrature. Reduces to the zero-drift branch when μ = 0.
pub fn survival_probability_drifted(
    params: &DiffusionParams,
    t: f64,
    series_tol: f64,
) -> Result<f64, DiffusionError> {
    if !(t > 0.0) {
        return Err(DiffusionError::InvalidParams(format!("t = {t}")));
    }
    let lc = params.drift_constants();
    let (alpha, theta0, r0) = (params.alpha, params.theta0, params.r0);
    // small-t guard: zero-drift reflection bound, inflated by the worst-case
    // Girsanov tilt over the window
    let bound = exit_probability_bound(params, t);
    if bound < 1e-16 {
        let tilt = ((lc.l4.abs() + lc.l5.abs()) * 3.0 * r0 + lc.l3.abs() * t).exp();
        if bound * tilt < 1e-13 {
            return Ok(1.0 - bound * tilt);
        }
    }

    let r_max = r0 + (lc.l4.abs() + lc.l5.abs()) * t + 9.0 * (2.0 * t).sqrt() + 1.0;
    let pref = 2.0 / (alpha * t) * (lc.l1 * params.qb + lc.l2 * params.qa + lc.l3 * t).exp();
    let mut sum = 0.0f64;
    let mut small_streak = 0;
    let cap = 60usize;
    let mut last_term = f64::INFINITY;
    for k in 0..cap {
        let n = (k + 1) as f64;
        let nu = n * std::f64::consts::PI / alpha;
        // Θ_n = ∫_0^α sin(nπθ/α) ∫_0^∞ r e^{-(r-r0)²/2t + l₄ r sin(θ-α) - l₅ r cos(θ-α)} Î_ν(r r0/t) dr dθ
        let angular = adaptive_quad(
            &|theta: f64| {
                let s = (theta - alpha).sin();
                let c = (theta - alpha).cos();
                let radial = adaptive_quad(
                    &|r: f64| {
                        let expo = -(r - r0) * (r - r0) / (2.0 * t) + lc.l4 * r * s - lc.l5 * r * c;
                        r * expo.exp() * bessel_i_scaled(nu, r * r0 / t)
                    },
                    0.0,
                    r_max,
                    1e-12 * (1.0 + r0 * r0),
                    1e-10,
                );
                (n * std::f64::consts::PI * theta / alpha).sin() * radial.value
            },
            0.0,
            alpha,
            1e-12,
            1e-9,
        );
        let term = (n * std::f64::consts::PI * theta0 / alpha).sin() * angular.value;
        sum += term;
        last_term = term.abs();
        if last_term <= series_tol * sum.abs().max(1e-300) {
            small_streak += 1;
            if small_streak >= 3 {
                return Ok((pref * sum).clamp(0.0, 1.0));
            }
        } else {
            small_streak = 0;
        }
    }
    Err(DiffusionError::SeriesNonConvergence { cap, partial: pref * sum, last: last_term })
}

/// P(ι_b < ι_a): probability the bid queue depletes first (price decrease).
pub fn price_decrease_probability(
    params: &DiffusionParams,
    quad_tol: f64,
) -> Result<Survival, DiffusionError> {
    if params.is_zero_drift() {
        return Ok(Survival {
            value: params.theta0 / params.alpha,
            includes_never_hit: false,
        });
    }
    let value = price_decrease_drifted(params, quad_tol)?;
    Ok(Survival { value, includes_never_hit: params.mu[0] > 0.0 || params.mu[1] > 0.0 })
}

/// Boundary-hitting density of the zero-drift wedge process on the ray
/// θ = α (the image of the depleted-bid boundary), tilted by the Girsanov
/// factor for drift κ and integrated over (t, r).
fn price_decrease_drifted(params: &DiffusionParams, quad_tol: f64) -> Result<f64, DiffusionError> {
    let (kappa, x0) = params.whitened();
    let (alpha, theta0, r0) = (params.alpha, params.theta0, params.r0);
    let kappa2 = kappa[0] * kappa[0] + kappa[1] * kappa[1];
    if kappa2 < 1e-28 {
        return Ok(theta0 / alpha);
    }
    let (d1, d2) = params.wall_distances();
    let d = d1.min(d2);
    // prune the time axis: mass below t_lo is controlled by the reflection
    // bound, mass beyond t_hi by the e^{-|κ|² t/2} factor
    let mut t_lo = d * d / 80.0;
    while exit_probability_bound(params, t_lo) > 1e-12 && t_lo > 1e-300 {
        t_lo *= 0.5;
    }
    let t_hi = (80.0 / kappa2).max(40.0 * (r0 * r0 + 1.0));
    let exit_sin = alpha.sin();
    let exit_cos = alpha.cos();

    let time_integrand = |lt: f64| {
        let t = lt.exp();
        let r_max = r0 + (kappa[0].abs() + kappa[1].abs()) * t + 9.0 * (2.0 * t).sqrt() + 1.0;
        let radial = adaptive_quad(
            &|r: f64| {
                if r <= 0.0 {
                    return 0.0;
                }
                let series = bessel_series_weighted(alpha, theta0, r * r0 / t);
                let g = std::f64::consts::PI / (alpha * alpha * t * r)
                    * (-(r - r0) * (r - r0) / (2.0 * t)).exp()
                    * series;
                let tilt = kappa[0] * (r * exit_cos - x0[0]) + kappa[1] * (r * exit_sin - x0[1])
                    - 0.5 * kappa2 * t;
                g * tilt.exp()
            },
            0.0,
            r_max,
            1e-12,
            1e-9,
        );
        radial.value * t // Jacobian of t = e^lt
    };
    let tol = quad_tol.max(1e-10);
    let result = adaptive_quad(&time_integrand, t_lo.ln(), t_hi.ln(), tol, 1e-8);
    if result.error > 100.0 * tol.max(1e-8 * result.value.abs()) {
        return Err(DiffusionError::QuadratureFailure { estimate: result.error });
    }
    Ok(result.value.clamp(0.0, 1.0))
}

/// Σ_{n≥1} n sin(nπ(α-θ₀)/α) Î_{nπ/α}(x), truncated adaptively.
fn bessel_series_weighted(alpha: f64, theta0: f64, x: f64) -> f64 {
    let mut sum = 0.0f64;
    let mut small = 0;
    for k in 0..220usize {
        let n = (k + 1) as f64;
        let nu = n * std::f64::consts::PI / alpha;
        let term =
            n * (n * std::f64::consts::PI * (alpha - theta0) / alpha).sin() * bessel_i_scaled(nu, x);
        sum += term;
        if term.abs() <= 1e-14 * sum.abs().max(1e-300) {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
    }
    sum
}

// ---------------------------------------------------------------------------
// Fluctuation variance σ_Y²(t) of the order position around its fluid limit
// ---------------------------------------------------------------------------

/// Which route evaluates σ_Y²(t).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaYMode {
    /// Closed form; needs c < 0, c ≠ -1.
    ClosedForm,
    /// Integrating-factor quadrature (the reference route).
    Quadrature,
}

/// Shared geometry of the Y-process integrals.
struct SigmaYContext {
    lam: f64,
    v3: f64,
    a: f64,
    b: f64,
    c: f64,
    z0: f64,
    /// bid-side ψ entries driving the quadratic variation of Y
    p22: f64,
    p33: f64,
    p23: f64,
    /// ψ₂₂+ψ₂₃-ψ₁₂ and ψ₃₃+ψ₂₃-ψ₁₃ cross-covariance combinations
    coef_a: f64,
    coef_b: f64,
    /// φ = ψ₁₁+ψ₂₂+ψ₃₃-2ψ₁₂-2ψ₁₃+2ψ₂₃
    varphi: f64,
    tau: f64,
}

impl SigmaYContext {
    fn new(fluid: &FluidParams, psi: &Mat6) -> Result<SigmaYContext, DiffusionError> {
        fluid.validate().map_err(|e| DiffusionError::InvalidParams(e.to_string()))?;
        if fluid.vbar[2] <= 0.0 {
            return Err(DiffusionError::InvalidParams(
                "fluctuation variance needs V̄₃ > 0".into(),
            ));
        }
        let sol = FluidSolution::new(fluid.clone())
            .map_err(|e| DiffusionError::InvalidParams(e.to_string()))?;
        let varphi = psi[0][0] + psi[1][1] + psi[2][2] - 2.0 * psi[0][1] - 2.0 * psi[0][2]
            + 2.0 * psi[1][2];
        Ok(SigmaYContext {
            lam: fluid.lambda,
            v3: fluid.vbar[2],
            a: fluid.coeff_a(),
            b: fluid.coeff_b(),
            c: fluid.coeff_c(),
            z0: fluid.z0,
            p22: psi[1][1],
            p33: psi[2][2],
            p23: psi[1][2],
            coef_a: psi[1][1] + psi[1][2] - psi[0][1],
            coef_b: psi[2][2] + psi[1][2] - psi[0][2],
            varphi,
            tau: sol.tau,
        })
    }

    /// exp(-∫_s^t λV̄₃/Q^b(u) du) = ((b+cs)/(b+ct))^(1/c).
    fn efac(&self, s: f64, t: f64) -> f64 {
        if self.c.abs() < 1e-8 {
            (-(t - s) / self.b).exp()
        } else {
            ((self.b + self.c * s) / (self.b + self.c * t)).powf(1.0 / self.c)
        }
    }

    /// Q^b(s) = λV̄₃(b + cs).
    fn qb(&self, s: f64) -> f64 {
        self.lam * self.v3 * (self.b + self.c * s)
    }

    /// Z(s)/Q^b(s) for the uniform-cancellation fluid solution.
    fn zeta(&self, s: f64) -> f64 {
        let z = if self.c.abs() < 1e-8 {
            (self.z0 + self.a * self.b) * (-s / self.b).exp() - self.a * self.b
        } else if (self.c + 1.0).abs() < 1e-8 {
            let rem = self.b - s;
            rem * (self.z0 / self.b + self.a * (rem / self.b).ln())
        } else {
            let bcs = self.b + self.c * s;
            -self.a / (1.0 + self.c) * bcs
                + (self.z0 + self.a * self.b / (1.0 + self.c)) * (self.b / bcs).powf(1.0 / self.c)
        };
        (z / self.qb(s)).max(0.0)
    }

    /// E[Y(s)(Ψ¹-Ψ²-Ψ³)(s)] by quadrature over the inner integral.
    fn cross_term(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        let f = |u: f64| {
            let e = self.efac(u, s);
            e * (self.coef_a
                + self.coef_b * self.zeta(u)
                + self.varphi * self.lam * self.v3 * self.zeta(u) * u / self.qb(u))
        };
        adaptive_quad(&f, 0.0, s, 1e-11 * (1.0 + self.z0), 1e-10).value
    }
}

/// σ_Y²(t), the variance of the limiting Gaussian fluctuation of the order
/// position, for t < τ^z.
pub fn fluctuation_variance(
    fluid: &FluidParams,
    moments: &FlowMoments,
    t: f64,
    mode: SigmaYMode,
) -> Result<f64, DiffusionError> {
    fluctuation_variance_psi(fluid, &moments.psi, t, mode)
}

/// Same as [`fluctuation_variance`] but with an explicit ψ matrix.
pub fn fluctuation_variance_psi(
    fluid: &FluidParams,
    psi: &Mat6,
    t: f64,
    mode: SigmaYMode,
) -> Result<f64, DiffusionError> {
    if t < 0.0 {
        return Err(DiffusionError::InvalidParams(format!("t = {t}")));
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    let ctx = SigmaYContext::new(fluid, psi)?;
    if t > ctx.tau {
        return Err(DiffusionError::InvalidParams(format!(
            "t = {t} beyond the fluid horizon τ = {}",
            ctx.tau
        )));
    }
    match mode {
        SigmaYMode::Quadrature => Ok(sigma_y2_quadrature(&ctx, t)),
        SigmaYMode::ClosedForm => {
            // c near 0 is just as degenerate for the closed form as c ≥ 0
            if ctx.c >= 0.0 || ctx.c.abs() < 1e-8 || (ctx.c + 1.0).abs() < 1e-8 {
                return Err(DiffusionError::BranchViolation(ctx.c));
            }
            Ok(sigma_y2_closed_form(&ctx, t))
        }
    }
}

/// Reference route: integrating-factor representation
/// σ_Y²(t) = ∫ E²(ψ₂₂ + 2ζψ₂₃ + ζ²ψ₃₃) + 2 ∫ E² ζ/Q^b λV̄₃ E[Y(Ψ¹-Ψ²-Ψ³)].
fn sigma_y2_quadrature(ctx: &SigmaYContext, t: f64) -> f64 {
    let direct = adaptive_quad(
        &|s: f64| {
            let e = ctx.efac(s, t);
            let zt = ctx.zeta(s);
            e * e * (ctx.p22 + zt * (2.0 * ctx.p23 + zt * ctx.p33))
        },
        0.0,
        t,
        1e-10 * (1.0 + ctx.z0),
        1e-10,
    );
    let feedback = adaptive_quad(
        &|s: f64| {
            let e = ctx.efac(s, t);
            e * e * 2.0 * ctx.zeta(s) / ctx.qb(s) * ctx.lam * ctx.v3 * ctx.cross_term(s)
        },
        0.0,
        t,
        1e-9 * (1.0 + ctx.z0),
        1e-9,
    );
    direct.value + feedback.value
}

/// Closed form, written in terms of the ψ entries (the per-coordinate Σ-sums
/// collapse onto ψ exactly).
fn sigma_y2_closed_form(ctx: &SigmaYContext, t: f64) -> f64 {
    let (a, b, c) = (ctx.a, ctx.b, ctx.c);
    let lv3 = ctx.lam * ctx.v3;
    let bct = b + c * t;
    let x = -a / ((1.0 + c) * lv3);
    let zs = ctx.z0 + a * b / (1.0 + c);

    // direct part (the three quadratic-variation integrals in closed form)
    let t1 = (bct.powf(2.0 / c + 1.0) - b.powf(2.0 / c + 1.0)) / ((2.0 + c) * bct.powf(2.0 / c))
        * (ctx.p22 + x * (2.0 * ctx.p23 + x * ctx.p33));
    let t2 = b.powf(1.0 / c) / lv3 * (bct.powf(1.0 / c) - b.powf(1.0 / c)) / bct.powf(2.0 / c)
        * zs
        * 2.0
        * (ctx.p23 + x * ctx.p33);
    let t3 = t / bct.powf(2.0 / c + 1.0) * b.powf(2.0 / c - 1.0) / (lv3 * lv3) * ctx.p33 * zs * zs;

    // feedback part: E[Y(Ψ¹-Ψ²-Ψ³)](s) = â(b+cs) + b̂(b+cs)^{-1/c}
    //   + ĉ log(b+cs)/(b+cs)^{1/c} + d̂ + ê(b+cs)^{-1/c-1}
    let alpha_c = ctx.coef_a + ctx.coef_b * x - a * ctx.varphi / (c * (1.0 + c) * lv3);
    let beta_c =
        ctx.coef_b * zs * b.powf(1.0 / c) / lv3 + zs * ctx.varphi * b.powf(1.0 / c) / (c * lv3);
    let gamma_c = a * b * ctx.varphi / (c * (1.0 + c) * lv3);
    let delta_c = -ctx.varphi * zs * b.powf(1.0 / c + 1.0) / (c * lv3);

    let hat_a = alpha_c / (c + 1.0);
    let hat_b = -alpha_c * b.powf(1.0 / c + 1.0) / (1.0 + c) - gamma_c * b.powf(1.0 / c)
        + delta_c / (b * c)
        - beta_c * b.ln() / c;
    let hat_g = beta_c / c;
    let hat_d = gamma_c;
    let hat_e = -delta_c / c;

    let t4 = -2.0 * a / (bct.powf(2.0 / c) * (1.0 + c) * lv3)
        * (hat_a * (bct.powf(2.0 / c + 1.0) - b.powf(2.0 / c + 1.0)) / (2.0 + c)
            + (hat_b - hat_g * c) * (bct.powf(1.0 / c) - b.powf(1.0 / c))
            + hat_g * (bct.powf(1.0 / c) * bct.ln() - b.powf(1.0 / c) * b.ln())
            + 0.5 * hat_d * (bct.powf(2.0 / c) - b.powf(2.0 / c))
            + hat_e / (1.0 - c) * (bct.powf(1.0 / c - 1.0) - b.powf(1.0 / c - 1.0)));
    let t5 = 2.0 / bct.powf(2.0 / c) * zs * b.powf(1.0 / c) / lv3
        * (hat_a * (bct.powf(1.0 / c) - b.powf(1.0 / c))
            + (hat_b + hat_g) * t / (b * bct)
            + hat_g / c * (b.ln() / b - bct.ln() / bct)
            + hat_d / (1.0 - c) * (bct.powf(1.0 / c - 1.0) - b.powf(1.0 / c - 1.0))
            + hat_e / (2.0 * c) * (b.powi(-2) - bct.powi(-2)));

    t1 + t2 + t3 + t4 + t5
}

/// (closed form, quadrature) pair for reporting.
pub fn fluctuation_variance_compare(
    fluid: &FluidParams,
    moments: &FlowMoments,
    t: f64,
) -> Result<(f64, f64), DiffusionError> {
    let quad = fluctuation_variance(fluid, moments, t, SigmaYMode::Quadrature)?;
    let closed = fluctuation_variance(fluid, moments, t, SigmaYMode::ClosedForm)?;
    Ok((closed, quad))
}

// ---------------------------------------------------------------------------
// Limiting hitting-time fluctuation CDFs
// ---------------------------------------------------------------------------

/// lim P(√n(τ_n^z − τ^z) ≥ x) = 1 − Φ(a·x/σ_Y(τ^z)); uses Z'(τ^z) = -a.
pub fn execution_time_fluct_cdf(
    fluid: &FluidParams,
    sigma_y_at_tau: f64,
    x: f64,
) -> Result<f64, DiffusionError> {
    let a = fluid.coeff_a();
    if !(a > 0.0) {
        return Err(DiffusionError::InvalidParams(format!(
            "execution-time fluctuation needs a = λV̄₂ > 0, got {a}"
        )));
    }
    if !(sigma_y_at_tau > 0.0) {
        return Err(DiffusionError::InvalidParams(format!("sigma_Y = {sigma_y_at_tau}")));
    }
    Ok(1.0 - norm_cdf(a * x / sigma_y_at_tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Bid,
    Ask,
}

/// lim P(√n(τ_n − τ) ≥ x) for the depletion time of one side.
pub fn depletion_time_fluct_cdf(
    side: Side,
    fluid: &FluidParams,
    psi: &Mat6,
    x: f64,
) -> Result<f64, DiffusionError> {
    let (q0, v, combo) = match side {
        Side::Bid => (
            fluid.qb0,
            fluid.vb(),
            psi[0][0] + psi[1][1] + psi[2][2] - 2.0 * psi[0][1] - 2.0 * psi[0][2] + 2.0 * psi[1][2],
        ),
        Side::Ask => (
            fluid.qa0,
            fluid.va(),
            psi[3][3] + psi[4][4] + psi[5][5] - 2.0 * psi[3][4] - 2.0 * psi[3][5] + 2.0 * psi[4][5],
        ),
    };
    if v <= 0.0 {
        return Err(DiffusionError::NonDepletingSide(v));
    }
    let scale = (q0 * fluid.lambda * v / combo).sqrt();
    Ok(1.0 - norm_cdf(scale * x))
}

impl DiffusionParams {
    pub fn to_json(&self) -> Json {
        let mut o = Json::obj();
        o.push("mu", Json::num_array(&self.mu));
        o.push(
            "sigma_cov",
            Json::Arr(vec![Json::num_array(&self.cov[0]), Json::num_array(&self.cov[1])]),
        );
        o.push("rho", Json::Num(self.rho));
        o.push("sigma1", Json::Num(self.sigma1));
        o.push("sigma2", Json::Num(self.sigma2));
        o.push("alpha", Json::Num(self.alpha));
        o.push("r0", Json::Num(self.r0));
        o.push("theta0", Json::Num(self.theta0));
        o
    }
}
