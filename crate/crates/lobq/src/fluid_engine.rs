//! Closed-form fluid (law-of-large-numbers) trajectories and hitting times.
//!
//! Queue lines decay linearly, Q^b(t) = q^b - λ v_b (t ∧ τ), and the order
//! position solves dZ/dt = -λ(V̄₂ + V̄₃ Z/Q^b) with three solution branches
//! indexed by c = -v_b/V̄₃:
//!
//! ```text
//! c ∉ {-1,0}:  Z(t) = -a(b+ct)/(1+c) + (z + ab/(1+c)) (b/(b+ct))^(1/c)
//! c = -1:      Z(t) = (b-t) (z/b + a ln((b-t)/b))
//! c = 0:       Z(t) = (z+ab) e^(-t/b) - ab
//! ```
//!
//! with a = λV̄₂, b = q^b/(λV̄₃). Everything freezes at
//! τ = min(τ_a, τ_b, τ_z). The general cancellation profile Υ and the
//! state-dependent (linear-intensity) variants are handled numerically where
//! no closed form exists.

use serde::{Deserialize, Serialize};
use std::sync::Arc;
use thiserror::Error;

use crate::numerics::ode::{rk4_first_crossing, rk4_integrate};
use crate::numerics::quad::adaptive_quad;
use crate::numerics::roots::find_root;
use crate::output::Json;

/// Branch-switch thresholds: near c = 0 and c = -1 the general branch loses
/// precision like 1/|c| and 1/|c+1|.
const C_ZERO_EPS: f64 = 1e-8;
const C_NEG_ONE_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum FluidError {
    #[error("invalid fluid parameters: {0}")]
    InvalidParams(String),
    #[error("cancellation profile invalid: {0}")]
    InvalidProfile(String),
    #[error("ODE integration stalled at t = {t_last}, z = {z_last}")]
    IntegrationFailure { t_last: f64, z_last: f64 },
    #[error("time must be nonnegative, got {0}")]
    NegativeTime(f64),
}

/// Inputs of the fluid limit: rate, mean marks, and initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluidParams {
    pub lambda: f64,
    pub vbar: [f64; 6],
    pub qb0: f64,
    pub qa0: f64,
    pub z0: f64,
}

impl FluidParams {
    pub fn validate(&self) -> Result<(), FluidError> {
        if !(self.lambda > 0.0) {
            return Err(FluidError::InvalidParams(format!("lambda = {}", self.lambda)));
        }
        if self.vbar.iter().any(|&v| v < 0.0) {
            return Err(FluidError::InvalidParams("negative mean mark".into()));
        }
        if !(self.qb0 > 0.0 && self.qa0 > 0.0 && self.z0 > 0.0) {
            return Err(FluidError::InvalidParams("initial states must be positive".into()));
        }
        if self.z0 > self.qb0 {
            return Err(FluidError::InvalidParams(format!(
                "order position z0 = {} exceeds bid queue qb0 = {}",
                self.z0, self.qb0
            )));
        }
        Ok(())
    }

    /// Net bid outflow rate per order: v_b = -V̄₁ + V̄₂ + V̄₃.
    pub fn vb(&self) -> f64 {
        -self.vbar[0] + self.vbar[1] + self.vbar[2]
    }

    /// Net ask outflow rate per order: v_a = -V̄₄ + V̄₅ + V̄₆.
    pub fn va(&self) -> f64 {
        -self.vbar[3] + self.vbar[4] + self.vbar[5]
    }

    pub fn coeff_a(&self) -> f64 {
        self.lambda * self.vbar[1]
    }

    /// Requires V̄₃ > 0.
    pub fn coeff_b(&self) -> f64 {
        self.qb0 / (self.lambda * self.vbar[2])
    }

    /// Requires V̄₃ > 0.
    pub fn coeff_c(&self) -> f64 {
        -self.vb() / self.vbar[2]
    }
}

/// Solved fluid limit: evaluators plus hitting times (∞ when never hit).
#[derive(Debug, Clone)]
pub struct FluidSolution {
    pub params: FluidParams,
    pub vb: f64,
    pub va: f64,
    pub tau_a: f64,
    pub tau_b: f64,
    pub tau_z: f64,
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum ZBranch {
    /// V̄₃ = 0, V̄₂ = 0: Z constant.
    Frozen,
    /// V̄₃ = 0, V̄₂ > 0: Z = z - λV̄₂ t.
    Linear,
    /// |c| < eps.
    CZero,
    /// |c+1| < eps.
    CNegOne,
    General,
}

impl FluidSolution {
    pub fn new(params: FluidParams) -> Result<FluidSolution, FluidError> {
        params.validate()?;
        let vb = params.vb();
        let va = params.va();
        let tau_a = if va > 0.0 { params.qa0 / (params.lambda * va) } else { f64::INFINITY };
        let tau_b = if vb > 0.0 { params.qb0 / (params.lambda * vb) } else { f64::INFINITY };
        let tau_z = raw_tau_z(&params)?;
        let tau = tau_a.min(tau_b).min(tau_z);
        Ok(FluidSolution { params, vb, va, tau_a, tau_b, tau_z, tau })
    }

    /// (Q^b(t), Q^a(t)): linear decay frozen at τ.
    pub fn queues(&self, t: f64) -> (f64, f64) {
        let tc = t.min(self.tau);
        (
            self.params.qb0 - self.params.lambda * self.vb * tc,
            self.params.qa0 - self.params.lambda * self.va * tc,
        )
    }

    /// Order position Z(t), frozen at τ.
    pub fn position(&self, t: f64) -> f64 {
        let tc = t.min(self.tau);
        z_unfrozen(&self.params, tc)
    }

    pub fn to_json(&self) -> Json {
        let p = &self.params;
        let mut o = Json::obj();
        o.push("tau_a", Json::Num(self.tau_a));
        o.push("tau_b", Json::Num(self.tau_b));
        o.push("tau_z", Json::Num(self.tau_z));
        o.push(
            "a",
            if p.vbar[2] > 0.0 { Json::Num(p.coeff_a()) } else { Json::Null },
        );
        o.push(
            "b",
            if p.vbar[2] > 0.0 { Json::Num(p.coeff_b()) } else { Json::Null },
        );
        o.push(
            "c",
            if p.vbar[2] > 0.0 { Json::Num(p.coeff_c()) } else { Json::Null },
        );
        o.push("vb", Json::Num(self.vb));
        o.push("va", Json::Num(self.va));
        o
    }
}

fn z_branch(params: &FluidParams) -> ZBranch {
    if params.vbar[2] == 0.0 {
        if params.vbar[1] == 0.0 {
            ZBranch::Frozen
        } else {
            ZBranch::Linear
        }
    } else {
        let c = params.coeff_c();
        if c.abs() < C_ZERO_EPS {
            ZBranch::CZero
        } else if (c + 1.0).abs() < C_NEG_ONE_EPS {
            ZBranch::CNegOne
        } else {
            ZBranch::General
        }
    }
}

/// Z(t) before truncation (caller clamps t at τ).
fn z_unfrozen(params: &FluidParams, t: f64) -> f64 {
    let z = params.z0;
    match z_branch(params) {
        ZBranch::Frozen => z,
        ZBranch::Linear => z - params.lambda * params.vbar[1] * t,
        ZBranch::CZero => {
            let a = params.coeff_a();
            let b = params.coeff_b();
            (z + a * b) * (-t / b).exp() - a * b
        }
        ZBranch::CNegOne => {
            let a = params.coeff_a();
            let b = params.coeff_b();
            let rem = b - t;
            if rem <= 0.0 {
                return 0.0;
            }
            rem * (z / b + a * (rem / b).ln())
        }
        ZBranch::General => {
            let a = params.coeff_a();
            let b = params.coeff_b();
            let c = params.coeff_c();
            let bct = b + c * t;
            if bct <= 0.0 {
                return 0.0;
            }
            -a / (1.0 + c) * bct + (z + a * b / (1.0 + c)) * (b / bct).powf(1.0 / c)
        }
    }
}

/// Smallest positive root of Z(t) = 0 (∞ when Z never reaches zero).
fn raw_tau_z(params: &FluidParams) -> Result<f64, FluidError> {
    let z = params.z0;
    let lambda = params.lambda;
    Ok(match z_branch(params) {
        ZBranch::Frozen => f64::INFINITY,
        ZBranch::Linear => z / (lambda * params.vbar[1]),
        ZBranch::CZero => {
            let a = params.coeff_a();
            let b = params.coeff_b();
            if a == 0.0 {
                f64::INFINITY
            } else {
                b * (z / (a * b) + 1.0).ln()
            }
        }
        ZBranch::CNegOne => {
            let a = params.coeff_a();
            let b = params.coeff_b();
            // a = 0 gives exp(-inf) = 0, i.e. τ_z = b, matching the limit
            b * (1.0 - (-z / (a * b)).exp())
        }
        ZBranch::General => {
            let a = params.coeff_a();
            let b = params.coeff_b();
            let c = params.coeff_c();
            if a == 0.0 {
                // pure proportional cancellation: Z = z (b/(b+ct))^(1/c)
                if c < 0.0 {
                    -b / c
                } else {
                    f64::INFINITY
                }
            } else {
                let base = (1.0 + c) * z / a + b;
                if base > 0.0 {
                    let candidate = base.powf(c / (c + 1.0)) * b.powf(1.0 / (c + 1.0)) / c - b / c;
                    if c < 0.0 {
                        // both roots positive; the formula root is the smaller
                        candidate.min(-b / c)
                    } else {
                        candidate
                    }
                } else {
                    // formula root leaves the real line; Z reaches 0 with Q^b
                    -b / c
                }
            }
        }
    })
}

/// (Q^b(t), Q^a(t)) per the fluid limit.
pub fn fluid_queues(params: &FluidParams, t: f64) -> Result<(f64, f64), FluidError> {
    if t < 0.0 {
        return Err(FluidError::NegativeTime(t));
    }
    Ok(FluidSolution::new(params.clone())?.queues(t))
}

/// Z(t) per the fluid limit.
pub fn fluid_position(params: &FluidParams, t: f64) -> Result<f64, FluidError> {
    if t < 0.0 {
        return Err(FluidError::NegativeTime(t));
    }
    Ok(FluidSolution::new(params.clone())?.position(t))
}

#[derive(Debug, Clone, Copy)]
pub struct HittingTimes {
    pub tau_a: f64,
    pub tau_b: f64,
    pub tau_z: f64,
    pub tau: f64,
}

pub fn fluid_hitting_times(params: &FluidParams) -> Result<HittingTimes, FluidError> {
    let s = FluidSolution::new(params.clone())?;
    Ok(HittingTimes { tau_a: s.tau_a, tau_b: s.tau_b, tau_z: s.tau_z, tau: s.tau })
}

/// Position-dependent cancellation propensity Υ: \[0,1\] → \[0,1\].
#[derive(Clone)]
pub enum CancellationRule {
    Uniform,
    Custom(CancellationProfile),
}

#[derive(Clone)]
pub struct CancellationProfile {
    map: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub lipschitz: f64,
}

impl std::fmt::Debug for CancellationRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CancellationRule::Uniform => write!(f, "Uniform"),
            CancellationRule::Custom(p) => write!(f, "Custom(lipschitz={})", p.lipschitz),
        }
    }
}

impl CancellationRule {
    /// Power profile Υ(x) = x^gamma (gamma ≥ 1 keeps it Lipschitz on \[0,1\]).
    pub fn power(gamma: f64) -> Result<CancellationRule, FluidError> {
        if !(gamma >= 1.0) {
            return Err(FluidError::InvalidProfile(format!("power exponent {gamma} < 1")));
        }
        CancellationRule::custom(move |x: f64| x.powf(gamma), gamma)
    }

    pub fn custom<F: Fn(f64) -> f64 + Send + Sync + 'static>(
        map: F,
        lipschitz: f64,
    ) -> Result<CancellationRule, FluidError> {
        if map(0.0).abs() > 1e-12 || (map(1.0) - 1.0).abs() > 1e-12 {
            return Err(FluidError::InvalidProfile("need Υ(0) = 0 and Υ(1) = 1".into()));
        }
        // nondecreasing on a grid
        let mut prev = 0.0;
        for i in 1..=256 {
            let x = i as f64 / 256.0;
            let y = map(x);
            if y < prev - 1e-12 || !(-1e-12..=1.0 + 1e-12).contains(&y) {
                return Err(FluidError::InvalidProfile(format!("not monotone into [0,1] at x = {x}")));
            }
            prev = y;
        }
        Ok(CancellationRule::Custom(CancellationProfile { map: Arc::new(map), lipschitz }))
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        let x = x.clamp(0.0, 1.0);
        match self {
            CancellationRule::Uniform => x,
            CancellationRule::Custom(p) => (p.map)(x).clamp(0.0, 1.0),
        }
    }
}

/// Z(t) under a general cancellation profile: integrates
/// dZ/dt = -λ(V̄₂ + V̄₃ Υ(Z/Q^b)) with the linear fluid Q^b.
pub fn fluid_position_general(
    params: &FluidParams,
    rule: &CancellationRule,
    t: f64,
) -> Result<f64, FluidError> {
    if t < 0.0 {
        return Err(FluidError::NegativeTime(t));
    }
    let sol = FluidSolution::new(params.clone())?;
    let tau_z = general_tau_z(params, rule)?;
    let t_end = t.min(tau_z).min(sol.tau_a).min(sol.tau_b * (1.0 - 1e-12));
    if t_end >= tau_z {
        return Ok(0.0);
    }
    let lambda = params.lambda;
    let (v2, v3) = (params.vbar[1], params.vbar[2]);
    let qb0 = params.qb0;
    let vb = sol.vb;
    let f = move |s: f64, z: f64| {
        let qb = qb0 - lambda * vb * s;
        let ratio = if qb > 0.0 { (z / qb).clamp(0.0, 1.0) } else { 1.0 };
        -lambda * (v2 + v3 * rule.apply(ratio))
    };
    let z = rk4_integrate(&f, 0.0, params.z0, t_end, 1e-11);
    if !z.is_finite() {
        return Err(FluidError::IntegrationFailure { t_last: t_end, z_last: z });
    }
    Ok(z.max(0.0))
}

/// Execution time of the order position under a general profile, located to
/// 1e-10 absolute.
pub fn general_tau_z(params: &FluidParams, rule: &CancellationRule) -> Result<f64, FluidError> {
    let sol = FluidSolution::new(params.clone())?;
    let lambda = params.lambda;
    let (v2, v3) = (params.vbar[1], params.vbar[2]);
    let qb0 = params.qb0;
    let vb = sol.vb;
    let f = move |s: f64, z: f64| {
        let qb = qb0 - lambda * vb * s;
        let ratio = if qb > 0.0 { (z / qb).clamp(0.0, 1.0) } else { 1.0 };
        -lambda * (v2 + v3 * rule.apply(ratio))
    };
    // Z decays no slower than under the uniform profile's floor -λ V̄₂ and no
    // faster than -λ(V̄₂+V̄₃); it must cross within the bid depletion time.
    let t_max = sol.tau_b.min(sol.tau_a).min(1e9);
    match rk4_first_crossing(&f, 0.0, params.z0, 0.0, t_max, 1e-11, 1e-10) {
        Some(t) => Ok(t),
        None => Ok(f64::INFINITY),
    }
}

/// Fluid limit under state-dependent linear intensity
/// n(λ + β Q^b + α Q^a): exponential queue trajectories and quadrature-based
/// order position.
#[derive(Debug, Clone)]
pub struct LinearFluidSolution {
    pub params: FluidParams,
    pub alpha: f64,
    pub beta: f64,
    /// decay rate k = v_b β + v_a α of the queue relaxation
    pub k: f64,
    pb: f64,
    rb: f64,
    pa: f64,
    ra: f64,
    /// effective constant rate when k = 0
    effective_rate: Option<f64>,
    pub tau_a: f64,
    pub tau_b: f64,
    pub tau_z: f64,
    pub tau: f64,
    /// corollary depletion condition satisfied per side (bid, ask)
    pub depletes: (bool, bool),
}

impl LinearFluidSolution {
    pub fn new(params: FluidParams, alpha: f64, beta: f64) -> Result<Self, FluidError> {
        params.validate()?;
        if alpha < 0.0 || beta < 0.0 {
            return Err(FluidError::InvalidParams("alpha/beta must be nonnegative".into()));
        }
        let vb = params.vb();
        let va = params.va();
        let lambda = params.lambda;
        let (qb, qa) = (params.qb0, params.qa0);
        let k = vb * beta + va * alpha;

        if k.abs() < 1e-12 * (lambda + beta * qb + alpha * qa) {
            // degenerate relaxation: the driver λ + βQ^b + αQ^a stays at its
            // initial value, so this is the plain fluid at an effective rate
            let rate = lambda + beta * qb + alpha * qa;
            let eff = FluidParams { lambda: rate, ..params.clone() };
            let sol = FluidSolution::new(eff)?;
            return Ok(LinearFluidSolution {
                params,
                alpha,
                beta,
                k,
                pb: 0.0,
                rb: 0.0,
                pa: 0.0,
                ra: 0.0,
                effective_rate: Some(rate),
                tau_a: sol.tau_a,
                tau_b: sol.tau_b,
                tau_z: sol.tau_z,
                tau: sol.tau,
                depletes: (sol.tau_b.is_finite(), sol.tau_a.is_finite()),
            });
        }

        let drive = beta * qb + alpha * qa + lambda;
        let rb = vb * drive / k;
        let ra = va * drive / k;
        let pb = qb - rb;
        let pa = qa - ra;

        // Q(t) = P + R e^{-kt} hits zero iff -P/R = 1 - q/R lies in (0,1)
        let tau_of = |q0: f64, r: f64| -> f64 {
            let ratio = 1.0 - q0 / r;
            let hits = (k > 0.0 && ratio > 0.0 && ratio < 1.0) || (k < 0.0 && ratio > 1.0);
            if hits {
                -ratio.ln() / k
            } else {
                f64::INFINITY
            }
        };
        let tau_b = if vb > 0.0 { tau_of(qb, rb) } else { f64::INFINITY };
        let tau_a = if va > 0.0 { tau_of(qa, ra) } else { f64::INFINITY };
        let depletes = (tau_b.is_finite(), tau_a.is_finite());

        let mut sol = LinearFluidSolution {
            params,
            alpha,
            beta,
            k,
            pb,
            rb,
            pa,
            ra,
            effective_rate: None,
            tau_a,
            tau_b,
            tau_z: f64::INFINITY,
            tau: f64::INFINITY,
            depletes,
        };
        sol.tau_z = sol.solve_tau_z()?;
        sol.tau = sol.tau_a.min(sol.tau_b).min(sol.tau_z);
        Ok(sol)
    }

    /// Queue lengths at time t (frozen at τ).
    pub fn queues(&self, t: f64) -> (f64, f64) {
        let tc = t.min(self.tau);
        if let Some(rate) = self.effective_rate {
            let vb = self.params.vb();
            let va = self.params.va();
            return (self.params.qb0 - rate * vb * tc, self.params.qa0 - rate * va * tc);
        }
        let em1 = (-self.k * tc).exp_m1();
        (self.params.qb0 + self.rb * em1, self.params.qa0 + self.ra * em1)
    }

    fn queues_unfrozen(&self, t: f64) -> (f64, f64) {
        if let Some(rate) = self.effective_rate {
            let vb = self.params.vb();
            let va = self.params.va();
            return (self.params.qb0 - rate * vb * t, self.params.qa0 - rate * va * t);
        }
        let em1 = (-self.k * t).exp_m1();
        (self.params.qb0 + self.rb * em1, self.params.qa0 + self.ra * em1)
    }

    /// ∫_s^t V̄₃ [λ/Q^b + β + α Q^a/Q^b] du, in closed form.
    fn decay_exponent(&self, s: f64, t: f64) -> f64 {
        let v3 = self.params.vbar[2];
        let lambda = self.params.lambda;
        if let Some(rate) = self.effective_rate {
            // plain-fluid form at the effective rate: integrand = rate·V̄₃/Q^b(u)
            let vb = self.params.vb();
            if vb == 0.0 {
                return v3 * rate / self.params.qb0 * (t - s);
            }
            let qs = self.params.qb0 - rate * vb * s;
            let qt = self.params.qb0 - rate * vb * t;
            return v3 / vb * (qs / qt).ln();
        }
        // (λ + αQ^a(u))/Q^b(u) = (c0 + c1 e^{-ku})/(pb + rb e^{-ku})
        let c0 = lambda + self.alpha * self.pa;
        let c1 = self.alpha * self.ra;
        let integral = if self.pb != 0.0 {
            let lin = c1 / self.rb * (t - s);
            // ∫ du/(pb + rb e^{-ku}) = (1/(k pb)) ln(pb e^{ku} + rb)
            let log_term = |u: f64| {
                // pb e^{ku} + rb = q^b + pb (e^{ku} - 1), stable for small k
                (self.params.qb0 + self.pb * (self.k * u).exp_m1()).ln()
            };
            lin + (c0 - c1 * self.pb / self.rb) / (self.k * self.pb) * (log_term(t) - log_term(s))
        } else {
            // pb = 0: 1/(rb e^{-ku}) = e^{ku}/rb
            c1 / self.rb * (t - s)
                + c0 / self.rb * ((self.k * t).exp() - (self.k * s).exp()) / self.k
        };
        v3 * (self.beta * (t - s) + integral)
    }

    /// Order position Z(t) by the integral formula (adaptive quadrature).
    pub fn position(&self, t: f64) -> f64 {
        let tc = t.min(self.tau);
        self.position_unfrozen(tc).max(0.0)
    }

    fn position_unfrozen(&self, t: f64) -> f64 {
        let p = &self.params;
        let (v2, lambda) = (p.vbar[1], p.lambda);
        let homog = p.z0 * (-self.decay_exponent(0.0, t)).exp();
        if v2 == 0.0 {
            return homog;
        }
        let integrand = |s: f64| {
            let (qb, qa) = self.queues_unfrozen(s);
            v2 * (lambda + self.beta * qb + self.alpha * qa) * (-self.decay_exponent(s, t)).exp()
        };
        let quad = adaptive_quad(&integrand, 0.0, t, 1e-10 * p.z0, 1e-12);
        homog - quad.value
    }

    fn solve_tau_z(&self) -> Result<f64, FluidError> {
        // Z is strictly decreasing while positive; bracket then bisect
        let cap = self.tau_a.min(self.tau_b);
        let cap = if cap.is_finite() { cap * (1.0 - 1e-9) } else { 1e9 };
        let f = |t: f64| self.position_unfrozen(t);
        if f(cap) > 0.0 {
            return Ok(f64::INFINITY);
        }
        match find_root(f, 0.0, cap, 1e-10) {
            Some(t) => Ok(t),
            None => Ok(f64::INFINITY),
        }
    }
}

/// One-call evaluation per the linear-intensity theorem.
pub fn fluid_linear_intensity(
    params: &FluidParams,
    alpha: f64,
    beta: f64,
    t: f64,
) -> Result<(f64, f64, f64, HittingTimes), FluidError> {
    if t < 0.0 {
        return Err(FluidError::NegativeTime(t));
    }
    let sol = LinearFluidSolution::new(params.clone(), alpha, beta)?;
    let (qb, qa) = sol.queues(t);
    let z = sol.position(t);
    Ok((qb, qa, z, HittingTimes { tau_a: sol.tau_a, tau_b: sol.tau_b, tau_z: sol.tau_z, tau: sol.tau }))
}

/// The worked regime used throughout the examples: λ = 1,
/// V̄ = (1, 0.6, 0.8, 1, 0.7, 0.8), q^b = q^a = z = 100.
pub fn reference_regime() -> FluidParams {
    FluidParams {
        lambda: 1.0,
        vbar: [1.0, 0.6, 0.8, 1.0, 0.7, 0.8],
        qb0: 100.0,
        qa0: 100.0,
        z0: 100.0,
    }
}
