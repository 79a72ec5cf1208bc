//! Arrival-time generation for the order counting process N(t).
//!
//! Supported processes and their limit-theorem constants (stationary rate λ
//! and long-run CLT variance v_d² of the counts):
//!
//! ```text
//! Poisson(λ):                λ,                  v_d² = λ
//! Hawkes    ν + a·e^(-b·t):  ν/(1-a/b),          v_d² = ν/(1-a/b)³
//! Cox shot  ν + κ·e^(-δ·t):  ν + ρ·κ/δ,          v_d² = ν + ρκ/δ + ρκ²/(2δ)
//! ```
//!
//! Hawkes and Cox simulation is Ogata thinning with O(1) state for the
//! exponential kernel; both are warmed up over a burn-in window of 20 kernel
//! time constants before t = 0 to approximate the stationary version. The
//! state-dependent linear intensity is generated against the current queue
//! state supplied by the caller.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::Stream;

/// Kernel time constants discarded before t = 0 for Hawkes/Cox warm-up.
const BURN_IN_TIME_CONSTANTS: f64 = 20.0;

#[derive(Debug, Error)]
pub enum PointProcessError {
    #[error("horizon must be positive, got {0}")]
    NonPositiveHorizon(f64),
    #[error("rate parameter must be positive: {0}")]
    NonPositiveRate(String),
    #[error("Hawkes kernel is supercritical: a/b = {0} >= 1")]
    SupercriticalHawkes(f64),
    #[error("negative parameter: {0}")]
    NegativeParameter(String),
    #[error("state-dependent intensity requires a queue-state source")]
    MissingStateCallback,
    #[error("{0} is not defined for a state-dependent arrival process")]
    UnsupportedSpec(String),
    #[error("event times must be strictly increasing within [0, horizon]")]
    InvalidEventTimes,
}

/// Parameterization of the arrival counting process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PointProcessSpec {
    Poisson {
        rate: f64,
    },
    /// Self-exciting with kernel h(t) = amplitude · exp(-decay · t).
    HawkesExp {
        baseline: f64,
        amplitude: f64,
        decay: f64,
    },
    /// Doubly stochastic: intensity ν + κ Σ exp(-δ (t - s_i)) driven by an
    /// independent Poisson shot process of rate ρ.
    CoxShotNoiseExp {
        baseline: f64,
        shot_rate: f64,
        shot_amplitude: f64,
        shot_decay: f64,
    },
    /// Intensity n·(base + ask_coeff·Q_a(t-) + bid_coeff·Q_b(t-)).
    LinearStateDependent {
        base: f64,
        ask_coeff: f64,
        bid_coeff: f64,
    },
}

impl PointProcessSpec {
    pub fn validate(&self) -> Result<(), PointProcessError> {
        match *self {
            PointProcessSpec::Poisson { rate } => {
                if rate <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!("rate = {rate}")));
                }
            }
            PointProcessSpec::HawkesExp { baseline, amplitude, decay } => {
                if baseline <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!(
                        "baseline = {baseline}"
                    )));
                }
                if decay <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!("decay = {decay}")));
                }
                if amplitude < 0.0 {
                    return Err(PointProcessError::NegativeParameter(format!(
                        "amplitude = {amplitude}"
                    )));
                }
                let branching = amplitude / decay;
                if branching >= 1.0 {
                    return Err(PointProcessError::SupercriticalHawkes(branching));
                }
            }
            PointProcessSpec::CoxShotNoiseExp { baseline, shot_rate, shot_amplitude, shot_decay } => {
                if baseline <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!(
                        "baseline = {baseline}"
                    )));
                }
                if shot_rate <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!(
                        "shot_rate = {shot_rate}"
                    )));
                }
                if shot_decay <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!(
                        "shot_decay = {shot_decay}"
                    )));
                }
                if shot_amplitude < 0.0 {
                    return Err(PointProcessError::NegativeParameter(format!(
                        "shot_amplitude = {shot_amplitude}"
                    )));
                }
            }
            PointProcessSpec::LinearStateDependent { base, ask_coeff, bid_coeff } => {
                if base <= 0.0 {
                    return Err(PointProcessError::NonPositiveRate(format!("base = {base}")));
                }
                if ask_coeff < 0.0 || bid_coeff < 0.0 {
                    return Err(PointProcessError::NegativeParameter(format!(
                        "ask_coeff = {ask_coeff}, bid_coeff = {bid_coeff}"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn is_state_dependent(&self) -> bool {
        matches!(self, PointProcessSpec::LinearStateDependent { .. })
    }
}

/// Long-run mean arrival rate λ = lim N(T)/T.
pub fn stationary_rate(spec: &PointProcessSpec) -> Result<f64, PointProcessError> {
    spec.validate()?;
    match *spec {
        PointProcessSpec::Poisson { rate } => Ok(rate),
        PointProcessSpec::HawkesExp { baseline, amplitude, decay } => {
            Ok(baseline / (1.0 - amplitude / decay))
        }
        PointProcessSpec::CoxShotNoiseExp { baseline, shot_rate, shot_amplitude, shot_decay } => {
            Ok(baseline + shot_rate * shot_amplitude / shot_decay)
        }
        PointProcessSpec::LinearStateDependent { .. } => {
            Err(PointProcessError::UnsupportedSpec("stationary_rate".into()))
        }
    }
}

/// Long-run variance constant v_d² = lim Var(N(T))/T of the counting CLT.
pub fn clt_variance(spec: &PointProcessSpec) -> Result<f64, PointProcessError> {
    spec.validate()?;
    match *spec {
        PointProcessSpec::Poisson { rate } => Ok(rate),
        PointProcessSpec::HawkesExp { baseline, amplitude, decay } => {
            let one_minus = 1.0 - amplitude / decay;
            Ok(baseline / (one_minus * one_minus * one_minus))
        }
        PointProcessSpec::CoxShotNoiseExp { baseline, shot_rate, shot_amplitude, shot_decay } => {
            let g_l1 = shot_amplitude / shot_decay;
            let g2_l1 = shot_amplitude * shot_amplitude / (2.0 * shot_decay);
            Ok(baseline + shot_rate * g_l1 + shot_rate * g2_l1)
        }
        PointProcessSpec::LinearStateDependent { .. } => {
            Err(PointProcessError::UnsupportedSpec("clt_variance".into()))
        }
    }
}

/// A realized arrival stream: strictly increasing times in [0, horizon].
#[derive(Debug, Clone)]
pub struct EventTimes {
    times: Vec<f64>,
    horizon: f64,
}

impl EventTimes {
    pub fn new(times: Vec<f64>, horizon: f64) -> Result<Self, PointProcessError> {
        if horizon <= 0.0 {
            return Err(PointProcessError::NonPositiveHorizon(horizon));
        }
        let ok = times.windows(2).all(|w| w[0] < w[1])
            && times.first().map_or(true, |&t| t >= 0.0)
            && times.last().map_or(true, |&t| t <= horizon);
        if !ok {
            return Err(PointProcessError::InvalidEventTimes);
        }
        Ok(EventTimes { times, horizon })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn count(&self) -> usize {
        self.times.len()
    }

    /// N(t): number of events at or before t.
    pub fn count_at(&self, t: f64) -> usize {
        self.times.partition_point(|&x| x <= t)
    }

    /// CSV with header `time`, one event per row, 17 significant digits.
    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "time")?;
        for t in &self.times {
            writeln!(w, "{}", crate::output::fmt_f64(*t))?;
        }
        Ok(())
    }
}

/// Streaming arrival generator used by the simulator; yields strictly
/// increasing event times. For the stationary specs the time argument of
/// `next` is ignored; for the linear state-dependent spec the caller passes
/// the left limits of the scaled queue lengths.
pub(crate) struct ArrivalGen {
    kind: GenKind,
    rng: Stream,
    /// scale factor n: the generator produces times of t -> N(n t).
    scale: f64,
    now_internal: f64,
}

enum GenKind {
    Poisson {
        rate: f64,
    },
    Hawkes {
        baseline: f64,
        amplitude: f64,
        decay: f64,
        excitation: f64,
    },
    Cox {
        baseline: f64,
        shot_amplitude: f64,
        shot_decay: f64,
        shot_rate: f64,
        excitation: f64,
        next_shot: f64,
    },
    Linear {
        base: f64,
        ask_coeff: f64,
        bid_coeff: f64,
    },
}

impl ArrivalGen {
    /// `scale` multiplies the intensity (the n of the scaled system); the
    /// returned times are in scaled units.
    pub fn new(spec: &PointProcessSpec, scale: f64, rng: Stream) -> Result<Self, PointProcessError> {
        spec.validate()?;
        let mut gen = match *spec {
            PointProcessSpec::Poisson { rate } => ArrivalGen {
                kind: GenKind::Poisson { rate },
                rng,
                scale,
                now_internal: 0.0,
            },
            PointProcessSpec::HawkesExp { baseline, amplitude, decay } => ArrivalGen {
                kind: GenKind::Hawkes { baseline, amplitude, decay, excitation: 0.0 },
                rng,
                scale,
                now_internal: -BURN_IN_TIME_CONSTANTS / decay,
            },
            PointProcessSpec::CoxShotNoiseExp {
                baseline,
                shot_rate,
                shot_amplitude,
                shot_decay,
            } => ArrivalGen {
                kind: GenKind::Cox {
                    baseline,
                    shot_amplitude,
                    shot_decay,
                    shot_rate,
                    excitation: 0.0,
                    next_shot: f64::NAN,
                },
                rng,
                scale,
                now_internal: -BURN_IN_TIME_CONSTANTS / shot_decay,
            },
            PointProcessSpec::LinearStateDependent { base, ask_coeff, bid_coeff } => ArrivalGen {
                kind: GenKind::Linear { base, ask_coeff, bid_coeff },
                rng,
                scale,
                now_internal: 0.0,
            },
        };
        gen.burn_in()?;
        Ok(gen)
    }

    fn burn_in(&mut self) -> Result<(), PointProcessError> {
        match &mut self.kind {
            GenKind::Hawkes { .. } => {
                while self.peek_is_negative() {
                    self.advance_hawkes();
                }
            }
            GenKind::Cox { shot_rate, next_shot, .. } => {
                *next_shot = self.now_internal + self.rng.exp(*shot_rate);
                while self.peek_is_negative() {
                    self.advance_cox();
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn peek_is_negative(&self) -> bool {
        self.now_internal < 0.0
    }

    /// Advance the Hawkes state by one thinning proposal; returns the
    /// internal event time if the proposal is accepted.
    fn advance_hawkes(&mut self) -> Option<f64> {
        if let GenKind::Hawkes { baseline, amplitude, decay, excitation } = &mut self.kind {
            let bound = *baseline + *amplitude * *excitation;
            let gap = self.rng.exp(bound);
            let decayed = *excitation * (-*decay * gap).exp();
            let intensity = *baseline + *amplitude * decayed;
            self.now_internal += gap;
            *excitation = decayed;
            if self.rng.uniform() * bound <= intensity {
                *excitation += 1.0;
                return Some(self.now_internal);
            }
            None
        } else {
            unreachable!()
        }
    }

    /// Advance the Cox state by one thinning proposal or shot arrival.
    fn advance_cox(&mut self) -> Option<f64> {
        if let GenKind::Cox {
            baseline,
            shot_amplitude,
            shot_decay,
            shot_rate,
            excitation,
            next_shot,
        } = &mut self.kind
        {
            let bound = *baseline + *shot_amplitude * *excitation;
            let gap = self.rng.exp(bound);
            if self.now_internal + gap >= *next_shot {
                // proposal lands past the next shot: restart from the shot
                let dt = *next_shot - self.now_internal;
                *excitation = *excitation * (-*shot_decay * dt).exp() + 1.0;
                self.now_internal = *next_shot;
                *next_shot = self.now_internal + self.rng.exp(*shot_rate);
                return None;
            }
            let decayed = *excitation * (-*shot_decay * gap).exp();
            let intensity = *baseline + *shot_amplitude * decayed;
            self.now_internal += gap;
            *excitation = decayed;
            if self.rng.uniform() * bound <= intensity {
                return Some(self.now_internal);
            }
            None
        } else {
            unreachable!()
        }
    }

    /// Next scaled event time strictly after the current one. `qb`/`qa` are
    /// the current scaled queue left limits (used only by the linear spec).
    pub fn next(&mut self, qb: f64, qa: f64) -> f64 {
        match &mut self.kind {
            GenKind::Poisson { rate } => {
                // drawn directly on the scaled clock so that a zero-coefficient
                // linear spec reproduces the same path bit for bit
                let gap = self.rng.exp(*rate * self.scale);
                self.now_internal += gap;
                self.now_internal
            }
            GenKind::Hawkes { .. } => loop {
                if let Some(t) = self.advance_hawkes() {
                    return t / self.scale;
                }
            },
            GenKind::Cox { .. } => loop {
                if let Some(t) = self.advance_cox() {
                    return t / self.scale;
                }
            },
            GenKind::Linear { base, ask_coeff, bid_coeff } => {
                // piecewise-constant intensity between events: the draw is exact
                let rate = self.scale * (*base + *ask_coeff * qa + *bid_coeff * qb);
                let gap = self.rng.exp(rate);
                self.now_internal += gap;
                self.now_internal
            }
        }
    }

}

/// Generate a full arrival stream for a state-independent spec.
pub fn simulate_arrivals(
    spec: &PointProcessSpec,
    horizon: f64,
    seed: u64,
) -> Result<EventTimes, PointProcessError> {
    if spec.is_state_dependent() {
        return Err(PointProcessError::MissingStateCallback);
    }
    simulate_arrivals_with_state(spec, horizon, seed, |_| (0.0, 0.0))
}

/// Generate arrivals; `state` maps the current time to the queue left limits
/// (Q_b(t-), Q_a(t-)) for the state-dependent intensity.
pub fn simulate_arrivals_with_state<F: FnMut(f64) -> (f64, f64)>(
    spec: &PointProcessSpec,
    horizon: f64,
    seed: u64,
    mut state: F,
) -> Result<EventTimes, PointProcessError> {
    if horizon <= 0.0 {
        return Err(PointProcessError::NonPositiveHorizon(horizon));
    }
    let mut gen = ArrivalGen::new(spec, 1.0, Stream::new(seed, 0))?;
    let mut times = Vec::new();
    let mut now = 0.0;
    loop {
        let (qb, qa) = state(now);
        let t = gen.next(qb, qa);
        if t > horizon {
            break;
        }
        times.push(t);
        now = t;
    }
    EventTimes::new(times, horizon)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn poisson_count_near_mean() {
        // Poisson(1) on [0, 1e4]: N within 4·sqrt(1e4) of 1e4
        let ev = simulate_arrivals(&PointProcessSpec::Poisson { rate: 1.0 }, 1e4, 9).unwrap();
        let n = ev.count() as f64;
        assert!((n - 1e4).abs() < 4.0 * 100.0, "N = {n}");
    }

    #[test]
    fn zero_horizon_rejected() {
        let err = simulate_arrivals(&PointProcessSpec::Poisson { rate: 1.0 }, 0.0, 1);
        assert!(matches!(err, Err(PointProcessError::NonPositiveHorizon(_))));
    }

    #[test]
    fn supercritical_hawkes_rejected() {
        let spec = PointProcessSpec::HawkesExp { baseline: 1.0, amplitude: 2.0, decay: 1.0 };
        assert!(matches!(
            simulate_arrivals(&spec, 10.0, 1),
            Err(PointProcessError::SupercriticalHawkes(_))
        ));
    }

    #[test]
    fn stationary_rates() {
        assert_eq!(stationary_rate(&PointProcessSpec::Poisson { rate: 3.0 }).unwrap(), 3.0);
        // ν/(1-‖h‖₁) with ‖h‖₁ = 0.5
        let hawkes = PointProcessSpec::HawkesExp { baseline: 1.0, amplitude: 0.5, decay: 1.0 };
        assert!((stationary_rate(&hawkes).unwrap() - 2.0).abs() < 1e-15);
        // ν + ρ·κ/δ = 1 + 2·0.5
        let cox = PointProcessSpec::CoxShotNoiseExp {
            baseline: 1.0,
            shot_rate: 2.0,
            shot_amplitude: 1.0,
            shot_decay: 2.0,
        };
        assert!((stationary_rate(&cox).unwrap() - 2.0).abs() < 1e-15);
        let lin =
            PointProcessSpec::LinearStateDependent { base: 1.0, ask_coeff: 0.0, bid_coeff: 0.0 };
        assert!(stationary_rate(&lin).is_err());
    }

    #[test]
    fn clt_variances() {
        assert_eq!(clt_variance(&PointProcessSpec::Poisson { rate: 1.0 }).unwrap(), 1.0);
        // ν/(1-‖h‖₁)³ = 1/0.125
        let hawkes = PointProcessSpec::HawkesExp { baseline: 1.0, amplitude: 0.5, decay: 1.0 };
        assert!((clt_variance(&hawkes).unwrap() - 8.0).abs() < 1e-15);
        // 1 + 1 + 2·(1/4)
        let cox = PointProcessSpec::CoxShotNoiseExp {
            baseline: 1.0,
            shot_rate: 2.0,
            shot_amplitude: 1.0,
            shot_decay: 2.0,
        };
        assert!((clt_variance(&cox).unwrap() - 2.5).abs() < 1e-15);
    }

    #[test]
    fn hawkes_empirical_rate_matches_stationary() {
        // long-horizon oracle for λ = ν/(1-‖h‖₁) = 2
        let spec = PointProcessSpec::HawkesExp { baseline: 1.0, amplitude: 0.5, decay: 1.0 };
        let t = 1e5;
        let ev = simulate_arrivals(&spec, t, 31).unwrap();
        let rate = ev.count() as f64 / t;
        // 3 standard errors with Var(N(T))/T = v_d² = 8
        let se = (8.0 / t).sqrt();
        assert!((rate - 2.0).abs() < 3.0 * se, "rate {rate}");
    }

    #[test]
    fn cox_empirical_rate_matches_stationary() {
        let spec = PointProcessSpec::CoxShotNoiseExp {
            baseline: 1.0,
            shot_rate: 2.0,
            shot_amplitude: 1.0,
            shot_decay: 2.0,
        };
        let t = 1e5;
        let ev = simulate_arrivals(&spec, t, 77).unwrap();
        let rate = ev.count() as f64 / t;
        let se = (2.5f64 / t).sqrt();
        assert!((rate - 2.0).abs() < 4.0 * se, "rate {rate}");
    }

    #[test]
    fn poisson_block_variance() {
        // sample variance of unit-block counts within 5% of λ
        let ev = simulate_arrivals(&PointProcessSpec::Poisson { rate: 1.0 }, 1e5, 13).unwrap();
        let blocks = 100_000usize;
        let mut counts = vec![0.0f64; blocks];
        for &t in ev.times() {
            let b = (t.floor() as usize).min(blocks - 1);
            counts[b] += 1.0;
        }
        let var = crate::numerics::stats::variance(&counts);
        assert!((var - 1.0).abs() < 0.05, "block variance {var}");
    }

    #[test]
    fn determinism_bit_for_bit() {
        let spec = PointProcessSpec::HawkesExp { baseline: 1.0, amplitude: 0.4, decay: 2.0 };
        let a = simulate_arrivals(&spec, 500.0, 4242).unwrap();
        let b = simulate_arrivals(&spec, 500.0, 4242).unwrap();
        assert_eq!(a.times(), b.times());
    }

    #[test]
    fn csv_header_and_format() {
        let ev = EventTimes::new(vec![0.5, 1.25], 2.0).unwrap();
        let mut buf = Vec::new();
        ev.to_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let mut lines = s.lines();
        assert_eq!(lines.next(), Some("time"));
        assert_eq!(lines.next(), Some("5.0000000000000000e-1"));
    }
}
