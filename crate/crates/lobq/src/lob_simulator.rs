//! Exact event-driven simulation of the scaled queue triple (Q_b, Q_a, Z).
//!
//! One arrival of type j and raw size v updates the scaled state by v/n:
//!
//! ```text
//! bb   (j=1): Q_b += v/n
//! mbb  (j=2): Q_b -= v/n,  Z -= v/n
//! cbb  (j=3): Q_b -= v/n,  Z -= (v/n)·Υ(Z(t-)/Q_b(t-))
//! ba   (j=4): Q_a += v/n        mba (j=5): Q_a -= v/n      cba (j=6): Q_a -= v/n
//! ```
//!
//! All updates are gated by the joint indicator {Q_a(t-) > 0, Q_b(t-) > 0,
//! Z(t-) > 0}: the first event that takes any coordinate to zero or below
//! freezes the state at the crossing value (overshoot preserved, not
//! clamped) and records the stop time. Arrivals keep streaming after the
//! freeze so the cumulative flows C and the centered flows Ψ are always
//! evaluated on the untruncated event stream.
//!
//! There is no time discretization anywhere; the dynamics are pure jump.

use thiserror::Error;

use crate::fluid_engine::CancellationRule;
use crate::order_flow::MarkModel;
use crate::point_processes::{ArrivalGen, PointProcessError, PointProcessSpec};
use crate::rng::Stream;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Arrivals(#[from] PointProcessError),
    #[error(transparent)]
    Marks(#[from] crate::order_flow::OrderFlowError),
    #[error("arrival spec must be LinearStateDependent for state-dependent simulation")]
    WrongArrivalVariant,
}

/// The six order types, bid side (limit/market/cancel) then ask side.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKind {
    Bb,
    Mbb,
    Cbb,
    Ba,
    Mba,
    Cba,
}

impl OrderKind {
    pub fn from_index(j: usize) -> OrderKind {
        match j {
            0 => OrderKind::Bb,
            1 => OrderKind::Mbb,
            2 => OrderKind::Cbb,
            3 => OrderKind::Ba,
            4 => OrderKind::Mba,
            _ => OrderKind::Cba,
        }
    }

    /// 0-based coordinate in the mark vector.
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub arrival: PointProcessSpec,
    pub marks: MarkModel,
    /// scale parameter n of the scaled system
    pub n: u64,
    pub qb0: f64,
    pub qa0: f64,
    pub z0: f64,
    pub horizon: f64,
    pub cancellation: CancellationRule,
    pub seed: u64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::InvalidConfig("scale n must be >= 1".into()));
        }
        if !(self.horizon > 0.0) {
            return Err(SimError::InvalidConfig(format!("horizon = {}", self.horizon)));
        }
        if self.qb0 < 0.0 || self.qa0 < 0.0 || self.z0 < 0.0 {
            return Err(SimError::InvalidConfig("initial states must be nonnegative".into()));
        }
        if self.z0 > self.qb0 {
            return Err(SimError::InvalidConfig(format!(
                "order position z0 = {} exceeds bid queue qb0 = {}",
                self.z0, self.qb0
            )));
        }
        self.arrival.validate()?;
        self.marks.validate()?;
        Ok(())
    }
}

/// Scaled state as seen by observers (post-event values).
#[derive(Debug, Clone, Copy)]
pub struct SimState {
    pub t: f64,
    pub qb: f64,
    pub qa: f64,
    pub z: f64,
    pub frozen: bool,
}

/// Stop times; `f64::INFINITY` when the coordinate never crossed within the
/// horizon. `tau` is the freeze time min(tau_b, tau_a, tau_z).
#[derive(Debug, Clone, Copy)]
pub struct StopTimes {
    pub tau_b: f64,
    pub tau_a: f64,
    pub tau_z: f64,
    pub tau: f64,
}

/// Streaming hook into the event loop. `event` sees every arrival (including
/// post-freeze ones); return `true` from `stop` to end the run early.
pub trait SimObserver {
    fn event(&mut self, kind: OrderKind, size: f64, state: &SimState);
    fn stop(&mut self, _state: &SimState) -> bool {
        false
    }
}

/// No-op observer for τ-only runs.
pub struct NullObserver;

impl SimObserver for NullObserver {
    fn event(&mut self, _: OrderKind, _: f64, _: &SimState) {}
}

/// Drive one path, feeding every event to the observer. Returns stop times.
pub fn run_simulation<O: SimObserver>(
    config: &SimConfig,
    observer: &mut O,
) -> Result<StopTimes, SimError> {
    config.validate()?;
    let n = config.n as f64;
    let mut arrivals = ArrivalGen::new(&config.arrival, n, Stream::new(config.seed, 0))?;
    let mut marks_rng = Stream::new(config.seed, 1);

    let mut state = SimState {
        t: 0.0,
        qb: config.qb0,
        qa: config.qa0,
        z: config.z0,
        frozen: false,
    };
    let mut stops = StopTimes {
        tau_b: f64::INFINITY,
        tau_a: f64::INFINITY,
        tau_z: f64::INFINITY,
        tau: f64::INFINITY,
    };

    // boundary data: a coordinate starting at zero stops the clock at t = 0
    if state.qb <= 0.0 || state.qa <= 0.0 || state.z <= 0.0 {
        if state.qb <= 0.0 {
            stops.tau_b = 0.0;
        }
        if state.qa <= 0.0 {
            stops.tau_a = 0.0;
        }
        if state.z <= 0.0 {
            stops.tau_z = 0.0;
        }
        stops.tau = 0.0;
        state.frozen = true;
    }

    loop {
        let t = arrivals.next(state.qb, state.qa);
        if t > config.horizon {
            break;
        }
        let (j, size) = config.marks.sample_one(&mut marks_rng);
        let kind = OrderKind::from_index(j);
        state.t = t;
        if !state.frozen {
            let dv = size / n;
            match kind {
                OrderKind::Bb => state.qb += dv,
                OrderKind::Mbb => {
                    state.qb -= dv;
                    state.z -= dv;
                }
                OrderKind::Cbb => {
                    let ratio = config.cancellation.apply(state.z / state.qb);
                    state.qb -= dv;
                    state.z -= dv * ratio;
                }
                OrderKind::Ba => state.qa += dv,
                OrderKind::Mba => state.qa -= dv,
                OrderKind::Cba => state.qa -= dv,
            }
            if state.qb <= 0.0 || state.qa <= 0.0 || state.z <= 0.0 {
                if state.qb <= 0.0 {
                    stops.tau_b = t;
                }
                if state.qa <= 0.0 {
                    stops.tau_a = t;
                }
                if state.z <= 0.0 {
                    stops.tau_z = t;
                }
                stops.tau = t;
                state.frozen = true;
            }
            debug_assert!(
                state.frozen || state.z <= state.qb + 1e-9 * (state.qb.abs() + state.z.abs() + 1.0),
                "position exceeded bid queue: z = {}, qb = {}",
                state.z,
                state.qb
            );
        }
        observer.event(kind, size, &state);
        if observer.stop(&state) {
            break;
        }
    }
    Ok(stops)
}

/// One recorded arrival with the post-event scaled state.
#[derive(Debug, Clone, Copy)]
pub struct PathEvent {
    pub time: f64,
    pub kind: OrderKind,
    pub size: f64,
    pub qb: f64,
    pub qa: f64,
    pub z: f64,
}

/// Full trajectory record of one simulated path.
#[derive(Debug, Clone)]
pub struct QueuePath {
    pub events: Vec<PathEvent>,
    pub stops: StopTimes,
    pub n: u64,
    pub horizon: f64,
}

struct Recorder {
    events: Vec<PathEvent>,
}

impl SimObserver for Recorder {
    fn event(&mut self, kind: OrderKind, size: f64, s: &SimState) {
        self.events.push(PathEvent { time: s.t, kind, size, qb: s.qb, qa: s.qa, z: s.z });
    }
}

/// Simulate one path, recording every event.
pub fn simulate_path(config: &SimConfig) -> Result<QueuePath, SimError> {
    let mut rec = Recorder { events: Vec::new() };
    let stops = run_simulation(config, &mut rec)?;
    Ok(QueuePath { events: rec.events, stops, n: config.n, horizon: config.horizon })
}

/// State-dependent variant: requires the linear-intensity arrival spec.
pub fn simulate_state_dependent(config: &SimConfig) -> Result<QueuePath, SimError> {
    if !config.arrival.is_state_dependent() {
        return Err(SimError::WrongArrivalVariant);
    }
    simulate_path(config)
}

/// Scaled and centered flows sampled at event times.
#[derive(Debug, Clone)]
pub struct FlowSeries {
    pub times: Vec<f64>,
    /// C_n(t) = (1/n) Σ_{i ≤ N(nt)} V_i
    pub c: Vec<[f64; 6]>,
    /// Ψ_n(t) = (1/√n)(Σ_{i ≤ N(nt)} V_i − λ V̄ n t)
    pub psi: Vec<[f64; 6]>,
}

/// Flows from the full event stream, ignoring truncation.
pub fn extract_flows(path: &QueuePath, lambda: f64, vbar: &[f64; 6]) -> FlowSeries {
    let n = path.n as f64;
    let sqrt_n = n.sqrt();
    let mut raw = [0.0f64; 6];
    let mut times = Vec::with_capacity(path.events.len());
    let mut c = Vec::with_capacity(path.events.len());
    let mut psi = Vec::with_capacity(path.events.len());
    for ev in &path.events {
        raw[ev.kind.index()] += ev.size;
        times.push(ev.time);
        let mut c_row = [0.0f64; 6];
        let mut psi_row = [0.0f64; 6];
        for k in 0..6 {
            c_row[k] = raw[k] / n;
            psi_row[k] = (raw[k] - lambda * vbar[k] * n * ev.time) / sqrt_n;
        }
        c.push(c_row);
        psi.push(psi_row);
    }
    FlowSeries { times, c, psi }
}

impl QueuePath {
    /// CSV dump `time,type,size,qb,qa,z` (types numbered 1..6).
    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        use crate::output::fmt_f64 as f;
        writeln!(w, "time,type,size,qb,qa,z")?;
        for ev in &self.events {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                f(ev.time),
                ev.kind.index() + 1,
                f(ev.size),
                f(ev.qb),
                f(ev.qa),
                f(ev.z)
            )?;
        }
        Ok(())
    }
}

impl FlowSeries {
    /// CSV dump `time,c1..c6,psi1..psi6`.
    pub fn to_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        use crate::output::fmt_f64 as f;
        write!(w, "time")?;
        for k in 1..=6 {
            write!(w, ",c{k}")?;
        }
        for k in 1..=6 {
            write!(w, ",psi{k}")?;
        }
        writeln!(w)?;
        for (i, &t) in self.times.iter().enumerate() {
            write!(w, "{}", f(t))?;
            for k in 0..6 {
                write!(w, ",{}", f(self.c[i][k]))?;
            }
            for k in 0..6 {
                write!(w, ",{}", f(self.psi[i][k]))?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::order_flow::SizeLaw;

    fn only_type(j: usize, size: f64) -> MarkModel {
        let mut p = [0.0; 6];
        p[j] = 1.0;
        MarkModel::new(p, std::array::from_fn(|_| SizeLaw::Constant { value: size })).unwrap()
    }

    #[test]
    fn market_orders_deplete_position_deterministically() {
        // n=1, only type-2 events of size 1, start (3, 5, 2): after two
        // events Z = 0, Q_b frozen at 1, Q_a untouched
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: only_type(1, 1.0),
            n: 1,
            qb0: 3.0,
            qa0: 5.0,
            z0: 2.0,
            horizon: 50.0,
            cancellation: CancellationRule::Uniform,
            seed: 7,
        };
        let path = simulate_path(&config).unwrap();
        assert!(path.events.len() >= 2);
        let second = path.events[1];
        assert_eq!(second.z, 0.0);
        assert_eq!(second.qb, 1.0);
        assert_eq!(second.qa, 5.0);
        assert_eq!(path.stops.tau_z, second.time);
        assert_eq!(path.stops.tau, second.time);
        assert!(path.stops.tau_b.is_infinite());
        // state frozen afterwards
        for ev in &path.events[2..] {
            assert_eq!(ev.z, 0.0);
            assert_eq!(ev.qb, 1.0);
        }
    }

    #[test]
    fn uniform_cancellation_has_equal_relative_decrements() {
        // single type-3 event: δQ_b/Q_b(t-) = δZ/Z(t-)
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: only_type(2, 0.75),
            n: 1,
            qb0: 4.0,
            qa0: 5.0,
            z0: 2.0,
            horizon: 10.0,
            cancellation: CancellationRule::Uniform,
            seed: 3,
        };
        let path = simulate_path(&config).unwrap();
        let first = path.events[0];
        let dq = (4.0 - first.qb) / 4.0;
        let dz = (2.0 - first.z) / 2.0;
        assert!((dq - dz).abs() < 1e-15, "{dq} vs {dz}");
    }

    #[test]
    fn zero_initial_bid_freezes_at_time_zero() {
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: only_type(0, 1.0),
            n: 1,
            qb0: 0.0,
            qa0: 5.0,
            z0: 0.0,
            horizon: 5.0,
            cancellation: CancellationRule::Uniform,
            seed: 1,
        };
        let path = simulate_path(&config).unwrap();
        assert_eq!(path.stops.tau, 0.0);
        assert_eq!(path.stops.tau_b, 0.0);
        assert_eq!(path.stops.tau_z, 0.0);
        for ev in &path.events {
            assert_eq!(ev.qb, 0.0);
        }
    }

    #[test]
    fn state_dependent_requires_linear_spec() {
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: only_type(0, 1.0),
            n: 1,
            qb0: 1.0,
            qa0: 1.0,
            z0: 0.5,
            horizon: 1.0,
            cancellation: CancellationRule::Uniform,
            seed: 1,
        };
        assert!(matches!(simulate_state_dependent(&config), Err(SimError::WrongArrivalVariant)));
    }

    #[test]
    fn linear_zero_coefficients_equals_poisson_bitwise() {
        let marks = MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap();
        let base = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: marks.clone(),
            n: 100,
            qb0: 10.0,
            qa0: 10.0,
            z0: 10.0,
            horizon: 20.0,
            cancellation: CancellationRule::Uniform,
            seed: 99,
        };
        let linear = SimConfig {
            arrival: PointProcessSpec::LinearStateDependent {
                base: 1.0,
                ask_coeff: 0.0,
                bid_coeff: 0.0,
            },
            ..base.clone()
        };
        let a = simulate_path(&base).unwrap();
        let b = simulate_state_dependent(&linear).unwrap();
        assert_eq!(a.events.len(), b.events.len());
        for (x, y) in a.events.iter().zip(b.events.iter()) {
            assert_eq!(x.time, y.time);
            assert_eq!(x.z, y.z);
        }
    }

    #[test]
    fn position_stays_below_bid_queue_pathwise() {
        // Lemma invariant Z ≤ Q_b and τ_z ≤ τ_b across random regimes
        let marks = MarkModel::new(
            [0.2, 0.25, 0.15, 0.15, 0.15, 0.1],
            [
                SizeLaw::Exponential { mean: 2.0 },
                SizeLaw::Constant { value: 1.5 },
                SizeLaw::GeometricInteger { mean: 3.0 },
                SizeLaw::Exponential { mean: 1.0 },
                SizeLaw::Constant { value: 1.0 },
                SizeLaw::LogNormal { mu_ln: 0.0, sigma_ln: 0.4 },
            ],
        )
        .unwrap();
        for seed in 0..200 {
            let config = SimConfig {
                arrival: PointProcessSpec::Poisson { rate: 1.0 },
                marks: marks.clone(),
                n: 10,
                qb0: 8.0,
                qa0: 6.0,
                z0: 5.0,
                horizon: 30.0,
                cancellation: CancellationRule::Uniform,
                seed,
            };
            let path = simulate_path(&config).unwrap();
            for ev in &path.events {
                if ev.time < path.stops.tau_z.min(path.stops.tau_a) {
                    assert!(
                        ev.z <= ev.qb + 1e-9 * (ev.qb.abs() + ev.z.abs() + 1.0),
                        "seed {seed}: z {} > qb {}",
                        ev.z,
                        ev.qb
                    );
                }
            }
            if path.stops.tau_b.is_finite() {
                assert!(path.stops.tau_z <= path.stops.tau_b);
            }
        }
    }

    #[test]
    fn flows_single_event() {
        // single type-4 event of size 4: C jumps by (0,0,0,4,0,0)
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: only_type(3, 4.0),
            n: 1,
            qb0: 3.0,
            qa0: 5.0,
            z0: 2.0,
            horizon: 30.0,
            cancellation: CancellationRule::Uniform,
            seed: 5,
        };
        let path = simulate_path(&config).unwrap();
        let flows = extract_flows(&path, 1.0, &[0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        assert_eq!(flows.c[0], [0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
        // Ψ at the first event time: (4 - 4·t)/1
        let t0 = flows.times[0];
        assert!((flows.psi[0][3] - (4.0 - 4.0 * t0)).abs() < 1e-12);
    }

    #[test]
    fn flows_are_nondecreasing_componentwise() {
        let marks = MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap();
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks,
            n: 50,
            qb0: 5.0,
            qa0: 5.0,
            z0: 5.0,
            horizon: 10.0,
            cancellation: CancellationRule::Uniform,
            seed: 21,
        };
        let path = simulate_path(&config).unwrap();
        let flows = extract_flows(&path, 1.0, &[1.0, 0.6, 0.8, 1.0, 0.7, 0.8]);
        for w in flows.c.windows(2) {
            for k in 0..6 {
                assert!(w[1][k] >= w[0][k]);
            }
        }
        // Z is nonincreasing along the path
        for w in path.events.windows(2) {
            assert!(w[1].z <= w[0].z + 1e-12);
        }
    }

    #[test]
    fn truncation_freezes_state_exactly() {
        let marks = MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap();
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks,
            n: 20,
            qb0: 2.0,
            qa0: 2.0,
            z0: 2.0,
            horizon: 100.0,
            cancellation: CancellationRule::Uniform,
            seed: 33,
        };
        let path = simulate_path(&config).unwrap();
        let tau = path.stops.tau;
        assert!(tau.is_finite());
        let at_tau = path.events.iter().find(|e| e.time == tau).unwrap();
        for ev in path.events.iter().filter(|e| e.time > tau) {
            assert_eq!(ev.qb, at_tau.qb);
            assert_eq!(ev.qa, at_tau.qa);
            assert_eq!(ev.z, at_tau.z);
        }
    }

    #[test]
    fn csv_schemas() {
        let config = SimConfig {
            arrival: PointProcessSpec::Poisson { rate: 1.0 },
            marks: only_type(0, 1.0),
            n: 1,
            qb0: 1.0,
            qa0: 1.0,
            z0: 1.0,
            horizon: 3.0,
            cancellation: CancellationRule::Uniform,
            seed: 5,
        };
        let path = simulate_path(&config).unwrap();
        let mut buf = Vec::new();
        path.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,type,size,qb,qa,z\n"));
        let flows = extract_flows(&path, 1.0, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let mut buf = Vec::new();
        flows.to_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("time,c1,c2,c3,c4,c5,c6,psi1,psi2,psi3,psi4,psi5,psi6\n"));
    }
}
