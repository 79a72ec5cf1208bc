//! Integration checks of the limit theorems at moderate scale: the
//! state-dependent fluid limit against ensemble means, and the Gaussian
//! fluctuation law of the bid queue at a fixed time.

use rayon::prelude::*;

use lobq::fluid_engine::{CancellationRule, FluidParams, LinearFluidSolution};
use lobq::lob_simulator::{run_simulation, OrderKind, SimConfig, SimObserver, SimState};
use lobq::numerics::ks::{ks_p_value, ks_statistic};
use lobq::numerics::normal::norm_cdf;
use lobq::numerics::stats::batch_se;
use lobq::order_flow::{FlowMoments, MarkModel, PsiConvention};
use lobq::point_processes::PointProcessSpec;
use lobq::rng::Stream;

fn reference_marks() -> MarkModel {
    MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap()
}

struct StateAt {
    t: f64,
    qb: f64,
    qa: f64,
}

impl SimObserver for StateAt {
    fn event(&mut self, _: OrderKind, _: f64, s: &SimState) {
        if s.t <= self.t {
            self.qb = s.qb;
            self.qa = s.qa;
        }
    }
    fn stop(&mut self, s: &SimState) -> bool {
        s.t > self.t
    }
}

/// State-dependent arrivals: the ensemble mean of Q_n^b(1) matches the
/// linear-intensity fluid closed form within 5 batch SEs.
#[test]
fn linear_intensity_simulation_matches_closed_form() {
    let (alpha, beta) = (0.01, 0.01);
    let fluid = FluidParams {
        lambda: 1.0,
        vbar: [1.0, 0.6, 0.8, 1.0, 0.7, 0.8],
        qb0: 100.0,
        qa0: 100.0,
        z0: 100.0,
    };
    let sol = LinearFluidSolution::new(fluid, alpha, beta).unwrap();
    let (qb_target, qa_target) = sol.queues(1.0);

    let n = 2000u64;
    let paths = 400usize;
    let rows: Vec<(f64, f64)> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let config = SimConfig {
                arrival: PointProcessSpec::LinearStateDependent {
                    base: 1.0,
                    ask_coeff: alpha,
                    bid_coeff: beta,
                },
                marks: reference_marks(),
                n,
                qb0: 100.0,
                qa0: 100.0,
                z0: 100.0,
                horizon: 1.01,
                cancellation: CancellationRule::Uniform,
                seed: Stream::new(0x11ea_0001, p as u64).next_u64(),
            };
            let mut obs = StateAt { t: 1.0, qb: 100.0, qa: 100.0 };
            run_simulation(&config, &mut obs).unwrap();
            (obs.qb, obs.qa)
        })
        .collect();
    let qb: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let qa: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let qb_est = batch_se(&qb, 30);
    let qa_est = batch_se(&qa, 30);
    assert!(
        (qb_est.mean - qb_target).abs() <= 5.0 * qb_est.se,
        "Q_b(1): {} vs {qb_target} (se {})",
        qb_est.mean,
        qb_est.se
    );
    assert!(
        (qa_est.mean - qa_target).abs() <= 5.0 * qa_est.se,
        "Q_a(1): {} vs {qa_target} (se {})",
        qa_est.mean,
        qa_est.se
    );
}

/// Fluctuation theorem at a fixed time: √n(Q_n^b(t) − Q^b(t)) is centered
/// Gaussian with variance (ψ₁₁+ψ₂₂+ψ₃₃−2ψ₁₂−2ψ₁₃+2ψ₂₃)·t; KS p > 0.01.
#[test]
fn queue_fluctuation_gaussian_ks() {
    let marks = reference_marks();
    let moments = FlowMoments::compute(&marks, 1.0, 1.0, PsiConvention::DiffusionTheorem).unwrap();
    let psi = &moments.psi;
    let combo =
        psi[0][0] + psi[1][1] + psi[2][2] - 2.0 * psi[0][1] - 2.0 * psi[0][2] + 2.0 * psi[1][2];
    let t = 1.0;
    let sd = (combo * t).sqrt();

    let n = 10_000u64;
    let paths = 10_000usize;
    let qb_fluid = 100.0 - 0.4 * t;
    let mut scaled: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let config = SimConfig {
                arrival: PointProcessSpec::Poisson { rate: 1.0 },
                marks: reference_marks(),
                n,
                qb0: 100.0,
                qa0: 100.0,
                z0: 100.0,
                horizon: t,
                cancellation: CancellationRule::Uniform,
                seed: Stream::new(0x11ea_0002, p as u64).next_u64(),
            };
            let mut obs = StateAt { t, qb: 100.0, qa: 100.0 };
            run_simulation(&config, &mut obs).unwrap();
            (n as f64).sqrt() * (obs.qb - qb_fluid)
        })
        .collect();
    let d = ks_statistic(&mut scaled, |x| norm_cdf(x / sd));
    let p = ks_p_value(d, paths);
    assert!(p > 0.01, "KS p = {p}, D = {d}, sd = {sd}");
}
