//! Monte Carlo experiments binding the simulator to the analytic engines.
//!
//! Every experiment takes a master seed, fans paths out across the rayon
//! pool with one counter-based stream per path, and aggregates in a fixed
//! order (pairwise summation), so reports are bit-reproducible for a given
//! (config, master seed) regardless of thread count. Standard errors come
//! from path-level batching with at least 30 batches.

use rayon::prelude::*;

use crate::diffusion_engine::{
    execution_time_fluct_cdf, fluctuation_variance_psi, DiffusionParams, SigmaYMode,
};
use crate::fluid_engine::{CancellationRule, FluidParams, FluidSolution};
use crate::lob_simulator::{run_simulation, OrderKind, SimConfig, SimObserver, SimState};
use crate::numerics::ks::{ks_p_value, ks_statistic};
use crate::numerics::normal::norm_cdf;
use crate::numerics::stats::{batch_se, mean, mean_cov6, pairwise_sum, variance};
use crate::order_flow::{FlowMoments, MarkModel, PsiConvention};
use crate::output::Json;
use crate::point_processes::{clt_variance, stationary_rate, PointProcessSpec};
use crate::rng::Stream;

/// One verified statistic: a value, its target, and the declared tolerance.
#[derive(Debug, Clone)]
pub struct StatLine {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub se: Option<f64>,
    /// human-readable tolerance declaration, e.g. "5 SE" or "abs 1e-8"
    pub tolerance: String,
    pub pass: bool,
}

impl StatLine {
    fn against_se(name: &str, value: f64, target: f64, se: f64, k: f64) -> StatLine {
        StatLine {
            name: name.to_string(),
            value,
            target,
            se: Some(se),
            tolerance: format!("{k} SE"),
            pass: (value - target).abs() <= k * se,
        }
    }

    fn against_abs(name: &str, value: f64, target: f64, tol: f64) -> StatLine {
        StatLine {
            name: name.to_string(),
            value,
            target,
            se: None,
            tolerance: format!("abs {tol:.2e}"),
            pass: (value - target).abs() <= tol,
        }
    }

    fn threshold(name: &str, value: f64, target: f64, above: bool) -> StatLine {
        StatLine {
            name: name.to_string(),
            value,
            target,
            se: None,
            tolerance: if above { format!("> {target}") } else { format!("< {target}") },
            pass: if above { value > target } else { value < target },
        }
    }
}

/// Outcome of one experiment; `passed` is the conjunction of all stats.
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub name: String,
    pub params: Vec<(String, String)>,
    pub stats: Vec<StatLine>,
    pub passed: bool,
    pub wall_ms: u128,
}

impl ExperimentReport {
    fn new(name: &str, params: Vec<(String, String)>, stats: Vec<StatLine>, start: std::time::Instant) -> Self {
        let passed = stats.iter().all(|s| s.pass);
        ExperimentReport {
            name: name.to_string(),
            params,
            stats,
            passed,
            wall_ms: start.elapsed().as_millis(),
        }
    }

    pub fn to_json(&self) -> Json {
        let mut o = Json::obj();
        o.push("experiment", Json::Str(self.name.clone()));
        let mut params = Json::obj();
        for (k, v) in &self.params {
            params.push(k, Json::Str(v.clone()));
        }
        o.push("params", params);
        let mut stats = Vec::new();
        for s in &self.stats {
            let mut line = Json::obj();
            line.push("name", Json::Str(s.name.clone()));
            line.push("value", Json::Num(s.value));
            line.push("target", Json::Num(s.target));
            line.push("se", s.se.map_or(Json::Null, Json::Num));
            line.push("tolerance", Json::Str(s.tolerance.clone()));
            line.push("pass", Json::Bool(s.pass));
            stats.push(line);
        }
        o.push("stats", Json::Arr(stats));
        o.push("passed", Json::Bool(self.passed));
        o.push("wall_ms", Json::Int(self.wall_ms as i64));
        o
    }

    pub fn render_text(&self) -> String {
        let mut out = format!("== {} ({} ms)\n", self.name, self.wall_ms);
        for (k, v) in &self.params {
            out.push_str(&format!("   {k} = {v}\n"));
        }
        for s in &self.stats {
            let se = s.se.map_or(String::new(), |e| format!(" (se {e:.3e})"));
            out.push_str(&format!(
                "   [{}] {}: {:.6e} vs {:.6e}{} within {}\n",
                if s.pass { "pass" } else { "FAIL" },
                s.name,
                s.value,
                s.target,
                se,
                s.tolerance
            ));
        }
        out.push_str(&format!("   => {}\n", if self.passed { "PASSED" } else { "FAILED" }));
        out
    }
}

/// Reference simulation regime used across experiments: λ = 1, the worked
/// mean-mark vector, constant sizes, uniform cancellation.
pub fn reference_sim_config(n: u64, horizon: f64, seed: u64) -> SimConfig {
    SimConfig {
        arrival: PointProcessSpec::Poisson { rate: 1.0 },
        marks: MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap(),
        n,
        qb0: 100.0,
        qa0: 100.0,
        z0: 100.0,
        horizon,
        cancellation: CancellationRule::Uniform,
        seed,
    }
}

fn path_seed(master: u64, path: u64) -> u64 {
    Stream::new(master, path).next_u64()
}

// ---------------------------------------------------------------------------
// fluid convergence
// ---------------------------------------------------------------------------

/// Streaming sup-error of the simulated triple against the fluid solution on
/// [0, t_cap]. Piecewise-constant paths are compared at both ends of every
/// constant piece.
struct SupErrorObserver<'a> {
    sol: &'a FluidSolution,
    t_cap: f64,
    prev: Option<SimState>,
    sup_z: f64,
    sup_qb: f64,
    sup_qa: f64,
}

impl<'a> SupErrorObserver<'a> {
    fn new(sol: &'a FluidSolution, t_cap: f64, qb0: f64, qa0: f64, z0: f64) -> Self {
        let mut me = SupErrorObserver { sol, t_cap, prev: None, sup_z: 0.0, sup_qb: 0.0, sup_qa: 0.0 };
        // initial condition counts as a comparison point
        me.compare_at(0.0, qb0, qa0, z0);
        me
    }

    fn compare_at(&mut self, t: f64, qb: f64, qa: f64, z: f64) {
        let tt = t.min(self.t_cap);
        let (fqb, fqa) = self.sol.queues(tt);
        let fz = self.sol.position(tt);
        self.sup_qb = self.sup_qb.max((qb - fqb).abs());
        self.sup_qa = self.sup_qa.max((qa - fqa).abs());
        self.sup_z = self.sup_z.max((z - fz).abs());
    }
}

impl SimObserver for SupErrorObserver<'_> {
    fn event(&mut self, _kind: OrderKind, _size: f64, s: &SimState) {
        if let Some(p) = self.prev {
            // the held value just before this jump
            self.compare_at(s.t.min(self.t_cap), p.qb, p.qa, p.z);
        }
        if s.t <= self.t_cap {
            self.compare_at(s.t, s.qb, s.qa, s.z);
        }
        self.prev = Some(*s);
    }
    fn stop(&mut self, s: &SimState) -> bool {
        s.t > self.t_cap
    }
}

/// Median sup-errors of (Q_b, Q_a, Z) against the fluid limit over `seeds`
/// seeds for each n in `n_list`; checks the factor-3 decay between the
/// smallest and largest n.
pub fn fluid_convergence_experiment(
    base: &SimConfig,
    n_list: &[u64],
    seeds: usize,
    master_seed: u64,
) -> ExperimentReport {
    let start = std::time::Instant::now();
    let fluid = FluidParams {
        lambda: stationary_rate(&base.arrival).unwrap_or(1.0),
        vbar: crate::order_flow::mean_vector(&base.marks),
        qb0: base.qb0,
        qa0: base.qa0,
        z0: base.z0,
    };
    let sol = FluidSolution::new(fluid).expect("valid fluid regime");
    let t_cap = 0.9 * sol.tau;

    let mut medians = Vec::new();
    for (ni, &n) in n_list.iter().enumerate() {
        let errs: Vec<(f64, f64, f64)> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let mut config = base.clone();
                config.n = n;
                config.horizon = t_cap * 1.001;
                config.seed = path_seed(master_seed, (ni * seeds + s) as u64);
                let mut obs = SupErrorObserver::new(&sol, t_cap, config.qb0, config.qa0, config.z0);
                run_simulation(&config, &mut obs).expect("simulation");
                (obs.sup_z, obs.sup_qb, obs.sup_qa)
            })
            .collect();
        let median = |mut xs: Vec<f64>| -> f64 {
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            xs[xs.len() / 2]
        };
        let ez = median(errs.iter().map(|e| e.0).collect());
        let eqb = median(errs.iter().map(|e| e.1).collect());
        let eqa = median(errs.iter().map(|e| e.2).collect());
        medians.push((n, ez, eqb, eqa));
    }

    let mut stats = Vec::new();
    for &(n, ez, eqb, eqa) in &medians {
        stats.push(StatLine {
            name: format!("median sup|Z_n - Z| at n = {n}"),
            value: ez,
            target: 0.0,
            se: None,
            tolerance: "finite (reported)".into(),
            pass: ez.is_finite(),
        });
        stats.push(StatLine {
            name: format!("median sup|Q_n - Q| at n = {n}"),
            value: eqb.max(eqa),
            target: 0.0,
            se: None,
            tolerance: "finite (reported)".into(),
            pass: eqb.is_finite() && eqa.is_finite(),
        });
    }
    if medians.len() >= 2 {
        let first = medians.first().unwrap();
        let last = medians.last().unwrap();
        stats.push(StatLine::threshold(
            &format!("decay factor e({}) / e({})", first.0, last.0),
            first.1 / last.1,
            3.0,
            true,
        ));
        let monotone = medians.windows(2).all(|w| w[1].1 <= w[0].1 * 1.25);
        stats.push(StatLine {
            name: "median Z-error decays along n_list".into(),
            value: if monotone { 1.0 } else { 0.0 },
            target: 1.0,
            se: None,
            tolerance: "monotone up to 25% slack".into(),
            pass: monotone,
        });
    }
    ExperimentReport::new(
        "fluid_convergence",
        vec![
            ("n_list".into(), format!("{n_list:?}")),
            ("seeds".into(), seeds.to_string()),
            ("t_cap".into(), format!("{t_cap}")),
            ("master_seed".into(), master_seed.to_string()),
        ],
        stats,
        start,
    )
}

// ---------------------------------------------------------------------------
// diffusion covariance of the centered flows
// ---------------------------------------------------------------------------

struct FlowSumObserver {
    raw: [f64; 6],
}

impl SimObserver for FlowSumObserver {
    fn event(&mut self, kind: OrderKind, size: f64, _s: &SimState) {
        self.raw[kind.index()] += size;
    }
}

/// Empirical mean and covariance of Ψ_n(1) over many paths against the
/// Brownian-limit target λ Σ Σᵀ + v_d² V̄ V̄ᵀ · λ^κ.
pub fn covariance_experiment(
    arrival: &PointProcessSpec,
    marks: &MarkModel,
    n: u64,
    paths: usize,
    master_seed: u64,
) -> ExperimentReport {
    let start = std::time::Instant::now();
    let lambda = stationary_rate(arrival).expect("stationary arrival spec");
    let vd2 = clt_variance(arrival).expect("stationary arrival spec");
    let moments = FlowMoments::compute(marks, lambda, vd2, PsiConvention::DiffusionTheorem)
        .expect("valid marks");
    let vbar = moments.vbar;

    let rows: Vec<[f64; 6]> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let config = SimConfig {
                arrival: arrival.clone(),
                marks: marks.clone(),
                n,
                qb0: 1.0,
                qa0: 1.0,
                z0: 1.0,
                horizon: 1.0,
                cancellation: CancellationRule::Uniform,
                seed: path_seed(master_seed, p as u64),
            };
            let mut obs = FlowSumObserver { raw: [0.0; 6] };
            run_simulation(&config, &mut obs).expect("simulation");
            let nn = n as f64;
            std::array::from_fn(|j| (obs.raw[j] - lambda * vbar[j] * nn) / nn.sqrt())
        })
        .collect();

    let (emp_mean, emp_cov) = mean_cov6(&rows);

    // per-entry batch standard errors
    let b = 30usize;
    let per = paths / b;
    let mut cov_se = [[0.0f64; 6]; 6];
    let mut mean_se = [0.0f64; 6];
    {
        let mut batch_covs: Vec<[[f64; 6]; 6]> = Vec::with_capacity(b);
        let mut batch_means: Vec<[f64; 6]> = Vec::with_capacity(b);
        for i in 0..b {
            let chunk = &rows[i * per..(i + 1) * per];
            let (m, c) = mean_cov6(chunk);
            batch_means.push(m);
            batch_covs.push(c);
        }
        for j in 0..6 {
            let col: Vec<f64> = batch_means.iter().map(|m| m[j]).collect();
            mean_se[j] = (variance(&col) / b as f64).sqrt();
            for k in 0..6 {
                let col: Vec<f64> = batch_covs.iter().map(|c| c[j][k]).collect();
                cov_se[j][k] = (variance(&col) / b as f64).sqrt();
            }
        }
    }

    // target: λ a + λ^κ v_d² V̄ V̄ᵀ for the three candidate powers κ = 0, 1, 3
    let target = |pow: f64| -> [[f64; 6]; 6] {
        let scale = vd2 * lambda.powf(pow);
        let mut t = [[0.0f64; 6]; 6];
        for j in 0..6 {
            for k in 0..6 {
                t[j][k] = lambda * moments.a[j][k] + scale * vbar[j] * vbar[k];
            }
        }
        t
    };
    let t_diff = target(1.0);

    let mut stats = Vec::new();
    let mut worst_mean: (f64, f64) = (0.0, 1.0);
    for j in 0..6 {
        let dev = emp_mean[j].abs() / mean_se[j].max(1e-300);
        if dev > worst_mean.0 / worst_mean.1 {
            worst_mean = (emp_mean[j].abs(), mean_se[j]);
        }
    }
    stats.push(StatLine::against_se(
        "worst |mean Ψ_n(1)| entry",
        worst_mean.0,
        0.0,
        worst_mean.1,
        5.0,
    ));
    // the covariance test keys on the diffusion-theorem convention; the
    // candidate targets for other λ-powers are reported alongside
    let mut worst: (usize, usize, f64) = (0, 0, 0.0);
    for j in 0..6 {
        for k in 0..6 {
            let dev = (emp_cov[j][k] - t_diff[j][k]).abs() / cov_se[j][k].max(1e-300);
            if dev > worst.2 {
                worst = (j, k, dev);
            }
        }
    }
    let (wj, wk, _) = worst;
    stats.push(StatLine::against_se(
        &format!("worst Cov(Ψ_n(1)) entry ({},{})", wj + 1, wk + 1),
        emp_cov[wj][wk],
        t_diff[wj][wk],
        cov_se[wj][wk],
        5.0,
    ));
    if (lambda - 1.0).abs() > 1e-12 {
        // at λ ≠ 1 the conventions differ; report which power the data picks
        for pow in [0.0, 1.0, 3.0] {
            let t = target(pow);
            let dev11 = (emp_cov[0][0] - t[0][0]).abs() / cov_se[0][0].max(1e-300);
            stats.push(StatLine {
                name: format!("Var(Ψ¹(1)) deviation at λ-power {pow} [reported]"),
                value: dev11,
                target: 0.0,
                se: None,
                tolerance: "reported only".into(),
                pass: true,
            });
        }
    }
    ExperimentReport::new(
        "covariance",
        vec![
            ("arrival".into(), format!("{arrival:?}")),
            ("n".into(), n.to_string()),
            ("paths".into(), paths.to_string()),
            ("lambda".into(), format!("{lambda}")),
            ("vd2".into(), format!("{vd2}")),
            ("master_seed".into(), master_seed.to_string()),
        ],
        stats,
        start,
    )
}

// ---------------------------------------------------------------------------
// first-passage Monte Carlo (Euler–Maruyama with bridge crossing correction)
// ---------------------------------------------------------------------------

struct ExitSample {
    /// time of exit, or the cap if censored
    time: f64,
    /// Some(true) if the bid side (R_b) hit first
    bid_first: Option<bool>,
    /// Rao–Blackwell tail value θ(X)/α for censored zero-drift paths
    tail_theta_over_alpha: f64,
}

fn simulate_exit(
    params: &DiffusionParams,
    dt: f64,
    t_cap: f64,
    rng: &mut Stream,
) -> ExitSample {
    // lower Cholesky of the 2×2 covariance
    let l11 = params.sigma1;
    let l21 = params.rho * params.sigma2;
    let l22 = params.sigma2 * (1.0 - params.rho * params.rho).sqrt();
    let sdt = dt.sqrt();
    let var_b = params.cov[0][0] * dt;
    let var_a = params.cov[1][1] * dt;

    let mut xb = params.qb;
    let mut xa = params.qa;
    let mut t = 0.0;
    while t < t_cap {
        let z1 = rng.normal();
        let z2 = rng.normal();
        let nb = xb + params.mu[0] * dt + sdt * l11 * z1;
        let na = xa + params.mu[1] * dt + sdt * (l21 * z1 + l22 * z2);
        let t_next = t + dt;
        // endpoint crossings, with linear-interpolation time estimates
        let cross_b_end = nb <= 0.0;
        let cross_a_end = na <= 0.0;
        // Brownian-bridge crossing probabilities for interior dips
        let p_b = if !cross_b_end { (-2.0 * xb * nb / var_b).exp() } else { 1.0 };
        let p_a = if !cross_a_end { (-2.0 * xa * na / var_a).exp() } else { 1.0 };
        let u_b = if p_b > 0.0 && p_b < 1.0 { rng.uniform() } else { 0.5 };
        let u_a = if p_a > 0.0 && p_a < 1.0 { rng.uniform() } else { 0.5 };
        let hit_b = cross_b_end || u_b < p_b;
        let hit_a = cross_a_end || u_a < p_a;
        if hit_b || hit_a {
            // estimated within-step crossing fractions to order the hits
            let frac = |x0: f64, x1: f64| -> f64 {
                if x1 <= 0.0 {
                    (x0 / (x0 - x1)).clamp(0.0, 1.0)
                } else {
                    0.5
                }
            };
            let fb = if hit_b { frac(xb, nb) } else { f64::INFINITY };
            let fa = if hit_a { frac(xa, na) } else { f64::INFINITY };
            let (bid, f) = if fb <= fa { (true, fb) } else { (false, fa) };
            return ExitSample {
                time: t + f.min(1.0) * dt,
                bid_first: Some(bid),
                tail_theta_over_alpha: 0.0,
            };
        }
        xb = nb;
        xa = na;
        t = t_next;
    }
    // censored: for zero drift the side probability from the current point
    // is exactly θ(X)/α by scale invariance
    let root = (1.0 - params.rho * params.rho).sqrt();
    let u = xb / params.sigma1;
    let v = xa / params.sigma2;
    let theta = (v * root).atan2(u - params.rho * v);
    ExitSample { time: t_cap, bid_first: None, tail_theta_over_alpha: theta / params.alpha }
}

/// Compare the analytic price-decrease probability and the survival curve
/// against a bridge-corrected Euler–Maruyama exit ensemble.
pub fn hitting_probability_experiment(
    params: &DiffusionParams,
    paths: usize,
    survival_times: &[f64],
    master_seed: u64,
) -> ExperimentReport {
    let start = std::time::Instant::now();
    let dt = 1e-4;
    let t_cap = 60.0 * (params.r0 * params.r0 + 1.0);

    let samples: Vec<ExitSample> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = Stream::new(path_seed(master_seed, p as u64), 2);
            simulate_exit(params, dt, t_cap, &mut rng)
        })
        .collect();

    // price decrease: exits count 0/1, censored zero-drift paths contribute
    // their exact conditional probability
    let contributions: Vec<f64> = samples
        .iter()
        .map(|s| match s.bid_first {
            Some(true) => 1.0,
            Some(false) => 0.0,
            None => {
                if params.is_zero_drift() {
                    s.tail_theta_over_alpha
                } else {
                    0.5 // censored drifted path: should be vanishingly rare
                }
            }
        })
        .collect();
    let censored = samples.iter().filter(|s| s.bid_first.is_none()).count();
    let est = batch_se(&contributions, 30);
    let analytic = crate::diffusion_engine::price_decrease_probability(params, 1e-9)
        .expect("price decrease");

    let mut stats = vec![StatLine::against_se(
        "P(bid depletes first)",
        est.mean,
        analytic.value,
        est.se,
        3.0,
    )];
    if params.is_zero_drift() {
        // censored paths carry their exact conditional probability θ(X)/α,
        // so censoring does not bias the estimate; report it only
        stats.push(StatLine {
            name: "censored fraction [reported]".into(),
            value: censored as f64 / paths as f64,
            target: 0.0,
            se: None,
            tolerance: "reported only".into(),
            pass: true,
        });
    } else {
        stats.push(StatLine::threshold(
            "censored fraction",
            censored as f64 / paths as f64,
            1e-3,
            false,
        ));
    }

    for &t in survival_times {
        let alive: Vec<f64> =
            samples.iter().map(|s| if s.time > t { 1.0 } else { 0.0 }).collect();
        let est = batch_se(&alive, 30);
        let analytic = crate::diffusion_engine::survival_probability(params, t, 1e-10)
            .expect("survival series");
        stats.push(StatLine::against_se(
            &format!("P(no depletion by t = {t})"),
            est.mean,
            analytic.value,
            est.se,
            3.0,
        ));
    }

    ExperimentReport::new(
        "hitting_probability",
        vec![
            ("paths".into(), paths.to_string()),
            ("dt".into(), format!("{dt}")),
            ("mu".into(), format!("{:?}", params.mu)),
            ("theta0/alpha".into(), format!("{}", params.theta0 / params.alpha)),
            ("master_seed".into(), master_seed.to_string()),
        ],
        stats,
        start,
    )
}

// ---------------------------------------------------------------------------
// execution- and depletion-time fluctuations
// ---------------------------------------------------------------------------

struct TauZObserver;

impl SimObserver for TauZObserver {
    fn event(&mut self, _: OrderKind, _: f64, _: &SimState) {}
    fn stop(&mut self, s: &SimState) -> bool {
        s.frozen
    }
}

/// Untruncated bid-queue depletion: tracks q_b + (C¹ - C² - C³) ignoring the
/// freeze, recording its first crossing of zero.
struct UntruncatedBidObserver {
    n: f64,
    qb: f64,
    tau: Option<f64>,
}

impl SimObserver for UntruncatedBidObserver {
    fn event(&mut self, kind: OrderKind, size: f64, s: &SimState) {
        match kind {
            OrderKind::Bb => self.qb += size / self.n,
            OrderKind::Mbb | OrderKind::Cbb => self.qb -= size / self.n,
            _ => {}
        }
        if self.tau.is_none() && self.qb <= 0.0 {
            self.tau = Some(s.t);
        }
    }
    fn stop(&mut self, _: &SimState) -> bool {
        self.tau.is_some()
    }
}

/// KS tests of √n(τ_n^z − τ^z) against N(0, σ_Y²(τ^z)/a²) and of the
/// untruncated bid depletion √n(τ_n^b − τ^b) against its Gaussian limit.
pub fn tau_fluctuation_experiment(
    n: u64,
    paths: usize,
    depletion_paths: usize,
    master_seed: u64,
) -> ExperimentReport {
    let start = std::time::Instant::now();
    let fluid = crate::fluid_engine::reference_regime();
    let sol = FluidSolution::new(fluid.clone()).unwrap();
    let marks = MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap();
    let moments = FlowMoments::compute(&marks, 1.0, 1.0, PsiConvention::DiffusionTheorem).unwrap();

    // σ_Y² at the execution time from the quadrature route
    let sigma_y2 = fluctuation_variance_psi(&fluid, &moments.psi, sol.tau_z, SigmaYMode::Quadrature)
        .expect("sigma_Y^2");
    let a = fluid.coeff_a();
    let sd_exec = sigma_y2.sqrt() / a;

    let tau_z: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut config = reference_sim_config(n, sol.tau_z * 1.6 + 5.0, 0);
            config.seed = path_seed(master_seed, p as u64);
            let mut obs = TauZObserver;
            let stops = run_simulation(&config, &mut obs).expect("simulation");
            stops.tau_z
        })
        .collect();

    let mut scaled: Vec<f64> = tau_z
        .iter()
        .filter(|t| t.is_finite())
        .map(|t| (n as f64).sqrt() * (t - sol.tau_z))
        .collect();
    let missing = paths - scaled.len();
    let d = ks_statistic(&mut scaled, |x| norm_cdf(x / sd_exec));
    let p_value = ks_p_value(d, scaled.len());

    // median x = 0 sanity: the empirical tail at 0 should be ~1/2
    let above_zero: Vec<f64> =
        scaled.iter().map(|&x| if x >= 0.0 { 1.0 } else { 0.0 }).collect();
    let med = batch_se(&above_zero, 30);
    // analytic CDF value at a reference offset, for the report
    let formula_at = execution_time_fluct_cdf(&fluid, sigma_y2.sqrt(), -10.0 / (n as f64).sqrt())
        .unwrap_or(f64::NAN);
    let emp_at: f64 = {
        let x = -10.0;
        let cnt = scaled.iter().filter(|&&v| v >= x).count();
        cnt as f64 / scaled.len() as f64
    };

    let mut stats = vec![
        StatLine::threshold("KS p-value of √n(τ_n^z − τ^z)", p_value, 0.01, true),
        StatLine::against_se("empirical P(√n(τ_n^z − τ^z) ≥ 0)", med.mean, 0.5, med.se, 3.0),
        StatLine::against_se(
            "empirical tail at x = -10",
            emp_at,
            1.0 - norm_cdf(-10.0 / sd_exec),
            (emp_at * (1.0 - emp_at) / scaled.len() as f64).sqrt().max(1e-6),
            3.0,
        ),
        StatLine {
            name: "paths with no execution within horizon".into(),
            value: missing as f64,
            target: 0.0,
            se: None,
            tolerance: "= 0".into(),
            pass: missing == 0,
        },
        StatLine {
            name: "analytic tail at x = -10/√n [reported]".into(),
            value: formula_at,
            target: formula_at,
            se: None,
            tolerance: "reported only".into(),
            pass: true,
        },
    ];

    // untruncated bid depletion against its Gaussian limit. The limiting
    // variance follows from the delta method: the centered bid queue at τ^b
    // has variance combo·τ^b and the fluid slope there is λv_b, so
    // Var(√n(τ_n^b − τ^b)) = combo·τ^b/(λv_b)². (The closed-form display of
    // depletion_time_fluct_cdf uses a scale smaller by the factor τ^b; the
    // Monte Carlo here arbitrates, and the display value is reported
    // alongside.)
    if depletion_paths > 0 {
        let combo = moments.psi[0][0] + moments.psi[1][1] + moments.psi[2][2]
            - 2.0 * moments.psi[0][1]
            - 2.0 * moments.psi[0][2]
            + 2.0 * moments.psi[1][2];
        let slope = fluid.lambda * fluid.vb();
        let sd_dep = (combo * sol.tau_b).sqrt() / slope;
        let sd_display = (combo / (fluid.qb0 * fluid.lambda * fluid.vb())).sqrt();
        let taus: Vec<f64> = (0..depletion_paths)
            .into_par_iter()
            .map(|p| {
                let mut config = reference_sim_config(n, sol.tau_b * 1.6 + 5.0, 0);
                config.seed = path_seed(master_seed ^ 0x5eed_0002, p as u64);
                let mut obs = UntruncatedBidObserver { n: n as f64, qb: config.qb0, tau: None };
                run_simulation(&config, &mut obs).expect("simulation");
                obs.tau.unwrap_or(f64::INFINITY)
            })
            .collect();
        let mut scaled: Vec<f64> = taus
            .iter()
            .filter(|t| t.is_finite())
            .map(|t| (n as f64).sqrt() * (t - sol.tau_b))
            .collect();
        let d = ks_statistic(&mut scaled, |x| norm_cdf(x / sd_dep));
        stats.push(StatLine::threshold(
            "KS distance of √n(τ_n^b − τ^b), untruncated bid",
            d,
            0.05,
            false,
        ));
        stats.push(StatLine::threshold(
            "KS p-value of √n(τ_n^b − τ^b)",
            ks_p_value(d, scaled.len()),
            0.01,
            true,
        ));
        stats.push(StatLine {
            name: "depletion sd: delta-method vs closed-form display [reported]".into(),
            value: sd_dep,
            target: sd_display,
            se: None,
            tolerance: "reported only".into(),
            pass: true,
        });
    }

    ExperimentReport::new(
        "tau_fluctuation",
        vec![
            ("n".into(), n.to_string()),
            ("paths".into(), paths.to_string()),
            ("depletion_paths".into(), depletion_paths.to_string()),
            ("sigma_Y2(tau_z)".into(), format!("{sigma_y2}")),
            ("sd_exec".into(), format!("{sd_exec}")),
            ("master_seed".into(), master_seed.to_string()),
        ],
        stats,
        start,
    )
}

/// n·Var(Z_n(t) − Z(t)) against the σ_Y²(t) quadrature at a fixed time.
pub fn position_fluctuation_experiment(
    n: u64,
    paths: usize,
    t: f64,
    rel_tol: f64,
    master_seed: u64,
) -> ExperimentReport {
    let start = std::time::Instant::now();
    let fluid = crate::fluid_engine::reference_regime();
    let sol = FluidSolution::new(fluid.clone()).unwrap();
    let marks = MarkModel::constant_sizes_for_mean([1.0, 0.6, 0.8, 1.0, 0.7, 0.8]).unwrap();
    let moments = FlowMoments::compute(&marks, 1.0, 1.0, PsiConvention::DiffusionTheorem).unwrap();
    let sigma_y2 =
        fluctuation_variance_psi(&fluid, &moments.psi, t, SigmaYMode::Quadrature).unwrap();

    struct ZAtObserver {
        t: f64,
        z: f64,
    }
    impl SimObserver for ZAtObserver {
        fn event(&mut self, _: OrderKind, _: f64, s: &SimState) {
            if s.t <= self.t {
                self.z = s.z;
            }
        }
        fn stop(&mut self, s: &SimState) -> bool {
            s.t > self.t
        }
    }

    let z_t = sol.position(t);
    let devs: Vec<f64> = (0..paths)
        .into_par_iter()
        .map(|p| {
            let mut config = reference_sim_config(n, t * 1.01, 0);
            config.seed = path_seed(master_seed ^ 0x5eed_0003, p as u64);
            let mut obs = ZAtObserver { t, z: config.z0 };
            run_simulation(&config, &mut obs).expect("simulation");
            (n as f64).sqrt() * (obs.z - z_t)
        })
        .collect();
    let emp_var = variance(&devs);
    // MC se of a variance estimate ≈ var · sqrt(2/(paths-1))
    let se = emp_var * (2.0 / (paths as f64 - 1.0)).sqrt();

    let stats = vec![StatLine {
        name: format!("n·Var(Z_n({t}) − Z({t}))"),
        value: emp_var,
        target: sigma_y2,
        se: Some(se),
        tolerance: format!("rel {rel_tol}"),
        pass: (emp_var - sigma_y2).abs() <= rel_tol * sigma_y2,
    }];
    ExperimentReport::new(
        "position_fluctuation",
        vec![
            ("n".into(), n.to_string()),
            ("paths".into(), paths.to_string()),
            ("t".into(), format!("{t}")),
            ("master_seed".into(), master_seed.to_string()),
        ],
        stats,
        start,
    )
}

// ---------------------------------------------------------------------------
// the SDE-limit counterexample demonstration
// ---------------------------------------------------------------------------

/// Exact distribution of K = #{i ≤ n : X_i = +1} for the two-state chain
/// with stay probability 3/4 and a uniform start, by dynamic programming.
fn chain_plus_count_distribution(n: usize) -> Vec<f64> {
    // f[k] split by current state; indexing k = number of +1 steps so far
    let mut plus = vec![0.0f64; n + 1];
    let mut minus = vec![0.0f64; n + 1];
    plus[1] = 0.5;
    minus[0] = 0.5;
    for _step in 1..n {
        let mut next_plus = vec![0.0f64; n + 1];
        let mut next_minus = vec![0.0f64; n + 1];
        for k in 0..=n {
            let p = plus[k];
            if p > 0.0 {
                if k + 1 <= n {
                    next_plus[k + 1] += 0.75 * p;
                }
                next_minus[k] += 0.25 * p;
            }
            let m = minus[k];
            if m > 0.0 {
                if k + 1 <= n {
                    next_plus[k + 1] += 0.25 * m;
                }
                next_minus[k] += 0.75 * m;
            }
        }
        plus = next_plus;
        minus = next_minus;
    }
    (0..=n).map(|k| plus[k] + minus[k]).collect()
}

/// Demonstrates that the product Y_n(t) = Π(1 + X_i/√n) built from the
/// correlated ±1 chain does NOT converge to the naive SDE limit: the second
/// moment identifies exp(√3 B − t/2) (moment e⁵ at t = 1) against the naive
/// exp(√3 B − 3t/2) (moment e³).
pub fn example1_demo(n: usize, paths: usize, master_seed: u64) -> ExperimentReport {
    let start = std::time::Instant::now();
    let sqrt_n = (n as f64).sqrt();
    let u_plus = (1.0 + 1.0 / sqrt_n).ln();
    let u_minus = (1.0 - 1.0 / sqrt_n).ln();

    let dist = chain_plus_count_distribution(n);
    // exact finite-n moments from the DP distribution (the simulation oracle)
    let y_of_k: Vec<f64> =
        (0..=n).map(|k| (k as f64 * u_plus + (n - k) as f64 * u_minus).exp()).collect();
    let exact_m1: f64 = pairwise_sum(
        &dist.iter().zip(&y_of_k).map(|(p, y)| p * y).collect::<Vec<_>>(),
    );
    let exact_m2: f64 = pairwise_sum(
        &dist.iter().zip(&y_of_k).map(|(p, y)| p * y * y).collect::<Vec<_>>(),
    );

    // sample Y_n(1) by inversion of the exact K distribution; the second
    // moment is heavy-tailed, so stream batch sums instead of storing the
    // sample (40 batches, one stream per batch, deterministic)
    let cdf: Vec<f64> = {
        let mut acc = 0.0;
        dist.iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    };
    let batches = 40usize;
    let per = (paths / batches).max(1);
    let batch_means: Vec<f64> = (0..batches)
        .into_par_iter()
        .map(|b| {
            let mut rng = Stream::new(path_seed(master_seed ^ 0x5eed_0004, b as u64), 0);
            let mut sum = 0.0f64;
            for _ in 0..per {
                let u = rng.uniform();
                let k = cdf.partition_point(|&c| c < u);
                let y = y_of_k[k.min(n)];
                sum += y * y;
            }
            sum / per as f64
        })
        .collect();
    let est = crate::numerics::stats::BatchEstimate {
        mean: mean(&batch_means),
        se: (variance(&batch_means) / batches as f64).sqrt(),
        batches,
    };

    let target_true = (5.0f64).exp();
    let target_naive = (3.0f64).exp();

    // block-sum variance of the chain: σ² = 1 + 2 Σ 2^{-i} = 3, from a
    // direct stepwise simulation (independent of the DP route)
    let sigma2 = {
        let blocks = 3000usize;
        let block_len = 10_000usize;
        let sums: Vec<f64> = (0..blocks)
            .into_par_iter()
            .map(|b| {
                let mut rng = Stream::new(path_seed(master_seed ^ 0x5eed_0005, b as u64), 0);
                let mut x = if rng.uniform() < 0.5 { 1.0f64 } else { -1.0 };
                let mut s = x;
                for _ in 1..block_len {
                    if rng.uniform() >= 0.75 {
                        x = -x;
                    }
                    s += x;
                }
                s / (block_len as f64).sqrt()
            })
            .collect();
        variance(&sums)
    };

    let stats = vec![
        StatLine::against_se("empirical E[Y_n(1)²]", est.mean, target_true, est.se, 5.0),
        StatLine::threshold(
            "distance of E[Y_n(1)²] from the naive-limit moment, in SEs",
            (est.mean - target_naive).abs() / est.se,
            10.0,
            true,
        ),
        StatLine::against_abs("exact finite-n E[Y_n(1)²] (DP oracle)", exact_m2, target_true, 0.05 * target_true),
        StatLine::against_abs("exact finite-n E[Y_n(1)] (DP oracle)", exact_m1, 1.0f64.exp(), 0.02 * 1.0f64.exp()),
        StatLine {
            name: "block-sum variance of the chain".into(),
            value: sigma2,
            target: 3.0,
            se: None,
            tolerance: "rel 5%".into(),
            pass: (sigma2 - 3.0).abs() <= 0.15,
        },
    ];

    ExperimentReport::new(
        "example1",
        vec![
            ("n".into(), n.to_string()),
            ("paths".into(), paths.to_string()),
            ("master_seed".into(), master_seed.to_string()),
        ],
        stats,
        start,
    )
}
