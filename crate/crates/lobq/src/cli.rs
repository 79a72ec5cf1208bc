//! Configuration parsing and subcommand dispatch for the `lobq` binary.
//!
//! Configs are flat key-value text with `[section]` headers named after the
//! engine modules (JSON with the same section/key structure is also
//! accepted). Unknown sections or keys are rejected with line/key
//! diagnostics, and all file outputs land under the declared output
//! directory. A fixed master seed makes every artifact byte-reproducible.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::diffusion_engine::{
    derive_diffusion_params, fluctuation_variance_psi, price_decrease_probability,
    survival_probability, SigmaYMode,
};
use crate::fluid_engine::{
    fluid_linear_intensity, CancellationRule, FluidParams, FluidSolution, LinearFluidSolution,
};
use crate::ldp_engine::{poisson_iid_rate_density, queue_path_rate, PiecewiseLinearPath};
use crate::lob_simulator::{extract_flows, simulate_path, SimConfig};
use crate::order_flow::{FlowMoments, MarkModel, PsiConvention, SizeLaw};
use crate::output::Json;
use crate::point_processes::{clt_variance, stationary_rate, PointProcessSpec};
use crate::verify_harness as vh;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("config error at line {line}: {message}")]
    ConfigLine { line: usize, message: String },
    #[error("config error in [{section}]: {message}")]
    ConfigSection { section: String, message: String },
    #[error("engine error: {0}")]
    Engine(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Process exit code: 2 for usage/config problems, 1 for engine errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::ConfigLine { .. } | CliError::ConfigSection { .. } => 2,
            _ => 1,
        }
    }
}

macro_rules! engine {
    ($e:expr) => {
        $e.map_err(|err| CliError::Engine(err.to_string()))?
    };
}

/// Raw parsed config: section -> key -> value string.
#[derive(Debug, Default, Clone)]
pub struct RawConfig {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<RawConfig, CliError> {
        let trimmed = text.trim_start();
        if trimmed.starts_with('{') {
            return Self::parse_json(text);
        }
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current: Option<String> = None;
        for (idx, raw_line) in text.lines().enumerate() {
            let line = raw_line.trim();
            let lineno = idx + 1;
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(CliError::ConfigLine {
                        line: lineno,
                        message: format!("malformed section header `{line}`"),
                    });
                }
                let name = line[1..line.len() - 1].trim().to_string();
                sections.entry(name.clone()).or_default();
                current = Some(name);
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::ConfigLine {
                    line: lineno,
                    message: format!("expected `key = value`, got `{line}`"),
                });
            };
            let section = current.clone().ok_or(CliError::ConfigLine {
                line: lineno,
                message: "key before any [section] header".into(),
            })?;
            let prev = sections
                .get_mut(&section)
                .unwrap()
                .insert(key.trim().to_string(), value.trim().to_string());
            if prev.is_some() {
                return Err(CliError::ConfigLine {
                    line: lineno,
                    message: format!("duplicate key `{}` in [{section}]", key.trim()),
                });
            }
        }
        Ok(RawConfig { sections })
    }

    fn parse_json(text: &str) -> Result<RawConfig, CliError> {
        let value: serde_json::Value = serde_json::from_str(text)
            .map_err(|e| CliError::ConfigLine { line: e.line(), message: e.to_string() })?;
        let obj = value.as_object().ok_or(CliError::ConfigLine {
            line: 1,
            message: "top-level JSON must be an object of sections".into(),
        })?;
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        for (section, body) in obj {
            let body_obj = body.as_object().ok_or_else(|| CliError::ConfigSection {
                section: section.clone(),
                message: "section must be a JSON object".into(),
            })?;
            let mut map = BTreeMap::new();
            for (k, v) in body_obj {
                let rendered = match v {
                    serde_json::Value::String(s) => s.clone(),
                    serde_json::Value::Array(items) => items
                        .iter()
                        .map(|x| x.to_string())
                        .collect::<Vec<_>>()
                        .join(" "),
                    other => other.to_string(),
                };
                map.insert(k.clone(), rendered);
            }
            sections.insert(section.clone(), map);
        }
        Ok(RawConfig { sections })
    }

    fn section(&self, name: &str) -> Option<&BTreeMap<String, String>> {
        self.sections.get(name)
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    fn known_sections(&self, allowed: &[&str]) -> Result<(), CliError> {
        for name in self.sections.keys() {
            if !allowed.contains(&name.as_str()) {
                return Err(CliError::ConfigSection {
                    section: name.clone(),
                    message: format!("unknown section (expected one of {allowed:?})"),
                });
            }
        }
        Ok(())
    }
}

/// Typed view over one section with unknown-key rejection.
#[derive(Debug)]
struct Section<'a> {
    name: &'a str,
    map: &'a BTreeMap<String, String>,
    allowed: &'a [&'a str],
}

impl<'a> Section<'a> {
    fn new(
        raw: &'a RawConfig,
        name: &'a str,
        allowed: &'a [&'a str],
    ) -> Result<Option<Section<'a>>, CliError> {
        let Some(map) = raw.section(name) else { return Ok(None) };
        for key in map.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::ConfigSection {
                    section: name.to_string(),
                    message: format!("unknown key `{key}` (allowed: {allowed:?})"),
                });
            }
        }
        Ok(Some(Section { name, map, allowed }))
    }

    fn require(
        raw: &'a RawConfig,
        name: &'a str,
        allowed: &'a [&'a str],
    ) -> Result<Section<'a>, CliError> {
        Self::new(raw, name, allowed)?.ok_or_else(|| CliError::ConfigSection {
            section: name.to_string(),
            message: "section is required for this subcommand".into(),
        })
    }

    fn f64(&self, key: &str) -> Result<f64, CliError> {
        let s = self.str(key)?;
        s.parse::<f64>().map_err(|_| self.bad(key, "expected a number"))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64, CliError> {
        match self.map.get(key) {
            Some(_) => self.f64(key),
            None => Ok(default),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64, CliError> {
        match self.map.get(key) {
            Some(s) => s.parse::<u64>().map_err(|_| self.bad(key, "expected an integer")),
            None => Ok(default),
        }
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize, CliError> {
        Ok(self.u64_or(key, default as u64)? as usize)
    }

    fn str(&self, key: &str) -> Result<&str, CliError> {
        self.map.get(key).map(|s| s.as_str()).ok_or_else(|| self.bad(key, "missing key"))
    }

    fn str_or<'b>(&'b self, key: &str, default: &'b str) -> &'b str {
        self.map.get(key).map(|s| s.as_str()).unwrap_or(default)
    }

    fn floats(&self, key: &str) -> Result<Vec<f64>, CliError> {
        let s = self.str(key)?;
        s.split([' ', ',']).filter(|t| !t.is_empty()).map(|t| {
            t.parse::<f64>().map_err(|_| self.bad(key, "expected a list of numbers"))
        })
        .collect()
    }

    fn floats_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, CliError> {
        match self.map.get(key) {
            Some(_) => self.floats(key),
            None => Ok(default.to_vec()),
        }
    }

    fn six(&self, key: &str) -> Result<[f64; 6], CliError> {
        let v = self.floats(key)?;
        if v.len() != 6 {
            return Err(self.bad(key, "expected exactly 6 numbers"));
        }
        Ok([v[0], v[1], v[2], v[3], v[4], v[5]])
    }

    fn bad(&self, key: &str, message: &str) -> CliError {
        let _ = self.allowed;
        CliError::ConfigSection {
            section: self.name.to_string(),
            message: format!("key `{key}`: {message}"),
        }
    }
}

const ARRIVAL_KEYS: [&str; 10] = [
    "kind", "rate", "baseline", "amplitude", "decay", "shot_rate", "shot_amplitude",
    "shot_decay", "base", "ask_coeff",
];
const ARRIVAL_KEYS_FULL: [&str; 11] = [
    "kind", "rate", "baseline", "amplitude", "decay", "shot_rate", "shot_amplitude",
    "shot_decay", "base", "ask_coeff", "bid_coeff",
];

fn parse_arrival(raw: &RawConfig) -> Result<PointProcessSpec, CliError> {
    let _ = ARRIVAL_KEYS;
    let s = Section::require(raw, "arrival", &ARRIVAL_KEYS_FULL)?;
    match s.str("kind")? {
        "poisson" => Ok(PointProcessSpec::Poisson { rate: s.f64("rate")? }),
        "hawkes" => Ok(PointProcessSpec::HawkesExp {
            baseline: s.f64("baseline")?,
            amplitude: s.f64("amplitude")?,
            decay: s.f64("decay")?,
        }),
        "cox" => Ok(PointProcessSpec::CoxShotNoiseExp {
            baseline: s.f64("baseline")?,
            shot_rate: s.f64("shot_rate")?,
            shot_amplitude: s.f64("shot_amplitude")?,
            shot_decay: s.f64("shot_decay")?,
        }),
        "linear" => Ok(PointProcessSpec::LinearStateDependent {
            base: s.f64("base")?,
            ask_coeff: s.f64("ask_coeff")?,
            bid_coeff: s.f64("bid_coeff")?,
        }),
        other => Err(s.bad("kind", &format!("unknown arrival kind `{other}`"))),
    }
}

const MARKS_KEYS: [&str; 8] = ["p", "vbar", "type1", "type2", "type3", "type4", "type5", "type6"];

fn parse_size_law(section: &Section, key: &str) -> Result<SizeLaw, CliError> {
    let spec = section.str(key)?;
    let parts: Vec<&str> = spec.split_whitespace().collect();
    let num = |i: usize| -> Result<f64, CliError> {
        parts
            .get(i)
            .and_then(|t| t.parse::<f64>().ok())
            .ok_or_else(|| section.bad(key, "expected `<law> <params...>`"))
    };
    match parts.first().copied() {
        Some("constant") => Ok(SizeLaw::Constant { value: num(1)? }),
        Some("exponential") => Ok(SizeLaw::Exponential { mean: num(1)? }),
        Some("geometric") => Ok(SizeLaw::GeometricInteger { mean: num(1)? }),
        Some("lognormal") => Ok(SizeLaw::LogNormal { mu_ln: num(1)?, sigma_ln: num(2)? }),
        _ => Err(section.bad(key, "expected constant|exponential|geometric|lognormal")),
    }
}

fn parse_marks(raw: &RawConfig) -> Result<MarkModel, CliError> {
    let s = Section::require(raw, "marks", &MARKS_KEYS)?;
    if s.map.contains_key("vbar") {
        let vbar = s.six("vbar")?;
        return engine_ok(MarkModel::constant_sizes_for_mean(vbar));
    }
    let p = s.six("p")?;
    let mut sizes = Vec::with_capacity(6);
    for j in 1..=6 {
        sizes.push(parse_size_law(&s, &format!("type{j}"))?);
    }
    engine_ok(MarkModel::new(p, sizes.try_into().unwrap()))
}

fn engine_ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Engine(e.to_string()))
}

fn parse_cancellation(spec: &str) -> Result<CancellationRule, CliError> {
    let parts: Vec<&str> = spec.split_whitespace().collect();
    match parts.first().copied() {
        Some("uniform") | None => Ok(CancellationRule::Uniform),
        Some("power") => {
            let gamma = parts
                .get(1)
                .and_then(|t| t.parse::<f64>().ok())
                .ok_or_else(|| CliError::Engine("cancellation `power` needs an exponent".into()))?;
            engine_ok(CancellationRule::power(gamma))
        }
        Some(other) => Err(CliError::Engine(format!("unknown cancellation `{other}`"))),
    }
}

fn write_artifact(out_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join(name);
    let mut f = std::fs::File::create(&path)?;
    f.write_all(bytes)?;
    println!("wrote {} ({} bytes)", path.display(), bytes.len());
    Ok(path)
}

/// Parsed command line.
#[derive(Debug, Clone)]
pub struct Invocation {
    pub subcommand: String,
    pub config_path: Option<String>,
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub suite: Option<String>,
}

pub const USAGE: &str = "usage: lobq <simulate|fluid|diffusion|hitting|ldp|verify|example1> \
[--config PATH] [--seed U64] [--out DIR] [--workers N] [--suite NAME]";

impl Invocation {
    pub fn parse(args: &[String]) -> Result<Invocation, CliError> {
        let mut it = args.iter();
        let subcommand = it
            .next()
            .ok_or_else(|| CliError::Usage(USAGE.to_string()))?
            .clone();
        if !["simulate", "fluid", "diffusion", "hitting", "ldp", "verify", "example1"]
            .contains(&subcommand.as_str())
        {
            return Err(CliError::Usage(format!("unknown subcommand `{subcommand}`\n{USAGE}")));
        }
        let mut inv = Invocation {
            subcommand,
            config_path: None,
            seed: None,
            out_dir: PathBuf::from("."),
            workers: None,
            suite: None,
        };
        while let Some(flag) = it.next() {
            let mut value = || {
                it.next()
                    .cloned()
                    .ok_or_else(|| CliError::Usage(format!("flag {flag} needs a value\n{USAGE}")))
            };
            match flag.as_str() {
                "--config" => inv.config_path = Some(value()?),
                "--seed" => {
                    inv.seed = Some(
                        value()?
                            .parse::<u64>()
                            .map_err(|_| CliError::Usage("--seed needs a u64".into()))?,
                    )
                }
                "--out" => inv.out_dir = PathBuf::from(value()?),
                "--workers" => {
                    inv.workers = Some(
                        value()?
                            .parse::<usize>()
                            .map_err(|_| CliError::Usage("--workers needs an integer".into()))?,
                    )
                }
                "--suite" => inv.suite = Some(value()?),
                other => return Err(CliError::Usage(format!("unknown flag `{other}`\n{USAGE}"))),
            }
        }
        Ok(inv)
    }
}

/// Run one invocation end to end; returns the process exit code.
pub fn run(inv: &Invocation) -> Result<i32, CliError> {
    if let Some(w) = inv.workers {
        // bounds the worker pool; ignore the error if a pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let raw = match &inv.config_path {
        Some(p) => RawConfig::parse(&std::fs::read_to_string(p)?)?,
        None => RawConfig::default(),
    };
    let seed = inv.seed.unwrap_or(17_041_969);
    match inv.subcommand.as_str() {
        "simulate" => run_simulate(&raw, seed, &inv.out_dir),
        "fluid" => run_fluid(&raw, &inv.out_dir),
        "diffusion" => run_diffusion(&raw, &inv.out_dir),
        "hitting" => run_hitting(&raw, seed, &inv.out_dir),
        "ldp" => run_ldp(&raw, &inv.out_dir),
        "verify" => run_verify(&raw, seed, &inv.out_dir, inv.suite.as_deref().unwrap_or("all")),
        "example1" => run_example1(&raw, seed, &inv.out_dir),
        _ => unreachable!(),
    }
}

const SIM_KEYS: [&str; 6] = ["n", "qb0", "qa0", "z0", "horizon", "cancellation"];

fn run_simulate(raw: &RawConfig, seed: u64, out: &Path) -> Result<i32, CliError> {
    raw.known_sections(&["arrival", "marks", "simulate"])?;
    if raw.is_empty() {
        return Err(CliError::Usage(format!(
            "simulate needs a config with [arrival], [marks], [simulate]\n{USAGE}"
        )));
    }
    let arrival = parse_arrival(raw)?;
    let marks = parse_marks(raw)?;
    let s = Section::require(raw, "simulate", &SIM_KEYS)?;
    let config = SimConfig {
        arrival,
        marks: marks.clone(),
        n: s.u64_or("n", 100)?,
        qb0: s.f64("qb0")?,
        qa0: s.f64("qa0")?,
        z0: s.f64("z0")?,
        horizon: s.f64("horizon")?,
        cancellation: parse_cancellation(s.str_or("cancellation", "uniform"))?,
        seed,
    };
    let path = engine!(simulate_path(&config));
    let lambda = stationary_rate(&config.arrival).unwrap_or(1.0);
    let vbar = crate::order_flow::mean_vector(&marks);
    let flows = extract_flows(&path, lambda, &vbar);

    let mut csv = Vec::new();
    path.to_csv(&mut csv)?;
    write_artifact(out, "path.csv", &csv)?;
    let mut csv = Vec::new();
    flows.to_csv(&mut csv)?;
    write_artifact(out, "flows.csv", &csv)?;

    let mut o = Json::obj();
    o.push("tau_b", Json::Num(path.stops.tau_b));
    o.push("tau_a", Json::Num(path.stops.tau_a));
    o.push("tau_z", Json::Num(path.stops.tau_z));
    o.push("tau", Json::Num(path.stops.tau));
    o.push("events", Json::Int(path.events.len() as i64));
    write_artifact(out, "stops.json", o.render().as_bytes())?;
    Ok(0)
}

const FLUID_KEYS: [&str; 9] =
    ["lambda", "vbar", "qb0", "qa0", "z0", "t_max", "samples", "alpha", "beta"];

fn run_fluid(raw: &RawConfig, out: &Path) -> Result<i32, CliError> {
    raw.known_sections(&["fluid"])?;
    let s = Section::require(raw, "fluid", &FLUID_KEYS)?;
    let params = FluidParams {
        lambda: s.f64("lambda")?,
        vbar: s.six("vbar")?,
        qb0: s.f64("qb0")?,
        qa0: s.f64("qa0")?,
        z0: s.f64("z0")?,
    };
    let alpha = s.f64_or("alpha", 0.0)?;
    let beta = s.f64_or("beta", 0.0)?;
    let linear = alpha > 0.0 || beta > 0.0;

    let (summary, tau) = if linear {
        let sol = engine!(LinearFluidSolution::new(params.clone(), alpha, beta));
        let mut o = Json::obj();
        o.push("tau_a", Json::Num(sol.tau_a));
        o.push("tau_b", Json::Num(sol.tau_b));
        o.push("tau_z", Json::Num(sol.tau_z));
        o.push("a", Json::Null);
        o.push("b", Json::Null);
        o.push("c", Json::Null);
        o.push("vb", Json::Num(params.vb()));
        o.push("va", Json::Num(params.va()));
        (o, sol.tau)
    } else {
        let sol = engine!(FluidSolution::new(params.clone()));
        (sol.to_json(), sol.tau)
    };

    let t_max = s.f64_or("t_max", if tau.is_finite() { tau } else { 1.0 })?;
    let samples = s.usize_or("samples", 200)?.max(2);
    let mut csv = String::from("t,qb,qa,z\n");
    use crate::output::fmt_f64 as f;
    for i in 0..=samples {
        let t = t_max * i as f64 / samples as f64;
        let (qb, qa, z) = if linear {
            let (qb, qa, z, _) = engine!(fluid_linear_intensity(&params, alpha, beta, t));
            (qb, qa, z)
        } else {
            let sol = engine!(FluidSolution::new(params.clone()));
            let (qb, qa) = sol.queues(t);
            (qb, qa, sol.position(t))
        };
        csv.push_str(&format!("{},{},{},{}\n", f(t), f(qb), f(qa), f(z)));
    }
    write_artifact(out, "fluid.csv", csv.as_bytes())?;
    write_artifact(out, "fluid.json", summary.render().as_bytes())?;
    Ok(0)
}

const DIFFUSION_KEYS: [&str; 6] =
    ["qb", "qa", "z0", "survival_times", "sigma_y_times", "psi_convention"];

fn run_diffusion(raw: &RawConfig, out: &Path) -> Result<i32, CliError> {
    raw.known_sections(&["arrival", "marks", "diffusion"])?;
    let arrival = parse_arrival(raw)?;
    let marks = parse_marks(raw)?;
    let s = Section::require(raw, "diffusion", &DIFFUSION_KEYS)?;
    let convention = match s.str_or("psi_convention", "diffusion-theorem") {
        "diffusion-theorem" => PsiConvention::DiffusionTheorem,
        "lambda-cubed" => PsiConvention::LambdaCubed,
        other => return Err(s.bad("psi_convention", &format!("unknown convention `{other}`"))),
    };
    let lambda = engine!(stationary_rate(&arrival));
    let vd2 = engine!(clt_variance(&arrival));
    let moments = engine!(FlowMoments::compute(&marks, lambda, vd2, convention));
    let qb = s.f64("qb")?;
    let qa = s.f64("qa")?;
    let params = engine!(derive_diffusion_params(&moments, qb, qa));

    let mut o = params.to_json();
    let p_dec = engine!(price_decrease_probability(&params, 1e-9));
    o.push("p_decrease", Json::Num(p_dec.value));

    let survival_times = s.floats_or("survival_times", &[0.1, 0.5, 1.0])?;
    let mut rows = Vec::new();
    for &t in &survival_times {
        let p = engine!(survival_probability(&params, t, 1e-10));
        rows.push(Json::Arr(vec![Json::Num(t), Json::Num(p.value)]));
    }
    o.push("survival", Json::Arr(rows));

    let mut rows = Vec::new();
    if let Some(_z) = s.map.get("z0") {
        let z0 = s.f64("z0")?;
        let fluid = FluidParams { lambda, vbar: moments.vbar, qb0: qb, qa0: qa, z0 };
        for &t in &s.floats_or("sigma_y_times", &[])? {
            let v = engine!(fluctuation_variance_psi(&fluid, &moments.psi, t, SigmaYMode::Quadrature));
            rows.push(Json::Arr(vec![Json::Num(t), Json::Num(v)]));
        }
    }
    o.push("sigmaY2", Json::Arr(rows));
    write_artifact(out, "diffusion.json", o.render().as_bytes())?;
    Ok(0)
}

const HITTING_KEYS: [&str; 3] = ["qb", "qa", "paths"];

fn run_hitting(raw: &RawConfig, seed: u64, out: &Path) -> Result<i32, CliError> {
    raw.known_sections(&["arrival", "marks", "hitting"])?;
    let arrival = parse_arrival(raw)?;
    let marks = parse_marks(raw)?;
    let s = Section::require(raw, "hitting", &HITTING_KEYS)?;
    let lambda = engine!(stationary_rate(&arrival));
    let vd2 = engine!(clt_variance(&arrival));
    let moments = engine!(FlowMoments::compute(&marks, lambda, vd2, PsiConvention::DiffusionTheorem));
    let params = engine!(derive_diffusion_params(&moments, s.f64("qb")?, s.f64("qa")?));
    let report =
        vh::hitting_probability_experiment(&params, s.usize_or("paths", 100_000)?, &[0.1, 0.5, 1.0], seed);
    print!("{}", report.render_text());
    write_artifact(out, "hitting.json", report.to_json().render().as_bytes())?;
    Ok(if report.passed { 0 } else { 1 })
}

const LDP_KEYS: [&str; 5] = ["lambda", "x", "path_times", "path_fb", "path_fa"];

fn run_ldp(raw: &RawConfig, out: &Path) -> Result<i32, CliError> {
    raw.known_sections(&["marks", "ldp"])?;
    let marks = parse_marks(raw)?;
    let s = Section::require(raw, "ldp", &LDP_KEYS)?;
    let lambda = s.f64_or("lambda", 1.0)?;
    let mut o = Json::obj();
    if s.map.contains_key("x") {
        let x = s.six("x")?;
        let r = engine!(poisson_iid_rate_density(&marks, lambda, &x));
        o.push("x", Json::num_array(&x));
        o.push("lambda_value", Json::Num(r.value));
    }
    if s.map.contains_key("path_times") {
        let path = PiecewiseLinearPath {
            times: s.floats("path_times")?,
            fb: s.floats("path_fb")?,
            fa: s.floats("path_fa")?,
        };
        let rate = engine!(queue_path_rate(&path, &marks, lambda));
        let mut p = Json::obj();
        p.push("times", Json::num_array(&path.times));
        p.push("fb", Json::num_array(&path.fb));
        p.push("fa", Json::num_array(&path.fa));
        o.push("path", p);
        o.push("rate", Json::Num(rate.total));
        o.push(
            "duality_gaps",
            Json::num_array(&rate.segments.iter().map(|s| s.duality_gap).collect::<Vec<_>>()),
        );
    }
    write_artifact(out, "ldp.json", o.render().as_bytes())?;
    Ok(0)
}

const VERIFY_KEYS: [&str; 1] = ["scale"];
const EXAMPLE1_KEYS: [&str; 2] = ["n", "paths"];

fn run_example1(raw: &RawConfig, seed: u64, out: &Path) -> Result<i32, CliError> {
    raw.known_sections(&["example1"])?;
    let (n, paths) = match Section::new(raw, "example1", &EXAMPLE1_KEYS)? {
        Some(s) => (s.usize_or("n", 10_000)?, s.usize_or("paths", 200_000_000)?),
        None => (10_000, 200_000_000),
    };
    let report = vh::example1_demo(n, paths, seed);
    print!("{}", report.render_text());
    write_artifact(out, "example1.json", report.to_json().render().as_bytes())?;
    Ok(if report.passed { 0 } else { 1 })
}

fn run_verify(raw: &RawConfig, seed: u64, out: &Path, suite: &str) -> Result<i32, CliError> {
    raw.known_sections(&["verify"])?;
    let quick = match Section::new(raw, "verify", &VERIFY_KEYS)? {
        Some(s) => s.str_or("scale", "full") == "quick",
        None => false,
    };
    let mut reports: Vec<vh::ExperimentReport> = Vec::new();
    let known = ["all", "fluid", "covariance", "hitting", "tau", "example1"];
    if !known.contains(&suite) {
        return Err(CliError::Usage(format!("unknown suite `{suite}` (one of {known:?})")));
    }
    let want = |name: &str| suite == "all" || suite == name;

    if want("fluid") {
        let base = vh::reference_sim_config(1, 1.0, 0);
        let (n_list, seeds): (&[u64], usize) =
            if quick { (&[25, 2500], 11) } else { (&[100, 1000, 10_000], 20) };
        reports.push(vh::fluid_convergence_experiment(&base, n_list, seeds, seed));
    }
    if want("covariance") {
        let marks = engine_ok(MarkModel::new(
            [1.0 / 6.0; 6],
            std::array::from_fn(|_| SizeLaw::Constant { value: 1.0 }),
        ))?;
        let (n, paths) = if quick { (200, 3000) } else { (1000, 10_000) };
        reports.push(vh::covariance_experiment(
            &PointProcessSpec::Poisson { rate: 1.0 },
            &marks,
            n,
            paths,
            seed ^ 0x01,
        ));
    }
    if want("hitting") {
        let marks = engine_ok(MarkModel::new(
            [1.0 / 6.0; 6],
            std::array::from_fn(|_| SizeLaw::Constant { value: 1.0 }),
        ))?;
        let moments =
            engine_ok(FlowMoments::compute(&marks, 1.0, 1.0, PsiConvention::DiffusionTheorem))?;
        let mut params = engine!(derive_diffusion_params(&moments, 1.0, 1.0));
        params.mu = [0.0, 0.0];
        params.cov = [[1.0, 0.0], [0.0, 1.0]];
        params.sigma1 = 1.0;
        params.sigma2 = 1.0;
        params.rho = 0.0;
        params.alpha = std::f64::consts::FRAC_PI_2;
        params.qb = std::f64::consts::FRAC_1_SQRT_2;
        params.qa = std::f64::consts::FRAC_1_SQRT_2;
        params.r0 = 1.0;
        params.theta0 = std::f64::consts::FRAC_PI_4;
        let paths = if quick { 10_000 } else { 100_000 };
        reports.push(vh::hitting_probability_experiment(&params, paths, &[0.1, 0.5, 1.0], seed ^ 0x02));
    }
    if want("tau") {
        let (n, paths, dep) = if quick { (400, 2000, 0) } else { (10_000, 10_000, 2000) };
        reports.push(vh::tau_fluctuation_experiment(n, paths, dep, seed ^ 0x03));
    }
    if want("example1") {
        let (n, paths) = if quick { (2000, 1_000_000) } else { (10_000, 200_000_000) };
        reports.push(vh::example1_demo(n, paths, seed ^ 0x04));
    }

    let mut text = String::new();
    let mut arr = Vec::new();
    let mut all_pass = true;
    for r in &reports {
        text.push_str(&r.render_text());
        arr.push(r.to_json());
        all_pass &= r.passed;
    }
    print!("{text}");
    let mut o = Json::obj();
    o.push("suite", Json::Str(suite.to_string()));
    o.push("reports", Json::Arr(arr));
    o.push("passed", Json::Bool(all_pass));
    write_artifact(out, "verify.json", o.render().as_bytes())?;
    write_artifact(out, "verify.txt", text.as_bytes())?;
    Ok(if all_pass { 0 } else { 1 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_key_value_config() {
        let raw = RawConfig::parse(
            "# comment\n[fluid]\nlambda = 1.0\nvbar = 1 0.6 0.8 1 0.7 0.8\nqb0 = 100\nqa0=100\nz0 = 100\n",
        )
        .unwrap();
        let s = Section::require(&raw, "fluid", &FLUID_KEYS).unwrap();
        assert_eq!(s.f64("lambda").unwrap(), 1.0);
        assert_eq!(s.six("vbar").unwrap()[4], 0.7);
    }

    #[test]
    fn parse_json_config() {
        let raw = RawConfig::parse(
            r#"{"fluid": {"lambda": 1.0, "vbar": [1, 0.6, 0.8, 1, 0.7, 0.8], "qb0": 100, "qa0": 100, "z0": 100}}"#,
        )
        .unwrap();
        let s = Section::require(&raw, "fluid", &FLUID_KEYS).unwrap();
        assert_eq!(s.six("vbar").unwrap()[2], 0.8);
    }

    #[test]
    fn unknown_key_rejected() {
        let raw = RawConfig::parse("[fluid]\nlambda = 1.0\nbogus = 2\n").unwrap();
        let err = Section::require(&raw, "fluid", &FLUID_KEYS).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn malformed_line_diagnoses_line_number() {
        let err = RawConfig::parse("[fluid]\nlambda 1.0\n").unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn usage_error_exit_code() {
        let err = Invocation::parse(&[]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let err = Invocation::parse(&["frobnicate".to_string()]).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn fluid_subcommand_end_to_end() {
        let dir = std::env::temp_dir().join(format!("lobq-test-{}", std::process::id()));
        let config_path = dir.join("fluid.conf");
        std::fs::create_dir_all(&dir).unwrap();
        std::fs::write(
            &config_path,
            "[fluid]\nlambda = 1.0\nvbar = 1 0.6 0.8 1 0.7 0.8\nqb0 = 100\nqa0 = 100\nz0 = 100\nsamples = 10\n",
        )
        .unwrap();
        let inv = Invocation {
            subcommand: "fluid".into(),
            config_path: Some(config_path.to_string_lossy().into_owned()),
            seed: None,
            out_dir: dir.clone(),
            workers: None,
            suite: None,
        };
        let code = run(&inv).unwrap();
        assert_eq!(code, 0);
        let json = std::fs::read_to_string(dir.join("fluid.json")).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&json).unwrap();
        let tau_z = parsed["tau_z"].as_f64().unwrap();
        assert!((tau_z - 100.0).abs() < 1e-9);
        let csv = std::fs::read_to_string(dir.join("fluid.csv")).unwrap();
        assert!(csv.starts_with("t,qb,qa,z\n"));
        // byte-identical on re-run
        let before = std::fs::read(dir.join("fluid.json")).unwrap();
        run(&inv).unwrap();
        let after = std::fs::read(dir.join("fluid.json")).unwrap();
        assert_eq!(before, after);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn ldp_subcommand_values() {
        let dir = std::env::temp_dir().join(format!("lobq-ldp-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let config_path = dir.join("ldp.conf");
        std::fs::write(
            &config_path,
            "[marks]\np = 1 0 0 0 0 0\ntype1 = constant 1\ntype2 = constant 1\ntype3 = constant 1\ntype4 = constant 1\ntype5 = constant 1\ntype6 = constant 1\n[ldp]\nlambda = 1.0\nx = 2 0 0 0 0 0\n",
        )
        .unwrap();
        let inv = Invocation {
            subcommand: "ldp".into(),
            config_path: Some(config_path.to_string_lossy().into_owned()),
            seed: None,
            out_dir: dir.clone(),
            workers: None,
            suite: None,
        };
        assert_eq!(run(&inv).unwrap(), 0);
        let parsed: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.join("ldp.json")).unwrap()).unwrap();
        let v = parsed["lambda_value"].as_f64().unwrap();
        assert!((v - (2.0 * 2.0f64.ln() - 1.0)).abs() < 1e-8);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn simulate_subcommand_csv_schema() {
        let dir = std::env::temp_dir().join(format!("lobq-sim-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let config_path = dir.join("sim.conf");
        std::fs::write(
            &config_path,
            "[arrival]\nkind = poisson\nrate = 1.0\n[marks]\nvbar = 1 0.6 0.8 1 0.7 0.8\n[simulate]\nn = 10\nqb0 = 5\nqa0 = 5\nz0 = 5\nhorizon = 5\n",
        )
        .unwrap();
        let inv = Invocation {
            subcommand: "simulate".into(),
            config_path: Some(config_path.to_string_lossy().into_owned()),
            seed: Some(7),
            out_dir: dir.clone(),
            workers: None,
            suite: None,
        };
        assert_eq!(run(&inv).unwrap(), 0);
        let csv = std::fs::read_to_string(dir.join("path.csv")).unwrap();
        assert!(csv.starts_with("time,type,size,qb,qa,z\n"));
        let flows = std::fs::read_to_string(dir.join("flows.csv")).unwrap();
        assert!(flows.starts_with("time,c1,"));
        std::fs::remove_dir_all(&dir).ok();
    }
}
