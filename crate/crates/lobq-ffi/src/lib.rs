//! C ABI for the lobq engines: opaque handles, integer status codes, and a
//! thread-local last-error message. The committed header lives in
//! `include/lobq.h` (regenerable with cbindgen, see cbindgen.toml).
//!
//! Conventions:
//! * every fallible call returns `lobq_status`; `LOBQ_OK` is 0;
//! * out-parameters are written only on success;
//! * handles are created by `*_new` and released by the matching `*_free`;
//!   passing a handle to any other `*_free` is undefined behavior;
//! * `lobq_last_error_message` returns a pointer valid until the next
//!   failing call on the same thread.

#![allow(non_camel_case_types)]

use std::cell::RefCell;
use std::ffi::{c_char, c_double, c_int, CString};

use lobq::diffusion_engine::{
    derive_diffusion_params, fluctuation_variance_psi, price_decrease_probability,
    survival_probability, DiffusionParams, SigmaYMode,
};
use lobq::fluid_engine::{
    fluid_position_general, general_tau_z, CancellationRule, FluidParams, FluidSolution,
};
use lobq::ldp_engine::{poisson_iid_rate_density, poisson_rate_density};
use lobq::lob_simulator::{simulate_path, SimConfig};
use lobq::order_flow::{FlowMoments, MarkModel, PsiConvention, SizeLaw};
use lobq::point_processes::{clt_variance, simulate_arrivals, stationary_rate, PointProcessSpec};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum lobq_status {
    LOBQ_OK = 0,
    LOBQ_ERR_NULL_POINTER = 1,
    LOBQ_ERR_INVALID_ARGUMENT = 2,
    LOBQ_ERR_DOMAIN = 3,
    LOBQ_ERR_NUMERIC = 4,
    LOBQ_ERR_IO = 5,
}

use lobq_status::*;

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::new("").unwrap());
}

fn set_error(msg: &str) {
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg.replace('\0', "?")).unwrap();
    });
}

/// Message for the most recent error on this thread; empty string if none.
/// The pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn lobq_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

fn fail<E: std::fmt::Display>(code: lobq_status, err: E) -> lobq_status {
    set_error(&err.to_string());
    code
}

macro_rules! nonnull {
    ($ptr:expr) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => return fail(LOBQ_ERR_NULL_POINTER, concat!(stringify!($ptr), " is null")),
        }
    };
}

// ---------------------------------------------------------------------------
// arrival processes
// ---------------------------------------------------------------------------

/// Arrival process selector for `lobq_arrival_spec`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum lobq_arrival_kind {
    LOBQ_ARRIVAL_POISSON = 0,
    LOBQ_ARRIVAL_HAWKES_EXP = 1,
    LOBQ_ARRIVAL_COX_SHOT_NOISE = 2,
    LOBQ_ARRIVAL_LINEAR_STATE_DEPENDENT = 3,
}

/// Plain-data arrival spec; the meaning of params depends on `kind`:
/// Poisson: p0 = rate. Hawkes: p0 = baseline, p1 = amplitude, p2 = decay.
/// Cox: p0 = baseline, p1 = shot_rate, p2 = shot_amplitude, p3 = shot_decay.
/// Linear: p0 = base, p1 = ask_coeff, p2 = bid_coeff.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct lobq_arrival_spec {
    pub kind: lobq_arrival_kind,
    pub p0: c_double,
    pub p1: c_double,
    pub p2: c_double,
    pub p3: c_double,
}

fn arrival_from_c(spec: &lobq_arrival_spec) -> PointProcessSpec {
    match spec.kind {
        lobq_arrival_kind::LOBQ_ARRIVAL_POISSON => PointProcessSpec::Poisson { rate: spec.p0 },
        lobq_arrival_kind::LOBQ_ARRIVAL_HAWKES_EXP => PointProcessSpec::HawkesExp {
            baseline: spec.p0,
            amplitude: spec.p1,
            decay: spec.p2,
        },
        lobq_arrival_kind::LOBQ_ARRIVAL_COX_SHOT_NOISE => PointProcessSpec::CoxShotNoiseExp {
            baseline: spec.p0,
            shot_rate: spec.p1,
            shot_amplitude: spec.p2,
            shot_decay: spec.p3,
        },
        lobq_arrival_kind::LOBQ_ARRIVAL_LINEAR_STATE_DEPENDENT => {
            PointProcessSpec::LinearStateDependent {
                base: spec.p0,
                ask_coeff: spec.p1,
                bid_coeff: spec.p2,
            }
        }
    }
}

/// Stationary rate λ and counting-CLT variance v_d² of an arrival spec.
///
/// # Safety
/// `spec`, `out_lambda`, and `out_vd2` must be valid, aligned pointers.
#[no_mangle]
pub unsafe extern "C" fn lobq_arrival_constants(
    spec: *const lobq_arrival_spec,
    out_lambda: *mut c_double,
    out_vd2: *mut c_double,
) -> lobq_status {
    let spec = nonnull!(spec);
    if out_lambda.is_null() || out_vd2.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "output pointer is null");
    }
    let rust_spec = arrival_from_c(spec);
    let lambda = match stationary_rate(&rust_spec) {
        Ok(v) => v,
        Err(e) => return fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    };
    let vd2 = match clt_variance(&rust_spec) {
        Ok(v) => v,
        Err(e) => return fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    };
    unsafe {
        *out_lambda = lambda;
        *out_vd2 = vd2;
    }
    LOBQ_OK
}

/// Simulate an arrival stream; on success `*out_times` owns a malloc'd-like
/// array of length `*out_len` that must be released with
/// `lobq_free_f64_array`.
///
/// # Safety
/// All pointers must be valid; `out_times`/`out_len` are written on success.
#[no_mangle]
pub unsafe extern "C" fn lobq_simulate_events(
    spec: *const lobq_arrival_spec,
    horizon: c_double,
    seed: u64,
    out_times: *mut *mut c_double,
    out_len: *mut usize,
) -> lobq_status {
    let spec = nonnull!(spec);
    if out_times.is_null() || out_len.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "output pointer is null");
    }
    let rust_spec = arrival_from_c(spec);
    match simulate_arrivals(&rust_spec, horizon, seed) {
        Ok(events) => {
            let mut v: Vec<c_double> = events.times().to_vec();
            v.shrink_to_fit();
            let len = v.len();
            let ptr = v.as_mut_ptr();
            std::mem::forget(v);
            unsafe {
                *out_times = ptr;
                *out_len = len;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    }
}

/// Release an array returned by `lobq_simulate_events`.
///
/// # Safety
/// `ptr`/`len` must come from a successful `lobq_simulate_events` call and
/// not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn lobq_free_f64_array(ptr: *mut c_double, len: usize) {
    if !ptr.is_null() {
        unsafe {
            drop(Vec::from_raw_parts(ptr, len, len));
        }
    }
}

// ---------------------------------------------------------------------------
// mark models
// ---------------------------------------------------------------------------

/// Size-law selector for one order type.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum lobq_size_law_kind {
    LOBQ_SIZE_CONSTANT = 0,
    LOBQ_SIZE_EXPONENTIAL = 1,
    LOBQ_SIZE_GEOMETRIC = 2,
    LOBQ_SIZE_LOGNORMAL = 3,
}

/// One size law: constant(value = p0), exponential(mean = p0),
/// geometric(mean = p0), lognormal(mu = p0, sigma = p1).
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct lobq_size_law {
    pub kind: lobq_size_law_kind,
    pub p0: c_double,
    pub p1: c_double,
}

/// Opaque mark-model handle.
pub struct lobq_marks {
    inner: MarkModel,
}

fn size_law_from_c(law: &lobq_size_law) -> SizeLaw {
    match law.kind {
        lobq_size_law_kind::LOBQ_SIZE_CONSTANT => SizeLaw::Constant { value: law.p0 },
        lobq_size_law_kind::LOBQ_SIZE_EXPONENTIAL => SizeLaw::Exponential { mean: law.p0 },
        lobq_size_law_kind::LOBQ_SIZE_GEOMETRIC => SizeLaw::GeometricInteger { mean: law.p0 },
        lobq_size_law_kind::LOBQ_SIZE_LOGNORMAL => {
            SizeLaw::LogNormal { mu_ln: law.p0, sigma_ln: law.p1 }
        }
    }
}

/// Build a mark model from type probabilities and per-type size laws.
///
/// # Safety
/// `probabilities` must point to 6 doubles, `laws` to 6 `lobq_size_law`,
/// and `out` to a writable handle slot.
#[no_mangle]
pub unsafe extern "C" fn lobq_marks_new(
    probabilities: *const c_double,
    laws: *const lobq_size_law,
    out: *mut *mut lobq_marks,
) -> lobq_status {
    if probabilities.is_null() || laws.is_null() || out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "null argument");
    }
    let p: [f64; 6] = unsafe { std::slice::from_raw_parts(probabilities, 6) }.try_into().unwrap();
    let laws = unsafe { std::slice::from_raw_parts(laws, 6) };
    let sizes: [SizeLaw; 6] = std::array::from_fn(|j| size_law_from_c(&laws[j]));
    match MarkModel::new(p, sizes) {
        Ok(inner) => {
            unsafe {
                *out = Box::into_raw(Box::new(lobq_marks { inner }));
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    }
}

/// # Safety
/// `handle` must be null or a live `lobq_marks_new` result (freed once).
#[no_mangle]
pub unsafe extern "C" fn lobq_marks_free(handle: *mut lobq_marks) {
    if !handle.is_null() {
        unsafe {
            drop(Box::from_raw(handle));
        }
    }
}

// ---------------------------------------------------------------------------
// fluid limit
// ---------------------------------------------------------------------------

/// Opaque fluid-solution handle.
pub struct lobq_fluid {
    params: FluidParams,
    solution: FluidSolution,
}

/// Build the fluid solution for (λ, V̄, q_b0, q_a0, z_0).
///
/// # Safety
/// `vbar` must point to 6 doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lobq_fluid_new(
    lambda: c_double,
    vbar: *const c_double,
    qb0: c_double,
    qa0: c_double,
    z0: c_double,
    out: *mut *mut lobq_fluid,
) -> lobq_status {
    if vbar.is_null() || out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "null argument");
    }
    let vbar: [f64; 6] = unsafe { std::slice::from_raw_parts(vbar, 6) }.try_into().unwrap();
    let params = FluidParams { lambda, vbar, qb0, qa0, z0 };
    match FluidSolution::new(params.clone()) {
        Ok(solution) => {
            unsafe {
                *out = Box::into_raw(Box::new(lobq_fluid { params, solution }));
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    }
}

/// # Safety
/// `handle` must be null or a live `lobq_fluid_new` result (freed once).
#[no_mangle]
pub unsafe extern "C" fn lobq_fluid_free(handle: *mut lobq_fluid) {
    if !handle.is_null() {
        unsafe {
            drop(Box::from_raw(handle));
        }
    }
}

/// Evaluate (Q_b(t), Q_a(t), Z(t)) into `out[0..3]`.
///
/// # Safety
/// `handle` must be live; `out` must point to 3 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lobq_fluid_eval(
    handle: *const lobq_fluid,
    t: c_double,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    if !(t >= 0.0) {
        return fail(LOBQ_ERR_DOMAIN, format!("t = {t} must be nonnegative"));
    }
    let (qb, qa) = h.solution.queues(t);
    let z = h.solution.position(t);
    unsafe {
        *out.add(0) = qb;
        *out.add(1) = qa;
        *out.add(2) = z;
    }
    LOBQ_OK
}

/// Hitting times (τ_a, τ_b, τ_z, τ) into `out[0..4]`; +INFINITY when a
/// coordinate never hits zero.
///
/// # Safety
/// `handle` must be live; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lobq_fluid_hitting_times(
    handle: *const lobq_fluid,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    unsafe {
        *out.add(0) = h.solution.tau_a;
        *out.add(1) = h.solution.tau_b;
        *out.add(2) = h.solution.tau_z;
        *out.add(3) = h.solution.tau;
    }
    LOBQ_OK
}

/// Z(t) under the power cancellation profile Υ(x) = x^gamma (gamma ≥ 1).
///
/// # Safety
/// `handle` must be live; `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn lobq_fluid_position_general_power(
    handle: *const lobq_fluid,
    gamma: c_double,
    t: c_double,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    let rule = match CancellationRule::power(gamma) {
        Ok(r) => r,
        Err(e) => return fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    };
    match fluid_position_general(&h.params, &rule, t) {
        Ok(z) => {
            unsafe {
                *out = z;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_NUMERIC, e),
    }
}

/// Execution time τ_z under the power cancellation profile.
///
/// # Safety
/// `handle` must be live; `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn lobq_fluid_general_tau_z(
    handle: *const lobq_fluid,
    gamma: c_double,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    let rule = match CancellationRule::power(gamma) {
        Ok(r) => r,
        Err(e) => return fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    };
    match general_tau_z(&h.params, &rule) {
        Ok(tau) => {
            unsafe {
                *out = tau;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_NUMERIC, e),
    }
}

// ---------------------------------------------------------------------------
// diffusion limit
// ---------------------------------------------------------------------------

/// Opaque diffusion-parameter handle.
pub struct lobq_diffusion {
    params: DiffusionParams,
    moments: FlowMoments,
}

/// Derive the diffusion parameters from marks, arrival constants and the
/// initial queues. `psi_convention`: 0 = diffusion-theorem λ, 1 = λ³.
///
/// # Safety
/// `marks` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lobq_diffusion_new(
    marks: *const lobq_marks,
    lambda: c_double,
    vd2: c_double,
    psi_convention: c_int,
    qb: c_double,
    qa: c_double,
    out: *mut *mut lobq_diffusion,
) -> lobq_status {
    let marks = nonnull!(marks);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    let convention = match psi_convention {
        0 => PsiConvention::DiffusionTheorem,
        1 => PsiConvention::LambdaCubed,
        other => {
            return fail(LOBQ_ERR_INVALID_ARGUMENT, format!("psi_convention = {other}"))
        }
    };
    let moments = match FlowMoments::compute(&marks.inner, lambda, vd2, convention) {
        Ok(m) => m,
        Err(e) => return fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    };
    match derive_diffusion_params(&moments, qb, qa) {
        Ok(params) => {
            unsafe {
                *out = Box::into_raw(Box::new(lobq_diffusion { params, moments }));
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    }
}

/// # Safety
/// `handle` must be null or a live `lobq_diffusion_new` result (freed once).
#[no_mangle]
pub unsafe extern "C" fn lobq_diffusion_free(handle: *mut lobq_diffusion) {
    if !handle.is_null() {
        unsafe {
            drop(Box::from_raw(handle));
        }
    }
}

/// Geometry of the whitened wedge:
/// out = [mu1, mu2, rho, sigma1, sigma2, alpha, r0, theta0].
///
/// # Safety
/// `handle` must be live; `out` must point to 8 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lobq_diffusion_geometry(
    handle: *const lobq_diffusion,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    let p = &h.params;
    let vals = [p.mu[0], p.mu[1], p.rho, p.sigma1, p.sigma2, p.alpha, p.r0, p.theta0];
    for (i, v) in vals.iter().enumerate() {
        unsafe {
            *out.add(i) = *v;
        }
    }
    LOBQ_OK
}

/// P(no depletion by t).
///
/// # Safety
/// `handle` must be live; `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn lobq_survival_probability(
    handle: *const lobq_diffusion,
    t: c_double,
    series_tol: c_double,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    match survival_probability(&h.params, t, series_tol) {
        Ok(s) => {
            unsafe {
                *out = s.value;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_NUMERIC, e),
    }
}

/// P(bid depletes first), the price-decrease probability.
///
/// # Safety
/// `handle` must be live; `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn lobq_price_decrease_probability(
    handle: *const lobq_diffusion,
    quad_tol: c_double,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    match price_decrease_probability(&h.params, quad_tol) {
        Ok(s) => {
            unsafe {
                *out = s.value;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_NUMERIC, e),
    }
}

/// σ_Y²(t): fluctuation variance of the order position around its fluid
/// limit. `mode`: 0 = quadrature (reference), 1 = closed form.
///
/// # Safety
/// `handle` and `fluid` must be live; `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn lobq_sigma_y2(
    handle: *const lobq_diffusion,
    fluid: *const lobq_fluid,
    t: c_double,
    mode: c_int,
    out: *mut c_double,
) -> lobq_status {
    let h = nonnull!(handle);
    let f = nonnull!(fluid);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    let mode = match mode {
        0 => SigmaYMode::Quadrature,
        1 => SigmaYMode::ClosedForm,
        other => return fail(LOBQ_ERR_INVALID_ARGUMENT, format!("mode = {other}")),
    };
    match fluctuation_variance_psi(&f.params, &h.moments.psi, t, mode) {
        Ok(v) => {
            unsafe {
                *out = v;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_DOMAIN, e),
    }
}

// ---------------------------------------------------------------------------
// large deviations
// ---------------------------------------------------------------------------

/// Poisson rate function Λ_N(x) for intensity λ; +INFINITY if unreachable.
///
/// # Safety
/// `out` must be a writable double.
#[no_mangle]
pub unsafe extern "C" fn lobq_poisson_rate(
    lambda: c_double,
    x: c_double,
    out: *mut c_double,
) -> lobq_status {
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    match poisson_rate_density(lambda, x) {
        Ok(r) => {
            unsafe {
                *out = r.value;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_NUMERIC, e),
    }
}

/// Rate density Λ(x) of the six-dimensional Poisson-i.i.d. flow.
///
/// # Safety
/// `marks` must be live; `x` must point to 6 doubles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn lobq_flow_rate_density(
    marks: *const lobq_marks,
    lambda: c_double,
    x: *const c_double,
    out: *mut c_double,
) -> lobq_status {
    let marks = nonnull!(marks);
    if x.is_null() || out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "null argument");
    }
    let x: [f64; 6] = unsafe { std::slice::from_raw_parts(x, 6) }.try_into().unwrap();
    match poisson_iid_rate_density(&marks.inner, lambda, &x) {
        Ok(r) => {
            unsafe {
                *out = r.value;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_NUMERIC, e),
    }
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

/// Simulate one scaled path and report its stop times
/// out = [tau_b, tau_a, tau_z, tau] (+INFINITY where not reached).
/// `upsilon_power` ≥ 1 selects Υ(x) = x^power; pass 1.0 for uniform
/// cancellation.
///
/// # Safety
/// `spec` and `marks` must be live; `out` must point to 4 writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lobq_simulate_stops(
    spec: *const lobq_arrival_spec,
    marks: *const lobq_marks,
    n: u64,
    qb0: c_double,
    qa0: c_double,
    z0: c_double,
    horizon: c_double,
    upsilon_power: c_double,
    seed: u64,
    out: *mut c_double,
) -> lobq_status {
    let spec = nonnull!(spec);
    let marks = nonnull!(marks);
    if out.is_null() {
        return fail(LOBQ_ERR_NULL_POINTER, "out is null");
    }
    let cancellation = if upsilon_power == 1.0 {
        CancellationRule::Uniform
    } else {
        match CancellationRule::power(upsilon_power) {
            Ok(r) => r,
            Err(e) => return fail(LOBQ_ERR_INVALID_ARGUMENT, e),
        }
    };
    let config = SimConfig {
        arrival: arrival_from_c(spec),
        marks: marks.inner.clone(),
        n,
        qb0,
        qa0,
        z0,
        horizon,
        cancellation,
        seed,
    };
    match simulate_path(&config) {
        Ok(path) => {
            unsafe {
                *out.add(0) = path.stops.tau_b;
                *out.add(1) = path.stops.tau_a;
                *out.add(2) = path.stops.tau_z;
                *out.add(3) = path.stops.tau;
            }
            LOBQ_OK
        }
        Err(e) => fail(LOBQ_ERR_INVALID_ARGUMENT, e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_marks() -> *mut lobq_marks {
        let p = [1.0 / 6.0; 6];
        let law = lobq_size_law { kind: lobq_size_law_kind::LOBQ_SIZE_CONSTANT, p0: 1.0, p1: 0.0 };
        let laws = [law; 6];
        let mut handle: *mut lobq_marks = std::ptr::null_mut();
        let status = unsafe { lobq_marks_new(p.as_ptr(), laws.as_ptr(), &mut handle) };
        assert_eq!(status, LOBQ_OK);
        handle
    }

    #[test]
    fn fluid_round_trip() {
        let vbar = [1.0, 0.6, 0.8, 1.0, 0.7, 0.8];
        let mut handle: *mut lobq_fluid = std::ptr::null_mut();
        let status =
            unsafe { lobq_fluid_new(1.0, vbar.as_ptr(), 100.0, 100.0, 100.0, &mut handle) };
        assert_eq!(status, LOBQ_OK);
        let mut taus = [0.0f64; 4];
        assert_eq!(unsafe { lobq_fluid_hitting_times(handle, taus.as_mut_ptr()) }, LOBQ_OK);
        assert!((taus[0] - 200.0).abs() < 1e-9);
        assert!((taus[1] - 250.0).abs() < 1e-9);
        assert!((taus[2] - 100.0).abs() < 1e-9);
        let mut state = [0.0f64; 3];
        assert_eq!(unsafe { lobq_fluid_eval(handle, 50.0, state.as_mut_ptr()) }, LOBQ_OK);
        assert!((state[2] - 40.0).abs() < 1e-9);
        // general profile with gamma = 1 matches the closed form
        let mut z = 0.0f64;
        assert_eq!(
            unsafe { lobq_fluid_position_general_power(handle, 1.0, 50.0, &mut z) },
            LOBQ_OK
        );
        assert!((z - 40.0).abs() < 1e-6);
        unsafe { lobq_fluid_free(handle) };
    }

    #[test]
    fn invalid_fluid_reports_error() {
        let vbar = [1.0, 0.6, 0.8, 1.0, 0.7, 0.8];
        let mut handle: *mut lobq_fluid = std::ptr::null_mut();
        // z0 > qb0 violates the position invariant
        let status =
            unsafe { lobq_fluid_new(1.0, vbar.as_ptr(), 10.0, 10.0, 20.0, &mut handle) };
        assert_eq!(status, LOBQ_ERR_INVALID_ARGUMENT);
        let msg = unsafe { std::ffi::CStr::from_ptr(lobq_last_error_message()) };
        assert!(msg.to_string_lossy().contains("exceeds"));
    }

    #[test]
    fn null_pointer_status() {
        let mut out = [0.0f64; 4];
        let status = unsafe { lobq_fluid_hitting_times(std::ptr::null(), out.as_mut_ptr()) };
        assert_eq!(status, LOBQ_ERR_NULL_POINTER);
    }

    #[test]
    fn arrival_constants_match_library() {
        let spec = lobq_arrival_spec {
            kind: lobq_arrival_kind::LOBQ_ARRIVAL_HAWKES_EXP,
            p0: 1.0,
            p1: 0.5,
            p2: 1.0,
            p3: 0.0,
        };
        let (mut lambda, mut vd2) = (0.0f64, 0.0f64);
        assert_eq!(unsafe { lobq_arrival_constants(&spec, &mut lambda, &mut vd2) }, LOBQ_OK);
        assert!((lambda - 2.0).abs() < 1e-12);
        assert!((vd2 - 8.0).abs() < 1e-12);
    }

    #[test]
    fn event_array_round_trip() {
        let spec = lobq_arrival_spec {
            kind: lobq_arrival_kind::LOBQ_ARRIVAL_POISSON,
            p0: 2.0,
            p1: 0.0,
            p2: 0.0,
            p3: 0.0,
        };
        let mut ptr: *mut f64 = std::ptr::null_mut();
        let mut len = 0usize;
        assert_eq!(
            unsafe { lobq_simulate_events(&spec, 1000.0, 9, &mut ptr, &mut len) },
            LOBQ_OK
        );
        assert!(len > 1500 && len < 2500, "len = {len}");
        let times = unsafe { std::slice::from_raw_parts(ptr, len) };
        assert!(times.windows(2).all(|w| w[0] < w[1]));
        unsafe { lobq_free_f64_array(ptr, len) };
    }

    #[test]
    fn diffusion_and_ldp_round_trip() {
        let marks = unit_marks();
        let mut diff: *mut lobq_diffusion = std::ptr::null_mut();
        assert_eq!(
            unsafe { lobq_diffusion_new(marks, 1.0, 1.0, 0, 1.0, 1.0, &mut diff) },
            LOBQ_OK
        );
        let mut geo = [0.0f64; 8];
        assert_eq!(unsafe { lobq_diffusion_geometry(diff, geo.as_mut_ptr()) }, LOBQ_OK);
        assert!((geo[5] - std::f64::consts::FRAC_PI_2).abs() < 1e-10); // alpha
        let mut p = 0.0f64;
        assert_eq!(unsafe { lobq_price_decrease_probability(diff, 1e-9, &mut p) }, LOBQ_OK);

        let mut rate = 0.0f64;
        assert_eq!(unsafe { lobq_poisson_rate(1.0, 2.0, &mut rate) }, LOBQ_OK);
        assert!((rate - (2.0 * 2.0f64.ln() - 1.0)).abs() < 1e-8);

        let x = [1.0 / 6.0; 6];
        assert_eq!(unsafe { lobq_flow_rate_density(marks, 1.0, x.as_ptr(), &mut rate) }, LOBQ_OK);
        assert!(rate.abs() < 1e-9);

        unsafe { lobq_diffusion_free(diff) };
        unsafe { lobq_marks_free(marks) };
    }

    #[test]
    fn simulate_stops_round_trip() {
        let marks = unit_marks();
        let spec = lobq_arrival_spec {
            kind: lobq_arrival_kind::LOBQ_ARRIVAL_POISSON,
            p0: 1.0,
            p1: 0.0,
            p2: 0.0,
            p3: 0.0,
        };
        let mut taus = [0.0f64; 4];
        let status = unsafe {
            lobq_simulate_stops(&spec, marks, 50, 2.0, 2.0, 2.0, 500.0, 1.0, 7, taus.as_mut_ptr())
        };
        assert_eq!(status, LOBQ_OK);
        assert!(taus[2].is_finite()); // tau_z reached for this aggressive regime
        assert!(taus[2] <= taus[1] || taus[1].is_infinite());
        unsafe { lobq_marks_free(marks) };
    }

    #[test]
    fn header_stays_in_sync() {
        // the committed C header must declare every exported symbol
        let header = include_str!("../include/lobq.h");
        for symbol in [
            "lobq_last_error_message",
            "lobq_arrival_constants",
            "lobq_simulate_events",
            "lobq_free_f64_array",
            "lobq_marks_new",
            "lobq_marks_free",
            "lobq_fluid_new",
            "lobq_fluid_free",
            "lobq_fluid_eval",
            "lobq_fluid_hitting_times",
            "lobq_fluid_position_general_power",
            "lobq_fluid_general_tau_z",
            "lobq_diffusion_new",
            "lobq_diffusion_free",
            "lobq_diffusion_geometry",
            "lobq_survival_probability",
            "lobq_price_decrease_probability",
            "lobq_sigma_y2",
            "lobq_poisson_rate",
            "lobq_flow_rate_density",
            "lobq_simulate_stops",
        ] {
            assert!(header.contains(symbol), "header missing {symbol}");
        }
    }
}
