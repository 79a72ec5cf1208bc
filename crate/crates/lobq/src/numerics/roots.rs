//! Bracketed root finding: bisection with secant acceleration.

/// Find x in [lo, hi] with f(x) = 0, given f(lo) and f(hi) of opposite sign.
/// The bracket never widens, so convergence is guaranteed; secant steps are
/// taken when they land strictly inside the bracket.
pub fn find_root<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..200 {
        if (hi - lo).abs() <= tol {
            break;
        }
        // secant candidate, clipped away from the bracket edges
        let mut x = lo - flo * (hi - lo) / (fhi - flo);
        let margin = 0.01 * (hi - lo);
        if !(x > lo + margin && x < hi - margin) {
            x = 0.5 * (lo + hi);
        }
        let fx = f(x);
        if fx == 0.0 {
            return Some(x);
        }
        if fx.signum() == flo.signum() {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Expand `hi` geometrically from `lo` until f changes sign, then solve.
pub fn find_root_expanding<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    mut hi: f64,
    tol: f64,
    max_hi: f64,
) -> Option<f64> {
    let flo = f(lo);
    if flo == 0.0 {
        return Some(lo);
    }
    let mut fhi = f(hi);
    let mut guard = 0;
    while fhi.signum() == flo.signum() {
        hi = (hi * 2.0).min(max_hi);
        fhi = f(hi);
        guard += 1;
        if guard > 200 || (hi >= max_hi && fhi.signum() == flo.signum()) {
            return None;
        }
    }
    find_root(f, lo, hi, tol)
}
