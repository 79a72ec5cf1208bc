//! Adaptive fourth-order Runge–Kutta with step doubling.
//!
//! Used as the independent oracle for the closed-form fluid trajectories and
//! as the integrator for general cancellation profiles. Local error is
//! estimated by comparing one full step against two half steps (classic
//! |y2 - y1|/15 for RK4).

struct Rk4Step;

impl Rk4Step {
    fn step<F: Fn(f64, f64) -> f64>(f: &F, t: f64, y: f64, h: f64) -> f64 {
        let k1 = f(t, y);
        let k2 = f(t + 0.5 * h, y + 0.5 * h * k1);
        let k3 = f(t + 0.5 * h, y + 0.5 * h * k2);
        let k4 = f(t + h, y + h * k3);
        y + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    }
}

/// Integrate y' = f(t, y) from (t0, y0) to t1, returning y(t1).
pub fn rk4_integrate<F: Fn(f64, f64) -> f64>(f: &F, t0: f64, y0: f64, t1: f64, tol: f64) -> f64 {
    let mut t = t0;
    let mut y = y0;
    let mut h = (t1 - t0) / 64.0;
    if h == 0.0 {
        return y0;
    }
    while t < t1 {
        h = h.min(t1 - t);
        let full = Rk4Step::step(f, t, y, h);
        let half = Rk4Step::step(f, t, y, 0.5 * h);
        let two_half = Rk4Step::step(f, t + 0.5 * h, half, 0.5 * h);
        let err = (two_half - full).abs() / 15.0;
        let scale = tol * (1.0 + y.abs());
        if err <= scale || h <= 1e-14 * (t1 - t0) {
            t += h;
            // local extrapolation: the two-half-step value is 5th order
            y = two_half + (two_half - full) / 15.0;
            if err > 0.0 {
                h *= (scale / err).powf(0.2).clamp(0.5, 4.0);
            } else {
                h *= 4.0;
            }
        } else {
            h *= (scale / err).powf(0.25).max(0.1);
        }
    }
    y
}

/// Integrate a decreasing y until it first reaches `level`, returning
/// (t_cross, slope at crossing). Crossing time located to `t_tol`.
pub fn rk4_first_crossing<F: Fn(f64, f64) -> f64>(
    f: &F,
    t0: f64,
    y0: f64,
    level: f64,
    t_max: f64,
    tol: f64,
    t_tol: f64,
) -> Option<f64> {
    let mut t = t0;
    let mut y = y0;
    if y0 <= level {
        return Some(t0);
    }
    let mut h = (t_max - t0) / 256.0;
    while t < t_max {
        h = h.min(t_max - t);
        let full = Rk4Step::step(f, t, y, h);
        let half = Rk4Step::step(f, t, y, 0.5 * h);
        let two_half = Rk4Step::step(f, t + 0.5 * h, half, 0.5 * h);
        let err = (two_half - full).abs() / 15.0;
        let scale = tol * (1.0 + y.abs());
        if err <= scale || h <= 1e-15 * (t_max - t0) {
            let y_new = two_half + (two_half - full) / 15.0;
            if y_new <= level {
                // bisect on step length until the crossing is pinned down
                let (mut h_lo, mut h_hi) = (0.0f64, h);
                while h_hi - h_lo > t_tol {
                    let hm = 0.5 * (h_lo + h_hi);
                    let ym = Rk4Step::step(f, t, y, hm);
                    if ym <= level {
                        h_hi = hm;
                    } else {
                        h_lo = hm;
                    }
                }
                return Some(t + 0.5 * (h_lo + h_hi));
            }
            t += h;
            y = y_new;
            if err > 0.0 {
                h *= (scale / err).powf(0.2).clamp(0.5, 4.0);
            } else {
                h *= 4.0;
            }
        } else {
            h *= (scale / err).powf(0.25).max(0.1);
        }
    }
    None
}
