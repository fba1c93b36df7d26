//! The rescaled moving-window view of a path and the window time schedule.

use crate::engine::sde::ReflectedPath;
use crate::engine::step::EngineError;
use crate::geometry::{BoundaryFunction, WindowMap};

/// Windowed view of `path` anchored at time `anchor`: the state is recentered
/// by X_anchor and rescaled by b(X_anchor); window time runs a factor
/// b(X_anchor)^2 faster. Resampled by linear interpolation onto `n_out`
/// uniform points over [0, s_max] in window time. The local-time column is
/// rescaled by 1/b(X_anchor) alongside the space coordinates.
pub fn rescaled_window(
    path: &ReflectedPath,
    anchor: f64,
    boundary: &BoundaryFunction,
    s_max: f64,
    n_out: usize,
) -> Result<ReflectedPath, EngineError> {
    assert!(n_out >= 2 && s_max > 0.0);
    let z_anchor = path.state_at(anchor)?;
    let map = WindowMap::new(z_anchor[0], boundary);
    let t_hi = anchor + map.time_scale * s_max;
    if t_hi > path.terminal_time() + 1e-9 {
        return Err(EngineError::WindowExceedsHorizon {
            t_lo: anchor,
            t_hi,
        });
    }
    let l_anchor = path.local_time_at(anchor)?;
    let mut out = ReflectedPath {
        times: Vec::with_capacity(n_out),
        states: Vec::with_capacity(n_out),
        local_time: Vec::with_capacity(n_out),
        n_reflections: 0,
        martingale_x: 0.0,
    };
    for i in 0..n_out {
        let s = s_max * i as f64 / (n_out - 1) as f64;
        let t = anchor + map.time_scale * s;
        let z = path.state_at(t)?;
        out.times.push(s);
        out.states.push(map.forward(&z));
        out.local_time
            .push((path.local_time_at(t)? - l_anchor) / map.scale);
    }
    Ok(out)
}

/// The recursive window schedule T_{k+1} = T_k + C^2 T_k^{2b/(1+b)} s4(T_k).
pub fn window_schedule(
    t1: f64,
    c: f64,
    beta: f64,
    n: usize,
    s4: impl Fn(f64) -> f64,
) -> Vec<f64> {
    assert!(t1 >= 1.0 && n >= 1);
    let expo = 2.0 * beta / (1.0 + beta);
    let mut out = Vec::with_capacity(n);
    let mut t = t1;
    out.push(t);
    for _ in 1..n {
        t += c * c * t.powf(expo) * s4(t);
        out.push(t);
    }
    out
}

/// Default schedule function: min(log(1+T), cap), kept >= 1.
pub fn default_s4(cap: f64) -> impl Fn(f64) -> f64 {
    move |t: f64| (1.0 + t).ln().min(cap).max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn schedule_unit_examples() {
        let s = window_schedule(1.0, 1.0, 0.0, 4, |_| 1.0);
        assert_eq!(s, vec![1.0, 2.0, 3.0, 4.0]);
        let s = window_schedule(1.0, 2.0, 0.0, 3, |_| 1.0);
        assert_eq!(s, vec![1.0, 5.0, 9.0]);
    }

    #[test]
    fn schedule_increasing_and_unbounded() {
        for beta in [-0.9, -0.5, 0.0, 0.5, 0.9] {
            let s = window_schedule(1.0, 1.0, beta, 4000, default_s4(50.0));
            assert!(s.windows(2).all(|w| w[1] > w[0]));
        }
        // With s4 >= 1 the recursion dominates T' = T^{2b/(1+b)}, whose
        // solution grows like (k t)^{1/k} with k = 1 - 2b/(1+b); check the
        // schedule reaches at least that analytic floor.
        for beta in [-0.9, -0.5, 0.0, 0.5, 0.9] {
            let s = window_schedule(1.0, 1.0, beta, 4000, default_s4(50.0));
            let k = 1.0 - 2.0 * beta / (1.0 + beta);
            let floor = (k * 4000.0).powf(1.0 / k);
            assert!(
                *s.last().unwrap() >= floor,
                "schedule below analytic floor at beta = {beta}: {} < {floor}",
                s.last().unwrap()
            );
        }
    }

    #[test]
    fn window_of_synthetic_path() {
        // Deterministic path x(t) = t, y(t) = 0.25 sin-free ramp, b = 2.
        let b = BoundaryFunction::cylinder(2.0);
        let times: Vec<f64> = (0..=200).map(|i| i as f64).collect();
        let states: Vec<Vec<f64>> = times.iter().map(|&t| vec![t, 0.5]).collect();
        let path = ReflectedPath {
            local_time: vec![0.0; times.len()],
            times,
            states,
            n_reflections: 0,
            martingale_x: 0.0,
        };
        let w = rescaled_window(&path, 100.0, &b, 5.0, 6).unwrap();
        // Window point at s = 1: physical t = 104, state ((104-100)/2, 0.5/2).
        assert_relative_eq!(w.times[1], 1.0);
        assert_relative_eq!(w.states[1][0], 2.0);
        assert_relative_eq!(w.states[1][1], 0.25);
        // s = 0 always maps to (0, Y/b).
        assert_relative_eq!(w.states[0][0], 0.0);
        assert_relative_eq!(w.states[0][1], 0.25);
        // Window past the horizon errors.
        assert!(matches!(
            rescaled_window(&path, 195.0, &b, 5.0, 6),
            Err(EngineError::WindowExceedsHorizon { .. })
        ));
    }
}
