//! The one-dimensional toy diffusion dX = c' X^{-beta} dt + dW and its
//! pathwise diagnostics.

use crate::engine::rng::NoiseSource;
use crate::engine::sde::{RecordMode, ReflectedPath, SimConfig};
use crate::engine::step::EngineError;

pub const TOY_X_FLOOR: f64 = 1e-3;

/// Euler–Maruyama for the toy SDE. The drift argument is clamped at
/// `TOY_X_FLOOR` (the path itself may still cross zero).
pub fn simulate_toy(
    c_prime: f64,
    beta: f64,
    cfg: &SimConfig,
    noise: &mut impl NoiseSource,
) -> Result<ReflectedPath, EngineError> {
    assert_eq!(cfg.z0.len(), 1, "toy model state is scalar");
    let x0 = cfg.z0[0];
    if x0 <= 0.0 {
        return Err(EngineError::NonPositiveStart(x0));
    }
    let n_steps = cfg.n_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut x = x0;
    let mut path = ReflectedPath {
        times: Vec::new(),
        states: Vec::new(),
        local_time: Vec::new(),
        n_reflections: 0,
        martingale_x: 0.0,
    };
    path.times.push(0.0);
    path.states.push(vec![x]);
    path.local_time.push(0.0);
    let mut w = [0.0f64];
    for step in 1..=n_steps {
        noise.fill_standard_normal(&mut w);
        let dw = w[0] * sqrt_dt;
        let drift = c_prime * x.max(TOY_X_FLOOR).powf(-beta) * cfg.dt;
        x += drift + dw;
        path.martingale_x += dw;
        if record(cfg.record, step, n_steps) {
            path.times.push(step as f64 * cfg.dt);
            path.states.push(vec![x]);
            path.local_time.push(0.0);
        }
    }
    Ok(path)
}

fn record(mode: RecordMode, step: usize, n_steps: usize) -> bool {
    match mode {
        RecordMode::TerminalOnly => step == n_steps,
        RecordMode::Stride(k) => step == n_steps || step % k.max(1) == 0,
        RecordMode::Full => true,
    }
}

/// Trapezoidal accumulation of A_t = int X^{beta-1} ds and of the quadratic
/// variation [M]_t = int X^{2 beta} ds along the recorded grid.
pub fn toy_diagnostics(path: &ReflectedPath, beta: f64) -> (Vec<f64>, Vec<f64>) {
    let n = path.times.len();
    let mut a = Vec::with_capacity(n);
    let mut qv = Vec::with_capacity(n);
    a.push(0.0);
    qv.push(0.0);
    let f_a = |x: f64| x.max(TOY_X_FLOOR).powf(beta - 1.0);
    let f_m = |x: f64| x.max(TOY_X_FLOOR).powf(2.0 * beta);
    for i in 1..n {
        let dt = path.times[i] - path.times[i - 1];
        let (x0, x1) = (path.states[i - 1][0], path.states[i][0]);
        a.push(a[i - 1] + 0.5 * dt * (f_a(x0) + f_a(x1)));
        qv.push(qv[i - 1] + 0.5 * dt * (f_m(x0) + f_m(x1)));
    }
    (a, qv)
}

/// Strong-law constant of the toy model: c = (c'(1+beta))^{1/(1+beta)}.
///
/// ```
/// use reflect::engine::toy_strong_law_constant;
///
/// assert_eq!(toy_strong_law_constant(1.0, 0.0), 1.0);
/// assert_eq!(toy_strong_law_constant(1.0, 0.5), 1.5f64.powf(2.0 / 3.0));
/// ```
pub fn toy_strong_law_constant(c_prime: f64, beta: f64) -> f64 {
    (c_prime * (1.0 + beta)).powf(1.0 / (1.0 + beta))
}
