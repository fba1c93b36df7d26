//! Path-level integrators for the parabolic-domain, ball, and cylinder
//! reflected systems.

use serde::{Deserialize, Serialize};

use crate::engine::rng::NoiseSource;
use crate::engine::step::{step_ball, step_reflected, EngineError};
use crate::model::CoefficientModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordMode {
    /// Keep only the start and terminal samples.
    TerminalOnly,
    /// Keep every k-th step (plus start and terminal).
    Stride(usize),
    /// Keep every step.
    Full,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub z0: Vec<f64>,
    pub record: RecordMode,
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
}

pub fn default_max_substeps() -> usize {
    8
}

impl SimConfig {
    pub fn new(dt: f64, horizon: f64, z0: Vec<f64>, record: RecordMode) -> Self {
        assert!(dt > 0.0 && horizon >= dt, "need dt > 0 and horizon >= dt");
        Self {
            dt,
            horizon,
            z0,
            record,
            max_substeps: default_max_substeps(),
        }
    }

    pub fn n_steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }
}

/// A recorded reflected path: time grid, states, cumulative local time, and
/// the running sum of the x-component martingale increments.
#[derive(Debug, Clone, PartialEq)]
pub struct ReflectedPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub local_time: Vec<f64>,
    pub n_reflections: usize,
    /// Total of the dispersed noise fed into coordinate 0 (exactly the
    /// discrete martingale part of X for the parabolic and cylinder systems).
    pub martingale_x: f64,
}

impl ReflectedPath {
    fn with_capacity(n: usize) -> Self {
        Self {
            times: Vec::with_capacity(n),
            states: Vec::with_capacity(n),
            local_time: Vec::with_capacity(n),
            n_reflections: 0,
            martingale_x: 0.0,
        }
    }

    fn push(&mut self, t: f64, state: &[f64], l: f64) {
        self.times.push(t);
        self.states.push(state.to_vec());
        self.local_time.push(l);
    }

    pub fn terminal_state(&self) -> &[f64] {
        self.states.last().expect("path has at least one sample")
    }

    pub fn terminal_local_time(&self) -> f64 {
        *self.local_time.last().expect("path has at least one sample")
    }

    pub fn terminal_time(&self) -> f64 {
        *self.times.last().expect("path has at least one sample")
    }

    /// Linear interpolation of the state at time t within the recorded grid.
    pub fn state_at(&self, t: f64) -> Result<Vec<f64>, EngineError> {
        let (i, w) = self.locate(t)?;
        let (a, b) = (&self.states[i], &self.states[i + 1]);
        Ok(a.iter().zip(b).map(|(x, y)| x + w * (y - x)).collect())
    }

    pub fn local_time_at(&self, t: f64) -> Result<f64, EngineError> {
        let (i, w) = self.locate(t)?;
        Ok(self.local_time[i] + w * (self.local_time[i + 1] - self.local_time[i]))
    }

    fn locate(&self, t: f64) -> Result<(usize, f64), EngineError> {
        let n = self.times.len();
        if n < 2 || t < self.times[0] - 1e-9 || t > self.times[n - 1] + 1e-9 {
            return Err(EngineError::WindowExceedsHorizon {
                t_lo: t,
                t_hi: t,
            });
        }
        let t = t.clamp(self.times[0], self.times[n - 1]);
        let i = match self
            .times
            .binary_search_by(|probe| probe.partial_cmp(&t).unwrap())
        {
            Ok(i) => i.min(n - 2),
            Err(i) => i.saturating_sub(1).min(n - 2),
        };
        let span = self.times[i + 1] - self.times[i];
        let w = if span > 0.0 { (t - self.times[i]) / span } else { 0.0 };
        Ok((i, w))
    }
}

#[inline]
fn should_record(mode: RecordMode, step: usize, n_steps: usize) -> bool {
    match mode {
        RecordMode::TerminalOnly => step == n_steps,
        RecordMode::Stride(k) => step == n_steps || step % k.max(1) == 0,
        RecordMode::Full => true,
    }
}

/// Euler–Maruyama with oblique pushback on the generalized parabolic domain.
pub fn simulate_sder(
    model: &CoefficientModel,
    cfg: &SimConfig,
    noise: &mut impl NoiseSource,
) -> Result<ReflectedPath, EngineError> {
    let dim = model.domain.dim();
    assert_eq!(cfg.z0.len(), dim, "start point dimension mismatch");
    if !model.domain.contains(&cfg.z0) || cfg.z0[0] < model.domain.x_guard + 1.0 {
        return Err(EngineError::StartOutsideDomain);
    }
    let n_steps = cfg.n_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut z = cfg.z0.clone();
    let mut l = 0.0;
    let mut dw = vec![0.0; dim];
    let mut path = ReflectedPath::with_capacity(match cfg.record {
        RecordMode::Full => n_steps + 1,
        RecordMode::Stride(k) => n_steps / k.max(1) + 2,
        RecordMode::TerminalOnly => 2,
    });
    path.push(0.0, &z, l);
    for step in 1..=n_steps {
        noise.fill_standard_normal(&mut dw);
        for v in dw.iter_mut() {
            *v *= sqrt_dt;
        }
        // Track the x-martingale before the reflection correction.
        let mut dispersed = vec![0.0; dim];
        model.diffusion.apply_dispersion(z[0], &dw, &mut dispersed);
        path.martingale_x += dispersed[0];
        let out = step_reflected(model, &z, &dw, cfg.max_substeps)
            .map_err(|e| e.at(step as f64 * cfg.dt))?;
        z = out.z_next;
        l += out.local_time_increment;
        if out.reflected {
            path.n_reflections += 1;
        }
        if should_record(cfg.record, step, n_steps) {
            path.push(step as f64 * cfg.dt, &z, l);
        }
    }
    Ok(path)
}

/// The limit SDER on the unit ball: d r Y = pi_d sigma_inf dW + phi_inf(Y) dL.
/// `cfg.z0` holds the d-dimensional start point.
pub fn simulate_ball(
    model: &CoefficientModel,
    cfg: &SimConfig,
    noise: &mut impl NoiseSource,
) -> Result<ReflectedPath, EngineError> {
    let d = model.domain.dim_y;
    assert_eq!(cfg.z0.len(), d, "ball start point must be d-dimensional");
    let r0: f64 = cfg.z0.iter().map(|v| v * v).sum::<f64>().sqrt();
    if r0 > 1.0 + 1e-12 {
        return Err(EngineError::StartOutsideDomain);
    }
    let n_steps = cfg.n_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut y = cfg.z0.clone();
    let mut l = 0.0;
    let mut w_full = vec![0.0; 1 + d];
    let mut dispersed = vec![0.0; 1 + d];
    let identity = model.diffusion.is_identity();
    let mut path = ReflectedPath::with_capacity(match cfg.record {
        RecordMode::Full => n_steps + 1,
        RecordMode::Stride(k) => n_steps / k.max(1) + 2,
        RecordMode::TerminalOnly => 2,
    });
    path.push(0.0, &y, l);
    let mut dy = vec![0.0; d];
    for step in 1..=n_steps {
        noise.fill_standard_normal(&mut w_full);
        if identity {
            for i in 0..d {
                dy[i] = w_full[1 + i] * sqrt_dt;
            }
        } else {
            for v in w_full.iter_mut() {
                *v *= sqrt_dt;
            }
            // The ball process is insensitive to x, evaluate sigma at infinity
            // via its constant part.
            apply_constant_dispersion(model, &w_full, &mut dispersed);
            dy.copy_from_slice(&dispersed[1..]);
        }
        let (dl, reflected) =
            step_ball(&model.reflection, &mut y, &dy, cfg.max_substeps)
                .map_err(|e| e.at(step as f64 * cfg.dt))?;
        l += dl;
        if reflected {
            path.n_reflections += 1;
        }
        if should_record(cfg.record, step, n_steps) {
            path.push(step as f64 * cfg.dt, &y, l);
        }
    }
    Ok(path)
}

#[inline]
fn apply_constant_dispersion(model: &CoefficientModel, w: &[f64], out: &mut [f64]) {
    let s = &model.diffusion.sqrt_sigma_inf;
    let n = w.len();
    for i in 0..n {
        let mut acc = 0.0;
        for j in 0..n {
            acc += s[(i, j)] * w[j];
        }
        out[i] = acc;
    }
}

/// The limit SDER on the infinite cylinder R x B^d. States are (x, y_1..y_d);
/// the y-block evolves as the ball process and x accumulates the row-0 noise
/// plus s0 times the shared local time.
pub fn simulate_cylinder(
    model: &CoefficientModel,
    cfg: &SimConfig,
    noise: &mut impl NoiseSource,
) -> Result<ReflectedPath, EngineError> {
    let d = model.domain.dim_y;
    assert_eq!(cfg.z0.len(), 1 + d, "cylinder start point must be (1+d)-dim");
    let r0: f64 = cfg.z0[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if r0 > 1.0 + 1e-12 {
        return Err(EngineError::StartOutsideDomain);
    }
    let n_steps = cfg.n_steps();
    let sqrt_dt = cfg.dt.sqrt();
    let mut x = cfg.z0[0];
    let mut y = cfg.z0[1..].to_vec();
    let mut l = 0.0;
    let mut w_full = vec![0.0; 1 + d];
    let mut dispersed = vec![0.0; 1 + d];
    let identity = model.diffusion.is_identity();
    let s0 = model.reflection.s0;
    let mut path = ReflectedPath::with_capacity(match cfg.record {
        RecordMode::Full => n_steps + 1,
        RecordMode::Stride(k) => n_steps / k.max(1) + 2,
        RecordMode::TerminalOnly => 2,
    });
    let mut state = vec![0.0; 1 + d];
    state[0] = x;
    state[1..].copy_from_slice(&y);
    path.push(0.0, &state, l);
    let mut dy = vec![0.0; d];
    for step in 1..=n_steps {
        noise.fill_standard_normal(&mut w_full);
        for v in w_full.iter_mut() {
            *v *= sqrt_dt;
        }
        let dx_noise = if identity {
            dy.copy_from_slice(&w_full[1..]);
            w_full[0]
        } else {
            apply_constant_dispersion(model, &w_full, &mut dispersed);
            dy.copy_from_slice(&dispersed[1..]);
            dispersed[0]
        };
        let (dl, reflected) =
            step_ball(&model.reflection, &mut y, &dy, cfg.max_substeps)
                .map_err(|e| e.at(step as f64 * cfg.dt))?;
        x += dx_noise + s0 * dl;
        path.martingale_x += dx_noise;
        l += dl;
        if reflected {
            path.n_reflections += 1;
        }
        if should_record(cfg.record, step, n_steps) {
            state[0] = x;
            state[1..].copy_from_slice(&y);
            path.push(step as f64 * cfg.dt, &state, l);
        }
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::rng::{RngStream, ZeroNoise};
    use crate::model::CoefficientModel;
    use approx::assert_relative_eq;

    #[test]
    fn zero_noise_interior_start_is_constant() {
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(0.01, 1.0, vec![5.0, 0.3], RecordMode::Full);
        let path = simulate_sder(&m, &cfg, &mut ZeroNoise).unwrap();
        assert_eq!(path.terminal_state(), &[5.0, 0.3]);
        assert_eq!(path.terminal_local_time(), 0.0);
        assert_eq!(path.n_reflections, 0);
    }

    #[test]
    fn local_time_is_nondecreasing_and_confined() {
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(1e-3, 20.0, vec![5.0, 0.0], RecordMode::Stride(10));
        let mut rng = RngStream::new(11, 0);
        let path = simulate_sder(&m, &cfg, &mut rng).unwrap();
        assert!(path
            .local_time
            .windows(2)
            .all(|w| w[1] >= w[0]));
        for z in &path.states {
            assert!(m.domain.contains(z), "state escaped: {z:?}");
        }
        assert!(path.terminal_local_time() > 0.0);
    }

    #[test]
    fn single_path_strong_law_rough() {
        // X_T/T within 25% of c1 = 0.5 on one path at T = 500.
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(1e-3, 500.0, vec![10.0, 0.0], RecordMode::TerminalOnly);
        let mut rng = RngStream::new(2024, 0);
        let path = simulate_sder(&m, &cfg, &mut rng).unwrap();
        let ratio = path.terminal_state()[0] / 500.0;
        assert!((ratio - 0.5).abs() < 0.125, "ratio = {ratio}");
    }

    #[test]
    fn ball_zero_noise_boundary_start_constant() {
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(0.01, 1.0, vec![1.0], RecordMode::Full);
        let path = simulate_ball(&m, &cfg, &mut ZeroNoise).unwrap();
        assert_eq!(path.terminal_state(), &[1.0]);
        assert_eq!(path.terminal_local_time(), 0.0);
    }

    #[test]
    fn ball_states_confined() {
        let m = CoefficientModel::canonical(0.0, 2);
        let cfg = SimConfig::new(1e-3, 10.0, vec![0.0, 0.0], RecordMode::Stride(7));
        let mut rng = RngStream::new(5, 3);
        let path = simulate_ball(&m, &cfg, &mut rng).unwrap();
        for y in &path.states {
            let r: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!(r <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn cylinder_decomposition_identity() {
        // X_T - x0 - (row-0 noise) = s0 * L_T exactly, per path.
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(1e-3, 50.0, vec![0.0, 0.0], RecordMode::TerminalOnly);
        let mut rng = RngStream::new(77, 1);
        let path = simulate_cylinder(&m, &cfg, &mut rng).unwrap();
        let x_t = path.terminal_state()[0];
        let identity_gap =
            x_t - 0.0 - path.martingale_x - m.reflection.s0 * path.terminal_local_time();
        assert!(identity_gap.abs() < 1e-10, "gap = {identity_gap}");
        assert!(path.terminal_local_time() > 0.0);
    }

    #[test]
    fn cylinder_ignores_boundary_exponent() {
        // Output depends only on (Sigma_inf, s0, phi_inf): changing beta of the
        // ambient boundary must not change the cylinder path.
        let cfg = SimConfig::new(1e-3, 5.0, vec![0.0, 0.2], RecordMode::TerminalOnly);
        let m1 = CoefficientModel::canonical(0.0, 1);
        let m2 = CoefficientModel::canonical(0.5, 1);
        let mut r1 = RngStream::new(9, 0);
        let mut r2 = RngStream::new(9, 0);
        let p1 = simulate_cylinder(&m1, &cfg, &mut r1).unwrap();
        let p2 = simulate_cylinder(&m2, &cfg, &mut r2).unwrap();
        assert_eq!(p1.terminal_state(), p2.terminal_state());
        assert_eq!(p1.terminal_local_time(), p2.terminal_local_time());
    }

    #[test]
    fn seed_determinism_bitwise() {
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(1e-3, 10.0, vec![10.0, 0.1], RecordMode::Full);
        let mut r1 = RngStream::new(123, 4);
        let mut r2 = RngStream::new(123, 4);
        let p1 = simulate_sder(&m, &cfg, &mut r1).unwrap();
        let p2 = simulate_sder(&m, &cfg, &mut r2).unwrap();
        assert_eq!(p1, p2);
    }

    #[test]
    fn interpolation_round_trip() {
        let m = CoefficientModel::canonical(0.0, 1);
        let cfg = SimConfig::new(0.01, 2.0, vec![5.0, 0.0], RecordMode::Full);
        let mut rng = RngStream::new(3, 0);
        let path = simulate_sder(&m, &cfg, &mut rng).unwrap();
        let z = path.state_at(1.0).unwrap();
        assert_relative_eq!(z[0], path.states[100][0], max_relative = 1e-12);
        assert!(path.state_at(3.0).is_err());
    }
}
