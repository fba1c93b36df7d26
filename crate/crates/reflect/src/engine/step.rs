//! One Euler–Maruyama step with oblique pushback reflection.
//!
//! The scheme: propose p = z + sigma(z) dW; if p leaves the domain, anchor at
//! the same-x radial boundary point q, and push back along phi(q) by the
//! minimal delta >= 0 that returns p to the closed domain. The pushback
//! magnitude delta is the discrete local-time increment, so the decomposition
//! X_t = x_0 + martingale + integral of phi_0 dL holds exactly step by step.

use thiserror::Error;

use crate::geometry::BoundaryKind;
use crate::model::{CoefficientModel, ModelError, ReflectionKind};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("reflection failed: {0}")]
    ReflectionFailed(String),
    #[error("horizontal coordinate {0} fell below the origin guard")]
    OriginGuardHit(f64),
    #[error("start point must be positive, got {0}")]
    NonPositiveStart(f64),
    #[error("start point outside the domain")]
    StartOutsideDomain,
    #[error("window [{t_lo}, {t_hi}] not covered by the recorded path")]
    WindowExceedsHorizon { t_lo: f64, t_hi: f64 },
    #[error("error at simulation time {time}: {source}")]
    AtTime {
        time: f64,
        #[source]
        source: Box<EngineError>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl EngineError {
    pub fn at(self, time: f64) -> Self {
        EngineError::AtTime {
            time,
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub z_next: Vec<f64>,
    pub local_time_increment: f64,
    pub reflected: bool,
}

const BISECT_ITERS: usize = 60;

/// Advance one step given the Brownian increment `dw` (already scaled by
/// sqrt(dt)); writes the proposal into `z_next` of the outcome.
///
/// ```
/// use reflect::engine::step_reflected;
/// use reflect::model::CoefficientModel;
///
/// // Unit half-cylinder: the proposal (10.3, 1.1) overshoots the wall at
/// // |y| = 1 by 0.1 and is mirrored to (10.5, 0.9), with local time 0.2.
/// let model = CoefficientModel::canonical(0.0, 1);
/// let out = step_reflected(&model, &[10.3, 0.9], &[0.0, 0.2], 8).unwrap();
/// assert!((out.z_next[1] - 0.9).abs() < 1e-12);
/// assert!((out.local_time_increment - 0.2).abs() < 1e-12);
/// ```
pub fn step_reflected(
    model: &CoefficientModel,
    z: &[f64],
    dw: &[f64],
    max_substeps: usize,
) -> Result<StepOutcome, EngineError> {
    let dim = model.domain.dim();
    let mut p = vec![0.0; dim];
    model.diffusion.apply_dispersion(z[0], dw, &mut p);
    for i in 0..dim {
        p[i] += z[i];
    }
    if model.domain.contains(&p) {
        return Ok(StepOutcome {
            z_next: p,
            local_time_increment: 0.0,
            reflected: false,
        });
    }
    let mut local_time = 0.0;
    for _ in 0..max_substeps {
        if p[0] < model.domain.x_guard {
            return Err(EngineError::OriginGuardHit(p[0]));
        }
        let delta = pushback(model, &mut p)?;
        local_time += delta;
        if model.domain.contains(&p) {
            return Ok(StepOutcome {
                z_next: p,
                local_time_increment: local_time,
                reflected: true,
            });
        }
    }
    Err(EngineError::ReflectionFailed(format!(
        "point still outside after {max_substeps} pushbacks at x = {}",
        p[0]
    )))
}

/// Push `p` back along phi evaluated at the radial anchor; returns delta.
fn pushback(model: &CoefficientModel, p: &mut [f64]) -> Result<f64, EngineError> {
    let boundary = &model.domain.boundary;
    let r: f64 = p[1..].iter().map(|v| v * v).sum::<f64>().sqrt();
    if r == 0.0 {
        // Inside radially, so the exit must be through the guard plane.
        return Err(EngineError::OriginGuardHit(p[0]));
    }
    let bx = boundary.value(p[0]);
    let anchor_x = p[0].max(model.domain.x_guard);
    let inv_r = 1.0 / r;
    // phi at the anchor direction u = y/|y|.
    let u: Vec<f64> = p[1..].iter().map(|&v| v * inv_r).collect();
    let phi = model.reflection.phi_at_direction(anchor_x, &u);

    // Mirror pushback: land the overshoot distance inside the boundary, not
    // on it. Projection onto the boundary overweights the wall and biases the
    // stationary law by O(sqrt(dt)); the mirror scheme reproduces reflected
    // Brownian motion exactly in law in the flat normal case. The landing
    // depth is capped so narrow channels cannot be overshot.
    let excess = r - bx;
    let depth = excess.min(0.45 * bx);
    let radial_phi = matches!(model.reflection.kind, ReflectionKind::AsymptoticallyNormal);
    let delta = if radial_phi && matches!(boundary.kind, BoundaryKind::Cylinder) {
        // Closed form: the radial coordinate shrinks at rate kappa per unit
        // delta, so |y| = bx - depth at delta = (excess + depth)/kappa.
        let kappa = -phi[1..]
            .iter()
            .zip(&u)
            .map(|(a, b)| a * b)
            .sum::<f64>();
        (excess + depth) / kappa
    } else {
        bisect_delta(boundary, p, &phi, r, bx, model.reflection.c0, depth)?
    };
    for (pi, fi) in p.iter_mut().zip(&phi) {
        *pi += delta * fi;
    }
    Ok(delta)
}

/// Smallest delta with h(delta) = |y(delta)| - b(x(delta)) equal to -depth,
/// by bisection; depth = 0 recovers the projection onto the boundary.
fn bisect_delta(
    boundary: &crate::geometry::BoundaryFunction,
    p: &[f64],
    phi: &[f64],
    r: f64,
    bx: f64,
    c0: f64,
    depth: f64,
) -> Result<f64, EngineError> {
    let h = |delta: f64| -> f64 {
        let x = p[0] + delta * phi[0];
        let ynorm: f64 = p[1..]
            .iter()
            .zip(&phi[1..])
            .map(|(pi, fi)| {
                let v = pi + delta * fi;
                v * v
            })
            .sum::<f64>()
            .sqrt();
        ynorm - boundary.value(x.max(1e-12))
    };
    let delta_max = 6.0 * (r - bx) / c0;
    // |y(delta)|^2 is a quadratic in delta; past its apex the ray crosses the
    // axis and |y| grows again, so restrict the bracket to the monotone branch.
    let dot: f64 = p[1..].iter().zip(&phi[1..]).map(|(pi, fi)| pi * fi).sum();
    let phi_y_sq: f64 = phi[1..].iter().map(|v| v * v).sum();
    let apex = if phi_y_sq > 0.0 && dot < 0.0 {
        -dot / phi_y_sq
    } else {
        delta_max
    };
    let hi_end = delta_max.min(apex);
    // Fall back to the boundary itself if the ray cannot reach the requested
    // depth (strongly curved or shrinking channels).
    let target = if hi_end > 0.0 && h(hi_end) <= -depth {
        -depth
    } else {
        0.0
    };
    if !(hi_end > 0.0) || h(hi_end) > target {
        return Err(EngineError::ReflectionFailed(format!(
            "no admissible pushback within delta_max = {hi_end} at x = {}, |y| = {r}, b = {bx}",
            p[0]
        )));
    }
    let (mut lo, mut hi) = (0.0f64, hi_end);
    for _ in 0..BISECT_ITERS {
        let mid = 0.5 * (lo + hi);
        if h(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// One reflected step of the ball process: `y` is the current state, `dy` the
/// (already dispersed) increment. The exit point is pushed back along the
/// limit field phi_inf past the sphere by the overshoot (mirror scheme; exact
/// in law for normal reflection in d = 1); the quadratic |p + delta*phi|^2 =
/// target^2 is solved exactly, falling back to the sphere itself when the
/// oblique ray cannot reach the mirrored radius.
pub fn step_ball(
    reflection: &crate::model::ReflectionField,
    y: &mut [f64],
    dy: &[f64],
    max_substeps: usize,
) -> Result<(f64, bool), EngineError> {
    for (yi, di) in y.iter_mut().zip(dy) {
        *yi += di;
    }
    let mut r2: f64 = y.iter().map(|v| v * v).sum();
    if r2 <= 1.0 {
        return Ok((0.0, false));
    }
    let mut local_time = 0.0;
    for _ in 0..max_substeps {
        let r = r2.sqrt();
        let inv_r = 1.0 / r;
        let u: Vec<f64> = y.iter().map(|&v| v * inv_r).collect();
        let phi = reflection.phi_inf(&u);
        let a: f64 = phi.iter().map(|v| v * v).sum();
        let b: f64 = 2.0 * phi.iter().zip(y.iter()).map(|(f, p)| f * p).sum::<f64>();
        let target = (2.0 - r).clamp(0.55, 1.0);
        let c = r2 - target * target;
        let mut disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            // Oblique ray cannot reach the mirrored radius; settle for the
            // sphere itself.
            disc = b * b - 4.0 * a * (r2 - 1.0);
        }
        if disc < 0.0 {
            return Err(EngineError::ReflectionFailed(
                "pushback direction misses the ball".into(),
            ));
        }
        let delta = (-b - disc.sqrt()) / (2.0 * a);
        if !(delta >= 0.0) {
            return Err(EngineError::ReflectionFailed(
                "negative pushback magnitude on the ball".into(),
            ));
        }
        for (yi, fi) in y.iter_mut().zip(&phi) {
            *yi += delta * fi;
        }
        local_time += delta;
        r2 = y.iter().map(|v| v * v).sum();
        if r2 <= 1.0 + 1e-12 {
            return Ok((local_time, true));
        }
    }
    Err(EngineError::ReflectionFailed(
        "ball pushback did not converge".into(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ReflectionField;
    use approx::assert_relative_eq;

    fn cylinder_model() -> CoefficientModel {
        CoefficientModel::canonical(0.0, 1)
    }

    #[test]
    fn interior_proposal_passes_through() {
        let m = cylinder_model();
        // z = (7, 0.2), dw moves to (7, 0.3): interior.
        let out = step_reflected(&m, &[7.0, 0.2], &[0.0, 0.1], 8).unwrap();
        assert_relative_eq!(out.z_next[0], 7.0);
        assert_relative_eq!(out.z_next[1], 0.3);
        assert_eq!(out.local_time_increment, 0.0);
        assert!(!out.reflected);
    }

    #[test]
    fn cylinder_pushback_is_linear() {
        let m = cylinder_model();
        // Proposal (10.3, 1.1): phi(10.3, 1) = (1, -1); the overshoot 0.1 is
        // mirrored to depth 0.1 inside, so delta = 0.2.
        let out = step_reflected(&m, &[10.3, 0.9], &[0.0, 0.2], 8).unwrap();
        assert_relative_eq!(out.z_next[0], 10.5, max_relative = 1e-12);
        assert_relative_eq!(out.z_next[1], 0.9, max_relative = 1e-12);
        assert_relative_eq!(out.local_time_increment, 0.2, max_relative = 1e-12);
        assert!(out.reflected);
        // Lower wall: proposal (5.0, -1.2) -> (5.4, -0.8), dL = 0.4.
        let out = step_reflected(&m, &[5.0, -0.9], &[0.0, -0.3], 8).unwrap();
        assert_relative_eq!(out.z_next[0], 5.4, max_relative = 1e-12);
        assert_relative_eq!(out.z_next[1], -0.8, max_relative = 1e-12);
        assert_relative_eq!(out.local_time_increment, 0.4, max_relative = 1e-12);
    }

    #[test]
    fn curved_boundary_bisection_lands_inside() {
        let m = CoefficientModel::canonical(0.5, 1);
        // b(4) = 17^{1/4} ~ 2.03; proposal (4.0, 2.3) is outside.
        let excess = 2.3 - m.domain.boundary.value(4.0);
        let out = step_reflected(&m, &[4.0, 1.9], &[0.0, 0.4], 8).unwrap();
        assert!(out.reflected);
        assert!(m.domain.contains(&out.z_next));
        assert!(out.local_time_increment > 0.0);
        // The landing point mirrors the overshoot depth into the interior.
        let b = m.domain.boundary.value(out.z_next[0]);
        assert_relative_eq!(b - out.z_next[1].abs(), excess, max_relative = 1e-9);
    }

    #[test]
    fn origin_guard_triggers() {
        let m = cylinder_model();
        let err = step_reflected(&m, &[0.6, 0.0], &[-0.3, 0.0], 8).unwrap_err();
        assert!(matches!(err, EngineError::OriginGuardHit(_)));
    }

    #[test]
    fn ball_step_exact_normal_pushback() {
        let refl = ReflectionField::normal(1.0, 1.0);
        let mut y = vec![0.9];
        let (dl, reflected) = step_ball(&refl, &mut y, &[0.2], 8).unwrap();
        assert!(reflected);
        // Mirror: 1.1 reflects to 0.9, with dL twice the overshoot.
        assert_relative_eq!(y[0], 0.9, max_relative = 1e-12);
        assert_relative_eq!(dl, 0.2, max_relative = 1e-12);
        // Interior move.
        let mut y = vec![0.1, -0.2];
        let (dl, reflected) = step_ball(&refl, &mut y, &[0.05, 0.05], 8).unwrap();
        assert_eq!(dl, 0.0);
        assert!(!reflected);
    }

    #[test]
    fn ball_step_oblique_stays_in_closure() {
        let refl = ReflectionField {
            kind: ReflectionKind::ObliqueTangential { swirl: 0.5 },
            s0: 1.0,
            c0: 1.0,
            perturbation: None,
        };
        let mut y = vec![0.8, 0.5];
        let (dl, reflected) = step_ball(&refl, &mut y, &[0.3, 0.2], 8).unwrap();
        assert!(reflected);
        assert!(dl > 0.0);
        let r: f64 = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(r <= 1.0 + 1e-12);
    }
}
