//! Boundary profiles, domain membership, normals, and the affine window maps
//! between the parabolic domain, the moving window, and the limit cylinder.
//!
//! A state `z` is stored as a flat slice `[x, y_1, ..., y_d]`; index 0 is the
//! unbounded coordinate throughout.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("boundary profile requires x > 0, got {0}")]
    NonPositiveX(f64),
    #[error("radial direction degenerate: |y| = 0")]
    DegenerateRadialDirection,
    #[error("point is not on the boundary (|y| = {radius}, b(x) = {boundary})")]
    NotOnBoundary { radius: f64, boundary: f64 },
    #[error("invalid boundary parameter: {0}")]
    InvalidParameter(String),
}

/// Shape family of the boundary profile b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryKind {
    /// b(x) = a_inf * x^beta
    PurePower,
    /// b(x) = a_inf * (x+1)^beta; strictly positive at the origin, so the
    /// default family for negative exponents.
    ShiftedPower,
    /// b(x) = a_inf (constant half-width; beta is fixed to 0).
    Cylinder,
    /// b(x) = a_inf * x^beta + amplitude * x^exponent; the perturbation must
    /// decay fast enough for the tail validator to accept it.
    PowerPlusDecay { amplitude: f64, exponent: f64 },
}

/// The boundary half-width profile b with its asymptotic data (a_inf, beta).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryFunction {
    #[serde(flatten)]
    pub kind: BoundaryKind,
    pub beta: f64,
    pub a_inf: f64,
}

/// Evaluate t^p together with its first two derivatives, special-casing the
/// exponents that dominate the hot loops.
#[inline(always)]
fn pow3(t: f64, p: f64) -> (f64, f64, f64) {
    let v = if p == 0.5 {
        t.sqrt()
    } else if p == -0.5 {
        1.0 / t.sqrt()
    } else if p == 0.0 {
        1.0
    } else if p == 1.0 {
        t
    } else {
        t.powf(p)
    };
    let d1 = p * v / t;
    let d2 = p * (p - 1.0) * v / (t * t);
    (v, d1, d2)
}

impl BoundaryFunction {
    pub fn new(kind: BoundaryKind, beta: f64, a_inf: f64) -> Result<Self, GeometryError> {
        if !(a_inf > 0.0) {
            return Err(GeometryError::InvalidParameter(format!(
                "a_inf must be positive, got {a_inf}"
            )));
        }
        if !(-1.0 < beta && beta < 1.0) {
            return Err(GeometryError::InvalidParameter(format!(
                "beta must lie in (-1,1), got {beta}"
            )));
        }
        if matches!(kind, BoundaryKind::Cylinder) && beta != 0.0 {
            return Err(GeometryError::InvalidParameter(
                "cylinder profile requires beta = 0".into(),
            ));
        }
        Ok(Self { kind, beta, a_inf })
    }

    pub fn cylinder(a_inf: f64) -> Self {
        Self::new(BoundaryKind::Cylinder, 0.0, a_inf).unwrap()
    }

    pub fn pure_power(a_inf: f64, beta: f64) -> Result<Self, GeometryError> {
        Self::new(BoundaryKind::PurePower, beta, a_inf)
    }

    pub fn shifted_power(a_inf: f64, beta: f64) -> Result<Self, GeometryError> {
        Self::new(BoundaryKind::ShiftedPower, beta, a_inf)
    }

    /// b(x), b'(x), b''(x) by the power rule; no finite differences.
    pub fn eval(&self, x: f64) -> Result<(f64, f64, f64), GeometryError> {
        if x <= 0.0 {
            return Err(GeometryError::NonPositiveX(x));
        }
        Ok(match self.kind {
            BoundaryKind::Cylinder => (self.a_inf, 0.0, 0.0),
            BoundaryKind::PurePower => {
                let (v, d1, d2) = pow3(x, self.beta);
                (self.a_inf * v, self.a_inf * d1, self.a_inf * d2)
            }
            BoundaryKind::ShiftedPower => {
                let (v, d1, d2) = pow3(x + 1.0, self.beta);
                (self.a_inf * v, self.a_inf * d1, self.a_inf * d2)
            }
            BoundaryKind::PowerPlusDecay {
                amplitude,
                exponent,
            } => {
                let (v, d1, d2) = pow3(x, self.beta);
                let (w, e1, e2) = pow3(x, exponent);
                (
                    self.a_inf * v + amplitude * w,
                    self.a_inf * d1 + amplitude * e1,
                    self.a_inf * d2 + amplitude * e2,
                )
            }
        })
    }

    /// b(x) only; the hot path used by the containment test each step.
    #[inline(always)]
    pub fn value(&self, x: f64) -> f64 {
        match self.kind {
            BoundaryKind::Cylinder => self.a_inf,
            BoundaryKind::PurePower => self.a_inf * pow1(x, self.beta),
            BoundaryKind::ShiftedPower => self.a_inf * pow1(x + 1.0, self.beta),
            BoundaryKind::PowerPlusDecay {
                amplitude,
                exponent,
            } => self.a_inf * pow1(x, self.beta) + amplitude * pow1(x, exponent),
        }
    }

    /// Deviation from the leading power: f(x) = b(x) - a_inf * x^beta.
    pub fn perturbation(&self, x: f64) -> f64 {
        self.value(x) - self.a_inf * pow1(x, self.beta)
    }

    /// Tail validator for the decay-rate condition on the perturbation f:
    /// x^{(1-3*beta)/2} * f(x) must tend to 0 monotonically on the tail of a
    /// log grid. Returns the normalized sequence together with the verdict.
    pub fn validate_decay(&self, x_lo: f64, x_hi: f64, n: usize) -> DecayCheck {
        let xs = log_grid(x_lo, x_hi, n);
        let series: Vec<f64> = xs
            .iter()
            .map(|&x| pow1(x, (1.0 - 3.0 * self.beta) / 2.0) * self.perturbation(x).abs())
            .collect();
        // Tail = upper half of the grid; demand non-increase and decrease overall.
        let tail = &series[n / 2..];
        let monotone = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        let shrinks = tail[tail.len() - 1] < 0.5 * tail[0] || tail[0] == 0.0;
        DecayCheck {
            xs,
            normalized: series,
            pass: monotone && shrinks,
        }
    }
}

#[inline(always)]
fn pow1(t: f64, p: f64) -> f64 {
    if p == 0.5 {
        t.sqrt()
    } else if p == -0.5 {
        1.0 / t.sqrt()
    } else if p == 0.0 {
        1.0
    } else {
        t.powf(p)
    }
}

/// Outcome of the perturbation decay validator.
#[derive(Debug, Clone)]
pub struct DecayCheck {
    pub xs: Vec<f64>,
    pub normalized: Vec<f64>,
    pub pass: bool,
}

/// Logarithmically spaced grid on [lo, hi].
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2 && lo > 0.0 && hi > lo);
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (llo + (lhi - llo) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// The domain {(x,y): x >= x_guard, |y| <= b(x)} with a guard that keeps
/// simulations away from the cusp at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolicDomain {
    pub boundary: BoundaryFunction,
    pub dim_y: usize,
    pub x_guard: f64,
}

pub const DEFAULT_X_GUARD: f64 = 0.5;

impl ParabolicDomain {
    pub fn new(boundary: BoundaryFunction, dim_y: usize, x_guard: f64) -> Self {
        assert!(dim_y >= 1, "dim_y must be >= 1");
        assert!(x_guard > 0.0, "x_guard must be positive");
        Self {
            boundary,
            dim_y,
            x_guard,
        }
    }

    #[inline(always)]
    pub fn dim(&self) -> usize {
        1 + self.dim_y
    }

    /// Relative membership tolerance at horizontal position x.
    #[inline(always)]
    pub fn tol_boundary(&self, x: f64) -> f64 {
        1e-12 * self.boundary.value(x).max(1.0)
    }

    #[inline(always)]
    pub fn y_norm(z: &[f64]) -> f64 {
        z[1..].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        debug_assert_eq!(z.len(), self.dim());
        let x = z[0];
        x >= self.x_guard && Self::y_norm(z) <= self.boundary.value(x) + self.tol_boundary(x)
    }

    pub fn on_boundary(&self, z: &[f64]) -> bool {
        let x = z[0];
        x >= self.x_guard
            && (Self::y_norm(z) - self.boundary.value(x)).abs() <= 1e3 * self.tol_boundary(x)
    }

    /// Same-x radial projection (x, b(x) * y/|y|) onto the boundary surface.
    pub fn radial_boundary_point(&self, z: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let r = Self::y_norm(z);
        if r == 0.0 {
            return Err(GeometryError::DegenerateRadialDirection);
        }
        let b = self.boundary.value(z[0]);
        let mut out = z.to_vec();
        for v in &mut out[1..] {
            *v *= b / r;
        }
        Ok(out)
    }

    /// Unit inward normal n(z) = (b'(x), -y/|y|) / sqrt(1 + b'(x)^2).
    pub fn inward_normal(&self, z: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let r = Self::y_norm(z);
        let (b, b1, _) = self.boundary.eval(z[0])?;
        if (r - b).abs() > 1e3 * self.tol_boundary(z[0]) {
            return Err(GeometryError::NotOnBoundary {
                radius: r,
                boundary: b,
            });
        }
        if r == 0.0 {
            return Err(GeometryError::DegenerateRadialDirection);
        }
        let norm = (1.0 + b1 * b1).sqrt();
        let mut n = vec![b1 / norm];
        n.extend(z[1..].iter().map(|&v| -v / (r * norm)));
        Ok(n)
    }
}

/// The affine map (x,y) -> ((x - x0)/b(x0), y/b(x0)) centering the moving
/// window at x0; window time runs a factor b(x0)^2 faster.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowMap {
    pub x0: f64,
    pub scale: f64,
    pub time_scale: f64,
}

impl WindowMap {
    pub fn new(x0: f64, b: &BoundaryFunction) -> Self {
        let scale = b.value(x0);
        Self {
            x0,
            scale,
            time_scale: scale * scale,
        }
    }

    pub fn forward(&self, z: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(z.len());
        out.push((z[0] - self.x0) / self.scale);
        out.extend(z[1..].iter().map(|&v| v / self.scale));
        out
    }

    pub fn inverse(&self, w: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(w.len());
        out.push(w[0] * self.scale + self.x0);
        out.extend(w[1..].iter().map(|&v| v * self.scale));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pure_power_derivatives() {
        let b = BoundaryFunction::pure_power(1.0, 0.5).unwrap();
        let (v, d1, d2) = b.eval(4.0).unwrap();
        assert_relative_eq!(v, 2.0);
        assert_relative_eq!(d1, 0.25);
        assert_relative_eq!(d2, -1.0 / 32.0);
    }

    #[test]
    fn cylinder_derivatives() {
        let b = BoundaryFunction::cylinder(1.0);
        assert_eq!(b.eval(17.3).unwrap(), (1.0, 0.0, 0.0));
    }

    #[test]
    fn shifted_power_derivatives() {
        let b = BoundaryFunction::shifted_power(1.0, -0.5).unwrap();
        let (v, d1, d2) = b.eval(3.0).unwrap();
        assert_relative_eq!(v, 0.5);
        assert_relative_eq!(d1, -1.0 / 16.0);
        assert_relative_eq!(d2, 3.0 / 128.0);
    }

    #[test]
    fn eval_rejects_nonpositive_x() {
        let b = BoundaryFunction::pure_power(1.0, 0.5).unwrap();
        assert!(matches!(b.eval(0.0), Err(GeometryError::NonPositiveX(_))));
        assert!(matches!(b.eval(-2.0), Err(GeometryError::NonPositiveX(_))));
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let profiles = [
            BoundaryFunction::pure_power(1.3, 0.5).unwrap(),
            BoundaryFunction::pure_power(2.0, 0.25).unwrap(),
            BoundaryFunction::shifted_power(1.0, -0.5).unwrap(),
            BoundaryFunction::shifted_power(0.7, -0.8).unwrap(),
            BoundaryFunction::cylinder(2.0),
            BoundaryFunction::new(
                BoundaryKind::PowerPlusDecay {
                    amplitude: 0.3,
                    exponent: -1.0,
                },
                0.5,
                1.0,
            )
            .unwrap(),
        ];
        for b in &profiles {
            for &x in &[0.7, 1.0, 4.0, 55.0, 1.0e4] {
                let h = 1e-5 * x;
                let (v, d1, d2) = b.eval(x).unwrap();
                let (vp, _, _) = b.eval(x + h).unwrap();
                let (vm, _, _) = b.eval(x - h).unwrap();
                let fd1 = (vp - vm) / (2.0 * h);
                let fd2 = (vp - 2.0 * v + vm) / (h * h);
                if d1.abs() > 1e-14 {
                    assert_relative_eq!(d1, fd1, max_relative = 1e-6);
                }
                if d2.abs() > 1e-12 {
                    assert_relative_eq!(d2, fd2, max_relative = 1e-3);
                }
            }
        }
    }

    #[test]
    fn containment() {
        let dom = ParabolicDomain::new(
            BoundaryFunction::pure_power(1.0, 0.5).unwrap(),
            1,
            DEFAULT_X_GUARD,
        );
        assert!(dom.contains(&[1.0, 0.5]));
        assert!(!dom.contains(&[1.0, 1.5]));
        let cyl = ParabolicDomain::new(BoundaryFunction::cylinder(1.0), 1, DEFAULT_X_GUARD);
        assert!(cyl.contains(&[10.0, 1.0]));
        assert!(!cyl.contains(&[0.4, 0.0]));
    }

    #[test]
    fn radial_projection() {
        let cyl = ParabolicDomain::new(BoundaryFunction::cylinder(1.0), 1, DEFAULT_X_GUARD);
        assert_eq!(cyl.radial_boundary_point(&[5.0, 1.2]).unwrap(), vec![5.0, 1.0]);
        assert_eq!(
            cyl.radial_boundary_point(&[5.0, -1.3]).unwrap(),
            vec![5.0, -1.0]
        );
        let dom = ParabolicDomain::new(
            BoundaryFunction::pure_power(1.0, 0.5).unwrap(),
            2,
            DEFAULT_X_GUARD,
        );
        let p = dom.radial_boundary_point(&[4.0, 0.0, 3.0]).unwrap();
        assert_relative_eq!(p[0], 4.0);
        assert_relative_eq!(p[1], 0.0);
        assert_relative_eq!(p[2], 2.0);
        assert!(matches!(
            dom.radial_boundary_point(&[4.0, 0.0, 0.0]),
            Err(GeometryError::DegenerateRadialDirection)
        ));
    }

    #[test]
    fn inward_normal_values() {
        let cyl = ParabolicDomain::new(BoundaryFunction::cylinder(1.0), 1, DEFAULT_X_GUARD);
        let n = cyl.inward_normal(&[5.0, 1.0]).unwrap();
        assert_relative_eq!(n[0], 0.0);
        assert_relative_eq!(n[1], -1.0);

        let dom = ParabolicDomain::new(
            BoundaryFunction::pure_power(1.0, 0.5).unwrap(),
            1,
            DEFAULT_X_GUARD,
        );
        let n = dom.inward_normal(&[4.0, 2.0]).unwrap();
        let s = 1.0625f64.sqrt();
        assert_relative_eq!(n[0], 0.25 / s);
        assert_relative_eq!(n[1], -1.0 / s);
        let m = dom.inward_normal(&[4.0, -2.0]).unwrap();
        assert_relative_eq!(m[0], 0.25 / s);
        assert_relative_eq!(m[1], 1.0 / s);
        assert!(dom.inward_normal(&[4.0, 0.3]).is_err());
    }

    #[test]
    fn inward_normal_unit_and_probe() {
        let profiles = [
            BoundaryFunction::pure_power(1.0, 0.5).unwrap(),
            BoundaryFunction::shifted_power(1.0, -0.5).unwrap(),
            BoundaryFunction::cylinder(2.0),
        ];
        for b in profiles {
            let dom = ParabolicDomain::new(b, 2, DEFAULT_X_GUARD);
            for &x in &[1.0, 3.0, 40.0] {
                let bx = dom.boundary.value(x);
                let (c, s) = (0.6, 0.8);
                let z = vec![x, bx * c, bx * s];
                let n = dom.inward_normal(&z).unwrap();
                let norm: f64 = n.iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-12);
                let eps = 1e-6 * bx;
                let probe: Vec<f64> = z.iter().zip(&n).map(|(zi, ni)| zi + eps * ni).collect();
                assert!(dom.contains(&probe));
            }
        }
    }

    #[test]
    fn decay_validator_accepts_and_rejects() {
        // Shifted power at beta in (-1,1): deviation O(x^{beta-1}) always passes.
        for beta in [-0.5, 0.0, 0.5] {
            let b = BoundaryFunction::shifted_power(1.0, beta).unwrap();
            assert!(b.validate_decay(1e2, 1e6, 25).pass, "beta={beta}");
        }
        // Admissible explicit decay.
        let ok = BoundaryFunction::new(
            BoundaryKind::PowerPlusDecay {
                amplitude: 1.0,
                exponent: -0.6,
            },
            0.5,
            1.0,
        )
        .unwrap();
        assert!(ok.validate_decay(1e2, 1e6, 25).pass);
        // Perturbation x^{beta(1-eps)} decays too slowly relative to x^{(3b-1)/2}.
        let bad = BoundaryFunction::new(
            BoundaryKind::PowerPlusDecay {
                amplitude: 1.0,
                exponent: 0.5 * (1.0 - 0.05),
            },
            0.5,
            1.0,
        )
        .unwrap();
        assert!(!bad.validate_decay(1e2, 1e6, 25).pass);
    }

    #[test]
    fn window_map_round_trip() {
        let b = BoundaryFunction::cylinder(2.0);
        let w = WindowMap::new(100.0, &b);
        assert_eq!(w.forward(&[104.0, 1.0]), vec![2.0, 0.5]);
        let bp = BoundaryFunction::pure_power(1.0, 0.5).unwrap();
        let wp = WindowMap::new(100.0, &bp);
        assert_relative_eq!(wp.time_scale, 100.0);
        for z in [[37.0, -4.2], [100.0, 0.0], [250.0, 9.5]] {
            let back = wp.inverse(&wp.forward(&z));
            assert_relative_eq!(back[0], z[0], max_relative = 1e-12);
            assert_relative_eq!(back[1], z[1], max_relative = 1e-12, epsilon = 1e-12);
        }
    }
}
