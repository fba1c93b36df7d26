//! Diffusion and reflection coefficient fields, their asymptotic data,
//! assumption validators, and the closed-form limit constants.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{log_grid, BoundaryFunction, GeometryError, ParabolicDomain};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("matrix is not symmetric positive definite (min eigenvalue {0})")]
    NotPositiveDefinite(f64),
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("beta = {0} outside the CLT range (-1/3, 1)")]
    BetaOutOfRange(f64),
    #[error("invalid model parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Symmetric PSD square root by symmetric eigendecomposition; eigenvalues are
/// clamped at zero, and a minimum below `floor` is reported to the caller.
pub fn spd_sqrt(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, f64), ModelError> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(ModelError::NotSymmetric);
    }
    for i in 0..n {
        for j in 0..i {
            if (m[(i, j)] - m[(j, i)]).abs() > 1e-10 * (1.0 + m[(i, i)].abs() + m[(j, j)].abs()) {
                return Err(ModelError::NotSymmetric);
            }
        }
    }
    let sym = nalgebra::SymmetricEigen::new(m.clone());
    let min_eig = sym.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut d = DMatrix::zeros(n, n);
    for i in 0..n {
        d[(i, i)] = sym.eigenvalues[i].max(0.0).sqrt();
    }
    let root = &sym.eigenvectors * d * sym.eigenvectors.transpose();
    // Resymmetrize against round-off.
    let root = (&root + root.transpose()) * 0.5;
    Ok((root, min_eig))
}

pub const EIGENVALUE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DiffusionKind {
    Constant,
    /// Sigma(x,y) = (1 + amplitude * x^{-decay_exponent}) * Sigma_inf.
    AsymptoticallyConstant { amplitude: f64, decay_exponent: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionField {
    pub kind: DiffusionKind,
    pub sigma_inf: DMatrix<f64>,
    pub sqrt_sigma_inf: DMatrix<f64>,
    pub sigma_bar_sq: f64,
    min_eigenvalue: f64,
    is_identity: bool,
}

impl DiffusionField {
    pub fn new(kind: DiffusionKind, sigma_inf: DMatrix<f64>) -> Result<Self, ModelError> {
        let (root, min_eig) = spd_sqrt(&sigma_inf)?;
        if min_eig < -1e-10 {
            return Err(ModelError::NotPositiveDefinite(min_eig));
        }
        let n = sigma_inf.nrows();
        let sigma_bar_sq = (1..n).map(|i| sigma_inf[(i, i)]).sum();
        let is_identity = sigma_inf == DMatrix::identity(n, n);
        Ok(Self {
            kind,
            sigma_inf,
            sqrt_sigma_inf: root,
            sigma_bar_sq,
            min_eigenvalue: min_eig,
            is_identity,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::new(DiffusionKind::Constant, DMatrix::identity(dim, dim)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.sigma_inf.nrows()
    }

    /// True when Sigma(z) is the identity everywhere; the integrators skip the
    /// matrix product in that case.
    #[inline(always)]
    pub fn is_identity(&self) -> bool {
        self.is_identity && matches!(self.kind, DiffusionKind::Constant)
    }

    #[inline]
    fn envelope(&self, x: f64) -> f64 {
        match self.kind {
            DiffusionKind::Constant => 1.0,
            DiffusionKind::AsymptoticallyConstant {
                amplitude,
                decay_exponent,
            } => 1.0 + amplitude * x.powf(-decay_exponent),
        }
    }

    /// Sigma(z) and its symmetric square root.
    pub fn sigma_eval(&self, z: &[f64]) -> Result<(DMatrix<f64>, DMatrix<f64>), ModelError> {
        let env = self.envelope(z[0]);
        if self.min_eigenvalue * env <= EIGENVALUE_FLOOR {
            return Err(ModelError::NotPositiveDefinite(self.min_eigenvalue * env));
        }
        Ok((&self.sigma_inf * env, &self.sqrt_sigma_inf * env.sqrt()))
    }

    /// Applies the dispersion sigma(z) = Sigma(z)^{1/2} to a noise vector.
    #[inline]
    pub fn apply_dispersion(&self, z_x: f64, w: &[f64], out: &mut [f64]) {
        if self.is_identity() {
            out.copy_from_slice(w);
            return;
        }
        let s = self.envelope(z_x).sqrt();
        let n = self.dim();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += self.sqrt_sigma_inf[(i, j)] * w[j];
            }
            out[i] = s * acc;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReflectionKind {
    /// phi(x, b(x)u) = (s0, -c0 u), possibly with a decaying envelope.
    #[serde(rename = "normal")]
    AsymptoticallyNormal,
    /// Adds a tangential swirl in the first two y-coordinates (d >= 2).
    ObliqueTangential { swirl: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReflectionField {
    #[serde(flatten)]
    pub kind: ReflectionKind,
    pub s0: f64,
    pub c0: f64,
    /// Optional decaying multiplicative perturbation (amplitude, exponent):
    /// phi(z) = (1 + amplitude * x^{-exponent}) * (s0, phi_inf(u)).
    #[serde(default)]
    pub perturbation: Option<(f64, f64)>,
}

impl ReflectionField {
    pub fn normal(s0: f64, c0: f64) -> Self {
        Self {
            kind: ReflectionKind::AsymptoticallyNormal,
            s0,
            c0,
            perturbation: None,
        }
    }

    /// Limit reflection field on the unit sphere; `u` must be a unit vector.
    pub fn phi_inf(&self, u: &[f64]) -> Vec<f64> {
        let mut v: Vec<f64> = u.iter().map(|&ui| -self.c0 * ui).collect();
        if let ReflectionKind::ObliqueTangential { swirl } = self.kind {
            if u.len() >= 2 {
                v[0] += -swirl * u[1];
                v[1] += swirl * u[0];
            }
        }
        v
    }

    /// Reflection vector at the boundary point z = (x, b(x)u).
    pub fn phi_eval(&self, domain: &ParabolicDomain, z: &[f64]) -> Result<Vec<f64>, GeometryError> {
        let r = ParabolicDomain::y_norm(z);
        let b = domain.boundary.value(z[0]);
        if (r - b).abs() > 1e3 * domain.tol_boundary(z[0]) {
            return Err(GeometryError::NotOnBoundary {
                radius: r,
                boundary: b,
            });
        }
        let u: Vec<f64> = z[1..].iter().map(|&v| v / r).collect();
        Ok(self.phi_at_direction(z[0], &u))
    }

    /// Reflection vector given the horizontal position and the unit radial
    /// direction of the boundary point; avoids re-deriving u in hot loops.
    #[inline]
    pub fn phi_at_direction(&self, x: f64, u: &[f64]) -> Vec<f64> {
        let mut phi = Vec::with_capacity(1 + u.len());
        phi.push(self.s0);
        phi.extend(self.phi_inf(u));
        if let Some((amp, exponent)) = self.perturbation {
            let env = 1.0 + amp * x.powf(-exponent);
            for v in &mut phi {
                *v *= env;
            }
        }
        phi
    }
}

/// The full coefficient model: domain, diffusion field, reflection field.
#[derive(Debug, Clone)]
pub struct CoefficientModel {
    pub domain: ParabolicDomain,
    pub diffusion: DiffusionField,
    pub reflection: ReflectionField,
}

impl CoefficientModel {
    pub fn new(
        domain: ParabolicDomain,
        diffusion: DiffusionField,
        reflection: ReflectionField,
    ) -> Result<Self, ModelError> {
        if diffusion.dim() != domain.dim() {
            return Err(ModelError::DimensionMismatch {
                expected: domain.dim(),
                got: diffusion.dim(),
            });
        }
        if reflection.s0 < 0.0 || reflection.c0 < 0.0 {
            return Err(ModelError::InvalidParameter(
                "s0 and c0 must be nonnegative".into(),
            ));
        }
        Ok(Self {
            domain,
            diffusion,
            reflection,
        })
    }

    /// Identity diffusion, normal reflection with s0 = c0 = 1, unit prefactor
    /// boundary of the requested exponent.
    pub fn canonical(beta: f64, dim_y: usize) -> Self {
        let boundary = if beta == 0.0 {
            BoundaryFunction::cylinder(1.0)
        } else if beta > 0.0 {
            BoundaryFunction::pure_power(1.0, beta).unwrap()
        } else {
            BoundaryFunction::shifted_power(1.0, beta).unwrap()
        };
        let domain = ParabolicDomain::new(boundary, dim_y, crate::geometry::DEFAULT_X_GUARD);
        let diffusion = DiffusionField::identity(1 + dim_y);
        Self::new(domain, diffusion, ReflectionField::normal(1.0, 1.0)).unwrap()
    }

    pub fn beta(&self) -> f64 {
        self.domain.boundary.beta
    }

    pub fn a_inf(&self) -> f64 {
        self.domain.boundary.a_inf
    }

    /// Strong-law constant c1 = ((1+beta) s0 sigma_bar^2 / (2 a_inf c0))^{1/(1+beta)}.
    pub fn c1_constant(&self) -> f64 {
        let beta = self.beta();
        let base = (1.0 + beta) * self.reflection.s0 * self.diffusion.sigma_bar_sq
            / (2.0 * self.a_inf() * self.reflection.c0);
        base.powf(1.0 / (1.0 + beta))
    }

    /// The bracket shared by the CLT variance and the quadratic-variation
    /// constant: Sigma_00 + 2(s0/c0) sum_j Sigma_0j m1_j + (s0/c0)^2 sum_jk Sigma_jk m2_jk.
    fn moment_bracket(&self, first: &[f64], second: &DMatrix<f64>) -> Result<f64, ModelError> {
        let d = self.domain.dim_y;
        if first.len() != d || second.nrows() != d || second.ncols() != d {
            return Err(ModelError::DimensionMismatch {
                expected: d,
                got: first.len(),
            });
        }
        let s = &self.diffusion.sigma_inf;
        let ratio = self.reflection.s0 / self.reflection.c0;
        let mut acc = s[(0, 0)];
        for j in 0..d {
            acc += 2.0 * ratio * s[(0, j + 1)] * first[j];
        }
        for j in 0..d {
            for k in 0..d {
                acc += ratio * ratio * s[(j + 1, k + 1)] * second[(j, k)];
            }
        }
        Ok(acc)
    }

    /// CLT variance Upsilon; requires beta in (-1/3, 1).
    pub fn upsilon_constant(
        &self,
        first: &[f64],
        second: &DMatrix<f64>,
    ) -> Result<f64, ModelError> {
        let beta = self.beta();
        if beta <= -1.0 / 3.0 {
            return Err(ModelError::BetaOutOfRange(beta));
        }
        Ok((1.0 + beta) / (1.0 + 3.0 * beta) * self.moment_bracket(first, second)?)
    }

    /// Limit constant of the normalized quadratic variation; satisfies
    /// s_squared = a_inf^2 * c1^{2 beta} * upsilon.
    pub fn s_squared_constant(
        &self,
        first: &[f64],
        second: &DMatrix<f64>,
    ) -> Result<f64, ModelError> {
        let a = self.a_inf();
        let c1 = self.c1_constant();
        Ok(a * a * c1.powf(2.0 * self.beta()) * self.upsilon_constant(first, second)?)
    }

    /// The quadratic polynomial Q governing the quadratic-variation density.
    pub fn q_polynomial(&self, y_scaled: &[f64]) -> f64 {
        let d = self.domain.dim_y;
        debug_assert_eq!(y_scaled.len(), d);
        let s = &self.diffusion.sigma_inf;
        let a = self.a_inf();
        let ratio = self.reflection.s0 / self.reflection.c0;
        let mut acc = s[(0, 0)];
        for i in 0..d {
            acc += 2.0 * ratio / a * s[(0, i + 1)] * y_scaled[i];
        }
        for i in 0..d {
            for j in 0..d {
                acc += ratio * ratio / (a * a) * s[(i + 1, j + 1)] * y_scaled[i] * y_scaled[j];
            }
        }
        acc
    }

    pub fn validate_assumptions(&self, grid: &GridSpec) -> ValidationReport {
        validate(self, grid)
    }
}

/// Exact moments of the uniform law on the d-dimensional unit ball:
/// first moments vanish, E[y_j y_k] = delta_jk / (d+2).
pub fn uniform_ball_moments(d: usize) -> (Vec<f64>, DMatrix<f64>) {
    let first = vec![0.0; d];
    let second = DMatrix::identity(d, d) / (d as f64 + 2.0);
    (first, second)
}

/// Grid used by the assumption validators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_x: usize,
    pub n_sphere: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            x_lo: 1e2,
            x_hi: 1e6,
            n_x: 17,
            n_sphere: 64,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AssumptionCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidationReport {
    pub checks: Vec<AssumptionCheck>,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, passed: bool, detail: String) {
        self.checks.push(AssumptionCheck {
            name: name.into(),
            passed,
            detail,
        });
    }
}

/// Low-discrepancy directions on the unit sphere in R^d (deterministic).
pub(crate) fn sphere_grid(d: usize, n: usize) -> Vec<Vec<f64>> {
    if d == 1 {
        return vec![vec![1.0], vec![-1.0]];
    }
    let mut out = Vec::with_capacity(n);
    let mut state = 0x2545f4914f6cdd1du64;
    for _ in 0..n {
        let mut v = vec![0.0; d];
        let mut norm = 0.0;
        while norm < 1e-6 {
            for vi in v.iter_mut() {
                state = state
                    .wrapping_mul(6364136223846793005)
                    .wrapping_add(1442695040888963407);
                let u = ((state >> 11) as f64) / (1u64 << 53) as f64;
                // Crude but adequate normal-ish draw for grid directions.
                *vi = u - 0.5;
            }
            norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        }
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        out.push(v);
    }
    out
}

/// Decreasing-to-zero verdict for a tail sequence.
pub(crate) fn tends_to_zero(series: &[f64]) -> bool {
    let n = series.len();
    if n < 4 {
        return false;
    }
    let tail = &series[n / 2..];
    let head = tail[0].abs();
    let last = tail[tail.len() - 1].abs();
    head < 1e-12 || (last <= head * (1.0 + 1e-9) && last < 0.5 * head.max(1e-300))
        || tail.iter().all(|v| v.abs() < 1e-10)
}

fn validate(model: &CoefficientModel, grid: &GridSpec) -> ValidationReport {
    let mut report = ValidationReport { checks: vec![] };
    let beta = model.beta();
    let d = model.domain.dim_y;
    let xs = log_grid(grid.x_lo, grid.x_hi, grid.n_x);
    let dirs = sphere_grid(d, grid.n_sphere);

    // (D2+): perturbation decay rates of the boundary profile.
    let decay = model.domain.boundary.validate_decay(grid.x_lo, grid.x_hi, grid.n_x);
    report.push(
        "D2+ boundary decay",
        decay.pass,
        format!(
            "x^((1-3b)/2)|f(x)| tail: {:.3e} -> {:.3e}",
            decay.normalized[grid.n_x / 2],
            decay.normalized[grid.n_x - 1]
        ),
    );

    // (C+): ellipticity of Sigma_inf.
    let (_, min_eig) = spd_sqrt(&model.diffusion.sigma_inf).unwrap_or((DMatrix::zeros(1, 1), -1.0));
    report.push(
        "C+ ellipticity",
        min_eig > EIGENVALUE_FLOOR,
        format!("min eigenvalue of Sigma_inf = {min_eig:.3e}"),
    );

    // (C+): decay of x^{(1-b)/2} (sum_i Sigma_ii - sigma_bar^2).
    let c_decay: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let z = vec![x; 1 + d].iter().enumerate().map(|(i, &v)| if i == 0 { v } else { 0.0 }).collect::<Vec<_>>();
            match model.diffusion.sigma_eval(&z) {
                Ok((sig, _)) => {
                    let tr: f64 = (1..=d).map(|i| sig[(i, i)]).sum();
                    x.powf((1.0 - beta) / 2.0) * (tr - model.diffusion.sigma_bar_sq).abs()
                }
                Err(_) => f64::INFINITY,
            }
        })
        .collect();
    report.push(
        "C+ trace decay",
        tends_to_zero(&c_decay) || c_decay.iter().all(|v| *v == 0.0),
        format!("normalized trace deviation tail {:.3e}", c_decay[grid.n_x - 1]),
    );

    // (V+): strict positivity of the asymptotic constants.
    report.push(
        "V+ s0 positive",
        model.reflection.s0 > 0.0,
        format!("s0 = {}", model.reflection.s0),
    );
    report.push(
        "V+ c0 positive",
        model.reflection.c0 > 0.0,
        format!("c0 = {}", model.reflection.c0),
    );

    // c0 = <phi_inf(u), -u> must be constant on the sphere.
    let mut c0_dev: f64 = 0.0;
    for u in &dirs {
        let p = model.reflection.phi_inf(u);
        let proj: f64 = p.iter().zip(u).map(|(pi, ui)| pi * -ui).sum();
        c0_dev = c0_dev.max((proj - model.reflection.c0).abs());
    }
    report.push(
        "V+ radial projection",
        c0_dev < 1e-10,
        format!("max |<phi_inf(u),-u> - c0| = {c0_dev:.3e}"),
    );

    // (V+): obliqueness <phi, n> > 0 on a boundary grid.
    let mut min_proj = f64::INFINITY;
    let x_near = log_grid(model.domain.x_guard.max(1.0), grid.x_hi, grid.n_x);
    'outer: for &x in &x_near {
        let b = model.domain.boundary.value(x);
        for u in &dirs {
            let mut z = vec![x];
            z.extend(u.iter().map(|&ui| b * ui));
            let (phi, n) = match (
                model.reflection.phi_eval(&model.domain, &z),
                model.domain.inward_normal(&z),
            ) {
                (Ok(p), Ok(n)) => (p, n),
                _ => {
                    min_proj = f64::NEG_INFINITY;
                    break 'outer;
                }
            };
            let proj: f64 = phi.iter().zip(&n).map(|(a, b)| a * b).sum();
            min_proj = min_proj.min(proj);
        }
    }
    report.push(
        "V+ obliqueness",
        min_proj > 0.0,
        format!("min <phi, n> over grid = {min_proj:.3e}"),
    );

    // (V+): decay x^{(1-b)/2} |phi(x,b(x)u) - (s0, phi_inf(u))| -> 0.
    let v_decay: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let b = model.domain.boundary.value(x);
            let mut worst: f64 = 0.0;
            for u in &dirs {
                let mut z = vec![x];
                z.extend(u.iter().map(|&ui| b * ui));
                if let Ok(phi) = model.reflection.phi_eval(&model.domain, &z) {
                    let mut target = vec![model.reflection.s0];
                    target.extend(model.reflection.phi_inf(u));
                    let dev: f64 = phi
                        .iter()
                        .zip(&target)
                        .map(|(a, b)| (a - b) * (a - b))
                        .sum::<f64>()
                        .sqrt();
                    worst = worst.max(dev);
                }
            }
            x.powf((1.0 - beta) / 2.0) * worst
        })
        .collect();
    report.push(
        "V+ field decay",
        tends_to_zero(&v_decay) || v_decay.iter().all(|v| *v == 0.0),
        format!("normalized field deviation tail {:.3e}", v_decay[grid.n_x - 1]),
    );

    // (S): gradient decay of sigma and phi by finite differences in x.
    let s_decay: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let h = 1e-4 * x;
            let mut worst: f64 = 0.0;
            for u in dirs.iter().take(8) {
                let mk = |xx: f64| {
                    let b = model.domain.boundary.value(xx);
                    let mut z = vec![xx];
                    z.extend(u.iter().map(|&ui| b * ui * 0.99));
                    z
                };
                if let (Ok((_, sp)), Ok((_, sm))) = (
                    model.diffusion.sigma_eval(&mk(x + h)),
                    model.diffusion.sigma_eval(&mk(x - h)),
                ) {
                    let diff = (&sp - &sm) / (2.0 * h);
                    worst = worst.max(diff.amax());
                }
            }
            x.powf(beta + 0.1) * worst
        })
        .collect();
    report.push(
        "S gradient decay",
        tends_to_zero(&s_decay) || s_decay.iter().all(|v| *v == 0.0),
        format!("normalized sigma gradient tail {:.3e}", s_decay[grid.n_x - 1]),
    );

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sqrt_identity_and_diagonal() {
        let d = DiffusionField::identity(2);
        assert_eq!(d.sqrt_sigma_inf, DMatrix::identity(2, 2));
        let diag = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![4.0, 1.0]));
        let f = DiffusionField::new(DiffusionKind::Constant, diag).unwrap();
        assert_relative_eq!(f.sqrt_sigma_inf[(0, 0)], 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.sqrt_sigma_inf[(1, 1)], 1.0, max_relative = 1e-12);
    }

    #[test]
    fn sqrt_dense_matrix_squares_back() {
        // Oracle: verify by squaring, independent of the eigendecomposition path.
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (root, min_eig) = spd_sqrt(&m).unwrap();
        assert!(min_eig > 0.0);
        let back = &root * &root;
        assert!((back - &m).amax() < 1e-10);
        // Closed form for [[2,1],[1,2]]: diag (sqrt(3)+1)/2, off-diag (sqrt(3)-1)/2.
        assert_relative_eq!(root[(0, 0)], (3f64.sqrt() + 1.0) / 2.0, max_relative = 1e-10);
        assert_relative_eq!(root[(0, 1)], (3f64.sqrt() - 1.0) / 2.0, max_relative = 1e-10);
    }

    #[test]
    fn sqrt_random_spd_up_to_dim_6() {
        let mut state = 1u64;
        let mut unif = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / (1u64 << 53) as f64 - 0.5
        };
        for n in 2..=6 {
            for _ in 0..10 {
                let a = DMatrix::from_fn(n, n, |_, _| unif());
                let m = &a * a.transpose() + DMatrix::identity(n, n) * 0.1;
                let (root, min_eig) = spd_sqrt(&m).unwrap();
                assert!(min_eig > 0.0);
                assert!(((&root * &root) - &m).amax() < 1e-10);
            }
        }
    }

    #[test]
    fn phi_eval_examples() {
        let m = CoefficientModel::canonical(0.0, 1);
        assert_eq!(
            m.reflection.phi_eval(&m.domain, &[5.0, 1.0]).unwrap(),
            vec![1.0, -1.0]
        );
        assert_eq!(
            m.reflection.phi_eval(&m.domain, &[5.0, -1.0]).unwrap(),
            vec![1.0, 1.0]
        );
        let m2 = CoefficientModel::new(
            ParabolicDomain::new(BoundaryFunction::cylinder(1.0), 2, 0.5),
            DiffusionField::identity(3),
            ReflectionField::normal(2.0, 0.5),
        )
        .unwrap();
        let phi = m2.reflection.phi_eval(&m2.domain, &[5.0, 0.0, 1.0]).unwrap();
        assert_eq!(phi, vec![2.0, 0.0, -0.5]);
        assert!(m.reflection.phi_eval(&m.domain, &[5.0, 0.2]).is_err());
    }

    #[test]
    fn c1_examples() {
        assert_relative_eq!(CoefficientModel::canonical(0.0, 1).c1_constant(), 0.5);
        assert_relative_eq!(CoefficientModel::canonical(-0.5, 1).c1_constant(), 0.0625);
        assert_relative_eq!(
            CoefficientModel::canonical(0.5, 1).c1_constant(),
            0.75f64.powf(2.0 / 3.0),
            max_relative = 1e-12
        );
    }

    #[test]
    fn c1_identity_property() {
        for beta in [-0.6, -0.3, 0.0, 0.4, 0.9] {
            let m = CoefficientModel::canonical(beta, 2);
            let c1 = m.c1_constant();
            let lhs = c1.powf(1.0 + beta) * 2.0 * m.a_inf() * m.reflection.c0;
            let rhs = (1.0 + beta) * m.reflection.s0 * m.diffusion.sigma_bar_sq;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn upsilon_examples() {
        let m = CoefficientModel::canonical(0.0, 1);
        let (f, s) = uniform_ball_moments(1);
        assert_relative_eq!(m.upsilon_constant(&f, &s).unwrap(), 4.0 / 3.0);
        let m5 = CoefficientModel::canonical(0.5, 1);
        assert_relative_eq!(
            m5.upsilon_constant(&f, &s).unwrap(),
            (1.5 / 2.5) * (4.0 / 3.0),
            max_relative = 1e-12
        );
        let m2 = CoefficientModel::canonical(0.0, 2);
        let (f2, s2) = uniform_ball_moments(2);
        assert_relative_eq!(m2.upsilon_constant(&f2, &s2).unwrap(), 1.5);
        let bad = CoefficientModel::canonical(-0.5, 1);
        assert!(matches!(
            bad.upsilon_constant(&f, &s),
            Err(ModelError::BetaOutOfRange(_))
        ));
    }

    #[test]
    fn upsilon_matches_remark_closed_form() {
        // Identity diffusion + normal reflection: Upsilon = (1+b)/(1+3b)(1 + (s0/c0)^2 d/(d+2)).
        for beta in [-0.2, 0.0, 0.3, 0.8] {
            for d in 1..=3usize {
                let m = CoefficientModel::canonical(beta, d);
                let (f, s) = uniform_ball_moments(d);
                let got = m.upsilon_constant(&f, &s).unwrap();
                let expect =
                    (1.0 + beta) / (1.0 + 3.0 * beta) * (1.0 + d as f64 / (d as f64 + 2.0));
                assert_relative_eq!(got, expect, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn q_polynomial_examples() {
        let m = CoefficientModel::canonical(0.0, 1);
        assert_relative_eq!(m.q_polynomial(&[0.0]), 1.0);
        assert_relative_eq!(m.q_polynomial(&[1.0]), 2.0);
        let mut sig = DMatrix::identity(2, 2);
        sig[(0, 1)] = 0.5;
        sig[(1, 0)] = 0.5;
        let m2 = CoefficientModel::new(
            ParabolicDomain::new(BoundaryFunction::cylinder(1.0), 1, 0.5),
            DiffusionField::new(DiffusionKind::Constant, sig).unwrap(),
            ReflectionField::normal(1.0, 1.0),
        )
        .unwrap();
        assert_relative_eq!(m2.q_polynomial(&[1.0]), 3.0);
    }

    #[test]
    fn s_squared_examples() {
        let (f, s) = uniform_ball_moments(1);
        let m = CoefficientModel::canonical(0.0, 1);
        assert_relative_eq!(m.s_squared_constant(&f, &s).unwrap(), 4.0 / 3.0);
        // Cross-check against the algebraic identity at beta = 0.5.
        let m5 = CoefficientModel::canonical(0.5, 1);
        let s2 = m5.s_squared_constant(&f, &s).unwrap();
        let upsilon = m5.upsilon_constant(&f, &s).unwrap();
        let c1 = m5.c1_constant();
        assert_relative_eq!(s2, c1.powf(1.0) * upsilon, max_relative = 1e-12);
        assert_relative_eq!(s2, 0.8 * 0.75f64.powf(2.0 / 3.0), max_relative = 1e-6);
    }

    #[test]
    fn s_squared_relation_random_parameters() {
        let mut state = 7u64;
        let mut unif = || {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / (1u64 << 53) as f64
        };
        for _ in 0..30 {
            let beta = -0.3 + 1.25 * unif();
            let a_inf = 0.3 + 2.0 * unif();
            let s0 = 0.2 + unif();
            let c0 = 0.2 + unif();
            let boundary = BoundaryFunction::new(crate::geometry::BoundaryKind::PurePower, beta, a_inf)
                .unwrap();
            let m = CoefficientModel::new(
                ParabolicDomain::new(boundary, 1, 0.5),
                DiffusionField::identity(2),
                ReflectionField::normal(s0, c0),
            )
            .unwrap();
            let (f, s) = uniform_ball_moments(1);
            let s2 = m.s_squared_constant(&f, &s).unwrap();
            let upsilon = m.upsilon_constant(&f, &s).unwrap();
            let want = a_inf * a_inf * m.c1_constant().powf(2.0 * beta) * upsilon;
            assert_relative_eq!(s2, want, max_relative = 1e-10);
        }
    }

    #[test]
    fn validation_canonical_passes() {
        let m = CoefficientModel::canonical(0.0, 1);
        let report = m.validate_assumptions(&GridSpec::default());
        assert!(report.all_pass(), "{report:?}");
    }

    #[test]
    fn validation_flags_zero_s0() {
        let mut m = CoefficientModel::canonical(0.0, 1);
        m.reflection.s0 = 0.0;
        let report = m.validate_assumptions(&GridSpec::default());
        assert!(!report.all_pass());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "V+ s0 positive" && !c.passed));
    }

    #[test]
    fn validation_flags_degenerate_sigma() {
        let sig = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let m = CoefficientModel::new(
            ParabolicDomain::new(BoundaryFunction::cylinder(1.0), 1, 0.5),
            DiffusionField::new(DiffusionKind::Constant, sig).unwrap(),
            ReflectionField::normal(1.0, 1.0),
        )
        .unwrap();
        let report = m.validate_assumptions(&GridSpec::default());
        assert!(report
            .checks
            .iter()
            .any(|c| c.name == "C+ ellipticity" && !c.passed));
        assert!(m.diffusion.sigma_eval(&[5.0, 0.0]).is_err());
    }

    #[test]
    fn oblique_projection_positive_on_random_boundary_points() {
        let m = CoefficientModel::new(
            ParabolicDomain::new(BoundaryFunction::pure_power(1.0, 0.5).unwrap(), 2, 0.5),
            DiffusionField::identity(3),
            ReflectionField {
                kind: ReflectionKind::ObliqueTangential { swirl: 0.4 },
                s0: 1.0,
                c0: 1.0,
                perturbation: None,
            },
        )
        .unwrap();
        let dirs = sphere_grid(2, 1000);
        for (i, u) in dirs.iter().enumerate() {
            let x = 1.0 + (i as f64 % 97.0);
            let b = m.domain.boundary.value(x);
            let z = vec![x, b * u[0], b * u[1]];
            let phi = m.reflection.phi_eval(&m.domain, &z).unwrap();
            let n = m.domain.inward_normal(&z).unwrap();
            let proj: f64 = phi.iter().zip(&n).map(|(a, b)| a * b).sum();
            assert!(proj > 0.0, "non-oblique at {z:?}");
        }
    }
}
