//! Analytic evaluation of the radial Lyapunov function
//! g(x,y) = x + (s0/2c0)|y|^2/b(x) and its drift, boundary, and
//! quadratic-variation companions, plus the asymptotic decay report.

use crate::geometry::log_grid;
use crate::model::{sphere_grid, tends_to_zero, CoefficientModel};

/// Values of the Lyapunov quantities at one query point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LyapunovEval {
    pub g: f64,
    /// Generator drift (1/2)(b(g) Delta_Sigma g + b'(g) |Sigma^{1/2} grad g|^2).
    pub drift_mu: f64,
    /// Boundary term b(g) <phi, grad g>, meaningful on the boundary.
    pub boundary_lambda: f64,
    /// Quadratic variation b(g)^2 |Sigma^{1/2} grad g|^2 of b0(g).
    pub qv_f: f64,
}

/// Gradient and Hessian of g at z, in closed form.
pub fn g_derivatives(model: &CoefficientModel, z: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let x = z[0];
    let y = &z[1..];
    let d = y.len();
    let (b, b1, b2) = model.domain.boundary.eval(x).expect("x > 0 required");
    let r2: f64 = y.iter().map(|v| v * v).sum();
    let half_ratio = 0.5 * model.reflection.s0 / model.reflection.c0;
    let ratio = 2.0 * half_ratio;
    let g = x + half_ratio * r2 / b;
    let mut grad = vec![0.0; 1 + d];
    grad[0] = 1.0 - half_ratio * r2 * b1 / (b * b);
    for i in 0..d {
        grad[1 + i] = ratio * y[i] / b;
    }
    let mut hess = vec![vec![0.0; 1 + d]; 1 + d];
    hess[0][0] = half_ratio * r2 * (2.0 * b1 * b1 / (b * b * b) - b2 / (b * b));
    for i in 0..d {
        let v = -ratio * y[i] * b1 / (b * b);
        hess[0][1 + i] = v;
        hess[1 + i][0] = v;
        hess[1 + i][1 + i] = ratio / b;
    }
    (g, grad, hess)
}

/// Evaluates g, the generator drift, the boundary pairing, and the
/// quadratic-variation function at z. Requires x >= 1 so the envelope of g
/// coincides with b itself.
///
/// ```
/// use reflect::analysis::lyapunov_eval;
/// use reflect::model::CoefficientModel;
///
/// // On the cylinder the boundary pairing vanishes identically and the
/// // generator drift is the constant s0 sigma_bar^2 / (2 c0) = 1/2.
/// let model = CoefficientModel::canonical(0.0, 1);
/// let ev = lyapunov_eval(&model, &[5.0, 1.0]);
/// assert!(ev.boundary_lambda.abs() < 1e-12);
/// assert!((ev.drift_mu - 0.5).abs() < 1e-12);
/// ```
pub fn lyapunov_eval(model: &CoefficientModel, z: &[f64]) -> LyapunovEval {
    assert!(z[0] >= 1.0, "evaluation assumes x >= 1");
    let (g, grad, hess) = g_derivatives(model, z);
    let (bg, bg1, _) = model.domain.boundary.eval(g).expect("g >= x >= 1");
    let (sigma, _) = model
        .diffusion
        .sigma_eval(z)
        .expect("ellipticity holds in the interior");
    let n = grad.len();
    // |Sigma^{1/2} grad g|^2 = <grad g, Sigma grad g>.
    let mut quad = 0.0;
    let mut lap = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += grad[i] * sigma[(i, j)] * grad[j];
            lap += sigma[(i, j)] * hess[i][j];
        }
    }
    let drift_mu = 0.5 * (bg * lap + bg1 * quad);
    let qv_f = bg * bg * quad;
    let r = crate::geometry::ParabolicDomain::y_norm(z);
    let boundary_lambda = if r > 0.0 {
        let u: Vec<f64> = z[1..].iter().map(|v| v / r).collect();
        let phi = model.reflection.phi_at_direction(z[0], &u);
        bg * phi.iter().zip(&grad).map(|(p, q)| p * q).sum::<f64>()
    } else {
        bg * model.reflection.s0 * grad[0]
    };
    LyapunovEval {
        g,
        drift_mu,
        boundary_lambda,
        qv_f,
    }
}

/// One row of the decay report: normalized deviations at a single x,
/// maximized over the y samples.
#[derive(Debug, Clone, Copy)]
pub struct DecayRow {
    pub x: f64,
    /// |drift_mu - s0 sigma_bar^2/(2 c0)| * x^{(1-beta)/2}.
    pub drift_dev: f64,
    /// |Lambda| * x^{(1-3beta)/2} over boundary points.
    pub lambda_dev: f64,
    /// |f - a_inf^2 x^{2beta} Q(y/x^beta)| * x^{-2beta}.
    pub qv_dev: f64,
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub rows: Vec<DecayRow>,
    pub drift_decays: bool,
    pub lambda_decays: bool,
    pub qv_decays: bool,
}

impl DecayReport {
    pub fn all_decay(&self) -> bool {
        self.drift_decays && self.lambda_decays && self.qv_decays
    }
}

/// Checks the advertised large-x behaviour of the Lyapunov quantities on a
/// log grid: the drift approaches s0 sigma_bar^2/(2 c0) at rate x^{(beta-1)/2},
/// the boundary pairing vanishes at rate x^{(3beta-1)/2}, and f approaches
/// a_inf^2 x^{2beta} Q(y/x^beta).
pub fn lyapunov_asymptotics_check(
    model: &CoefficientModel,
    x_lo: f64,
    x_hi: f64,
    n_x: usize,
    n_dirs: usize,
) -> DecayReport {
    let d = model.domain.dim_y;
    let beta = model.beta();
    let a = model.a_inf();
    let s0 = model.reflection.s0;
    let c0 = model.reflection.c0;
    let drift_limit = s0 * model.diffusion.sigma_bar_sq / (2.0 * c0);
    let dirs = sphere_grid(d, n_dirs);
    let radii = [0.25, 0.5, 0.75, 1.0];
    let mut rows = Vec::with_capacity(n_x);
    for x in log_grid(x_lo, x_hi, n_x) {
        let b = model.domain.boundary.value(x);
        let (mut dd, mut ld, mut qd) = (0.0f64, 0.0f64, 0.0f64);
        for u in &dirs {
            for rho in radii {
                let mut z = vec![x];
                z.extend(u.iter().map(|ui| rho * b * ui));
                let ev = lyapunov_eval(model, &z);
                dd = dd.max((ev.drift_mu - drift_limit).abs());
                let y_scaled: Vec<f64> =
                    z[1..].iter().map(|v| v / x.powf(beta)).collect();
                let q_target = a * a * x.powf(2.0 * beta) * model.q_polynomial(&y_scaled);
                qd = qd.max((ev.qv_f - q_target).abs());
                if rho == 1.0 {
                    ld = ld.max(ev.boundary_lambda.abs());
                }
            }
        }
        rows.push(DecayRow {
            x,
            drift_dev: dd * x.powf(0.5 * (1.0 - beta)),
            lambda_dev: ld * x.powf(0.5 * (1.0 - 3.0 * beta)),
            qv_dev: qd * x.powf(-2.0 * beta),
        });
    }
    let col = |f: fn(&DecayRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    DecayReport {
        drift_decays: tends_to_zero(&col(|r| r.drift_dev)),
        lambda_decays: tends_to_zero(&col(|r| r.lambda_dev)),
        qv_decays: tends_to_zero(&col(|r| r.qv_dev)),
        rows,
    }
}
