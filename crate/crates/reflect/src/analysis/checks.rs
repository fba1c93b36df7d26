//! Estimators that confront simulated paths and ensembles with the limit
//! formulas: invariant-law moments, strong law, CLT, additive functionals,
//! local-time balance, mixing, and fluctuation growth exponents.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::analysis::ks::{ks_one_sample, ks_two_sample};
use crate::analysis::stats::{
    batch_means, correlation, mean_iid, ols_slope, variance_iid, EstimateWithCI,
    DEFAULT_BATCHES,
};
use crate::engine::sde::ReflectedPath;
use crate::engine::step::EngineError;
use crate::model::{CoefficientModel, ModelError};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("insufficient samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },
    #[error("beta = {0} outside (-1/3, 1); no CLT regime")]
    BetaOutOfRange(f64),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Minimum post-burn-in sample count for invariant-measure time averages.
pub const MIN_ERGODIC_SAMPLES: usize = 100_000;

/// First and second moments of the invariant law on the unit ball,
/// estimated by time averaging with batch-means uncertainty.
#[derive(Debug, Clone)]
pub struct MuMoments {
    pub first: Vec<EstimateWithCI>,
    pub second: Vec<Vec<EstimateWithCI>>,
}

impl MuMoments {
    pub fn exact_uniform(d: usize) -> Self {
        let (m1, m2) = crate::model::uniform_ball_moments(d);
        Self {
            first: m1.iter().map(|&v| EstimateWithCI::exact(v)).collect(),
            second: (0..d)
                .map(|i| (0..d).map(|j| EstimateWithCI::exact(m2[(i, j)])).collect())
                .collect(),
        }
    }

    pub fn first_values(&self) -> Vec<f64> {
        self.first.iter().map(|e| e.value).collect()
    }

    pub fn second_values(&self) -> DMatrix<f64> {
        let d = self.second.len();
        DMatrix::from_fn(d, d, |i, j| self.second[i][j].value)
    }
}

/// Time-averaged moments of the y-law from ball paths. Each path is trimmed
/// of its initial `burn_in` fraction; the concatenated series is reduced by
/// batch means.
pub fn ergodic_moments(
    paths: &[ReflectedPath],
    burn_in: f64,
) -> Result<MuMoments, AnalysisError> {
    let d = paths
        .first()
        .map(|p| p.states[0].len())
        .unwrap_or(0);
    let mut kept: Vec<&[f64]> = Vec::new();
    for p in paths {
        let start = (p.states.len() as f64 * burn_in) as usize;
        for s in &p.states[start..] {
            kept.push(s);
        }
    }
    if kept.len() < MIN_ERGODIC_SAMPLES {
        return Err(AnalysisError::InsufficientSamples {
            needed: MIN_ERGODIC_SAMPLES,
            got: kept.len(),
        });
    }
    let series_of = |f: &dyn Fn(&[f64]) -> f64| -> Vec<f64> { kept.iter().map(|s| f(s)).collect() };
    let mut first = Vec::with_capacity(d);
    for j in 0..d {
        let series = series_of(&|s: &[f64]| s[j]);
        first.push(batch_means(&series, 0.0, DEFAULT_BATCHES));
    }
    let mut second = vec![vec![EstimateWithCI::exact(0.0); d]; d];
    for j in 0..d {
        for k in j..d {
            let series = series_of(&|s: &[f64]| s[j] * s[k]);
            let est = batch_means(&series, 0.0, DEFAULT_BATCHES);
            second[j][k] = est;
            second[k][j] = est;
        }
    }
    Ok(MuMoments { first, second })
}

/// Mean of X_T / T^{1/(1+beta)} over an ensemble of terminal x records.
pub fn strong_law_check(
    terminal_x: &[f64],
    t: f64,
    model: &CoefficientModel,
) -> Result<(EstimateWithCI, f64), AnalysisError> {
    if terminal_x.len() < 30 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 30,
            got: terminal_x.len(),
        });
    }
    let scale = t.powf(1.0 / (1.0 + model.beta()));
    let ratios: Vec<f64> = terminal_x.iter().map(|x| x / scale).collect();
    let est = mean_iid(&ratios);
    let c1 = model.c1_constant();
    Ok((est, (est.value - c1) / c1))
}

/// Output of the fluctuation CLT check.
#[derive(Debug, Clone)]
pub struct CltReport {
    /// Sample variance of s_i = (X_T - c1 T^{1/(1+beta)})/sqrt(T).
    pub variance: EstimateWithCI,
    pub mean: EstimateWithCI,
    /// KS of the normalized samples s_i/sqrt(Upsilon) against N(0,1).
    pub ks_stat: f64,
    pub ks_p: f64,
    /// Correlation between s_i and the rescaled first y-coordinate.
    pub xy_correlation: f64,
    pub upsilon_target: f64,
    /// The joint samples (s_i, rescaled Y_T first coordinate).
    pub joint: Vec<(f64, f64)>,
}

/// Fluctuation samples against the Gaussian limit with variance Upsilon.
/// `terminals` holds full terminal states (x, y_1..y_d).
pub fn clt_check(
    terminals: &[Vec<f64>],
    t: f64,
    x0: f64,
    model: &CoefficientModel,
    mu: &MuMoments,
) -> Result<CltReport, AnalysisError> {
    let beta = model.beta();
    if beta <= -1.0 / 3.0 {
        return Err(AnalysisError::BetaOutOfRange(beta));
    }
    if terminals.len() < 1000 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 1000,
            got: terminals.len(),
        });
    }
    let c1 = model.c1_constant();
    // The start offset is part of the finite-T mean; without it the KS and
    // mean checks see a spurious x0/sqrt(T) shift.
    let drift = x0 + c1 * t.powf(1.0 / (1.0 + beta));
    let sqrt_t = t.sqrt();
    let y_scale = model.a_inf() * c1.powf(beta) * t.powf(beta / (1.0 + beta));
    let upsilon = model.upsilon_constant(&mu.first_values(), &mu.second_values())?;
    let joint: Vec<(f64, f64)> = terminals
        .iter()
        .map(|z| ((z[0] - drift) / sqrt_t, z[1] / y_scale))
        .collect();
    let s: Vec<f64> = joint.iter().map(|p| p.0).collect();
    let y: Vec<f64> = joint.iter().map(|p| p.1).collect();
    let sd = upsilon.sqrt();
    let (ks_stat, ks_p) = ks_one_sample(&s, |x| crate::engine::rng::normal_cdf(x / sd));
    Ok(CltReport {
        variance: variance_iid(&s),
        mean: mean_iid(&s),
        ks_stat,
        ks_p,
        xy_correlation: correlation(&s, &y),
        upsilon_target: upsilon,
        joint,
    })
}

/// KS of the rescaled terminal transverse coordinate Y_T/b(X_T) against a
/// reference CDF (closed-form uniform for the normal d=1 case), plus the
/// symmetry check on its mean.
pub fn y_law_check(
    terminals: &[Vec<f64>],
    model: &CoefficientModel,
    reference_cdf: impl Fn(f64) -> f64,
) -> (f64, f64, EstimateWithCI) {
    let ratios: Vec<f64> = terminals
        .iter()
        .map(|z| z[1] / model.domain.boundary.value(z[0]))
        .collect();
    let (d, p) = ks_one_sample(&ratios, reference_cdf);
    (d, p, mean_iid(&ratios))
}

/// CDF of the uniform law on (-1, 1).
pub fn uniform_ball_cdf_1d(x: f64) -> f64 {
    ((x + 1.0) / 2.0).clamp(0.0, 1.0)
}

/// Two-sample self-test: KS between two halves of the same rescaled ensemble.
pub fn y_law_self_test(terminals: &[Vec<f64>], model: &CoefficientModel) -> (f64, f64) {
    let ratios: Vec<f64> = terminals
        .iter()
        .map(|z| z[1] / model.domain.boundary.value(z[0]))
        .collect();
    let half = ratios.len() / 2;
    ks_two_sample(&ratios[..half], &ratios[half..])
}

/// Normalized additive functional T^{-1-2beta/(1+beta)} int_0^T X^{2beta}
/// P(Y/X^beta) dt against its closed-form limit
/// (1+beta)/(1+3beta) c1^{2beta} int P~ dmu with P~ = P0 + a P1 + a^2 P2.
pub fn additive_functional_check(
    path: &ReflectedPath,
    model: &CoefficientModel,
    p0: f64,
    p1: &[f64],
    p2: &DMatrix<f64>,
    mu: &MuMoments,
) -> Result<(f64, f64), AnalysisError> {
    let beta = model.beta();
    if beta <= -1.0 / 3.0 {
        return Err(AnalysisError::BetaOutOfRange(beta));
    }
    let d = model.domain.dim_y;
    assert_eq!(p1.len(), d);
    let poly = |y_scaled: &[f64]| {
        let mut acc = p0;
        for i in 0..d {
            acc += p1[i] * y_scaled[i];
        }
        for i in 0..d {
            for j in 0..d {
                acc += p2[(i, j)] * y_scaled[i] * y_scaled[j];
            }
        }
        acc
    };
    let integrand = |z: &[f64]| {
        let xb = z[0].max(1e-12).powf(beta);
        let y_scaled: Vec<f64> = z[1..].iter().map(|v| v / xb).collect();
        xb * xb * poly(&y_scaled)
    };
    let n = path.times.len();
    if n < 10 {
        return Err(AnalysisError::InsufficientSamples { needed: 10, got: n });
    }
    let mut integral = 0.0;
    let mut prev = integrand(&path.states[0]);
    for i in 1..n {
        let cur = integrand(&path.states[i]);
        integral += 0.5 * (path.times[i] - path.times[i - 1]) * (prev + cur);
        prev = cur;
    }
    let t = path.terminal_time();
    let value = integral / t.powf(1.0 + 2.0 * beta / (1.0 + beta));
    let a = model.a_inf();
    let m1 = mu.first_values();
    let m2 = mu.second_values();
    let mut p_tilde = p0;
    for i in 0..d {
        p_tilde += a * p1[i] * m1[i];
    }
    for i in 0..d {
        for j in 0..d {
            p_tilde += a * a * p2[(i, j)] * m2[(i, j)];
        }
    }
    let c1 = model.c1_constant();
    let target = (1.0 + beta) / (1.0 + 3.0 * beta) * c1.powf(2.0 * beta) * p_tilde;
    Ok((value, target))
}

/// One row of the local-time balance series.
#[derive(Debug, Clone, Copy)]
pub struct LocalTimeRow {
    pub t: f64,
    /// |X_t - x0 - s0 L_t| / t^{1/(1+beta)}.
    pub ratio: f64,
    /// Implied prefactor L_t / t^{1/(1+beta)}.
    pub c2_estimate: f64,
}

/// Evaluates the drift balance X_t - x0 ~ s0 L_t along doubling times
/// T/4, T/2, T of the recorded horizon.
pub fn local_time_consistency(
    path: &ReflectedPath,
    model: &CoefficientModel,
) -> Result<Vec<LocalTimeRow>, AnalysisError> {
    let t_final = path.terminal_time();
    let x0 = path.states[0][0];
    let s0 = model.reflection.s0;
    let expo = 1.0 / (1.0 + model.beta());
    let mut rows = Vec::with_capacity(3);
    for frac in [0.25, 0.5, 1.0] {
        let t = frac * t_final;
        let x = path.state_at(t)?[0];
        let l = path.local_time_at(t)?;
        let scale = t.powf(expo);
        rows.push(LocalTimeRow {
            t,
            ratio: (x - x0 - s0 * l).abs() / scale,
            c2_estimate: l / scale,
        });
    }
    Ok(rows)
}

/// Output of the total-variation mixing estimate.
#[derive(Debug, Clone)]
pub struct TvReport {
    pub times: Vec<f64>,
    pub tv: Vec<f64>,
    /// Fitted contraction factor per unit time, exp(slope of log TV).
    pub lambda_hat: f64,
    pub slope_stderr: f64,
}

/// Empirical total variation between the binned laws of two ensembles of
/// scalar samples, one outer vec per time point.
pub fn tv_mixing_estimate(
    samples_a: &[Vec<f64>],
    samples_b: &[Vec<f64>],
    times: &[f64],
    n_bins: usize,
) -> Result<TvReport, AnalysisError> {
    assert_eq!(samples_a.len(), times.len());
    assert_eq!(samples_b.len(), times.len());
    assert!(n_bins >= 2);
    let mut tv = Vec::with_capacity(times.len());
    for (a, b) in samples_a.iter().zip(samples_b) {
        if a.len() < 100 || b.len() < 100 {
            return Err(AnalysisError::InsufficientSamples {
                needed: 100,
                got: a.len().min(b.len()),
            });
        }
        tv.push(histogram_tv(a, b, n_bins));
    }
    // Fit log TV ~ t log lambda on the strictly positive tail.
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(&tv)
        .filter(|(_, &v)| v > 1e-6)
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    let (lambda_hat, slope_stderr) = if pts.len() >= 3 {
        let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let (slope, se, _) = ols_slope(&xs, &ys);
        (slope.exp(), se)
    } else {
        (0.0, 0.0)
    };
    Ok(TvReport {
        times: times.to_vec(),
        tv,
        lambda_hat,
        slope_stderr,
    })
}

/// Binned total variation distance on the common range [-1, 1].
fn histogram_tv(a: &[f64], b: &[f64], n_bins: usize) -> f64 {
    let bin_of = |x: f64| {
        let u = ((x + 1.0) / 2.0).clamp(0.0, 1.0 - 1e-15);
        (u * n_bins as f64) as usize
    };
    let mut ha = vec![0.0; n_bins];
    let mut hb = vec![0.0; n_bins];
    for &x in a {
        ha[bin_of(x)] += 1.0 / a.len() as f64;
    }
    for &x in b {
        hb[bin_of(x)] += 1.0 / b.len() as f64;
    }
    (0.5 * ha.iter().zip(&hb).map(|(p, q)| (p - q).abs()).sum::<f64>()).clamp(0.0, 1.0)
}

/// Growth exponent of the fluctuation variance: OLS slope of log variance
/// against log time over geometric time points.
pub fn growth_exponent(times: &[f64], variances: &[f64]) -> (f64, f64) {
    assert!(times.len() >= 3 && times.len() == variances.len());
    let xs: Vec<f64> = times.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = variances.iter().map(|v| v.max(1e-300).ln()).collect();
    let (slope, se, _) = ols_slope(&xs, &ys);
    (slope, se)
}

/// Sample variance of the sqrt(t)-normalized toy fluctuation
/// (X~_t - c t^{1/(1+beta)})/sqrt(t) against the closed form
/// (1+beta)/(1+3beta).
pub fn toy_clt_check(
    terminal_x: &[f64],
    t: f64,
    c_prime: f64,
    beta: f64,
) -> Result<(EstimateWithCI, f64), AnalysisError> {
    if beta <= -1.0 / 3.0 {
        return Err(AnalysisError::BetaOutOfRange(beta));
    }
    let c = crate::engine::toy::toy_strong_law_constant(c_prime, beta);
    let drift = c * t.powf(1.0 / (1.0 + beta));
    let sqrt_t = t.sqrt();
    let s: Vec<f64> = terminal_x.iter().map(|x| (x - drift) / sqrt_t).collect();
    let target = (1.0 + beta) / (1.0 + 3.0 * beta);
    Ok((variance_iid(&s), target))
}

/// Variance of the sqrt(t)-normalized toy fluctuation without a CLT claim,
/// for the subcritical regime where it must grow.
pub fn toy_normalized_variance(terminal_x: &[f64], t: f64, c_prime: f64, beta: f64) -> f64 {
    let c = crate::engine::toy::toy_strong_law_constant(c_prime, beta);
    let drift = c * t.powf(1.0 / (1.0 + beta));
    let sqrt_t = t.sqrt();
    let s: Vec<f64> = terminal_x.iter().map(|x| (x - drift) / sqrt_t).collect();
    variance_iid(&s).value
}

/// Per-anchor comparison of windowed marginals with the invariant law and
/// of the windowed x-increments with a reference mean.
#[derive(Debug, Clone)]
pub struct WindowReport {
    pub anchor_t: f64,
    pub ks_stat: f64,
    pub ks_p: f64,
    pub x_increment: EstimateWithCI,
}

/// KS of terminal window y-marginals against a reference CDF and the mean
/// terminal window x-increment. `windows` holds one rescaled window per path,
/// all anchored at the same physical time.
pub fn window_law_check(
    windows: &[ReflectedPath],
    anchor_t: f64,
    reference_cdf: impl Fn(f64) -> f64,
) -> Result<WindowReport, AnalysisError> {
    if windows.len() < 30 {
        return Err(AnalysisError::InsufficientSamples {
            needed: 30,
            got: windows.len(),
        });
    }
    let y_terminal: Vec<f64> = windows.iter().map(|w| w.terminal_state()[1]).collect();
    let x_increment: Vec<f64> = windows
        .iter()
        .map(|w| w.terminal_state()[0] - w.states[0][0])
        .collect();
    let (ks_stat, ks_p) = ks_one_sample(&y_terminal, reference_cdf);
    Ok(WindowReport {
        anchor_t,
        ks_stat,
        ks_p,
        x_increment: mean_iid(&x_increment),
    })
}
