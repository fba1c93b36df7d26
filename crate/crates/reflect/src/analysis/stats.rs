//! Estimators with uncertainty: IID means, batch means for correlated
//! series, least-squares slopes, and correlation.

use serde::{Deserialize, Serialize};

pub const DEFAULT_BATCHES: usize = 50;
pub const DEFAULT_BURN_IN: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Iid,
    BatchMeans(usize),
}

/// A point estimate with a standard error and the sample count behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateWithCI {
    pub value: f64,
    pub stderr: f64,
    pub n: usize,
    pub method: CiMethod,
}

impl EstimateWithCI {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            stderr: 0.0,
            n: 0,
            method: CiMethod::Iid,
        }
    }

    /// Whether `target` lies within `k` standard errors of the estimate.
    pub fn covers(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.stderr
    }

    pub fn half_width_95(&self) -> f64 {
        1.96 * self.stderr
    }
}

/// Sample mean with the usual IID standard error.
pub fn mean_iid(samples: &[f64]) -> EstimateWithCI {
    let n = samples.len();
    assert!(n >= 2, "need at least two samples");
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    EstimateWithCI {
        value: mean,
        stderr: (var / n as f64).sqrt(),
        n,
        method: CiMethod::Iid,
    }
}

/// Unbiased sample variance with an IID standard error from the fourth
/// central moment.
pub fn variance_iid(samples: &[f64]) -> EstimateWithCI {
    let n = samples.len();
    assert!(n >= 4, "need at least four samples");
    let mean = samples.iter().sum::<f64>() / n as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in samples {
        let d2 = (x - mean).powi(2);
        m2 += d2;
        m4 += d2 * d2;
    }
    m2 /= n as f64;
    m4 /= n as f64;
    let var = m2 * n as f64 / (n - 1) as f64;
    // Var(s^2) ~ (m4 - m2^2)/n for large n.
    let stderr = ((m4 - m2 * m2).max(0.0) / n as f64).sqrt();
    EstimateWithCI {
        value: var,
        stderr,
        n,
        method: CiMethod::Iid,
    }
}

/// Batch-means estimate of the mean of a correlated stationary series.
/// The first `burn_in` fraction is discarded; the remainder is split into
/// `n_batches` equal batches whose means are treated as IID.
pub fn batch_means(series: &[f64], burn_in: f64, n_batches: usize) -> EstimateWithCI {
    assert!(n_batches >= 20, "batch-means needs at least 20 batches");
    assert!((0.0..1.0).contains(&burn_in));
    let start = (series.len() as f64 * burn_in) as usize;
    let body = &series[start..];
    let batch_len = body.len() / n_batches;
    assert!(batch_len >= 1, "series too short for {n_batches} batches");
    let used = batch_len * n_batches;
    let body = &body[body.len() - used..];
    let means: Vec<f64> = body
        .chunks_exact(batch_len)
        .map(|c| c.iter().sum::<f64>() / batch_len as f64)
        .collect();
    let mut est = mean_iid(&means);
    est.n = used;
    est.method = CiMethod::BatchMeans(n_batches);
    est
}

/// Ordinary least squares y = a + b x; returns (slope, slope stderr,
/// intercept). Slope stderr comes from the residual variance.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len();
    assert!(n >= 3 && n == y.len(), "need >= 3 paired points");
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let sxx: f64 = x.iter().map(|v| (v - xm).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(u, v)| (u - xm) * (v - ym)).sum();
    assert!(sxx > 0.0, "degenerate abscissae");
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(u, v)| (v - intercept - slope * u).powi(2))
        .sum();
    let stderr = (ss_res / (n - 2) as f64 / sxx).sqrt();
    (slope, stderr, intercept)
}

/// Pearson correlation coefficient.
pub fn correlation(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    assert!(n >= 2 && n == y.len());
    let xm = x.iter().sum::<f64>() / n as f64;
    let ym = y.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (u, v) in x.iter().zip(y) {
        sxx += (u - xm).powi(2);
        syy += (v - ym).powi(2);
        sxy += (u - xm) * (v - ym);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    sxy / (sxx * syy).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn iid_mean_of_constants() {
        let e = mean_iid(&[2.0; 16]);
        assert_eq!(e.value, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.covers(2.0, 1.0));
    }

    #[test]
    fn iid_mean_known_small_sample() {
        let e = mean_iid(&[1.0, 2.0, 3.0, 4.0]);
        assert_relative_eq!(e.value, 2.5);
        // var = 5/3, stderr = sqrt(5/12).
        assert_relative_eq!(e.stderr, (5.0f64 / 12.0).sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn variance_of_pm_one() {
        let mut s = vec![1.0; 500];
        s.extend(vec![-1.0; 500]);
        let e = variance_iid(&s);
        assert_relative_eq!(e.value, 1000.0 / 999.0, max_relative = 1e-12);
    }

    #[test]
    fn batch_means_matches_iid_on_independent_data() {
        // splitmix-ish deterministic pseudo-data.
        let mut state = 1u64;
        let data: Vec<f64> = (0..5000)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
                (state >> 11) as f64 / (1u64 << 53) as f64
            })
            .collect();
        let bm = batch_means(&data, 0.1, DEFAULT_BATCHES);
        let iid = mean_iid(&data[500..]);
        assert_relative_eq!(bm.value, iid.value, max_relative = 1e-2);
        // On independent data the two stderrs agree in order of magnitude.
        assert!(bm.stderr < 3.0 * iid.stderr && iid.stderr < 3.0 * bm.stderr);
        assert_eq!(bm.method, CiMethod::BatchMeans(DEFAULT_BATCHES));
    }

    #[test]
    fn ols_recovers_exact_line() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 3.0 - 2.0 * v).collect();
        let (slope, stderr, intercept) = ols_slope(&x, &y);
        assert_relative_eq!(slope, -2.0, max_relative = 1e-12);
        assert_relative_eq!(intercept, 3.0, max_relative = 1e-12);
        assert!(stderr < 1e-10);
    }

    #[test]
    fn correlation_bounds_and_signs() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [2.0, 4.0, 6.0, 8.0];
        assert_relative_eq!(correlation(&x, &y), 1.0, max_relative = 1e-12);
        let z = [-2.0, -4.0, -6.0, -8.0];
        assert_relative_eq!(correlation(&x, &z), -1.0, max_relative = 1e-12);
        let w = [1.0, -1.0, 1.0, -1.0];
        assert!(correlation(&x, &w).abs() < 0.5);
    }
}
