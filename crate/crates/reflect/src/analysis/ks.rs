//! Kolmogorov–Smirnov statistics: one-sample against an arbitrary CDF and
//! two-sample, with the asymptotic Kolmogorov p-value.

/// One-sample KS statistic of `samples` against the CDF closure `cdf`, with
/// the asymptotic p-value.
pub fn ks_one_sample(samples: &[f64], cdf: impl Fn(f64) -> f64) -> (f64, f64) {
    let n = samples.len();
    assert!(n >= 5, "KS needs at least 5 samples");
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut d: f64 = 0.0;
    for (i, x) in s.iter().enumerate() {
        let f = cdf(*x).clamp(0.0, 1.0);
        let lo = i as f64 / n as f64;
        let hi = (i + 1) as f64 / n as f64;
        d = d.max((f - lo).abs()).max((hi - f).abs());
    }
    (d, kolmogorov_p(d * (n as f64).sqrt()))
}

/// Two-sample KS statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let (n, m) = (a.len(), b.len());
    assert!(n >= 5 && m >= 5, "KS needs at least 5 samples per side");
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).unwrap());
    sb.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < n && j < m {
        let (fa, fb) = (i as f64 / n as f64, j as f64 / m as f64);
        d = d.max((fa - fb).abs());
        if sa[i] <= sb[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    d = d.max(((i as f64 / n as f64) - (j as f64 / m as f64)).abs());
    let ne = (n as f64 * m as f64) / (n + m) as f64;
    (d, kolmogorov_p(d * ne.sqrt()))
}

/// Tail of the Kolmogorov distribution: P(sup |B| > t) for the Brownian
/// bridge, via the alternating series 2 sum (-1)^{k-1} exp(-2 k^2 t^2).
pub fn kolmogorov_p(t: f64) -> f64 {
    if t < 1e-3 {
        return 1.0;
    }
    let mut p = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64 * t).powi(2)).exp();
        p += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn kolmogorov_reference_values() {
        // Asymptotic tail at the classical ~5% and ~1% critical points:
        // 2 exp(-2 * 1.36^2) = 0.04949..., 2 exp(-2 * 1.63^2) = 0.00984...
        assert_relative_eq!(kolmogorov_p(1.36), 0.04949, max_relative = 1e-3);
        assert_relative_eq!(kolmogorov_p(1.63), 0.00984, max_relative = 1e-3);
        assert_eq!(kolmogorov_p(0.0), 1.0);
        assert!(kolmogorov_p(5.0) < 1e-10);
    }

    #[test]
    fn one_sample_exact_grid_uniform() {
        // Points at (i - 0.5)/n match Uniform(0,1) as well as possible:
        // D = 1/(2n).
        let n = 100;
        let s: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let (d, p) = ks_one_sample(&s, |x| x.clamp(0.0, 1.0));
        assert_relative_eq!(d, 0.5 / n as f64, max_relative = 1e-12);
        assert!(p > 0.99);
    }

    #[test]
    fn one_sample_detects_shift() {
        let n = 200;
        let s: Vec<f64> = (0..n).map(|i| 0.5 + 0.5 * (i as f64 + 0.5) / n as f64).collect();
        let (d, p) = ks_one_sample(&s, |x| x.clamp(0.0, 1.0));
        assert!(d > 0.4);
        assert!(p < 1e-6);
    }

    #[test]
    fn two_sample_identical_distributions() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64 + 0.5) / 500.0).collect();
        let b: Vec<f64> = (0..300).map(|i| (i as f64 + 0.25) / 300.0).collect();
        let (d, p) = ks_two_sample(&a, &b);
        assert!(d < 0.05, "d = {d}");
        assert!(p > 0.5);
    }

    #[test]
    fn two_sample_disjoint_supports() {
        let a = vec![0.0, 0.1, 0.2, 0.3, 0.4];
        let b = vec![1.0, 1.1, 1.2, 1.3, 1.4];
        let (d, _) = ks_two_sample(&a, &b);
        assert_relative_eq!(d, 1.0);
    }
}
