//! Sample statistics used by the Monte Carlo harness.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Unbiased sample variance.
pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() as f64 - 1.0)
}

/// Standard error of the sample mean.
pub fn mean_se(x: &[f64]) -> f64 {
    (variance(x) / x.len() as f64).sqrt()
}

/// Standard error of the sample variance, `√((m4 - s⁴ (M-3)/(M-1)) / M)`.
pub fn variance_se(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = mean(x);
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let s2 = variance(x);
    ((m4 - s2 * s2 * (n - 3.0) / (n - 1.0)) / n).max(0.0).sqrt()
}

/// Sample covariance and the standard error of its estimate.
pub fn covariance_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let prods: Vec<f64> = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).collect();
    let n = prods.len() as f64;
    let cov = prods.iter().sum::<f64>() / (n - 1.0);
    (cov, mean_se(&prods))
}

/// Pearson correlation and its large-sample standard error `(1-r²)/√M`.
pub fn correlation_with_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (c, _) = covariance_with_se(x, y);
    let r = c / (variance(x) * variance(y)).sqrt();
    (r, (1.0 - r * r) / (x.len() as f64).sqrt())
}

/// Kolmogorov distribution tail `Q(λ) = 2 Σ (-1)^{k-1} e^{-2k²λ²}`.
fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against a continuous CDF, with the
/// Stephens small-sample correction of the asymptotic p-value.
pub fn ks_one_sample(data: &[f64], cdf: impl Fn(f64) -> f64) -> KsResult {
    let mut x = data.to_vec();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d = 0.0f64;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max(f - i as f64 / n).max((i as f64 + 1.0) / n - f);
    }
    let sn = n.sqrt();
    KsResult { statistic: d, p_value: kolmogorov_q((sn + 0.12 + 0.11 / sn) * d) }
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a - F_b|` and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> KsResult {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (na, nb) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < x.len() && j < y.len() {
        let v = x[i].min(y[j]);
        while i < x.len() && x[i] <= v {
            i += 1;
        }
        while j < y.len() && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = (na * nb / (na + nb)).sqrt();
    KsResult { statistic: d, p_value: kolmogorov_q((ne + 0.12 + 0.11 / ne) * d) }
}

/// Jarque–Bera statistic `M/6 (S² + (K-3)²/4)` with its χ²₂ p-value.
pub fn jarque_bera(x: &[f64]) -> KsResult {
    let n = x.len() as f64;
    let m = mean(x);
    let m2 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n;
    let m3 = x.iter().map(|v| (v - m).powi(3)).sum::<f64>() / n;
    let m4 = x.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let jb = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    let chi = ChiSquared::new(2.0).expect("two degrees of freedom");
    KsResult { statistic: jb, p_value: 1.0 - chi.cdf(jb) }
}

/// Least-squares fit `y = a + b x`; returns `(b, a, se(b))`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    let se = if n > 2.0 { (rss / (n - 2.0) / sxx).sqrt() } else { f64::NAN };
    (b, a, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    use statrs::distribution::Normal;

    fn normals(seed: u64, n: usize) -> Vec<f64> {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut r)).collect()
    }

    #[test]
    fn moments_of_small_sample() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&x), 2.5);
        assert!((variance(&x) - 5.0 / 3.0).abs() < 1e-15);
        let (c, _) = covariance_with_se(&x, &x);
        assert!((c - variance(&x)).abs() < 1e-15);
        let (b, a, _) = ols_slope(&x, &[3.0, 5.0, 7.0, 9.0]);
        assert!((b - 2.0).abs() < 1e-14 && (a - 1.0).abs() < 1e-14);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Q(1.36) ≈ 0.0495, Q(1.0) ≈ 0.2700
        assert!((kolmogorov_q(1.36) - 0.04946).abs() < 5e-4);
        assert!((kolmogorov_q(1.0) - 0.27000).abs() < 5e-4);
    }

    #[test]
    fn ks_accepts_normal_and_rejects_shift() {
        let x = normals(3, 2000);
        let n = Normal::new(0.0, 1.0).unwrap();
        assert!(ks_one_sample(&x, |v| n.cdf(v)).p_value > 0.01);
        assert!(ks_one_sample(&x, |v| n.cdf(v - 0.2)).p_value < 1e-6);
        let y = normals(4, 2000);
        assert!(ks_two_sample(&x, &y).statistic < 0.05);
        assert_eq!(ks_two_sample(&x, &x).statistic, 0.0);
    }

    #[test]
    fn jarque_bera_detects_skew() {
        let x = normals(5, 4000);
        assert!(jarque_bera(&x).p_value > 0.01);
        let e: Vec<f64> = x.iter().map(|v| v * v).collect();
        assert!(jarque_bera(&e).p_value < 1e-6);
    }

    #[test]
    fn variance_se_matches_gaussian_formula() {
        let x = normals(6, 20000);
        let se = variance_se(&x);
        let gaussian = (2.0 / 20000f64).sqrt();
        assert!((se / gaussian - 1.0).abs() < 0.05, "{se} vs {gaussian}");
    }
}
