//! Realised semivariance, semicovariance and generalised covariation
//! functionals of increment grids, as running series `t ↦ V_t^n`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{ProductFunction, TestFunction};

/// Running series `V_{i/n}^n = (1/n) Σ_{k ≤ i} h(Δ_k^1/τ^1, Δ_k^2/τ^2)`, `V_0 = 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemicovSeries {
    /// Test functions applied to the first and, for pairs, second series.
    pub functions: Vec<TestFunction>,
    pub values: Vec<f64>,
    pub n: u64,
    pub scaled: bool,
    /// Drift per unit time subtracted by [`clt_statistic`] when no explicit
    /// centering is given.
    pub centering: Option<f64>,
}

impl SemicovSeries {
    /// `V` at the last grid point.
    pub fn total(&self) -> f64 {
        *self.values.last().unwrap_or(&0.0)
    }

    /// `V_t` for `t` on or between grid points (step function).
    pub fn value_at(&self, t: f64) -> f64 {
        let k = ((self.n as f64 * t + 1e-9).floor().max(0.0) as usize).min(self.values.len() - 1);
        self.values[k]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn with_centering(mut self, rate: f64) -> Self {
        self.centering = Some(rate);
        self
    }

    /// CSV with columns `i,t,value,statistic`, preceded by a `#`-prefixed
    /// JSON metadata line.
    pub fn write_csv<W: std::io::Write>(&self, mut writer: W) -> Result<()> {
        let meta = serde_json::json!({
            "functions": self.functions.iter().map(|f| f.label()).collect::<Vec<_>>(),
            "n": self.n,
            "scaled": self.scaled,
            "centering": self.centering,
        });
        writeln!(writer, "# {meta}")?;
        let stat = clt_statistic(self, &Centering::Linear(self.centering.unwrap_or(0.0)))?;
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["i", "t", "value", "statistic"])?;
        for (i, (v, s)) in self.values.iter().zip(&stat).enumerate() {
            w.write_record(&[
                i.to_string(),
                format!("{}", i as f64 / self.n as f64),
                format!("{v:.17e}"),
                format!("{s:.17e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_scale(tau: f64) -> Result<()> {
    if tau > 0.0 && tau.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("scaling factor {tau} must be positive")))
    }
}

fn running(n: u64, len: usize, mut term: impl FnMut(usize) -> f64) -> Vec<f64> {
    let inv_n = 1.0 / n as f64;
    let mut out = Vec::with_capacity(len + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for i in 0..len {
        acc += term(i);
        out.push(acc * inv_n);
    }
    out
}

/// `(1/n) Σ φ(Δ_k/τ)` for a single series.
pub fn univariate_functional(increments: &[f64], tau: f64, n: u64, f: &TestFunction) -> Result<SemicovSeries> {
    check_scale(tau)?;
    let values = running(n, increments.len(), |i| f.eval(increments[i] / tau));
    Ok(SemicovSeries { functions: vec![*f], values, n, scaled: true, centering: None })
}

/// Upside realised semivariance `(1/n) Σ f(Δ_k/τ)` with `f(x) = x² 1{x ≥ 0}`.
pub fn realised_semivariance(increments: &[f64], tau: f64, n: u64) -> Result<SemicovSeries> {
    univariate_functional(increments, tau, n, &TestFunction::upside_square())
}

/// Downside counterpart with `x² 1{x < 0}`.
pub fn realised_downside_semivariance(increments: &[f64], tau: f64, n: u64) -> Result<SemicovSeries> {
    let f = TestFunction { indicator: crate::hermite::Indicator::NonPositive, ..TestFunction::upside_square() };
    univariate_functional(increments, tau, n, &f)
}

/// `(1/n) Σ (Δ_k/τ)²`.
pub fn realised_variance(increments: &[f64], tau: f64, n: u64) -> Result<f64> {
    let f = TestFunction { indicator: crate::hermite::Indicator::All, ..TestFunction::upside_square() };
    Ok(univariate_functional(increments, tau, n, &f)?.total())
}

/// `(1/n) Σ h(Δ_k^1/τ^1, Δ_k^2/τ^2)`; `scales = None` uses raw increments.
pub fn product_covariation(
    inc1: &[f64],
    inc2: &[f64],
    scales: Option<[f64; 2]>,
    n: u64,
    h: &ProductFunction,
) -> Result<SemicovSeries> {
    if inc1.len() != inc2.len() {
        return Err(Error::LengthMismatch(inc1.len(), inc2.len()));
    }
    let values = match scales {
        Some([t1, t2]) => {
            check_scale(t1)?;
            check_scale(t2)?;
            running(n, inc1.len(), |i| h.eval(inc1[i] / t1, inc2[i] / t2))
        }
        None => running(n, inc1.len(), |i| h.eval(inc1[i], inc2[i])),
    };
    Ok(SemicovSeries { functions: vec![h.f, h.g], values, n, scaled: scales.is_some(), centering: None })
}

/// Upside realised semicovariance `(1/n) Σ p(Δ^1/τ^1) p(Δ^2/τ^2)`.
pub fn realised_semicovariance(inc1: &[f64], inc2: &[f64], tau1: f64, tau2: f64, n: u64) -> Result<SemicovSeries> {
    product_covariation(inc1, inc2, Some([tau1, tau2]), n, &ProductFunction::semicovariance())
}

/// `(1/n) Σ φ(Δ^1/τ^1) φ(Δ^2/τ^2)` with the same `φ = |x|^q I(x)` on both.
pub fn generalised_covariation(
    inc1: &[f64],
    inc2: &[f64],
    tau1: f64,
    tau2: f64,
    n: u64,
    f: &TestFunction,
) -> Result<SemicovSeries> {
    if f.q < 1.0 || !f.q.is_finite() {
        return Err(Error::InvalidTestFunction(format!("power q = {} must be at least 1", f.q)));
    }
    product_covariation(inc1, inc2, Some([tau1, tau2]), n, &ProductFunction::new(*f, *f))
}

/// Totals of the four sign components `p⊗p, n⊗n, p⊗n, n⊗p` with
/// `p(x) = max(x, 0)` and `n(x) = min(x, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SemicovDecomposition {
    pub positive: f64,
    pub negative: f64,
    pub mixed_pn: f64,
    pub mixed_np: f64,
}

impl SemicovDecomposition {
    pub fn sum(&self) -> f64 {
        self.positive + self.negative + self.mixed_pn + self.mixed_np
    }
}

pub fn semicovariance_decomposition(
    inc1: &[f64],
    inc2: &[f64],
    tau1: f64,
    tau2: f64,
    n: u64,
) -> Result<SemicovDecomposition> {
    if inc1.len() != inc2.len() {
        return Err(Error::LengthMismatch(inc1.len(), inc2.len()));
    }
    check_scale(tau1)?;
    check_scale(tau2)?;
    let mut d = [0.0; 4];
    for (&a, &b) in inc1.iter().zip(inc2) {
        let (x, y) = (a / tau1, b / tau2);
        let (px, nx) = (x.max(0.0), x.min(0.0));
        let (py, ny) = (y.max(0.0), y.min(0.0));
        d[0] += px * py;
        d[1] += nx * ny;
        d[2] += px * ny;
        d[3] += nx * py;
    }
    let inv = 1.0 / n as f64;
    Ok(SemicovDecomposition { positive: d[0] * inv, negative: d[1] * inv, mixed_pn: d[2] * inv, mixed_np: d[3] * inv })
}

/// `(1/n) Σ (Δ^1/τ^1)(Δ^2/τ^2)`.
pub fn realised_covariance(inc1: &[f64], inc2: &[f64], tau1: f64, tau2: f64, n: u64) -> Result<f64> {
    if inc1.len() != inc2.len() {
        return Err(Error::LengthMismatch(inc1.len(), inc2.len()));
    }
    let s: f64 = inc1.iter().zip(inc2).map(|(a, b)| (a / tau1) * (b / tau2)).sum();
    Ok(s / n as f64)
}

/// Centering subtracted from a running series.
#[derive(Debug, Clone, PartialEq)]
pub enum Centering {
    /// `c(t) = rate · t`.
    Linear(f64),
    /// `c(i/n)` given at every grid point.
    Grid(Vec<f64>),
}

/// `√n (V_{i/n} - c(i/n))` on the grid.
pub fn clt_statistic(series: &SemicovSeries, centering: &Centering) -> Result<Vec<f64>> {
    let sn = (series.n as f64).sqrt();
    match centering {
        Centering::Linear(rate) => {
            Ok(series.values.iter().enumerate().map(|(i, v)| sn * (v - rate * (i as f64 / series.n as f64))).collect())
        }
        Centering::Grid(c) => {
            if c.len() != series.values.len() {
                return Err(Error::LengthMismatch(c.len(), series.values.len()));
            }
            Ok(series.values.iter().zip(c).map(|(v, c)| sn * (v - c)).collect())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::Indicator;

    #[test]
    fn hand_examples() {
        let s = realised_semivariance(&[0.5, -1.0, 2.0, -0.5], 1.0, 4).unwrap();
        assert_eq!(s.total(), 1.0625);
        assert_eq!(s.values[0], 0.0);
        let c = realised_semicovariance(&[1.0, -1.0], &[2.0, 3.0], 1.0, 1.0, 2).unwrap();
        assert_eq!(c.total(), 1.0);
        let f = TestFunction::new(2.0, Indicator::All, false).unwrap();
        let g = generalised_covariation(&[1.0, 2.0], &[1.0, 2.0], 1.0, 1.0, 2, &f).unwrap();
        assert_eq!(g.total(), 8.5);
    }

    #[test]
    fn semicovariance_of_identical_series_is_semivariance() {
        let x = [0.3, -0.2, 1.7, 0.0, -2.2, 0.9];
        let a = realised_semicovariance(&x, &x, 0.7, 0.7, 6).unwrap();
        let b = realised_semivariance(&x, 0.7, 6).unwrap();
        for (u, v) in a.values.iter().zip(&b.values) {
            assert!((u - v).abs() <= 1e-15 * v.abs().max(1.0));
        }
    }

    #[test]
    fn q_one_upside_matches_semicovariance_exactly() {
        let x = [0.3, -0.2, 1.7, 0.0];
        let y = [1.1, 0.4, -0.3, 2.0];
        let a = realised_semicovariance(&x, &y, 0.5, 2.0, 4).unwrap();
        let b = generalised_covariation(&x, &y, 0.5, 2.0, 4, &TestFunction::positive_part()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(matches!(realised_semicovariance(&[1.0], &[1.0, 2.0], 1.0, 1.0, 2), Err(Error::LengthMismatch(1, 2))));
        let f = TestFunction { q: 0.5, indicator: Indicator::All, centered: false };
        assert!(generalised_covariation(&[1.0], &[1.0], 1.0, 1.0, 1, &f).is_err());
        assert!(realised_semivariance(&[1.0], 0.0, 1).is_err());
    }

    #[test]
    fn statistic_vanishes_on_centering() {
        let s = SemicovSeries {
            functions: vec![TestFunction::upside_square()],
            values: vec![0.0, 0.125, 0.25, 0.375, 0.5],
            n: 4,
            scaled: true,
            centering: Some(0.5),
        };
        assert!(clt_statistic(&s, &Centering::Linear(0.5)).unwrap().iter().all(|&v| v == 0.0));
        let g = clt_statistic(&s, &Centering::Grid(s.values.clone())).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert_eq!(s.value_at(0.6), 0.25);
    }

    #[test]
    fn unscaled_mode_uses_raw_increments() {
        let s = product_covariation(&[2.0, -1.0], &[3.0, 1.0], None, 2, &ProductFunction::semicovariance()).unwrap();
        assert_eq!(s.total(), 3.0);
        assert!(!s.scaled);
    }

    #[test]
    fn csv_has_metadata_header() {
        let s = realised_semivariance(&[0.5, -1.0], 1.0, 2).unwrap().with_centering(0.5);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let meta: serde_json::Value = serde_json::from_str(lines.next().unwrap().trim_start_matches("# ")).unwrap();
        assert_eq!(meta["n"], 2);
        assert_eq!(lines.next().unwrap(), "i,t,value,statistic");
        assert_eq!(text.lines().count(), 5);
    }
}
