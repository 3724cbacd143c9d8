//! Volatility paths `σ` on the observation grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_sim::{grid_len, IncrementSampler, SimScheme};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VolatilityModel {
    /// `σ_t = level`.
    Constant { level: f64 },
    /// `σ_t = base + amplitude · sin(frequency · t)`, `base > amplitude >= 0`.
    Sinusoidal { base: f64, amplitude: f64, frequency: f64 },
    /// `σ_t = base · exp(scale · B^H_t)` with `B^H` a fractional Brownian motion, `H > 1/2`.
    SmoothFractional { base: f64, scale: f64, hurst: f64 },
}

/// Which random stream drives a stochastic volatility path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolDriver {
    /// A stream independent of the Gaussian core.
    #[default]
    Independent,
    /// The core's own stream, so `σ` and the core share innovations.
    SharedWithCore,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolatilitySpec {
    pub model: VolatilityModel,
    /// Declared Hölder exponent of the paths.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub driver: VolDriver,
}

fn default_eta() -> f64 {
    1.0
}

impl VolatilitySpec {
    pub fn constant(level: f64) -> Self {
        Self { model: VolatilityModel::Constant { level }, eta: 1.0, driver: VolDriver::Independent }
    }

    pub fn sinusoidal(base: f64, amplitude: f64, frequency: f64) -> Self {
        Self {
            model: VolatilityModel::Sinusoidal { base, amplitude, frequency },
            eta: 1.0,
            driver: VolDriver::Independent,
        }
    }

    /// The declared exponent defaults to `(1/2 + H) / 2`, strictly inside `(1/2, H)`.
    pub fn smooth_fractional(base: f64, scale: f64, hurst: f64) -> Self {
        Self {
            model: VolatilityModel::SmoothFractional { base, scale, hurst },
            eta: 0.5 * (0.5 + hurst),
            driver: VolDriver::Independent,
        }
    }

    /// Checks positivity and the declared Hölder exponent; `clt_mode`
    /// additionally demands `η > 1/2`.
    pub fn validate(&self, clt_mode: bool) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidVolatility(msg));
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return bad(format!("declared Hölder exponent {} must lie in (0, 1]", self.eta));
        }
        if clt_mode && self.eta <= 0.5 {
            return bad(format!("central limit mode needs η > 1/2, declared {}", self.eta));
        }
        match self.model {
            VolatilityModel::Constant { level } if !(level > 0.0 && level.is_finite()) => {
                bad(format!("constant level {level} must be positive"))
            }
            VolatilityModel::Sinusoidal { base, amplitude, frequency } => {
                if !(amplitude >= 0.0 && base > amplitude && frequency.is_finite() && base.is_finite()) {
                    bad(format!("sinusoidal model needs base > amplitude >= 0, got base {base}, amplitude {amplitude}"))
                } else {
                    Ok(())
                }
            }
            VolatilityModel::SmoothFractional { base, scale, hurst } => {
                if !(base > 0.0 && scale.is_finite() && hurst > 0.5 && hurst < 1.0) {
                    bad(format!("fractional model needs base > 0 and H in (1/2, 1), got base {base}, H {hurst}"))
                } else if self.eta >= hurst {
                    bad(format!("fractional paths are only η-Hölder for η < H = {hurst}, declared {}", self.eta))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn is_deterministic(&self) -> bool {
        !matches!(self.model, VolatilityModel::SmoothFractional { .. })
    }

    /// `σ_t` for the deterministic models.
    pub fn value_at(&self, t: f64) -> Option<f64> {
        match self.model {
            VolatilityModel::Constant { level } => Some(level),
            VolatilityModel::Sinusoidal { base, amplitude, frequency } => {
                Some(base + amplitude * (frequency * t).sin())
            }
            VolatilityModel::SmoothFractional { .. } => None,
        }
    }

    /// `sup_t σ_t` where it is known in advance.
    pub fn upper_bound(&self) -> Option<f64> {
        match self.model {
            VolatilityModel::Constant { level } => Some(level),
            VolatilityModel::Sinusoidal { base, amplitude, .. } => Some(base + amplitude),
            VolatilityModel::SmoothFractional { .. } => None,
        }
    }

    /// `∫_0^t σ_s^q ds` in closed form for `q ∈ {1, 2, 4}` and the deterministic models.
    pub fn exact_integral(&self, q: u32, t: f64) -> Option<f64> {
        match self.model {
            VolatilityModel::Constant { level } => Some(level.powi(q as i32) * t),
            VolatilityModel::Sinusoidal { base: b, amplitude: a, frequency: w } => {
                if w == 0.0 {
                    return Some(b.powi(q as i32) * t);
                }
                // ∫ sin = (1 - cos wt)/w, ∫ sin² = t/2 - sin(2wt)/(4w)
                let s1 = (1.0 - (w * t).cos()) / w;
                let s2 = 0.5 * t - (2.0 * w * t).sin() / (4.0 * w);
                match q {
                    1 => Some(b * t + a * s1),
                    2 => Some(b * b * t + 2.0 * a * b * s1 + a * a * s2),
                    4 => {
                        // sin³ and sin⁴ antiderivatives
                        let c = (w * t).cos();
                        let s3 = (2.0 / 3.0 - c + c * c * c / 3.0) / w;
                        let s4 = 3.0 * t / 8.0 - (2.0 * w * t).sin() / (4.0 * w) + (4.0 * w * t).sin() / (32.0 * w);
                        Some(
                            b.powi(4) * t
                                + 4.0 * b.powi(3) * a * s1
                                + 6.0 * b * b * a * a * s2
                                + 4.0 * b * a.powi(3) * s3
                                + a.powi(4) * s4,
                        )
                    }
                    _ => None,
                }
            }
            VolatilityModel::SmoothFractional { .. } => None,
        }
    }
}

/// `σ` at the grid points `i/n`, `i = 0..=⌈nT⌉`.
pub fn sample_volatility(
    spec: &VolatilitySpec,
    n: u64,
    horizon: f64,
    seed: u64,
    replicate: u64,
    component: u64,
) -> Result<Vec<f64>> {
    VolatilitySampler::new(spec, n, horizon)?.sample(seed, replicate, component)
}

/// Precomputed volatility generator for repeated replicates.
#[derive(Debug, Clone)]
pub struct VolatilitySampler {
    spec: VolatilitySpec,
    n: u64,
    m: usize,
    fgn: Option<IncrementSampler>,
}

impl VolatilitySampler {
    pub fn new(spec: &VolatilitySpec, n: u64, horizon: f64) -> Result<Self> {
        spec.validate(false)?;
        let m = grid_len(n, horizon).or_else(|_| {
            if n as f64 * horizon >= 1.0 {
                Ok(1)
            } else {
                Err(Error::InvalidVolatility(format!("n·T = {} must be at least 1", n as f64 * horizon)))
            }
        })?;
        let fgn = match spec.model {
            VolatilityModel::SmoothFractional { hurst, .. } => {
                let acf: Vec<f64> = (0..=m.max(2)).map(|k| fgn_autocovariance(hurst, k as f64)).collect();
                Some(IncrementSampler::from_autocorrelation(&acf, SimScheme::CirculantEmbedding)?)
            }
            _ => None,
        };
        Ok(Self { spec: *spec, n, m, fgn })
    }

    /// Grid values for one replicate; `component` selects the independent stream.
    pub fn sample(&self, seed: u64, replicate: u64, component: u64) -> Result<Vec<f64>> {
        let n = self.n as f64;
        match self.spec.model {
            VolatilityModel::SmoothFractional { base, scale, hurst } => {
                let fgn = self.fgn.as_ref().expect("fractional sampler");
                let stream = match self.spec.driver {
                    VolDriver::Independent => component,
                    VolDriver::SharedWithCore => rng::CORE,
                };
                let noise = &fgn.sample_stream(seed, replicate, stream).increments[0];
                let step = n.powf(-hurst);
                let mut out = Vec::with_capacity(self.m + 1);
                let mut b = 0.0;
                out.push(base);
                for &z in noise.iter().take(self.m) {
                    b += step * z;
                    out.push(base * (scale * b).exp());
                }
                Ok(out)
            }
            _ => Ok((0..=self.m).map(|i| self.spec.value_at(i as f64 / n).expect("deterministic model")).collect()),
        }
    }
}

/// `Cov(B^H_{k+1} - B^H_k, B^H_1 - B^H_0)` for unit spacing.
pub fn fgn_autocovariance(hurst: f64, k: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * ((k + 1.0).abs().powf(h2) - 2.0 * k.abs().powf(h2) + (k - 1.0).abs().powf(h2))
}

/// Left-endpoint Riemann sum `(1/n) Σ_{i=1}^{⌊nt⌋} σ_{(i-1)/n}^q`.
pub fn integrated_power(sigma: &[f64], q: f64, t: f64, n: u64) -> f64 {
    let k = ((n as f64 * t + 1e-9).floor().max(0.0) as usize).min(sigma.len());
    sigma.iter().take(k).map(|s| s.powf(q)).sum::<f64>() / n as f64
}

/// Left-endpoint Riemann sum of `(σ^1 σ^2)^q`.
pub fn integrated_power_product(s1: &[f64], s2: &[f64], q: f64, t: f64, n: u64) -> f64 {
    let prod: Vec<f64> = s1.iter().zip(s2).map(|(a, b)| a * b).collect();
    integrated_power(&prod, q, t, n)
}

/// Writes `i,t,sigma` rows.
pub fn write_volatility_csv<W: std::io::Write>(writer: W, sigma: &[f64], n: u64) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["i", "t", "sigma"])?;
    for (i, s) in sigma.iter().enumerate() {
        w.write_record([i.to_string(), format!("{}", i as f64 / n as f64), format!("{s:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_path() {
        let s = sample_volatility(&VolatilitySpec::constant(1.0), 16, 1.0, 0, 0, rng::VOL1).unwrap();
        assert_eq!(s.len(), 17);
        assert!(s.iter().all(|&v| v == 1.0));
        assert_eq!(integrated_power(&s, 2.0, 1.0, 16), 1.0);
    }

    #[test]
    fn sinusoidal_range_and_lipschitz() {
        let spec = VolatilitySpec::sinusoidal(1.0, 0.5, 2.0 * PI);
        let n = 1000;
        let s = sample_volatility(&spec, n, 1.0, 0, 0, rng::VOL1).unwrap();
        assert!(s.iter().all(|&v| (0.5..=1.5).contains(&v)));
        let lip = s.windows(2).map(|w| (w[1] - w[0]).abs() * n as f64).fold(0.0, f64::max);
        assert!(lip <= 0.5 * 2.0 * PI + 1e-9);
    }

    #[test]
    fn sinusoidal_integrals() {
        let spec = VolatilitySpec::sinusoidal(1.0, 0.5, 3.0);
        let n = 4000;
        let s = sample_volatility(&spec, n, 1.0, 0, 0, rng::VOL1).unwrap();
        for q in [1u32, 2, 4] {
            let exact = spec.exact_integral(q, 1.0).unwrap();
            let riemann = integrated_power(&s, q as f64, 1.0, n);
            assert!((exact - riemann).abs() < 5.0 / n as f64, "q={q}: {exact} vs {riemann}");
        }
        // fine trapezoid check of the antiderivatives
        let fine = 200_000;
        for q in [1i32, 2, 4] {
            let h = 0.7 / fine as f64;
            let mut acc = 0.0;
            for i in 0..=fine {
                let w = if i == 0 || i == fine { 0.5 } else { 1.0 };
                acc += w * spec.value_at(i as f64 * h).unwrap().powi(q);
            }
            let exact = spec.exact_integral(q as u32, 0.7).unwrap();
            assert!((acc * h - exact).abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn product_integral() {
        let s = vec![2.0; 11];
        assert!((integrated_power_product(&s, &s, 1.0, 0.5, 10) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(VolatilitySpec::sinusoidal(0.5, 0.5, 1.0).validate(false).is_err());
        assert!(VolatilitySpec::constant(0.0).validate(false).is_err());
        let mut frac = VolatilitySpec::smooth_fractional(1.0, 0.3, 0.75);
        assert!(frac.validate(true).is_ok());
        frac.eta = 0.8;
        assert!(frac.validate(false).is_err());
        frac.eta = 0.4;
        assert!(frac.validate(false).is_ok());
        assert!(frac.validate(true).is_err());
        assert!(VolatilitySpec::smooth_fractional(1.0, 0.3, 0.4).validate(false).is_err());
    }

    #[test]
    fn fractional_paths_positive_and_deterministic() {
        let spec = VolatilitySpec::smooth_fractional(1.0, 0.3, 0.75);
        let a = sample_volatility(&spec, 256, 1.0, 9, 2, rng::VOL1).unwrap();
        let b = sample_volatility(&spec, 256, 1.0, 9, 2, rng::VOL1).unwrap();
        let c = sample_volatility(&spec, 256, 1.0, 9, 2, rng::VOL2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a[0], 1.0);
        assert!(a.iter().all(|&v| v > 0.0));
    }
}
