//! Kernel functions `g`, the variogram of the Gaussian core and the lag
//! correlations of its rescaled increments.
//!
//! With `G_t = ∫_{-∞}^t g(t-s) dW_s` and `φ_Δ(x) = g(x) - g(x-Δ)` (where `g`
//! vanishes on `(-∞, 0]`), the increment covariance at lag `k` is
//!
//! ```text
//! Cov(Δ_i G, Δ_{i+k} G) = ∫_0^∞ φ_Δ(x) φ_Δ(x + kΔ) dx,
//! ```
//!
//! and the variogram is the lag-0 case `R(t) = ∫_0^∞ φ_t(x)^2 dx`, which is the
//! same thing as `∫_0^∞ (g(x+t) - g(x))^2 dx + ∫_0^t g(x)^2 dx`. All integrals
//! are evaluated on panels that grow geometrically away from the kernel
//! singularity at the origin.

use std::collections::HashMap;
use std::sync::Arc;

use parking_lot::RwLock;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{clip_panels, geometric_panels, integrate_panels, PanelKind, QuadratureConfig};

/// Parametric kernel family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    /// `g(t) = t^α e^{-λt}`.
    Gamma,
    /// `g(t) = t^α (1+t)^{-λ}`; `λ` is the tail exponent and must exceed `α + 1/2`.
    PowerLaw,
}

/// A kernel `g` from one of the two supported families.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Roughness exponent.
    pub alpha: f64,
    /// Decay parameter (rate for the gamma family, tail exponent for power law).
    pub lambda: f64,
    #[serde(default)]
    pub label: String,
}

impl KernelSpec {
    pub fn gamma(alpha: f64, lambda: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::Gamma,
            alpha,
            lambda,
            label: format!("gamma(alpha={alpha}, lambda={lambda})"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn power_law(alpha: f64, gamma: f64) -> Result<Self> {
        let spec = Self {
            family: KernelFamily::PowerLaw,
            alpha,
            lambda: gamma,
            label: format!("power-law(alpha={alpha}, gamma={gamma})"),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Parameter checks plus a numerical square-integrability check.
    pub fn validate(&self) -> Result<()> {
        let a = self.alpha;
        if !(a > -0.5 && a < 0.5) || a == 0.0 || !a.is_finite() {
            return Err(Error::InvalidKernel(format!("alpha = {a} must lie in (-1/2, 1/2) \\ {{0}}")));
        }
        match self.family {
            KernelFamily::Gamma if !(self.lambda > 0.0 && self.lambda.is_finite()) => {
                return Err(Error::InvalidKernel(format!("gamma kernel needs lambda > 0, got {}", self.lambda)));
            }
            KernelFamily::PowerLaw if !(self.lambda > a + 0.5 && self.lambda.is_finite()) => {
                return Err(Error::InvalidKernel(format!(
                    "power-law kernel needs gamma > alpha + 1/2 = {}, got {}",
                    a + 0.5,
                    self.lambda
                )));
            }
            _ => {}
        }
        let norm = self.l2_norm_sq(&QuadratureConfig::default())?;
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::InvalidKernel(format!("∫ g² = {norm} is not finite and positive")));
        }
        Ok(())
    }

    /// `α ∈ (-1/2, 0)`, the regime of the central limit theorems.
    pub fn clt_admissible(&self) -> bool {
        self.alpha > -0.5 && self.alpha < 0.0
    }

    /// `g(t)`; zero for `t <= 0`.
    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        t.powf(self.alpha) * self.slowly_varying_factor(t)
    }

    /// The factor `L_g` in `g(t) = t^α L_g(t)`.
    #[inline]
    pub fn slowly_varying_factor(&self, t: f64) -> f64 {
        match self.family {
            KernelFamily::Gamma => (-self.lambda * t).exp(),
            KernelFamily::PowerLaw => (1.0 + t).powf(-self.lambda),
        }
    }

    /// `g'(t)` for `t > 0`.
    pub fn derivative(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        let g = self.eval(t);
        match self.family {
            KernelFamily::Gamma => g * (self.alpha / t - self.lambda),
            KernelFamily::PowerLaw => g * (self.alpha / t - self.lambda / (1.0 + t)),
        }
    }

    /// A horizon `H` with `∫_H^∞ g(x)^2 dx <= tol`, from an explicit decay bound.
    pub fn horizon(&self, tol: f64) -> f64 {
        match self.family {
            KernelFamily::Gamma => {
                // for x >= 1: g² <= x e^{-2λx}  (2α < 1), tail <= (H/(2λ) + 1/(4λ²)) e^{-2λH}
                let l = self.lambda;
                let mut h = (1.0 / l).max(1.0);
                while (h / (2.0 * l) + 1.0 / (4.0 * l * l)) * (-2.0 * l * h).exp() > tol {
                    h *= 1.25;
                }
                h
            }
            KernelFamily::PowerLaw => {
                // for x >= 1: g² <= x^{2α-2γ}
                let p = 2.0 * self.lambda - 2.0 * self.alpha - 1.0;
                (tol * p).powf(-1.0 / p).clamp(1.0, 1e14)
            }
        }
    }

    /// `∫_0^∞ g(x)^2 dx`.
    pub fn l2_norm_sq(&self, cfg: &QuadratureConfig) -> Result<f64> {
        self.product_integral(self, 0.0, cfg)
    }

    /// `∫_0^∞ g(x) h(x + shift) dx` for `shift >= 0`, where `h` is `other`.
    pub fn product_integral(&self, other: &KernelSpec, shift: f64, cfg: &QuadratureConfig) -> Result<f64> {
        let horizon = self.horizon(cfg.tail_tol).max(other.horizon(cfg.tail_tol));
        let scale = if shift > 0.0 { shift.min(horizon) } else { (1e-3 * horizon).min(1.0) };
        let panels = geometric_panels(scale, horizon, 1);
        integrate_panels(&mut |x| self.eval(x) * other.eval(x + shift), &panels, cfg)
    }
}

/// `∫_0^∞ φ^a_Δ(x) φ^b_Δ(x + lag·Δ) dx` with `φ_Δ(x) = g(x) - g(x - Δ)`.
pub fn increment_product(a: &KernelSpec, b: &KernelSpec, delta: f64, lag: u64, cfg: &QuadratureConfig) -> Result<f64> {
    increment_product_from(a, b, delta, lag, 0.0, cfg)
}

/// Same integral restricted to `x > from`.
///
/// The range is split at `Δ` and the part beyond it is written in the shifted
/// variable `y = x - Δ`, so both `g(x)` and `g(x - Δ)` are singular at the
/// local origin of their panel. Evaluating `g(x - Δ)` directly near `x = Δ`
/// would lose the mass of the singularity below one ulp of `Δ`.
fn increment_product_from(
    a: &KernelSpec,
    b: &KernelSpec,
    delta: f64,
    lag: u64,
    from: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let horizon = a.horizon(cfg.tail_tol).max(b.horizon(cfg.tail_tol)).max(4.0 * delta);
    let k = lag as f64;
    let mut total = 0.0;
    if from < delta {
        // φ^a(x) = g^a(x) on (0, Δ)
        let near = [(from, delta, PanelKind::Singular)];
        total += integrate_panels(
            &mut |x: f64| a.eval(x) * (b.eval(x + k * delta) - b.eval(x + (k - 1.0) * delta)),
            &near,
            cfg,
        )?;
    }
    let panels = clip_panels(&geometric_panels(delta, horizon, 1), (from - delta).max(0.0));
    total += integrate_panels(
        &mut |y: f64| {
            let fa = a.eval(y + delta) - a.eval(y);
            let fb = b.eval(y + (k + 1.0) * delta) - b.eval(y + k * delta);
            fa * fb
        },
        &panels,
        cfg,
    )?;
    Ok(total)
}

/// Limit of the lag correlations, `ρ_α(j) = ((j-1)^{2α+1} - 2 j^{2α+1} + (j+1)^{2α+1}) / 2`.
pub fn rho_alpha(alpha: f64, j: u64) -> f64 {
    if j == 0 {
        return 1.0;
    }
    let h = 2.0 * alpha + 1.0;
    if j < 16 {
        let jf = j as f64;
        return 0.5 * ((jf - 1.0).powf(h) - 2.0 * jf.powf(h) + (jf + 1.0).powf(h));
    }
    // j^h [(1-x)^h + (1+x)^h - 2] / 2 = j^h Σ_{m>=1} C(h, 2m) x^{2m},  x = 1/j
    let x2 = 1.0 / (j as f64 * j as f64);
    let mut coeff = h * (h - 1.0) / 2.0;
    let mut power = x2;
    let mut sum = 0.0;
    let mut m = 1.0;
    loop {
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        // C(h, 2m+2) = C(h, 2m) (h-2m)(h-2m-1) / ((2m+1)(2m+2))
        coeff *= (h - 2.0 * m) * (h - 2.0 * m - 1.0) / ((2.0 * m + 1.0) * (2.0 * m + 2.0));
        power *= x2;
        m += 1.0;
    }
    (j as f64).powf(h) * sum
}

/// A kernel together with quadrature settings and a lag-table cache.
#[derive(Debug)]
pub struct CovarianceModel {
    kernel: KernelSpec,
    quad: QuadratureConfig,
    cache: RwLock<HashMap<u64, Arc<Vec<f64>>>>,
}

impl Clone for CovarianceModel {
    fn clone(&self) -> Self {
        Self { kernel: self.kernel.clone(), quad: self.quad, cache: RwLock::new(self.cache.read().clone()) }
    }
}

impl CovarianceModel {
    pub fn new(kernel: KernelSpec) -> Self {
        Self::with_quadrature(kernel, QuadratureConfig::default())
    }

    pub fn with_quadrature(kernel: KernelSpec, quad: QuadratureConfig) -> Self {
        Self { kernel, quad, cache: RwLock::new(HashMap::new()) }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    /// `R(t) = E[(G_{s+t} - G_s)^2]`, `t >= 0`.
    pub fn variogram(&self, t: f64) -> Result<f64> {
        if t < 0.0 {
            return self.variogram(-t);
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        increment_product(&self.kernel, &self.kernel, t, 0, &self.quad)
    }

    /// `τ_n = √R(1/n)`.
    pub fn scaling_tau(&self, n: u64) -> Result<f64> {
        Ok(self.variogram(1.0 / n as f64)?.sqrt())
    }

    /// Unnormalised `Cov(Δ_1^n G, Δ_{1+lag}^n G)`.
    pub fn increment_covariance(&self, n: u64, lag: u64) -> Result<f64> {
        increment_product(&self.kernel, &self.kernel, 1.0 / n as f64, lag, &self.quad)
    }

    /// `(r_n(0), ..., r_n(max_lag))` with `r_n(0) = 1`.
    pub fn lag_correlations(&self, n: u64, max_lag: usize) -> Result<Vec<f64>> {
        if n == 0 {
            return Err(Error::InvalidSimulation("n must be positive".into()));
        }
        if let Some(t) = self.cache.read().get(&n) {
            if t.len() > max_lag {
                return Ok(t[..=max_lag].to_vec());
            }
        }
        let existing = self.cache.read().get(&n).cloned();
        let start = existing.as_ref().map_or(0, |t| t.len());
        let var = self.increment_covariance(n, 0)?;
        let fresh: Vec<f64> = (start..=max_lag)
            .into_par_iter()
            .map(|j| if j == 0 { Ok(1.0) } else { self.increment_covariance(n, j as u64).map(|c| c / var) })
            .collect::<Result<_>>()?;
        let mut table = existing.map(|t| t.as_ref().clone()).unwrap_or_default();
        table.extend(fresh);
        let out = table[..=max_lag].to_vec();
        let mut guard = self.cache.write();
        let keep = guard.get(&n).is_none_or(|t| t.len() < table.len());
        if keep {
            guard.insert(n, Arc::new(table));
        }
        Ok(out)
    }

    /// Autocovariance of the core, `∫_0^∞ g(x) g(x+t) dx`.
    pub fn autocovariance(&self, t: f64) -> Result<f64> {
        self.kernel.product_integral(&self.kernel, t.abs(), &self.quad)
    }

    /// `π^n((ε, ∞))`, the share of the increment energy beyond `ε`.
    pub fn pi_tail_mass(&self, n: u64, epsilon: f64) -> Result<f64> {
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig(format!("epsilon must be positive, got {epsilon}")));
        }
        let delta = 1.0 / n as f64;
        let g = &self.kernel;
        if epsilon >= g.horizon(self.quad.tail_tol).max(4.0 * delta) {
            return Ok(0.0);
        }
        let num = increment_product_from(g, g, delta, 0, epsilon, &self.quad)?;
        let den = self.increment_covariance(n, 0)?;
        Ok((num / den).clamp(0.0, 1.0))
    }
}

/// Two kernels driven by Brownian measures with correlation `rho`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BivariateKernelSpec {
    pub k1: KernelSpec,
    pub k2: KernelSpec,
    pub rho: f64,
}

impl BivariateKernelSpec {
    pub fn new(k1: KernelSpec, k2: KernelSpec, rho: f64) -> Result<Self> {
        let s = Self { k1, k2, rho };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidKernel(format!("rho = {} must lie in [-1, 1]", self.rho)));
        }
        self.k1.validate()?;
        self.k2.validate()
    }

    pub fn kernel(&self, i: usize) -> &KernelSpec {
        if i == 1 {
            &self.k1
        } else {
            &self.k2
        }
    }

    /// `ρ_{i,j}`: 1 on the diagonal and `rho` off it.
    pub fn rho_ij(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            self.rho
        }
    }

    /// `C_{i,j} = ‖g^i‖² + ‖g^j‖² - 2ρ_{ij} ∫ g^i g^j`.
    pub fn offset_constant(&self, i: usize, j: usize, quad: &QuadratureConfig) -> Result<f64> {
        check_index(i)?;
        check_index(j)?;
        let (gi, gj) = (self.kernel(i), self.kernel(j));
        Ok(gi.l2_norm_sq(quad)? + gj.l2_norm_sq(quad)?
            - 2.0 * self.rho_ij(i, j) * gi.product_integral(gj, 0.0, quad)?)
    }
}

fn check_index(i: usize) -> Result<()> {
    if i == 1 || i == 2 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("component index {i} must be 1 or 2")))
    }
}

/// `R^{(i,j)}(t) = E[(G_t^{(j)} - G_0^{(i)})^2]
///             = C_{i,j} + 2ρ_{i,j} ∫_0^∞ (g^j(x) - g^j(x+t)) g^i(x) dx`.
pub fn bivariate_variogram(
    spec: &BivariateKernelSpec,
    i: usize,
    j: usize,
    t: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    check_index(i)?;
    check_index(j)?;
    if t < 0.0 {
        return Err(Error::InvalidConfig(format!("t = {t} must be nonnegative")));
    }
    if i == j {
        return CovarianceModel::with_quadrature(spec.kernel(i).clone(), *quad).variogram(t);
    }
    let (gi, gj) = (spec.kernel(i), spec.kernel(j));
    let c = spec.offset_constant(i, j, quad)?;
    if t == 0.0 {
        return Ok(c);
    }
    let horizon = gi.horizon(quad.tail_tol).max(gj.horizon(quad.tail_tol));
    let panels = geometric_panels(t.min(horizon), horizon, 1);
    let integral = integrate_panels(&mut |x| (gj.eval(x) - gj.eval(x + t)) * gi.eval(x), &panels, quad)?;
    Ok(c + 2.0 * spec.rho_ij(i, j) * integral)
}

/// Lag correlations of the rescaled bivariate increments at frequency `n`.
///
/// `r(a, b, k) = E[X_i^{(a)} X_{i+k}^{(b)}]` for `|k| <= max_lag`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossLagTable {
    pub n: u64,
    pub max_lag: usize,
    pub tau: [f64; 2],
    auto: [Vec<f64>; 2],
    /// `r(1, 2, k)` stored at index `k + max_lag`.
    cross: Vec<f64>,
}

impl CrossLagTable {
    pub fn r(&self, a: usize, b: usize, k: i64) -> f64 {
        let l = self.max_lag as i64;
        assert!(k.abs() <= l, "lag {k} outside table range {l}");
        match (a, b) {
            (1, 1) => self.auto[0][k.unsigned_abs() as usize],
            (2, 2) => self.auto[1][k.unsigned_abs() as usize],
            (1, 2) => self.cross[(k + l) as usize],
            (2, 1) => self.cross[(-k + l) as usize],
            _ => panic!("component indices must be 1 or 2"),
        }
    }

    pub fn auto(&self, a: usize) -> &[f64] {
        &self.auto[a - 1]
    }

    /// `r_{1,2}(k)` for `k = -max_lag..=max_lag`.
    pub fn cross(&self) -> &[f64] {
        &self.cross
    }

    /// 2×2 block `C(k)[a][b] = r(a+1, b+1, k)`.
    pub fn block(&self, k: i64) -> [[f64; 2]; 2] {
        [[self.r(1, 1, k), self.r(1, 2, k)], [self.r(2, 1, k), self.r(2, 2, k)]]
    }
}

/// Bivariate covariance model with cached lag tables.
#[derive(Debug, Clone)]
pub struct BivariateModel {
    spec: BivariateKernelSpec,
    marginals: [CovarianceModel; 2],
    quad: QuadratureConfig,
    cache: Arc<RwLock<HashMap<u64, Arc<CrossLagTable>>>>,
}

impl BivariateModel {
    pub fn new(spec: BivariateKernelSpec) -> Self {
        Self::with_quadrature(spec, QuadratureConfig::default())
    }

    pub fn with_quadrature(spec: BivariateKernelSpec, quad: QuadratureConfig) -> Self {
        let marginals = [
            CovarianceModel::with_quadrature(spec.k1.clone(), quad),
            CovarianceModel::with_quadrature(spec.k2.clone(), quad),
        ];
        Self { spec, marginals, quad, cache: Arc::new(RwLock::new(HashMap::new())) }
    }

    pub fn spec(&self) -> &BivariateKernelSpec {
        &self.spec
    }

    pub fn marginal(&self, i: usize) -> &CovarianceModel {
        &self.marginals[i - 1]
    }

    pub fn quadrature(&self) -> &QuadratureConfig {
        &self.quad
    }

    pub fn taus(&self, n: u64) -> Result<[f64; 2]> {
        Ok([self.marginals[0].scaling_tau(n)?, self.marginals[1].scaling_tau(n)?])
    }

    /// Cross-lag correlation table `r_{a,b}^{(n)}(k)`, `|k| <= max_lag`.
    pub fn cross_lag_correlations(&self, n: u64, max_lag: usize) -> Result<Arc<CrossLagTable>> {
        if let Some(t) = self.cache.read().get(&n) {
            if t.max_lag >= max_lag {
                return Ok(if t.max_lag == max_lag { t.clone() } else { Arc::new(truncate_table(t, max_lag)) });
            }
        }
        let auto1 = self.marginals[0].lag_correlations(n, max_lag)?;
        let auto2 = if self.spec.k1 == self.spec.k2 {
            auto1.clone()
        } else {
            self.marginals[1].lag_correlations(n, max_lag)?
        };
        let tau = self.taus(n)?;
        let delta = 1.0 / n as f64;
        let rho = self.spec.rho;
        let (g1, g2) = (&self.spec.k1, &self.spec.k2);
        let l = max_lag as i64;
        let cross: Vec<f64> = (-l..=l)
            .into_par_iter()
            .map(|k| {
                if rho == 0.0 {
                    return Ok(0.0);
                }
                let raw = if k >= 0 {
                    increment_product(g1, g2, delta, k as u64, &self.quad)?
                } else {
                    increment_product(g2, g1, delta, (-k) as u64, &self.quad)?
                };
                Ok(rho * raw / (tau[0] * tau[1]))
            })
            .collect::<Result<_>>()?;
        let table = Arc::new(CrossLagTable { n, max_lag, tau, auto: [auto1, auto2], cross });
        self.cache.write().insert(n, table.clone());
        Ok(table)
    }
}

fn truncate_table(t: &CrossLagTable, max_lag: usize) -> CrossLagTable {
    let off = t.max_lag - max_lag;
    CrossLagTable {
        n: t.n,
        max_lag,
        tau: t.tau,
        auto: [t.auto[0][..=max_lag].to_vec(), t.auto[1][..=max_lag].to_vec()],
        cross: t.cross[off..off + 2 * max_lag + 1].to_vec(),
    }
}

/// Writes a lag table as CSV with columns `lag,r`.
pub fn write_lag_table<W: std::io::Write>(writer: W, table: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lag", "r"])?;
    for (j, r) in table.iter().enumerate() {
        w.write_record([j.to_string(), format!("{r:.17e}")])?;
    }
    w.flush()?;
    Ok(())
}
