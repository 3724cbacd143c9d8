//! Limit-law constants: the long-run variances `β`, the bivariate centering
//! `μ_n`, and the covariance between the core and the centred statistic.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hermite::{chaos_coefficients, chaos_lag_covariance, gauss2_expect, HermiteExpansion, ProductFunction};
use crate::kernels::{increment_product, rho_alpha, BivariateModel, CovarianceModel};
use crate::quadrature::NormalRule;

/// Summary written to JSON by the harness and the CLI.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaReport {
    pub beta: f64,
    pub tail_estimate: f64,
    #[serde(rename = "K", skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(rename = "J")]
    pub j_max: usize,
    pub alphas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_ref: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaUnivariate {
    pub beta: f64,
    pub alpha: f64,
    pub k_max: usize,
    pub j_max: usize,
    /// `k! a_k² (1 + 2 Σ_i ρ(i)^k)` for `k = 1..=K`.
    pub contributions: Vec<f64>,
    /// Bound on the neglected lags `i > J`.
    pub series_tail: f64,
    /// Bound on the neglected Hermite orders `k > K`.
    pub hermite_tail: f64,
    pub warning: Option<String>,
}

impl BetaUnivariate {
    pub fn tail_bound(&self) -> f64 {
        self.series_tail + self.hermite_tail
    }

    /// Partial sums over `k`.
    pub fn partial_sums(&self) -> Vec<f64> {
        self.contributions
            .iter()
            .scan(0.0, |acc, c| {
                *acc += c;
                Some(*acc)
            })
            .collect()
    }

    pub fn addends_nonnegative(&self) -> bool {
        self.contributions.iter().all(|&c| c >= 0.0)
    }

    pub fn report(&self) -> BetaReport {
        BetaReport {
            beta: self.beta,
            tail_estimate: self.tail_bound(),
            k_max: Some(self.k_max),
            j_max: self.j_max,
            alphas: vec![self.alpha],
            rho: None,
            n_ref: None,
        }
    }
}

const TAIL_TOLERANCE: f64 = 1e-6;

/// `β = Σ_{k=1}^K k! a_k² (1 + 2 Σ_{i=1}^J ρ_α(i)^k)`.
///
/// The `k = 1` inner sum telescopes to `-1/2`, so that order contributes
/// nothing. For `k >= 2` the lags beyond `J` are bounded with
/// `|ρ_α(i)| <= |α(2α+1)| (i-1)^{2α-1}`.
pub fn beta_univariate(expansion: &HermiteExpansion, alpha: f64, k_max: usize, j_max: usize) -> Result<BetaUnivariate> {
    if !(alpha > -0.5 && alpha < 0.0) {
        return Err(Error::InvalidConfig(format!("alpha = {alpha} outside (-1/2, 0)")));
    }
    if j_max < 2 {
        return Err(Error::InvalidConfig("J must be at least 2".into()));
    }
    let k_max = k_max.min(expansion.truncation);
    let mut power_sums = vec![0.0; k_max + 1];
    let mut abs_sq = 0.0;
    // smallest terms first
    for i in (1..=j_max as u64).rev() {
        let r = rho_alpha(alpha, i);
        abs_sq += r * r;
        let mut p = r;
        for s in power_sums.iter_mut().skip(2) {
            p *= r;
            *s += p;
        }
    }
    let c = (alpha * (2.0 * alpha + 1.0)).abs();
    let e = 2.0 * alpha - 1.0;
    let jm1 = (j_max - 1) as f64;
    let lag_tail = |k: usize| {
        let kf = k as f64;
        c.powf(kf) * jm1.powf(kf * e + 1.0) / (-kf * e - 1.0)
    };
    let mut contributions = Vec::with_capacity(k_max);
    let mut series_tail = 0.0;
    for k in 1..=k_max {
        let energy = expansion.energy(k);
        let factor = if k == 1 { 0.0 } else { 1.0 + 2.0 * power_sums[k] };
        contributions.push(energy * factor);
        if k >= 2 {
            series_tail += 2.0 * energy * lag_tail(k);
        }
    }
    let hermite_tail = expansion.residual_l2 * (1.0 + 2.0 * (abs_sq + lag_tail(2)));
    let beta: f64 = contributions.iter().sum();
    let warning = (series_tail > TAIL_TOLERANCE * beta.abs().max(1.0)).then(|| {
        let w = format!("lag tail bound {series_tail:e} exceeds tolerance; increase J");
        log::warn!("{w}");
        w
    });
    Ok(BetaUnivariate { beta, alpha, k_max, j_max, contributions, series_tail, hermite_tail, warning })
}

/// `Σ_k k! a_k² (1 + 2 Σ_{i=1}^{L} r(i)^k)` with a supplied lag sequence
/// `r(1..=L)`; the `k = 1` order uses its telescoped limit 0.
pub fn beta_from_lags(expansion: &HermiteExpansion, lags: &[f64], k_max: usize) -> f64 {
    let k_max = k_max.min(expansion.truncation);
    (2..=k_max)
        .map(|k| {
            let s: f64 = lags.iter().rev().map(|r| r.powi(k as i32)).sum();
            expansion.energy(k) * (1.0 + 2.0 * s)
        })
        .sum()
}

/// Exact `Var(√n (V_1^n - E f))` of the Gaussian core at frequency `n`:
/// `Σ_k k! a_k² Σ_{|j|<n} (1 - |j|/n) r_n(j)^k`. The first order uses
/// `Var(G_1 - G_0) / (n τ_n²)` directly.
pub fn finite_n_variance(expansion: &HermiteExpansion, model: &CovarianceModel, n: u64, k_max: usize) -> Result<f64> {
    let k_max = k_max.min(expansion.truncation);
    let lags = model.lag_correlations(n, (n - 1) as usize)?;
    let first = expansion.energy(1) * model.variogram(1.0)? / (n as f64 * model.variogram(1.0 / n as f64)?);
    let nf = n as f64;
    let higher: f64 = (2..=k_max)
        .map(|k| {
            let s: f64 =
                lags.iter().enumerate().skip(1).rev().map(|(j, r)| (1.0 - j as f64 / nf) * r.powi(k as i32)).sum();
            expansion.energy(k) * (1.0 + 2.0 * s)
        })
        .sum();
    Ok(first + higher)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    /// Long-run variance of the stationary sequence `h(X_k)`.
    #[default]
    Full,
    /// Independent pairs with no cross-time dependence: `β = Var h(Z_1, Z_2)`.
    IidCheck,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BivariateBetaSettings {
    pub n_ref: u64,
    pub lags: usize,
    pub chaos_order: usize,
    pub mode: BetaMode,
}

impl Default for BivariateBetaSettings {
    fn default() -> Self {
        Self { n_ref: 4096, lags: 2048, chaos_order: 30, mode: BetaMode::Full }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaBivariate {
    pub beta: f64,
    pub tail_estimate: f64,
    pub n_ref: u64,
    pub lags: usize,
    pub rho: f64,
    pub alphas: [f64; 2],
    /// `r_{1,2}^{(n_ref)}(0)`.
    pub rho_eff: f64,
    pub mean: f64,
    /// `Cov(h(X_0), h(X_k))` for `k = 0..=lags`.
    pub covariances: Vec<f64>,
    /// `Σ_{|k| ≤ min(lags, n_ref-1)} (1 - |k|/n_ref) Cov_k`, the finite-sample
    /// variance at `n_ref` restricted to the computed lags.
    pub finite_n_variance: f64,
    pub warning: Option<String>,
}

impl BetaBivariate {
    pub fn report(&self) -> BetaReport {
        BetaReport {
            beta: self.beta,
            tail_estimate: self.tail_estimate,
            k_max: None,
            j_max: self.lags,
            alphas: self.alphas.to_vec(),
            rho: Some(self.rho),
            n_ref: Some(self.n_ref),
        }
    }
}

/// Long-run variance `Σ_{|k| ≤ J} Cov(h(X_0), h(X_k))` of `h` applied to the
/// rescaled bivariate increments at frequency `n_ref`.
pub fn beta_bivariate(
    model: &BivariateModel,
    h: &ProductFunction,
    settings: &BivariateBetaSettings,
) -> Result<BetaBivariate> {
    let spec = model.spec();
    let alphas = [spec.k1.alpha, spec.k2.alpha];
    if settings.mode == BetaMode::IidCheck {
        let chaos = chaos_coefficients(h, 0.0, settings.chaos_order)?;
        return Ok(BetaBivariate {
            beta: chaos.variance,
            tail_estimate: 0.0,
            n_ref: settings.n_ref,
            lags: 0,
            rho: 0.0,
            alphas,
            rho_eff: 0.0,
            mean: chaos.mean,
            covariances: vec![chaos.variance],
            finite_n_variance: chaos.variance,
            warning: None,
        });
    }
    let table = model.cross_lag_correlations(settings.n_ref, settings.lags)?;
    let rho_eff = table.r(1, 2, 0);
    let chaos = chaos_coefficients(h, rho_eff, settings.chaos_order)?;
    let mut covariances = vec![chaos.variance];
    covariances.extend(
        (1..=settings.lags as i64)
            .into_par_iter()
            .map(|k| chaos_lag_covariance(&chaos, table.block(k)))
            .collect::<Vec<f64>>(),
    );
    let beta = covariances[0] + 2.0 * covariances[1..].iter().rev().sum::<f64>();
    let nf = settings.n_ref as f64;
    let fejer = covariances[0]
        + 2.0
            * covariances
                .iter()
                .enumerate()
                .skip(1)
                .take_while(|(k, _)| (*k as u64) < settings.n_ref)
                .map(|(k, c)| (1.0 - k as f64 / nf) * c)
                .sum::<f64>();
    let tail_estimate = lag_tail_estimate(&covariances);
    let warning = (tail_estimate > 0.01 * beta.abs()).then(|| {
        let w = format!("lag-{} tail estimate {tail_estimate:e} exceeds 1% of the partial sum", settings.lags);
        log::warn!("{w}");
        w
    });
    Ok(BetaBivariate {
        beta,
        tail_estimate,
        n_ref: settings.n_ref,
        lags: settings.lags,
        rho: spec.rho,
        alphas,
        rho_eff,
        mean: chaos.mean,
        covariances,
        finite_n_variance: fejer,
        warning,
    })
}

/// `2 Σ_{k>J} |Cov_k|` from a power-law fit of `|Cov_k|` over `k ∈ [J/4, J]`.
fn lag_tail_estimate(cov: &[f64]) -> f64 {
    let j = cov.len() - 1;
    if j < 8 {
        return f64::INFINITY;
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        (j / 4..=j).filter(|&k| cov[k] != 0.0).map(|k| ((k as f64).ln(), cov[k].abs().ln())).unzip();
    if xs.len() < 4 {
        return 0.0;
    }
    let (slope, intercept, _) = crate::stats::ols_slope(&xs, &ys);
    let p = -slope;
    if p <= 1.0 {
        return f64::INFINITY;
    }
    let jf = j as f64;
    2.0 * intercept.exp() * jf.powf(1.0 - p) / (p - 1.0)
}

/// `μ_n = E h(X)` for the standard pair with correlation `r_{1,2}^{(n)}(0)`.
pub fn mu_n(model: &BivariateModel, h: &ProductFunction, n: u64) -> Result<f64> {
    let rho = model.cross_lag_correlations(n, 0)?.r(1, 2, 0);
    h.mean(rho)
}

/// `μ_∞` from Aitken extrapolation of `r_{1,2}^{(n)}(0)` along a geometric
/// `n` grid, together with the extrapolated correlation.
pub fn mu_limit(model: &BivariateModel, h: &ProductFunction, n_grid: &[u64]) -> Result<(f64, f64)> {
    if n_grid.len() < 3 {
        return Err(Error::InvalidConfig("extrapolation needs at least three frequencies".into()));
    }
    let r: Vec<f64> =
        n_grid.iter().map(|&n| Ok(model.cross_lag_correlations(n, 0)?.r(1, 2, 0))).collect::<Result<_>>()?;
    let k = r.len();
    let (x0, x1, x2) = (r[k - 3], r[k - 2], r[k - 1]);
    let denom = (x2 - x1) - (x1 - x0);
    let limit = if denom.abs() > 1e-15 { x2 - (x2 - x1).powi(2) / denom } else { x2 };
    let limit = limit.clamp(-1.0, 1.0);
    Ok((h.mean(limit)?, limit))
}

/// `a_1 R(1) / √(n R(1/n))` with `a_1 = √(2/π)`, the covariance of `G_1 - G_0`
/// with `√n (V_1^n - 1/2)` for `f(x) = x² 1{x ≥ 0}`.
pub fn core_statistic_covariance(model: &CovarianceModel, n: u64) -> Result<f64> {
    core_statistic_covariance_at(model, (2.0 / PI).sqrt(), n, 1.0)
}

/// `a1 R(t) / √(n R(1/n))`: the covariance of `G_t - G_0` with the statistic
/// at time `t` for a function with first Hermite coefficient `a1`.
pub fn core_statistic_covariance_at(model: &CovarianceModel, a1: f64, n: u64, t: f64) -> Result<f64> {
    Ok(a1 * model.variogram(t)? / (n as f64 * model.variogram(1.0 / n as f64)?).sqrt())
}

/// `E[∇h(X)] = Σ⁻¹ E[X h(X)]` for the standard pair with correlation `rho`
/// (Gaussian integration by parts). For `|ρ| = 1` the pseudo-inverse splits
/// the gradient evenly.
pub fn stein_gradient(h: &ProductFunction, rho: f64) -> Result<[f64; 2]> {
    let cov = [[1.0, rho], [rho, 1.0]];
    let rule = NormalRule::accurate();
    let m1 = gauss2_expect(&mut |x, y| x * h.eval(x, y), [0.0; 2], cov, &rule)?;
    let m2 = gauss2_expect(&mut |x, y| y * h.eval(x, y), [0.0; 2], cov, &rule)?;
    let det = 1.0 - rho * rho;
    if det < 1e-12 {
        let s = 0.25 * (m1 + rho.signum() * m2);
        return Ok([s, rho.signum() * s]);
    }
    Ok([(m1 - rho * m2) / det, (m2 - rho * m1) / det])
}

/// `Cov(G_t^{(i)} - G_0^{(i)}, S_n(t))` for the bivariate statistic
/// `S_n(t) = √n (V_t^n - μ_n t)`:
/// `n^{-1/2} Σ_b E[∂_b h] Cov(G_t^{(i)} - G_0^{(i)}, G_t^{(b)} - G_0^{(b)}) / τ_n^{(b)}`.
pub fn bivariate_core_statistic_covariance(
    model: &BivariateModel,
    h: &ProductFunction,
    n: u64,
    component: usize,
    t: f64,
) -> Result<f64> {
    if component != 1 && component != 2 {
        return Err(Error::InvalidConfig(format!("component index {component} must be 1 or 2")));
    }
    let table = model.cross_lag_correlations(n, 0)?;
    let grad = stein_gradient(h, table.r(1, 2, 0))?;
    let spec = model.spec();
    let quad = model.quadrature();
    let mut total = 0.0;
    for b in 1..=2 {
        let cov = if b == component {
            model.marginal(b).variogram(t)?
        } else {
            spec.rho * increment_product(spec.kernel(component), spec.kernel(b), t, 0, quad)?
        };
        total += grad[b - 1] * cov / table.tau[b - 1];
    }
    Ok(total / (n as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LimitKind {
    ScaledBm,
    VolatilityModulated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Drift {
    /// `c(t) = rate · ∫ (σ¹σ²)^q`.
    Constant(f64),
    /// `μ_n` at the sampling frequency, with its extrapolated limit when known.
    NDependent { n: u64, mu_n: f64, limit: Option<f64> },
}

impl Drift {
    pub fn rate(&self) -> f64 {
        match *self {
            Drift::Constant(r) => r,
            Drift::NDependent { mu_n, .. } => mu_n,
        }
    }
}

/// `√β ∫_0^t (σ¹_s σ²_s)^q dB_s` with its centering.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLaw {
    pub kind: LimitKind,
    pub beta: f64,
    pub drift: Drift,
    pub sigma_functional: String,
}

impl LimitLaw {
    pub fn scaled_bm(beta: f64, drift: Drift) -> Self {
        Self { kind: LimitKind::ScaledBm, beta, drift, sigma_functional: "1".into() }
    }

    pub fn volatility_modulated(beta: f64, drift: Drift, sigma_functional: impl Into<String>) -> Self {
        Self { kind: LimitKind::VolatilityModulated, beta, drift, sigma_functional: sigma_functional.into() }
    }

    /// Variance of the limit at time `t` given `∫_0^t (σ¹σ²)^{2q} ds`
    /// (equal to `t` for unit volatility).
    pub fn variance(&self, integrated: f64) -> f64 {
        self.beta * integrated
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hermite::{expansion_coefficients, TestFunction};
    use crate::kernels::{BivariateKernelSpec, KernelSpec};

    fn upside() -> HermiteExpansion {
        expansion_coefficients(&TestFunction::upside_square(), 40).unwrap()
    }

    #[test]
    fn iid_mode_recovers_variance() {
        // with no lag dependence β = Σ k! a_k², i.e. the captured variance
        let e = upside();
        let b = beta_from_lags(&e, &[], 40) + e.energy(1);
        let captured: f64 = (1..=40).map(|k| e.energy(k)).sum();
        assert!((b - captured).abs() < 1e-14);
        assert!((captured + e.residual_l2 - 1.25).abs() < 1e-10);
    }

    #[test]
    fn beta_univariate_converges_and_is_positive() {
        let e = upside();
        let b = beta_univariate(&e, -0.25, 40, 1_000_000).unwrap();
        assert!(b.beta > 0.0 && b.beta.is_finite());
        assert!(b.warning.is_none(), "{:?}", b.warning);
        assert!(b.series_tail < 1e-8);
        assert_eq!(b.contributions[0], 0.0);
        if b.addends_nonnegative() {
            let ps = b.partial_sums();
            assert!(ps.windows(2).all(|w| w[1] >= w[0]));
        }
        // a shorter lag window changes the value by less than its bound
        let short = beta_univariate(&e, -0.25, 40, 10_000).unwrap();
        assert!((short.beta - b.beta).abs() <= short.series_tail + 1e-12, "{} vs {}", short.beta, b.beta);
        assert!(beta_univariate(&e, 0.25, 40, 100).is_err());
    }

    #[test]
    fn beta_univariate_matches_direct_lag_sum() {
        // oracle: plain double loop over the closed-form lag correlations
        let e = upside();
        let alpha = -0.25;
        let j = 20_000u64;
        let mut oracle = 0.0;
        for k in 2..=40usize {
            let mut s = 0.0;
            for i in 1..=j {
                let h = 2.0 * alpha + 1.0;
                let x = i as f64;
                let r = 0.5 * ((x - 1.0).powf(h) - 2.0 * x.powf(h) + (x + 1.0).powf(h));
                s += r.powi(k as i32);
            }
            oracle += e.energy(k) * (1.0 + 2.0 * s);
        }
        let b = beta_univariate(&e, alpha, 40, j as usize).unwrap();
        assert!((b.beta - oracle).abs() < 1e-9, "{} vs {oracle}", b.beta);
    }

    #[test]
    fn finite_n_first_order_matches_lag_sum() {
        let model = CovarianceModel::new(KernelSpec::gamma(-0.25, 1.0).unwrap());
        let n = 64u64;
        let lags = model.lag_correlations(n, (n - 1) as usize).unwrap();
        let direct: f64 =
            1.0 + 2.0 * lags.iter().enumerate().skip(1).map(|(j, r)| (1.0 - j as f64 / n as f64) * r).sum::<f64>();
        let closed = model.variogram(1.0).unwrap() / (n as f64 * model.variogram(1.0 / n as f64).unwrap());
        assert!((direct - closed).abs() < 1e-8, "{direct} vs {closed}");
    }

    #[test]
    fn mu_n_special_cases() {
        let h = ProductFunction::semicovariance();
        let k = KernelSpec::gamma(-0.25, 1.0).unwrap();
        let indep = BivariateModel::new(
            BivariateKernelSpec::new(k.clone(), KernelSpec::gamma(-0.25, 2.0).unwrap(), 0.0).unwrap(),
        );
        assert!((mu_n(&indep, &h, 256).unwrap() - 1.0 / (2.0 * PI)).abs() < 1e-12);
        let same = BivariateModel::new(BivariateKernelSpec::new(k.clone(), k, 1.0).unwrap());
        assert!((mu_n(&same, &h, 256).unwrap() - 0.5).abs() < 1e-9);
    }

    #[test]
    fn core_statistic_covariance_decreases() {
        let model = CovarianceModel::new(KernelSpec::gamma(-0.25, 1.0).unwrap());
        let ns: Vec<u64> = (6..=14).map(|p| 1u64 << p).collect();
        let vals: Vec<f64> = ns.iter().map(|&n| core_statistic_covariance(&model, n).unwrap()).collect();
        assert!(vals.iter().all(|&v| v > 0.0));
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
        let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
        let ys: Vec<f64> = vals.iter().map(|v| v.ln()).collect();
        let (slope, _, _) = crate::stats::ols_slope(&xs, &ys);
        assert!((slope + 0.25).abs() < 0.05, "{slope}");
    }

    #[test]
    fn stein_gradient_of_positive_parts() {
        // E[∂_1 h] = E[1{X>0} Y⁺], checked against 2-D quadrature
        let h = ProductFunction::semicovariance();
        for rho in [0.0, 0.5, -0.3] {
            let g = stein_gradient(&h, rho).unwrap();
            let cov = [[1.0, rho], [rho, 1.0]];
            let direct = gauss2_expect(
                &mut |x, y| if x > 0.0 { y.max(0.0) } else { 0.0 },
                [0.0; 2],
                cov,
                &NormalRule::accurate(),
            )
            .unwrap();
            assert!((g[0] - direct).abs() < 1e-9, "{rho}: {} vs {direct}", g[0]);
            assert!((g[0] - g[1]).abs() < 1e-9);
        }
        let g = stein_gradient(&h, 0.0).unwrap();
        assert!((g[0] - 0.5 / (2.0 * PI).sqrt()).abs() < 1e-10);
    }

    #[test]
    fn bivariate_iid_beta() {
        let k = KernelSpec::gamma(-0.25, 1.0).unwrap();
        let model = BivariateModel::new(BivariateKernelSpec::new(k.clone(), k, 0.5).unwrap());
        let s = BivariateBetaSettings { mode: BetaMode::IidCheck, ..Default::default() };
        let b = beta_bivariate(&model, &ProductFunction::semicovariance(), &s).unwrap();
        assert!((b.beta - (0.25 - 1.0 / (4.0 * PI * PI))).abs() < 1e-6, "{}", b.beta);
        let json = serde_json::to_value(b.report()).unwrap();
        assert!(json.get("beta").is_some() && json.get("J").is_some());
    }

    #[test]
    fn degenerate_pair_matches_univariate_lag_sum() {
        let k = KernelSpec::gamma(-0.25, 1.0).unwrap();
        let model = BivariateModel::new(BivariateKernelSpec::new(k.clone(), k.clone(), 1.0).unwrap());
        let s = BivariateBetaSettings { n_ref: 1024, lags: 256, chaos_order: 30, mode: BetaMode::Full };
        let b = beta_bivariate(&model, &ProductFunction::semicovariance(), &s).unwrap();
        // h(x, x) = x² 1{x ≥ 0}: same lag covariances as the univariate series
        let e = upside();
        let uni = CovarianceModel::new(k);
        let lags = uni.lag_correlations(1024, 256).unwrap();
        let oracle = e.energy(1) * (1.0 + 2.0 * lags[1..].iter().sum::<f64>()) + beta_from_lags(&e, &lags[1..], 40);
        assert!((b.beta - oracle).abs() < 2e-3 * oracle, "{} vs {oracle}", b.beta);
    }
}
