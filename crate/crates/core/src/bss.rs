//! Brownian semistationary paths `X_t = ∫_{-∞}^t g(t-s) σ_s dW_s` on the
//! observation grid.
//!
//! Two constructions are available.
//!
//! * [`BssScheme::CoreModulated`] multiplies exact Gaussian-core increments by
//!   the left-endpoint volatility, `Δ_i X = σ_{(i-1)/n} Δ_i G`.
//! * [`BssScheme::Hybrid`] discretises the moving average on a refined grid of
//!   step `h = 1/(refine·n)`. The cell next to the evaluation time is
//!   integrated exactly against the power part of the kernel,
//!   `∫ (t-s)^α dW_s`; older cells use `g(b_k h) ΔW` with the
//!   mean-square optimal points `b_k = ((k^{α+1} - (k-1)^{α+1}) / (α+1))^{1/α}`.
//!   The sum is truncated at a horizon `M` and evaluated with an FFT.
//!
//! Volatility is piecewise constant between observation times; before time 0
//! it is frozen at `σ_0`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian_sim::{grid_len, GaussianCorePath};
use crate::kernels::{CovarianceModel, KernelFamily, KernelSpec};
use crate::quadrature::QuadratureConfig;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BssScheme {
    CoreModulated,
    Hybrid,
}

/// Settings of the hybrid discretisation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridConfig {
    /// Cells per observation interval.
    pub refine: usize,
    /// Truncation horizon in time units; `None` picks `10/λ` for gamma kernels
    /// and a tail-energy horizon for power-law kernels.
    pub truncation: Option<f64>,
    /// Largest admissible neglected energy `∫_M^∞ g²`, relative to `∫ g²`.
    pub tail_tolerance: f64,
}

impl Default for HybridConfig {
    fn default() -> Self {
        Self { refine: 8, truncation: None, tail_tolerance: 1e-6 }
    }
}

/// A simulated BSS path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BssPath {
    pub n: u64,
    pub horizon: f64,
    pub seed: u64,
    pub replicate: u64,
    pub scheme: BssScheme,
    /// `τ_n` per component.
    pub taus: Vec<f64>,
    /// Unscaled increments `Δ_i^n X`, one row per component.
    pub increments: Vec<Vec<f64>>,
    /// Grid values `X_{i/n}`, `i = 0..=m`; the core-modulated scheme sets `X_0 = 0`.
    pub values: Vec<Vec<f64>>,
    pub refine: usize,
    pub truncation: f64,
}

impl BssPath {
    pub fn dim(&self) -> usize {
        self.increments.len()
    }

    /// Writes `i,t,x1[,x2]` rows of grid values.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["i".to_string(), "t".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.values[0].len() {
            let mut row = vec![i.to_string(), format!("{}", i as f64 / self.n as f64)];
            row.extend(self.values.iter().map(|r| format!("{:.17e}", r[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn cumulative(start: f64, inc: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(inc.len() + 1);
    let mut acc = start;
    out.push(acc);
    for &d in inc {
        acc += d;
        out.push(acc);
    }
    out
}

/// `Δ_i X = σ_{(i-1)/n} τ_n x_i` from exact core increments.
pub fn modulate_core(core: &GaussianCorePath, sigmas: &[&[f64]]) -> Result<BssPath> {
    if sigmas.len() != core.dim() {
        return Err(Error::LengthMismatch(sigmas.len(), core.dim()));
    }
    let m = core.len();
    let mut increments = Vec::with_capacity(core.dim());
    for ((row, &tau), sigma) in core.increments.iter().zip(&core.taus).zip(sigmas) {
        if sigma.len() < m {
            return Err(Error::LengthMismatch(sigma.len(), m));
        }
        increments.push(row.iter().zip(sigma.iter()).map(|(&x, &s)| s * (tau * x)).collect::<Vec<f64>>());
    }
    let values = increments.iter().map(|r| cumulative(0.0, r)).collect();
    Ok(BssPath {
        n: core.n,
        horizon: core.horizon,
        seed: core.seed,
        replicate: core.replicate,
        scheme: BssScheme::CoreModulated,
        taus: core.taus.clone(),
        increments,
        values,
        refine: 1,
        truncation: f64::INFINITY,
    })
}

/// Precomputed hybrid-scheme sampler for one or two components.
#[derive(Clone)]
pub struct HybridSampler {
    kernels: Vec<KernelSpec>,
    n: u64,
    horizon: f64,
    m: usize,
    refine: usize,
    /// Number of cells in the truncation window.
    window: usize,
    truncation: f64,
    /// `L_g(h)` per component, weight of the exact near-cell integral.
    near_weight: Vec<f64>,
    /// `g(b_k h)` for `k = 0..=window` (entries 0 and 1 are zero), per component.
    far_weights: Vec<Vec<f64>>,
    /// Cholesky factor of the per-cell vector `(ΔW^1, I^1[, ΔW^2, I^2])`.
    cell_factor: DMatrix<f64>,
    cell_cov: DMatrix<f64>,
    taus: Vec<f64>,
    fft_fwd: Arc<dyn Fft<f64>>,
    fft_inv: Arc<dyn Fft<f64>>,
    weight_spectra: Vec<Vec<Complex64>>,
}

impl std::fmt::Debug for HybridSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HybridSampler")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("refine", &self.refine)
            .field("window", &self.window)
            .finish()
    }
}

/// Mean-square optimal evaluation point for cell `k >= 2`, in units of `h`.
pub fn optimal_point(alpha: f64, k: usize) -> f64 {
    let kf = k as f64;
    ((kf.powf(alpha + 1.0) - (kf - 1.0).powf(alpha + 1.0)) / (alpha + 1.0)).powf(1.0 / alpha)
}

/// Default truncation horizon for a kernel.
pub fn default_truncation(kernel: &KernelSpec, tail_tolerance: f64) -> Result<f64> {
    match kernel.family {
        KernelFamily::Gamma => Ok(10.0 / kernel.lambda),
        KernelFamily::PowerLaw => {
            let norm = kernel.l2_norm_sq(&QuadratureConfig::default())?;
            Ok(kernel.horizon(tail_tolerance * norm))
        }
    }
}

/// `∫_M^∞ g(x)^2 dx`.
pub fn tail_energy(kernel: &KernelSpec, horizon: f64) -> Result<f64> {
    let quad = QuadratureConfig::default();
    let far = kernel.horizon(quad.tail_tol).max(2.0 * horizon);
    if horizon >= far {
        return Ok(0.0);
    }
    let panels: Vec<_> =
        crate::quadrature::geometric_panels(horizon, far, 0).into_iter().filter(|p| p.0 >= horizon).collect();
    crate::quadrature::integrate_panels(&mut |x| kernel.eval(x).powi(2), &panels, &quad)
}

impl HybridSampler {
    pub fn univariate(kernel: &KernelSpec, n: u64, horizon: f64, cfg: &HybridConfig) -> Result<Self> {
        Self::new(vec![kernel.clone()], 0.0, n, horizon, cfg)
    }

    pub fn bivariate(
        k1: &KernelSpec,
        k2: &KernelSpec,
        rho: f64,
        n: u64,
        horizon: f64,
        cfg: &HybridConfig,
    ) -> Result<Self> {
        Self::new(vec![k1.clone(), k2.clone()], rho, n, horizon, cfg)
    }

    fn new(kernels: Vec<KernelSpec>, rho: f64, n: u64, horizon: f64, cfg: &HybridConfig) -> Result<Self> {
        if cfg.refine == 0 {
            return Err(Error::InvalidConfig("refine must be positive".into()));
        }
        if !(-1.0..=1.0).contains(&rho) {
            return Err(Error::InvalidConfig(format!("rho = {rho} outside [-1, 1]")));
        }
        let m = grid_len(n, horizon)?;
        let h = 1.0 / (cfg.refine as f64 * n as f64);
        let mut truncation = 0.0f64;
        for k in &kernels {
            let t = match cfg.truncation {
                Some(t) => t,
                None => default_truncation(k, cfg.tail_tolerance)?,
            };
            let energy = tail_energy(k, t)?;
            let budget = cfg.tail_tolerance * k.l2_norm_sq(&QuadratureConfig::default())?;
            if energy > budget {
                return Err(Error::TruncationBudget { energy, horizon: t, budget });
            }
            truncation = truncation.max(t);
        }
        let window = ((truncation / h).ceil() as usize).max(2);
        let near_weight: Vec<f64> = kernels.iter().map(|k| k.slowly_varying_factor(h)).collect();
        let far_weights: Vec<Vec<f64>> = kernels
            .iter()
            .map(|k| (0..=window).map(|j| if j < 2 { 0.0 } else { k.eval(optimal_point(k.alpha, j) * h) }).collect())
            .collect();
        let d = kernels.len();
        let alphas: Vec<f64> = kernels.iter().map(|k| k.alpha).collect();
        let cell_cov = DMatrix::from_fn(2 * d, 2 * d, |p, q| {
            let (a, kind_p) = (p / 2, p % 2);
            let (b, kind_q) = (q / 2, q % 2);
            let corr = if a == b { 1.0 } else { rho };
            // exponent of (t-s) carried by each entry: 0 for ΔW, α for I
            let ep = if kind_p == 0 { 0.0 } else { alphas[a] };
            let eq = if kind_q == 0 { 0.0 } else { alphas[b] };
            corr * h.powf(ep + eq + 1.0) / (ep + eq + 1.0)
        });
        let cell_factor = cell_factor(&cell_cov)?;
        let len = 2 * window + m * cfg.refine + 1;
        let mut planner = FftPlanner::new();
        let fft_fwd = planner.plan_fft_forward(len);
        let fft_inv = planner.plan_fft_inverse(len);
        let weight_spectra = far_weights
            .iter()
            .map(|w| {
                let mut buf: Vec<Complex64> =
                    (0..len).map(|i| Complex64::new(w.get(i).copied().unwrap_or(0.0), 0.0)).collect();
                fft_fwd.process(&mut buf);
                buf
            })
            .collect();
        let taus = kernels.iter().map(|k| CovarianceModel::new(k.clone()).scaling_tau(n)).collect::<Result<_>>()?;
        Ok(Self {
            kernels,
            n,
            horizon,
            m,
            refine: cfg.refine,
            window,
            truncation,
            near_weight,
            far_weights,
            cell_factor,
            cell_cov,
            taus,
            fft_fwd,
            fft_inv,
            weight_spectra,
        })
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    /// One path with volatility grids `sigmas[a][i] = σ^a_{i/n}`.
    pub fn sample(&self, seed: u64, replicate: u64, sigmas: &[&[f64]]) -> Result<BssPath> {
        let d = self.kernels.len();
        if sigmas.len() != d {
            return Err(Error::LengthMismatch(sigmas.len(), d));
        }
        for s in sigmas {
            if s.len() < self.m {
                return Err(Error::LengthMismatch(s.len(), self.m));
            }
        }
        let cells = self.window + self.m * self.refine;
        let mut r = rng::stream(seed, replicate, rng::CORE);
        // per component: σ·ΔW and σ·I for every cell, oldest first
        let mut u = vec![vec![0.0; cells]; d];
        let mut v = vec![vec![0.0; cells]; d];
        let mut z = vec![0.0; 2 * d];
        for c in 0..cells {
            for zi in z.iter_mut() {
                *zi = StandardNormal.sample(&mut r);
            }
            let obs = c.checked_sub(self.window).map(|k| k / self.refine);
            for a in 0..d {
                let sigma = sigmas[a][obs.unwrap_or(0)];
                let (mut dw, mut int) = (0.0, 0.0);
                for (j, zj) in z.iter().enumerate() {
                    dw += self.cell_factor[(2 * a, j)] * zj;
                    int += self.cell_factor[(2 * a + 1, j)] * zj;
                }
                u[a][c] = sigma * dw;
                v[a][c] = sigma * int;
            }
        }
        let mut values = Vec::with_capacity(d);
        for a in 0..d {
            let far = self.convolve(a, &u[a]);
            // cell index of time j·h is window + j; the near cell is the one before it
            let row: Vec<f64> = (0..=self.m)
                .map(|i| {
                    let j = self.window + i * self.refine;
                    far[j] + self.near_weight[a] * v[a][j - 1]
                })
                .collect();
            values.push(row);
        }
        let increments = values.iter().map(|r| r.windows(2).map(|w| w[1] - w[0]).collect()).collect();
        Ok(BssPath {
            n: self.n,
            horizon: self.horizon,
            seed,
            replicate,
            scheme: BssScheme::Hybrid,
            taus: self.taus.clone(),
            increments,
            values,
            refine: self.refine,
            truncation: self.truncation,
        })
    }

    /// The discretised Gaussian core on the same driver, `σ ≡ 1`.
    pub fn sample_core(&self, seed: u64, replicate: u64) -> Result<BssPath> {
        let ones = vec![1.0; self.m + 1];
        let rows: Vec<&[f64]> = self.kernels.iter().map(|_| ones.as_slice()).collect();
        self.sample(seed, replicate, &rows)
    }

    /// `y_j = Σ_{k=2}^{window} w_k u_{j-k}` for every cell index `j`.
    fn convolve(&self, a: usize, u: &[f64]) -> Vec<f64> {
        let len = self.weight_spectra[a].len();
        let mut buf: Vec<Complex64> = (0..len).map(|i| Complex64::new(u.get(i).copied().unwrap_or(0.0), 0.0)).collect();
        self.fft_fwd.process(&mut buf);
        for (b, w) in buf.iter_mut().zip(&self.weight_spectra[a]) {
            *b *= w;
        }
        self.fft_inv.process(&mut buf);
        let scale = 1.0 / len as f64;
        buf.iter().take(u.len() + 1).map(|c| c.re * scale).collect()
    }

    /// Exact `Var(Δ_i^n X)` of the discretised univariate scheme with `σ ≡ 1`.
    pub fn discretized_increment_variance(&self, component: usize) -> f64 {
        let (a, _) = (component, ());
        let w = &self.far_weights[a];
        let r = self.refine;
        let lg = self.near_weight[a];
        let weight = |k: usize| -> f64 { w.get(k).copied().unwrap_or(0.0) };
        let s = &self.cell_cov;
        let (sww, swi, sii) = (s[(2 * a, 2 * a)], s[(2 * a, 2 * a + 1)], s[(2 * a + 1, 2 * a + 1)]);
        let mut total = 0.0;
        // cell at distance k before the later time contributes (w_k - w_{k-r}, L(1{k=1} - 1{k=r+1}))
        for k in 1..=self.window + r {
            let cw = weight(k) - if k > r { weight(k - r) } else { 0.0 };
            let ci = lg * (f64::from(k == 1) - f64::from(k == r + 1));
            total += cw * cw * sww + 2.0 * cw * ci * swi + ci * ci * sii;
        }
        total
    }

    /// Exact `Σ_k (σ_cell - σ_{(i-1)/n})² Var(cell contribution)` summed as
    /// `(1/√n) Σ_i E[|Δ_i X - σ_{(i-1)/n} Δ_i G|²]^{1/2} / τ_n` for a
    /// deterministic volatility grid, where `G` is the discretised core on the
    /// same driver.
    pub fn modulation_error(&self, sigma: &[f64]) -> Result<f64> {
        if self.kernels.len() != 1 {
            return Err(Error::InvalidConfig("modulation error is defined for one component".into()));
        }
        if sigma.len() < self.m {
            return Err(Error::LengthMismatch(sigma.len(), self.m));
        }
        let w = &self.far_weights[0];
        let r = self.refine;
        let lg = self.near_weight[0];
        let s = &self.cell_cov;
        let (sww, swi, sii) = (s[(0, 0)], s[(0, 1)], s[(1, 1)]);
        let weight = |k: usize| -> f64 { w.get(k).copied().unwrap_or(0.0) };
        // energy of the increment's dependence on each observation-lag block
        let blocks = (self.window + r).div_ceil(r) + 1;
        let mut block_energy = vec![0.0; blocks];
        for k in 1..=self.window + r {
            let cw = weight(k) - if k > r { weight(k - r) } else { 0.0 };
            let ci = lg * (f64::from(k == 1) - f64::from(k == r + 1));
            block_energy[(k - 1) / r] += cw * cw * sww + 2.0 * cw * ci * swi + ci * ci * sii;
        }
        let tau = self.taus[0];
        let mut total = 0.0;
        for i in 1..=self.m {
            let now = sigma[i - 1];
            let mut e = 0.0;
            for (l, be) in block_energy.iter().enumerate() {
                // block l holds the cells of observation interval i-1-l (σ_0 before time 0)
                let idx = (i - 1).saturating_sub(l);
                let d = sigma[idx] - now;
                e += d * d * be;
            }
            total += e.sqrt() / tau;
        }
        Ok(total / (self.n as f64).sqrt())
    }
}

fn cell_factor(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    let eig = cov.clone().symmetric_eigen();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if min < -1e-10 * max {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let k = cov.nrows();
    let sqrt = DMatrix::from_fn(k, k, |i, j| if i == j { eig.eigenvalues[i].max(0.0).sqrt() } else { 0.0 });
    Ok(&eig.eigenvectors * sqrt)
}

/// Hybrid-scheme refinement audit: discretised increment variance relative to
/// `R(1/n)` at `refine` and at `2·refine`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefinementAudit {
    pub ratio: f64,
    pub ratio_refined: f64,
    pub difference: f64,
}

pub fn refinement_audit(kernel: &KernelSpec, n: u64, cfg: &HybridConfig) -> Result<RefinementAudit> {
    let r = CovarianceModel::new(kernel.clone()).variogram(1.0 / n as f64)?;
    let a = HybridSampler::univariate(kernel, n, 2.0 / n as f64, cfg)?.discretized_increment_variance(0) / r;
    let finer = HybridConfig { refine: 2 * cfg.refine, ..*cfg };
    let b = HybridSampler::univariate(kernel, n, 2.0 / n as f64, &finer)?.discretized_increment_variance(0) / r;
    Ok(RefinementAudit { ratio: a, ratio_refined: b, difference: (a - b).abs() })
}

/// `F = σ_max² ∫_1^∞ g'(s)² ds`, an upper bound for `∫_1^∞ g'(s)² σ²_{t-s} ds`.
pub fn smoothness_bound(kernel: &KernelSpec, sigma_bound: f64) -> Result<f64> {
    let quad = QuadratureConfig::default();
    let far = kernel.horizon(quad.tail_tol).max(2.0);
    let panels: Vec<_> = crate::quadrature::geometric_panels(1.0, far, 0).into_iter().filter(|p| p.0 >= 1.0).collect();
    let integral = crate::quadrature::integrate_panels(&mut |x| kernel.derivative(x).powi(2), &panels, &quad)?;
    Ok(sigma_bound * sigma_bound * integral)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian_sim::IncrementSampler;

    fn gamma() -> KernelSpec {
        KernelSpec::gamma(-0.25, 1.0).unwrap()
    }

    #[test]
    fn optimal_points_lie_in_their_cells() {
        for k in 2..50 {
            let b = optimal_point(-0.25, k);
            assert!(b > (k - 1) as f64 && b < k as f64, "{k}: {b}");
        }
    }

    #[test]
    fn modulation_is_elementwise() {
        let model = CovarianceModel::new(gamma());
        let core = IncrementSampler::univariate(&model, 16, 1.0).unwrap().sample(1, 0);
        let sigma = vec![2.0; 17];
        let path = modulate_core(&core, &[&sigma]).unwrap();
        for (dx, x) in path.increments[0].iter().zip(&core.increments[0]) {
            assert_eq!(*dx, 2.0 * (core.taus[0] * x));
        }
        assert_eq!(path.values[0][0], 0.0);
        let ones = vec![1.0; 17];
        let unit = modulate_core(&core, &[&ones]).unwrap();
        for (dx, x) in unit.increments[0].iter().zip(&core.increments[0]) {
            assert_eq!(*dx, core.taus[0] * x);
        }
    }

    #[test]
    fn unit_volatility_reproduces_discretized_core() {
        let cfg = HybridConfig { refine: 4, truncation: Some(4.0), tail_tolerance: 1e-3 };
        let s = HybridSampler::univariate(&gamma(), 32, 1.0, &cfg).unwrap();
        let ones = vec![1.0; 33];
        let a = s.sample(5, 0, &[&ones]).unwrap();
        let b = s.sample_core(5, 0).unwrap();
        assert_eq!(a.increments, b.increments);
        let twos = vec![2.0; 33];
        let c = s.sample(5, 0, &[&twos]).unwrap();
        for (x, y) in a.increments[0].iter().zip(&c.increments[0]) {
            assert!((2.0 * x - y).abs() < 1e-12 * (1.0 + y.abs()));
        }
    }

    #[test]
    fn truncation_budget_enforced() {
        let cfg = HybridConfig { refine: 2, truncation: Some(0.05), tail_tolerance: 1e-6 };
        assert!(matches!(HybridSampler::univariate(&gamma(), 32, 1.0, &cfg), Err(Error::TruncationBudget { .. })));
    }

    #[test]
    fn discretized_variance_close_to_variogram() {
        let audit = refinement_audit(&gamma(), 256, &HybridConfig::default()).unwrap();
        assert!((audit.ratio - 1.0).abs() < 0.02, "{audit:?}");
        assert!((audit.ratio_refined - 1.0).abs() <= (audit.ratio - 1.0).abs() + 1e-3, "{audit:?}");
    }

    #[test]
    fn discretized_variance_matches_monte_carlo() {
        let cfg = HybridConfig { refine: 4, truncation: Some(6.0), tail_tolerance: 1e-4 };
        let n = 64;
        let s = HybridSampler::univariate(&gamma(), n, 1.0, &cfg).unwrap();
        let exact = s.discretized_increment_variance(0);
        let ones = vec![1.0; n as usize + 1];
        let reps = 400;
        let mut acc = Vec::new();
        for rep in 0..reps {
            let p = s.sample(17, rep, &[&ones]).unwrap();
            acc.extend(p.increments[0].iter().map(|x| x * x));
        }
        let mean = acc.iter().sum::<f64>() / acc.len() as f64;
        // the squares within a path are correlated; per-path means give an honest SE
        let per_path: Vec<f64> = acc.chunks(n as usize).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        let mu = per_path.iter().sum::<f64>() / reps as f64;
        let var = per_path.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (reps as f64 - 1.0);
        let se = (var / reps as f64).sqrt();
        assert!((mean - exact).abs() < 4.0 * se, "{mean} vs {exact} (se {se})");
    }

    #[test]
    fn modulation_error_decreases_with_n() {
        let spec = crate::volatility::VolatilitySpec::sinusoidal(1.0, 0.5, 2.0 * std::f64::consts::PI);
        let cfg = HybridConfig { refine: 2, truncation: Some(10.0), tail_tolerance: 1e-6 };
        let mut prev = f64::INFINITY;
        for n in [256u64, 1024, 4096] {
            let s = HybridSampler::univariate(&gamma(), n, 1.0, &cfg).unwrap();
            let sigma = crate::volatility::sample_volatility(&spec, n, 1.0, 0, 0, rng::VOL1).unwrap();
            let e = s.modulation_error(&sigma).unwrap();
            assert!(e < prev, "n={n}: {e} >= {prev}");
            prev = e;
        }
    }

    #[test]
    fn smoothness_bound_is_finite() {
        let f = smoothness_bound(&gamma(), 2.0).unwrap();
        // ∫_1^∞ x^{2α}(α/x - 1)^2 e^{-2x} dx for α = -1/4, bracketed crudely
        assert!(f.is_finite() && f > 0.0 && f < 4.0 * 0.5 * (-2.0f64).exp() * 1.6, "{f}");
        let p = KernelSpec::power_law(-0.25, 1.0).unwrap();
        assert!(smoothness_bound(&p, 1.0).unwrap().is_finite());
    }

    #[test]
    fn bivariate_hybrid_runs() {
        let cfg = HybridConfig { refine: 2, truncation: Some(5.0), tail_tolerance: 1e-3 };
        let k2 = KernelSpec::gamma(-0.25, 2.0).unwrap();
        let s = HybridSampler::bivariate(&gamma(), &k2, 0.5, 32, 1.0, &cfg).unwrap();
        let ones = vec![1.0; 33];
        let p = s.sample(1, 0, &[&ones, &ones]).unwrap();
        assert_eq!(p.increments.len(), 2);
        assert_eq!(p.values[1].len(), 33);
        assert!(p.increments[1].iter().all(|x| x.is_finite()));
    }
}
