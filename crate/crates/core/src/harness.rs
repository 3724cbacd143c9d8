//! Configuration-driven Monte Carlo experiments.
//!
//! Every experiment draws `M` replicates per sampling frequency, each from its
//! own RNG stream keyed by `(seed, replicate, component)`, and reduces the
//! per-replicate statistics in replicate order. Reports therefore do not
//! depend on the number of worker threads.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::asymptotics::{
    beta_bivariate, beta_univariate, bivariate_core_statistic_covariance, core_statistic_covariance_at,
    finite_n_variance, mu_limit, BetaBivariate, BetaMode, BetaReport, BetaUnivariate, BivariateBetaSettings, Drift,
    LimitLaw,
};
use crate::bss::{modulate_core, smoothness_bound, BssPath, BssScheme, HybridConfig, HybridSampler};
use crate::error::{Error, Result};
use crate::estimators::{product_covariation, univariate_functional, SemicovSeries};
use crate::gaussian_sim::{grid_len, IncrementSampler};
use crate::hermite::{expansion_coefficients, HermiteExpansion, Indicator, ProductFunction, TestFunction};
use crate::kernels::{
    bivariate_variogram, rho_alpha, BivariateKernelSpec, BivariateModel, CovarianceModel, KernelSpec,
};
use crate::rng;
use crate::stats;
use crate::volatility::{VolatilitySampler, VolatilitySpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Wlln,
    UnivariateClt,
    BivariateClt,
    GeneralisedClt,
    IndependenceDiagnostic,
    AssumptionAudit,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Wlln => "wlln",
            Experiment::UnivariateClt => "univariate-clt",
            Experiment::BivariateClt => "bivariate-clt",
            Experiment::GeneralisedClt => "generalised-clt",
            Experiment::IndependenceDiagnostic => "independence-diagnostic",
            Experiment::AssumptionAudit => "assumption-audit",
        }
    }
}

/// Where increments come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PathMode {
    /// Exact Gaussian-core increments, `σ ≡ 1`.
    #[default]
    GaussianCore,
    /// BSS paths with the configured volatility.
    Bss,
}

/// How a product functional pairs its two arguments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairMode {
    #[default]
    TwoProcesses,
    /// Both arguments are the increments of one series.
    SameSeries,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BetaSettings {
    pub k_max: usize,
    pub j_max: usize,
    #[serde(flatten)]
    pub bivariate: BivariateBetaSettings,
}

impl Default for BetaSettings {
    fn default() -> Self {
        Self { k_max: 40, j_max: 1_000_000, bivariate: BivariateBetaSettings::default() }
    }
}

/// Pass/fail thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Gates {
    /// Relative tolerance of `Var(statistic)` against its target; `None`
    /// selects 5% for univariate and 7% for product functionals.
    pub variance_rel_tol: Option<f64>,
    pub ks_p_min: f64,
    pub ks_distance_max: f64,
    /// z-score bound for targets stated at three standard errors.
    pub z_tight: f64,
    /// z-score bound for all other oracle comparisons.
    pub z_max: f64,
}

impl Default for Gates {
    fn default() -> Self {
        Self { variance_rel_tol: None, ks_p_min: 0.01, ks_distance_max: 0.05, z_tight: 3.0, z_max: 4.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AuditSettings {
    pub epsilon: f64,
    pub kappa: f64,
    pub dominance_epsilon: f64,
    pub lag_window: usize,
    pub exponent_tolerance: f64,
    pub curvature_tolerance: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        Self {
            epsilon: 0.1,
            kappa: 0.5,
            dominance_epsilon: 0.05,
            lag_window: 2000,
            exponent_tolerance: 0.02,
            curvature_tolerance: 0.05,
        }
    }
}

fn default_volatility() -> VolatilitySpec {
    VolatilitySpec::constant(1.0)
}

fn default_horizon() -> f64 {
    1.0
}

fn default_times() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub kernel: KernelSpec,
    #[serde(default)]
    pub kernel2: Option<KernelSpec>,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_volatility")]
    pub volatility: VolatilitySpec,
    #[serde(default)]
    pub volatility2: Option<VolatilitySpec>,
    pub n_grid: Vec<u64>,
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default)]
    pub test_function: Option<TestFunction>,
    #[serde(default)]
    pub pair: PairMode,
    #[serde(default)]
    pub mode: PathMode,
    #[serde(default = "default_scheme")]
    pub bss_scheme: BssScheme,
    #[serde(default)]
    pub hybrid: HybridConfig,
    #[serde(default)]
    pub beta: BetaSettings,
    #[serde(default)]
    pub gates: Gates,
    #[serde(default)]
    pub audit: AuditSettings,
    #[serde(default = "default_times")]
    pub times: Vec<f64>,
    /// Seed of the Gaussian-core reference run compared against BSS mode;
    /// defaults to `seed + 1`.
    #[serde(default)]
    pub reference_seed: Option<u64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn default_scheme() -> BssScheme {
    BssScheme::CoreModulated
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn is_clt(&self) -> bool {
        matches!(self.experiment, Experiment::UnivariateClt | Experiment::BivariateClt | Experiment::GeneralisedClt)
    }

    /// Number of simulated components.
    pub fn dim(&self) -> usize {
        match self.experiment {
            Experiment::UnivariateClt | Experiment::AssumptionAudit => 1,
            _ if self.pair == PairMode::SameSeries => 1,
            _ if self.kernel2.is_some() => 2,
            _ => 1,
        }
    }

    /// The statistic applies a product functional to two arguments.
    pub fn is_pair(&self) -> bool {
        match self.experiment {
            Experiment::BivariateClt | Experiment::GeneralisedClt => true,
            Experiment::Wlln | Experiment::IndependenceDiagnostic => {
                self.dim() == 2 || self.pair == PairMode::SameSeries
            }
            _ => false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::InvalidConfig("at least two replicates are required".into()));
        }
        if self.n_grid.is_empty() {
            return Err(Error::InvalidConfig("n_grid must not be empty".into()));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::InvalidConfig(format!("horizon {} must be positive", self.horizon)));
        }
        self.kernel.validate()?;
        if let Some(k) = &self.kernel2 {
            k.validate()?;
        }
        if !(-1.0..=1.0).contains(&self.rho) {
            return Err(Error::InvalidConfig(format!("rho = {} outside [-1, 1]", self.rho)));
        }
        if self.experiment == Experiment::AssumptionAudit {
            return Ok(());
        }
        let clt = self.is_clt();
        self.volatility.validate(clt)?;
        if let Some(v) = &self.volatility2 {
            v.validate(clt)?;
        }
        if let Some(f) = &self.test_function {
            TestFunction::new(f.q, f.indicator, f.centered)?;
        }
        if clt {
            for k in std::iter::once(&self.kernel).chain(self.kernel2.iter()) {
                if !k.clt_admissible() {
                    return Err(Error::InvalidConfig(format!(
                        "alpha = {} outside (-1/2, 0) required for the CLT",
                        k.alpha
                    )));
                }
            }
        }
        if self.is_pair() && self.pair == PairMode::TwoProcesses && self.kernel2.is_none() {
            return Err(Error::InvalidConfig("a product functional of two processes needs kernel2".into()));
        }
        if self.experiment == Experiment::IndependenceDiagnostic && self.mode != PathMode::GaussianCore {
            return Err(Error::InvalidConfig("the independence diagnostic runs on the Gaussian core".into()));
        }
        for &t in &self.times {
            if !(t > 0.0 && t <= self.horizon) {
                return Err(Error::InvalidConfig(format!("time {t} outside (0, T]")));
            }
        }
        for &n in &self.n_grid {
            grid_len(n, self.horizon)?;
        }
        Ok(())
    }

    fn test_function(&self) -> TestFunction {
        let default = if self.is_pair() { TestFunction::positive_part() } else { TestFunction::upside_square() };
        self.test_function.unwrap_or(default).uncentered()
    }

    fn variance_tolerance(&self) -> f64 {
        self.gates.variance_rel_tol.unwrap_or(if self.is_pair() { 0.07 } else { 0.05 })
    }

    fn reference_seed(&self) -> u64 {
        self.reference_seed.unwrap_or(self.seed.wrapping_add(1))
    }

    fn bivariate_model(&self) -> Result<BivariateModel> {
        let k2 = self.kernel2.clone().unwrap_or_else(|| self.kernel.clone());
        Ok(BivariateModel::new(BivariateKernelSpec::new(self.kernel.clone(), k2, self.rho)?))
    }

    fn volatility_specs(&self) -> Vec<VolatilitySpec> {
        vec![self.volatility, self.volatility2.unwrap_or(self.volatility)]
    }

    fn deterministic_volatility(&self) -> bool {
        self.mode == PathMode::GaussianCore || self.volatility_specs().iter().all(|v| v.is_deterministic())
    }
}

/// One checked quantity of a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub check: String,
    pub n: u64,
    pub estimate: f64,
    pub target: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub mean: Option<f64>,
    pub variance: Option<f64>,
    pub ks_statistic: Option<f64>,
    pub ks_p_value: Option<f64>,
    pub jarque_bera: Option<f64>,
    pub jarque_bera_p_value: Option<f64>,
    pub tolerance: String,
    /// Whether this row gates the overall verdict.
    pub assertion: bool,
    pub pass: bool,
    pub note: Option<String>,
}

impl ReportRow {
    fn new(check: impl Into<String>, n: u64, estimate: f64, target: f64) -> Self {
        Self {
            check: check.into(),
            n,
            estimate,
            target,
            se: None,
            z: None,
            mean: None,
            variance: None,
            ks_statistic: None,
            ks_p_value: None,
            jarque_bera: None,
            jarque_bera_p_value: None,
            tolerance: String::new(),
            assertion: false,
            pass: true,
            note: None,
        }
    }

    /// Asserts `|estimate - target| / se < bound`.
    fn z_gate(mut self, se: f64, bound: f64) -> Self {
        let z = (self.estimate - self.target).abs() / se;
        self.se = Some(se);
        self.z = Some(z);
        self.tolerance = format!("z < {bound}");
        self.assertion = true;
        self.pass = z < bound;
        self
    }

    fn with_se(mut self, se: f64) -> Self {
        self.se = Some(se);
        self.z = Some((self.estimate - self.target).abs() / se);
        self
    }

    fn gate(mut self, pass: bool, tolerance: impl Into<String>) -> Self {
        self.assertion = true;
        self.pass = pass;
        self.tolerance = tolerance.into();
        self
    }

    fn info(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

/// Per-replicate output row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub n: u64,
    pub statistic: f64,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McReport {
    pub schema_version: u32,
    pub experiment: Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub replicates: usize,
    pub rows: Vec<ReportRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<LimitLaw>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub beta: Option<BetaReport>,
    pub wall_clock_seconds: f64,
    #[serde(skip)]
    pub records: Vec<ReplicateRecord>,
}

impl McReport {
    fn new(cfg: &ExperimentConfig) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: cfg.experiment,
            config_hash: cfg.hash(),
            seed: cfg.seed,
            replicates: cfg.replicates,
            rows: Vec::new(),
            limit: None,
            beta: None,
            wall_clock_seconds: 0.0,
            records: Vec::new(),
        }
    }

    pub fn passed(&self) -> bool {
        self.rows.iter().filter(|r| r.assertion).all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ReportRow> {
        self.rows.iter().filter(|r| r.assertion && !r.pass)
    }

    pub fn row(&self, check: &str, n: u64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.check == check && r.n == n)
    }

    /// Statistics of the replicates at frequency `n`, in replicate order.
    pub fn statistics(&self, n: u64) -> Vec<f64> {
        self.records.iter().filter(|r| r.n == n).map(|r| r.statistic).collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
        w.write_record(["replicate", "n", "statistic", "target"])?;
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, writer: W) -> Result<()> {
        serde_json::to_writer_pretty(writer, self)?;
        Ok(())
    }

    /// Writes `<experiment>_replicates.csv` and `<experiment>_summary.json`
    /// into `dir`, returning both paths.
    pub fn write_outputs(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        self.write_outputs_as(dir, self.experiment.name())
    }

    pub fn write_outputs_as(&self, dir: &Path, name: &str) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{name}_replicates.csv"));
        let json_path = dir.join(format!("{name}_summary.json"));
        self.write_csv(std::fs::File::create(&csv_path)?)?;
        self.write_json(std::fs::File::create(&json_path)?)?;
        Ok((csv_path, json_path))
    }
}

/// One row per component.
type Grid = Vec<Vec<f64>>;

/// Samplers for one sampling frequency.
struct FrequencyContext {
    n: u64,
    m: usize,
    taus: Vec<f64>,
    core: Option<IncrementSampler>,
    hybrid: Option<HybridSampler>,
    vols: Vec<VolatilitySampler>,
}

impl FrequencyContext {
    fn new(cfg: &ExperimentConfig, n: u64, mode: PathMode) -> Result<Self> {
        let d = cfg.dim();
        let m = grid_len(n, cfg.horizon)?;
        let hybrid_mode = mode == PathMode::Bss && cfg.bss_scheme == BssScheme::Hybrid;
        let (core, hybrid, taus) = if hybrid_mode {
            let h = if d == 1 {
                HybridSampler::univariate(&cfg.kernel, n, cfg.horizon, &cfg.hybrid)?
            } else {
                let k2 = cfg.kernel2.as_ref().expect("validated");
                HybridSampler::bivariate(&cfg.kernel, k2, cfg.rho, n, cfg.horizon, &cfg.hybrid)?
            };
            let taus = if d == 1 {
                vec![CovarianceModel::new(cfg.kernel.clone()).scaling_tau(n)?]
            } else {
                cfg.bivariate_model()?.taus(n)?.to_vec()
            };
            (None, Some(h), taus)
        } else if d == 1 {
            let s = IncrementSampler::univariate(&CovarianceModel::new(cfg.kernel.clone()), n, cfg.horizon)?;
            let taus = s.taus().to_vec();
            (Some(s), None, taus)
        } else {
            let s = IncrementSampler::bivariate(&cfg.bivariate_model()?, n, cfg.horizon)?;
            let taus = s.taus().to_vec();
            (Some(s), None, taus)
        };
        let vols = if mode == PathMode::Bss {
            cfg.volatility_specs()
                .iter()
                .take(d)
                .map(|v| VolatilitySampler::new(v, n, cfg.horizon))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self { n, m, taus, core, hybrid, vols })
    }

    /// Raw increments `Δ_i X` and volatility grids for one replicate.
    fn draw(&self, seed: u64, replicate: u64) -> Result<(Grid, Grid)> {
        let sigmas: Vec<Vec<f64>> = if self.vols.is_empty() {
            vec![vec![1.0; self.m + 1]; self.taus.len()]
        } else {
            self.vols
                .iter()
                .enumerate()
                .map(|(a, v)| v.sample(seed, replicate, rng::VOL1 + a as u64))
                .collect::<Result<_>>()?
        };
        let increments = if let Some(h) = &self.hybrid {
            let rows: Vec<&[f64]> = sigmas.iter().map(|s| s.as_slice()).collect();
            h.sample(seed, replicate, &rows)?.increments
        } else {
            let core = self.core.as_ref().expect("core sampler").sample(seed, replicate);
            if self.vols.is_empty() {
                core.increments.iter().zip(&core.taus).map(|(row, &t)| row.iter().map(|x| t * x).collect()).collect()
            } else {
                let rows: Vec<&[f64]> = sigmas.iter().map(|s| s.as_slice()).collect();
                modulate_core(&core, &rows)?.increments
            }
        };
        Ok((increments, sigmas))
    }
}

impl FrequencyContext {
    fn path(&self, seed: u64, replicate: u64) -> Result<BssPath> {
        let sigmas: Vec<Vec<f64>> = if self.vols.is_empty() {
            vec![vec![1.0; self.m + 1]; self.taus.len()]
        } else {
            self.vols
                .iter()
                .enumerate()
                .map(|(a, v)| v.sample(seed, replicate, rng::VOL1 + a as u64))
                .collect::<Result<_>>()?
        };
        let rows: Vec<&[f64]> = sigmas.iter().map(|s| s.as_slice()).collect();
        match (&self.hybrid, &self.core) {
            (Some(h), _) => h.sample(seed, replicate, &rows),
            (None, Some(c)) => modulate_core(&c.sample(seed, replicate), &rows),
            (None, None) => unreachable!("one sampler is always built"),
        }
    }
}

/// Simulates one path of the configured model at frequency `n`.
pub fn simulate_path(cfg: &ExperimentConfig, n: u64, replicate: u64) -> Result<BssPath> {
    cfg.validate()?;
    FrequencyContext::new(cfg, n, cfg.mode)?.path(cfg.seed, replicate)
}

/// The configured functional on every replicate, without assertions:
/// `statistic` is `V_T` and `target` its centering `rate ∫ s^q`.
pub fn run_estimate(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = McReport::new(cfg);
    let func = Functional::new(cfg);
    let model = if func.pair.is_some() && cfg.dim() == 2 { Some(cfg.bivariate_model()?) } else { None };
    for &n in &cfg.n_grid {
        let rate = match (&func.pair, &model) {
            (None, _) => func.single.gaussian_mean(),
            (Some(h), Some(m)) => crate::asymptotics::mu_n(m, h, n)?,
            (Some(h), None) => h.mean(1.0)?,
        };
        let ctx = FrequencyContext::new(cfg, n, cfg.mode)?;
        let out = run_replicates(cfg, &ctx, &func, rate, cfg.seed, &[cfg.horizon])?;
        for (rep, o) in out.iter().enumerate() {
            report.records.push(ReplicateRecord {
                replicate: rep as u64,
                n,
                statistic: o.values[0],
                target: o.centering[0],
            });
        }
        let values: Vec<f64> = out.iter().map(|o| o.values[0]).collect();
        let target = stats::mean(&out.iter().map(|o| o.centering[0]).collect::<Vec<_>>());
        let mut row = ReportRow::new("mean", n, stats::mean(&values), target);
        if values.len() > 1 {
            row = row.with_se(stats::mean_se(&values));
            row.variance = Some(stats::variance(&values));
        }
        report.rows.push(row.info(format!("functional {}", func.label())));
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// The functional, its centering rate and the exponent of `σ` it carries.
struct Functional {
    pair: Option<ProductFunction>,
    single: TestFunction,
    /// `σ`-product exponent: `q` for the single and two-process forms.
    power: f64,
}

impl Functional {
    fn new(cfg: &ExperimentConfig) -> Self {
        let f = cfg.test_function();
        if cfg.is_pair() {
            Self { pair: Some(ProductFunction::new(f, f)), single: f, power: f.q }
        } else {
            Self { pair: None, single: f, power: f.q }
        }
    }

    fn series(&self, n: u64, inc: &[Vec<f64>], taus: &[f64]) -> Result<SemicovSeries> {
        match (&self.pair, inc.len()) {
            (None, _) => univariate_functional(&inc[0], taus[0], n, &self.single),
            (Some(h), 1) => product_covariation(&inc[0], &inc[0], Some([taus[0], taus[0]]), n, h),
            (Some(h), _) => product_covariation(&inc[0], &inc[1], Some([taus[0], taus[1]]), n, h),
        }
    }

    /// `s_i` with `E[statistic summand | σ] = rate · s_i^power`.
    fn sigma_product(&self, sigmas: &[Vec<f64>]) -> Vec<f64> {
        match (&self.pair, sigmas.len()) {
            (None, _) => sigmas[0].clone(),
            (Some(_), 1) => sigmas[0].iter().map(|s| s * s).collect(),
            (Some(_), _) => sigmas[0].iter().zip(&sigmas[1]).map(|(a, b)| a * b).collect(),
        }
    }

    fn label(&self) -> String {
        match self.pair {
            Some(_) => format!("{0} x {0}", self.single.label()),
            None => self.single.label(),
        }
    }

    /// `φ²` for the same-series pair, whose univariate expansion governs `β`.
    fn squared(&self) -> TestFunction {
        let f = self.single;
        let indicator = match f.indicator {
            Indicator::Signed => Indicator::All,
            other => other,
        };
        TestFunction { q: 2.0 * f.q, indicator, centered: false }
    }
}

/// Left Riemann sums `(1/n) Σ_{i<k} s_i^p` at every grid index `k`.
fn cumulative_power(s: &[f64], p: f64, n: u64, m: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(m + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for v in s.iter().take(m) {
        acc += v.powf(p);
        out.push(acc / n as f64);
    }
    out
}

fn grid_index(t: f64, n: u64, m: usize) -> usize {
    ((n as f64 * t + 1e-9).floor() as usize).min(m)
}

/// Output of one replicate at one frequency.
#[derive(Debug, Clone)]
struct ReplicateOutcome {
    /// `V_t` at the configured times.
    values: Vec<f64>,
    /// Centering `rate ∫_0^t s^q` at the configured times.
    centering: Vec<f64>,
    /// `∫_0^T s^{2q}`.
    variance_integral: f64,
    /// `X_T - X_0` per component.
    core_change: Vec<f64>,
}

fn run_replicates(
    cfg: &ExperimentConfig,
    ctx: &FrequencyContext,
    func: &Functional,
    rate: f64,
    seed: u64,
    times: &[f64],
) -> Result<Vec<ReplicateOutcome>> {
    (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|rep| {
            let (inc, sigmas) = ctx.draw(seed, rep)?;
            let series = func.series(ctx.n, &inc, &ctx.taus)?;
            let s = func.sigma_product(&sigmas);
            let centers = cumulative_power(&s, func.power, ctx.n, ctx.m);
            let var_int = cumulative_power(&s, 2.0 * func.power, ctx.n, ctx.m)[ctx.m];
            let idx: Vec<usize> = times.iter().map(|&t| grid_index(t, ctx.n, ctx.m)).collect();
            Ok(ReplicateOutcome {
                values: idx.iter().map(|&k| series.values[k]).collect(),
                centering: idx.iter().map(|&k| rate * centers[k]).collect(),
                variance_integral: var_int,
                core_change: inc.iter().map(|row| row.iter().sum()).collect(),
            })
        })
        .collect()
}

fn evaluation_times(cfg: &ExperimentConfig) -> Vec<f64> {
    let mut times: Vec<f64> = cfg.times.iter().copied().filter(|&t| t < cfg.horizon).collect();
    times.push(cfg.horizon);
    times
}

/// Law of large numbers: `mean(V_T)` against `E φ(Z) ∫_0^T (σ¹σ²)^q`.
pub fn run_wlln(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    let start = Instant::now();
    let mut report = McReport::new(cfg);
    let func = Functional::new(cfg);
    let model = if func.pair.is_some() && cfg.dim() == 2 { Some(cfg.bivariate_model()?) } else { None };
    let times = [cfg.horizon];
    let mut gaps = Vec::new();
    let last = *cfg.n_grid.iter().max().expect("nonempty");
    for &n in &cfg.n_grid {
        let rate = match (&func.pair, &model) {
            (None, _) => func.single.gaussian_mean(),
            (Some(h), Some(m)) => crate::asymptotics::mu_n(m, h, n)?,
            (Some(h), None) => h.mean(1.0)?,
        };
        let ctx = FrequencyContext::new(cfg, n, cfg.mode)?;
        let out = run_replicates(cfg, &ctx, &func, rate, cfg.seed, &times)?;
        let closed = closed_form_target(cfg, &func, rate);
        let values: Vec<f64> = out.iter().map(|o| o.values[0]).collect();
        for (rep, o) in out.iter().enumerate() {
            report.records.push(ReplicateRecord {
                replicate: rep as u64,
                n,
                statistic: o.values[0],
                target: closed.unwrap_or(o.centering[0]),
            });
        }
        let (mean, se) = (stats::mean(&values), stats::mean_se(&values));
        let target = closed.unwrap_or_else(|| stats::mean(&out.iter().map(|o| o.centering[0]).collect::<Vec<_>>()));
        gaps.push((target - mean).abs());
        let mut row = ReportRow::new("mean", n, mean, target);
        row = if n == last { row.z_gate(se, cfg.gates.z_tight) } else { row.with_se(se) };
        row.mean = Some(mean);
        row.variance = Some(stats::variance(&values));
        if cfg.replicates < 30 {
            row = row.info(format!("wide confidence interval: only {} replicates", cfg.replicates));
        }
        report.rows.push(row);
    }
    if gaps.len() >= 2 {
        let decreasing = gaps.windows(2).all(|w| w[1] <= w[0]);
        report.rows.push(
            ReportRow::new("mean-gap-decreasing", last, f64::from(u8::from(decreasing)), 1.0)
                .info(format!("|mean - target| over the n grid: {gaps:?}")),
        );
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Closed-form `rate ∫_0^T s^q` for deterministic volatility, where known.
fn closed_form_target(cfg: &ExperimentConfig, func: &Functional, rate: f64) -> Option<f64> {
    if cfg.mode == PathMode::GaussianCore {
        return Some(rate * cfg.horizon);
    }
    if cfg.dim() == 2 && cfg.volatility2.is_some_and(|v| v != cfg.volatility) {
        return None;
    }
    let power = if func.pair.is_some() { 2.0 * func.power } else { func.power };
    if power.fract() != 0.0 {
        return None;
    }
    cfg.volatility.exact_integral(power as u32, cfg.horizon).map(|i| rate * i)
}

/// Everything the CLT runners need about the limit.
struct CltSetup {
    func: Functional,
    beta: f64,
    beta_report: BetaReport,
    /// Centering rate per frequency.
    rates: Vec<f64>,
    limit_rate: Option<f64>,
    /// Exact finite-sample variance per frequency, when available.
    finite_variance: Vec<Option<f64>>,
}

/// `β` for the configured functional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum BetaComputation {
    Univariate { expansion: HermiteExpansion, result: BetaUnivariate },
    Bivariate { result: BetaBivariate },
}

impl BetaComputation {
    pub fn beta(&self) -> f64 {
        match self {
            BetaComputation::Univariate { result, .. } => result.beta,
            BetaComputation::Bivariate { result } => result.beta,
        }
    }

    pub fn report(&self) -> BetaReport {
        match self {
            BetaComputation::Univariate { result, .. } => result.report(),
            BetaComputation::Bivariate { result } => result.report(),
        }
    }

    pub fn warning(&self) -> Option<&str> {
        match self {
            BetaComputation::Univariate { result, .. } => result.warning.as_deref(),
            BetaComputation::Bivariate { result } => result.warning.as_deref(),
        }
    }
}

/// Computes `β` for the functional of `cfg`: the Hermite route for a single
/// series (including a same-series pair), the chaos route for two processes.
pub fn compute_beta(cfg: &ExperimentConfig) -> Result<BetaComputation> {
    let func = Functional::new(cfg);
    match func.pair {
        Some(h) if cfg.dim() == 2 => {
            let settings = cfg.beta.bivariate;
            if settings.mode == BetaMode::IidCheck && cfg.rho != 0.0 {
                return Err(Error::InvalidConfig("the iid check mode needs rho = 0".into()));
            }
            Ok(BetaComputation::Bivariate { result: beta_bivariate(&cfg.bivariate_model()?, &h, &settings)? })
        }
        _ => {
            let f = if func.pair.is_some() { func.squared() } else { func.single };
            let expansion = expansion_coefficients(&f, cfg.beta.k_max)?;
            let result = beta_univariate(&expansion, cfg.kernel.alpha, cfg.beta.k_max, cfg.beta.j_max)?;
            Ok(BetaComputation::Univariate { expansion, result })
        }
    }
}

fn clt_setup(cfg: &ExperimentConfig) -> Result<CltSetup> {
    let func = Functional::new(cfg);
    let beta = compute_beta(cfg)?;
    match &beta {
        BetaComputation::Univariate { expansion, .. } => {
            let model = CovarianceModel::new(cfg.kernel.clone());
            let finite_variance = cfg
                .n_grid
                .iter()
                .map(|&n| {
                    if cfg.mode == PathMode::GaussianCore && n <= 1 << 14 {
                        finite_n_variance(expansion, &model, n, cfg.beta.k_max).map(Some)
                    } else {
                        Ok(None)
                    }
                })
                .collect::<Result<_>>()?;
            let rate = expansion.function.gaussian_mean();
            Ok(CltSetup {
                beta: beta.beta(),
                beta_report: beta.report(),
                rates: vec![rate; cfg.n_grid.len()],
                limit_rate: Some(rate),
                finite_variance,
                func,
            })
        }
        BetaComputation::Bivariate { result } => {
            let model = cfg.bivariate_model()?;
            let h = func.pair.expect("pair");
            let rates = cfg.n_grid.iter().map(|&n| crate::asymptotics::mu_n(&model, &h, n)).collect::<Result<_>>()?;
            let limit_rate = if cfg.rho == 0.0 {
                Some(h.mean(0.0)?)
            } else {
                let grid: Vec<u64> = (8..=14).map(|p| 1u64 << p).collect();
                Some(mu_limit(&model, &h, &grid)?.0)
            };
            let finite_variance = cfg
                .n_grid
                .iter()
                .map(|&n| (n == result.n_ref && result.lags as u64 + 1 >= n).then_some(result.finite_n_variance))
                .collect();
            Ok(CltSetup { beta: result.beta, beta_report: result.report(), rates, limit_rate, finite_variance, func })
        }
    }
}

/// Runs the univariate, bivariate or generalised CLT check as configured.
pub fn run_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    cfg.validate()?;
    if !cfg.is_clt() {
        return Err(Error::InvalidConfig(format!("{} is not a CLT experiment", cfg.experiment.name())));
    }
    let start = Instant::now();
    let mut report = McReport::new(cfg);
    let setup = clt_setup(cfg)?;
    let times = evaluation_times(cfg);
    let t_end = times.len() - 1;
    let tol = cfg.variance_tolerance();
    let deterministic = cfg.deterministic_volatility();
    for (idx, &n) in cfg.n_grid.iter().enumerate() {
        let rate = setup.rates[idx];
        let ctx = FrequencyContext::new(cfg, n, cfg.mode)?;
        let out = run_replicates(cfg, &ctx, &setup.func, rate, cfg.seed, &times)?;
        let sn = (n as f64).sqrt();
        let stat_at = |o: &ReplicateOutcome, k: usize| sn * (o.values[k] - o.centering[k]);
        let stats_end: Vec<f64> = out.iter().map(|o| stat_at(o, t_end)).collect();
        for (rep, (o, s)) in out.iter().zip(&stats_end).enumerate() {
            report.records.push(ReplicateRecord {
                replicate: rep as u64,
                n,
                statistic: *s,
                target: o.centering[t_end],
            });
        }
        let var_int = stats::mean(&out.iter().map(|o| o.variance_integral).collect::<Vec<_>>());
        let target_var = setup.beta * var_int;
        let var = stats::variance(&stats_end);
        let mut row = ReportRow::new("variance", n, var, target_var)
            .with_se(stats::variance_se(&stats_end))
            .gate((var / target_var - 1.0).abs() <= tol, format!("relative error <= {tol}"));
        row.variance = Some(var);
        row.mean = Some(stats::mean(&stats_end));
        report.rows.push(row);
        report.rows.push(
            ReportRow::new("mean", n, stats::mean(&stats_end), 0.0).z_gate(stats::mean_se(&stats_end), cfg.gates.z_max),
        );
        let jb = stats::jarque_bera(&stats_end);
        if deterministic {
            let normal = Normal::new(0.0, target_var.sqrt()).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let ks = stats::ks_one_sample(&stats_end, |x| normal.cdf(x));
            let mut row = ReportRow::new("ks-normal", n, ks.p_value, cfg.gates.ks_p_min)
                .gate(ks.p_value > cfg.gates.ks_p_min, format!("p > {}", cfg.gates.ks_p_min));
            row.ks_statistic = Some(ks.statistic);
            row.ks_p_value = Some(ks.p_value);
            row.jarque_bera = Some(jb.statistic);
            row.jarque_bera_p_value = Some(jb.p_value);
            report.rows.push(row);
        }
        let mut row = ReportRow::new("jarque-bera", n, jb.statistic, 0.0).info("normality diagnostic");
        row.jarque_bera = Some(jb.statistic);
        row.jarque_bera_p_value = Some(jb.p_value);
        report.rows.push(row);
        if let Some(fv) = setup.finite_variance[idx] {
            report.rows.push(
                ReportRow::new("finite-n-variance", n, var, fv * var_int)
                    .with_se(stats::variance_se(&stats_end))
                    .info("exact finite-sample variance of the statistic"),
            );
        }
        for (k, &t) in times.iter().enumerate().take(t_end) {
            let s: Vec<f64> = out.iter().map(|o| stat_at(o, k)).collect();
            let v = stats::variance(&s);
            report.rows.push(
                ReportRow::new(format!("variance-t={t}"), n, v, setup.beta * var_int * t / cfg.horizon)
                    .with_se(stats::variance_se(&s))
                    .info("unit-rate volatility scaling assumed"),
            );
        }
        // disjoint-interval increments of the statistic
        if let Some(mid) = times.iter().position(|&t| (t - 0.5 * cfg.horizon).abs() < 1e-12) {
            let first: Vec<f64> = out.iter().map(|o| stat_at(o, mid)).collect();
            let second: Vec<f64> = out.iter().map(|o| stat_at(o, t_end) - stat_at(o, mid)).collect();
            let (r, se) = stats::correlation_with_se(&first, &second);
            report.rows.push(ReportRow::new("increment-correlation", n, r, 0.0).z_gate(se, cfg.gates.z_tight));
        }
        if let (Some(lim), true) = (setup.limit_rate, setup.func.pair.is_some()) {
            report.rows.push(ReportRow::new("mu-gap", n, rate, lim).info("centering at n versus its limit"));
        }
        if cfg.mode == PathMode::Bss && cfg.dim() == 2 || (cfg.mode == PathMode::Bss && setup.func.pair.is_some()) {
            let reference = ExperimentConfig { mode: PathMode::GaussianCore, ..cfg.clone() };
            let rctx = FrequencyContext::new(&reference, n, PathMode::GaussianCore)?;
            let rout = run_replicates(&reference, &rctx, &setup.func, rate, cfg.reference_seed(), &times)?;
            let rstats: Vec<f64> = rout.iter().map(|o| stat_at(o, t_end)).collect();
            let scale = var_int.sqrt();
            let scaled: Vec<f64> = stats_end.iter().map(|s| s / scale).collect();
            let ks = stats::ks_two_sample(&scaled, &rstats);
            let mut row = ReportRow::new("ks-distance-vs-core", n, ks.statistic, cfg.gates.ks_distance_max)
                .gate(ks.statistic < cfg.gates.ks_distance_max, format!("distance < {}", cfg.gates.ks_distance_max));
            row.ks_statistic = Some(ks.statistic);
            row.ks_p_value = Some(ks.p_value);
            report.rows.push(row.info("BSS statistic rescaled by the root of its volatility integral"));
        }
    }
    let drift = if setup.func.pair.is_some() && cfg.dim() == 2 {
        let last = *cfg.n_grid.last().expect("nonempty");
        Drift::NDependent { n: last, mu_n: *setup.rates.last().expect("nonempty"), limit: setup.limit_rate }
    } else {
        Drift::Constant(setup.rates[0])
    };
    report.limit = Some(if cfg.mode == PathMode::GaussianCore {
        LimitLaw::scaled_bm(setup.beta, drift)
    } else {
        LimitLaw::volatility_modulated(setup.beta, drift, format!("(sigma1 sigma2)^{}", setup.func.power))
    });
    report.beta = Some(setup.beta_report);
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

pub fn run_univariate_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_experiment(cfg, Experiment::UnivariateClt)?;
    run_clt(cfg)
}

pub fn run_bivariate_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_experiment(cfg, Experiment::BivariateClt)?;
    run_clt(cfg)
}

pub fn run_generalised_clt(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_experiment(cfg, Experiment::GeneralisedClt)?;
    run_clt(cfg)
}

fn expect_experiment(cfg: &ExperimentConfig, e: Experiment) -> Result<()> {
    if cfg.experiment == e {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!("expected experiment {}, got {}", e.name(), cfg.experiment.name())))
    }
}

/// Covariance of the core change `G_T - G_0` with the centred statistic
/// against its closed form, per frequency.
pub fn run_independence_diagnostic(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_experiment(cfg, Experiment::IndependenceDiagnostic)?;
    cfg.validate()?;
    let start = Instant::now();
    let mut report = McReport::new(cfg);
    let func = Functional::new(cfg);
    let t = cfg.horizon;
    let times = [t];
    let bivariate = cfg.dim() == 2;
    let model = CovarianceModel::new(cfg.kernel.clone());
    let bmodel = if bivariate { Some(cfg.bivariate_model()?) } else { None };
    let a1 = if bivariate {
        f64::NAN
    } else {
        let f = if func.pair.is_some() { func.squared() } else { func.single };
        expansion_coefficients(&f, 1)?.a(1)
    };
    let mut closed_forms = Vec::new();
    for &n in &cfg.n_grid {
        let rate = match (&func.pair, &bmodel) {
            (None, _) => func.single.gaussian_mean(),
            (Some(h), Some(m)) => crate::asymptotics::mu_n(m, h, n)?,
            (Some(h), None) => h.mean(1.0)?,
        };
        let ctx = FrequencyContext::new(cfg, n, PathMode::GaussianCore)?;
        let out = run_replicates(cfg, &ctx, &func, rate, cfg.seed, &times)?;
        let sn = (n as f64).sqrt();
        let stat: Vec<f64> = out.iter().map(|o| sn * (o.values[0] - o.centering[0])).collect();
        for (rep, (o, s)) in out.iter().zip(&stat).enumerate() {
            report.records.push(ReplicateRecord { replicate: rep as u64, n, statistic: *s, target: o.centering[0] });
        }
        let components = if bivariate { 2 } else { 1 };
        for c in 0..components {
            let change: Vec<f64> = out.iter().map(|o| o.core_change[c]).collect();
            let (cov, se) = stats::covariance_with_se(&change, &stat);
            let closed = match &bmodel {
                Some(m) => bivariate_core_statistic_covariance(m, func.pair.as_ref().expect("pair"), n, c + 1, t)?,
                None => core_statistic_covariance_at(&model, a1, n, t)?,
            };
            if c == 0 {
                closed_forms.push(closed);
            }
            let (label, bound) = if bivariate {
                (format!("core-covariance-{}", c + 1), cfg.gates.z_max)
            } else {
                ("core-covariance".into(), cfg.gates.z_tight)
            };
            report.rows.push(ReportRow::new(label, n, cov, closed).z_gate(se, bound));
            // pairing with the next replicate's core breaks the dependence
            let shifted: Vec<f64> = (0..change.len()).map(|r| change[(r + 1) % change.len()]).collect();
            let (cov, se) = stats::covariance_with_se(&shifted, &stat);
            report
                .rows
                .push(ReportRow::new(format!("shuffled-control-{}", c + 1), n, cov, 0.0).z_gate(se, cfg.gates.z_max));
        }
    }
    if closed_forms.len() >= 2 {
        let last = *cfg.n_grid.last().expect("nonempty");
        let decreasing = closed_forms.windows(2).all(|w| w[1].abs() < w[0].abs());
        report.rows.push(
            ReportRow::new("closed-form-decreasing", last, f64::from(u8::from(decreasing)), 1.0)
                .gate(decreasing, "strictly decreasing in n"),
        );
        let emp: Vec<f64> =
            report.rows.iter().filter(|r| r.check.starts_with("core-covariance")).map(|r| r.estimate).collect();
        let emp_decreasing = emp.windows(2).all(|w| w[1].abs() <= w[0].abs());
        report.rows.push(
            ReportRow::new("empirical-decreasing", last, f64::from(u8::from(emp_decreasing)), 1.0)
                .info(format!("empirical covariances {emp:?}")),
        );
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Scaling-exponent fits and range checks on the configured kernels.
pub fn run_assumption_audit(cfg: &ExperimentConfig) -> Result<McReport> {
    expect_experiment(cfg, Experiment::AssumptionAudit)?;
    cfg.validate()?;
    let start = Instant::now();
    let mut report = McReport::new(cfg);
    let grid: Vec<u64> = if cfg.n_grid.len() >= 3 { cfg.n_grid.clone() } else { (8..=14).map(|p| 1u64 << p).collect() };
    let a = cfg.audit;
    let kernels: Vec<&KernelSpec> = std::iter::once(&cfg.kernel).chain(cfg.kernel2.iter()).collect();
    for (idx, k) in kernels.iter().enumerate() {
        let tag = if kernels.len() > 1 { format!("[{}]", idx + 1) } else { String::new() };
        audit_kernel(k, &grid, &a, &tag, &mut report)?;
    }
    if let Some(k2) = &cfg.kernel2 {
        let spec = BivariateKernelSpec::new(cfg.kernel.clone(), k2.clone(), cfg.rho)?;
        let quad = crate::quadrature::QuadratureConfig::default();
        for j in 1..=2 {
            let r0 = bivariate_variogram(&spec, j, j, 0.0, &quad)?;
            let offset = spec.offset_constant(j, j, &quad)?;
            report.rows.push(
                ReportRow::new(format!("offset-constant-diagonal-{j}"), 0, offset, r0)
                    .info("C_jj is not stated; it is inferred from R_j(0) = 0 (flagged, not asserted)"),
            );
        }
    }
    for (i, v) in [Some(cfg.volatility), cfg.volatility2].iter().flatten().enumerate() {
        let bound = v.upper_bound();
        let row = match bound {
            Some(b) => {
                let f = smoothness_bound(&cfg.kernel, b)?;
                ReportRow::new(format!("smoothness-bound-{}", i + 1), 0, f, 0.0).gate(f.is_finite(), "finite")
            }
            None => ReportRow::new(format!("smoothness-bound-{}", i + 1), 0, f64::NAN, 0.0)
                .info("volatility has no deterministic bound; checked pathwise only"),
        };
        report.rows.push(row);
    }
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn log_fit(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let (slope, _, se) = stats::ols_slope(&lx, &ly);
    (slope, se)
}

fn audit_kernel(k: &KernelSpec, grid: &[u64], a: &AuditSettings, tag: &str, report: &mut McReport) -> Result<()> {
    let alpha = k.alpha;
    let model = CovarianceModel::new(k.clone());
    report.rows.push(
        ReportRow::new(format!("clt-range{tag}"), 0, alpha, 0.0)
            .gate(k.clt_admissible(), "alpha in (-1/2, 0)")
            .info(if k.clt_admissible() { "CLT mode PASS" } else { "CLT mode FAIL" }),
    );
    let wlln_ok = alpha > -0.5 && alpha < 0.5 && alpha != 0.0;
    report
        .rows
        .push(ReportRow::new(format!("wlln-range{tag}"), 0, alpha, 0.0).gate(wlln_ok, "alpha in (-1/2, 1/2) \\ {0}"));

    let ts: Vec<f64> = grid.iter().map(|&n| 1.0 / n as f64).collect();
    let rs: Vec<f64> = ts.iter().map(|&t| model.variogram(t)).collect::<Result<_>>()?;
    let (slope, se) = log_fit(&ts, &rs);
    let target = 2.0 * alpha + 1.0;
    let mut row = ReportRow::new(format!("variogram-exponent{tag}"), 0, slope, target).gate(
        (slope - target).abs() <= a.exponent_tolerance,
        format!("|fit - (2 alpha + 1)| <= {}", a.exponent_tolerance),
    );
    row.se = Some(se);
    report.rows.push(row);

    // R''(t) ≈ 2 n² Cov(Δ_1, Δ_{1+j}) with t = j/n
    let lag = 8u64;
    let ts2: Vec<f64> = (5..=11).map(|p| 2f64.powi(-p)).collect();
    let curv: Vec<f64> = ts2
        .iter()
        .map(|&t| {
            let n = (lag as f64 / t).round() as u64;
            Ok(2.0 * (n as f64).powi(2) * model.increment_covariance(n, lag)?)
        })
        .collect::<Result<_>>()?;
    let curv_sign = curv[0].signum();
    let curv_abs: Vec<f64> = curv.iter().map(|c| c.abs()).collect();
    let (slope, se) = log_fit(&ts2, &curv_abs);
    let target = 2.0 * alpha - 1.0;
    let consistent = curv.iter().all(|c| c.signum() == curv_sign);
    let mut row = ReportRow::new(format!("curvature-exponent{tag}"), 0, slope, target).gate(
        consistent && (slope - target).abs() <= a.curvature_tolerance,
        format!("|fit - (2 alpha - 1)| <= {}", a.curvature_tolerance),
    );
    row.se = Some(se);
    report.rows.push(row);

    let ns: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let tails: Vec<f64> = grid.iter().map(|&n| model.pi_tail_mass(n, a.epsilon)).collect::<Result<_>>()?;
    let (slope, se) = log_fit(&ns, &tails);
    let mut row = ReportRow::new(format!("pi-tail-slope{tag}"), 0, slope, -1.0).gate(slope < -1.0, "slope < -1");
    row.se = Some(se);
    report.rows.push(row.info(format!("epsilon = {}", a.epsilon)));

    let tails: Vec<f64> =
        grid.iter().map(|&n| model.pi_tail_mass(n, (n as f64).powf(-a.kappa))).collect::<Result<_>>()?;
    let (slope, se) = log_fit(&ns, &tails);
    let lambda_hat = slope / (1.0 - a.kappa);
    let mut row = ReportRow::new(format!("pi-tail-kappa-rate{tag}"), 0, lambda_hat, -1.0)
        .gate(lambda_hat < -1.0, "fitted rate < -1");
    row.se = Some(se / (1.0 - a.kappa));
    report.rows.push(row.info(format!("kappa = {}, raw slope {slope}", a.kappa)));

    // dominant sequence |r_n(j)| <= C (j-1)^{2α+ε-1}
    let eps = a.dominance_epsilon;
    if eps >= 1.0 - 2.0 * alpha {
        return Err(Error::InvalidConfig(format!("dominance epsilon {eps} must be below 1 - 2 alpha")));
    }
    let e = 2.0 * alpha + eps - 1.0;
    let window = a.lag_window.max(2);
    let mut c_hat = 0.0f64;
    let mut sums = Vec::new();
    let mut first = 0.0f64;
    for &n in grid {
        let lags = model.lag_correlations(n, window)?;
        for (j, r) in lags.iter().enumerate().skip(2) {
            c_hat = c_hat.max(r.abs() / ((j - 1) as f64).powf(e));
        }
        first = first.max(lags[1].abs());
        sums.push(lags[1..].iter().map(|r| r.abs()).sum::<f64>());
    }
    report.rows.push(
        ReportRow::new(format!("dominance-constant{tag}"), 0, c_hat, 0.0)
            .gate(c_hat.is_finite(), "finite")
            .info(format!("epsilon = {eps}, lags 2..={window}")),
    );
    let summable = e < -1.0;
    let bound = if summable { first + c_hat * zeta_tail(-e) } else { f64::INFINITY };
    let worst = sums.iter().fold(0.0f64, |m, &s| m.max(s));
    report.rows.push(
        ReportRow::new(format!("lag-summability{tag}"), 0, worst, bound)
            .gate(summable && worst <= bound, "sum_j |r_n(j)| within the dominant-sequence bound")
            .info(format!("sums over the n grid: {sums:?}")),
    );
    let limit_gap: f64 = {
        let n = *grid.last().expect("nonempty");
        let lags = model.lag_correlations(n, 20)?;
        (1..=20u64).map(|j| (lags[j as usize] - rho_alpha(alpha, j)).abs()).fold(0.0, f64::max)
    };
    report.rows.push(
        ReportRow::new(format!("lag-limit-gap{tag}"), *grid.last().expect("nonempty"), limit_gap, 0.0)
            .info("max_{j<=20} |r_n(j) - rho_alpha(j)|"),
    );
    Ok(())
}

/// `ζ(s) = Σ_{i>=1} i^{-s}` for `s > 1`, by Euler–Maclaurin after 64 terms.
fn zeta_tail(s: f64) -> f64 {
    let n = 64.0f64;
    let head: f64 = (1..64).map(|i| (i as f64).powf(-s)).sum();
    head + n.powf(1.0 - s) / (s - 1.0) + 0.5 * n.powf(-s) + s * n.powf(-s - 1.0) / 12.0
}

/// Dispatches on the configured experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<McReport> {
    match cfg.experiment {
        Experiment::Wlln => run_wlln(cfg),
        Experiment::UnivariateClt | Experiment::BivariateClt | Experiment::GeneralisedClt => run_clt(cfg),
        Experiment::IndependenceDiagnostic => run_independence_diagnostic(cfg),
        Experiment::AssumptionAudit => run_assumption_audit(cfg),
    }
}
