//! Exact simulation of the rescaled increment sequences of the Gaussian cores.
//!
//! Univariate sequences use circulant embedding of the Toeplitz covariance
//! (Davies–Harte). Bivariate sequences use the block-circulant analogue: the
//! 2×2 spectral blocks are factored frequency by frequency. When an embedding
//! has a materially negative eigenvalue the sampler falls back to a dense
//! Cholesky factor of the exact covariance and records the fact.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{BivariateModel, CovarianceModel, CrossLagTable};
use crate::rng;

/// Relative size below which a negative embedding eigenvalue is treated as round-off.
const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SimScheme {
    CirculantEmbedding,
    CholeskyExact,
}

/// Diagnostics of the circulant embedding.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingReport {
    /// Smallest eigenvalue of the (block-)circulant extension, relative to the largest.
    pub min_relative_eigenvalue: f64,
    /// Whether the sampler fell back to the dense Cholesky factor.
    pub fallback: bool,
}

/// A simulated grid of rescaled increments `Δ_i^n G^{(j)} / τ_n^{(j)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianCorePath {
    pub n: u64,
    pub horizon: f64,
    pub seed: u64,
    pub replicate: u64,
    pub scheme: SimScheme,
    pub embedding: EmbeddingReport,
    /// `τ_n^{(j)}` per component.
    pub taus: Vec<f64>,
    /// One row of length `m = ⌈nT⌉` per component.
    pub increments: Vec<Vec<f64>>,
}

impl GaussianCorePath {
    pub fn dim(&self) -> usize {
        self.increments.len()
    }

    pub fn len(&self) -> usize {
        self.increments.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes `i,t,x1[,x2]` rows.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["i".to_string(), "t".to_string()];
        header.extend((1..=self.dim()).map(|j| format!("x{j}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![(i + 1).to_string(), format!("{}", (i + 1) as f64 / self.n as f64)];
            row.extend(self.increments.iter().map(|r| format!("{:.17e}", r[i])));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Number of increments on `[0, T]` at frequency `n`.
pub fn grid_len(n: u64, horizon: f64) -> Result<usize> {
    let m = (n as f64 * horizon).ceil();
    if !(m >= 2.0 && m.is_finite()) || n == 0 {
        return Err(Error::InvalidSimulation(format!("n·T = {} must be at least 2", n as f64 * horizon)));
    }
    Ok(m as usize)
}

#[derive(Clone)]
enum Factor {
    Circulant { sqrt_eig: Vec<f64>, fft: Arc<dyn Fft<f64>> },
    BlockCirculant { factors: Vec<[Complex64; 3]>, fft: Arc<dyn Fft<f64>> },
    Dense { chol: DMatrix<f64> },
}

impl std::fmt::Debug for Factor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Factor::Circulant { sqrt_eig, .. } => write!(f, "Circulant({})", sqrt_eig.len()),
            Factor::BlockCirculant { factors, .. } => write!(f, "BlockCirculant({})", factors.len()),
            Factor::Dense { chol } => write!(f, "Dense({})", chol.nrows()),
        }
    }
}

/// Precomputed factorisation for repeated draws of one increment law.
#[derive(Debug, Clone)]
pub struct IncrementSampler {
    n: u64,
    horizon: f64,
    m: usize,
    dim: usize,
    taus: Vec<f64>,
    factor: Factor,
    embedding: EmbeddingReport,
}

impl IncrementSampler {
    /// Sampler for the univariate core of `model`.
    pub fn univariate(model: &CovarianceModel, n: u64, horizon: f64) -> Result<Self> {
        let m = grid_len(n, horizon)?;
        let acf = model.lag_correlations(n, m)?;
        let mut s = Self::from_autocorrelation(&acf[..=m], SimScheme::CirculantEmbedding)?;
        s.n = n;
        s.horizon = horizon;
        s.taus = vec![model.scaling_tau(n)?];
        Ok(s)
    }

    /// Sampler for the bivariate core of `model`.
    pub fn bivariate(model: &BivariateModel, n: u64, horizon: f64) -> Result<Self> {
        let m = grid_len(n, horizon)?;
        let table = model.cross_lag_correlations(n, m)?;
        let mut s = Self::from_cross_table(&table, m, SimScheme::CirculantEmbedding)?;
        s.horizon = horizon;
        Ok(s)
    }

    /// Stationary sequence of length `acf.len() - 1` with autocovariance `acf`.
    ///
    /// `acf` holds lags `0..=m`; lag `m` is only used by the embedding.
    pub fn from_autocorrelation(acf: &[f64], scheme: SimScheme) -> Result<Self> {
        let m = acf
            .len()
            .checked_sub(1)
            .filter(|&m| m >= 1)
            .ok_or_else(|| Error::InvalidSimulation("autocovariance needs at least two lags".into()))?;
        let dense = |embedding| -> Result<Self> {
            let cov = DMatrix::from_fn(m, m, |i, j| acf[i.abs_diff(j)]);
            let chol = dense_cholesky(cov)?;
            Ok(Self {
                n: m as u64,
                horizon: 1.0,
                m,
                dim: 1,
                taus: vec![1.0],
                factor: Factor::Dense { chol },
                embedding,
            })
        };
        if scheme == SimScheme::CholeskyExact {
            return dense(EmbeddingReport { min_relative_eigenvalue: f64::NAN, fallback: false });
        }
        let big = 2 * m;
        let mut row: Vec<Complex64> =
            (0..big).map(|k| Complex64::new(if k <= m { acf[k] } else { acf[big - k] }, 0.0)).collect();
        let fft = FftPlanner::new().plan_fft_forward(big);
        fft.process(&mut row);
        let eig: Vec<f64> = row.iter().map(|c| c.re).collect();
        let max = eig.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(f64::MIN_POSITIVE);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        let rel = min / max;
        if rel < -EIGEN_TOL {
            log::warn!("circulant embedding has eigenvalue {min:.3e}; using dense Cholesky");
            return dense(EmbeddingReport { min_relative_eigenvalue: rel, fallback: true });
        }
        let sqrt_eig = eig.iter().map(|&l| (l.max(0.0) / big as f64).sqrt()).collect();
        Ok(Self {
            n: m as u64,
            horizon: 1.0,
            m,
            dim: 1,
            taus: vec![1.0],
            factor: Factor::Circulant { sqrt_eig, fft },
            embedding: EmbeddingReport { min_relative_eigenvalue: rel, fallback: false },
        })
    }

    /// Bivariate sequence of length `m` from a cross-lag table with `max_lag >= m`.
    pub fn from_cross_table(table: &CrossLagTable, m: usize, scheme: SimScheme) -> Result<Self> {
        if table.max_lag < m || m < 1 {
            return Err(Error::InvalidSimulation(format!(
                "lag table reaches {} but {m} lags are needed",
                table.max_lag
            )));
        }
        let base = Self {
            n: table.n,
            horizon: m as f64 / table.n as f64,
            m,
            dim: 2,
            taus: table.tau.to_vec(),
            factor: Factor::Dense { chol: DMatrix::zeros(0, 0) },
            embedding: EmbeddingReport { min_relative_eigenvalue: f64::NAN, fallback: false },
        };
        let dense = |embedding| -> Result<Self> {
            let cov = DMatrix::from_fn(2 * m, 2 * m, |p, q| {
                let (i, a) = (p / 2, p % 2 + 1);
                let (j, b) = (q / 2, q % 2 + 1);
                table.r(a, b, j as i64 - i as i64)
            });
            let chol = dense_cholesky(cov)?;
            Ok(Self { factor: Factor::Dense { chol }, embedding, ..base.clone() })
        };
        if scheme == SimScheme::CholeskyExact {
            return dense(base.embedding);
        }
        let big = 2 * m;
        // B_k = C(k) for k < m, B_m symmetrised, B_{N-k} = C(k)^T
        let block = |k: usize| -> [[f64; 2]; 2] {
            if k < m {
                table.block(k as i64)
            } else if k == m {
                let c = table.block(m as i64);
                let off = 0.5 * (c[0][1] + c[1][0]);
                [[c[0][0], off], [off, c[1][1]]]
            } else {
                table.block(k as i64 - big as i64)
            }
        };
        let mut planner = FftPlanner::new();
        let fft = planner.plan_fft_forward(big);
        let mut ch: [Vec<Complex64>; 3] = [vec![], vec![], vec![]];
        for (idx, (a, b)) in [(0, 0), (0, 1), (1, 1)].into_iter().enumerate() {
            ch[idx] = (0..big).map(|k| Complex64::new(block(k)[a][b], 0.0)).collect();
            fft.process(&mut ch[idx]);
        }
        let mut factors = Vec::with_capacity(big);
        let mut min_eig = f64::INFINITY;
        let mut max_eig = 0.0f64;
        for l in 0..big {
            let (f11, f12, f22) = (ch[0][l].re, ch[1][l], ch[2][l].re);
            let tr = f11 + f22;
            let det = f11 * f22 - f12.norm_sqr();
            let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
            min_eig = min_eig.min(0.5 * tr - disc);
            max_eig = max_eig.max(0.5 * tr + disc);
            factors.push([Complex64::new(f11, 0.0), f12, Complex64::new(f22, 0.0)]);
        }
        let rel = min_eig / max_eig.max(f64::MIN_POSITIVE);
        if rel < -EIGEN_TOL {
            log::warn!("block-circulant embedding has eigenvalue {min_eig:.3e}; using dense Cholesky");
            return dense(EmbeddingReport { min_relative_eigenvalue: rel, fallback: true });
        }
        let scale = 1.0 / (big as f64).sqrt();
        let factors = factors.into_iter().map(|f| hermitian_factor(f, max_eig).map(|c| c * scale)).collect();
        Ok(Self {
            factor: Factor::BlockCirculant { factors, fft },
            embedding: EmbeddingReport { min_relative_eigenvalue: rel, fallback: false },
            ..base
        })
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        self.m == 0
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn taus(&self) -> &[f64] {
        &self.taus
    }

    pub fn embedding(&self) -> EmbeddingReport {
        self.embedding
    }

    pub fn scheme(&self) -> SimScheme {
        match self.factor {
            Factor::Dense { .. } => SimScheme::CholeskyExact,
            _ => SimScheme::CirculantEmbedding,
        }
    }

    /// One draw of the increment rows from `rng`.
    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<Vec<f64>> {
        self.draw_with(&mut || StandardNormal.sample(rng))
    }

    /// The sampler as a linear map of a stream of standard normals.
    fn draw_with<N: FnMut() -> f64>(&self, normal: &mut N) -> Vec<Vec<f64>> {
        let m = self.m;
        match &self.factor {
            Factor::Circulant { sqrt_eig, fft } => {
                let mut w: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let a = normal();
                        let b = normal();
                        Complex64::new(s * a, s * b)
                    })
                    .collect();
                fft.process(&mut w);
                vec![w[..m].iter().map(|c| c.re).collect()]
            }
            Factor::BlockCirculant { factors, fft } => {
                let big = factors.len();
                let mut z1 = Vec::with_capacity(big);
                let mut z2 = Vec::with_capacity(big);
                for f in factors {
                    let x1 = Complex64::new(normal(), normal());
                    let x2 = Complex64::new(normal(), normal());
                    z1.push(f[0] * x1);
                    z2.push(f[1] * x1 + f[2] * x2);
                }
                fft.process(&mut z1);
                fft.process(&mut z2);
                vec![z1[..m].iter().map(|c| c.re).collect(), z2[..m].iter().map(|c| c.re).collect()]
            }
            Factor::Dense { chol } => {
                let k = chol.nrows();
                let z = nalgebra::DVector::from_fn(k, |_, _| normal());
                let x = chol * z;
                if self.dim == 1 {
                    vec![x.iter().copied().collect()]
                } else {
                    vec![(0..m).map(|i| x[2 * i]).collect(), (0..m).map(|i| x[2 * i + 1]).collect()]
                }
            }
        }
    }

    /// Replicate `replicate` of the increment grid under `seed`.
    pub fn sample(&self, seed: u64, replicate: u64) -> GaussianCorePath {
        self.sample_stream(seed, replicate, rng::CORE)
    }

    /// As [`Self::sample`] but on an explicit stream component.
    pub fn sample_stream(&self, seed: u64, replicate: u64, component: u64) -> GaussianCorePath {
        let mut r = rng::stream(seed, replicate, component);
        GaussianCorePath {
            n: self.n,
            horizon: self.horizon,
            seed,
            replicate,
            scheme: self.scheme(),
            embedding: self.embedding,
            taus: self.taus.clone(),
            increments: self.draw(&mut r),
        }
    }
}

/// Lower-triangular `A` with `A A* = F` for a Hermitian PSD 2×2 block
/// `[[f11, f12], [conj f12, f22]]`; returns `[A11, A21, A22]`.
fn hermitian_factor(f: [Complex64; 3], scale: f64) -> [Complex64; 3] {
    let tiny = EIGEN_TOL * scale;
    let f11 = f[0].re.max(0.0);
    let f22 = f[2].re.max(0.0);
    if f11 <= tiny {
        return [Complex64::new(f11.sqrt(), 0.0), Complex64::new(0.0, 0.0), Complex64::new(f22.sqrt(), 0.0)];
    }
    let a11 = f11.sqrt();
    let a21 = f[1].conj() / a11;
    let a22 = (f22 - a21.norm_sqr()).max(0.0).sqrt();
    [Complex64::new(a11, 0.0), a21, Complex64::new(a22, 0.0)]
}

fn dense_cholesky(cov: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = cov.nrows();
    if let Some(c) = cov.clone().cholesky() {
        return Ok(c.l());
    }
    // semidefinite: eigen square root with round-off negatives clipped
    let eig = cov.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let min = eig.eigenvalues.min();
    if min < -1e-8 * max.max(1.0) {
        return Err(Error::NotPositiveSemidefinite(min));
    }
    let sqrt = DMatrix::from_fn(k, k, |i, j| if i == j { eig.eigenvalues[i].max(0.0).sqrt() } else { 0.0 });
    Ok(&eig.eigenvectors * sqrt)
}

/// Univariate core increments for one replicate.
pub fn simulate_increments(model: &CovarianceModel, n: u64, horizon: f64, seed: u64) -> Result<GaussianCorePath> {
    Ok(IncrementSampler::univariate(model, n, horizon)?.sample(seed, 0))
}

/// Bivariate core increments for one replicate.
pub fn simulate_bivariate_increments(
    model: &BivariateModel,
    n: u64,
    horizon: f64,
    seed: u64,
) -> Result<GaussianCorePath> {
    Ok(IncrementSampler::bivariate(model, n, horizon)?.sample(seed, 0))
}

/// Partial sums `τ Σ_{k≤i} x_k` per component; entry `i` approximates `G_{(i+1)/n} - G_0`.
pub fn core_path_from_increments(path: &GaussianCorePath) -> Vec<Vec<f64>> {
    path.increments
        .iter()
        .zip(&path.taus)
        .map(|(row, &tau)| {
            let mut acc = 0.0;
            row.iter()
                .map(|&x| {
                    acc += tau * x;
                    acc
                })
                .collect()
        })
        .collect()
}

/// Inverse of [`core_path_from_increments`] up to rounding.
pub fn increments_from_core_path(core: &[f64], tau: f64) -> Vec<f64> {
    let mut prev = 0.0;
    core.iter()
        .map(|&g| {
            let x = (g - prev) / tau;
            prev = g;
            x
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{BivariateKernelSpec, KernelSpec};

    #[test]
    fn grid_len_checks() {
        assert!(grid_len(1, 1.0).is_err());
        assert_eq!(grid_len(10, 0.25).unwrap(), 3);
    }

    #[test]
    fn circulant_matches_dense_on_ar1() {
        // AR(1) autocorrelation is a valid positive definite sequence
        let acf: Vec<f64> = (0..=8).map(|k| 0.6f64.powi(k)).collect();
        let s = IncrementSampler::from_autocorrelation(&acf, SimScheme::CirculantEmbedding).unwrap();
        assert!(!s.embedding().fallback);
        assert_eq!(s.len(), 8);
        let mut r = crate::rng::stream(1, 0, 0);
        let mut acc = vec![0.0; 3];
        let reps = 20000;
        for _ in 0..reps {
            let x = &s.draw(&mut r)[0];
            acc[0] += x[0] * x[0];
            acc[1] += x[3] * x[4];
            acc[2] += x[1] * x[6];
        }
        for (v, target) in acc.iter().zip([1.0, 0.6, 0.6f64.powi(5)]) {
            let est = v / reps as f64;
            assert!((est - target).abs() < 4.0 * (2.0 / reps as f64).sqrt(), "{est} vs {target}");
        }
    }

    #[test]
    fn negative_embedding_falls_back_to_cholesky() {
        let acf: Vec<f64> = (0..=16).map(|k| (-(k as f64 / 10.0).powi(2)).exp()).collect();
        let s = IncrementSampler::from_autocorrelation(&acf, SimScheme::CirculantEmbedding).unwrap();
        let e = s.embedding();
        assert!(e.fallback);
        assert!(e.min_relative_eigenvalue < 0.0);
        assert_eq!(s.scheme(), SimScheme::CholeskyExact);
        let x = s.sample(5, 0);
        assert_eq!(x.len(), 16);
        assert!(x.embedding.fallback);
    }

    #[test]
    fn samples_are_deterministic() {
        let model = CovarianceModel::new(KernelSpec::gamma(-0.25, 1.0).unwrap());
        let a = simulate_increments(&model, 64, 1.0, 11).unwrap();
        let b = simulate_increments(&model, 64, 1.0, 11).unwrap();
        assert_eq!(a, b);
        let c = simulate_increments(&model, 64, 1.0, 12).unwrap();
        assert_ne!(a.increments, c.increments);
    }

    /// Exact covariance of a sampler's output, from its columns as a linear map.
    fn implied_covariance(s: &IncrementSampler, inputs: usize) -> Vec<Vec<f64>> {
        let k = s.len() * s.dim();
        let mut cov = vec![vec![0.0; k]; k];
        for u in 0..inputs {
            let mut count = 0;
            let rows = s.draw_with(&mut || {
                count += 1;
                if count - 1 == u {
                    1.0
                } else {
                    0.0
                }
            });
            let col: Vec<f64> = (0..k).map(|p| rows[p % s.dim()][p / s.dim()]).collect();
            for p in 0..k {
                for q in 0..k {
                    cov[p][q] += col[p] * col[q];
                }
            }
        }
        cov
    }

    #[test]
    fn bivariate_embedding_reproduces_cross_table() {
        let spec = BivariateKernelSpec::new(
            KernelSpec::gamma(-0.25, 1.0).unwrap(),
            KernelSpec::gamma(-0.25, 2.0).unwrap(),
            0.5,
        )
        .unwrap();
        let model = BivariateModel::new(spec);
        let n = 16;
        let table = model.cross_lag_correlations(n, 16).unwrap();
        let circ = IncrementSampler::bivariate(&model, n, 1.0).unwrap();
        assert_eq!(circ.scheme(), SimScheme::CirculantEmbedding);
        assert!(circ.embedding().min_relative_eigenvalue > 0.0);
        let cov = implied_covariance(&circ, 4 * 2 * 16);
        for p in 0..32 {
            for q in 0..32 {
                let target = table.r(p % 2 + 1, q % 2 + 1, (q / 2) as i64 - (p / 2) as i64);
                assert!((cov[p][q] - target).abs() < 1e-12, "{p} {q}: {} vs {target}", cov[p][q]);
            }
        }
    }

    #[test]
    fn univariate_embedding_reproduces_toeplitz() {
        let model = CovarianceModel::new(KernelSpec::gamma(-0.25, 1.0).unwrap());
        let s = IncrementSampler::univariate(&model, 20, 1.0).unwrap();
        let acf = model.lag_correlations(20, 20).unwrap();
        let cov = implied_covariance(&s, 2 * 2 * 20);
        for p in 0..20 {
            for q in 0..20 {
                assert!((cov[p][q] - acf[p.abs_diff(q)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn asymmetric_pair_uses_exact_fallback() {
        let spec = BivariateKernelSpec::new(
            KernelSpec::gamma(-0.25, 1.0).unwrap(),
            KernelSpec::gamma(-0.4, 5.0).unwrap(),
            0.8,
        )
        .unwrap();
        let model = BivariateModel::new(spec);
        let n = 8;
        let table = model.cross_lag_correlations(n, 8).unwrap();
        let s = IncrementSampler::bivariate(&model, n, 1.0).unwrap();
        assert!(s.embedding().fallback);
        let cov = implied_covariance(&s, 16);
        for p in 0..16 {
            for q in 0..16 {
                let target = table.r(p % 2 + 1, q % 2 + 1, (q / 2) as i64 - (p / 2) as i64);
                assert!((cov[p][q] - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn core_path_round_trip() {
        let model = CovarianceModel::new(KernelSpec::gamma(-0.25, 1.0).unwrap());
        let path = simulate_increments(&model, 32, 1.0, 2).unwrap();
        let core = core_path_from_increments(&path);
        assert_eq!(core[0][0], path.taus[0] * path.increments[0][0]);
        let back = increments_from_core_path(&core[0], path.taus[0]);
        for (a, b) in back.iter().zip(&path.increments[0]) {
            assert!((a - b).abs() < 1e-12 * (1.0 + b.abs()));
        }
        let mut buf = Vec::new();
        path.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("i,t,x1\n1,0.03125,"));
    }
}
