//! Hermite polynomials, Hermite expansions of the power-variation test
//! functions and Gaussian expectations of their products.
//!
//! Coefficients follow the probabilists' convention
//! `a_k = E[φ(Z) H_k(Z)] / k!`, so that `Var φ(Z) = Σ_{k≥1} k! a_k²`.
//! Internally the orthonormal polynomials `ĥ_k = H_k / √k!` are used; with
//! `c_k = E[φ(Z) ĥ_k(Z)]` one has `k! a_k² = c_k²`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix4};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};
use crate::quadrature::NormalRule;

/// Sign restriction applied to `|x|^q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Indicator {
    /// `|x|^q`.
    All,
    /// `|x|^q 1{x >= 0}`.
    NonNegative,
    /// `|x|^q 1{x < 0}`.
    NonPositive,
    /// `sign(x) |x|^q`; with `q = 1` this is the identity.
    Signed,
}

/// `φ(x) = |x|^q I(x)`, optionally with its Gaussian mean removed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestFunction {
    pub q: f64,
    pub indicator: Indicator,
    #[serde(default)]
    pub centered: bool,
}

impl TestFunction {
    pub fn new(q: f64, indicator: Indicator, centered: bool) -> Result<Self> {
        if !(q >= 1.0 && q.is_finite()) {
            return Err(Error::InvalidTestFunction(format!("power q = {q} must be finite and at least 1")));
        }
        Ok(Self { q, indicator, centered })
    }

    /// `p(x) = max(x, 0)`.
    pub fn positive_part() -> Self {
        Self { q: 1.0, indicator: Indicator::NonNegative, centered: false }
    }

    /// `|x| 1{x < 0}`, the downside counterpart of `p`.
    pub fn negative_part() -> Self {
        Self { q: 1.0, indicator: Indicator::NonPositive, centered: false }
    }

    /// `f(x) = x² 1{x >= 0}`, the upside semivariance function.
    pub fn upside_square() -> Self {
        Self { q: 2.0, indicator: Indicator::NonNegative, centered: false }
    }

    pub fn centered(mut self) -> Self {
        self.centered = true;
        self
    }

    pub fn uncentered(mut self) -> Self {
        self.centered = false;
        self
    }

    /// `φ(x)` without centering. Ties at zero go to the upside.
    #[inline]
    pub fn eval_raw(&self, x: f64) -> f64 {
        let ax = x.abs();
        let pow = if self.q == 1.0 {
            ax
        } else if self.q == 2.0 {
            ax * ax
        } else {
            ax.powf(self.q)
        };
        match self.indicator {
            Indicator::All => pow,
            Indicator::NonNegative => {
                if x >= 0.0 {
                    pow
                } else {
                    0.0
                }
            }
            Indicator::NonPositive => {
                if x < 0.0 {
                    pow
                } else {
                    0.0
                }
            }
            Indicator::Signed => {
                if x < 0.0 {
                    -pow
                } else {
                    pow
                }
            }
        }
    }

    /// `φ(x)`, minus `E φ(Z)` when centered.
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.centered {
            self.eval_raw(x) - self.gaussian_mean()
        } else {
            self.eval_raw(x)
        }
    }

    /// Share of `E|Z|^q` carried by the indicator.
    fn indicator_share(&self) -> f64 {
        match self.indicator {
            Indicator::All => 1.0,
            Indicator::NonNegative | Indicator::NonPositive => 0.5,
            Indicator::Signed => 0.0,
        }
    }

    /// `E φ(Z)` of the uncentered function.
    pub fn gaussian_mean(&self) -> f64 {
        self.indicator_share() * abs_normal_moment(self.q)
    }

    /// `Var φ(Z)`.
    pub fn gaussian_variance(&self) -> f64 {
        let second = match self.indicator {
            Indicator::All | Indicator::Signed => 1.0,
            _ => 0.5,
        } * abs_normal_moment(2.0 * self.q);
        second - self.gaussian_mean().powi(2)
    }

    pub fn label(&self) -> String {
        let ind = match self.indicator {
            Indicator::All => "",
            Indicator::NonNegative => "1{x>=0}",
            Indicator::NonPositive => "1{x<0}",
            Indicator::Signed => "sign(x)",
        };
        let c = if self.centered { " (centered)" } else { "" };
        format!("|x|^{}{}{}", self.q, ind, c)
    }
}

/// `E|Z|^p = 2^{p/2} Γ((p+1)/2) / √π`.
pub fn abs_normal_moment(p: f64) -> f64 {
    2f64.powf(0.5 * p) * gamma(0.5 * (p + 1.0)) / PI.sqrt()
}

/// Probabilists' Hermite polynomial `H_p(x)` by the three-term recurrence.
pub fn hermite_poly(p: usize, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for k in 0..p {
        let next = x * cur - k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k] = ĥ_k(x) = H_k(x) / √k!` for `k < out.len()`.
#[inline]
pub fn normalized_hermite(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for k in 1..out.len().saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (x * out[k] - kf.sqrt() * out[k - 1]) / (kf + 1.0).sqrt();
    }
}

/// `k!` as a float (exact up to 22!).
pub fn factorial(k: usize) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * i as f64)
}

/// Hermite expansion `φ(x) = a_0 + Σ_{k=1}^K a_k H_k(x) + remainder`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HermiteExpansion {
    pub function: TestFunction,
    /// `a_0 = E φ(Z)` of the (possibly centered) function.
    pub mean: f64,
    /// `a_1, ..., a_K`.
    pub coefficients: Vec<f64>,
    pub truncation: usize,
    /// `Var φ(Z) - Σ_{k≤K} k! a_k²`.
    pub residual_l2: f64,
    pub variance: f64,
}

impl HermiteExpansion {
    /// `a_k` for `k >= 1`.
    pub fn a(&self, k: usize) -> f64 {
        assert!(k >= 1 && k <= self.truncation, "coefficient index {k} out of range");
        self.coefficients[k - 1]
    }

    /// `k! a_k²`.
    pub fn energy(&self, k: usize) -> f64 {
        let c = self.a(k);
        factorial(k) * c * c
    }

    /// Writes `k,a_k,k!a_k^2` rows.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["k", "a_k", "k_factorial_a_k_sq"])?;
        w.write_record(["0".to_string(), format!("{:.17e}", self.mean), String::new()])?;
        for k in 1..=self.truncation {
            w.write_record([k.to_string(), format!("{:.17e}", self.a(k)), format!("{:.17e}", self.energy(k))])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Tolerance on the Parseval identity before the expansion is rejected.
const PARSEVAL_TOL: f64 = 1e-8;

/// Orthonormal coefficients `c_k = E[φ(Z) ĥ_k(Z)]`, `k = 0..=K`.
pub(crate) fn orthonormal_coefficients(f: &TestFunction, k_max: usize) -> Vec<f64> {
    let rule = NormalRule::accurate();
    let mut c = vec![0.0; k_max + 1];
    let mut h = vec![0.0; k_max + 1];
    rule.for_each_piece(&[0.0], &mut |lo, hi, gl, gh| {
        rule.for_each_node(lo, hi, gl, gh, &mut |z, w| {
            normalized_hermite(z, &mut h);
            let v = w * f.eval(z);
            for (ck, hk) in c.iter_mut().zip(&h) {
                *ck += v * hk;
            }
        })
    });
    c
}

/// `a_1..a_K` by piecewise Gauss–Legendre quadrature split at the kink of `φ`.
pub fn expansion_coefficients(f: &TestFunction, k_max: usize) -> Result<HermiteExpansion> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("expansion order K must be at least 1".into()));
    }
    let c = orthonormal_coefficients(f, k_max);
    let variance = f.gaussian_variance();
    let captured: f64 = c[1..].iter().map(|v| v * v).sum();
    let residual = variance - captured;
    if residual < -PARSEVAL_TOL * variance.max(1.0) {
        return Err(Error::QuadratureDegeneracy(format!(
            "Parseval violated for {}: Σ k! a_k² = {captured} exceeds Var = {variance}",
            f.label()
        )));
    }
    let coefficients = (1..=k_max).map(|k| c[k] / factorial(k).sqrt()).collect();
    Ok(HermiteExpansion {
        function: *f,
        mean: c[0],
        coefficients,
        truncation: k_max,
        residual_l2: residual.max(0.0),
        variance,
    })
}

/// Smallest `k >= 1` with `|a_k|` above `1e-12 · max_k |a_k|`.
pub fn hermite_rank(f: &TestFunction, k_max: usize) -> Result<usize> {
    let exp = expansion_coefficients(&f.centered(), k_max)?;
    let scale = exp.coefficients.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let threshold = 1e-12 * scale;
    exp.coefficients
        .iter()
        .position(|a| a.abs() > threshold && a.abs() > 1e-15)
        .map(|i| i + 1)
        .ok_or(Error::RankUndetermined(k_max))
}

/// Pivoted Cholesky factor of a 2×2 covariance.
///
/// `X = mean + L z` where `L` is lower triangular in the pivoted order
/// `(order[0], order[1])`; zero columns mark rank deficiency.
#[derive(Debug, Clone, Copy)]
struct Factor2 {
    order: [usize; 2],
    l11: f64,
    l21: f64,
    l22: f64,
}

const RANK_TOL: f64 = 1e-13;

impl Factor2 {
    fn new(cov: [[f64; 2]; 2]) -> Result<Self> {
        let (c00, c11) = (cov[0][0], cov[1][1]);
        let scale = c00.abs().max(c11.abs()).max(1e-300);
        if c00 < -RANK_TOL * scale || c11 < -RANK_TOL * scale {
            return Err(Error::NotPositiveSemidefinite(c00.min(c11)));
        }
        let order = if c00 >= c11 { [0, 1] } else { [1, 0] };
        let (p, q) = (order[0], order[1]);
        let cpp = cov[p][p];
        if cpp <= RANK_TOL * scale.max(1.0) {
            return Ok(Self { order, l11: 0.0, l21: 0.0, l22: 0.0 });
        }
        let l11 = cpp.sqrt();
        let l21 = cov[q][p] / l11;
        let rem = cov[q][q] - l21 * l21;
        if rem < -1e-9 * scale {
            return Err(Error::NotPositiveSemidefinite(rem));
        }
        let l22 = if rem <= RANK_TOL * scale.max(1.0) { 0.0 } else { rem.sqrt() };
        Ok(Self { order, l11, l21, l22 })
    }
}

/// `E[h(X_1, X_2)]` for `X ~ N(mean, cov)`, rank-aware.
///
/// The integration grid is cut wherever a coordinate of `X` crosses zero,
/// which is where the test functions in this module lose smoothness.
pub fn gauss2_expect<H: FnMut(f64, f64) -> f64>(
    h: &mut H,
    mean: [f64; 2],
    cov: [[f64; 2]; 2],
    rule: &NormalRule,
) -> Result<f64> {
    let fac = Factor2::new(cov)?;
    let [p, q] = fac.order;
    let mut call = |xp: f64, xq: f64| {
        let mut x = [0.0; 2];
        x[p] = xp;
        x[q] = xq;
        h(x[0], x[1])
    };
    let (mp, mq) = (mean[p], mean[q]);
    if fac.l11 == 0.0 {
        return Ok(call(mp, mq));
    }
    let outer_cuts = [-mp / fac.l11, if fac.l21 != 0.0 && fac.l22 == 0.0 { -mq / fac.l21 } else { f64::NAN }];
    let mut total = 0.0;
    rule.for_each_piece(&outer_cuts, &mut |lo, hi, gl, gh| {
        rule.for_each_node(lo, hi, gl, gh, &mut |z1, w1| {
            let xp = mp + fac.l11 * z1;
            let base = mq + fac.l21 * z1;
            if fac.l22 == 0.0 {
                total += w1 * call(xp, base);
            } else {
                let inner = rule.expect(&mut |z2| call(xp, base + fac.l22 * z2), &[-base / fac.l22]);
                total += w1 * inner;
            }
        })
    });
    Ok(total)
}

/// `E[φ(Z_1) ψ(Z_2)]` for a standard bivariate normal pair with correlation `rho`.
pub fn bivariate_expectation(f: &TestFunction, g: &TestFunction, rho: f64) -> Result<f64> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho = {rho} outside [-1, 1]")));
    }
    gauss2_expect(&mut |x, y| f.eval(x) * g.eval(y), [0.0; 2], [[1.0, rho], [rho, 1.0]], &NormalRule::accurate())
}

/// `E[Z_1^+ Z_2^+] = (√(1-ρ²) + ρ(π/2 + arcsin ρ)) / (2π)`.
pub fn positive_part_product_mean(rho: f64) -> f64 {
    ((1.0 - rho * rho).max(0.0).sqrt() + rho * (0.5 * PI + rho.asin())) / (2.0 * PI)
}

/// `h(x, y) = φ(x) ψ(y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProductFunction {
    pub f: TestFunction,
    pub g: TestFunction,
}

impl ProductFunction {
    pub fn new(f: TestFunction, g: TestFunction) -> Self {
        Self { f, g }
    }

    /// `h(x, y) = p(x) p(y)`, the upside semicovariance function.
    pub fn semicovariance() -> Self {
        Self::new(TestFunction::positive_part(), TestFunction::positive_part())
    }

    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.f.eval(x) * self.g.eval(y)
    }

    /// `E h(X)` for a standard pair with correlation `rho`.
    pub fn mean(&self, rho: f64) -> Result<f64> {
        bivariate_expectation(&self.f, &self.g, rho)
    }
}

/// Result of a four-dimensional covariance evaluation with its convergence check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransformCovariance {
    pub value: f64,
    /// Difference between the 40- and 30-point evaluations.
    pub order_discrepancy: f64,
}

/// `Cov(h(X_0^1, X_0^2), h(X_k^1, X_k^2))` for the 4×4 covariance of
/// `(X_0^1, X_0^2, X_k^1, X_k^2)`.
pub fn covariance_of_transforms(h: &ProductFunction, cov: &[[f64; 4]; 4]) -> Result<f64> {
    covariance_of_transforms_checked(h, cov).map(|c| c.value)
}

/// As [`covariance_of_transforms`], also reporting the order discrepancy.
pub fn covariance_of_transforms_checked(h: &ProductFunction, cov: &[[f64; 4]; 4]) -> Result<TransformCovariance> {
    let m = Matrix4::from_fn(|i, j| 0.5 * (cov[i][j] + cov[j][i]));
    let scale = (0..4).map(|i| m[(i, i)].abs()).fold(0.0, f64::max).max(1e-300);
    let min_eig = m.symmetric_eigenvalues().min();
    if min_eig < -1e-10 * scale {
        return Err(Error::NotPositiveSemidefinite(min_eig));
    }
    let hi = conditional_product_moment(h, &m, &NormalRule::coarse(40))?;
    let lo = conditional_product_moment(h, &m, &NormalRule::coarse(30))?;
    let mean_u = gauss2_expect(&mut |x, y| h.eval(x, y), [0.0; 2], block(&m, 0, 0), &NormalRule::accurate())?;
    let mean_v = gauss2_expect(&mut |x, y| h.eval(x, y), [0.0; 2], block(&m, 2, 2), &NormalRule::accurate())?;
    Ok(TransformCovariance { value: hi - mean_u * mean_v, order_discrepancy: (hi - lo).abs() })
}

fn block(m: &Matrix4<f64>, r: usize, c: usize) -> [[f64; 2]; 2] {
    [[m[(r, c)], m[(r, c + 1)]], [m[(r + 1, c)], m[(r + 1, c + 1)]]]
}

/// `E[h(U) h(V)]` by conditioning `V` on `U`.
fn conditional_product_moment(h: &ProductFunction, m: &Matrix4<f64>, rule: &NormalRule) -> Result<f64> {
    let suu = Matrix2::from_fn(|i, j| m[(i, j)]);
    let svu = Matrix2::from_fn(|i, j| m[(i + 2, j)]);
    let svv = Matrix2::from_fn(|i, j| m[(i + 2, j + 2)]);
    let pinv = suu.pseudo_inverse(1e-12).map_err(|e| Error::QuadratureDegeneracy(e.to_string()))?;
    let a = svu * pinv;
    let s = svv - a * svu.transpose();
    let s = [[s[(0, 0)], 0.5 * (s[(0, 1)] + s[(1, 0)])], [0.5 * (s[(0, 1)] + s[(1, 0)]), s[(1, 1)]]];
    let scale = svv[(0, 0)].max(svv[(1, 1)]).max(1e-300);
    // round-off can leave tiny negative conditional variances
    let s = [[s[0][0].max(0.0), s[0][1]], [s[1][0], s[1][1].max(0.0)]];
    if s[0][0] * s[1][1] - s[0][1] * s[0][1] < -1e-10 * scale * scale {
        return Err(Error::NotPositiveSemidefinite(s[0][0] * s[1][1] - s[0][1] * s[0][1]));
    }
    let s = clamp_psd(s);
    let mut err = None;
    let total = gauss2_expect(
        &mut |u1, u2| {
            let hu = h.eval(u1, u2);
            if hu == 0.0 {
                return 0.0;
            }
            let mean = [a[(0, 0)] * u1 + a[(0, 1)] * u2, a[(1, 0)] * u1 + a[(1, 1)] * u2];
            match gauss2_expect(&mut |v1, v2| h.eval(v1, v2), mean, s, rule) {
                Ok(v) => hu * v,
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            }
        },
        [0.0; 2],
        [[suu[(0, 0)], suu[(0, 1)]], [suu[(1, 0)], suu[(1, 1)]]],
        rule,
    )?;
    match err {
        Some(e) => Err(e),
        None => Ok(total),
    }
}

fn clamp_psd(s: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let bound = (s[0][0] * s[1][1]).max(0.0).sqrt();
    let off = s[0][1].clamp(-bound, bound);
    [[s[0][0], off], [off, s[1][1]]]
}

/// Coefficients `ĉ_{ab} = E[h(Lξ) ĥ_a(ξ_1) ĥ_b(ξ_2)]` of `h` in the chaos of a
/// whitened standard pair, where `L` is the Cholesky factor of
/// `[[1, ρ], [ρ, 1]]` and `ξ` is standard normal in two dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosCoefficients {
    pub rho: f64,
    pub order: usize,
    /// `coeffs[a][b]` for `a + b <= order`.
    pub coeffs: Vec<Vec<f64>>,
    pub mean: f64,
    pub variance: f64,
    /// `Var h - Σ_{1 ≤ a+b ≤ order} ĉ_{ab}²`.
    pub residual: f64,
}

impl ChaosCoefficients {
    #[inline]
    pub fn c(&self, a: usize, b: usize) -> f64 {
        self.coeffs[a][b]
    }
}

/// Whitened chaos coefficients of `h` up to total degree `order`.
pub fn chaos_coefficients(h: &ProductFunction, rho: f64, order: usize) -> Result<ChaosCoefficients> {
    if !(-1.0..=1.0).contains(&rho) {
        return Err(Error::InvalidConfig(format!("rho = {rho} outside [-1, 1]")));
    }
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let rule = NormalRule { order: 20, width: 1.5, grading: 14, cutoff: 10.0 };
    let mut coeffs: Vec<Vec<f64>> = (0..=order).map(|a| vec![0.0; order + 1 - a]).collect();
    let mut h1 = vec![0.0; order + 1];
    let mut h2 = vec![0.0; order + 1];
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    let mut inner_vals: Vec<(f64, f64)> = Vec::new();
    rule.for_each_piece(&[0.0], &mut |lo, hi, gl, gh| {
        rule.for_each_node(lo, hi, gl, gh, &mut |x1, w1| {
            let fx = h.f.eval(x1);
            if fx == 0.0 {
                return;
            }
            normalized_hermite(x1, &mut h1);
            inner_vals.clear();
            if s == 0.0 {
                inner_vals.push((0.0, 1.0));
            } else {
                let cut = -rho * x1 / s;
                rule.for_each_piece(&[cut], &mut |lo2, hi2, gl2, gh2| {
                    rule.for_each_node(lo2, hi2, gl2, gh2, &mut |x2, w2| inner_vals.push((x2, w2)));
                });
            }
            for &(x2, w2) in &inner_vals {
                let v = fx * h.g.eval(rho * x1 + s * x2);
                if v == 0.0 {
                    continue;
                }
                let wv = w1 * w2 * v;
                m1 += wv;
                m2 += wv * v;
                normalized_hermite(x2, &mut h2);
                for (a, row) in coeffs.iter_mut().enumerate() {
                    let wa = wv * h1[a];
                    for (b, c) in row.iter_mut().enumerate() {
                        *c += wa * h2[b];
                    }
                }
            }
        })
    });
    if s == 0.0 {
        // degenerate pair: only the first coordinate carries randomness
        for row in coeffs.iter_mut() {
            for c in row.iter_mut().skip(1) {
                *c = 0.0;
            }
        }
    }
    let variance = m2 - m1 * m1;
    let captured: f64 = coeffs.iter().flatten().map(|c| c * c).sum::<f64>() - coeffs[0][0] * coeffs[0][0];
    let residual = variance - captured;
    if residual < -PARSEVAL_TOL * variance.max(1.0) {
        return Err(Error::QuadratureDegeneracy(format!(
            "chaos Parseval violated: captured {captured} exceeds variance {variance}"
        )));
    }
    Ok(ChaosCoefficients { rho, order, coeffs, mean: m1, variance, residual })
}

/// `Cov(h(U), h(V))` from whitened chaos coefficients, where `U` and `V` are
/// standard pairs with within-pair correlation `chaos.rho` and cross block
/// `C[a][b] = E[U_a V_b]`.
///
/// Uses the diagram formula for products of Hermite polynomials of jointly
/// Gaussian variables: with `M = L⁻¹ C L⁻ᵀ`,
/// `E[ĥ_a(ξ_1)ĥ_b(ξ_2)ĥ_c(η_1)ĥ_d(η_2)] = √(a!b!c!d!) Σ Π M_ij^{p_ij} / p_ij!`
/// over nonnegative integer matrices `p` with row sums `(a, b)` and column
/// sums `(c, d)`.
pub fn chaos_lag_covariance(chaos: &ChaosCoefficients, cross: [[f64; 2]; 2]) -> f64 {
    let rho = chaos.rho;
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    // M = L^{-1} C L^{-T}, L = [[1, 0], [ρ, s]]
    let m = if s == 0.0 {
        [[cross[0][0], 0.0], [0.0, 0.0]]
    } else {
        let li = [[1.0, 0.0], [-rho / s, 1.0 / s]];
        let mut t = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                t[i][j] = (0..2).map(|k| li[i][k] * cross[k][j]).sum();
            }
        }
        let mut out = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                out[i][j] = (0..2).map(|k| t[i][k] * li[j][k]).sum();
            }
        }
        out
    };
    let order = chaos.order;
    let mag = m.iter().flatten().fold(0.0f64, |acc, v| acc + v.abs());
    let top = if mag < 1.0 && mag > 0.0 {
        (((1e-18f64).ln() / mag.ln()).ceil() as usize).clamp(1, order)
    } else if mag == 0.0 {
        return 0.0;
    } else {
        order
    };
    // powers[i][j][p] = M_ij^p / p!
    let mut powers = [[vec![0.0; order + 1], vec![0.0; order + 1]], [vec![0.0; order + 1], vec![0.0; order + 1]]];
    for i in 0..2 {
        for j in 0..2 {
            powers[i][j][0] = 1.0;
            for p in 1..=order {
                powers[i][j][p] = powers[i][j][p - 1] * m[i][j] / p as f64;
            }
        }
    }
    let sqrt_fact: Vec<f64> = (0..=order).map(|k| factorial(k).sqrt()).collect();
    let mut total = 0.0;
    for deg in 1..=top {
        for a in 0..=deg {
            let b = deg - a;
            let cab = chaos.c(a, b);
            if cab == 0.0 {
                continue;
            }
            for c in 0..=deg {
                let d = deg - c;
                let ccd = chaos.c(c, d);
                if ccd == 0.0 {
                    continue;
                }
                let lo = c.saturating_sub(b);
                let hi = a.min(c);
                let mut sum = 0.0;
                for p11 in lo..=hi {
                    let p12 = a - p11;
                    let p21 = c - p11;
                    let p22 = b + p11 - c;
                    sum += powers[0][0][p11] * powers[0][1][p12] * powers[1][0][p21] * powers[1][1][p22];
                }
                total += cab * ccd * sqrt_fact[a] * sqrt_fact[b] * sqrt_fact[c] * sqrt_fact[d] * sum;
            }
        }
    }
    total
}
