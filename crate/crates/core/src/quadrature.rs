//! Numerical integration building blocks.
//!
//! Three families are used across the crate:
//!
//! * adaptive Gauss–Legendre on smooth panels (30-point rule with a 20-point
//!   companion for the error estimate, bisection on failure),
//! * tanh–sinh (double exponential) on panels with algebraic endpoint
//!   singularities such as `x^α` with `α > -1`,
//! * a piecewise Gauss–Legendre rule for expectations against the standard
//!   normal density, split at the non-smooth points of the integrand.
//!
//! Gauss–Hermite and Gauss–Laguerre rules are also provided; they are exact for
//! polynomial integrands and serve as independent checks.

use std::f64::consts::{FRAC_PI_2, PI};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and budgets for the kernel integrals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadratureConfig {
    /// Absolute tolerance per panel.
    pub abs_tol: f64,
    /// Relative tolerance per panel, measured against `∫|f|` on the panel.
    pub rel_tol: f64,
    /// Maximum bisection depth for adaptive Gauss–Legendre.
    pub max_depth: u32,
    /// Neglected tail energy allowed beyond the truncation horizon.
    pub tail_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-10, rel_tol: 1e-12, max_depth: 40, tail_tol: 1e-12 }
    }
}

impl QuadratureConfig {
    fn accepts(&self, err: f64, abs_mass: f64) -> bool {
        err <= self.abs_tol.max(self.rel_tol * abs_mass)
    }
}

/// Nodes and weights of an n-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre_with_derivative(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre_with_derivative(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Integrates `f` over `[a, b]`; also returns `∫|f|` under the same rule.
    #[inline]
    pub fn integrate<F: FnMut(f64) -> f64>(&self, f: &mut F, a: f64, b: f64) -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut s = 0.0;
        let mut sa = 0.0;
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let v = f(c + h * x);
            s += w * v;
            sa += w * v.abs();
        }
        (s * h, sa * h.abs())
    }
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let d = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, d)
}

/// Shared rule of the given order; orders used by the crate are cached.
pub fn gauss_legendre(n: usize) -> &'static GaussLegendre {
    static G10: OnceLock<GaussLegendre> = OnceLock::new();
    static G20: OnceLock<GaussLegendre> = OnceLock::new();
    static G30: OnceLock<GaussLegendre> = OnceLock::new();
    static G40: OnceLock<GaussLegendre> = OnceLock::new();
    match n {
        10 => G10.get_or_init(|| GaussLegendre::new(10)),
        20 => G20.get_or_init(|| GaussLegendre::new(20)),
        30 => G30.get_or_init(|| GaussLegendre::new(30)),
        40 => G40.get_or_init(|| GaussLegendre::new(40)),
        _ => Box::leak(Box::new(GaussLegendre::new(n))),
    }
}

/// Adaptive Gauss–Legendre on a smooth panel.
pub fn adaptive_gl<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let hi = gauss_legendre(30);
    let lo = gauss_legendre(20);
    let mut total = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    while let Some((l, r, depth)) = stack.pop() {
        let (v_hi, mass) = hi.integrate(f, l, r);
        let (v_lo, _) = lo.integrate(f, l, r);
        let err = (v_hi - v_lo).abs();
        if cfg.accepts(err, mass) || !err.is_finite() && depth >= cfg.max_depth {
            if !v_hi.is_finite() {
                return Err(Error::QuadratureNonConvergence { a: l, b: r, estimate: err, tol: cfg.abs_tol });
            }
            total += v_hi;
        } else if depth >= cfg.max_depth {
            return Err(Error::QuadratureNonConvergence { a: l, b: r, estimate: err, tol: cfg.abs_tol });
        } else {
            let m = 0.5 * (l + r);
            stack.push((m, r, depth + 1));
            stack.push((l, m, depth + 1));
        }
    }
    Ok(total)
}

/// Tanh–sinh quadrature on `[a, b]`, tolerant of integrable endpoint
/// singularities. The integrand is never evaluated at `a` or `b` themselves.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, cfg: &QuadratureConfig) -> Result<f64> {
    const MAX_LEVEL: u32 = 12;
    const T_MAX: f64 = 6.56;
    if b <= a {
        return Ok(0.0);
    }
    let half = 0.5 * (b - a);

    // term at abscissa t, with both the value and |value| accumulated
    let mut eval = |t: f64| -> (f64, f64) {
        let s = FRAC_PI_2 * t.sinh();
        let cs = s.cosh();
        let w = FRAC_PI_2 * t.cosh() / (cs * cs);
        if w == 0.0 || !w.is_finite() {
            return (0.0, 0.0);
        }
        let x =
            if t < 0.0 { a + half * 2.0 / (1.0 + (-2.0 * s).exp()) } else { b - half * 2.0 / (1.0 + (2.0 * s).exp()) };
        if x <= a || x >= b {
            return (0.0, 0.0);
        }
        let v = f(x) * w * half;
        (v, v.abs())
    };

    let mut h = 1.0;
    let (mut sum, mut mass) = eval(0.0);
    let mut k = 1.0;
    while k * h <= T_MAX {
        let (v1, m1) = eval(k * h);
        let (v2, m2) = eval(-k * h);
        sum += v1 + v2;
        mass += m1 + m2;
        k += 1.0;
    }
    let mut estimate = sum * h;
    let mut err = f64::INFINITY;
    for level in 1..=MAX_LEVEL {
        h *= 0.5;
        let mut add = 0.0;
        let mut add_mass = 0.0;
        let mut j = 1.0;
        while j * h <= T_MAX {
            let (v1, m1) = eval(j * h);
            let (v2, m2) = eval(-j * h);
            add += v1 + v2;
            add_mass += m1 + m2;
            j += 2.0;
        }
        sum += add;
        mass += add_mass;
        let next = sum * h;
        err = (next - estimate).abs();
        estimate = next;
        if level >= 3 && cfg.accepts(err, mass * h) {
            return Ok(estimate);
        }
    }
    if estimate.is_finite() && cfg.accepts(err, mass * h * 1e3) {
        return Ok(estimate);
    }
    Err(Error::QuadratureNonConvergence { a, b, estimate: err, tol: cfg.abs_tol })
}

/// How a panel should be integrated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PanelKind {
    Smooth,
    Singular,
}

/// Integrates over a list of adjacent panels.
pub fn integrate_panels<F: FnMut(f64) -> f64>(
    f: &mut F,
    panels: &[(f64, f64, PanelKind)],
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let mut total = 0.0;
    for &(a, b, kind) in panels {
        if b <= a {
            continue;
        }
        total += match kind {
            PanelKind::Smooth => adaptive_gl(f, a, b, cfg)?,
            PanelKind::Singular => tanh_sinh(f, a, b, cfg)?,
        };
    }
    Ok(total)
}

/// Panels `[0,s], [s,2s], [2s,4s], ...` up to `horizon`, the first
/// `singular_panels` of which are integrated with tanh–sinh.
pub fn geometric_panels(scale: f64, horizon: f64, singular_panels: usize) -> Vec<(f64, f64, PanelKind)> {
    let mut panels = Vec::new();
    let mut left = 0.0;
    let mut right = scale;
    let mut idx = 0;
    while left < horizon {
        let r = right.min(horizon);
        let kind = if idx < singular_panels { PanelKind::Singular } else { PanelKind::Smooth };
        panels.push((left, r, kind));
        left = r;
        right = if idx == 0 { 2.0 * scale } else { 2.0 * r };
        idx += 1;
    }
    panels
}

/// Restricts a panel list to `[lo, ∞)`.
pub fn clip_panels(panels: &[(f64, f64, PanelKind)], lo: f64) -> Vec<(f64, f64, PanelKind)> {
    panels.iter().filter(|p| p.1 > lo).map(|&(a, b, k)| (a.max(lo), b, k)).collect()
}

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[inline]
pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Piecewise Gauss–Legendre rule for `E[f(Z)]`, `Z ~ N(0,1)`.
///
/// The real line is truncated to `[-cutoff, cutoff]`, cut at the supplied
/// breakpoints and covered by panels no wider than `width`. Panels touching a
/// breakpoint are refined geometrically `grading` times toward it, which keeps
/// `|x|^q` type behaviour at the breakpoint from spoiling convergence.
#[derive(Debug, Clone, Copy)]
pub struct NormalRule {
    pub order: usize,
    pub width: f64,
    pub grading: usize,
    pub cutoff: f64,
}

impl NormalRule {
    /// High-accuracy default for one- and two-dimensional expectations.
    pub fn accurate() -> Self {
        Self { order: 20, width: 1.0, grading: 24, cutoff: 12.0 }
    }

    /// Cheap rule for the nested four-dimensional evaluations.
    pub fn coarse(order: usize) -> Self {
        Self { order, width: 24.0, grading: 0, cutoff: 9.0 }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    /// Calls `visit(z, w)` for every node of the rule on `[lo, hi]`, where `w`
    /// already includes the normal density.
    pub fn for_each_node<V: FnMut(f64, f64)>(&self, lo: f64, hi: f64, graded_lo: bool, graded_hi: bool, visit: &mut V) {
        let lo = lo.max(-self.cutoff);
        let hi = hi.min(self.cutoff);
        if hi <= lo {
            return;
        }
        let gl = gauss_legendre(self.order);
        let count = ((hi - lo) / self.width).ceil().max(1.0) as usize;
        let step = (hi - lo) / count as f64;
        let mut panel = |a: f64, b: f64| {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                let z = c + h * x;
                visit(z, w * h * normal_pdf(z));
            }
        };
        for i in 0..count {
            let a = lo + step * i as f64;
            let b = if i + 1 == count { hi } else { lo + step * (i + 1) as f64 };
            let grade_left = graded_lo && i == 0 && self.grading > 0;
            let grade_right = graded_hi && i + 1 == count && self.grading > 0;
            match (grade_left, grade_right) {
                (false, false) => panel(a, b),
                (true, false) => self.graded(a, b, true, &mut panel),
                (false, true) => self.graded(a, b, false, &mut panel),
                (true, true) => {
                    let m = 0.5 * (a + b);
                    self.graded(a, m, true, &mut panel);
                    self.graded(m, b, false, &mut panel);
                }
            }
        }
    }

    /// Geometric subpanels of `[a, b]` accumulating toward `a` (or `b`).
    fn graded<P: FnMut(f64, f64)>(&self, a: f64, b: f64, toward_a: bool, panel: &mut P) {
        let len = b - a;
        let mut prev = 0.0;
        for k in (0..=self.grading).rev() {
            let frac = f64::powi(0.5, k as i32);
            if toward_a {
                panel(a + len * prev, a + len * frac);
            } else {
                panel(b - len * frac, b - len * prev);
            }
            prev = frac;
        }
    }

    /// `∫_lo^hi f(z) φ(z) dz`.
    pub fn integrate<F: FnMut(f64) -> f64>(
        &self,
        f: &mut F,
        lo: f64,
        hi: f64,
        graded_lo: bool,
        graded_hi: bool,
    ) -> f64 {
        let mut s = 0.0;
        self.for_each_node(lo, hi, graded_lo, graded_hi, &mut |z, w| s += w * f(z));
        s
    }

    /// `E[f(Z)]` with the line cut at `breakpoints`.
    pub fn expect<F: FnMut(f64) -> f64>(&self, f: &mut F, breakpoints: &[f64]) -> f64 {
        let mut s = 0.0;
        self.for_each_piece(breakpoints, &mut |lo, hi, gl, gh| s += self.integrate(f, lo, hi, gl, gh));
        s
    }

    /// Visits the pieces between sorted breakpoints as `(lo, hi, graded_lo, graded_hi)`.
    pub fn for_each_piece<V: FnMut(f64, f64, bool, bool)>(&self, breakpoints: &[f64], visit: &mut V) {
        let mut cuts: Vec<f64> =
            breakpoints.iter().copied().filter(|b| b.is_finite() && b.abs() < self.cutoff).collect();
        cuts.sort_by(|a, b| a.total_cmp(b));
        cuts.dedup();
        let mut lo = -self.cutoff;
        let mut graded_lo = false;
        for &c in &cuts {
            visit(lo, c, graded_lo, true);
            lo = c;
            graded_lo = true;
        }
        visit(lo, self.cutoff, graded_lo, false);
    }
}

/// Gauss–Hermite rule for the standard normal weight: `Σ w_i f(x_i) ≈ E[f(Z)]`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Golub–Welsch: eigen-decomposition of the Jacobi matrix of the
    /// probabilists' Hermite recurrence.
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let jacobi =
            nalgebra::DMatrix::from_fn(
                n,
                n,
                |i, j| {
                    if i + 1 == j || j + 1 == i {
                        (i.max(j) as f64).sqrt()
                    } else {
                        0.0
                    }
                },
            );
        let eig = nalgebra::SymmetricEigen::new(jacobi);
        let mut pairs: Vec<(f64, f64)> =
            (0..n).map(|k| (eig.eigenvalues[k], eig.eigenvectors[(0, k)].powi(2))).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = pairs.iter().map(|p| p.1).sum();
        Self { nodes: pairs.iter().map(|p| p.0).collect(), weights: pairs.iter().map(|p| p.1 / total).collect() }
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

/// Gauss–Laguerre rule for the weight `e^{-x}` on `[0, ∞)`.
#[derive(Debug, Clone)]
pub struct GaussLaguerre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLaguerre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let mut z = 0.0f64;
        for i in 0..n {
            z = match i {
                0 => 3.0 / (1.0 + 2.4 * nf),
                1 => z + 15.0 / (1.0 + 2.5 * nf),
                _ => {
                    let ai = (i - 1) as f64;
                    z + ((1.0 + 2.55 * ai) / (1.9 * ai)) * (z - nodes[i - 2])
                }
            };
            let mut p2 = 0.0;
            let mut pp = 0.0;
            for _ in 0..200 {
                let mut p1 = 1.0;
                p2 = 0.0;
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0 - z) * p2 - jf * p3) / (jf + 1.0);
                }
                pp = (nf * p1 - nf * p2) / z;
                let z1 = z;
                z = z1 - p1 / pp;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            nodes[i] = z;
            weights[i] = -1.0 / (pp * nf * p2);
        }
        Self { nodes, weights }
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(*x)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_integrates_polynomials_exactly() {
        let gl = GaussLegendre::new(10);
        let (v, _) = gl.integrate(&mut |x: f64| x.powi(18) + 3.0 * x.powi(5), -1.0, 1.0);
        assert!((v - 2.0 / 19.0).abs() < 1e-14);
        let w: f64 = gl.weights.iter().sum();
        assert!((w - 2.0).abs() < 1e-14);
    }

    #[test]
    fn tanh_sinh_handles_endpoint_singularity() {
        let cfg = QuadratureConfig { abs_tol: 1e-14, rel_tol: 1e-14, ..Default::default() };
        // ∫_0^1 x^{-1/2} dx = 2
        let v = tanh_sinh(&mut |x: f64| x.powf(-0.5), 0.0, 1.0, &cfg).unwrap();
        assert!((v - 2.0).abs() < 1e-12, "{v}");
        // ∫_0^1 x^{-0.9} dx = 10
        let v = tanh_sinh(&mut |x: f64| x.powf(-0.9), 0.0, 1.0, &cfg).unwrap();
        assert!((v - 10.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn adaptive_gl_reports_nonconvergence() {
        let cfg = QuadratureConfig { abs_tol: 1e-15, rel_tol: 1e-15, max_depth: 2, ..Default::default() };
        let r = adaptive_gl(&mut |x: f64| (1.0 / x).sin(), 1e-6, 1.0, &cfg);
        assert!(matches!(r, Err(Error::QuadratureNonConvergence { .. })));
    }

    #[test]
    fn geometric_panels_cover_horizon() {
        let p = geometric_panels(0.01, 3.0, 2);
        assert_eq!(p[0], (0.0, 0.01, PanelKind::Singular));
        assert_eq!(p[1].2, PanelKind::Singular);
        assert_eq!(p[2].2, PanelKind::Smooth);
        assert_eq!(p.last().unwrap().1, 3.0);
        for w in p.windows(2) {
            assert_eq!(w[0].1, w[1].0);
        }
    }

    #[test]
    fn normal_rule_moments() {
        let rule = NormalRule::accurate();
        let m4 = rule.expect(&mut |z: f64| z.powi(4), &[]);
        assert!((m4 - 3.0).abs() < 1e-13, "{m4}");
        // E[|Z|^{1.5} 1{Z>=0}] = 2^{0.75} Γ(1.25) / (2 √π)
        let exact = 2f64.powf(0.75) * statrs::function::gamma::gamma(1.25) / (2.0 * PI.sqrt());
        let v = rule.expect(&mut |z: f64| if z >= 0.0 { z.powf(1.5) } else { 0.0 }, &[0.0]);
        assert!((v - exact).abs() < 1e-13, "{v} vs {exact}");
    }

    #[test]
    fn hermite_rule_moments() {
        let gh = GaussHermite::new(200);
        let w: f64 = gh.weights.iter().sum();
        assert!((w - 1.0).abs() < 1e-12);
        assert!((gh.expect(|x| x * x) - 1.0).abs() < 1e-12);
        assert!((gh.expect(|x| x.powi(6)) - 15.0).abs() < 1e-10);
    }

    #[test]
    fn laguerre_rule_moments() {
        let gq = GaussLaguerre::new(40);
        // ∫ x^5 e^{-x} = 120
        assert!((gq.integrate(|x| x.powi(5)) - 120.0).abs() < 1e-9);
        assert!((gq.integrate(|_| 1.0) - 1.0).abs() < 1e-13);
    }
}
