//! Curvature functions `f(λ₁,…,λₙ)`: symmetric, homogeneous of degree one and
//! strictly increasing in every argument near the cone point `(1,…,1,0)`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative step for finite-difference fallbacks.
const FD_STEP: f64 = 1e-5;

/// Evaluation interface for a curvature function.
///
/// Only `eval` is required. Missing derivatives fall back to central finite
/// differences: the gradient from `eval`, the Hessian from `grad`.
pub trait CurvatureModel: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;

    fn eval(&self, lambda: &[f64]) -> f64;

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        let mut x = lambda.to_vec();
        (0..lambda.len())
            .map(|i| {
                let h = FD_STEP * lambda[i].abs().max(1.0);
                x[i] = lambda[i] + h;
                let fp = self.eval(&x);
                x[i] = lambda[i] - h;
                let fm = self.eval(&x);
                x[i] = lambda[i];
                (fp - fm) / (2.0 * h)
            })
            .collect()
    }

    /// Row-major `n × n` Hessian.
    fn hess(&self, lambda: &[f64]) -> Vec<f64> {
        hess_from_grad(|x| self.grad(x), lambda)
    }

    /// Closed-form solve of `f(head, x) = target` for the last argument, when
    /// `f` is affine in it. `None` means the caller must root-find.
    fn solve_last(&self, _head: &[f64], _target: f64) -> Option<f64> {
        None
    }

    fn is_mean_curvature(&self) -> bool {
        false
    }

    /// Whether `eval` is defined at `lambda` (independent of the admissible box).
    fn evaluable(&self, lambda: &[f64]) -> bool {
        lambda.iter().all(|l| l.is_finite())
    }

    fn name(&self) -> String;
}

/// `f = Σ λᵢ`.
#[derive(Debug, Clone, Copy)]
pub struct MeanCurvature {
    pub n: usize,
}

impl CurvatureModel for MeanCurvature {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, lambda: &[f64]) -> f64 {
        lambda.iter().sum()
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        vec![1.0; lambda.len()]
    }

    fn hess(&self, lambda: &[f64]) -> Vec<f64> {
        vec![0.0; lambda.len() * lambda.len()]
    }

    fn solve_last(&self, head: &[f64], target: f64) -> Option<f64> {
        Some(target - head.iter().sum::<f64>())
    }

    fn is_mean_curvature(&self) -> bool {
        true
    }

    fn name(&self) -> String {
        "mean".into()
    }
}

/// `f = Σ λᵢ + ε (Σ λᵢ²) / (Σ λᵢ)`.
///
/// Degree one and symmetric by construction. At `(1,…,1,0)` the last partial
/// is `1 − ε/(n−1)`, so `ε < (n−1)/2` keeps it comfortably positive.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedMean {
    pub n: usize,
    pub eps: f64,
}

impl CurvatureModel for PerturbedMean {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, lambda: &[f64]) -> f64 {
        let s: f64 = lambda.iter().sum();
        let q: f64 = lambda.iter().map(|l| l * l).sum();
        s + self.eps * q / s
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        let s: f64 = lambda.iter().sum();
        let q: f64 = lambda.iter().map(|l| l * l).sum();
        lambda
            .iter()
            .map(|&l| 1.0 + self.eps * (2.0 * l / s - q / (s * s)))
            .collect()
    }

    fn hess(&self, lambda: &[f64]) -> Vec<f64> {
        let n = lambda.len();
        let s: f64 = lambda.iter().sum();
        let q: f64 = lambda.iter().map(|l| l * l).sum();
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                let diag = if i == j { 2.0 / s } else { 0.0 };
                out[i * n + j] = self.eps
                    * (diag - 2.0 * (lambda[i] + lambda[j]) / (s * s) + 2.0 * q / (s * s * s));
            }
        }
        out
    }

    fn evaluable(&self, lambda: &[f64]) -> bool {
        lambda.iter().all(|l| l.is_finite()) && lambda.iter().sum::<f64>() > 0.0
    }

    fn name(&self) -> String {
        format!("perturbed(eps={})", self.eps)
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64]) -> Vec<f64> + Send + Sync;

/// Curvature function supplied as closures.
#[derive(Clone)]
pub struct FnCurvature {
    n: usize,
    label: String,
    eval: Arc<EvalFn>,
    grad: Option<Arc<GradFn>>,
}

impl FnCurvature {
    pub fn new(
        n: usize,
        label: impl Into<String>,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { n, label: label.into(), eval: Arc::new(eval), grad: None }
    }

    pub fn with_grad(mut self, grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        self.grad = Some(Arc::new(grad));
        self
    }
}

impl fmt::Debug for FnCurvature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnCurvature").field("n", &self.n).field("label", &self.label).finish()
    }
}

impl CurvatureModel for FnCurvature {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, lambda: &[f64]) -> f64 {
        (self.eval)(lambda)
    }

    fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => g(lambda),
            None => {
                let mut x = lambda.to_vec();
                (0..lambda.len())
                    .map(|i| {
                        let h = FD_STEP * lambda[i].abs().max(1.0);
                        x[i] = lambda[i] + h;
                        let fp = (self.eval)(&x);
                        x[i] = lambda[i] - h;
                        let fm = (self.eval)(&x);
                        x[i] = lambda[i];
                        (fp - fm) / (2.0 * h)
                    })
                    .collect()
            }
        }
    }

    fn hess(&self, lambda: &[f64]) -> Vec<f64> {
        match &self.grad {
            Some(g) => hess_from_grad(|x| g(x), lambda),
            None => hess_from_eval(|x| (self.eval)(x), lambda),
        }
    }

    fn name(&self) -> String {
        self.label.clone()
    }
}

/// Central differences of the gradient, symmetrized.
fn hess_from_grad(grad: impl Fn(&[f64]) -> Vec<f64>, lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut out = vec![0.0; n * n];
    let mut x = lambda.to_vec();
    for j in 0..n {
        let h = FD_STEP * lambda[j].abs().max(1.0);
        x[j] = lambda[j] + h;
        let gp = grad(&x);
        x[j] = lambda[j] - h;
        let gm = grad(&x);
        x[j] = lambda[j];
        for i in 0..n {
            out[i * n + j] = (gp[i] - gm[i]) / (2.0 * h);
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (out[i * n + j] + out[j * n + i]);
            out[i * n + j] = m;
            out[j * n + i] = m;
        }
    }
    out
}

/// Second differences of `eval` alone. A larger step than `FD_STEP` keeps
/// the rounding error of the double quotient near 1e-8.
fn hess_from_eval(eval: impl Fn(&[f64]) -> f64, lambda: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut out = vec![0.0; n * n];
    let mut x = lambda.to_vec();
    let steps: Vec<f64> = lambda.iter().map(|l| 1e-4 * l.abs().max(1.0)).collect();
    for i in 0..n {
        for j in i..n {
            let mut at = |di: f64, dj: f64| {
                x[i] += di * steps[i];
                x[j] += dj * steps[j];
                let v = eval(&x);
                x[i] = lambda[i];
                x[j] = lambda[j];
                v
            };
            let d = if i == j {
                (at(1.0, 0.0) - 2.0 * at(0.0, 0.0) + at(-1.0, 0.0)) / (steps[i] * steps[i])
            } else {
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0))
                    / (4.0 * steps[i] * steps[j])
            };
            out[i * n + j] = d;
            out[j * n + i] = d;
        }
    }
    out
}

/// Axis-aligned box around `(1,…,1,0)` on which `f` is declared valid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainBox {
    pub center: Vec<f64>,
    pub half_widths: Vec<f64>,
}

impl DomainBox {
    /// Half-width `radial` in the first `n−1` coordinates, `axial` in the last.
    pub fn new(n: usize, radial: f64, axial: f64) -> Self {
        let mut center = vec![1.0; n];
        center[n - 1] = 0.0;
        let mut half_widths = vec![radial; n];
        half_widths[n - 1] = axial;
        Self { center, half_widths }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .all(|((x, c), h)| (x - c).abs() <= *h)
    }

    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .all(|((x, c), h)| (x - c).abs() < *h)
    }

    /// Maps a point of the unit cube onto the box.
    fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.center)
            .zip(&self.half_widths)
            .map(|((u, c), h)| c + h * (2.0 * u - 1.0))
            .collect()
    }
}

/// A curvature model together with its admissible box.
#[derive(Debug, Clone)]
pub struct CurvatureFunction {
    model: Arc<dyn CurvatureModel>,
    domain: DomainBox,
}

impl CurvatureFunction {
    pub fn new(model: impl CurvatureModel + 'static) -> Self {
        let n = model.dim();
        Self { model: Arc::new(model), domain: DomainBox::new(n, 0.5, 0.5) }
    }

    pub fn mean(n: usize) -> Self {
        Self::new(MeanCurvature { n })
    }

    pub fn perturbed(n: usize, eps: f64) -> Self {
        Self::new(PerturbedMean { n, eps })
    }

    pub fn with_domain(mut self, domain: DomainBox) -> Self {
        assert_eq!(domain.center.len(), self.dim(), "domain dimension mismatch");
        self.domain = domain;
        self
    }

    pub fn dim(&self) -> usize {
        self.model.dim()
    }

    pub fn domain(&self) -> &DomainBox {
        &self.domain
    }

    pub fn model(&self) -> &dyn CurvatureModel {
        self.model.as_ref()
    }

    pub fn name(&self) -> String {
        self.model.name()
    }

    pub fn eval(&self, lambda: &[f64]) -> f64 {
        self.model.eval(lambda)
    }

    pub fn grad(&self, lambda: &[f64]) -> Vec<f64> {
        self.model.grad(lambda)
    }

    pub fn hess(&self, lambda: &[f64]) -> Vec<f64> {
        self.model.hess(lambda)
    }

    pub fn is_mean_curvature(&self) -> bool {
        self.model.is_mean_curvature()
    }

    pub fn evaluable(&self, lambda: &[f64]) -> bool {
        self.model.evaluable(lambda)
    }

    /// `(1,…,1,0)`.
    pub fn base_point(&self) -> Vec<f64> {
        let mut p = vec![1.0; self.dim()];
        p[self.dim() - 1] = 0.0;
        p
    }
}

/// `f`, `∇f` at `(1,…,1,0)` and the operator coefficient `c = (1+σ²)/∂ₙf`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasePointData {
    pub f0: f64,
    pub grad0: Vec<f64>,
    pub c: f64,
    pub sigma: f64,
}

impl BasePointData {
    pub fn dn_f(&self) -> f64 {
        self.grad0[self.grad0.len() - 1]
    }

    /// `Σ_{i<n} ∂ᵢf(1⃗,0)`.
    pub fn radial_grad_sum(&self) -> f64 {
        self.grad0[..self.grad0.len() - 1].iter().sum()
    }

    /// Coefficient of the leading `1/s` term, `f(1⃗,0)/σ`.
    pub fn leading_coefficient(&self) -> f64 {
        self.f0 / self.sigma
    }
}

pub fn base_point_data(f: &CurvatureFunction, sigma: f64) -> Result<BasePointData> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::config("sigma", format!("must be positive, got {sigma}")));
    }
    let p = f.base_point();
    if !f.domain().contains_interior(&p) {
        return Err(Error::DomainViolation { point: p });
    }
    let f0 = f.eval(&p);
    let grad0 = f.grad(&p);
    if let Some((index, &value)) = grad0.iter().enumerate().find(|(_, g)| !(**g > 0.0)) {
        return Err(Error::NonPositivePartial { index: index + 1, value });
    }
    let c = (1.0 + sigma * sigma) / grad0[grad0.len() - 1];
    Ok(BasePointData { f0, grad0, c, sigma })
}

/// Outcome of the sampled admissibility checks.
#[derive(Debug, Clone, Serialize)]
pub struct AdmissibilityReport {
    pub samples: usize,
    /// Relative `|f(πλ) − f(λ)|` over sampled permutations.
    pub max_symmetry_defect: f64,
    /// Relative `|f(ρλ) − ρ f(λ)|` for ρ ∈ {0.5, 2, 10}.
    pub max_homogeneity_defect: f64,
    /// `|∇f(ρλ) − ∇f(λ)|` (degree zero).
    pub max_grad_degree_defect: f64,
    /// `|ρ ∇²f(ρλ) − ∇²f(λ)|` (degree minus one).
    pub max_hess_degree_defect: f64,
    pub min_partial: f64,
    pub max_grad_fd_discrepancy: f64,
    pub max_hess_fd_discrepancy: f64,
    pub passed: bool,
}

const SYMMETRY_TOL: f64 = 1e-12;
const HOMOGENEITY_TOL: f64 = 1e-12;
const DEGREE_TOL: f64 = 1e-10;
const SCALES: [f64; 3] = [0.5, 2.0, 10.0];

pub fn check_admissibility(f: &CurvatureFunction, sample_count: usize) -> AdmissibilityReport {
    let n = f.dim();
    let samples = sample_count.max(1);
    let mut rep = AdmissibilityReport {
        samples,
        max_symmetry_defect: 0.0,
        max_homogeneity_defect: 0.0,
        max_grad_degree_defect: 0.0,
        max_hess_degree_defect: 0.0,
        min_partial: f64::INFINITY,
        max_grad_fd_discrepancy: 0.0,
        max_hess_fd_discrepancy: 0.0,
        passed: false,
    };
    let mut fd_ok = true;

    for idx in 0..samples {
        let lambda = f.domain().from_unit(&halton(idx + 1, n));
        let value = f.eval(&lambda);
        let scale = value.abs().max(f64::MIN_POSITIVE);
        let grad = f.grad(&lambda);
        let hess = f.hess(&lambda);

        for perm in permutations_sample(n, idx) {
            let permuted: Vec<f64> = perm.iter().map(|&p| lambda[p]).collect();
            let d = (f.eval(&permuted) - value).abs() / scale;
            rep.max_symmetry_defect = rep.max_symmetry_defect.max(d);
        }

        for rho in SCALES {
            let scaled: Vec<f64> = lambda.iter().map(|l| rho * l).collect();
            let d = (f.eval(&scaled) - rho * value).abs() / (rho * scale);
            rep.max_homogeneity_defect = rep.max_homogeneity_defect.max(d);
            let gd = f
                .grad(&scaled)
                .iter()
                .zip(&grad)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            rep.max_grad_degree_defect = rep.max_grad_degree_defect.max(gd);
            let hd = f
                .hess(&scaled)
                .iter()
                .zip(&hess)
                .map(|(a, b)| (rho * a - b).abs())
                .fold(0.0, f64::max);
            rep.max_hess_degree_defect = rep.max_hess_degree_defect.max(hd);
        }

        rep.min_partial = grad.iter().copied().fold(rep.min_partial, f64::min);

        let h = 1e-3;
        let (g1, h1) = fd_discrepancy(f, &lambda, &grad, &hess, h);
        let (g2, h2) = fd_discrepancy(f, &lambda, &grad, &hess, h / 2.0);
        rep.max_grad_fd_discrepancy = rep.max_grad_fd_discrepancy.max(g1);
        rep.max_hess_fd_discrepancy = rep.max_hess_fd_discrepancy.max(h1);
        // second-order convergence, or already at the rounding floor
        let floor = 1e-8 * (1.0 + scale);
        fd_ok &= g2 <= (g1 / 3.0).max(floor) && h2 <= (h1 / 3.0).max(floor);
    }

    rep.passed = rep.max_symmetry_defect <= SYMMETRY_TOL
        && rep.max_homogeneity_defect <= HOMOGENEITY_TOL
        && rep.max_grad_degree_defect <= DEGREE_TOL
        && rep.max_hess_degree_defect <= DEGREE_TOL
        && rep.min_partial > 0.0
        && fd_ok;
    rep
}

/// Max discrepancies of `grad`/`hess` against central differences of `eval`.
fn fd_discrepancy(
    f: &CurvatureFunction,
    lambda: &[f64],
    grad: &[f64],
    hess: &[f64],
    h: f64,
) -> (f64, f64) {
    let n = lambda.len();
    let at = |shifts: &[(usize, f64)]| {
        let mut x = lambda.to_vec();
        for &(i, d) in shifts {
            x[i] += d;
        }
        f.eval(&x)
    };
    let mut gmax: f64 = 0.0;
    let mut hmax: f64 = 0.0;
    for i in 0..n {
        let g = (at(&[(i, h)]) - at(&[(i, -h)])) / (2.0 * h);
        gmax = gmax.max((g - grad[i]).abs());
        for j in 0..n {
            let d2 = (at(&[(i, h), (j, h)]) - at(&[(i, h), (j, -h)]) - at(&[(i, -h), (j, h)])
                + at(&[(i, -h), (j, -h)]))
                / (4.0 * h * h);
            hmax = hmax.max((d2 - hess[i * n + j]).abs());
        }
    }
    (gmax, hmax)
}

/// Cyclic shift, reversal, and one transposition, varied with the sample index.
fn permutations_sample(n: usize, idx: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let shift = 1 + idx % n.max(1);
    out.push((0..n).map(|i| (i + shift) % n).collect());
    out.push((0..n).rev().collect());
    if n >= 2 {
        let mut t: Vec<usize> = (0..n).collect();
        let a = idx % n;
        let b = (idx + 1) % n;
        t.swap(a, b);
        out.push(t);
    }
    out
}

/// Point `index` of the Halton sequence in `[0,1)^dim`.
fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];
    (0..dim)
        .map(|d| {
            let base = PRIMES[d % PRIMES.len()];
            let mut f = 1.0;
            let mut r = 0.0;
            let mut i = index;
            while i > 0 {
                f /= base as f64;
                r += f * (i % base) as f64;
                i /= base;
            }
            r
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn base_point_mean_curvature() {
        let b = base_point_data(&CurvatureFunction::mean(3), 1.0).unwrap();
        assert_eq!(b.f0, 2.0);
        assert_eq!(b.grad0, vec![1.0, 1.0, 1.0]);
        assert_eq!(b.c, 2.0);

        let b = base_point_data(&CurvatureFunction::mean(2), 2.0).unwrap();
        assert_eq!(b.f0, 1.0);
        assert_eq!(b.c, 5.0);
    }

    #[test]
    fn base_point_perturbed_family() {
        let f = CurvatureFunction::perturbed(3, 0.1);
        let b = base_point_data(&f, 1.0).unwrap();
        assert_relative_eq!(b.f0, 2.1, max_relative = 1e-15);
        assert_relative_eq!(b.dn_f(), 0.95, max_relative = 1e-15);
        assert_relative_eq!(b.c, 2.0 / 0.95, max_relative = 1e-15);

        // analytic gradient against central differences of eval
        let p = f.base_point();
        let h = 1e-5;
        for i in 0..3 {
            let mut a = p.clone();
            let mut m = p.clone();
            a[i] += h;
            m[i] -= h;
            let fd = (f.eval(&a) - f.eval(&m)) / (2.0 * h);
            assert_relative_eq!(fd, b.grad0[i], epsilon = 1e-9);
        }
    }

    #[test]
    fn base_point_errors() {
        let bad = CurvatureFunction::new(FnCurvature::new(2, "decreasing", |l| l[0] - l[1]));
        assert!(matches!(
            base_point_data(&bad, 1.0),
            Err(Error::NonPositivePartial { index: 2, .. })
        ));
        let shifted = CurvatureFunction::mean(2).with_domain(DomainBox {
            center: vec![3.0, 0.0],
            half_widths: vec![0.5, 0.5],
        });
        assert!(matches!(base_point_data(&shifted, 1.0), Err(Error::DomainViolation { .. })));
        assert!(base_point_data(&CurvatureFunction::mean(2), 0.0).is_err());
    }

    #[test]
    fn admissibility_of_builtins() {
        let rep = check_admissibility(&CurvatureFunction::mean(4), 32);
        assert!(rep.passed, "{rep:?}");
        assert!(rep.max_symmetry_defect < 1e-15);
        assert!(rep.max_homogeneity_defect < 1e-15);
        assert_eq!(rep.min_partial, 1.0);

        let rep = check_admissibility(&CurvatureFunction::perturbed(3, 0.1), 64);
        assert!(rep.passed, "{rep:?}");
    }

    #[test]
    fn asymmetric_negative_control_fails() {
        let f = CurvatureFunction::new(FnCurvature::new(3, "asym", |l: &[f64]| {
            let s: f64 = l.iter().sum();
            s + l[0] * l[0] / s
        }));
        let rep = check_admissibility(&f, 16);
        assert!(rep.max_symmetry_defect > 1e-3);
        assert!(!rep.passed);
    }

    #[test]
    fn finite_difference_fallback_hessian() {
        let analytic = PerturbedMean { n: 3, eps: 0.2 };
        let fallback = FnCurvature::new(3, "pm", move |l: &[f64]| analytic.eval(l))
            .with_grad(move |l: &[f64]| analytic.grad(l));
        let p = [0.9, 1.2, 0.1];
        for (a, b) in fallback.hess(&p).iter().zip(analytic.hess(&p)) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn mean_curvature_solve_last() {
        let m = MeanCurvature { n: 3 };
        let x = m.solve_last(&[0.5, 0.25], 2.0).unwrap();
        assert_eq!(m.eval(&[0.5, 0.25, x]), 2.0);
    }
}
