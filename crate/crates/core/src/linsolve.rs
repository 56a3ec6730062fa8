//! The linear problem `ℒw = w″ − (c/2)(s w′ − w) = η` on `[R, ∞)` with
//! `w/s → 0` and `s w′ − w → 0` at infinity, solved through its
//! Gaussian-kernel representation
//!
//! ```text
//! I(x) = ∫_x^∞ ξ e^{−(c/4)(ξ²−x²)} η(ξ) dξ,   J(s) = ∫_s^∞ x⁻² I(x) dx,
//! w = s J,   w′ = J − I/s,   w″ = η − (c/2) I.
//! ```
//!
//! Since `I ≈ (2/c)η` up to a relative correction of order `1/(c s²)`, the
//! formula for `w″` cancels almost completely far out. Integrating by parts
//! against the kernel removes the cancellation: with
//! `𝒯[g](x) = ∫_x^∞ e^{−(c/4)(ξ²−x²)} g(ξ) dξ`,
//!
//! ```text
//! I = (2/c)(η + 𝒯[η′]),   w″ = −𝒯[η′],   w‴ = −s 𝒯[(η′/ξ)′].
//! ```

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{differentiate, weighted_sup_order, Interpolant, Profile};
use crate::quad::{adaptive_gk15, UnitRule};

/// `ln(10¹⁸)`: beyond this the Gaussian factor is below `1e−18`.
const GAUSS_CUTOFF: f64 = 18.0 * std::f64::consts::LN_10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    pub max_depth: usize,
    /// Gauss–Legendre nodes for averages over `θ ∈ [0, 1]`.
    pub theta_nodes: usize,
    /// Gauss–Legendre nodes per grid interval in the outer integral.
    pub panel_nodes: usize,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_depth: 40, theta_nodes: 16, panel_nodes: 8 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol <= 1e-4) {
            return Err(Error::config("quadrature.rel_tol", "must lie in (0, 1e-4]"));
        }
        if self.max_depth == 0 || self.theta_nodes == 0 || self.panel_nodes == 0 {
            return Err(Error::config("quadrature", "node counts and depth must be positive"));
        }
        Ok(())
    }
}

/// Right-hand side `η` and the operator coefficient `c`; `R` is the grid start.
#[derive(Debug, Clone)]
pub struct LinearProblem {
    pub eta: Profile,
    pub c: f64,
}

impl LinearProblem {
    pub fn new(eta: Profile, c: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::config("c", format!("must be positive, got {c}")));
        }
        Ok(Self { eta, c })
    }

    pub fn r(&self) -> f64 {
        self.eta.grid().r()
    }
}

/// `𝒯[g](x)` via `ξ = √(x² + 4u/c)`, which turns the kernel into `e^{−u}`.
///
/// `floor` is an absolute accuracy below which the result is known to be
/// rounding noise of the caller's data.
pub fn gaussian_tail(
    x: f64,
    c: f64,
    g: impl Fn(f64) -> f64,
    floor: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let xi = |u: f64| (x * x + 4.0 * u / c).sqrt();
    let integrand = |u: f64| {
        let z = xi(u);
        (-u).exp() * g(z) * 2.0 / (c * z)
    };
    let scale = [0.0, 1.0, 4.0].iter().map(|&u| integrand(u).abs()).fold(0.0, f64::max);
    let abs_tol = (cfg.rel_tol * 1e-3 * scale).max(floor).max(f64::MIN_POSITIVE);
    let (v, _) = adaptive_gk15(integrand, 0.0, GAUSS_CUTOFF, cfg.rel_tol, abs_tol, cfg.max_depth)?;
    Ok(v)
}

/// `I(x) = ∫_x^∞ ξ e^{−(c/4)(ξ²−x²)} η(ξ) dξ`, evaluated as `(2/c)(η(x) + 𝒯[η′](x))`.
pub fn inner_integral(x: f64, eta: &Interpolant, c: f64, cfg: &QuadratureConfig) -> Result<f64> {
    let v = eta.value(x);
    let k = gaussian_tail(x, c, |z| first_derivative(eta, z), noise_floor(v, x, c, 1), cfg)?;
    Ok(2.0 / c * (v + k))
}

/// Size of `𝒯` applied to the rounding noise in the `order`-th derivative of
/// data of magnitude `|v|` near `x`.
fn noise_floor(v: f64, x: f64, c: f64, order: i32) -> f64 {
    1e3 * f64::EPSILON * v.abs() / x.powi(order) * 2.0 / (c * x)
}

fn first_derivative(eta: &Interpolant, s: f64) -> f64 {
    let mut d = [0.0; 2];
    eta.eval_into(s, &mut d);
    d[1]
}

/// `(η′/ξ)′ = η″/ξ − η′/ξ²`.
fn scaled_second(eta: &Interpolant, s: f64) -> f64 {
    let mut d = [0.0; 3];
    eta.eval_into(s, &mut d);
    d[2] / s - d[1] / (s * s)
}

/// Rejects right-hand sides whose magnitude does not decrease over the last
/// decade; the closure beyond `S_max` would not vanish at infinity.
fn check_tail(eta: &Profile) -> Result<()> {
    let v = eta.values();
    let last = v[v.len() - 1];
    let lo = eta.grid().s_max() / 10.0 * (1.0 - 1e-12);
    let start = eta.nodes().iter().position(|&s| s >= lo).unwrap_or(0);
    if last != 0.0 && last.abs() >= v[start].abs() {
        let (a1, a3) = eta.tail().map_or((f64::NAN, f64::NAN), |t| (t.a1, t.a3));
        return Err(Error::DivergentTail { a1, a3 });
    }
    Ok(())
}

/// Solves `ℒw = η` and returns `w` with derivatives `1..=order` (`order ≥ 2`).
///
/// Orders one to three come from representation formulas; higher orders use
/// `w^{(j+2)} = η^{(j)} + (c/2)(s w^{(j+1)} + (j−1) w^{(j)})` with grid
/// derivatives of `η`.
pub fn solve_l(problem: &LinearProblem, cfg: &QuadratureConfig, order: usize) -> Result<Profile> {
    cfg.validate()?;
    check_tail(&problem.eta)?;
    let c = problem.c;
    let grid = problem.eta.grid().clone();
    let nodes = grid.nodes();
    let n = nodes.len();
    let eta = problem.eta.interpolant();
    let rule = UnitRule::gauss_legendre(cfg.panel_nodes);

    // ∫ over each grid interval of x⁻² I(x)
    let panels: Vec<f64> = (0..n - 1)
        .into_par_iter()
        .map(|i| {
            let (a, b) = (nodes[i], nodes[i + 1]);
            let h = b - a;
            let mut acc = 0.0;
            for (x, w) in rule.nodes.iter().zip(&rule.weights) {
                let x = a + h * x;
                acc += w * inner_integral(x, &eta, c, cfg)? / (x * x);
            }
            Ok(acc * h)
        })
        .collect::<Result<_>>()?;

    // ∫_{S_max}^∞ x⁻² I(x) dx = (1/S_max) ∫_0^1 I(S_max/y) dy
    let s_max = grid.s_max();
    let tail_rule = UnitRule::gauss_legendre(16);
    let mut tail = 0.0;
    for (lo, hi) in [(0.0, 0.25), (0.25, 1.0)] {
        let mut part = 0.0;
        for (y, w) in tail_rule.nodes.iter().zip(&tail_rule.weights) {
            let y = lo + (hi - lo) * y;
            part += w * inner_integral(s_max / y, &eta, c, cfg)?;
        }
        tail += part * (hi - lo);
    }
    tail /= s_max;

    let mut j_vals = vec![0.0; n];
    j_vals[n - 1] = tail;
    for i in (0..n - 1).rev() {
        j_vals[i] = j_vals[i + 1] + panels[i];
    }

    let per_node: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let s = nodes[i];
            let v = eta.value(s);
            let k1 = gaussian_tail(s, c, |z| first_derivative(&eta, z), noise_floor(v, s, c, 1), cfg)?;
            let i_val = 2.0 / c * (v + k1);
            let k2 = if order >= 3 {
                gaussian_tail(s, c, |z| scaled_second(&eta, z), noise_floor(v, s, c, 3), cfg)?
            } else {
                0.0
            };
            Ok((i_val, -k1, -s * k2))
        })
        .collect::<Result<_>>()?;

    let values: Vec<f64> = nodes.iter().zip(&j_vals).map(|(s, j)| s * j).collect();
    let d1: Vec<f64> = (0..n).map(|i| j_vals[i] - per_node[i].0 / nodes[i]).collect();
    let d2: Vec<f64> = per_node.iter().map(|p| p.1).collect();
    let mut derivs = vec![d1, d2];
    if order >= 3 {
        derivs.push(per_node.iter().map(|p| p.2).collect());
    }
    if order >= 4 {
        let mut eta_p = problem.eta.clone();
        eta_p.ensure_derivs(order - 2)?;
        for j in 2..=order - 2 {
            let eta_j = eta_p.deriv(j)?;
            let (wj, wj1) = (&derivs[j - 1], &derivs[j]);
            let next = (0..n)
                .map(|i| eta_j[i] + 0.5 * c * (nodes[i] * wj1[i] + (j as f64 - 1.0) * wj[i]))
                .collect();
            derivs.push(next);
        }
    }
    derivs.truncate(order.max(2));
    Ok(Profile::with_derivs(grid, values, derivs))
}

/// `ℒw = w″ − (c/2)(s w′ − w)` from the stored derivatives of `w`.
pub fn apply_l(w: &Profile, c: f64) -> Result<Vec<f64>> {
    let d1 = w.deriv(1)?;
    let d2 = w.deriv(2)?;
    Ok(w.nodes()
        .iter()
        .enumerate()
        .map(|(i, s)| d2[i] - 0.5 * c * (s * d1[i] - w.values()[i]))
        .collect())
}

/// Boundary quantities at `S_max` next to what the tail model of `w` predicts.
#[derive(Debug, Clone, Serialize)]
pub struct BoundaryCheck {
    pub w_over_s: f64,
    pub w_over_s_predicted: f64,
    pub flux: f64,
    pub flux_predicted: f64,
}

impl BoundaryCheck {
    pub fn passed(&self) -> bool {
        let ok = |got: f64, want: f64| got.abs() <= 1.1 * want.abs() + 1e-14 * want.abs().max(1e-300);
        ok(self.w_over_s, self.w_over_s_predicted) && ok(self.flux, self.flux_predicted)
    }
}

/// `w(S)/S` and `S w′(S) − w(S)`, which must vanish as `S → ∞`.
pub fn boundary_check(w: &Profile) -> Result<BoundaryCheck> {
    let n = w.grid().len();
    let s = w.grid().s_max();
    let v = w.values()[n - 1];
    let d = w.deriv(1)?[n - 1];
    let (pv, pd) = w.tail().map_or((0.0, 0.0), |t| (t.value(s), t.derivative(s, 1)));
    Ok(BoundaryCheck {
        w_over_s: v / s,
        w_over_s_predicted: pv / s,
        flux: s * d - v,
        flux_predicted: s * pd - pv,
    })
}

/// Measured constants in the linear estimates. A ratio is reported as `0`
/// when `s^γ η` vanishes and as vacuous (`None`) when its sup is infinite.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub gamma: f64,
    pub c: f64,
    pub eta_norm: f64,
    pub value_ratio: Option<f64>,
    pub slope_ratio: Option<f64>,
    pub second_ratio: Option<f64>,
    pub value_bound: f64,
    pub slope_bound: f64,
    pub second_bound: f64,
    pub passed: bool,
}

/// Checks `‖s^γ w‖, ‖s^{γ+1} w′‖ ≤ (4/c)‖s^γ η‖` and `‖s^γ w″‖ ≤ 4‖s^γ η‖`.
pub fn verify_estimates(w: &Profile, eta: &Profile, gamma: f64, c: f64) -> Result<EstimateReport> {
    let eta_norm = weighted_sup_order(eta, 0, gamma)?;
    let sups = [
        weighted_sup_order(w, 0, gamma)?,
        weighted_sup_order(w, 1, gamma + 1.0)?,
        weighted_sup_order(w, 2, gamma)?,
    ];
    let ratio = |x: f64| {
        if eta_norm.is_infinite() {
            None
        } else if eta_norm == 0.0 {
            Some(if x == 0.0 { 0.0 } else { f64::INFINITY })
        } else {
            Some(x / eta_norm)
        }
    };
    let report = EstimateReport {
        gamma,
        c,
        eta_norm,
        value_ratio: ratio(sups[0]),
        slope_ratio: ratio(sups[1]),
        second_ratio: ratio(sups[2]),
        value_bound: 4.0 / c,
        slope_bound: 4.0 / c,
        second_bound: 4.0,
        passed: true,
    };
    let checks = [
        ("value", report.value_ratio, report.value_bound),
        ("first derivative", report.slope_ratio, report.slope_bound),
        ("second derivative", report.second_ratio, report.second_bound),
    ];
    for (which, r, bound) in checks {
        if let Some(r) = r {
            if !(r <= bound) {
                return Err(Error::EstimateViolated { which, ratio: r, bound });
            }
        }
    }
    Ok(report)
}

/// Grid-differentiated derivative of `η`, exposed for the higher-order bootstrap.
pub fn eta_derivative(eta: &Profile, order: usize) -> Result<Vec<f64>> {
    differentiate(eta, order)
}
