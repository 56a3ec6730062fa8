//! Checks that share no code path with the fixed-point solver: inward
//! shooting on the full nonlinear ODE, brute-force nested quadrature for the
//! linear solve, and the classical mean-curvature bounds.

use roots::{find_root_brent, Convergency};
use serde::Serialize;

use crate::curvature::{base_point_data, CurvatureFunction};
use crate::error::{Error, Result};
use crate::fixpoint::{ShrinkerSolution, SolverConfig};
use crate::geometry::RevolutionProfile;
use crate::grid::{Interpolant, Profile};
use crate::quad::simpson;

/// Step-size control for the inward integration.
#[derive(Debug, Clone, Serialize)]
pub struct ShootingTolerances {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for ShootingTolerances {
    fn default() -> Self {
        Self { rtol: 1e-11, atol: 1e-16, max_steps: 5_000_000 }
    }
}

/// Relative stopping rule for Brent: the library default is absolute.
struct RelativeTol {
    scale: f64,
}

impl Convergency<f64> for RelativeTol {
    fn is_root_found(&mut self, y: f64) -> bool {
        y.abs() <= 1e-15 * self.scale
    }

    fn is_converged(&mut self, x1: f64, x2: f64) -> bool {
        (x1 - x2).abs() <= 4.0 * f64::EPSILON * x1.abs().max(x2.abs()) + 1e-300
    }

    fn is_iteration_limit_reached(&mut self, iter: usize) -> bool {
        iter >= 200
    }
}

/// The curvature equation written in `u = r − σs`:
/// `f(1/r, …, 1/r, μ) + ½(s u′ − u) = 0` with `μ = −u″/(1+r′²)`.
struct ShootingEquation<'a> {
    f: &'a CurvatureFunction,
    sigma: f64,
}

impl ShootingEquation<'_> {
    /// `u″` at `(s, u, u′)`.
    fn second_derivative(&self, s: f64, u: f64, up: f64) -> Result<f64> {
        let z = self.sigma * s + u;
        let p = self.sigma + up;
        let fail = || Error::RootBracketFailure { s, r: z, rp: p };
        if !(z > 0.0) {
            return Err(fail());
        }
        let n = self.f.dim();
        let drive = 0.5 * (s * up - u);
        let mu = if self.f.is_mean_curvature() {
            -drive - (n - 1) as f64 / z
        } else {
            let mut lambda = vec![1.0 / z; n];
            let mut g = |mu: f64| -> Option<f64> {
                lambda[n - 1] = mu;
                self.f.evaluable(&lambda).then(|| self.f.eval(&lambda) + drive)
            };
            // start from the value for the mean curvature and widen
            let guess = -drive - (n - 1) as f64 / z;
            let g0 = g(guess).ok_or_else(fail)?;
            if g0 == 0.0 {
                guess
            } else {
                let dir = if g0 > 0.0 { -1.0 } else { 1.0 };
                let mut width = (drive.abs() + 1.0 / z).max(1e-300);
                let mut inner = guess;
                let mut bracket = None;
                for _ in 0..200 {
                    let mut outer = inner + dir * width;
                    let mut gv = g(outer);
                    let mut halvings = 0;
                    while gv.is_none() && halvings < 60 {
                        outer = 0.5 * (inner + outer);
                        gv = g(outer);
                        halvings += 1;
                    }
                    let gv = gv.ok_or_else(fail)?;
                    if gv.signum() != g0.signum() || gv == 0.0 {
                        bracket = Some((inner, outer));
                        break;
                    }
                    inner = outer;
                    width *= 2.0;
                }
                let (a, b) = bracket.ok_or_else(fail)?;
                let mut conv = RelativeTol { scale: drive.abs() + 1.0 / z };
                let h = |mu: f64| g(mu).unwrap_or(f64::NAN);
                find_root_brent(a, b, h, &mut conv).map_err(|_| fail())?
            }
        };
        Ok(-mu * (1.0 + p * p))
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_B5: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
const DP_B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

/// Shooting result: the profile on the requested nodes and step statistics.
#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub profile: RevolutionProfile,
    /// `u = r − σs` at the nodes.
    pub u: Vec<f64>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Integrates `(u, u′)` from `s_start` inward, landing exactly on every entry
/// of `nodes` (any order; entries above `s_start` are ignored).
pub fn shoot_from(
    f: &CurvatureFunction,
    sigma: f64,
    s_start: f64,
    initial: (f64, f64),
    nodes: &[f64],
    tol: &ShootingTolerances,
) -> Result<ShootingResult> {
    let eq = ShootingEquation { f, sigma };
    let rhs = |s: f64, y: [f64; 2]| -> Result<[f64; 2]> { Ok([y[1], eq.second_derivative(s, y[0], y[1])?]) };

    let mut targets: Vec<f64> = nodes.iter().copied().filter(|&s| s <= s_start).collect();
    targets.sort_by(|a, b| b.total_cmp(a));
    let mut s = s_start;
    let mut y = [initial.0, initial.1];
    let mut k1 = rhs(s, y)?;
    let mut h = -1e-2 / s;
    let (mut accepted, mut rejected) = (0usize, 0usize);
    let mut out_u = Vec::with_capacity(targets.len());
    let mut out_up = Vec::with_capacity(targets.len());
    let mut out_upp = Vec::with_capacity(targets.len());

    // a stage that leaves the solvable region only rejects the step; the
    // failure is reported if the step size collapses
    let mut stage_failure: Option<Error> = None;
    for &target in &targets {
        'steps: while s > target {
            if accepted + rejected >= tol.max_steps || h.abs() < 1e-14 * s {
                return Err(stage_failure.take().unwrap_or(Error::StepUnderflow { s }));
            }
            let last = s + h <= target;
            let step = if last { target - s } else { h };
            let mut k = [[0.0f64; 2]; 7];
            k[0] = k1;
            for i in 1..7 {
                let mut yi = y;
                for (j, kj) in k.iter().enumerate().take(i) {
                    for d in 0..2 {
                        yi[d] += step * DP_A[i][j] * kj[d];
                    }
                }
                match rhs(s + DP_C[i] * step, yi) {
                    Ok(v) => k[i] = v,
                    Err(e @ Error::RootBracketFailure { .. }) => {
                        stage_failure = Some(e);
                        rejected += 1;
                        h = step * 0.2;
                        continue 'steps;
                    }
                    Err(e) => return Err(e),
                }
            }
            let mut ynew = y;
            let mut err: f64 = 0.0;
            for d in 0..2 {
                let mut e = 0.0;
                for i in 0..7 {
                    ynew[d] += step * DP_B5[i] * k[i][d];
                    e += step * (DP_B5[i] - DP_B4[i]) * k[i][d];
                }
                let sc = tol.atol + tol.rtol * y[d].abs().max(ynew[d].abs());
                err = err.max((e / sc).abs());
            }
            if !err.is_finite() {
                rejected += 1;
                h *= 0.2;
                continue;
            }
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if err <= 1.0 {
                accepted += 1;
                stage_failure = None;
                s = if last { target } else { s + step };
                y = ynew;
                k1 = k[6];
                if !last {
                    h = step * factor;
                } else if factor < 1.0 {
                    h *= factor;
                }
            } else {
                rejected += 1;
                h = step * factor;
            }
        }
        out_u.push(y[0]);
        out_up.push(y[1]);
        out_upp.push(k1[1]);
    }

    // ascending order for the profile
    out_u.reverse();
    out_up.reverse();
    out_upp.reverse();
    targets.reverse();
    let r = targets.iter().zip(&out_u).map(|(s, u)| sigma * s + u).collect();
    let rp = out_up.iter().map(|up| sigma + up).collect();
    let profile = RevolutionProfile::new(targets, r, rp, out_upp)?;
    Ok(ShootingResult { profile, u: out_u, accepted_steps: accepted, rejected_steps: rejected })
}

/// Inward shooting from `s_start` with the two-term asymptotic data
/// `r = σS + f0/(σS)`, `r′ = σ − f0/(σS²)`, sampled on the grid nodes of
/// `config` below `s_start`. `R` defaults to `max(k, 10)` when unset.
pub fn shoot_backward(config: &SolverConfig, s_start: f64) -> Result<ShootingResult> {
    config.validate()?;
    let base = base_point_data(&config.f, config.sigma)?;
    let r = config.r.unwrap_or((config.k as f64).max(10.0));
    if !(s_start >= 2.0 * r) {
        return Err(Error::config("S_start", format!("must be at least 2R = {}, got {s_start}", 2.0 * r)));
    }
    let grid = config.grid(r)?;
    let a = base.leading_coefficient();
    let initial = (a / s_start, -a / (s_start * s_start));
    shoot_from(&config.f, config.sigma, s_start, initial, grid.nodes(), &ShootingTolerances::default())
}

#[derive(Debug, Clone, Serialize)]
pub struct OracleComparison {
    pub window: (f64, f64),
    pub points: usize,
    /// `max |r_fix − r_shoot| / r_shoot`.
    pub max_rel_r: f64,
    /// `max |u_fix − u_shoot| / max |u_shoot|` on the window.
    pub max_rel_u: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub const ORACLE_REL_TOL: f64 = 1e-5;

/// Compares `r` on the shared nodes in `window`. The pass criterion is the
/// relative error in `r`; the error in `u` is reported alongside.
pub fn compare_with_shooting(sol: &ShrinkerSolution, shot: &ShootingResult, window: (f64, f64)) -> OracleComparison {
    let sigma = sol.sigma();
    let mut max_rel_r: f64 = 0.0;
    let mut max_du: f64 = 0.0;
    let mut max_u: f64 = 0.0;
    let mut points = 0;
    let nodes = sol.grid().nodes();
    for (i, &s) in shot.profile.s.iter().enumerate() {
        if s < window.0 * (1.0 - 1e-12) || s > window.1 * (1.0 + 1e-12) {
            continue;
        }
        let Some(j) = nodes.iter().position(|&x| (x - s).abs() <= 1e-12 * s) else { continue };
        let u_fix = sol.u.values()[j];
        let r_fix = sigma * s + u_fix;
        max_rel_r = max_rel_r.max((r_fix - shot.profile.r[i]).abs() / shot.profile.r[i]);
        max_du = max_du.max((u_fix - shot.u[i]).abs());
        max_u = max_u.max(shot.u[i].abs());
        points += 1;
    }
    let max_rel_u = if max_u > 0.0 { max_du / max_u } else { max_du };
    OracleComparison {
        window,
        points,
        max_rel_r,
        max_rel_u,
        tolerance: ORACLE_REL_TOL,
        passed: points > 0 && max_rel_r <= ORACLE_REL_TOL,
    }
}

/// Outer and inner Simpson interval counts (`10⁶` inner evaluations).
pub const NESTED_OUTER: usize = 200;
pub const NESTED_INNER: usize = 5000;

/// `w(s)` for `ℒw = η` from the double integral
/// `w(s) = s ∫_s^∞ x⁻² ∫_x^∞ ξ e^{−(c/4)(ξ²−x²)} η(ξ) dξ dx`
/// by fixed-step Simpson rules, with `x = s/y` outside and the Gaussian
/// cut at `e^{−41}` inside. No integration by parts, no adaptivity.
pub fn nested_quadrature_oracle(eta: &Profile, s: f64, c: f64) -> f64 {
    let it = eta.interpolant();
    nested_quadrature_with(&it, s, c, NESTED_OUTER, NESTED_INNER)
}

pub fn nested_quadrature_with(eta: &Interpolant, s: f64, c: f64, outer: usize, inner: usize) -> f64 {
    let cut = 18.0 * std::f64::consts::LN_10;
    let inner_integral = |x: f64| {
        let top = (x * x + 4.0 * cut / c).sqrt();
        simpson(
            |xi| {
                let gap = (xi - x) * (xi + x);
                xi * (-(c / 4.0) * gap).exp() * eta.value(xi)
            },
            x,
            top,
            inner,
        )
    };
    // ∫_s^∞ x⁻² I(x) dx = (1/s) ∫_0^1 I(s/y) dy
    let outer_integral = simpson(|y| if y == 0.0 { 0.0 } else { inner_integral(s / y) }, 0.0, 1.0, outer);
    outer_integral
}

#[derive(Debug, Clone, Serialize)]
pub struct McfReferenceReport {
    pub n: usize,
    pub sigma: f64,
    pub bound: f64,
    /// `max s|r − σs|`.
    pub max_value: f64,
    /// `max s²|r′ − σ|`.
    pub max_slope: f64,
    pub value_slack: f64,
    pub slope_slack: f64,
    pub passed: bool,
}

/// The bounds `s|r − σs| ≤ 2(n−1)/σ` and `s²|r′ − σ| ≤ 2(n−1)/σ` at the grid
/// nodes, for the mean curvature only.
pub fn mcf_reference_check(sol: &ShrinkerSolution) -> Result<McfReferenceReport> {
    if !sol.f.is_mean_curvature() {
        return Err(Error::NotMcf);
    }
    let n = sol.f.dim();
    let sigma = sol.sigma();
    let bound = 2.0 * (n - 1) as f64 / sigma;
    let nodes = sol.grid().nodes();
    let max_value = nodes.iter().zip(sol.u.values()).map(|(s, u)| s * u.abs()).fold(0.0, f64::max);
    let max_slope = nodes.iter().zip(sol.u.deriv(1)?).map(|(s, d)| s * s * d.abs()).fold(0.0, f64::max);
    Ok(McfReferenceReport {
        n,
        sigma,
        bound,
        max_value,
        max_slope,
        value_slack: bound - max_value,
        slope_slack: bound - max_slope,
        passed: max_value <= bound && max_slope <= bound,
    })
}
