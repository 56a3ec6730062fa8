//! The map `ℱv = solve_L(c[f0/(σs) − Σᵢ∂ᵢf0·v/(σ²s²) + 𝒬v])`, its fixed-point
//! iteration, choice of `R`, and decay checks on the solution.
//!
//! Iterates are stored as `v = a/s + v°` with `a = f0/σ`. Because
//! `ℒ(a/s) = 2a/s³ + c·a/s`, the map can be evaluated as
//! `ℱv = a/s + solve_L(η°)` with `η° = −2a/s³ + c(−Σᵢ∂ᵢf0·v/(σ²s²) + 𝒬v)`,
//! so `u° = u − a/s` is produced directly instead of by subtracting two
//! nearly equal profiles.

use std::sync::Arc;

use serde::Serialize;

use crate::curvature::{base_point_data, BasePointData, CurvatureFunction};
use crate::error::{Error, Result};
use crate::geometry::{residual_geometric, RevolutionProfile};
use crate::grid::{loglog_slope, weighted_norm, weighted_sup_order, Grid, Profile};
use crate::linsolve::{solve_l, LinearProblem, QuadratureConfig};
use crate::nonlinear::q_eval;

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub f: CurvatureFunction,
    pub sigma: f64,
    /// Order of the weighted norm; at least 3.
    pub k: usize,
    /// Inner endpoint; `None` selects it automatically.
    pub r: Option<f64>,
    /// `S_max = s_max_factor · R`.
    pub s_max_factor: f64,
    pub points_per_decade: usize,
    pub quadrature: QuadratureConfig,
    /// Stopping threshold on `‖v_{j+1} − v_j‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Ball radius `M`; `None` uses `|f0/σ|·‖s⁻¹‖ + 1/2`.
    pub ball_radius: Option<f64>,
    pub r_limit: f64,
}

impl SolverConfig {
    pub fn new(f: CurvatureFunction, sigma: f64) -> Self {
        Self {
            f,
            sigma,
            k: 3,
            r: None,
            s_max_factor: 100.0,
            points_per_decade: 64,
            quadrature: QuadratureConfig::default(),
            tol: 1e-10,
            max_iter: 60,
            ball_radius: None,
            r_limit: (1u64 << 20) as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::config("sigma", format!("must be positive, got {}", self.sigma)));
        }
        if self.k < 3 {
            return Err(Error::config("k", format!("must be at least 3, got {}", self.k)));
        }
        if let Some(r) = self.r {
            if !(r >= 1.0) {
                return Err(Error::config("R", format!("must be at least 1, got {r}")));
            }
        }
        if !(self.s_max_factor >= 10.0) {
            return Err(Error::config("s_max_factor", "must be at least 10 (one decade)"));
        }
        if self.points_per_decade < 16 {
            return Err(Error::config("points_per_decade", "must be at least 16"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::config("tol", "must be positive"));
        }
        if self.max_iter == 0 {
            return Err(Error::config("max_iter", "must be positive"));
        }
        if let Some(m) = self.ball_radius {
            if !(m > 0.0) {
                return Err(Error::config("M", "must be positive"));
            }
        }
        self.quadrature.validate()?;
        base_point_data(&self.f, self.sigma)?;
        Ok(())
    }

    pub fn grid(&self, r: f64) -> Result<Arc<Grid>> {
        Ok(Arc::new(Grid::new(r, self.s_max_factor * r, self.points_per_decade)?))
    }
}

/// `a/s` with exact derivatives through order `k`.
pub fn leading_profile(grid: &Arc<Grid>, a: f64, k: usize) -> Profile {
    power_profile(grid, a, 1, k)
}

/// `a·s^{-p}` with exact derivatives through order `k`.
pub fn power_profile(grid: &Arc<Grid>, a: f64, p: i32, k: usize) -> Profile {
    Profile::from_fn_with_derivs(grid.clone(), k, move |s, j| {
        let mut coef = a;
        for m in 0..j as i32 {
            coef *= -(p + m) as f64;
        }
        coef * s.powi(-(p + j as i32))
    })
    .with_scaling(p.max(0) as u32)
}

/// Default ball radius `|f0/σ|·‖s⁻¹‖ + 1/2` on `grid`.
pub fn default_ball_radius(base: &BasePointData, grid: &Arc<Grid>, k: usize) -> Result<f64> {
    let inv = leading_profile(grid, 1.0, k);
    Ok(base.leading_coefficient().abs() * weighted_norm(&inv, k)? + 0.5)
}

/// Everything needed to evaluate `ℱ` on one grid.
#[derive(Debug, Clone)]
pub struct FixedPointMap {
    pub f: CurvatureFunction,
    pub base: BasePointData,
    pub grid: Arc<Grid>,
    pub k: usize,
    pub quadrature: QuadratureConfig,
    lead: Profile,
}

impl FixedPointMap {
    pub fn new(f: CurvatureFunction, base: BasePointData, grid: Arc<Grid>, k: usize, quadrature: QuadratureConfig) -> Self {
        let lead = leading_profile(&grid, base.leading_coefficient(), k);
        Self { f, base, grid, k, quadrature, lead }
    }

    pub fn leading(&self) -> &Profile {
        &self.lead
    }

    /// `a/s + v°`.
    pub fn full(&self, v_circ: &Profile) -> Profile {
        self.lead.combine(1.0, v_circ, 1.0)
    }

    /// `η°` for the full iterate `v` (derivatives through order 2 needed).
    pub fn rhs_circ(&self, v: &Profile) -> Result<Profile> {
        let sigma = self.base.sigma;
        let a = self.base.leading_coefficient();
        let c = self.base.c;
        let radial = self.base.radial_grad_sum();
        let q = q_eval(v, &self.f, sigma, &self.quadrature)?;
        let values = self
            .grid
            .nodes()
            .iter()
            .zip(v.values().iter().zip(q.values()))
            .map(|(&s, (&v, &q))| -2.0 * a / (s * s * s) + c * (-radial * v / (sigma * sigma * s * s) + q))
            .collect();
        Ok(Profile::new(self.grid.clone(), values))
    }

    /// `(ℱv)° = ℱv − a/s` with derivatives through order `k`.
    pub fn apply_circ(&self, v: &Profile) -> Result<Profile> {
        let eta = self.rhs_circ(v)?;
        solve_l(&LinearProblem::new(eta, self.base.c)?, &self.quadrature, self.k)
    }

    /// `ℱv` with derivatives through order `k`.
    pub fn apply(&self, v: &Profile) -> Result<Profile> {
        Ok(self.full(&self.apply_circ(v)?))
    }

    pub fn norm(&self, v: &Profile) -> Result<f64> {
        weighted_norm(v, self.k)
    }

    pub fn distance(&self, a: &Profile, b: &Profile) -> Result<f64> {
        weighted_norm(&a.combine(1.0, b, -1.0), self.k)
    }
}

/// `ℱv` for a profile `v` on any admissible grid.
pub fn apply_f(
    v: &Profile,
    base: &BasePointData,
    f: &CurvatureFunction,
    k: usize,
    quadrature: &QuadratureConfig,
) -> Result<Profile> {
    FixedPointMap::new(f.clone(), base.clone(), v.grid().clone(), k, quadrature.clone()).apply(v)
}

#[derive(Debug, Clone, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub step_norm: f64,
    pub ratio: Option<f64>,
    pub ball_norm: f64,
    pub in_ball: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
}

impl IterationTrace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Largest step-to-step ratio observed.
    pub fn contraction_ratio(&self) -> Option<f64> {
        self.records.iter().filter_map(|r| r.ratio).reduce(f64::max)
    }

    pub fn last_step(&self) -> f64 {
        self.records.last().map_or(f64::INFINITY, |r| r.step_norm)
    }
}

/// One tested value of `R` during selection.
#[derive(Debug, Clone, Serialize)]
pub struct RAttempt {
    pub r: f64,
    pub ball_radius: f64,
    pub contained: bool,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RSelection {
    pub r: f64,
    pub ball_radius: f64,
    pub ratio: f64,
    pub attempts: Vec<RAttempt>,
}

/// Profiles of norm exactly `m` used to probe the ball boundary.
fn boundary_samples(grid: &Arc<Grid>, m: f64, k: usize) -> Result<Vec<Profile>> {
    let mut out = Vec::new();
    for p in 1..=3 {
        let shape = power_profile(grid, 1.0, p, k);
        let scale = m / weighted_norm(&shape, k)?;
        for sign in [1.0, -1.0] {
            out.push(power_profile(grid, sign * scale, p, k));
        }
    }
    Ok(out)
}

/// Contraction and containment probes at a fixed `R`.
fn probe(config: &SolverConfig, base: &BasePointData, r: f64) -> Result<RAttempt> {
    let grid = config.grid(r)?;
    let k = config.k;
    let m = match config.ball_radius {
        Some(m) => m,
        None => default_ball_radius(base, &grid, k)?,
    };
    let map = FixedPointMap::new(config.f.clone(), base.clone(), grid.clone(), k, config.quadrature.clone());
    let samples = boundary_samples(&grid, m, k)?;
    let mut attempt = RAttempt { r, ball_radius: m, contained: true, ratio: None };
    for v in &samples {
        match q_eval(v, &config.f, config.sigma, &config.quadrature) {
            Ok(_) => {}
            Err(Error::DomainEscape { .. }) | Err(Error::NonPositiveZ { .. }) => {
                attempt.contained = false;
                return Ok(attempt);
            }
            Err(e) => return Err(e),
        }
    }
    let attempt_ratio = || -> Result<f64> {
        let v0 = map.leading().clone();
        let v1 = map.apply(&v0)?;
        let v2 = map.apply(&v1)?;
        let d1 = map.distance(&v1, &v0)?;
        let d2 = map.distance(&v2, &v1)?;
        let iter_ratio = if d1 > 0.0 { d2 / d1 } else { 0.0 };
        let (b1, b2) = (&samples[0], &samples[1]);
        let pair = map.distance(&map.apply(b1)?, &map.apply(b2)?)? / map.distance(b1, b2)?;
        Ok(iter_ratio.max(pair))
    };
    match attempt_ratio() {
        Ok(r) => attempt.ratio = Some(r),
        Err(Error::DomainEscape { .. }) | Err(Error::NonPositiveZ { .. }) => attempt.contained = false,
        Err(e) => return Err(e),
    }
    Ok(attempt)
}

/// Doubles `R` from `max(k, 10)` until the ball boundary stays in the
/// admissible box and the probed contraction ratio is at most `1/2`.
pub fn select_r(config: &SolverConfig) -> Result<RSelection> {
    config.validate()?;
    let base = base_point_data(&config.f, config.sigma)?;
    let mut r = (config.k as f64).max(10.0);
    let mut attempts = Vec::new();
    while r <= config.r_limit {
        let a = probe(config, &base, r)?;
        let accepted = a.contained && a.ratio.is_some_and(|x| x <= 0.5);
        attempts.push(a.clone());
        if accepted {
            return Ok(RSelection { r, ball_radius: a.ball_radius, ratio: a.ratio.unwrap(), attempts });
        }
        r *= 2.0;
    }
    Err(Error::RUnbounded { limit: config.r_limit })
}

/// Converged profile and its diagnostics.
#[derive(Debug, Clone)]
pub struct ShrinkerSolution {
    pub f: CurvatureFunction,
    pub base: BasePointData,
    pub k: usize,
    pub quadrature: QuadratureConfig,
    pub r: f64,
    pub ball_radius: f64,
    pub selection: Option<RSelection>,
    /// `u` with derivatives through order `k`.
    pub u: Profile,
    /// `u − f0/(σs)` with derivatives through order `k`.
    pub u_circ: Profile,
    pub geometry: RevolutionProfile,
    pub residual: Vec<f64>,
    pub residual_sup: f64,
    pub trace: IterationTrace,
}

impl ShrinkerSolution {
    pub fn sigma(&self) -> f64 {
        self.base.sigma
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.u.grid()
    }

    pub fn iterations(&self) -> usize {
        self.trace.len()
    }

    pub fn contraction_ratio(&self) -> Option<f64> {
        self.trace.contraction_ratio()
    }

    /// Coefficient of `1/s` in the tail fit of `u`.
    pub fn tail_a1(&self) -> f64 {
        self.u.tail().map_or(f64::NAN, |t| t.a1)
    }

    pub fn u_norm(&self) -> Result<f64> {
        weighted_norm(&self.u, self.k)
    }

    /// Rebuilds the diagnostics for a stored profile `u` (derivatives are
    /// computed where missing). The trace is empty and `R` is the first node.
    pub fn from_profile(
        f: CurvatureFunction,
        sigma: f64,
        k: usize,
        quadrature: QuadratureConfig,
        mut u: Profile,
    ) -> Result<Self> {
        let base = base_point_data(&f, sigma)?;
        u.ensure_derivs(k)?;
        let (_, u_circ) = asymptotic_split(&u, &base, k)?;
        let grid = u.grid().clone();
        let geometry = RevolutionProfile::from_perturbation(&u, sigma)?;
        let residual = residual_geometric(&geometry, &f)?;
        let residual_sup = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let ball_radius = default_ball_radius(&base, &grid, k)?;
        Ok(Self {
            f,
            base,
            k,
            quadrature,
            r: grid.r(),
            ball_radius,
            selection: None,
            u,
            u_circ,
            geometry,
            residual,
            residual_sup,
            trace: IterationTrace::default(),
        })
    }

    pub fn map(&self) -> FixedPointMap {
        FixedPointMap::new(self.f.clone(), self.base.clone(), self.grid().clone(), self.k, self.quadrature.clone())
    }
}

/// Picard iteration `v_{j+1} = ℱv_j` from `v₀ = f0/(σs)`.
pub fn solve_fixed_point(config: &SolverConfig) -> Result<ShrinkerSolution> {
    config.validate()?;
    let base = base_point_data(&config.f, config.sigma)?;
    let (r, selection) = match config.r {
        Some(r) => (r, None),
        None => {
            let sel = select_r(config)?;
            (sel.r, Some(sel))
        }
    };
    let grid = config.grid(r)?;
    let k = config.k;
    let ball_radius = match config.ball_radius {
        Some(m) => m,
        None => default_ball_radius(&base, &grid, k)?,
    };
    let map = FixedPointMap::new(config.f.clone(), base.clone(), grid.clone(), k, config.quadrature.clone());

    let mut v_circ = Profile::from_fn_with_derivs(grid.clone(), k, |_, _| 0.0);
    let mut v = map.full(&v_circ);
    let mut trace = IterationTrace::default();
    let mut prev_step: Option<f64> = None;
    let mut converged = false;
    for iteration in 1..=config.max_iter {
        let next_circ = map.apply_circ(&v)?;
        let step = map.distance(&next_circ, &v_circ)?;
        v_circ = next_circ;
        v = map.full(&v_circ);
        let ball_norm = map.norm(&v)?;
        trace.records.push(IterationRecord {
            iteration,
            step_norm: step,
            ratio: prev_step.filter(|p| *p > 0.0).map(|p| step / p),
            ball_norm,
            in_ball: ball_norm <= ball_radius,
        });
        prev_step = Some(step);
        if step <= config.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence { iterations: trace.len(), last_step: trace.last_step(), trace });
    }
    let geometry = RevolutionProfile::from_perturbation(&v, config.sigma)?;
    let residual = residual_geometric(&geometry, &config.f)?;
    let residual_sup = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    Ok(ShrinkerSolution {
        f: config.f.clone(),
        base,
        k,
        quadrature: config.quadrature.clone(),
        r,
        ball_radius,
        selection,
        u: v,
        u_circ: v_circ,
        geometry,
        residual,
        residual_sup,
        trace,
    })
}

/// `(f0/(σs), u − f0/(σs))`, the second with derivatives through `k`.
pub fn asymptotic_split(u: &Profile, base: &BasePointData, k: usize) -> Result<(Profile, Profile)> {
    let lead = leading_profile(u.grid(), base.leading_coefficient(), k);
    let mut rest = u.combine(1.0, &lead, -1.0);
    rest.ensure_derivs(k)?;
    Ok((lead, rest))
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayEntry {
    pub order: usize,
    pub weight: f64,
    pub norm: f64,
    pub slope: Option<f64>,
    pub expected_slope: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayReport {
    pub entries: Vec<DecayEntry>,
    pub passed: bool,
}

pub const DECAY_SLOPE_TOL: f64 = 0.15;

/// Weighted norms `‖s^{j+3}∂^j u°‖` (`j < k`) and `‖s^{k+1}∂^k u°‖`, with
/// log-log slopes of `|∂^j u°|` over the last decade of the grid.
///
/// Lower orders must match `−(j+3)` within the tolerance; the top order only
/// needs to decay at least like `s^{−(k+1)}`, which is all the weighted bound
/// asserts.
pub fn decay_report(u_circ: &Profile, k: usize) -> Result<DecayReport> {
    let nodes = u_circ.nodes();
    let s_max = u_circ.grid().s_max();
    let start = nodes.iter().position(|&s| s >= s_max / 10.0 * (1.0 - 1e-12)).unwrap_or(0);
    let mut entries = Vec::new();
    for j in 0..=k {
        let top = j == k;
        let weight = if top { (k + 1) as f64 } else { (j + 3) as f64 };
        let expected_slope = -weight;
        let norm = weighted_sup_order(u_circ, j, weight)?;
        let d = u_circ.deriv(j)?;
        let slope = loglog_slope(&nodes[start..], &d[start..]);
        let slope_ok = match slope {
            None => norm == 0.0,
            Some(sl) if top => sl <= expected_slope + DECAY_SLOPE_TOL,
            Some(sl) => (sl - expected_slope).abs() <= DECAY_SLOPE_TOL,
        };
        entries.push(DecayEntry { order: j, weight, norm, slope, expected_slope, passed: norm.is_finite() && slope_ok });
    }
    let passed = entries.iter().all(|e| e.passed);
    Ok(DecayReport { entries, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mcf_config() -> SolverConfig {
        SolverConfig::new(CurvatureFunction::mean(2), 1.0)
    }

    #[test]
    fn config_validation() {
        let mut c = mcf_config();
        c.sigma = -1.0;
        assert!(matches!(c.validate(), Err(Error::InvalidConfig { .. })));
        let mut c = mcf_config();
        c.k = 2;
        assert!(c.validate().is_err());
        assert!(mcf_config().validate().is_ok());
        let mut c = mcf_config();
        c.sigma = 0.0;
        assert!(select_r(&c).is_err());
    }

    #[test]
    fn default_ball_radius_for_mcf() {
        let base = base_point_data(&CurvatureFunction::mean(2), 1.0).unwrap();
        let grid = mcf_config().grid(10.0).unwrap();
        assert_relative_eq!(default_ball_radius(&base, &grid, 3).unwrap(), 2.5, max_relative = 1e-9);
    }

    #[test]
    fn map_of_zero_is_leading_term_plus_cubic() {
        let cfg = mcf_config();
        let base = base_point_data(&cfg.f, 1.0).unwrap();
        let grid = cfg.grid(10.0).unwrap();
        let zero = Profile::from_fn_with_derivs(grid.clone(), 3, |_, _| 0.0);
        let out = apply_f(&zero, &base, &cfg.f, 3, &cfg.quadrature).unwrap();
        // ℒ(1/s) = 2/s³ + 2/s, so ℱ0 − 1/s = solve_L(−2/s³) = O(s⁻³)
        for (s, v) in grid.nodes().iter().zip(out.values()) {
            assert!((s * v - 1.0).abs() <= 2.0 / (s * s));
        }
        let (_, rest) = asymptotic_split(&out, &base, 3).unwrap();
        let t = rest.tail().unwrap();
        assert_eq!(t.leading_power(), 3);
    }

    #[test]
    fn split_of_leading_term_vanishes() {
        let base = base_point_data(&CurvatureFunction::mean(3), 0.5).unwrap();
        let grid = mcf_config().grid(10.0).unwrap();
        let lead = leading_profile(&grid, base.leading_coefficient(), 3);
        let (_, rest) = asymptotic_split(&lead, &base, 3).unwrap();
        assert!(rest.values().iter().all(|v| *v == 0.0));
        let report = decay_report(&rest, 3).unwrap();
        assert!(report.passed);
        assert!(report.entries.iter().all(|e| e.norm == 0.0));
    }

    #[test]
    fn decay_report_rejects_wrong_rate() {
        let grid = mcf_config().grid(10.0).unwrap();
        let wrong = power_profile(&grid, 1.0, 2, 3);
        let rep = decay_report(&wrong, 3).unwrap();
        assert!(!rep.entries[0].passed);
        assert!(!rep.passed);
        let right = power_profile(&grid, 1.0, 3, 3);
        assert!(decay_report(&right, 3).unwrap().passed);
    }

    #[test]
    fn mcf_reference_solve() {
        let sol = solve_fixed_point(&mcf_config()).unwrap();
        assert!(sol.r <= 40.0);
        assert!(sol.iterations() <= 25);
        assert!(sol.contraction_ratio().unwrap() <= 0.55);
        assert!(sol.residual_sup <= 1e-8, "residual {}", sol.residual_sup);
        assert!((sol.tail_a1() - 1.0).abs() <= 1e-3, "a1 {}", sol.tail_a1());
        let bound = sol.grid().nodes().iter().zip(sol.u.values()).map(|(s, u)| s * u.abs()).fold(0.0, f64::max);
        assert!(bound <= 2.0);
        assert!(sol.trace.records.iter().all(|r| r.in_ball));
        assert!(sol.u_norm().unwrap() <= sol.ball_radius);

        let rep = decay_report(&sol.u_circ, 3).unwrap();
        assert!(rep.passed, "{rep:?}");

        // fixed-point property
        let map = sol.map();
        let again = map.apply(&sol.u).unwrap();
        assert!(map.distance(&again, &sol.u).unwrap() <= 2.0 * 1e-10);
    }

    #[test]
    fn rebuild_from_stored_profile() {
        let mut cfg = mcf_config();
        cfg.r = Some(10.0);
        let sol = solve_fixed_point(&cfg).unwrap();
        let bare = Profile::new(sol.grid().clone(), sol.u.values().to_vec());
        let again = ShrinkerSolution::from_profile(cfg.f.clone(), 1.0, 3, cfg.quadrature.clone(), bare).unwrap();
        assert!(again.residual_sup <= 1e-7);
        for (a, b) in again.u_circ.values().iter().zip(sol.u_circ.values()) {
            assert!((a - b).abs() <= 1e-15);
        }
    }

    #[test]
    fn no_convergence_keeps_trace() {
        let mut cfg = mcf_config();
        cfg.r = Some(10.0);
        cfg.max_iter = 1;
        match solve_fixed_point(&cfg) {
            Err(Error::NoConvergence { iterations, trace, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(trace.len(), 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn contraction_on_ball_pairs() {
        let cfg = mcf_config();
        let base = base_point_data(&cfg.f, 1.0).unwrap();
        let grid = cfg.grid(10.0).unwrap();
        let m = default_ball_radius(&base, &grid, 3).unwrap();
        let map = FixedPointMap::new(cfg.f.clone(), base, grid.clone(), 3, cfg.quadrature.clone());
        let samples = boundary_samples(&grid, m, 3).unwrap();
        for a in &samples {
            assert_relative_eq!(map.norm(a).unwrap(), m, max_relative = 1e-9);
        }
        for i in 0..samples.len() {
            for j in i + 1..samples.len() {
                let (a, b) = (&samples[i], &samples[j]);
                let ratio = map.distance(&map.apply(a).unwrap(), &map.apply(b).unwrap()).unwrap()
                    / map.distance(a, b).unwrap();
                assert!(ratio <= 0.5, "pair ({i},{j}) ratio {ratio}");
            }
            // ball preservation
            assert!(map.norm(&map.apply(&samples[i]).unwrap()).unwrap() <= m);
        }
    }

    #[test]
    fn smaller_slope_needs_at_least_as_large_radius() {
        let narrow = select_r(&SolverConfig::new(CurvatureFunction::mean(3), 0.5)).unwrap();
        let wide = select_r(&SolverConfig::new(CurvatureFunction::mean(3), 2.0)).unwrap();
        assert!(narrow.r >= wide.r);
        assert!(narrow.ratio > wide.ratio, "{} vs {}", narrow.ratio, wide.ratio);
    }
}
