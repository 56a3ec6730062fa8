//! The self-similar family `Σ_t = √(−t)·Σ` generated by a shrinker, its
//! time-scaled norms, and the distance to the asymptotic cone on compact
//! windows.

use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixpoint::ShrinkerSolution;
use crate::grid::{weighted_sup_order, Profile};

/// Lazy view of the solution at time `t`: nothing is resampled, every value
/// is the stored one multiplied by a power of `λ = √(−t)`.
#[derive(Debug, Clone)]
pub struct FlowSnapshot<'a> {
    pub t: f64,
    pub lambda: f64,
    sol: &'a ShrinkerSolution,
}

pub fn rescale(sol: &ShrinkerSolution, t: f64) -> Result<FlowSnapshot<'_>> {
    if !(-1.0..0.0).contains(&t) {
        return Err(Error::BadTime(t));
    }
    Ok(FlowSnapshot { t, lambda: (-t).sqrt(), sol })
}

impl FlowSnapshot<'_> {
    /// Inner endpoint `√(−t)·R`.
    pub fn r(&self) -> f64 {
        self.lambda * self.sol.r
    }

    pub fn nodes(&self) -> Vec<f64> {
        self.sol.grid().nodes().iter().map(|x| self.lambda * x).collect()
    }

    /// `∂^j u°_t` at the scaled nodes: `λ^{1−j}·∂^j u°(x_i)`.
    pub fn u_circ_deriv(&self, order: usize) -> Result<Vec<f64>> {
        let f = self.lambda.powi(1 - order as i32);
        Ok(self.sol.u_circ.deriv(order)?.iter().map(|d| f * d).collect())
    }

    pub fn u_circ(&self) -> Vec<f64> {
        self.u_circ_deriv(0).expect("values are always present")
    }

    /// `r_t = σs − t·f0/(σs) + u°_t` at the scaled nodes.
    pub fn radius(&self) -> Vec<f64> {
        let sigma = self.sol.sigma();
        let a = self.sol.base.leading_coefficient();
        self.nodes()
            .iter()
            .zip(self.u_circ())
            .map(|(s, uc)| sigma * s - self.t * a / s + uc)
            .collect()
    }

    /// `sup s^weight |∂^order u°_t|` over the scaled grid and tail.
    pub fn weighted_sup(&self, order: usize, weight: f64) -> Result<f64> {
        let d = self.u_circ_deriv(order)?;
        let grid_sup = self
            .nodes()
            .iter()
            .zip(&d)
            .map(|(s, x)| s.powf(weight) * x.abs())
            .fold(0.0, f64::max);
        let tail_sup = self.sol.u_circ.tail().map_or(0.0, |t| {
            self.lambda.powf(weight + 1.0 - order as f64) * t.weighted_sup(weight, order)
        });
        Ok(grid_sup.max(tail_sup))
    }

    /// Rows `t, s, r_t, u°_t` with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "t,s,r_t,u_circ_t")?;
        for ((s, r), u) in self.nodes().iter().zip(self.radius()).zip(self.u_circ()) {
            writeln!(out, "{:.16e},{s:.16e},{r:.16e},{u:.16e}", self.t)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeScaledEntry {
    pub t: f64,
    pub order: usize,
    pub weight: f64,
    pub norm: f64,
    pub baseline: f64,
    pub expected_factor: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TimeScaledReport {
    pub entries: Vec<TimeScaledEntry>,
    /// Regression slopes of `ln norm` against `ln(−t)`, one per order.
    pub slopes: Vec<Option<f64>>,
    pub max_rel_error: f64,
    pub passed: bool,
}

pub const TIME_SCALING_TOL: f64 = 1e-12;

/// Compares `‖s^{j+3}∂^j u°_t‖` with `(−t)²` times its value at `t = −1`
/// (`j < k`) and `‖s^{k+1}∂^k u°_t‖` with `(−t)` times its baseline.
pub fn time_scaled_bounds(sol: &ShrinkerSolution, t_samples: &[f64]) -> Result<TimeScaledReport> {
    let k = sol.k;
    let weight = |j: usize| if j == k { (k + 1) as f64 } else { (j + 3) as f64 };
    let baselines: Vec<f64> = (0..=k).map(|j| weighted_sup_order(&sol.u_circ, j, weight(j))).collect::<Result<_>>()?;
    let per_t: Vec<Vec<TimeScaledEntry>> = t_samples
        .par_iter()
        .map(|&t| {
            let snap = rescale(sol, t)?;
            (0..=k)
                .map(|j| {
                    let norm = snap.weighted_sup(j, weight(j))?;
                    let expected_factor = if j == k { -t } else { t * t };
                    let expected = expected_factor * baselines[j];
                    let rel_error = if expected == 0.0 { norm.abs() } else { (norm - expected).abs() / expected };
                    Ok(TimeScaledEntry { t, order: j, weight: weight(j), norm, baseline: baselines[j], expected_factor, rel_error })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let entries: Vec<TimeScaledEntry> = per_t.into_iter().flatten().collect();
    let slopes = (0..=k)
        .map(|j| {
            let (x, y): (Vec<f64>, Vec<f64>) =
                entries.iter().filter(|e| e.order == j).map(|e| (-e.t, e.norm)).unzip();
            crate::grid::loglog_slope(&x, &y)
        })
        .collect();
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(TimeScaledReport { entries, slopes, max_rel_error, passed: max_rel_error <= TIME_SCALING_TOL })
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeSample {
    pub rho: f64,
    /// `sup_window |ρ^{1−j} ∂^j u(s/ρ)|` for `j = 0..=k`.
    pub metrics: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConeReport {
    pub window: (f64, f64),
    pub samples: Vec<ConeSample>,
    /// `metric(ρ)/metric(ρ/2)` for consecutive halvings, order 0.
    pub halving_ratios: Vec<f64>,
    pub monotone: bool,
    pub passed: bool,
}

pub const CONE_WINDOW_POINTS: usize = 201;
pub const HALVING_RATIO: f64 = 4.0;
pub const HALVING_TOL: f64 = 0.05;

/// Distance of `ρΣ` to the cone on the window `[a, b]`:
/// `ρ·r(s/ρ) − σs = ρ·u(s/ρ)`, and its derivatives.
pub fn cone_convergence(sol: &ShrinkerSolution, window: (f64, f64), rho_samples: &[f64]) -> Result<ConeReport> {
    let (a, b) = window;
    if !(a > 0.0 && b > a) {
        return Err(Error::config("window", format!("need 0 < a < b, got [{a}, {b}]")));
    }
    let s_max = sol.grid().s_max();
    for &rho in rho_samples {
        if !(rho > 0.0) {
            return Err(Error::config("rho", format!("must be positive, got {rho}")));
        }
        if b / rho > s_max {
            return Err(Error::WindowOutsideDomain { s: b / rho, s_max });
        }
        if a / rho < sol.r {
            return Err(Error::config("window", format!("point {a} maps below R = {}", sol.r)));
        }
    }
    let k = sol.k;
    let interps = (0..=k)
        .map(|j| Ok(Profile::new(sol.grid().clone(), sol.u.deriv(j)?.to_vec()).interpolant()))
        .collect::<Result<Vec<_>>>()?;
    let window_pts: Vec<f64> = (0..CONE_WINDOW_POINTS)
        .map(|i| a * (b / a).powf(i as f64 / (CONE_WINDOW_POINTS - 1) as f64))
        .collect();
    let samples: Vec<ConeSample> = rho_samples
        .par_iter()
        .map(|&rho| {
            let metrics = interps
                .iter()
                .enumerate()
                .map(|(j, it)| {
                    let f = rho.powi(1 - j as i32);
                    window_pts.iter().map(|s| (f * it.value(s / rho)).abs()).fold(0.0, f64::max)
                })
                .collect();
            ConeSample { rho, metrics }
        })
        .collect();
    let mut halving_ratios = Vec::new();
    let mut monotone = true;
    for w in samples.windows(2) {
        if w[1].rho < w[0].rho && w[1].metrics[0] > w[0].metrics[0] * 1.01 {
            monotone = false;
        }
        if (w[1].rho * 2.0 - w[0].rho).abs() <= 1e-12 * w[0].rho {
            halving_ratios.push(w[0].metrics[0] / w[1].metrics[0]);
        }
    }
    let on_cone = samples.iter().all(|s| s.metrics[0] == 0.0);
    let passed = on_cone
        || monotone && halving_ratios.iter().all(|r| (r / HALVING_RATIO - 1.0).abs() <= HALVING_TOL);
    Ok(ConeReport { window, samples, halving_ratios, monotone, passed })
}

/// Window `[2R, 4R]` and `ρ ∈ {1, 1/2, 1/4, 1/8}`, which keeps `s/ρ` inside
/// the grid when `S_max ≥ 32R`.
pub fn default_cone_check(sol: &ShrinkerSolution) -> Result<ConeReport> {
    cone_convergence(sol, (2.0 * sol.r, 4.0 * sol.r), &[1.0, 0.5, 0.25, 0.125])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curvature::CurvatureFunction;
    use crate::fixpoint::{solve_fixed_point, SolverConfig};
    use approx::assert_relative_eq;
    use std::sync::OnceLock;

    fn mcf() -> &'static ShrinkerSolution {
        static SOL: OnceLock<ShrinkerSolution> = OnceLock::new();
        SOL.get_or_init(|| {
            let mut cfg = SolverConfig::new(CurvatureFunction::mean(2), 1.0);
            cfg.r = Some(10.0);
            solve_fixed_point(&cfg).unwrap()
        })
    }

    #[test]
    fn bad_times() {
        for t in [0.0, -1.5, 0.3, f64::NAN] {
            assert!(matches!(rescale(mcf(), t), Err(Error::BadTime(_))));
        }
    }

    #[test]
    fn unit_time_is_identity() {
        let sol = mcf();
        let snap = rescale(sol, -1.0).unwrap();
        assert_eq!(snap.nodes(), sol.grid().nodes());
        assert_eq!(snap.u_circ(), sol.u_circ.values());
        for (r, (s, u)) in snap.radius().iter().zip(sol.grid().nodes().iter().zip(sol.u.values())) {
            assert_relative_eq!(*r, s + u, max_relative = 1e-14);
        }
    }

    #[test]
    fn quarter_time_substitution() {
        let sol = mcf();
        let snap = rescale(sol, -0.25).unwrap();
        let it = sol.u_circ.interpolant();
        // u°_t(s) = u°(2s)/2 at s = x_i/2
        let i = 40;
        let x = sol.grid().nodes()[i];
        assert_relative_eq!(snap.nodes()[i], x / 2.0);
        assert_relative_eq!(snap.u_circ()[i], 0.5 * it.value(x), max_relative = 1e-9);
        // r_t = λ r(s/λ)
        let r = sol.sigma() * x + sol.u.values()[i];
        assert_relative_eq!(snap.radius()[i], 0.5 * r, max_relative = 1e-14);
    }

    #[test]
    fn scaling_identities_hold() {
        let rep = time_scaled_bounds(mcf(), &[-1.0, -0.5, -0.1, -0.01]).unwrap();
        assert!(rep.passed, "max rel error {}", rep.max_rel_error);
        for (j, s) in rep.slopes.iter().enumerate() {
            let expected = if j == 3 { 1.0 } else { 2.0 };
            assert!((s.unwrap() - expected).abs() <= 1e-10);
        }
        let e = rep.entries.iter().find(|e| e.t == -0.01 && e.order == 0).unwrap();
        assert_relative_eq!(e.norm / e.baseline, 1e-4, max_relative = 1e-12);
    }

    #[test]
    fn snapshot_csv() {
        let snap = rescale(mcf(), -0.5).unwrap();
        let mut buf = Vec::new();
        snap.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,s,r_t,u_circ_t");
        assert_eq!(lines.count(), mcf().grid().len());
    }

    #[test]
    fn cone_metric_quarters() {
        let sol = mcf();
        let rep = default_cone_check(sol).unwrap();
        assert!(rep.passed, "{:?}", rep.halving_ratios);
        // at ρ = 1 the metric is sup |u| on the window; u decreases there
        let nodes_sup = sol
            .grid()
            .nodes()
            .iter()
            .zip(sol.u.values())
            .filter(|(s, _)| **s >= 20.0 && **s <= 40.0)
            .map(|(_, u)| u.abs())
            .fold(0.0, f64::max);
        assert!(rep.samples[0].metrics[0] >= nodes_sup);
        assert_relative_eq!(rep.samples[0].metrics[0], sol.u.interpolant().value(20.0), max_relative = 1e-12);
    }

    #[test]
    fn window_outside_grid() {
        let sol = mcf();
        let err = cone_convergence(sol, (20.0, 40.0), &[0.01]).unwrap_err();
        assert!(matches!(err, Error::WindowOutsideDomain { .. }));
    }

    #[test]
    fn cone_itself_has_zero_metric() {
        let mut sol = mcf().clone();
        sol.u = Profile::from_fn_with_derivs(sol.grid().clone(), 3, |_, _| 0.0);
        let rep = default_cone_check(&sol).unwrap();
        assert!(rep.samples.iter().all(|s| s.metrics.iter().all(|m| *m == 0.0)));
        assert!(rep.passed);
    }
}
