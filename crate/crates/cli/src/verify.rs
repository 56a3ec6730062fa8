//! Post-solve checks written to `verify.json`.

use rand::{Rng, SeedableRng};
use serde::Serialize;
use serde_json::{json, Value};

use shrinker_core::fixpoint::{decay_report, power_profile, ShrinkerSolution, SolverConfig};
use shrinker_core::flow::{default_cone_check, time_scaled_bounds};
use shrinker_core::grid::Profile;
use shrinker_core::linsolve::{solve_l, verify_estimates, LinearProblem};
use shrinker_core::nonlinear::{q_eval, q_via_identity};
use shrinker_core::oracle::{compare_with_shooting, mcf_reference_check, shoot_backward};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    #[serde(rename = "n/a")]
    Skipped,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    pub detail: Value,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub schema_version: u32,
    pub all_pass: bool,
    pub checks: Vec<Check>,
}

pub const RESIDUAL_FACTOR: f64 = 100.0;
pub const Q_IDENTITY_TOL: f64 = 1e-9;
pub const FIXED_POINT_FACTOR: f64 = 10.0;

fn check(name: &'static str, result: shrinker_core::Result<(bool, Value)>) -> Check {
    match result {
        Ok((ok, detail)) => Check { name, status: if ok { Status::Pass } else { Status::Fail }, detail },
        Err(e) => Check { name, status: Status::Fail, detail: json!({ "error": e.to_string() }) },
    }
}

pub struct VerifyOptions {
    pub seed: u64,
    pub random_profiles: usize,
    pub oracle: bool,
}

pub fn verify(sol: &ShrinkerSolution, config: &SolverConfig, opts: &VerifyOptions) -> VerifyReport {
    let k = sol.k;
    let grid = sol.grid().clone();
    let mut checks = Vec::new();

    let residual_tol = RESIDUAL_FACTOR * sol.quadrature.rel_tol;
    checks.push(check(
        "residual",
        Ok((sol.residual_sup <= residual_tol, json!({ "sup": sol.residual_sup, "tolerance": residual_tol }))),
    ));

    checks.push(check(
        "fixed_point",
        (|| {
            let map = sol.map();
            let d = map.distance(&map.apply(&sol.u)?, &sol.u)?;
            let tol = FIXED_POINT_FACTOR * config.tol;
            Ok((d <= tol, json!({ "defect": d, "tolerance": tol })))
        })(),
    ));

    checks.push(check(
        "decay",
        decay_report(&sol.u_circ, k).map(|r| (r.passed, serde_json::to_value(&r).unwrap_or(Value::Null))),
    ));

    checks.push(check(
        "linear_estimates",
        (|| {
            let mut cases = Vec::new();
            let mut ok = true;
            for c in [1.25, 2.0, 5.0] {
                for (label, eta) in [
                    ("s^-3", Profile::from_fn(grid.clone(), |s| s.powi(-3))),
                    ("s^-4", Profile::from_fn(grid.clone(), |s| s.powi(-4))),
                    ("exp(-s)", Profile::from_fn(grid.clone(), |s| (-s).exp())),
                ] {
                    let w = solve_l(&LinearProblem::new(eta.clone(), c)?, &sol.quadrature, 2)?;
                    for gamma in [0.0, 1.0, 3.0, (k + 1) as f64] {
                        match verify_estimates(&w, &eta, gamma, c) {
                            Ok(r) => cases.push(json!({ "eta": label, "report": r })),
                            Err(e) => {
                                ok = false;
                                cases.push(json!({ "eta": label, "c": c, "gamma": gamma, "error": e.to_string() }));
                            }
                        }
                    }
                }
            }
            Ok((ok, json!({ "cases": cases })))
        })(),
    ));

    checks.push(check(
        "q_identity",
        (|| {
            let f = &sol.f;
            let sigma = sol.sigma();
            let diff = |v: &Profile| -> shrinker_core::Result<f64> {
                let a = q_eval(v, f, sigma, &sol.quadrature)?;
                let b = q_via_identity(v, f, &sol.base)?;
                Ok(a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max))
            };
            let mut worst = diff(&sol.u)?;
            let mut rng = rand::rngs::StdRng::seed_from_u64(opts.seed);
            for _ in 0..opts.random_profiles {
                let coeffs: Vec<f64> = (0..3).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mut v = power_profile(&grid, coeffs[0], 1, 2);
                for (p, c) in coeffs.iter().enumerate().skip(1) {
                    v = v.combine(1.0, &power_profile(&grid, *c, p as i32 + 1, 2), 1.0);
                }
                let norm = shrinker_core::grid::weighted_norm(&v, 2)?;
                if norm > 0.0 {
                    v = v.scale(rng.gen_range(0.0..1.0) / norm);
                }
                worst = worst.max(diff(&v)?);
            }
            let zero = Profile::from_fn_with_derivs(grid.clone(), 2, |_, _| 0.0);
            let q0 = q_eval(&zero, f, sigma, &sol.quadrature)?;
            let zero_exact = q0.values().iter().all(|x| *x == 0.0);
            Ok((
                worst <= Q_IDENTITY_TOL && zero_exact,
                json!({ "max_difference": worst, "tolerance": Q_IDENTITY_TOL, "zero_exact": zero_exact, "seed": opts.seed }),
            ))
        })(),
    ));

    checks.push(check(
        "time_scaling",
        time_scaled_bounds(sol, &[-1.0, -0.5, -0.1, -0.01])
            .map(|r| (r.passed, json!({ "max_rel_error": r.max_rel_error, "slopes": r.slopes }))),
    ));

    checks.push(check(
        "cone_convergence",
        default_cone_check(sol).map(|r| (r.passed, serde_json::to_value(&r).unwrap_or(Value::Null))),
    ));

    checks.push(if sol.f.is_mean_curvature() {
        check("mcf_reference", mcf_reference_check(sol).map(|r| (r.passed, serde_json::to_value(&r).unwrap_or(Value::Null))))
    } else {
        Check { name: "mcf_reference", status: Status::Skipped, detail: json!("n/a: not the mean curvature") }
    });

    checks.push(if opts.oracle {
        check(
            "oracle",
            (|| {
                let mut cfg = config.clone();
                cfg.r = Some(sol.r);
                let s_max = grid.s_max();
                let shot = shoot_backward(&cfg, s_max)?;
                let cmp = compare_with_shooting(sol, &shot, (2.0 * sol.r, s_max / 2.0));
                Ok((cmp.passed, serde_json::to_value(&cmp).unwrap_or(Value::Null)))
            })(),
        )
    } else {
        Check { name: "oracle", status: Status::Skipped, detail: json!("n/a: disabled") }
    });

    let all_pass = checks.iter().all(|c| c.status != Status::Fail);
    VerifyReport { schema_version: 1, all_pass, checks }
}
