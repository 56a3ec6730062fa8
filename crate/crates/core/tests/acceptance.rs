//! Acceptance suite: one line per criterion, nonzero exit if any fails.

use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};

use shrinker_core::curvature::{check_admissibility, CurvatureFunction, FnCurvature};
use shrinker_core::fixpoint::{decay_report, power_profile, solve_fixed_point, ShrinkerSolution, SolverConfig};
use shrinker_core::flow::{default_cone_check, time_scaled_bounds};
use shrinker_core::grid::{weighted_norm, Grid, Profile};
use shrinker_core::linsolve::{solve_l, verify_estimates, LinearProblem, QuadratureConfig};
use shrinker_core::nonlinear::{q_eval, q_via_identity};
use shrinker_core::oracle::{compare_with_shooting, shoot_backward};

const MCF_RATIO_MAX: f64 = 0.55;
const MCF_A1_TOL: f64 = 1e-3;
const MCF_RUNTIME_MAX_S: f64 = 30.0;
const RESIDUAL_FACTOR: f64 = 100.0;
const ORACLE_TOL: f64 = 1e-5;
const MANUFACTURED_TOL: f64 = 1e-8;
const Q_IDENTITY_TOL: f64 = 1e-9;
const Q_RANDOM_PROFILES: usize = 50;
const Q_QUADRATIC_TOL: f64 = 0.01;
const DECAY_TOL: f64 = 0.15;
const TIME_SCALING_TOL: f64 = 1e-12;
const CONE_RATIO_TOL: f64 = 0.05;
const ADMISSIBILITY_SAMPLES: usize = 64;

struct Outcome {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

struct Case {
    label: String,
    config: SolverConfig,
    solution: Result<ShrinkerSolution, String>,
}

fn case(label: &str, f: CurvatureFunction, sigma: f64) -> Case {
    let config = SolverConfig::new(f, sigma);
    let solution = solve_fixed_point(&config).map_err(|e| e.to_string());
    Case { label: label.into(), config, solution }
}

fn each_solved<'a>(cases: &'a [Case], mut check: impl FnMut(&'a Case, &'a ShrinkerSolution) -> (bool, String)) -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    for c in cases {
        match &c.solution {
            Ok(sol) => {
                let (pass, d) = check(c, sol);
                ok &= pass;
                parts.push(format!("{}: {d}", c.label));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("{}: solve failed ({e})", c.label));
            }
        }
    }
    (ok, parts.join("; "))
}

fn mcf_reference(mcf: &Case, seconds: f64) -> (bool, String) {
    let Ok(sol) = &mcf.solution else {
        return (false, "solve failed".into());
    };
    let ratio = sol.contraction_ratio().or(sol.selection.as_ref().map(|s| s.ratio)).unwrap_or(f64::NAN);
    let sup_su = sol.grid().nodes().iter().zip(sol.u.values()).map(|(s, u)| s * u.abs()).fold(0.0, f64::max);
    let a1 = sol.tail_a1();
    let ok = ratio <= MCF_RATIO_MAX && sup_su <= 2.0 && (a1 - 1.0).abs() <= MCF_A1_TOL && seconds < MCF_RUNTIME_MAX_S;
    (
        ok,
        format!(
            "R={} iterations={} ratio={ratio:.3e} sup s|u|={sup_su:.6} a1={a1:.8} time={seconds:.2}s",
            sol.r,
            sol.iterations()
        ),
    )
}

fn linear_estimates() -> (bool, String) {
    let grid = Arc::new(Grid::new(10.0, 1000.0, 64).unwrap());
    let cfg = QuadratureConfig::default();
    let k = 3;
    let (mut checked, mut vacuous, mut violations) = (0, 0, 0);
    let mut worst = [0.0f64; 3];
    for c in [1.25, 2.0, 5.0] {
        let etas = [
            Profile::from_fn(grid.clone(), |s| s.powi(-3)),
            Profile::from_fn(grid.clone(), |s| s.powi(-4)),
            Profile::from_fn(grid.clone(), |s| (-s).exp()),
        ];
        for eta in etas {
            let w = match solve_l(&LinearProblem::new(eta.clone(), c).unwrap(), &cfg, 2) {
                Ok(w) => w,
                Err(_) => {
                    violations += 1;
                    continue;
                }
            };
            for gamma in [0.0, 1.0, 3.0, (k + 1) as f64] {
                match verify_estimates(&w, &eta, gamma, c) {
                    Ok(r) => {
                        if r.value_ratio.is_none() {
                            vacuous += 1;
                            continue;
                        }
                        checked += 1;
                        let scaled = [
                            r.value_ratio.unwrap() / r.value_bound,
                            r.slope_ratio.unwrap() / r.slope_bound,
                            r.second_ratio.unwrap() / r.second_bound,
                        ];
                        for (w, s) in worst.iter_mut().zip(scaled) {
                            *w = w.max(s);
                        }
                    }
                    Err(_) => violations += 1,
                }
            }
        }
    }
    (
        violations == 0,
        format!(
            "{checked} cases, {vacuous} vacuous (infinite weighted rhs), {violations} violations; \
             max ratio/bound = {:.3} / {:.3} / {:.3}",
            worst[0], worst[1], worst[2]
        ),
    )
}

fn manufactured() -> (bool, String) {
    let grid = Arc::new(Grid::new(10.0, 1000.0, 64).unwrap());
    let mut ok = true;
    let mut parts = Vec::new();
    for c in [1.25, 2.0, 5.0] {
        let eta = Profile::from_fn(grid.clone(), |s| 2.0 / s.powi(3) + c / s);
        match solve_l(&LinearProblem::new(eta, c).unwrap(), &QuadratureConfig::default(), 3) {
            Ok(w) => {
                let err = grid.nodes().iter().zip(w.values()).map(|(s, w)| (s * w - 1.0).abs()).fold(0.0, f64::max);
                ok &= err <= MANUFACTURED_TOL;
                parts.push(format!("c={c}: {err:.2e}"));
            }
            Err(e) => {
                ok = false;
                parts.push(format!("c={c}: {e}"));
            }
        }
    }
    (ok, format!("max relative error {}", parts.join(", ")))
}

fn random_ball_profile(grid: &Arc<Grid>, rng: &mut impl Rng, radius: f64) -> Profile {
    let mut v = power_profile(grid, rng.gen_range(-1.0..1.0), 1, 3);
    for p in 2..=3 {
        v = v.combine(1.0, &power_profile(grid, rng.gen_range(-1.0..1.0), p, 3), 1.0);
    }
    let norm = weighted_norm(&v, 3).unwrap();
    v.scale(radius * rng.gen_range(0.0..1.0) / norm)
}

fn q_identity() -> (bool, String) {
    let grid = Arc::new(Grid::new(10.0, 1000.0, 64).unwrap());
    let cfg = QuadratureConfig::default();
    let sigma = 1.0;
    let mut rng = rand::rngs::StdRng::seed_from_u64(20240601);
    let mut ok = true;
    let mut parts = Vec::new();
    for f in [CurvatureFunction::mean(3), CurvatureFunction::perturbed(3, 0.1)] {
        let base = shrinker_core::curvature::base_point_data(&f, sigma).unwrap();
        let mut worst: f64 = 0.0;
        for _ in 0..Q_RANDOM_PROFILES {
            let v = random_ball_profile(&grid, &mut rng, 1.0);
            match (q_eval(&v, &f, sigma, &cfg), q_via_identity(&v, &f, &base)) {
                (Ok(a), Ok(b)) => {
                    let d = a.values().iter().zip(b.values()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
                    worst = worst.max(d);
                }
                _ => worst = f64::INFINITY,
            }
        }
        let zero = Profile::from_fn_with_derivs(grid.clone(), 3, |_, _| 0.0);
        let zero_exact = q_eval(&zero, &f, sigma, &cfg).map(|q| q.values().iter().all(|x| *x == 0.0)).unwrap_or(false);

        let v = power_profile(&grid, 1.0, 1, 3).combine(1.0, &power_profile(&grid, -0.5, 2, 3), 1.0);
        let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&e| {
                let q = q_eval(&v.scale(e), &f, sigma, &cfg).unwrap();
                // grid nodes only: the tail fit has no s⁻⁵ term
                q.nodes().iter().zip(q.values()).map(|(s, x)| s.powi(5) * x.abs()).fold(0.0, f64::max) / (e * e)
            })
            .collect();
        let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(l, h), r| (l.min(*r), h.max(*r)));
        let spread = hi / lo - 1.0;

        let pass = worst <= Q_IDENTITY_TOL && zero_exact && spread <= Q_QUADRATIC_TOL;
        ok &= pass;
        parts.push(format!(
            "{}: max|diff|={worst:.2e} Q(0)=0 {zero_exact} quadratic spread={:.3}%",
            f.name(),
            100.0 * spread
        ));
    }
    (ok, parts.join("; "))
}

fn admissibility() -> (bool, String) {
    let mut ok = true;
    let mut parts = Vec::new();
    let builtins = [
        CurvatureFunction::mean(2),
        CurvatureFunction::mean(3),
        CurvatureFunction::mean(4),
        CurvatureFunction::perturbed(3, 0.1),
        CurvatureFunction::perturbed(4, 0.2),
    ];
    for f in &builtins {
        let rep = check_admissibility(f, ADMISSIBILITY_SAMPLES);
        ok &= rep.passed;
        parts.push(format!("{} n={} {}", f.name(), f.dim(), if rep.passed { "ok" } else { "FAILED" }));
    }
    let broken = [
        CurvatureFunction::new(FnCurvature::new(3, "asymmetric", |l: &[f64]| {
            let s: f64 = l.iter().sum();
            s + l[0] * l[0] / s
        })),
        CurvatureFunction::new(FnCurvature::new(3, "quadratic", |l: &[f64]| l.iter().map(|x| x * x).sum())),
        CurvatureFunction::new(FnCurvature::new(3, "decreasing", |l: &[f64]| l[0] + l[1] - 0.5 * l[2])),
    ];
    for f in &broken {
        let rep = check_admissibility(f, ADMISSIBILITY_SAMPLES);
        ok &= !rep.passed;
        parts.push(format!("{} {}", f.name(), if rep.passed { "wrongly accepted" } else { "rejected" }));
    }
    (ok, parts.join(", "))
}

fn main() {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    let mut record = |id, name, (passed, detail): (bool, String)| outcomes.push(Outcome { id, name, passed, detail });

    let t0 = Instant::now();
    let mcf = case("mean n=2 sigma=1", CurvatureFunction::mean(2), 1.0);
    let mcf_time = t0.elapsed().as_secs_f64();
    let cases = vec![
        mcf,
        case("perturbed n=3 eps=0.1 sigma=1", CurvatureFunction::perturbed(3, 0.1), 1.0),
        case("mean n=3 sigma=0.5", CurvatureFunction::mean(3), 0.5),
        case("mean n=4 sigma=2", CurvatureFunction::mean(4), 2.0),
    ];

    record(1, "MCF reference", mcf_reference(&cases[0], mcf_time));
    record(
        2,
        "geometric residual",
        each_solved(&cases, |_, sol| {
            let tol = RESIDUAL_FACTOR * sol.quadrature.rel_tol;
            (sol.residual_sup <= tol, format!("{:.2e}", sol.residual_sup))
        }),
    );
    record(
        3,
        "shooting oracle",
        each_solved(&cases[..2], |c, sol| {
            let mut cfg = c.config.clone();
            cfg.r = Some(sol.r);
            let s_max = sol.grid().s_max();
            match shoot_backward(&cfg, s_max) {
                Ok(shot) => {
                    let cmp = compare_with_shooting(sol, &shot, (2.0 * sol.r, s_max / 2.0));
                    (
                        cmp.points > 0 && cmp.max_rel_r <= ORACLE_TOL,
                        format!("rel r {:.2e}, rel u {:.2e} ({} nodes)", cmp.max_rel_r, cmp.max_rel_u, cmp.points),
                    )
                }
                Err(e) => (false, e.to_string()),
            }
        }),
    );
    record(4, "linear estimates", linear_estimates());
    record(5, "manufactured solution", manufactured());
    record(6, "Q identity", q_identity());
    record(
        7,
        "decay ladder",
        each_solved(&cases, |_, sol| match decay_report(&sol.u_circ, 3) {
            Ok(rep) => {
                let lower_ok = rep.entries[..3]
                    .iter()
                    .all(|e| e.slope.is_some_and(|s| (s - e.expected_slope).abs() <= DECAY_TOL));
                let top_finite = rep.entries[3].norm.is_finite();
                let slopes: Vec<String> =
                    rep.entries.iter().map(|e| e.slope.map_or("-".into(), |s| format!("{s:.3}"))).collect();
                (lower_ok && top_finite, format!("slopes [{}] top norm {:.3e}", slopes.join(", "), rep.entries[3].norm))
            }
            Err(e) => (false, e.to_string()),
        }),
    );
    record(
        8,
        "time scaling",
        each_solved(&cases, |_, sol| match time_scaled_bounds(sol, &[-1.0, -0.5, -0.1, -0.01]) {
            Ok(rep) => (rep.max_rel_error <= TIME_SCALING_TOL, format!("{:.1e}", rep.max_rel_error)),
            Err(e) => (false, e.to_string()),
        }),
    );
    record(
        9,
        "cone convergence",
        each_solved(&cases, |_, sol| match default_cone_check(sol) {
            Ok(rep) => {
                let ok = !rep.halving_ratios.is_empty()
                    && rep.halving_ratios.iter().all(|r| (r / 4.0 - 1.0).abs() <= CONE_RATIO_TOL);
                let rs: Vec<String> = rep.halving_ratios.iter().map(|r| format!("{r:.4}")).collect();
                (ok, format!("ratios [{}]", rs.join(", ")))
            }
            Err(e) => (false, e.to_string()),
        }),
    );
    record(10, "admissibility", admissibility());

    let mut failed = 0;
    for o in &outcomes {
        println!("[{}] criterion {:>2} {}: {}", if o.passed { "PASS" } else { "FAIL" }, o.id, o.name, o.detail);
        failed += usize::from(!o.passed);
    }
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        outcomes.len() - failed,
        outcomes.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
