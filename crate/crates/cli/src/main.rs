//! `shrinker`: solve, verify and sweep self-shrinker profiles.

mod config;
mod verify;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use shrinker_core::fixpoint::{decay_report, solve_fixed_point, IterationTrace, ShrinkerSolution, SolverConfig};
use shrinker_core::geometry::mesh_export;
use shrinker_core::grid::{weighted_sup_order, Grid, Profile};
use shrinker_core::Error;

use config::{ConfigError, ModelSpec, RawConfig, RunConfig};
use verify::{VerifyOptions, VerifyReport};

const SCHEMA_VERSION: u32 = 1;

const EXIT_RUNTIME: u8 = 1;
const EXIT_NO_CONVERGENCE: u8 = 2;
const EXIT_CONFIG: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "shrinker", version, about = "Self-shrinkers asymptotic to a cone")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Flat `section.key = value` file
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,

    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for the randomized checks in `verify`
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Also write mesh.off
    #[arg(long, global = true)]
    mesh: bool,

    /// Override a config key, e.g. `--set model.sigma=2`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve and write solution.csv and summary.json
    Solve,
    /// Check the stored solution (solving first if absent) and write verify.json
    Verify,
    /// Solve and verify every (n, sigma, eps) cell and write sweep.csv
    Sweep,
}

#[derive(Debug)]
enum Failure {
    Config(String),
    NoConvergence(String),
    Verify(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } => Failure::Config(e.to_string()),
            Error::NoConvergence { .. } => Failure::NoConvergence(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Config(m) => (EXIT_CONFIG, m),
                Failure::NoConvergence(m) => (EXIT_NO_CONVERGENCE, m),
                Failure::Verify(m) => (EXIT_VERIFY, m),
                Failure::Runtime(m) => (EXIT_RUNTIME, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig, Failure> {
    let mut raw = match &cli.config {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    for o in &cli.overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Failure::Config(format!("--set expects KEY=VALUE, got `{o}`")))?;
        raw.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = cli.seed {
        raw.set("verify.seed", &seed.to_string())?;
    }
    if cli.mesh {
        raw.set("output.mesh", "true")?;
    }
    Ok(RunConfig::from_raw(&raw)?)
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let cfg = load_config(cli)?;
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Runtime(e.to_string()))?;
    }
    std::fs::create_dir_all(&cli.out_dir)?;
    match cli.command {
        Command::Solve => cmd_solve(&cfg, &cli.out_dir).map(|_| ()),
        Command::Verify => cmd_verify(&cfg, &cli.out_dir),
        Command::Sweep => cmd_sweep(&cfg, &cli.out_dir),
    }
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| Failure::Runtime(e.to_string()))?;
    writeln!(w)?;
    Ok(())
}

fn model_json(model: &ModelSpec) -> Value {
    json!({ "family": model.family_name(), "n": model.n, "eps": model.eps, "sigma": model.sigma })
}

fn trace_json(trace: &IterationTrace) -> Value {
    serde_json::to_value(&trace.records).unwrap_or(Value::Null)
}

/// `s, r, u, u_circ, residual, u_d1..u_dk`, 17 significant digits.
fn write_solution_csv(sol: &ShrinkerSolution, path: &Path) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::from("s,r,u,u_circ,residual");
    for j in 1..=sol.k {
        header.push_str(&format!(",u_d{j}"));
    }
    writeln!(w, "{header}")?;
    let derivs: Vec<&[f64]> = (1..=sol.k).map(|j| sol.u.deriv(j)).collect::<Result<_, _>>()?;
    for (i, &s) in sol.grid().nodes().iter().enumerate() {
        let mut line = format!(
            "{s:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            sol.geometry.r[i],
            sol.u.values()[i],
            sol.u_circ.values()[i],
            sol.residual[i]
        );
        for d in &derivs {
            line.push_str(&format!(",{:.16e}", d[i]));
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

fn read_solution_csv(path: &Path, cfg: &RunConfig) -> Result<ShrinkerSolution, Failure> {
    let bad = |m: String| Failure::Runtime(format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file".into()))?.split(',').collect();
    let col = |name: &str| header.iter().position(|h| h.trim() == name);
    let (is, iu) = (col("s").ok_or_else(|| bad("no s column".into()))?, col("u").ok_or_else(|| bad("no u column".into()))?);
    let k = cfg.solver.k;
    let dcols: Vec<Option<usize>> = (1..=k).map(|j| col(&format!("u_d{j}"))).collect();
    let mut s = Vec::new();
    let mut u = Vec::new();
    let mut d: Vec<Vec<f64>> = vec![Vec::new(); k];
    for (n, line) in lines.enumerate() {
        let fields: Vec<f64> = line
            .split(',')
            .map(|x| x.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
        if fields.len() != header.len() {
            return Err(bad(format!("line {}: expected {} fields", n + 2, header.len())));
        }
        s.push(fields[is]);
        u.push(fields[iu]);
        for (j, c) in dcols.iter().enumerate() {
            if let Some(c) = c {
                d[j].push(fields[*c]);
            }
        }
    }
    if s.len() < 2 {
        return Err(bad("too few rows".into()));
    }
    let r = s[0];
    let s_max = *s.last().unwrap();
    let grid = Arc::new(Grid::new(r, s_max, cfg.solver.points_per_decade)?);
    if grid.len() != s.len() || grid.nodes().iter().zip(&s).any(|(a, b)| (a - b).abs() > 1e-12 * a) {
        return Err(bad("nodes do not match the configured grid".into()));
    }
    let profile = if dcols.iter().all(Option::is_some) {
        Profile::with_derivs(grid, u, d)
    } else {
        Profile::new(grid, u)
    };
    Ok(ShrinkerSolution::from_profile(
        cfg.model.curvature(),
        cfg.model.sigma,
        k,
        cfg.solver.quadrature.clone(),
        profile,
    )?)
}

fn summary_json(sol: &ShrinkerSolution, cfg: &RunConfig, model: &ModelSpec) -> Result<Value, Failure> {
    let k = sol.k;
    let tail = sol.u.tail();
    let decay = decay_report(&sol.u_circ, k)?;
    let contraction = sol.contraction_ratio().or(sol.selection.as_ref().map(|s| s.ratio));
    Ok(json!({
        "schema_version": SCHEMA_VERSION,
        "status": "converged",
        "model": model_json(model),
        "k": k,
        "f0": sol.base.f0,
        "c": sol.base.c,
        "leading_coefficient": sol.base.leading_coefficient(),
        "R_accepted": sol.r,
        "S_max": sol.grid().s_max(),
        "points_per_decade": cfg.solver.points_per_decade,
        "ball_radius": sol.ball_radius,
        "r_selection": sol.selection,
        "iterations": sol.iterations(),
        "contraction_ratio": contraction,
        "tail": {
            "a1": tail.map(|t| t.a1),
            "a3": tail.map(|t| t.a3),
            "fit_residual": tail.map(|t| t.residual),
            "ansatz": tail.map(|t| format!("{:?}", t.ansatz)),
        },
        "norms": {
            "u_weighted": sol.u_norm()?,
            "s3_u_circ": weighted_sup_order(&sol.u_circ, 0, 3.0)?,
            "sup_s_abs_u": sol.grid().nodes().iter().zip(sol.u.values()).map(|(s, u)| s * u.abs()).fold(0.0, f64::max),
        },
        "decay": decay,
        "residual_sup": sol.residual_sup,
        "trace": trace_json(&sol.trace),
    }))
}

fn solve_and_write(cfg: &RunConfig, model: &ModelSpec, out: &Path) -> Result<ShrinkerSolution, Failure> {
    let solver = cfg.solver_config(model);
    match solve_fixed_point(&solver) {
        Ok(sol) => {
            write_solution_csv(&sol, &out.join("solution.csv"))?;
            write_json(&out.join("summary.json"), &summary_json(&sol, cfg, model)?)?;
            if cfg.mesh {
                let w = BufWriter::new(File::create(out.join("mesh.off"))?);
                mesh_export(&sol.geometry, cfg.angular_samples, w)?;
            }
            Ok(sol)
        }
        Err(Error::NoConvergence { iterations, last_step, trace }) => {
            let summary = json!({
                "schema_version": SCHEMA_VERSION,
                "status": "no_convergence",
                "model": model_json(model),
                "iterations": iterations,
                "last_step": last_step,
                "contraction_ratio": trace.contraction_ratio(),
                "trace": trace_json(&trace),
            });
            write_json(&out.join("summary.json"), &summary)?;
            Err(Failure::NoConvergence(format!(
                "no convergence after {iterations} iterations (last step {last_step:e})"
            )))
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<ShrinkerSolution, Failure> {
    let sol = solve_and_write(cfg, &cfg.model, out)?;
    eprintln!(
        "converged: R = {}, {} iterations, a1 = {:.6}, residual {:.2e}",
        sol.r,
        sol.iterations(),
        sol.tail_a1(),
        sol.residual_sup
    );
    Ok(sol)
}

fn verify_options(cfg: &RunConfig) -> VerifyOptions {
    VerifyOptions { seed: cfg.seed, random_profiles: cfg.random_profiles, oracle: cfg.oracle }
}

fn cmd_verify(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let path = out.join("solution.csv");
    let sol = if path.exists() { read_solution_csv(&path, cfg)? } else { cmd_solve(cfg, out)? };
    let solver = cfg.solver_config(&cfg.model);
    let report: VerifyReport = verify::verify(&sol, &solver, &verify_options(cfg));
    write_json(&out.join("verify.json"), &report)?;
    for c in &report.checks {
        eprintln!("{:<18} {}", c.name, serde_json::to_string(&c.status).unwrap_or_default().trim_matches('"'));
    }
    if report.all_pass {
        Ok(())
    } else {
        let failed: Vec<&str> = report.checks.iter().filter(|c| c.status == verify::Status::Fail).map(|c| c.name).collect();
        Err(Failure::Verify(format!("failed checks: {}", failed.join(", "))))
    }
}

struct SweepRow {
    model: ModelSpec,
    r: f64,
    iterations: usize,
    contraction: f64,
    a1: f64,
    s3_u_circ: f64,
    residual_sup: f64,
    all_pass: bool,
    error: String,
}

fn sweep_cell(cfg: &RunConfig, model: ModelSpec, out: &Path) -> SweepRow {
    let mut row = SweepRow {
        model: model.clone(),
        r: f64::NAN,
        iterations: 0,
        contraction: f64::NAN,
        a1: f64::NAN,
        s3_u_circ: f64::NAN,
        residual_sup: f64::NAN,
        all_pass: false,
        error: String::new(),
    };
    let dir = out.join(format!("cell_n{}_sigma{}_eps{}", model.n, model.sigma, model.eps));
    let result = (|| -> Result<(), Failure> {
        std::fs::create_dir_all(&dir)?;
        let sol = solve_and_write(cfg, &model, &dir)?;
        row.r = sol.r;
        row.iterations = sol.iterations();
        row.contraction = sol.contraction_ratio().or(sol.selection.as_ref().map(|s| s.ratio)).unwrap_or(f64::NAN);
        row.a1 = sol.tail_a1();
        row.s3_u_circ = weighted_sup_order(&sol.u_circ, 0, 3.0)?;
        row.residual_sup = sol.residual_sup;
        let solver: SolverConfig = cfg.solver_config(&model);
        let report = verify::verify(&sol, &solver, &verify_options(cfg));
        write_json(&dir.join("verify.json"), &report)?;
        row.all_pass = report.all_pass;
        if !report.all_pass {
            let failed: Vec<&str> =
                report.checks.iter().filter(|c| c.status == verify::Status::Fail).map(|c| c.name).collect();
            row.error = format!("failed: {}", failed.join(" "));
        }
        Ok(())
    })();
    if let Err(e) = result {
        row.error = match e {
            Failure::Config(m) | Failure::NoConvergence(m) | Failure::Verify(m) | Failure::Runtime(m) => m,
        };
    }
    row
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let mut cells = Vec::new();
    for &n in &cfg.sweep_n {
        for &sigma in &cfg.sweep_sigma {
            for &eps in &cfg.sweep_eps {
                cells.push(ModelSpec::from_cell(n, sigma, eps));
            }
        }
    }
    let rows: Vec<SweepRow> = cells.into_par_iter().map(|m| sweep_cell(cfg, m, out)).collect();
    let mut w = BufWriter::new(File::create(out.join("sweep.csv"))?);
    writeln!(w, "n,sigma,eps,R_accepted,iterations,contraction_ratio,a1,s3_u_circ_norm,residual_sup,all_pass,error")?;
    for r in &rows {
        writeln!(
            w,
            "{},{:.16e},{:.16e},{:.16e},{},{:.16e},{:.16e},{:.16e},{:.16e},{},\"{}\"",
            r.model.n,
            r.model.sigma,
            r.model.eps,
            r.r,
            r.iterations,
            r.contraction,
            r.a1,
            r.s3_u_circ,
            r.residual_sup,
            r.all_pass,
            r.error.replace('"', "'")
        )?;
    }
    w.flush()?;
    let passed = rows.iter().filter(|r| r.all_pass).count();
    eprintln!("sweep: {passed}/{} cells pass", rows.len());
    Ok(())
}
