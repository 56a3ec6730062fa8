//! Flat `section.key = value` configuration files.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use shrinker_core::curvature::CurvatureFunction;
use shrinker_core::fixpoint::SolverConfig;
use shrinker_core::linsolve::QuadratureConfig;

#[derive(Debug)]
pub struct ConfigError {
    pub field: String,
    pub reason: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "config field `{}`: {}", self.field, self.reason)
    }
}

impl std::error::Error for ConfigError {}

fn err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError { field: field.into(), reason: reason.into() }
}

pub const KNOWN_KEYS: &[&str] = &[
    "model.family",
    "model.n",
    "model.eps",
    "model.sigma",
    "solver.k",
    "solver.R",
    "solver.s_max_factor",
    "solver.points_per_decade",
    "solver.tol",
    "solver.max_iterations",
    "solver.ball_radius",
    "solver.R_limit",
    "quadrature.rel_tol",
    "quadrature.max_depth",
    "quadrature.theta_nodes",
    "quadrature.panel_nodes",
    "output.mesh",
    "output.angular_samples",
    "verify.seed",
    "verify.random_profiles",
    "verify.oracle",
    "sweep.n",
    "sweep.sigma",
    "sweep.eps",
];

/// Raw key-value pairs, later entries overriding earlier ones.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut raw = RawConfig::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(&format!("line {}", lineno + 1), "expected `section.key = value`"))?;
            raw.set(key.trim(), value.trim())?;
        }
        Ok(raw)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| err("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        if !KNOWN_KEYS.contains(&key) {
            return Err(err(key, "unknown key"));
        }
        self.entries.insert(key.to_string(), value.to_string());
        Ok(())
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError>
    where
        T::Err: fmt::Display,
    {
        match self.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| err(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    /// `auto` (or absent) gives `None`.
    fn parse_auto(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        match self.get(key) {
            None | Some("auto") => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e| err(key, format!("cannot parse `{v}`: {e}"))),
        }
    }

    fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Option<Vec<T>>, ConfigError>
    where
        T::Err: fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.split(',')
                    .map(|x| x.trim().parse().map_err(|e| err(key, format!("cannot parse `{x}`: {e}"))))
                    .collect()
            })
            .transpose()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Mean,
    Perturbed,
}

#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub family: Family,
    pub n: usize,
    pub eps: f64,
    pub sigma: f64,
}

impl ModelSpec {
    pub fn curvature(&self) -> CurvatureFunction {
        match self.family {
            Family::Mean => CurvatureFunction::mean(self.n),
            Family::Perturbed => CurvatureFunction::perturbed(self.n, self.eps),
        }
    }

    /// `eps = 0` means the mean curvature.
    pub fn from_cell(n: usize, sigma: f64, eps: f64) -> Self {
        let family = if eps == 0.0 { Family::Mean } else { Family::Perturbed };
        Self { family, n, eps, sigma }
    }

    pub fn family_name(&self) -> &'static str {
        match self.family {
            Family::Mean => "mean",
            Family::Perturbed => "perturbed",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub k: usize,
    pub r: Option<f64>,
    pub s_max_factor: f64,
    pub points_per_decade: usize,
    pub tol: f64,
    pub max_iterations: usize,
    pub ball_radius: Option<f64>,
    pub r_limit: f64,
    pub quadrature: QuadratureConfig,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub solver: SolverSettings,
    pub mesh: bool,
    pub angular_samples: usize,
    pub seed: u64,
    pub random_profiles: usize,
    pub oracle: bool,
    pub sweep_n: Vec<usize>,
    pub sweep_sigma: Vec<f64>,
    pub sweep_eps: Vec<f64>,
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig) -> Result<Self, ConfigError> {
        let family = match raw.get("model.family").unwrap_or("mean") {
            "mean" => Family::Mean,
            "perturbed" => Family::Perturbed,
            other => return Err(err("model.family", format!("expected `mean` or `perturbed`, got `{other}`"))),
        };
        let n: usize = raw.parse_or("model.n", 2)?;
        if n < 2 {
            return Err(err("model.n", format!("must be at least 2, got {n}")));
        }
        let eps: f64 = raw.parse_or("model.eps", 0.0)?;
        if family == Family::Perturbed && !(eps >= 0.0) {
            return Err(err("model.eps", format!("must be non-negative, got {eps}")));
        }
        let sigma: f64 = raw.parse_or("model.sigma", 1.0)?;
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(err("model.sigma", format!("must be positive, got {sigma}")));
        }
        let defaults = QuadratureConfig::default();
        let quadrature = QuadratureConfig {
            rel_tol: raw.parse_or("quadrature.rel_tol", defaults.rel_tol)?,
            max_depth: raw.parse_or("quadrature.max_depth", defaults.max_depth)?,
            theta_nodes: raw.parse_or("quadrature.theta_nodes", defaults.theta_nodes)?,
            panel_nodes: raw.parse_or("quadrature.panel_nodes", defaults.panel_nodes)?,
        };
        quadrature.validate().map_err(|e| err("quadrature", e.to_string()))?;
        let base = SolverConfig::new(CurvatureFunction::mean(2), 1.0);
        let solver = SolverSettings {
            k: raw.parse_or("solver.k", base.k)?,
            r: raw.parse_auto("solver.R")?,
            s_max_factor: raw.parse_or("solver.s_max_factor", base.s_max_factor)?,
            points_per_decade: raw.parse_or("solver.points_per_decade", base.points_per_decade)?,
            tol: raw.parse_or("solver.tol", base.tol)?,
            max_iterations: raw.parse_or("solver.max_iterations", base.max_iter)?,
            ball_radius: raw.parse_auto("solver.ball_radius")?,
            r_limit: raw.parse_or("solver.R_limit", base.r_limit)?,
            quadrature,
        };
        let model = ModelSpec { family, n, eps, sigma };
        let cfg = RunConfig {
            sweep_n: raw.parse_list("sweep.n")?.unwrap_or_else(|| vec![n]),
            sweep_sigma: raw.parse_list("sweep.sigma")?.unwrap_or_else(|| vec![sigma]),
            sweep_eps: raw.parse_list("sweep.eps")?.unwrap_or_else(|| vec![if family == Family::Mean { 0.0 } else { eps }]),
            model,
            solver,
            mesh: raw.parse_or("output.mesh", false)?,
            angular_samples: raw.parse_or("output.angular_samples", 64)?,
            seed: raw.parse_or("verify.seed", 0)?,
            random_profiles: raw.parse_or("verify.random_profiles", 10)?,
            oracle: raw.parse_or("verify.oracle", true)?,
        };
        // surface field names from the solver's own checks
        cfg.solver_config(&cfg.model).validate().map_err(|e| match e {
            shrinker_core::Error::InvalidConfig { field, reason } => err(&settings_key(&field), reason),
            other => err("model", other.to_string()),
        })?;
        Ok(cfg)
    }

    pub fn solver_config(&self, model: &ModelSpec) -> SolverConfig {
        let s = &self.solver;
        let mut c = SolverConfig::new(model.curvature(), model.sigma);
        c.k = s.k;
        c.r = s.r;
        c.s_max_factor = s.s_max_factor;
        c.points_per_decade = s.points_per_decade;
        c.tol = s.tol;
        c.max_iter = s.max_iterations;
        c.ball_radius = s.ball_radius;
        c.r_limit = s.r_limit;
        c.quadrature = s.quadrature.clone();
        c
    }
}

fn settings_key(field: &str) -> String {
    match field {
        "sigma" => "model.sigma".into(),
        "max_iter" => "solver.max_iterations".into(),
        "M" => "solver.ball_radius".into(),
        other => format!("solver.{other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let raw = RawConfig::parse("# reference\nmodel.n = 3\nmodel.sigma = 0.5 # slope\nsolver.R = auto\n").unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.model.n, 3);
        assert_eq!(cfg.model.sigma, 0.5);
        assert_eq!(cfg.solver.r, None);
        assert_eq!(cfg.solver.k, 3);
        assert_eq!(cfg.sweep_n, vec![3]);
    }

    #[test]
    fn errors_name_the_field() {
        let e = RunConfig::from_raw(&RawConfig::parse("model.sigma = -1").unwrap()).unwrap_err();
        assert_eq!(e.field, "model.sigma");
        let e = RawConfig::parse("model.colour = red").unwrap_err();
        assert_eq!(e.field, "model.colour");
        let e = RunConfig::from_raw(&RawConfig::parse("solver.k = two").unwrap()).unwrap_err();
        assert_eq!(e.field, "solver.k");
        let e = RunConfig::from_raw(&RawConfig::parse("solver.k = 2").unwrap()).unwrap_err();
        assert_eq!(e.field, "solver.k");
        assert!(RawConfig::parse("no equals sign").is_err());
    }

    #[test]
    fn sweep_lists() {
        let raw = RawConfig::parse("sweep.n = 2, 3\nsweep.sigma = 0.5,1,2\nsweep.eps = 0, 0.1").unwrap();
        let cfg = RunConfig::from_raw(&raw).unwrap();
        assert_eq!(cfg.sweep_n, vec![2, 3]);
        assert_eq!(cfg.sweep_sigma, vec![0.5, 1.0, 2.0]);
        assert_eq!(cfg.sweep_eps, vec![0.0, 0.1]);
        assert_eq!(ModelSpec::from_cell(3, 1.0, 0.1).family, Family::Perturbed);
    }
}
