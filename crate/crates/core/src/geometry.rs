//! Hypersurfaces of revolution `X(ν, s) = (r(s)ν, s)`: normals, principal
//! curvatures and the two equivalent forms of the shrinker equation.

use std::io::Write;

use crate::curvature::CurvatureFunction;
use crate::error::{Error, Result};
use crate::grid::Profile;

/// Sampled radius function with its first two derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct RevolutionProfile {
    pub s: Vec<f64>,
    pub r: Vec<f64>,
    pub rp: Vec<f64>,
    pub rpp: Vec<f64>,
}

impl RevolutionProfile {
    pub fn new(s: Vec<f64>, r: Vec<f64>, rp: Vec<f64>, rpp: Vec<f64>) -> Result<Self> {
        assert!(
            s.len() == r.len() && s.len() == rp.len() && s.len() == rpp.len(),
            "profile arrays must have equal length"
        );
        if let Some(&bad) = r.iter().find(|r| !(**r > 0.0)) {
            return Err(Error::NonPositiveRadius(bad));
        }
        if s.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("s", "must be strictly increasing"));
        }
        Ok(Self { s, r, rp, rpp })
    }

    /// Samples `r` and its derivatives from a closure returning `(r, r′, r″)`.
    pub fn from_fn(s: Vec<f64>, f: impl Fn(f64) -> (f64, f64, f64)) -> Result<Self> {
        let (mut r, mut rp, mut rpp) = (Vec::new(), Vec::new(), Vec::new());
        for &x in &s {
            let (a, b, c) = f(x);
            r.push(a);
            rp.push(b);
            rpp.push(c);
        }
        Self::new(s, r, rp, rpp)
    }

    /// `r = σs + u` for a perturbation profile with at least two stored derivatives.
    pub fn from_perturbation(u: &Profile, sigma: f64) -> Result<Self> {
        let s = u.nodes().to_vec();
        let r = s.iter().zip(u.values()).map(|(s, u)| sigma * s + u).collect();
        let rp = u.deriv(1)?.iter().map(|d| sigma + d).collect();
        let rpp = u.deriv(2)?.to_vec();
        Self::new(s, r, rp, rpp)
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }
}

/// `(1/(r√(1+r′²)), …, −r″/(1+r′²)^{3/2})` with `n−1` repeated rotational entries.
pub fn principal_curvatures(r: f64, rp: f64, rpp: f64, n: usize) -> Result<Vec<f64>> {
    if !(r > 0.0) {
        return Err(Error::NonPositiveRadius(r));
    }
    let w = (1.0 + rp * rp).sqrt();
    let mut k = vec![1.0 / (r * w); n];
    k[n - 1] = -rpp / (w * w * w);
    Ok(k)
}

/// `f(κ) + ½(s r′ − r)/√(1+r′²)` at every sample.
pub fn residual_geometric(profile: &RevolutionProfile, f: &CurvatureFunction) -> Result<Vec<f64>> {
    let n = f.dim();
    (0..profile.len())
        .map(|i| {
            let (s, r, rp) = (profile.s[i], profile.r[i], profile.rp[i]);
            let kappa = principal_curvatures(r, rp, profile.rpp[i], n)?;
            if !f.evaluable(&kappa) {
                return Err(Error::DomainViolation { point: kappa });
            }
            Ok(f.eval(&kappa) + 0.5 * (s * rp - r) / (1.0 + rp * rp).sqrt())
        })
        .collect()
}

/// `𝒢(q, p, z; s) = f((1/z)1⃗, −q/(1+p²)) + ½(sp − z)`.
pub fn residual_g(q: f64, p: f64, z: f64, s: f64, f: &CurvatureFunction) -> Result<f64> {
    if !(z > 0.0) {
        return Err(Error::NonPositiveZ { s });
    }
    let n = f.dim();
    let mut lambda = vec![1.0 / z; n];
    lambda[n - 1] = -q / (1.0 + p * p);
    if !f.evaluable(&lambda) {
        return Err(Error::DomainViolation { point: lambda });
    }
    Ok(f.eval(&lambda) + 0.5 * (s * p - z))
}

/// `𝒢(r″, r′, r; s)` at every sample.
pub fn residual_g_profile(profile: &RevolutionProfile, f: &CurvatureFunction) -> Result<Vec<f64>> {
    (0..profile.len())
        .map(|i| residual_g(profile.rpp[i], profile.rp[i], profile.r[i], profile.s[i], f))
        .collect()
}

/// Coefficients `(a, b)` of `N = a·ν + b·e_axis` with the inward orientation.
pub fn unit_normal(rp: f64) -> (f64, f64) {
    let w = (1.0 + rp * rp).sqrt();
    (-1.0 / w, rp / w)
}

/// Writes the surface swept by rotating `r(s)` about the axis as an ASCII OFF
/// triangle mesh: `len × angular_samples` vertices, two triangles per quad.
pub fn mesh_export(profile: &RevolutionProfile, angular_samples: usize, mut out: impl Write) -> Result<()> {
    if angular_samples < 3 {
        return Err(Error::config("angular_samples", "need at least 3"));
    }
    let a = angular_samples;
    let rings = profile.len();
    let faces = 2 * rings.saturating_sub(1) * a;
    writeln!(out, "OFF")?;
    writeln!(out, "{} {} 0", rings * a, faces)?;
    for (s, r) in profile.s.iter().zip(&profile.r) {
        for j in 0..a {
            let th = 2.0 * std::f64::consts::PI * j as f64 / a as f64;
            writeln!(out, "{:.16e} {:.16e} {:.16e}", r * th.cos(), r * th.sin(), s)?;
        }
    }
    for i in 0..rings.saturating_sub(1) {
        for j in 0..a {
            let v00 = i * a + j;
            let v01 = i * a + (j + 1) % a;
            let v10 = v00 + a;
            let v11 = v01 + a;
            writeln!(out, "3 {v00} {v01} {v11}")?;
            writeln!(out, "3 {v00} {v11} {v10}")?;
        }
    }
    Ok(())
}
