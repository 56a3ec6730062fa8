//! Second-order Taylor remainder `𝒬` of the shrinker operator along the path
//! from the cone (`θ = 0`) to the profile `σs + u` (`θ = 1`).

use rayon::prelude::*;

use crate::curvature::{BasePointData, CurvatureFunction};
use crate::error::{Error, Result};
use crate::geometry::residual_g;
use crate::grid::{weighted_norm, Profile};
use crate::linsolve::QuadratureConfig;
use crate::quad::UnitRule;

/// `z = σs + θu`, `p = σ + θu′`, `q = θu″` at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThetaPath {
    pub z: f64,
    pub p: f64,
    pub q: f64,
}

impl ThetaPath {
    /// `jet` is `(u, u′, u″)` at `s`.
    pub fn new(sigma: f64, s: f64, jet: [f64; 3], theta: f64) -> Self {
        Self { z: sigma * s + theta * jet[0], p: sigma + theta * jet[1], q: theta * jet[2] }
    }
}

/// `ω = σs·((1/z)1⃗, −q/(1+p²))`, the curvature argument rescaled to the cone.
#[derive(Debug, Clone, PartialEq)]
pub struct OmegaPoint(pub Vec<f64>);

pub fn omega(path: &ThetaPath, sigma: f64, s: f64, n: usize) -> Result<OmegaPoint> {
    if !(path.z > 0.0) {
        return Err(Error::NonPositiveZ { s });
    }
    let scale = sigma * s;
    let mut w = vec![scale / path.z; n];
    w[n - 1] = -scale * path.q / (1.0 + path.p * path.p);
    Ok(OmegaPoint(w))
}

/// `ω` for the `i`-th grid point of `v`, checked against the admissible box.
pub fn omega_at(v: &Profile, i: usize, theta: f64, f: &CurvatureFunction, sigma: f64) -> Result<OmegaPoint> {
    let s = v.nodes()[i];
    let jet = jet_at(v, i)?;
    let w = omega(&ThetaPath::new(sigma, s, jet, theta), sigma, s, f.dim())?;
    if !f.domain().contains(&w.0) {
        return Err(Error::DomainEscape { s, theta, omega: w.0 });
    }
    Ok(w)
}

fn jet_at(v: &Profile, i: usize) -> Result<[f64; 3]> {
    Ok([v.values()[i], v.deriv(1)?[i], v.deriv(2)?[i]])
}

/// `𝒬v` at one point from the six-term θ-integral formula.
fn remainder_at(
    f: &CurvatureFunction,
    sigma: f64,
    s: f64,
    jet: [f64; 3],
    rule: &UnitRule,
) -> Result<f64> {
    let n = f.dim();
    let [u, up, upp] = jet;
    if u == 0.0 && up == 0.0 && upp == 0.0 {
        return Ok(0.0);
    }
    let ss = sigma * s;
    // coefficients of u″², u′², u², u″u′, u u″, u u′
    let mut acc = [0.0f64; 6];
    for (&theta, &wt) in rule.nodes.iter().zip(&rule.weights) {
        let path = ThetaPath::new(sigma, s, jet, theta);
        let om = omega(&path, sigma, s, n)?;
        if !f.domain().contains(&om.0) {
            return Err(Error::DomainEscape { s, theta, omega: om.0 });
        }
        let g = f.grad(&om.0);
        let h = f.hess(&om.0);
        let hij = |i: usize, j: usize| h[i * n + j];
        let (z, p, q) = (path.z, path.p, path.q);
        let a = 1.0 + p * p;
        let hnn = hij(n - 1, n - 1);
        let gn = g[n - 1];
        let mut h_rad = 0.0;
        let mut h_mix = 0.0;
        for i in 0..n - 1 {
            h_mix += hij(n - 1, i);
            for j in 0..n - 1 {
                h_rad += hij(i, j);
            }
        }
        let g_rad: f64 = g[..n - 1].iter().sum();
        let z2 = z * z;
        let terms = [
            ss * hnn / (a * a),
            ss * hnn * 4.0 * q * q * p * p / a.powi(4) + gn * 2.0 * q * (1.0 - 3.0 * p * p) / a.powi(3),
            (ss * h_rad + 2.0 * z * g_rad) / (z2 * z2),
            2.0 * (ss * hnn * (-2.0 * q * p) / a.powi(3) + gn * 2.0 * p / (a * a)),
            2.0 * ss * h_mix / (a * z2),
            -2.0 * ss * h_mix * 2.0 * q * p / (a * a * z2),
        ];
        let w = wt * (1.0 - theta);
        for (acc, t) in acc.iter_mut().zip(terms) {
            *acc += w * t;
        }
    }
    Ok(acc[0] * upp * upp
        + acc[1] * up * up
        + acc[2] * u * u
        + acc[3] * upp * up
        + acc[4] * u * upp
        + acc[5] * u * up)
}

/// `𝒬v` on the grid of `v` (which needs derivatives through order 2).
pub fn q_eval(v: &Profile, f: &CurvatureFunction, sigma: f64, cfg: &QuadratureConfig) -> Result<Profile> {
    let rule = UnitRule::gauss_legendre(cfg.theta_nodes);
    let nodes = v.nodes();
    let values = (0..nodes.len())
        .into_par_iter()
        .map(|i| remainder_at(f, sigma, nodes[i], jet_at(v, i)?, &rule))
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile::new(v.grid().clone(), values))
}

/// `𝒬v` from the Taylor identity: the full operator `𝒢` at `θ = 1` minus its
/// value and first θ-derivative at the cone.
pub fn q_via_identity(v: &Profile, f: &CurvatureFunction, base: &BasePointData) -> Result<Profile> {
    let sigma = base.sigma;
    let nodes = v.nodes();
    let radial = base.radial_grad_sum();
    let values = (0..nodes.len())
        .into_par_iter()
        .map(|i| {
            let s = nodes[i];
            let [u, up, upp] = jet_at(v, i)?;
            let full = residual_g(upp, sigma + up, sigma * s + u, s, f)?;
            let linear = base.f0 / (sigma * s) - base.dn_f() / (1.0 + sigma * sigma) * upp
                - radial / (sigma * sigma * s * s) * u
                + 0.5 * (s * up - u);
            Ok(full - linear)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Profile::new(v.grid().clone(), values))
}

/// `sup s⁵|𝒬v − 𝒬ṽ|` over the grid divided by `‖v − ṽ‖` (weighted, order `k`).
pub fn lipschitz_probe(
    v: &Profile,
    vt: &Profile,
    f: &CurvatureFunction,
    sigma: f64,
    k: usize,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let diff = v.combine(1.0, vt, -1.0);
    let dn = weighted_norm(&diff, k)?;
    if dn == 0.0 {
        return Err(Error::IdenticalInputs);
    }
    let qv = q_eval(v, f, sigma, cfg)?;
    let qt = q_eval(vt, f, sigma, cfg)?;
    let sup = v
        .nodes()
        .iter()
        .zip(qv.values().iter().zip(qt.values()))
        .map(|(s, (a, b))| s.powi(5) * (a - b).abs())
        .fold(0.0, f64::max);
    Ok(sup / dn)
}
