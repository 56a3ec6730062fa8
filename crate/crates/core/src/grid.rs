//! Truncated geometric grids on `[R, S_max]`, profiles with stored derivatives,
//! the asymptotic tail closure beyond `S_max`, and weighted sup-norms.
//!
//! Profiles here are power laws to leading order, so differentiation and
//! interpolation work on `g(t) = s^m v(s)` with `t = ln s`, where `m` is the
//! leading decay power of the tail. On a geometric grid `t` is uniform, and
//! `g` is nearly constant in the far field, which keeps the finite-difference
//! error proportional to the small variation of `g` instead of to `v` itself.

use std::io::{BufRead, Write};
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};

/// Fornberg's finite-difference weights for derivatives `0..=max_order` at `z`
/// on the (arbitrary, distinct) nodes `x`. Returns `w[order][node]`.
pub fn fornberg_weights(z: f64, x: &[f64], max_order: usize) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut c = vec![vec![0.0; n]; max_order + 1];
    c[0][0] = 1.0;
    let mut c1 = 1.0;
    let mut c4 = x[0] - z;
    for i in 1..n {
        let mn = i.min(max_order);
        let mut c2 = 1.0;
        let c5 = c4;
        c4 = x[i] - z;
        for j in 0..i {
            let c3 = x[i] - x[j];
            c2 *= c3;
            if j == i - 1 {
                for k in (1..=mn).rev() {
                    c[k][i] = c1 * (k as f64 * c[k - 1][i - 1] - c5 * c[k][i - 1]) / c2;
                }
                c[0][i] = -c1 * c5 * c[0][i - 1] / c2;
            }
            for k in (1..=mn).rev() {
                c[k][j] = (c4 * c[k][j] - k as f64 * c[k - 1][j]) / c3;
            }
            c[0][j] = c4 * c[0][j] / c3;
        }
        c1 = c2;
    }
    c
}

/// Coefficients of `Π_{i<order} (D − (m+i))` in powers of `D = d/dt`.
///
/// If `v = s^{-m} g(ln s)` then `v^{(order)} = s^{-m-order} Σ_i p_i D^i g`.
fn power_chain(m: f64, order: usize) -> Vec<f64> {
    let mut p = vec![1.0];
    for i in 0..order {
        let shift = m + i as f64;
        let mut next = vec![0.0; p.len() + 1];
        for (d, &coef) in p.iter().enumerate() {
            next[d + 1] += coef;
            next[d] -= shift * coef;
        }
        p = next;
    }
    p
}

/// Geometric grid `s_i = R·ρ_g^i` from `R` to `S_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Grid {
    nodes: Vec<f64>,
    points_per_decade: usize,
    log_step: f64,
}

impl Grid {
    /// At least `points_per_decade` intervals per factor of ten, rounded up to
    /// a whole number of intervals over `[R, S_max]`.
    pub fn new(r: f64, s_max: f64, points_per_decade: usize) -> Result<Self> {
        if !(r >= 1.0) || !r.is_finite() {
            return Err(Error::BadRange { r, s_max, reason: "R must be at least 1" });
        }
        if !(s_max > r) || !s_max.is_finite() {
            return Err(Error::BadRange { r, s_max, reason: "S_max must exceed R" });
        }
        if points_per_decade < 16 {
            return Err(Error::BadRange { r, s_max, reason: "need at least 16 points per decade" });
        }
        let span = (s_max / r).ln();
        let decades = span / std::f64::consts::LN_10;
        let intervals = ((points_per_decade as f64 * decades) - 1e-9).ceil().max(1.0) as usize;
        let log_step = span / intervals as f64;
        let mut nodes: Vec<f64> = (0..=intervals).map(|i| r * (i as f64 * log_step).exp()).collect();
        nodes[0] = r;
        nodes[intervals] = s_max;
        Ok(Self { nodes, points_per_decade, log_step })
    }

    pub fn r(&self) -> f64 {
        self.nodes[0]
    }

    pub fn s_max(&self) -> f64 {
        self.nodes[self.nodes.len() - 1]
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn points_per_decade(&self) -> usize {
        self.points_per_decade
    }

    /// Spacing in `ln s`.
    pub fn log_step(&self) -> f64 {
        self.log_step
    }

    pub fn ratio(&self) -> f64 {
        self.log_step.exp()
    }

    pub fn decades(&self) -> f64 {
        (self.s_max() / self.r()).log10()
    }

    /// Index of the cell `[s_i, s_{i+1}]` containing `s` (clamped).
    fn cell(&self, t: f64) -> usize {
        let pos = t / self.log_step;
        (pos.floor().max(0.0) as usize).min(self.len().saturating_sub(2))
    }
}

/// Which terms of `a1/s + a3/s³` the tail fit is allowed to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TailAnsatz {
    Zero,
    /// Only `a3/s³`; chosen when the data decays faster than `s⁻²`.
    Cubic,
    Full,
}

/// Closure model `a1/s + a3/s³` used beyond `S_max`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailModel {
    pub a1: f64,
    pub a3: f64,
    pub window_start: f64,
    pub s_max: f64,
    /// Max deviation over the window, relative to the largest value there.
    pub residual: f64,
    pub ansatz: TailAnsatz,
}

impl TailModel {
    pub const RESIDUAL_FLAG: f64 = 1e-3;

    pub fn zero(s_max: f64) -> Self {
        Self {
            a1: 0.0,
            a3: 0.0,
            window_start: s_max,
            s_max,
            residual: 0.0,
            ansatz: TailAnsatz::Zero,
        }
    }

    pub fn value(&self, s: f64) -> f64 {
        self.a1 / s + self.a3 / (s * s * s)
    }

    pub fn derivative(&self, s: f64, order: usize) -> f64 {
        let (a, b) = self.derivative_coefficients(order);
        let sj = s.powi(order as i32 + 1);
        (a + b / (s * s)) / sj
    }

    /// `(A, B)` with `∂^j tail = (A + B s⁻²) s^{-(j+1)}`.
    fn derivative_coefficients(&self, order: usize) -> (f64, f64) {
        let sign = if order % 2 == 0 { 1.0 } else { -1.0 };
        let j_fact: f64 = (1..=order).map(|i| i as f64).product();
        let j2_fact: f64 = (1..=order + 2).map(|i| i as f64).product();
        (sign * self.a1 * j_fact, sign * self.a3 * j2_fact / 2.0)
    }

    /// `0` for a vanishing tail, otherwise the exponent of the leading term.
    pub fn leading_power(&self) -> u32 {
        if self.a1 != 0.0 {
            1
        } else if self.a3 != 0.0 {
            3
        } else {
            0
        }
    }

    pub fn is_flagged(&self) -> bool {
        self.residual > Self::RESIDUAL_FLAG
    }

    /// `sup_{s ≥ S_max} s^weight |∂^order tail(s)|`, possibly infinite.
    pub fn weighted_sup(&self, weight: f64, order: usize) -> f64 {
        let (a, b) = self.derivative_coefficients(order);
        let e = weight - 1.0 - order as f64;
        let big_s = self.s_max;
        let y_max = 1.0 / (big_s * big_s);
        let close = |x: f64, y: f64| (x - y).abs() <= 1e-12 * (1.0 + y.abs());
        if a == 0.0 && b == 0.0 {
            return 0.0;
        }
        if a == 0.0 {
            let e2 = e - 2.0;
            return if close(e2, 0.0) {
                b.abs()
            } else if e2 > 0.0 {
                f64::INFINITY
            } else {
                big_s.powf(e2) * b.abs()
            };
        }
        if close(e, 0.0) {
            return a.abs().max((a + b * y_max).abs());
        }
        if e > 0.0 {
            return f64::INFINITY;
        }
        // h(y) = y^{q}|A + B y| on (0, 1/S²], q = −e/2 > 0
        let q = -e / 2.0;
        let h = |y: f64| y.powf(q) * (a + b * y).abs();
        let mut best = h(y_max);
        if b != 0.0 {
            let y_star = -q * a / (b * (1.0 + q));
            if y_star > 0.0 && y_star < y_max {
                best = best.max(h(y_star));
            }
        }
        best
    }
}

/// Fits `a1/s + a3/s³` over the last decade of the grid.
///
/// The fit is constrained to reproduce the stored value at `S_max`, so the
/// closure is continuous with the grid data. Data decaying faster than `s⁻²`
/// over the window gets the cubic-only ansatz.
pub fn tail_fit(grid: &Grid, values: &[f64]) -> Result<TailModel> {
    let decades = grid.decades();
    if decades < 1.0 - 1e-9 {
        return Err(Error::InsufficientSpan { decades });
    }
    let big_s = grid.s_max();
    let lo = big_s / 10.0 * (1.0 - 1e-12);
    let start = grid.nodes().iter().position(|&s| s >= lo).unwrap_or(0);
    let s_win = &grid.nodes()[start..];
    let v_win = &values[start..];
    let v_s = *v_win.last().unwrap();
    let vmax = v_win.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if vmax == 0.0 {
        let mut t = TailModel::zero(big_s);
        t.window_start = s_win[0];
        return Ok(t);
    }
    let v_lo = v_win[0];
    let ansatz = if v_s != 0.0 && v_lo != 0.0 && v_s.signum() == v_lo.signum() {
        let slope = (v_s / v_lo).ln() / (big_s / s_win[0]).ln();
        if slope < -2.0 {
            TailAnsatz::Cubic
        } else {
            TailAnsatz::Full
        }
    } else if v_s == 0.0 {
        TailAnsatz::Cubic
    } else {
        TailAnsatz::Full
    };
    let (a1, a3) = match ansatz {
        TailAnsatz::Cubic | TailAnsatz::Zero => (0.0, v_s * big_s.powi(3)),
        TailAnsatz::Full => {
            // a3 = (v_S − a1/S)·S³ leaves a one-parameter weighted least squares in a1
            let mut num = 0.0;
            let mut den = 0.0;
            for (&s, &v) in s_win.iter().zip(v_win) {
                let base = v_s * (big_s / s).powi(3);
                let phi = 1.0 / s - big_s * big_s / (s * s * s);
                let w2 = s * s;
                num += w2 * phi * (v - base);
                den += w2 * phi * phi;
            }
            let a1 = if den > 0.0 { num / den } else { v_s * big_s };
            (a1, (v_s - a1 / big_s) * big_s.powi(3))
        }
    };
    let mut model = TailModel {
        a1,
        a3,
        window_start: s_win[0],
        s_max: big_s,
        residual: 0.0,
        ansatz,
    };
    model.residual = s_win
        .iter()
        .zip(v_win)
        .map(|(&s, &v)| (model.value(s) - v).abs())
        .fold(0.0, f64::max)
        / vmax;
    Ok(model)
}

/// Values of a function on a [`Grid`] with derivatives of orders `1..=k`.
#[derive(Debug, Clone)]
pub struct Profile {
    grid: Arc<Grid>,
    values: Vec<f64>,
    derivs: Vec<Vec<f64>>,
    tail: Option<TailModel>,
    scaling: Option<u32>,
}

impl Profile {
    pub fn new(grid: Arc<Grid>, values: Vec<f64>) -> Self {
        assert_eq!(grid.len(), values.len(), "profile length mismatch");
        let tail = tail_fit(&grid, &values).ok();
        Self { grid, values, derivs: Vec::new(), tail, scaling: None }
    }

    pub fn zeros(grid: Arc<Grid>) -> Self {
        let n = grid.len();
        Self::new(grid, vec![0.0; n])
    }

    pub fn from_fn(grid: Arc<Grid>, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.nodes().iter().map(|&s| f(s)).collect();
        Self::new(grid, values)
    }

    /// Samples `f(s, j)` for `j = 0..=k` (value and exact derivatives).
    pub fn from_fn_with_derivs(grid: Arc<Grid>, k: usize, f: impl Fn(f64, usize) -> f64) -> Self {
        let values: Vec<f64> = grid.nodes().iter().map(|&s| f(s, 0)).collect();
        let derivs = (1..=k).map(|j| grid.nodes().iter().map(|&s| f(s, j)).collect()).collect();
        let mut p = Self::new(grid, values);
        p.derivs = derivs;
        p
    }

    pub fn with_derivs(grid: Arc<Grid>, values: Vec<f64>, derivs: Vec<Vec<f64>>) -> Self {
        assert!(derivs.iter().all(|d| d.len() == values.len()), "derivative length mismatch");
        let mut p = Self::new(grid, values);
        p.derivs = derivs;
        p
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn nodes(&self) -> &[f64] {
        self.grid.nodes()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tail(&self) -> Option<&TailModel> {
        self.tail.as_ref()
    }

    /// Highest stored derivative order.
    pub fn max_order(&self) -> usize {
        self.derivs.len()
    }

    /// Order 0 is the values themselves.
    pub fn deriv(&self, order: usize) -> Result<&[f64]> {
        if order == 0 {
            Ok(&self.values)
        } else {
            self.derivs.get(order - 1).map(|d| d.as_slice()).ok_or(Error::MissingDerivatives(order))
        }
    }

    /// Keeps stored derivatives and fills orders up to `k` by differentiation.
    pub fn ensure_derivs(&mut self, k: usize) -> Result<()> {
        for order in self.derivs.len() + 1..=k {
            let d = differentiate(self, order)?;
            self.derivs.push(d);
        }
        Ok(())
    }

    /// Replaces every stored derivative by grid differentiation of the values.
    pub fn recompute_derivs(&mut self, k: usize) -> Result<()> {
        self.derivs.clear();
        self.ensure_derivs(k)
    }

    pub fn truncate_derivs(&mut self, k: usize) {
        self.derivs.truncate(k);
    }

    pub fn set_deriv(&mut self, order: usize, data: Vec<f64>) {
        assert!(order >= 1 && order <= self.derivs.len() + 1, "derivative orders must be filled in sequence");
        assert_eq!(data.len(), self.values.len());
        if order == self.derivs.len() + 1 {
            self.derivs.push(data);
        } else {
            self.derivs[order - 1] = data;
        }
    }

    /// `a·self + b·other`, keeping the derivative orders both operands have.
    pub fn combine(&self, a: f64, other: &Profile, b: f64) -> Profile {
        assert_eq!(self.grid.len(), other.grid.len(), "grids differ");
        let mix = |x: &[f64], y: &[f64]| -> Vec<f64> {
            x.iter().zip(y).map(|(x, y)| a * x + b * y).collect()
        };
        let values = mix(&self.values, &other.values);
        let k = self.derivs.len().min(other.derivs.len());
        let derivs = (0..k).map(|j| mix(&self.derivs[j], &other.derivs[j])).collect();
        let mut out = Profile::with_derivs(self.grid.clone(), values, derivs);
        if self.scaling.is_some() && self.scaling == other.scaling {
            out.scaling = self.scaling;
        }
        out
    }

    pub fn scale(&self, a: f64) -> Profile {
        let values = self.values.iter().map(|v| a * v).collect();
        let derivs = self.derivs.iter().map(|d| d.iter().map(|v| a * v).collect()).collect();
        let mut out = Profile::with_derivs(self.grid.clone(), values, derivs);
        out.scaling = self.scaling;
        out
    }

    /// Pins the exponent used by [`differentiate`] and [`Interpolant`], which
    /// makes both exactly linear across profiles sharing it.
    pub fn with_scaling(mut self, m: u32) -> Self {
        self.scaling = Some(m);
        self
    }

    /// Exponent `m` used for the scaled representation `s^m v`; zero unless
    /// the tail model actually describes the data.
    pub fn scaling_power(&self) -> u32 {
        if let Some(m) = self.scaling {
            return m;
        }
        match &self.tail {
            Some(t) if !t.is_flagged() => t.leading_power(),
            _ => 0,
        }
    }

    pub fn interpolant(&self) -> Interpolant {
        Interpolant::new(self)
    }

    /// Writes `s, value, d1..dk` with 17 significant digits.
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        let mut header = String::from("s,value");
        for j in 1..=self.derivs.len() {
            header.push_str(&format!(",d{j}"));
        }
        writeln!(out, "{header}")?;
        for (i, s) in self.grid.nodes().iter().enumerate() {
            let mut line = format!("{s:.16e},{:.16e}", self.values[i]);
            for d in &self.derivs {
                line.push_str(&format!(",{:.16e}", d[i]));
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads the format of [`Profile::write_csv`] back onto `grid`.
    pub fn read_csv(grid: Arc<Grid>, input: impl BufRead) -> Result<Profile> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            if lineno == 0 || line.trim().is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::config("csv", format!("line {}: {e}", lineno + 1)))?;
            rows.push(row);
        }
        if rows.len() != grid.len() {
            return Err(Error::config("csv", format!("{} rows for {} grid nodes", rows.len(), grid.len())));
        }
        let cols = rows[0].len();
        let values = rows.iter().map(|r| r[1]).collect();
        let derivs = (2..cols).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
        Ok(Profile::with_derivs(grid, values, derivs))
    }
}

/// Fourth-order (or better) finite differences in `t = ln s` of `s^m v`,
/// converted back to `d^order v / ds^order`. Centered in the interior,
/// one-sided at the ends.
pub fn differentiate(p: &Profile, order: usize) -> Result<Vec<f64>> {
    let n = p.grid.len();
    if n < order + 5 {
        return Err(Error::TooFewPoints { needed: order + 5, have: n });
    }
    if order == 0 {
        return Ok(p.values.clone());
    }
    let m = p.scaling_power() as f64;
    let h = p.grid.log_step();
    let nodes = p.grid.nodes();
    let g: Vec<f64> = nodes.iter().zip(&p.values).map(|(s, v)| s.powf(m) * v).collect();
    let chain = power_chain(m, order);

    // stencil width per t-derivative order: d + 4, rounded up to odd
    let width = |d: usize| {
        let w = d + 4;
        if w % 2 == 0 {
            w + 1
        } else {
            w
        }
    };
    let mut tder = vec![vec![0.0; n]; order + 1];
    tder[0].clone_from(&g);
    for d in 1..=order {
        let w = width(d).min(n);
        let offsets: Vec<f64> = (0..w).map(|i| i as f64).collect();
        let half = w / 2;
        for i in 0..n {
            let start = i.saturating_sub(half).min(n - w);
            let z = (i - start) as f64;
            let wts = fornberg_weights(z, &offsets, d);
            let acc: f64 = (0..w).map(|q| wts[d][q] * g[start + q]).sum();
            tder[d][i] = acc / h.powi(d as i32);
        }
    }
    Ok((0..n)
        .map(|i| {
            let comb: f64 = chain.iter().enumerate().map(|(d, c)| c * tder[d][i]).sum();
            comb / nodes[i].powf(m + order as f64)
        })
        .collect())
}

const INTERP_POINTS: usize = 8;

/// Piecewise-polynomial (8-point Lagrange in `ln s`) evaluation of a profile
/// and its first derivatives away from the nodes. Beyond `S_max` the tail
/// model is used.
#[derive(Debug, Clone)]
pub struct Interpolant {
    grid: Arc<Grid>,
    scaled: Vec<f64>,
    power: f64,
    tail: Option<TailModel>,
}

impl Interpolant {
    fn new(p: &Profile) -> Self {
        let power = p.scaling_power() as f64;
        let scaled = p.grid.nodes().iter().zip(&p.values).map(|(s, v)| s.powf(power) * v).collect();
        Self { grid: p.grid.clone(), scaled, power, tail: p.tail.clone() }
    }

    pub fn s_max(&self) -> f64 {
        self.grid.s_max()
    }

    pub fn value(&self, s: f64) -> f64 {
        let mut out = [0.0];
        self.eval_into(s, &mut out);
        out[0]
    }

    /// Fills `out[j]` with `d^j v/ds^j` for `j < out.len()`.
    pub fn eval_into(&self, s: f64, out: &mut [f64]) {
        let max_order = out.len() - 1;
        if s > self.grid.s_max() {
            match &self.tail {
                Some(t) => {
                    for (j, o) in out.iter_mut().enumerate() {
                        *o = t.derivative(s, j);
                    }
                }
                None => out.fill(0.0),
            }
            return;
        }
        let n = self.grid.len();
        let w = INTERP_POINTS.min(n);
        let t = (s / self.grid.r()).ln();
        let h = self.grid.log_step();
        let cell = self.grid.cell(t);
        let start = (cell + 1).saturating_sub(w / 2).min(n - w);
        let offsets: Vec<f64> = (0..w).map(|i| i as f64).collect();
        let z = t / h - start as f64;
        let wts = fornberg_weights(z, &offsets, max_order);
        let mut tder = [0.0f64; 8];
        for (d, row) in wts.iter().enumerate() {
            let acc: f64 = (0..w).map(|q| row[q] * self.scaled[start + q]).sum();
            tder[d] = acc / h.powi(d as i32);
        }
        for (j, o) in out.iter_mut().enumerate() {
            let chain = power_chain(self.power, j);
            let comb: f64 = chain.iter().enumerate().map(|(d, c)| c * tder[d]).sum();
            *o = comb / s.powf(self.power + j as f64);
        }
    }
}

/// `sup s^weight |∂^order v|` over the grid, and over `[S_max, ∞)` through
/// the tail model when one is available.
pub fn weighted_sup_order(v: &Profile, order: usize, weight: f64) -> Result<f64> {
    let d = v.deriv(order)?;
    let grid_sup = v
        .nodes()
        .iter()
        .zip(d)
        .map(|(s, x)| s.powf(weight) * x.abs())
        .fold(0.0, f64::max);
    let tail_sup = v.tail().map_or(0.0, |t| t.weighted_sup(weight, order));
    Ok(grid_sup.max(tail_sup))
}

/// `sup_{s ≥ R} s^γ |v(s)|`.
pub fn weighted_sup(v: &Profile, gamma: f64) -> f64 {
    weighted_sup_order(v, 0, gamma).expect("values are always present")
}

/// `max{‖s v‖, ‖s²∂v‖, …, ‖s^k ∂^{k−1} v‖, ‖s^k ∂^k v‖}`: the top derivative
/// carries the weight `s^k`, not `s^{k+1}`.
pub fn weighted_norm(v: &Profile, k: usize) -> Result<f64> {
    let mut best: f64 = 0.0;
    for j in 0..k {
        best = best.max(weighted_sup_order(v, j, (j + 1) as f64)?);
    }
    best = best.max(weighted_sup_order(v, k, k as f64)?);
    Ok(best)
}

/// Least-squares slope of `ln|v|` against `ln s`; `None` when fewer than two
/// usable (nonzero, finite) points remain.
pub fn loglog_slope(s: &[f64], v: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = s
        .iter()
        .zip(v)
        .filter(|(_, v)| v.is_finite() && **v != 0.0)
        .map(|(s, v)| (s.ln(), v.abs().ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn grid(r: f64, s: f64, ppd: usize) -> Arc<Grid> {
        Arc::new(Grid::new(r, s, ppd).unwrap())
    }

    #[test]
    fn make_grid_counts_and_ratio() {
        assert_eq!(Grid::new(10.0, 1000.0, 16).unwrap().len(), 33);
        assert!(matches!(Grid::new(10.0, 10.0, 16), Err(Error::BadRange { .. })));
        assert!(Grid::new(0.5, 10.0, 16).is_err());
        assert!(Grid::new(10.0, 100.0, 8).is_err());
        let g = Grid::new(5.0, 500.0, 64).unwrap();
        assert_relative_eq!(g.nodes()[64] / g.nodes()[0], 10.0, max_relative = 1e-12);
        assert_eq!(g.nodes()[0], 5.0);
        assert_eq!(g.s_max(), 500.0);
        for w in g.nodes().windows(2) {
            assert_relative_eq!(w[1] / w[0], g.ratio(), max_relative = 1e-12);
        }
    }

    #[test]
    fn fornberg_reproduces_classic_stencils() {
        let w = fornberg_weights(0.0, &[-2.0, -1.0, 0.0, 1.0, 2.0], 2);
        let d1 = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
        let d2 = [-1.0 / 12.0, 4.0 / 3.0, -5.0 / 2.0, 4.0 / 3.0, -1.0 / 12.0];
        for i in 0..5 {
            assert_relative_eq!(w[1][i], d1[i], epsilon = 1e-14);
            assert_relative_eq!(w[2][i], d2[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn differentiate_power_laws() {
        let g = grid(10.0, 1000.0, 64);
        let p = Profile::from_fn(g.clone(), |s| 1.0 / s);
        let d1 = differentiate(&p, 1).unwrap();
        for (s, d) in g.nodes().iter().zip(&d1) {
            assert_relative_eq!(*d, -1.0 / (s * s), max_relative = 1e-6);
        }
        let p = Profile::from_fn(g.clone(), |s| s.powi(-3));
        let d3 = differentiate(&p, 3).unwrap();
        for (s, d) in g.nodes().iter().zip(&d3).skip(3).take(g.len() - 6) {
            assert_relative_eq!(*d, -60.0 * s.powi(-6), max_relative = 1e-4);
        }
        let p = Profile::from_fn(g.clone(), |_| 4.5);
        for order in 1..=4 {
            assert!(differentiate(&p, order).unwrap().iter().all(|d| d.abs() <= 1e-9));
        }
    }

    #[test]
    fn differentiate_generic_function_is_fourth_order() {
        // not a power law, so the error is pure truncation error
        let f = |s: f64| s.ln() / (s * s);
        let df = |s: f64| (1.0 - 2.0 * s.ln()) / (s * s * s);
        let err = |ppd: usize| {
            let g = grid(10.0, 1000.0, ppd);
            let p = Profile::from_fn(g.clone(), f);
            let d = differentiate(&p, 1).unwrap();
            g.nodes()
                .iter()
                .zip(&d)
                .map(|(s, d)| (d - df(*s)).abs() * s * s * s)
                .fold(0.0, f64::max)
        };
        let e1 = err(32);
        let e2 = err(64);
        assert!(e1 / e2 > 12.0, "convergence ratio {}", e1 / e2);
    }

    #[test]
    fn differentiate_needs_points() {
        let g = grid(10.0, 12.0, 16);
        let p = Profile::from_fn(g.clone(), |s| s);
        assert!(matches!(differentiate(&p, 1), Err(Error::TooFewPoints { .. })));
    }

    #[test]
    fn weighted_norm_of_inverse() {
        for (r, k, expected) in [(10.0, 3, 2.0), (2.0, 3, 3.0), (10.0, 4, 6.0), (10.0, 5, 24.0)] {
            let mut p = Profile::from_fn(grid(r, 100.0 * r, 64), |s| 1.0 / s);
            p.ensure_derivs(k).unwrap();
            assert_relative_eq!(weighted_norm(&p, k).unwrap(), expected, max_relative = 1e-7);
        }
        let mut z = Profile::zeros(grid(10.0, 1000.0, 16));
        z.ensure_derivs(3).unwrap();
        assert_eq!(weighted_norm(&z, 3).unwrap(), 0.0);
        let bare = Profile::from_fn(grid(10.0, 1000.0, 16), |s| 1.0 / s);
        assert!(matches!(weighted_norm(&bare, 3), Err(Error::MissingDerivatives(1))));
    }

    #[test]
    fn weighted_sup_examples() {
        let g = grid(10.0, 1000.0, 64);
        let p = Profile::from_fn(g.clone(), |s| s.powi(-3));
        assert_relative_eq!(weighted_sup(&p, 3.0), 1.0, max_relative = 1e-12);
        assert_relative_eq!(weighted_sup(&p, 2.0), 0.1, max_relative = 1e-12);
        let p = Profile::from_fn(g, |s| 1.0 / s + s.powi(-3));
        assert_relative_eq!(weighted_sup(&p, 1.0), 1.01, max_relative = 1e-12);
    }

    #[test]
    fn tail_sup_diverges_for_too_strong_weights() {
        let p = Profile::from_fn(grid(10.0, 1000.0, 32), |s| s.powi(-3));
        assert!(weighted_sup(&p, 4.0).is_infinite());
        let p = Profile::from_fn(grid(10.0, 1000.0, 32), |s| 1.0 / s);
        assert!(weighted_sup(&p, 1.5).is_infinite());
    }

    #[test]
    fn tail_fit_examples() {
        let g = grid(10.0, 1000.0, 64);
        let t = tail_fit(&g, Profile::from_fn(g.clone(), |s| 2.0 / s).values()).unwrap();
        assert_relative_eq!(t.a1, 2.0, epsilon = 1e-10);
        assert!(t.a3.abs() < 1e-10 * 1e6);
        assert!(t.value(1000.0) - 2e-3 < 1e-16);

        let t = tail_fit(&g, Profile::from_fn(g.clone(), |s| 1.0 / s + 5.0 / s.powi(3)).values())
            .unwrap();
        assert_relative_eq!(t.a1, 1.0, max_relative = 1e-8);
        assert_relative_eq!(t.a3, 5.0, max_relative = 1e-8);
        assert!(!t.is_flagged());

        let t = tail_fit(&g, Profile::from_fn(g.clone(), |s| s.powi(-2)).values()).unwrap();
        assert!(t.residual > 1e-3, "residual {}", t.residual);
        assert!(t.is_flagged());

        let short = grid(10.0, 50.0, 32);
        assert!(matches!(tail_fit(&short, &vec![1.0; short.len()]), Err(Error::InsufficientSpan { .. })));
    }

    #[test]
    fn interpolant_off_grid() {
        let g = grid(10.0, 1000.0, 64);
        let f = |s: f64| 3.0 / s + 2.0 / s.powi(3) + s.ln() / s.powi(3);
        let df = |s: f64| -3.0 / (s * s) - 6.0 / s.powi(4) + (1.0 - 3.0 * s.ln()) / s.powi(4);
        let p = Profile::from_fn(g, f);
        let it = p.interpolant();
        for s in [10.3, 47.77, 333.3, 999.0] {
            let mut out = [0.0; 3];
            it.eval_into(s, &mut out);
            assert_relative_eq!(out[0], f(s), max_relative = 1e-10);
            assert_relative_eq!(out[1], df(s), max_relative = 1e-8);
        }
        // beyond the grid the tail model takes over
        assert_relative_eq!(it.value(5000.0), 3.0 / 5000.0, max_relative = 1e-3);
    }

    #[test]
    fn csv_round_trip() {
        let g = grid(10.0, 1000.0, 16);
        let mut p = Profile::from_fn(g.clone(), |s| 1.0 / s);
        p.ensure_derivs(2).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let q = Profile::read_csv(g, std::io::Cursor::new(buf)).unwrap();
        assert_eq!(q.values(), p.values());
        assert_eq!(q.deriv(2).unwrap(), p.deriv(2).unwrap());
    }

    #[test]
    fn loglog_slope_recovers_exponent() {
        let s: Vec<f64> = (1..50).map(|i| 10.0 * 1.1f64.powi(i)).collect();
        let v: Vec<f64> = s.iter().map(|s| 7.0 * s.powf(-3.5)).collect();
        assert_relative_eq!(loglog_slope(&s, &v).unwrap(), -3.5, epsilon = 1e-12);
    }

    fn random_profile(g: &Arc<Grid>, c: [f64; 3]) -> Profile {
        let mut p = Profile::from_fn(g.clone(), move |s| {
            c[0] / s + c[1] / (s * s) * (1.0 + 0.5 * (s / 30.0).sin()) + c[2] / s.powi(3)
        })
        .with_scaling(1);
        p.ensure_derivs(3).unwrap();
        p
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn weighted_norm_is_a_norm(
            a in prop::array::uniform3(0.5f64..2.0),
            b in prop::array::uniform3(0.5f64..2.0),
            scale in -3.0f64..3.0,
        ) {
            let g = grid(10.0, 1000.0, 32);
            let p = random_profile(&g, a);
            let q = random_profile(&g, b);
            let np = weighted_norm(&p, 3).unwrap();
            let nq = weighted_norm(&q, 3).unwrap();
            let mut sum = p.combine(1.0, &q, 1.0);
            sum.recompute_derivs(3).unwrap();
            prop_assert!(weighted_norm(&sum, 3).unwrap() <= (np + nq) * (1.0 + 1e-12));
            let mut scaled = p.scale(scale);
            scaled.recompute_derivs(3).unwrap();
            let ns = weighted_norm(&scaled, 3).unwrap();
            prop_assert!((ns - scale.abs() * np).abs() <= 1e-10 * np.max(1.0));
        }

        #[test]
        fn differentiate_commutes_with_scaling(a in prop::array::uniform3(0.5f64..2.0), scale in -4.0f64..4.0) {
            let g = grid(10.0, 1000.0, 32);
            let p = random_profile(&g, a);
            let q = Profile::new(g.clone(), p.values().iter().map(|v| scale * v).collect()).with_scaling(1);
            let dp = differentiate(&p, 2).unwrap();
            let dq = differentiate(&q, 2).unwrap();
            let big = dq.iter().fold(0.0f64, |m, y| m.max(y.abs()));
            for (x, y) in dp.iter().zip(&dq) {
                prop_assert!((scale * x - y).abs() <= 1e-10 * big);
            }
        }
    }
}
