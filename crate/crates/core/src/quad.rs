//! Quadrature rules: fixed Gauss–Legendre and globally adaptive Gauss–Kronrod (7/15).

use std::collections::BinaryHeap;
use std::num::NonZeroUsize;

use gauss_quad::GaussLegendre;

use crate::error::{Error, Result};

/// Gauss–Legendre rule mapped to `[0, 1]`.
#[derive(Debug, Clone)]
pub struct UnitRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl UnitRule {
    pub fn gauss_legendre(n: usize) -> Self {
        let n = NonZeroUsize::new(n.max(1)).unwrap();
        let rule = GaussLegendre::new(n);
        let (nodes, weights) = rule.iter().map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w)).unzip();
        Self { nodes, weights }
    }

    pub fn integrate(&self, a: f64, b: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
        let h = b - a;
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(a + h * x))
            .sum::<f64>()
            * h
    }
}

// Kronrod abscissae (positive half, descending) and weights for the 15-point rule;
// every odd-indexed node is also a 7-point Gauss node.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// One 15-point Kronrod panel: (integral, error estimate).
fn kronrod15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kron = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let sum = f(center - dx) + f(center + dx);
        kron += WGK[j] * sum;
        if j % 2 == 1 {
            gauss += WG[j / 2] * sum;
        }
    }
    let kron = kron * half;
    let gauss = gauss * half;
    let err = (kron - gauss).abs();
    // QUADPACK-style rescaling: the raw difference overstates the K15 error
    let scaled = if err > 0.0 {
        let absk = kron.abs().max(f64::MIN_POSITIVE);
        let r = (200.0 * err / absk).powf(1.5);
        (absk * r).min(err)
    } else {
        0.0
    };
    (kron, scaled.max(50.0 * f64::EPSILON * kron.abs()))
}

#[derive(Debug, PartialEq)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    depth: usize,
}

impl Eq for Panel {}

impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Panel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// Upper bound on live panels; keeps a noise-limited integrand from
/// bisecting every panel down to `max_depth`.
const MAX_PANELS: usize = 4096;

/// Globally adaptive Gauss–Kronrod integration on `[a, b]`.
///
/// Bisects the panel with the largest error estimate until the total estimate
/// is below `max(rel_tol·|I|, abs_tol)`. Fails once a panel would exceed
/// `max_depth` bisections or too many panels are live.
pub fn adaptive_gk15(
    mut f: impl FnMut(f64) -> f64,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
    max_depth: usize,
) -> Result<(f64, f64)> {
    if a == b {
        return Ok((0.0, 0.0));
    }
    let (value, error) = kronrod15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Panel { a, b, value, error, depth: 0 });
    let mut total = value;
    let mut total_err = error;
    loop {
        if total_err <= (rel_tol * total.abs()).max(abs_tol) {
            return Ok((total, total_err));
        }
        let worst = heap.pop().expect("heap never empties");
        if worst.depth >= max_depth || heap.len() >= MAX_PANELS {
            return Err(Error::ToleranceNotMet { tolerance: rel_tol, estimate: total_err });
        }
        let mid = 0.5 * (worst.a + worst.b);
        let (v1, e1) = kronrod15(&mut f, worst.a, mid);
        let (v2, e2) = kronrod15(&mut f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        let depth = worst.depth + 1;
        heap.push(Panel { a: worst.a, b: mid, value: v1, error: e1, depth });
        heap.push(Panel { a: mid, b: worst.b, value: v2, error: e2, depth });
    }
}

/// Composite Simpson rule with `intervals` (rounded up to even) subintervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, intervals: usize) -> f64 {
    let m = intervals.max(2) + intervals % 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * f(a + h * i as f64);
    }
    acc * h / 3.0
}
