//! One-dimensional quadrature.
//!
//! `TanhSinh` is the workhorse for integrands with algebraic endpoint
//! singularities: the integrand receives the node together with its exact
//! distances to both panel ends, so factors like `|r - c|^{-s}` anchored at a
//! panel end can be evaluated without cancellation. `adaptive_gk15` handles
//! smooth but peaked integrands.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

impl Quadrature {
    fn zero() -> Self {
        Self { value: 0.0, error: 0.0, evaluations: 0 }
    }

    fn add(&mut self, other: Quadrature) {
        self.value += other.value;
        self.error += other.error;
        self.evaluations += other.evaluations;
    }
}

/// Node location handed to tanh-sinh integrands.
#[derive(Debug, Clone, Copy)]
pub struct Node {
    pub x: f64,
    pub from_left: f64,
    pub from_right: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct TanhSinh {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_level: u32,
    /// Relative error still accepted once `max_level` is exhausted.
    pub accept_rel: f64,
}

impl Default for TanhSinh {
    fn default() -> Self {
        Self { rel_tol: 1e-11, abs_tol: 1e-300, max_level: 10, accept_rel: 1e-6 }
    }
}

// Offsets from the panel end reach ~1e-300 at this abscissa.
const T_MAX: f64 = 6.1;

impl TanhSinh {
    pub fn with_tol(rel_tol: f64) -> Self {
        Self { rel_tol, ..Self::default() }
    }

    pub fn integrate<F: FnMut(Node) -> f64>(&self, a: f64, b: f64, mut f: F) -> Result<Quadrature> {
        if !(b > a) {
            return Ok(Quadrature::zero());
        }
        let width = b - a;
        let half = 0.5 * width;
        let mut evaluations = 0usize;
        let mut term = |t: f64| -> f64 {
            let u = FRAC_PI_2 * t.sinh();
            let e = (-2.0 * u.abs()).exp();
            let near = width * e / (1.0 + e);
            if near == 0.0 {
                return 0.0;
            }
            let w = half * FRAC_PI_2 * t.cosh() * 4.0 * e / ((1.0 + e) * (1.0 + e));
            let node = if t < 0.0 {
                Node { x: a + near, from_left: near, from_right: width - near }
            } else {
                Node { x: b - near, from_left: width - near, from_right: near }
            };
            evaluations += 1;
            let v = f(node);
            if v.is_finite() {
                w * v
            } else {
                0.0
            }
        };

        let k_max = T_MAX as i64;
        let mut sum: f64 = (-k_max..=k_max).map(|k| term(k as f64)).sum();
        let mut estimate = sum;
        let mut error = f64::INFINITY;
        for level in 1..=self.max_level {
            let h = 0.5f64.powi(level as i32);
            let mut fresh = 0.0;
            let mut j = 0i64;
            loop {
                let t = (2 * j + 1) as f64 * h;
                if t > T_MAX {
                    break;
                }
                fresh += term(t) + term(-t);
                j += 1;
            }
            sum += fresh;
            let next = sum * h;
            error = (next - estimate).abs();
            estimate = next;
            if level >= 3 && error <= (self.rel_tol * estimate.abs()).max(self.abs_tol) {
                return Ok(Quadrature { value: estimate, error, evaluations });
            }
        }
        if error <= self.accept_rel * estimate.abs() {
            return Ok(Quadrature { value: estimate, error, evaluations });
        }
        Err(Error::QuadratureFailure { estimate, error })
    }

    /// Integrates over consecutive panels `[p_i, p_{i+1}]`; `f` receives the
    /// panel index alongside the node.
    pub fn integrate_panels<F: FnMut(usize, Node) -> f64>(&self, breakpoints: &[f64], mut f: F) -> Result<Quadrature> {
        let mut total = Quadrature::zero();
        for (i, w) in breakpoints.windows(2).enumerate() {
            let part = self.integrate(w[0], w[1], |node| f(i, node))?;
            total.add(part);
        }
        Ok(total)
    }
}

/// Sorted, deduplicated breakpoints restricted to `[lo, hi]`, always
/// including both ends.
pub fn panel_breakpoints(lo: f64, hi: f64, interior: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut pts: Vec<f64> = interior.into_iter().filter(|p| p.is_finite() && *p > lo && *p < hi).collect();
    pts.push(lo);
    pts.push(hi);
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    pts
}

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
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

/// 15-point Kronrod value and |Kronrod - Gauss| on `[a, b]`.
pub fn gk15<F: FnMut(f64) -> f64>(a: f64, b: f64, f: &mut F) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive Gauss-Kronrod over the given panels.
pub fn adaptive_gk15<F: FnMut(f64) -> f64>(
    breakpoints: &[f64],
    rel_tol: f64,
    abs_tol: f64,
    max_intervals: usize,
    mut f: F,
) -> Result<Quadrature> {
    let mut pieces: Vec<(f64, f64, f64, f64)> = breakpoints
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (v, e) = gk15(w[0], w[1], &mut f);
            (w[0], w[1], v, e)
        })
        .collect();
    let mut evaluations = 15 * pieces.len();
    loop {
        let value: f64 = pieces.iter().map(|p| p.2).sum();
        let error: f64 = pieces.iter().map(|p| p.3).sum();
        if error <= (rel_tol * value.abs()).max(abs_tol) {
            return Ok(Quadrature { value, error, evaluations });
        }
        if pieces.len() >= max_intervals {
            return Err(Error::QuadratureFailure { estimate: value, error });
        }
        let (worst, _) = pieces.iter().enumerate().max_by(|a, b| a.1 .3.partial_cmp(&b.1 .3).unwrap()).unwrap();
        let (a, b, _, _) = pieces.swap_remove(worst);
        let m = 0.5 * (a + b);
        if !(m > a && m < b) {
            return Err(Error::QuadratureFailure { estimate: value, error });
        }
        let (v1, e1) = gk15(a, m, &mut f);
        let (v2, e2) = gk15(m, b, &mut f);
        evaluations += 30;
        pieces.push((a, m, v1, e1));
        pieces.push((m, b, v2, e2));
    }
}
