//! Spectral averaging of determinants, the closed-form localization
//! constants, and the α′ hyperplane-avoidance search.
//!
//! Integrals of `|det(A + rV)|^{-p}` are computed from the factorisation
//! `det(A + rV) = c ∏ (r - z_j)`. The roots come from a shift-and-invert
//! eigenproblem of the pencil, so singular `V` (degree drop) is handled too.
//! Real parts of the roots become panel ends, and the distance to each root
//! is evaluated from the exact node offsets there.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{DensityKind, DisorderDensity, SingleSitePotential};
use crate::par;
use crate::quadrature::{panel_breakpoints, Node, Quadrature, TanhSinh};
use crate::rng::{self, AuxStream};

pub type CMatrix = DMatrix<Complex64>;

fn check_exponent(s: f64) -> Result<()> {
    if s > 0.0 && s < 1.0 {
        Ok(())
    } else {
        Err(Error::ExponentOutOfRange { s, lo: 0.0, hi: 1.0 })
    }
}

fn max_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.norm()))
}

fn is_numerically_singular(m: &CMatrix) -> bool {
    let n = m.nrows() as i32;
    let scale = max_entry(m);
    scale == 0.0 || m.clone().lu().determinant().norm() <= 1e-13 * scale.powi(n)
}

/// Spectral norm.
pub fn operator_norm(m: &CMatrix) -> f64 {
    m.singular_values().iter().fold(0.0f64, |a, b| a.max(*b))
}

// ---------------------------------------------------------------------------
// Pencil roots
// ---------------------------------------------------------------------------

/// `det(A + rV) = leading · ∏_j (r - roots[j])`.
#[derive(Debug, Clone)]
pub struct PencilRoots {
    pub leading: Complex64,
    pub roots: Vec<Complex64>,
}

const SHIFTS: [(f64, f64); 6] = [(0.0, 1.0), (0.7, 0.7), (-0.6, 0.8), (0.3, -1.1), (1.9, 0.4), (-1.4, -1.2)];

impl PencilRoots {
    pub fn compute(a: &CMatrix, v: &CMatrix) -> Result<Self> {
        let n = a.nrows();
        assert!(a.is_square() && v.shape() == a.shape() && n >= 1);
        let (na, nv) = (a.norm(), v.norm());
        let base = if nv > 0.0 { (na / nv).max(1.0) } else { 1.0 };
        let mut best: Option<(f64, Complex64)> = None;
        for (re, im) in SHIFTS {
            let mu = Complex64::new(re, im) * base;
            let sv = (a + v * mu).singular_values();
            let hi = sv.iter().fold(0.0f64, |x, y| x.max(*y));
            let lo = sv.iter().fold(f64::INFINITY, |x, y| x.min(*y));
            let ratio = if hi > 0.0 { lo / hi } else { 0.0 };
            if best.is_none_or(|(r, _)| ratio > r) {
                best = Some((ratio, mu));
            }
        }
        let (ratio, mu) = best.unwrap();
        if !(ratio > 1e-12) {
            return Err(Error::NearSingular { ratio });
        }
        let m = a + v * mu;
        let lu = m.clone().lu();
        let k = lu.solve(v).ok_or(Error::NearSingular { ratio })?;
        let kappas =
            Schur::try_new(k.clone(), 1e-15, 100_000).and_then(|s| s.eigenvalues()).ok_or(Error::ConvergenceFailure)?;
        let cut = 1e-12 * k.norm();
        let mut leading = lu.determinant();
        let mut roots = Vec::new();
        for kappa in kappas.iter() {
            if kappa.norm() > cut {
                leading *= kappa;
                roots.push(mu - kappa.inv());
            }
        }
        Ok(Self { leading, roots })
    }

    pub fn degree(&self) -> usize {
        self.roots.len()
    }

    pub fn abs_det(&self, r: f64) -> f64 {
        self.roots.iter().fold(self.leading.norm(), |acc, z| acc * (r - z.re).hypot(z.im))
    }

    /// `ln |det|` at a tanh-sinh node of the panel `[lo, hi]`.
    fn ln_abs_det_at(&self, node: Node, lo: f64, hi: f64) -> f64 {
        let mut acc = self.leading.norm().ln();
        for z in &self.roots {
            let offset = if z.re == lo {
                node.from_left
            } else if z.re == hi {
                -node.from_right
            } else {
                node.x - z.re
            };
            acc += offset.hypot(z.im).ln();
        }
        acc
    }

    fn real_parts(&self) -> impl Iterator<Item = f64> + '_ {
        self.roots.iter().map(|z| z.re)
    }
}

/// `∫ |det(A + rV)|^{-p} w(r) ρ(r) dr` over the support of ρ, where `w`
/// is a smooth extra factor (pass `|_| 1.0` for none).
fn average_inverse_power<W: Fn(f64) -> f64>(
    roots: &PencilRoots,
    p: f64,
    rho: &DisorderDensity,
    weight: W,
    quad: &TanhSinh,
) -> Result<Quadrature> {
    let r = rho.radius();
    let bp = panel_breakpoints(-r, r, rho.breakpoints().into_iter().chain(roots.real_parts()));
    quad.integrate_panels(&bp, |i, node| {
        let ln_det = roots.ln_abs_det_at(node, bp[i], bp[i + 1]);
        (-p * ln_det).exp() * rho.pdf(node.x) * weight(node.x)
    })
}

// ---------------------------------------------------------------------------
// Single-parameter average
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct DetAverage {
    pub n: usize,
    pub s: f64,
    pub integral: f64,
    pub quad_error: f64,
    pub bound1: f64,
    pub det_v_abs: f64,
    pub rho_sup: f64,
    pub rho_l1: f64,
    /// Minimiser of `bound2`.
    pub lambda_star: f64,
}

impl DetAverage {
    pub fn bound2(&self, lambda: f64) -> f64 {
        let s = self.s;
        self.det_v_abs.powf(-s / self.n as f64)
            * (lambda.powf(-s) * self.rho_l1 + 2.0 * lambda.powf(1.0 - s) / (1.0 - s) * self.rho_sup)
    }
}

/// `2^s s^{-s} / (1 - s)`.
pub fn fractional_factor(s: f64) -> f64 {
    2f64.powf(s) * s.powf(-s) / (1.0 - s)
}

pub fn det_fractional_average(a: &CMatrix, v: &CMatrix, rho: &DisorderDensity, s: f64) -> Result<DetAverage> {
    check_exponent(s)?;
    if !a.is_square() || a.shape() != v.shape() || a.nrows() == 0 {
        return Err(Error::InvalidArgument("A and V must be square of equal size".into()));
    }
    if is_numerically_singular(v) {
        return Err(Error::SingularV);
    }
    let n = a.nrows();
    let det_v_abs = v.clone().lu().determinant().norm();
    let roots = PencilRoots::compute(a, v)?;
    let q = average_inverse_power(&roots, s / n as f64, rho, |_| 1.0, &TanhSinh::default())?;
    let (sup, l1) = (rho.sup_norm(), rho.l1_norm());
    Ok(DetAverage {
        n,
        s,
        integral: q.value,
        quad_error: q.error,
        bound1: det_v_abs.powf(-s / n as f64) * l1.powf(1.0 - s) * sup.powf(s) * fractional_factor(s),
        det_v_abs,
        rho_sup: sup,
        rho_l1: l1,
        lambda_star: s * l1 / (2.0 * sup),
    })
}

/// One member of the randomized dominance family: `A` real symmetric,
/// `V` real diagonal and invertible.
#[derive(Debug, Clone)]
pub struct DetInstance {
    pub a: CMatrix,
    pub v: CMatrix,
    pub rho: DisorderDensity,
    pub s: f64,
    pub lambdas: Vec<f64>,
}

pub const S_GRID: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

pub fn random_det_instance(seed: u64, index: u64) -> DetInstance {
    let mut g = AuxStream::new(seed, index);
    let n = 1 + g.index(4);
    let mut a = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let x = Complex64::new(g.range(-3.0, 3.0), 0.0);
            a[(i, j)] = x;
            a[(j, i)] = x;
        }
    }
    let mut v = CMatrix::zeros(n, n);
    for i in 0..n {
        let sign = if g.uniform() < 0.5 { -1.0 } else { 1.0 };
        v[(i, i)] = Complex64::new(sign * g.range(0.2, 2.0), 0.0);
    }
    let kind = [DensityKind::Uniform, DensityKind::Triangular, DensityKind::Bump][g.index(3)];
    let rho = DisorderDensity::new(kind, g.range(0.5, 5.0)).expect("positive radius");
    let s = S_GRID[g.index(S_GRID.len())];
    let lambdas = (0..10).map(|_| 10f64.powf(g.range(-2.0, 2.0))).collect();
    DetInstance { a, v, rho, s, lambdas }
}

// ---------------------------------------------------------------------------
// Multi-parameter average
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MultiparamAverage {
    pub integral: f64,
    /// Zero when the average is a single exact quadrature.
    pub std_error: f64,
    pub n_samples: u64,
    pub bound_a1: Option<f64>,
    pub bound_a2: Option<f64>,
}

/// `E |det(A + Σ r_i V_i)|^{-t/d}` with `r_0` integrated exactly and
/// `r_1..r_N` sampled.
pub fn multiparam_det_average(
    a: &CMatrix,
    vs: &[CMatrix],
    alpha: &[f64],
    rho: &DisorderDensity,
    t: f64,
    n_samples: u64,
    seed: u64,
) -> Result<MultiparamAverage> {
    check_exponent(t)?;
    if vs.is_empty() || vs.len() != alpha.len() {
        return Err(Error::InvalidArgument("need one alpha per matrix V_k".into()));
    }
    if alpha[0] == 0.0 {
        return Err(Error::InvalidArgument("alpha_0 must be nonzero".into()));
    }
    let d = a.nrows();
    let big_n = vs.len() - 1;
    let combo = vs.iter().zip(alpha).fold(CMatrix::zeros(d, d), |acc, (v, al)| acc + v * Complex64::new(*al, 0.0));
    if is_numerically_singular(&combo) {
        return Err(Error::SingularCombination);
    }
    let det_pow = combo.lu().determinant().norm().powf(-t / d as f64);
    let tail = t.powf(-t) / (1.0 - t);
    let bound_a1 =
        rho.w11_norm().map(|w| det_pow * alpha.iter().map(|x| x.abs()).sum::<f64>().powf(t) * tail * w.powf(t));
    let bound_a2 = if rho.satisfies_a2() {
        let a0 = alpha[0].abs();
        let ratio = alpha[1..].iter().fold(0.0f64, |m, x| m.max(x.abs() / a0));
        let nt = big_n as f64 * t;
        Some(
            det_pow
                * a0.powf(t)
                * (1.0 + ratio).powf(nt)
                * 2f64.powf(t)
                * tail
                * (2.0 * rho.radius()).powf(nt)
                * rho.sup_norm().powf((big_n as f64 + 1.0) * t),
        )
    } else {
        None
    };
    if bound_a1.is_none() && bound_a2.is_none() {
        return Err(Error::NoApplicableAssumption);
    }
    let p = t / d as f64;
    let quad = TanhSinh::default();
    if big_n == 0 {
        let roots = PencilRoots::compute(a, &vs[0])?;
        let q = average_inverse_power(&roots, p, rho, |_| 1.0, &quad)?;
        return Ok(MultiparamAverage { integral: q.value, std_error: 0.0, n_samples: 0, bound_a1, bound_a2 });
    }
    if n_samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let values = par::try_map_range(0..n_samples, |i| {
        let draws = rng::uniforms(seed, i, 0, 0, big_n);
        let mut shifted = a.clone();
        for (v, u) in vs[1..].iter().zip(&draws) {
            shifted += v * Complex64::new(rho.quantile(*u), 0.0);
        }
        let roots = PencilRoots::compute(&shifted, &vs[0])?;
        Ok(average_inverse_power(&roots, p, rho, |_| 1.0, &quad)?.value)
    })?;
    let (mean, se) = crate::stats::mean_and_se(&values);
    Ok(MultiparamAverage { integral: mean, std_error: se, n_samples, bound_a1, bound_a2 })
}

// ---------------------------------------------------------------------------
// Norm average
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct NormAverageCheck {
    /// `∫_{-R}^{R} ‖(A + rV)^{-1}‖^{s/n} dr`.
    pub lhs: f64,
    /// The same integrand averaged against ρ.
    pub lhs_averaged: f64,
    pub rhs: f64,
    pub inv_norm: f64,
    pub inv_norm_bound: f64,
}

/// `(‖V^{-1}‖, ‖V‖^{n-1} / |det V|)` from the singular values.
pub fn inverse_norm_estimate(v: &CMatrix) -> (f64, f64) {
    let sv = v.singular_values();
    let lo = sv.iter().fold(f64::INFINITY, |a, b| a.min(*b));
    let hi = sv.iter().fold(0.0f64, |a, b| a.max(*b));
    let det: f64 = sv.iter().product();
    (1.0 / lo, hi.powi(v.nrows() as i32 - 1) / det)
}

pub fn resolvent_norm_average_check(
    a: &CMatrix,
    v: &CMatrix,
    rho: &DisorderDensity,
    s: f64,
) -> Result<NormAverageCheck> {
    check_exponent(s)?;
    if is_numerically_singular(v) {
        return Err(Error::SingularV);
    }
    let n = a.nrows();
    let nf = n as f64;
    let radius = rho.radius();
    let roots = PencilRoots::compute(a, v)?;
    // ‖M^{-1}‖ = (∏ σ_i except the smallest) / |det M|: the numerator is
    // smooth near a simple root, the denominator is taken from the roots.
    let cofactor = |x: f64| -> f64 {
        if n == 1 {
            return 1.0;
        }
        let m = a + v * Complex64::new(x, 0.0);
        let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
        sv.sort_by(|p, q| p.partial_cmp(q).unwrap());
        sv[1..].iter().product::<f64>().powf(s / nf)
    };
    let quad = TanhSinh::default();
    let lebesgue = DisorderDensity::uniform(radius)?;
    let lhs = 2.0 * radius * average_inverse_power(&roots, s / nf, &lebesgue, cofactor, &quad)?.value;
    let lhs_averaged = average_inverse_power(&roots, s / nf, rho, cofactor, &quad)?.value;
    let det_v = v.clone().lu().determinant().norm();
    let rhs = 2.0 * radius.powf(1.0 - s) * (operator_norm(a) + radius * operator_norm(v)).powf(s * (nf - 1.0) / nf)
        / (s.powf(s) * (1.0 - s) * det_v.powf(s / nf));
    let (inv_norm, inv_norm_bound) = inverse_norm_estimate(v);
    Ok(NormAverageCheck { lhs, lhs_averaged, rhs, inv_norm, inv_norm_bound })
}

// ---------------------------------------------------------------------------
// Closed-form constants
// ---------------------------------------------------------------------------

/// Constants available when the support of `u` has no gap.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConnectedConstants {
    pub c_u: f64,
    pub c_u_rho: f64,
    pub c_u_plus: f64,
    pub c_u_rho_plus: f64,
    pub c_u_plus_plus: f64,
    pub c_u_rho_pplus: f64,
    pub mass_m: f64,
    pub disorder_threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsReport {
    pub s: f64,
    pub n: usize,
    pub r: usize,
    pub rho_sup: f64,
    pub rho_w11: Option<f64>,
    pub radius: f64,
    pub c_rho: f64,
    pub c_rho_plus: f64,
    pub connected_support: bool,
    #[serde(flatten)]
    pub connected: Option<ConnectedConstants>,
    #[serde(flatten)]
    pub d: DBounds,
    /// `min_α D_α` over the α′ search grid.
    pub d_refined: Option<f64>,
    /// Smallest available bound on D, and on D⁺.
    pub d_best: f64,
    pub dplus_best: f64,
    /// `-ln d_best`.
    pub general_mass: f64,
}

impl ConstantsReport {
    pub fn connected(&self) -> Result<&ConnectedConstants> {
        self.connected.as_ref().ok_or(Error::NotConnectedSupport { r: self.r })
    }
}

pub fn c_rho(sup: f64, s: f64) -> f64 {
    sup.powf(s) * fractional_factor(s)
}

pub fn c_rho_plus(sup: f64, s: f64, n: usize) -> f64 {
    sup.powf(s).max(sup.powf(s / n as f64)) * fractional_factor(s)
}

/// Largest ‖ρ‖_∞ for which `C_{u,ρ} < 1`.
pub fn disorder_threshold(u: &SingleSitePotential, s: f64) -> f64 {
    let prod: f64 = u.values().iter().product();
    (1.0 - s).powf(1.0 / s) * s / 2.0 * prod.abs().powf(1.0 / u.n() as f64)
}

pub fn connected_constants(u: &SingleSitePotential, rho: &DisorderDensity, s: f64) -> Result<ConnectedConstants> {
    check_exponent(s)?;
    if !u.is_connected() {
        return Err(Error::NotConnectedSupport { r: u.gap_width() });
    }
    let n = u.n();
    let e = -s / n as f64;
    let vals = u.values();
    let c_u = vals.iter().product::<f64>().abs().powf(e);
    let mut c_u_plus = 0.0f64;
    let mut c_u_plus_plus = 0.0f64;
    for i in 0..n {
        c_u_plus = c_u_plus.max(vals[..=i].iter().product::<f64>().abs().powf(e));
        c_u_plus_plus = c_u_plus_plus.max(vals[n - 1 - i..].iter().product::<f64>().abs().powf(e));
    }
    let cr = c_rho(rho.sup_norm(), s);
    let crp = c_rho_plus(rho.sup_norm(), s, n);
    Ok(ConnectedConstants {
        c_u,
        c_u_rho: c_u * cr,
        c_u_plus,
        c_u_rho_plus: c_u_plus * crp,
        c_u_plus_plus,
        c_u_rho_pplus: c_u_plus_plus * crp,
        mass_m: -(c_u * cr).ln(),
        disorder_threshold: disorder_threshold(u, s),
    })
}

pub fn fmm_constants(u: &SingleSitePotential, rho: &DisorderDensity, s: f64) -> Result<ConstantsReport> {
    check_exponent(s)?;
    let connected = match connected_constants(u, rho, s) {
        Ok(c) => Some(c),
        Err(Error::NotConnectedSupport { .. }) => None,
        Err(e) => return Err(e),
    };
    let d = d_bounds(u, rho, s);
    let d_refined = refine_d(u, rho, s).ok().map(|r| r.value);
    let d_best = [d.d_bound_a1, d.d_bound_a2, d_refined].into_iter().flatten().fold(f64::INFINITY, f64::min);
    let dplus_best = [d.dplus_bound_a1, d.dplus_bound_a2].into_iter().flatten().fold(f64::INFINITY, f64::min);
    Ok(ConstantsReport {
        s,
        n: u.n(),
        r: u.gap_width(),
        rho_sup: rho.sup_norm(),
        rho_w11: rho.w11_norm(),
        radius: rho.radius(),
        c_rho: c_rho(rho.sup_norm(), s),
        c_rho_plus: c_rho_plus(rho.sup_norm(), s, u.n()),
        connected_support: u.is_connected(),
        connected,
        d,
        d_refined,
        d_best,
        dplus_best,
        general_mass: -d_best.ln(),
    })
}

// ---------------------------------------------------------------------------
// D and D⁺
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DBounds {
    pub d_bound_a1: Option<f64>,
    pub d_bound_a2: Option<f64>,
    pub dplus_bound_a1: Option<f64>,
    pub dplus_bound_a2: Option<f64>,
}

/// `Σ_k u(i-k)^2` for `k = 0..=r`.
fn normal_sq(u: &SingleSitePotential, i: usize) -> f64 {
    (0..=u.gap_width()).map(|k| u.at(i as i64 - k as i64).powi(2)).sum()
}

fn normal_product(u: &SingleSitePotential, last: usize) -> f64 {
    (0..=last).map(|i| normal_sq(u, i)).product()
}

/// `(2(n+r)(r+1)^{r/2})`, the reciprocal of the guaranteed α′ clearance.
fn clearance_inverse(u: &SingleSitePotential, width: usize) -> f64 {
    let r = u.gap_width() as f64;
    2.0 * width as f64 * (r + 1.0).powf(r / 2.0)
}

pub fn d_bound_a1(u: &SingleSitePotential, w11: f64, s: f64) -> f64 {
    let (n, r) = (u.n(), u.gap_width());
    let nr = (n + r) as f64;
    w11.powf(s) * s.powf(-s) / (1.0 - s) * ((r + 1) as f64).powf(s) * clearance_inverse(u, n + r).powf(s)
        / normal_product(u, n - 1 + r).powf(s / (2.0 * nr))
}

pub fn d_bound_a2(u: &SingleSitePotential, sup: f64, radius: f64, s: f64) -> f64 {
    let (n, r) = (u.n(), u.gap_width());
    let (nr, rf) = ((n + r) as f64, r as f64);
    let q = clearance_inverse(u, n + r);
    sup.powf((rf + 1.0) * s) * fractional_factor(s) * (1.0 + q).powf(rf * s) * (2.0 * radius).powf(rf * s) * q.powf(s)
        / normal_product(u, n - 1 + r).powf(s / (2.0 * nr))
}

pub fn dplus_bound_a1(u: &SingleSitePotential, w11: f64, s: f64) -> f64 {
    let (n, r) = (u.n(), u.gap_width());
    let nr = (n + r) as f64;
    (0..n + r)
        .map(|d| {
            let d1 = (d + 1) as f64;
            w11.powf(s * d1 / nr) * s.powf(-s) / (1.0 - s)
                * ((r + 1) as f64).powf(s)
                * clearance_inverse(u, d + 1).powf(s)
                / normal_product(u, d).powf(s / (2.0 * nr))
        })
        .fold(0.0, f64::max)
}

pub fn dplus_bound_a2(u: &SingleSitePotential, sup: f64, radius: f64, s: f64) -> f64 {
    let (n, r) = (u.n(), u.gap_width());
    let (nr, rf) = ((n + r) as f64, r as f64);
    (0..n + r)
        .map(|d| {
            let d1 = (d + 1) as f64;
            let q = clearance_inverse(u, d + 1);
            sup.powf(s * (rf + 1.0) * d1 / nr)
                * (2.0 * radius).powf(s * rf * d1 / nr)
                * (1.0 + q).powf(s * rf)
                * q.powf(s)
                * fractional_factor(s)
                / normal_product(u, d).powf(s / (2.0 * nr))
        })
        .fold(0.0, f64::max)
}

pub fn d_bounds(u: &SingleSitePotential, rho: &DisorderDensity, s: f64) -> DBounds {
    let w11 = rho.w11_norm();
    let a2 = rho.satisfies_a2();
    DBounds {
        d_bound_a1: w11.map(|w| d_bound_a1(u, w, s)),
        d_bound_a2: a2.then(|| d_bound_a2(u, rho.sup_norm(), rho.radius(), s)),
        dplus_bound_a1: w11.map(|w| dplus_bound_a1(u, w, s)),
        dplus_bound_a2: a2.then(|| dplus_bound_a2(u, rho.sup_norm(), rho.radius(), s)),
    }
}

/// Radius at which the best printed D bound for `kind` crosses one; every
/// bound decreases in R because ‖ρ‖_∞ scales like 1/R.
pub fn radius_threshold(u: &SingleSitePotential, kind: DensityKind, s: f64) -> Result<f64> {
    check_exponent(s)?;
    let best = |radius: f64| -> Result<f64> {
        let rho = DisorderDensity::new(kind, radius)?;
        let d = d_bounds(u, &rho, s);
        Ok([d.d_bound_a1, d.d_bound_a2].into_iter().flatten().fold(f64::INFINITY, f64::min))
    };
    let (mut lo, mut hi) = (1e-6f64, 1e12f64);
    if best(hi)? >= 1.0 {
        return Err(Error::SearchExhausted);
    }
    if best(lo)? < 1.0 {
        return Ok(lo);
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if best(mid)? < 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-13 {
            break;
        }
    }
    Ok(hi)
}

// ---------------------------------------------------------------------------
// α′ search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaVector {
    pub components: Vec<f64>,
    /// Smallest Euclidean distance to the hyperplanes `⟨α, u_i⟩ = 0`.
    pub min_distance: f64,
    /// Guaranteed clearance `d₀ / 2`.
    pub floor: f64,
}

/// Unit normals `u_i / ‖u_i‖` with `u_i = (u(i-k))_{k=0..=r}`, `i = 0..n-1+r`.
pub fn hyperplane_normals(u: &SingleSitePotential) -> Vec<Vec<f64>> {
    let r = u.gap_width();
    (0..u.n() + r)
        .map(|i| {
            let v: Vec<f64> = (0..=r).map(|k| u.at(i as i64 - k as i64)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            v.into_iter().map(|x| x / norm).collect()
        })
        .collect()
}

pub fn min_hyperplane_distance(alpha: &[f64], normals: &[Vec<f64>]) -> f64 {
    normals.iter().map(|nv| nv.iter().zip(alpha).map(|(a, b)| a * b).sum::<f64>().abs()).fold(f64::INFINITY, f64::min)
}

const GRID_LIMIT: f64 = 1e6;
const RANDOM_CANDIDATES: usize = 200_000;

/// Visits the search candidates in `[0,1]^{r+1}`: a grid of step at most
/// `d₀/4`, or a fixed pseudo-random cloud when that grid is too large.
fn for_each_candidate<F: FnMut(&[f64])>(u: &SingleSitePotential, mut f: F) {
    let r = u.gap_width();
    let dim = r + 1;
    let step = 1.0 / clearance_inverse(u, u.n() + r) / 2.0;
    let intervals = (1.0 / step).ceil() as usize;
    let points = (intervals + 1) as f64;
    let mut alpha = vec![0.0; dim];
    if points.powi(dim as i32) <= GRID_LIMIT {
        let mut idx = vec![0usize; dim];
        loop {
            for k in 0..dim {
                alpha[k] = idx[k] as f64 / intervals as f64;
            }
            f(&alpha);
            let mut k = dim;
            loop {
                if k == 0 {
                    return;
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] <= intervals {
                    break;
                }
                idx[k] = 0;
            }
        }
    } else {
        let mut g = AuxStream::new(0x5eed_a1fa, r as u64);
        for _ in 0..RANDOM_CANDIDATES {
            for a in alpha.iter_mut() {
                *a = g.uniform();
            }
            f(&alpha);
        }
    }
}

pub fn alpha_star_search(u: &SingleSitePotential) -> Result<AlphaVector> {
    let normals = hyperplane_normals(u);
    let floor = 1.0 / clearance_inverse(u, u.n() + u.gap_width());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_candidate(u, |alpha| {
        let d = min_hyperplane_distance(alpha, &normals);
        if best.as_ref().is_none_or(|(b, _)| d > *b) {
            best = Some((d, alpha.to_vec()));
        }
    });
    let (_, components) = best.ok_or(Error::SearchExhausted)?;
    let min_distance = min_hyperplane_distance(&components, &normals);
    if !(min_distance >= floor && components[0] >= floor) {
        return Err(Error::SearchExhausted);
    }
    Ok(AlphaVector { components, min_distance, floor })
}

/// `D_α` for the applicable branches; `None` if α is outside `M`.
pub fn d_alpha(u: &SingleSitePotential, rho: &DisorderDensity, s: f64, alpha: &[f64]) -> Option<f64> {
    let (n, r) = (u.n(), u.gap_width());
    if alpha.len() != r + 1 || alpha[0] == 0.0 {
        return None;
    }
    let nr = (n + r) as f64;
    let mut ln_prod = 0.0;
    for i in 0..n + r {
        let dot: f64 = (0..=r).map(|k| alpha[k] * u.at(i as i64 - k as i64)).sum();
        if dot == 0.0 {
            return None;
        }
        ln_prod += dot.abs().ln();
    }
    let shared = (-s / nr * ln_prod).exp();
    let a1 = rho
        .w11_norm()
        .map(|w| w.powf(s) * s.powf(-s) / (1.0 - s) * alpha.iter().map(|x| x.abs()).sum::<f64>().powf(s) * shared);
    let a2 = rho.satisfies_a2().then(|| {
        let a0 = alpha[0].abs();
        let ratio = alpha[1..].iter().fold(0.0f64, |m, x| m.max(x.abs() / a0));
        let rs = r as f64 * s;
        rho.sup_norm().powf((r as f64 + 1.0) * s)
            * (2.0 * rho.radius()).powf(rs)
            * fractional_factor(s)
            * a0.powf(s)
            * (1.0 + ratio).powf(rs)
            * shared
    });
    [a1, a2].into_iter().flatten().reduce(f64::min)
}

#[derive(Debug, Clone, Serialize)]
pub struct DRefinement {
    pub alpha: Vec<f64>,
    pub value: f64,
}

/// Minimises `D_α` over the α′ search candidates.
pub fn refine_d(u: &SingleSitePotential, rho: &DisorderDensity, s: f64) -> Result<DRefinement> {
    let mut best: Option<DRefinement> = None;
    for_each_candidate(u, |alpha| {
        if let Some(v) = d_alpha(u, rho, s, alpha) {
            if best.as_ref().is_none_or(|b| v < b.value) {
                best = Some(DRefinement { alpha: alpha.to_vec(), value: v });
            }
        }
    });
    best.ok_or(Error::SearchExhausted)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m1(x: f64) -> CMatrix {
        CMatrix::from_element(1, 1, Complex64::new(x, 0.0))
    }

    fn u(v: &[f64]) -> SingleSitePotential {
        SingleSitePotential::new(v).unwrap()
    }

    #[test]
    fn closed_form_single_site_average() {
        let rho = DisorderDensity::uniform(1.0).unwrap();
        let r = det_fractional_average(&m1(0.0), &m1(1.0), &rho, 0.5).unwrap();
        // (1/2) ∫_{-1}^{1} |r|^{-1/2} dr = 2
        assert!((r.integral - 2.0).abs() < 1e-9, "{}", r.integral);
        assert_relative_eq!(r.bound1, 2.0 * 2f64.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(r.bound2(r.lambda_star), r.bound1, max_relative = 1e-12);
    }

    #[test]
    fn pencil_factorisation_matches_direct_determinant() {
        let mut a = CMatrix::zeros(3, 3);
        let mut v = CMatrix::zeros(3, 3);
        let vals = [[0.3, -1.0, 0.0], [-1.0, 1.2, 0.7], [0.0, 0.7, -0.4]];
        for i in 0..3 {
            for j in 0..3 {
                a[(i, j)] = Complex64::new(vals[i][j], 0.1 * (i as f64 - j as f64));
            }
        }
        v[(0, 0)] = Complex64::new(1.0, 0.0);
        v[(2, 2)] = Complex64::new(-2.0, 0.0);
        // singular V: degree drops to 2
        let roots = PencilRoots::compute(&a, &v).unwrap();
        assert_eq!(roots.degree(), 2);
        for r in [-2.5, -0.3, 0.0, 0.77, 4.0] {
            let direct = (&a + &v * Complex64::new(r, 0.0)).lu().determinant().norm();
            assert_relative_eq!(roots.abs_det(r), direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn leading_coefficient_is_det_v() {
        let rho = DisorderDensity::uniform(1.0).unwrap();
        for i in 0..20 {
            let inst = random_det_instance(3, i);
            let roots = PencilRoots::compute(&inst.a, &inst.v).unwrap();
            let det_v = inst.v.clone().lu().determinant().norm();
            assert_relative_eq!(roots.leading.norm(), det_v, max_relative = 1e-9);
            let _ = det_fractional_average(&inst.a, &inst.v, &rho, inst.s).unwrap();
        }
    }

    #[test]
    fn doubling_v_scales_bound_by_two_to_minus_s() {
        let rho = DisorderDensity::triangular(2.0).unwrap();
        let inst = random_det_instance(9, 4);
        let r1 = det_fractional_average(&inst.a, &inst.v, &rho, 0.3).unwrap();
        let r2 = det_fractional_average(&inst.a, &(&inst.v * Complex64::new(2.0, 0.0)), &rho, 0.3).unwrap();
        assert_relative_eq!(r2.bound1 / r1.bound1, 2f64.powf(-0.3), max_relative = 1e-12);
    }

    #[test]
    fn singular_v_rejected() {
        let rho = DisorderDensity::uniform(1.0).unwrap();
        let err = det_fractional_average(&m1(1.0), &m1(0.0), &rho, 0.5).unwrap_err();
        assert_eq!(err, Error::SingularV);
    }

    #[test]
    fn multiparam_single_parameter_agrees() {
        let rho = DisorderDensity::bump(1.5).unwrap();
        let inst = random_det_instance(11, 2);
        let single = det_fractional_average(&inst.a, &inst.v, &rho, 0.4).unwrap();
        let multi = multiparam_det_average(&inst.a, std::slice::from_ref(&inst.v), &[1.0], &rho, 0.4, 0, 0).unwrap();
        assert!((single.integral - multi.integral).abs() <= 1e-6 * single.integral);
        assert_relative_eq!(multi.bound_a2.unwrap(), single.bound1, max_relative = 1e-12);
    }

    #[test]
    fn two_parameter_example_below_bound() {
        let rho = DisorderDensity::uniform(1.0).unwrap();
        let res = multiparam_det_average(&m1(0.0), &[m1(1.0), m1(1.0)], &[1.0, 0.0], &rho, 0.5, 4000, 17).unwrap();
        // E|r0 + r1|^{-1/2} for independent uniforms on [-1, 1]
        let exact = 4.0 * 2f64.sqrt() / 3.0;
        assert!((res.integral - exact).abs() < 4.0 * res.std_error, "{res:?}");
        assert_relative_eq!(res.bound_a2.unwrap(), 2.0 * 2f64.sqrt(), max_relative = 1e-12);
        assert!(res.integral <= res.bound_a2.unwrap());
        assert!(res.bound_a1.is_none());
    }

    #[test]
    fn norm_estimate_equality_cases() {
        let (inv, bound) = inverse_norm_estimate(&CMatrix::identity(3, 3));
        assert_relative_eq!(inv, 1.0, max_relative = 1e-14);
        assert_relative_eq!(bound, 1.0, max_relative = 1e-14);
        let mut v = CMatrix::zeros(2, 2);
        v[(0, 0)] = Complex64::new(1.0, 0.0);
        v[(1, 1)] = Complex64::new(2.0, 0.0);
        let (inv, bound) = inverse_norm_estimate(&v);
        assert_relative_eq!(inv, 1.0, max_relative = 1e-14);
        assert_relative_eq!(bound, 1.0, max_relative = 1e-14);
    }

    #[test]
    fn norm_average_closed_form() {
        let rho = DisorderDensity::uniform(1.0).unwrap();
        let c = resolvent_norm_average_check(&m1(0.0), &m1(1.0), &rho, 0.5).unwrap();
        assert!((c.lhs - 4.0).abs() < 1e-9);
        assert!((c.lhs_averaged - 2.0).abs() < 1e-9);
        assert_relative_eq!(c.rhs, 4.0 * 2f64.sqrt(), max_relative = 1e-12);
    }

    #[test]
    fn norm_average_two_by_two_dominated() {
        let rho = DisorderDensity::uniform(2.0).unwrap();
        for i in 0..10 {
            let inst = random_det_instance(21, i);
            let c = resolvent_norm_average_check(&inst.a, &inst.v, &rho, inst.s).unwrap();
            assert!(c.lhs <= c.rhs, "{c:?}");
            assert!(c.inv_norm <= c.inv_norm_bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn constants_for_unit_delta() {
        let rho = DisorderDensity::uniform(1.0).unwrap();
        let c = connected_constants(&u(&[1.0]), &rho, 0.5).unwrap();
        assert_eq!(c.c_u, 1.0);
        assert_relative_eq!(c.c_u_rho, 2.0 * 2f64.sqrt(), max_relative = 1e-14);
        assert!(c.mass_m < 0.0);
        assert_relative_eq!(c.disorder_threshold, 0.0625, max_relative = 1e-15);
    }

    #[test]
    fn gapped_support_has_no_connected_constants() {
        let rho = DisorderDensity::uniform(10.0).unwrap();
        let rep = fmm_constants(&u(&[1.0, 0.0, 2.0]), &rho, 0.3).unwrap();
        assert!(matches!(rep.connected(), Err(Error::NotConnectedSupport { r: 1 })));
        let d = rep.d.d_bound_a2.unwrap();
        assert!(d.is_finite() && d > 0.0);
        assert!(rep.d.d_bound_a1.is_none());
        assert!(rep.d_refined.unwrap() <= d);
    }

    #[test]
    fn d_bound_reduces_at_zero_gap() {
        let uu = u(&[1.5, -0.5, 2.0]);
        let (w, s) = (0.8f64, 0.4f64);
        let n = 3.0f64;
        let prod_sq: f64 = uu.values().iter().map(|x| x * x).product();
        let expected = w.powf(s) * s.powf(-s) / (1.0 - s) * (2.0 * n).powf(s) / prod_sq.powf(s / (2.0 * n));
        assert_relative_eq!(d_bound_a1(&uu, w, s), expected, max_relative = 1e-13);
    }

    #[test]
    fn d_bound_a2_increases_with_radius() {
        let uu = u(&[1.0, 0.0, 2.0]);
        let mut last = 0.0;
        for radius in [1.0, 2.0, 5.0, 10.0, 100.0] {
            let d = d_bound_a2(&uu, 0.05, radius, 0.3);
            assert!(d > last);
            last = d;
        }
    }

    #[test]
    fn threshold_radius_gives_unit_bound() {
        let uu = u(&[1.0, 0.0, 2.0]);
        let r_star = radius_threshold(&uu, DensityKind::Uniform, 0.5).unwrap();
        let rho = DisorderDensity::uniform(r_star).unwrap();
        assert_relative_eq!(d_bounds(&uu, &rho, 0.5).d_bound_a2.unwrap(), 1.0, max_relative = 1e-9);
    }

    #[test]
    fn alpha_for_connected_support_is_one() {
        let a = alpha_star_search(&u(&[1.0, -2.0, 3.0])).unwrap();
        assert_eq!(a.components, vec![1.0]);
        assert_eq!(a.min_distance, 1.0);
    }

    #[test]
    fn alpha_for_single_gap() {
        let uu = u(&[1.0, 0.0, 2.0]);
        let a = alpha_star_search(&uu).unwrap();
        let floor = 1.0 / (2.0 * 4.0 * 2f64.sqrt());
        assert_relative_eq!(a.floor, floor, max_relative = 1e-15);
        for i in 0..4i64 {
            let dot = a.components[0] * uu.at(i) + a.components[1] * uu.at(i - 1);
            let norm = uu.at(i).hypot(uu.at(i - 1));
            assert!(dot.abs() / norm >= floor);
        }
        let doubled = alpha_star_search(&uu.scaled(2.0).unwrap()).unwrap();
        assert_eq!(doubled, a);
    }
}
