//! Extraction of a positive single-site block from a sign-changing `u`, and
//! the two-parameter averaging bound that makes the monotone machinery
//! applicable to it.

use std::cell::Cell;

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::greens::{ComplexEnergy, Resolvent};
use crate::model::{
    alloy_potential, assemble_box_hamiltonian, coupling_range, sample_couplings, BoxHamiltonian, DisorderDensity,
    Interval, SingleSitePotential,
};
use crate::par;
use crate::quadrature::adaptive_gk15;
use crate::rng::AuxStream;
use crate::stats::{linear_fit, mean_and_se};
use crate::tridiag::TridiagLu;

type Poly = Vec<BigRational>;

fn snap(values: &[f64]) -> Result<Poly> {
    values
        .iter()
        .map(|v| {
            BigRational::from_float(*v).ok_or_else(|| Error::InvalidArgument(format!("non-finite coefficient {v}")))
        })
        .collect()
}

fn trim(mut p: Poly) -> Poly {
    while p.len() > 1 && p.last().is_some_and(Zero::is_zero) {
        p.pop();
    }
    p
}

fn eval(p: &Poly, x: &BigRational) -> BigRational {
    p.iter().rev().fold(BigRational::zero(), |acc, c| acc * x + c)
}

fn derivative(p: &Poly) -> Poly {
    let d: Poly = p.iter().enumerate().skip(1).map(|(k, c)| c * BigRational::from_integer(BigInt::from(k))).collect();
    if d.is_empty() {
        vec![BigRational::zero()]
    } else {
        trim(d)
    }
}

fn remainder(a: &Poly, b: &Poly) -> Poly {
    let mut r = a.clone();
    let lead = b.last().unwrap().clone();
    while r.len() >= b.len() && !(r.len() == 1 && r[0].is_zero()) {
        let shift = r.len() - b.len();
        let q = r.last().unwrap() / &lead;
        for (i, c) in b.iter().enumerate() {
            r[shift + i] -= &q * c;
        }
        r.pop();
        if r.is_empty() {
            r.push(BigRational::zero());
        }
        r = trim(r);
    }
    r
}

fn is_zero_poly(p: &Poly) -> bool {
    p.iter().all(Zero::is_zero)
}

fn sturm_sequence(p: &Poly) -> Vec<Poly> {
    let mut seq = vec![p.clone(), derivative(p)];
    while !is_zero_poly(seq.last().unwrap()) && seq.last().unwrap().len() > 1 {
        let k = seq.len();
        let r: Poly = remainder(&seq[k - 2], &seq[k - 1]).into_iter().map(|c| -c).collect();
        if is_zero_poly(&r) {
            break;
        }
        seq.push(r);
    }
    seq.retain(|q| !is_zero_poly(q));
    seq
}

fn sign_variations(seq: &[Poly], x: &BigRational) -> usize {
    let signs: Vec<bool> = seq.iter().map(|q| eval(q, x)).filter(|v| !v.is_zero()).map(|v| v.is_positive()).collect();
    signs.windows(2).filter(|w| w[0] != w[1]).count()
}

/// Whether `p_u(x) = Σ u(k) x^k` has no root in `[0, ∞)`, decided in exact
/// rational arithmetic on the binary values of the coefficients.
pub fn nonneg_root_test(u: &SingleSitePotential) -> Result<bool> {
    let p = trim(snap(u.values())?);
    if p[0].is_zero() {
        return Ok(false);
    }
    if p.len() == 1 {
        return Ok(true);
    }
    let lead = p.last().unwrap();
    let bound = BigRational::from_integer(1.into()) + p.iter().map(|c| (c / lead).abs()).max().unwrap();
    let seq = sturm_sequence(&p);
    Ok(sign_variations(&seq, &BigRational::zero()) == sign_variations(&seq, &bound))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PositivityWitness {
    pub m: usize,
    /// `γ_0 = ±1`.
    pub gamma: Vec<f64>,
    /// `u ∗ γ`, strictly positive on `0..m+n`.
    pub v: Vec<f64>,
}

/// Multiplies `p_u` by `±(1+x)^M` for `M = 0, 1, …, m_max` until every
/// coefficient is strictly positive.
pub fn positive_combination_search(u: &SingleSitePotential, m_max: usize) -> Result<PositivityWitness> {
    if !nonneg_root_test(u)? {
        return Err(Error::NotExtractable);
    }
    let p = snap(u.values())?;
    let sign = if p[0].is_positive() { 1 } else { -1 };
    let mut prod: Poly = p.iter().map(|c| c * BigRational::from_integer(sign.into())).collect();
    for m in 0..=m_max {
        if m > 0 {
            let mut next = vec![BigRational::zero(); prod.len() + 1];
            for (i, c) in prod.iter().enumerate() {
                next[i] += c;
                next[i + 1] += c;
            }
            prod = next;
        }
        if prod.iter().all(Signed::is_positive) {
            let gamma = binomials(m).into_iter().map(|b| (sign * b as i64) as f64).collect();
            let v = prod.iter().map(|c| c.to_f64().unwrap_or(f64::NAN)).collect();
            return Ok(PositivityWitness { m, gamma, v });
        }
    }
    Err(Error::SearchExhausted)
}

fn binomials(m: usize) -> Vec<u64> {
    let mut row = vec![1u64];
    for _ in 0..m {
        let mut next = vec![1u64; row.len() + 1];
        for i in 1..row.len() {
            next[i] = row[i - 1] + row[i];
        }
        row = next;
    }
    row
}

/// `u ∗ γ` in floating point.
pub fn convolve(u: &[f64], gamma: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; u.len() + gamma.len() - 1];
    for (i, a) in u.iter().enumerate() {
        for (j, b) in gamma.iter().enumerate() {
            out[i + j] += a * b;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Two-parameter averaging
// ---------------------------------------------------------------------------

/// Background operator with two site functions `φ, ψ ≥ 0` along which the
/// couplings `v_1, v_2` act.
#[derive(Debug, Clone)]
pub struct TwoParamProblem<'a> {
    pub h: &'a BoxHamiltonian,
    pub phi: &'a [f64],
    pub psi: &'a [f64],
    pub x: i64,
    pub y: i64,
    pub z: ComplexEnergy,
    pub s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoParamCheck {
    pub half_side: f64,
    pub lhs: f64,
    pub quad_error: f64,
    pub rhs: f64,
    pub c_w: f64,
}

/// `4/(1-s) (C_W/√(φ(x)ψ(y)))^s S^{2-s}`.
pub fn two_param_rhs(phi_x: f64, psi_y: f64, s: f64, half_side: f64, c_w: f64) -> f64 {
    4.0 / (1.0 - s) * (c_w / (phi_x * psi_y).sqrt()).powf(s) * half_side.powf(2.0 - s)
}

/// Smallest `C_W` for which `lhs` sits under the two-parameter bound.
pub fn required_c_w(lhs: f64, phi_x: f64, psi_y: f64, s: f64, half_side: f64) -> f64 {
    (phi_x * psi_y).sqrt() * (lhs * (1.0 - s) / (4.0 * half_side.powf(2.0 - s))).powf(1.0 / s)
}

const INNER_PANELS: usize = 8;

impl TwoParamProblem<'_> {
    fn validate(&self) -> Result<(usize, usize)> {
        let d = self.h.domain();
        if self.phi.len() != d.len() || self.psi.len() != d.len() {
            return Err(Error::InvalidArgument("site functions must cover the box".into()));
        }
        if self.phi.iter().chain(self.psi).any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("site functions must be finite and nonnegative".into()));
        }
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::ExponentOutOfRange { s: self.s, lo: 0.0, hi: 1.0 });
        }
        if !(self.z.im > 0.0) {
            return Err(Error::InvalidArgument("need Im z > 0".into()));
        }
        let (ix, iy) = (self.h.index(self.x)?, self.h.index(self.y)?);
        if !(self.phi[ix] > 0.0 && self.psi[iy] > 0.0) {
            return Err(Error::InvalidArgument("need φ(x) > 0 and ψ(y) > 0".into()));
        }
        Ok((ix, iy))
    }

    /// `|⟨δ_x, (H + z - v_1 φ - v_2 ψ)^{-1} δ_y⟩|^s`.
    pub fn integrand(&self, v1: f64, v2: f64) -> Result<f64> {
        let (ix, iy) = self.validate()?;
        self.eval(ix, iy, v1, v2)
    }

    fn eval(&self, ix: usize, iy: usize, v1: f64, v2: f64) -> Result<f64> {
        let z = self.z.value();
        let diag: Vec<Complex64> = self
            .h
            .potential()
            .iter()
            .zip(self.phi.iter().zip(self.psi))
            .map(|(v, (a, b))| Complex64::new(v - v1 * a - v2 * b, 0.0) + z)
            .collect();
        let off = vec![Complex64::new(-1.0, 0.0); diag.len() - 1];
        let lu = TridiagLu::factor(&off, &diag, &off)?;
        Ok(lu.inverse_column(iy)[ix].norm().powf(self.s))
    }

    /// Nested adaptive Gauss-Kronrod over `[-S, S]^2`.
    pub fn check(&self, half_side: f64, c_w: f64, rel_tol: f64) -> Result<TwoParamCheck> {
        let (ix, iy) = self.validate()?;
        if !(half_side > 0.0) {
            return Err(Error::InvalidArgument("need S > 0".into()));
        }
        let panels: Vec<f64> =
            (0..=INNER_PANELS).map(|k| -half_side + 2.0 * half_side * k as f64 / INNER_PANELS as f64).collect();
        let failure: Cell<Option<Error>> = Cell::new(None);
        let outer = adaptive_gk15(&panels, rel_tol, 0.0, 4000, |v1| {
            let q = adaptive_gk15(&panels, rel_tol * 0.1, 0.0, 4000, |v2| match self.eval(ix, iy, v1, v2) {
                Ok(v) => v,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            });
            match q {
                Ok(q) => q.value,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            }
        });
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let outer = outer?;
        Ok(TwoParamCheck {
            half_side,
            lhs: outer.value,
            quad_error: outer.error,
            rhs: two_param_rhs(self.phi[ix], self.psi[iy], self.s, half_side, c_w),
            c_w,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSweep {
    /// Abscissa of the log-log fit (`S`, or `φ(x)ψ(y)`).
    pub scales: Vec<f64>,
    pub lhs: Vec<f64>,
    pub slope: f64,
    pub expected: f64,
    pub rel_error: f64,
    /// Smallest `C_W` covering every point of the sweep.
    pub c_w_required: f64,
}

fn sweep_fit(scales: Vec<f64>, lhs: Vec<f64>, expected: f64, c_w_required: f64) -> Result<ScalingSweep> {
    let lx: Vec<f64> = scales.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = lhs.iter().map(|v| v.ln()).collect();
    let slope = linear_fit(&lx, &ly)?.slope;
    Ok(ScalingSweep { scales, lhs, slope, expected, rel_error: ((slope - expected) / expected).abs(), c_w_required })
}

/// `lhs` against `S`; the bound grows like `S^{2-s}`.
pub fn half_side_sweep(p: &TwoParamProblem<'_>, sides: &[f64], rel_tol: f64) -> Result<ScalingSweep> {
    let (ix, iy) = p.validate()?;
    let mut lhs = Vec::new();
    let mut need: f64 = 0.0;
    for &side in sides {
        let c = p.check(side, 1.0, rel_tol)?;
        need = need.max(required_c_w(c.lhs, p.phi[ix], p.psi[iy], p.s, side));
        lhs.push(c.lhs);
    }
    sweep_fit(sides.to_vec(), lhs, 2.0 - p.s, need)
}

/// `lhs` against `φ(x)ψ(y)` with `φ, ψ` scaled jointly by each factor; the
/// bound decays like `(φ(x)ψ(y))^{-s/2}`.
pub fn amplitude_sweep(p: &TwoParamProblem<'_>, factors: &[f64], half_side: f64, rel_tol: f64) -> Result<ScalingSweep> {
    let (ix, iy) = p.validate()?;
    let mut scales = Vec::new();
    let mut lhs = Vec::new();
    let mut need: f64 = 0.0;
    for &c in factors {
        let phi: Vec<f64> = p.phi.iter().map(|v| v * c).collect();
        let psi: Vec<f64> = p.psi.iter().map(|v| v * c).collect();
        let q = TwoParamProblem { phi: &phi, psi: &psi, ..p.clone() };
        let r = q.check(half_side, 1.0, rel_tol)?;
        need = need.max(required_c_w(r.lhs, phi[ix], psi[iy], p.s, half_side));
        scales.push(phi[ix] * psi[iy]);
        lhs.push(r.lhs);
    }
    sweep_fit(scales, lhs, -p.s / 2.0, need)
}

// ---------------------------------------------------------------------------
// Block-averaged moment bound
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneRequest {
    pub domain: Interval,
    pub x: i64,
    pub j: i64,
    pub z: ComplexEnergy,
    pub s: f64,
    pub n_samples: u64,
    pub seed: u64,
    pub c_w: f64,
    pub m_max: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MonotoneCheck {
    pub witness: PositivityWitness,
    /// Effective coupling range `S = R(1 + max_{i≥1} |λ_i|)`.
    pub half_side: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub k: f64,
    pub within_bound: bool,
}

/// `4/(1-s) (C_W/√(u(0)λ_N u(n-1)))^s (2S‖ρ‖_∞)^{2(N+1)} S^{-s}`.
pub fn monotone_constant(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    w: &PositivityWitness,
    s: f64,
    c_w: f64,
) -> (f64, f64) {
    let lam_max = w.gamma.iter().skip(1).fold(0.0f64, |m, v| m.max(v.abs()));
    let half_side = rho.radius() * (1.0 + lam_max);
    let n = u.n();
    let anchor = (u.values()[0] * w.gamma[0] * w.gamma[w.m] * u.values()[n - 1]).abs();
    let k = 4.0 / (1.0 - s)
        * (c_w / anchor.sqrt()).powf(s)
        * (2.0 * half_side * rho.sup_norm()).powi(2 * (w.m as i32 + 1))
        * half_side.powf(-s);
    (k, half_side)
}

/// `E|G(z;x,j)|^s` averaged only over the couplings in the blocks
/// `{x..x+N}` and `{j-n+1-N..j-n+1}`, all others frozen from `seed`.
pub fn monotone_moment_bound_check(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    req: &MonotoneRequest,
) -> Result<MonotoneCheck> {
    let witness = positive_combination_search(u, req.m_max)?;
    let n = u.n() as i64;
    let big_n = witness.m as i64;
    let required = 2 * (big_n + n) - 1;
    if (req.j - req.x).abs() < required {
        return Err(Error::SeparationViolated { x: req.x, y: req.j, required });
    }
    if !(req.z.im > 0.0) {
        return Err(Error::InvalidArgument("need Im z > 0".into()));
    }
    if !(req.s > 0.0 && req.s < 1.0) {
        return Err(Error::ExponentOutOfRange { s: req.s, lo: 0.0, hi: 1.0 });
    }
    for site in [req.x, req.j] {
        if !req.domain.contains(site) {
            return Err(Error::SiteOutsideBox { site, domain: req.domain });
        }
    }
    let (lo, hi) = (req.x.min(req.j), req.x.max(req.j));
    let blocks = [(lo, lo + big_n), (hi - n + 1 - big_n, hi - n + 1)];
    let range = coupling_range(u, req.domain);
    let frozen = sample_couplings(rho, range, req.seed, 0);
    let values = par::try_map_range(0..req.n_samples, |i| {
        let mut c = frozen.clone();
        let mut aux = AuxStream::new(req.seed, i + 1);
        for &(a, b) in &blocks {
            for k in a..=b {
                if range.contains(k) {
                    c.set(k, rho.quantile(aux.uniform()));
                }
            }
        }
        let h = assemble_box_hamiltonian(req.domain, &alloy_potential(u, &c, req.domain)?)?;
        Ok(Resolvent::new(&h, req.z)?.entry(req.x, req.j)?.norm().powf(req.s))
    })?;
    let (estimate, std_error) = mean_and_se(&values);
    let (k, half_side) = monotone_constant(u, rho, &witness, req.s, req.c_w);
    Ok(MonotoneCheck { witness, half_side, estimate, std_error, k, within_bound: estimate <= k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn u(v: &[f64]) -> SingleSitePotential {
        SingleSitePotential::new(v).unwrap()
    }

    #[test]
    fn root_test_small_cases() {
        assert!(nonneg_root_test(&u(&[1.0, 1.0])).unwrap());
        assert!(!nonneg_root_test(&u(&[1.0, -1.0])).unwrap());
        assert!(nonneg_root_test(&u(&[1.0, -1.0, 1.0])).unwrap());
        assert!(nonneg_root_test(&u(&[-2.0])).unwrap());
        // (1-x)^2 has a double root at 1; adding a tiny constant removes it.
        assert!(!nonneg_root_test(&u(&[1.0, -2.0, 1.0])).unwrap());
        assert!(nonneg_root_test(&u(&[1.0 + 2f64.powi(-40), -2.0, 1.0])).unwrap());
        assert!(!nonneg_root_test(&u(&[1.0 - 2f64.powi(-40), -2.0, 1.0])).unwrap());
    }

    #[test]
    fn polya_witnesses() {
        let w = positive_combination_search(&u(&[1.0, -1.0, 1.0]), 10).unwrap();
        assert_eq!(w.m, 3);
        assert_eq!(w.gamma, vec![1.0, 3.0, 3.0, 1.0]);
        assert_eq!(w.v, vec![1.0, 2.0, 1.0, 1.0, 2.0, 1.0]);
        let w = positive_combination_search(&u(&[1.0, 1.0]), 10).unwrap();
        assert_eq!((w.m, w.gamma, w.v), (0, vec![1.0], vec![1.0, 1.0]));
        assert_eq!(positive_combination_search(&u(&[1.0, -1.0]), 10).unwrap_err(), Error::NotExtractable);
        assert_eq!(positive_combination_search(&u(&[1.0, -1.0, 1.0]), 2).unwrap_err(), Error::SearchExhausted);
    }

    #[test]
    fn negative_leading_sign_flips_gamma() {
        let w = positive_combination_search(&u(&[-1.0, 1.0, -1.0]), 10).unwrap();
        assert_eq!(w.gamma[0], -1.0);
        assert!(w.v.iter().all(|v| *v > 0.0));
        assert_eq!(convolve(&[-1.0, 1.0, -1.0], &w.gamma), w.v);
    }

    fn one_site() -> BoxHamiltonian {
        BoxHamiltonian::free(Interval::new(0, 0).unwrap())
    }

    #[test]
    fn one_by_one_reduces_to_line_integral() {
        let h = one_site();
        let (phi, psi) = ([1.0], [1.0]);
        let s = 0.5;
        let side = 3.0;
        let p =
            TwoParamProblem { h: &h, phi: &phi, psi: &psi, x: 0, y: 0, z: ComplexEnergy::new(0.0, 1.0).unwrap(), s };
        let got = p.check(side, 1.0, 1e-9).unwrap();
        let want = adaptive_gk15(&[-2.0 * side, 0.0, 2.0 * side], 1e-12, 0.0, 1000, |w| {
            (2.0 * side - w.abs()) * (w * w + 1.0).powf(-s / 2.0)
        })
        .unwrap();
        assert_relative_eq!(got.lhs, want.value, max_relative = 1e-7);
    }

    #[test]
    fn homogeneity_under_joint_rescaling() {
        // Rescaling φ, ψ by λ and S by 1/λ maps the integral to λ^{-2} times itself.
        let h = one_site();
        let z = ComplexEnergy::new(0.3, 0.7).unwrap();
        let s = 0.4;
        let lam = 2.5;
        let (a, b) = ([1.0], [1.0]);
        let (la, lb) = ([lam], [lam]);
        let p1 = TwoParamProblem { h: &h, phi: &la, psi: &lb, x: 0, y: 0, z, s };
        let p2 = TwoParamProblem { h: &h, phi: &a, psi: &b, x: 0, y: 0, z, s };
        let l1 = p1.check(2.0, 1.0, 1e-9).unwrap().lhs;
        let l2 = p2.check(2.0 * lam, 1.0, 1e-9).unwrap().lhs;
        assert_relative_eq!(l1, l2 / (lam * lam), max_relative = 1e-7);
    }

    #[test]
    fn rhs_scales_exactly_in_s() {
        let r1 = two_param_rhs(0.5, 2.0, 0.3, 4.0, 1.7);
        let r2 = two_param_rhs(0.5, 2.0, 0.3, 8.0, 1.7);
        assert_relative_eq!(r2 / r1, 2f64.powf(1.7), max_relative = 1e-14);
        let need = required_c_w(0.9, 0.5, 2.0, 0.3, 4.0);
        assert_relative_eq!(two_param_rhs(0.5, 2.0, 0.3, 4.0, need), 0.9, max_relative = 1e-12);
    }

    #[test]
    fn constant_for_two_site_positive_u() {
        let rho = DisorderDensity::uniform(3.0).unwrap();
        let uu = u(&[1.0, 1.0]);
        let w = positive_combination_search(&uu, 5).unwrap();
        let (s, cw) = (0.4, 1.3);
        let (k, side) = monotone_constant(&uu, &rho, &w, s, cw);
        assert_eq!(side, 3.0);
        assert_relative_eq!(k, 4.0 / (1.0 - s) * cw.powf(s) * 3f64.powf(-s), max_relative = 1e-14);
    }

    #[test]
    fn separation_and_extractability_enforced() {
        let rho = DisorderDensity::uniform(3.0).unwrap();
        let mut req = MonotoneRequest {
            domain: Interval::new(-20, 20).unwrap(),
            x: 0,
            j: 2,
            z: ComplexEnergy::new(0.0, 0.1).unwrap(),
            s: 0.5,
            n_samples: 10,
            seed: 0,
            c_w: 1.0,
            m_max: 10,
        };
        assert_eq!(
            monotone_moment_bound_check(&u(&[1.0, 1.0]), &rho, &req).unwrap_err(),
            Error::SeparationViolated { x: 0, y: 2, required: 3 }
        );
        req.j = 10;
        assert_eq!(monotone_moment_bound_check(&u(&[1.0, -1.0]), &rho, &req).unwrap_err(), Error::NotExtractable);
        assert!(monotone_moment_bound_check(&u(&[1.0, 1.0]), &rho, &req).is_ok());
    }
}
