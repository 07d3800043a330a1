//! Resolvent entries on finite boxes and the exact identities they satisfy:
//! Cramer's corner formula, the Schur boundary block, depleted Hamiltonians
//! and the geometric resolvent factorisation.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{BoxHamiltonian, Interval};
use crate::tridiag::TridiagLu;

/// Spectral parameter `z = E + iε`, `ε ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexEnergy {
    pub re: f64,
    pub im: f64,
}

impl ComplexEnergy {
    pub fn new(re: f64, im: f64) -> Result<Self> {
        if !(im >= 0.0) || !re.is_finite() || !im.is_finite() {
            return Err(Error::InvalidArgument(format!("energy {re} + {im}i must have finite parts and im >= 0")));
        }
        Ok(Self { re, im })
    }

    pub fn real(e: f64) -> Self {
        Self { re: e, im: 0.0 }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }

    pub fn abs(&self) -> f64 {
        self.re.hypot(self.im)
    }
}

const RESIDUAL_TOL: f64 = 1e-10;

/// Factorised `H - z` for a box Hamiltonian with arbitrary hopping pattern
/// (full `-1` hopping, or with some bonds removed).
#[derive(Debug, Clone)]
pub struct Resolvent {
    domain: Interval,
    diag: Vec<Complex64>,
    hopping: Vec<f64>,
    lu: TridiagLu,
}

impl Resolvent {
    pub fn new(h: &BoxHamiltonian, z: ComplexEnergy) -> Result<Self> {
        Self::with_hopping(h, &vec![-1.0; h.dim() - 1], z)
    }

    pub fn with_hopping(h: &BoxHamiltonian, hopping: &[f64], z: ComplexEnergy) -> Result<Self> {
        let zc = z.value();
        let diag: Vec<Complex64> = h.potential().iter().map(|v| Complex64::new(*v, 0.0) - zc).collect();
        let off: Vec<Complex64> = hopping.iter().map(|t| Complex64::new(*t, 0.0)).collect();
        let lu = TridiagLu::factor(&off, &diag, &off)?;
        Ok(Self { domain: h.domain(), diag, hopping: hopping.to_vec(), lu })
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    fn index(&self, site: i64) -> Result<usize> {
        if self.domain.contains(site) {
            Ok((site - self.domain.start) as usize)
        } else {
            Err(Error::SiteOutsideBox { site, domain: self.domain })
        }
    }

    /// `G(z; ·, y)` over the box, with a backward-error check.
    pub fn column(&self, y: i64) -> Result<Vec<Complex64>> {
        let j = self.index(y)?;
        let col = self.lu.inverse_column(j);
        let n = col.len();
        let mut res2 = 0.0;
        let mut u2 = 0.0;
        for i in 0..n {
            let mut r = self.diag[i] * col[i];
            if i > 0 {
                r += self.hopping[i - 1] * col[i - 1];
            }
            if i + 1 < n {
                r += self.hopping[i] * col[i + 1];
            }
            if i == j {
                r -= 1.0;
            }
            res2 += r.norm_sqr();
            u2 += col[i].norm_sqr();
        }
        let rel = res2.sqrt() / (self.lu.norm() * u2.sqrt() + 1.0);
        if !(rel <= RESIDUAL_TOL) {
            return Err(Error::NearSingular { ratio: self.lu.min_pivot_ratio() });
        }
        Ok(col)
    }

    pub fn entry(&self, x: i64, y: i64) -> Result<Complex64> {
        let i = self.index(x)?;
        Ok(self.column(y)?[i])
    }

    /// Full inverse as a dense matrix (small boxes only).
    pub fn matrix(&self) -> Result<DMatrix<Complex64>> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let col = self.column(self.domain.start + j as i64)?;
            for i in 0..n {
                m[(i, j)] = col[i];
            }
        }
        Ok(m)
    }

    pub fn determinant(&self) -> Complex64 {
        self.lu.determinant()
    }
}

pub fn green_entry(h: &BoxHamiltonian, z: ComplexEnergy, x: i64, y: i64) -> Result<Complex64> {
    h.index(x)?;
    Resolvent::new(h, z)?.entry(x, y)
}

/// `ln |det(H - z)|` by the continuant recurrence with rescaling.
pub fn log_abs_determinant(h: &BoxHamiltonian, z: ComplexEnergy) -> f64 {
    let zc = z.value();
    let mut log_scale = 0.0;
    let mut prev = Complex64::new(1.0, 0.0);
    let mut cur = Complex64::new(h.potential()[0], 0.0) - zc;
    for v in &h.potential()[1..] {
        // off-diagonal product (-1)(-1) = 1
        let next = (Complex64::new(*v, 0.0) - zc) * cur - prev;
        prev = cur;
        cur = next;
        let m = cur.norm();
        if m > 1e100 || (m < 1e-100 && m > 0.0) {
            prev /= m;
            cur /= m;
            log_scale += m.ln();
        }
    }
    cur.norm().ln() + log_scale
}

/// `| |G(z;a,b)| |det(H - z)| - 1 |` for the box corners `a`, `b`.
pub fn corner_determinant_check(h: &BoxHamiltonian, z: ComplexEnergy) -> Result<f64> {
    let d = h.domain();
    let g = Resolvent::new(h, z)?.entry(d.start, d.end)?;
    let log_product = g.norm().ln() + log_abs_determinant(h, z);
    Ok((log_product.exp() - 1.0).abs())
}

// ---------------------------------------------------------------------------
// Depleted Hamiltonians
// ---------------------------------------------------------------------------

/// `H` with the hopping across the boundary of `Λ` removed, together with
/// the removed part `T = Δ - Δ^Λ` so that `H = H^Λ - T`.
#[derive(Debug, Clone)]
pub struct DepletedPair {
    pub hamiltonian: BoxHamiltonian,
    pub inner: Interval,
    /// Off-diagonal of `H^Λ`: `-1` on kept bonds, `0` on cut bonds.
    pub hopping: Vec<f64>,
    /// Nonzero entries `(x, y, value)` of `T`.
    pub coupling: Vec<(i64, i64, f64)>,
}

pub fn depleted_split(h: &BoxHamiltonian, inner: Interval) -> Result<DepletedPair> {
    let d = h.domain();
    if !d.contains_interval(&inner) {
        return Err(Error::BadSubbox { sub: inner, outer: d });
    }
    let mut hopping = vec![-1.0; h.dim() - 1];
    let mut coupling = Vec::new();
    for (i, site) in (d.start..d.end).enumerate() {
        if inner.contains(site) != inner.contains(site + 1) {
            hopping[i] = 0.0;
            coupling.push((site, site + 1, 1.0));
            coupling.push((site + 1, site, 1.0));
        }
    }
    Ok(DepletedPair { hamiltonian: h.clone(), inner, hopping, coupling })
}

impl DepletedPair {
    pub fn resolvent(&self, z: ComplexEnergy) -> Result<Resolvent> {
        Resolvent::with_hopping(&self.hamiltonian, &self.hopping, z)
    }

    /// Dense `H^Λ - T`, which must equal `H`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let n = self.hamiltonian.dim();
        let start = self.hamiltonian.domain().start;
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(self.hamiltonian.potential()));
        for i in 0..n - 1 {
            m[(i, i + 1)] = self.hopping[i];
            m[(i + 1, i)] = self.hopping[i];
        }
        for &(x, y, t) in &self.coupling {
            m[((x - start) as usize, (y - start) as usize)] -= t;
        }
        m
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeometricResiduals {
    pub res1: f64,
    pub res2: f64,
    pub res_factor: f64,
}

fn frobenius(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Residuals of `G = G^Λ + G T G^Λ` and `G = G^Λ + G^Λ T G`, measured in
/// Frobenius norm (an upper bound for the operator norm) relative to the size
/// of the terms.
pub fn resolvent_identity_residuals(h: &BoxHamiltonian, inner: Interval, z: ComplexEnergy) -> Result<(f64, f64)> {
    let pair = depleted_split(h, inner)?;
    let g = Resolvent::new(h, z)?.matrix()?;
    let gl = pair.resolvent(z)?.matrix()?;
    let n = h.dim();
    let start = h.domain().start;
    let mut gtgl = DMatrix::<Complex64>::zeros(n, n);
    let mut gltg = DMatrix::<Complex64>::zeros(n, n);
    for &(p, q, t) in &pair.coupling {
        let (p, q) = ((p - start) as usize, (q - start) as usize);
        for i in 0..n {
            for j in 0..n {
                gtgl[(i, j)] += g[(i, p)] * t * gl[(q, j)];
                gltg[(i, j)] += gl[(i, p)] * t * g[(q, j)];
            }
        }
    }
    let r1 = &g - &gl - &gtgl;
    let r2 = &g - &gl - &gltg;
    let base = frobenius(&g) + frobenius(&gl);
    let s1 = (base + frobenius(&gtgl)).max(1.0);
    let s2 = (base + frobenius(&gltg)).max(1.0);
    Ok((frobenius(&r1) / s1, frobenius(&r2) / s2))
}

/// `|G(z;x,y) - G(z;x,x+n-1) G_Λ(z;x+n,y)|` with `Λ = [x+n, max Γ]`, relative
/// to the product's magnitude when that exceeds one.
pub fn factorization_residual(h: &BoxHamiltonian, n: usize, x: i64, y: i64, z: ComplexEnergy) -> Result<f64> {
    let d = h.domain();
    let n = n as i64;
    h.index(x)?;
    h.index(y)?;
    if y - x < n {
        return Err(Error::InvalidArgument(format!("factorisation needs y - x >= n, got {}", y - x)));
    }
    let lambda = Interval::new(x + n, d.end)?;
    let full = Resolvent::new(h, z)?;
    let col = full.column(x)?;
    let gxy = col[(y - d.start) as usize];
    let gxe = col[(x + n - 1 - d.start) as usize];
    let inner = Resolvent::new(&h.restrict(lambda)?, z)?.entry(x + n, y)?;
    let product = gxe * inner;
    Ok((gxy - product).norm() / product.norm().max(1.0))
}

pub fn geometric_resolvent_residual(
    h: &BoxHamiltonian,
    n: usize,
    x: i64,
    y: i64,
    z: ComplexEnergy,
) -> Result<GeometricResiduals> {
    let lambda = Interval::new(x + n as i64, h.domain().end)?;
    let (res1, res2) = resolvent_identity_residuals(h, lambda, z)?;
    let res_factor = factorization_residual(h, n, x, y, z)?;
    Ok(GeometricResiduals { res1, res2, res_factor })
}

// ---------------------------------------------------------------------------
// Schur boundary block
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SchurBlock {
    pub inner: Interval,
    /// Diagonal of `B`, indexed over `Λ`.
    pub b: Vec<Complex64>,
    /// Max-entry mismatch between `P_Λ G P_Λ*` and `(H_Λ - z - B)^{-1}`,
    /// relative to the largest entry when that exceeds one.
    pub residual: f64,
}

/// Diagonal boundary block `B` alone; depends only on the potential outside `Λ`.
pub fn boundary_block(h: &BoxHamiltonian, inner: Interval, z: ComplexEnergy) -> Result<Vec<Complex64>> {
    let d = h.domain();
    if !d.contains_interval(&inner) {
        return Err(Error::BadSubbox { sub: inner, outer: d });
    }
    let mut b = vec![Complex64::new(0.0, 0.0); inner.len()];
    if inner.start > d.start {
        let left = h.restrict(Interval::new(d.start, inner.start - 1)?)?;
        let k = inner.start - 1;
        b[0] += Resolvent::new(&left, z)?.entry(k, k)?;
    }
    if inner.end < d.end {
        let right = h.restrict(Interval::new(inner.end + 1, d.end)?)?;
        let k = inner.end + 1;
        let last = inner.len() - 1;
        b[last] += Resolvent::new(&right, z)?.entry(k, k)?;
    }
    Ok(b)
}

pub fn schur_block(h: &BoxHamiltonian, inner: Interval, z: ComplexEnergy) -> Result<SchurBlock> {
    let b = boundary_block(h, inner, z)?;
    let sub = h.restrict(inner)?;
    let m = inner.len();
    let zc = z.value();
    let diag: Vec<Complex64> =
        sub.potential().iter().zip(&b).map(|(v, bb)| Complex64::new(*v, 0.0) - zc - bb).collect();
    let off = vec![Complex64::new(-1.0, 0.0); m - 1];
    let reduced = TridiagLu::factor(&off, &diag, &off)?;
    let full = Resolvent::new(h, z)?;
    let shift = (inner.start - h.domain().start) as usize;
    let mut worst = 0.0f64;
    let mut scale = 1.0f64;
    for j in 0..m {
        let g = full.column(inner.start + j as i64)?;
        let r = reduced.inverse_column(j);
        for i in 0..m {
            worst = worst.max((g[shift + i] - r[i]).norm());
            scale = scale.max(g[shift + i].norm());
        }
    }
    Ok(SchurBlock { inner, b, residual: worst / scale })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::assemble_box_hamiltonian;

    fn free(n: i64) -> BoxHamiltonian {
        BoxHamiltonian::free(Interval::new(0, n - 1).unwrap())
    }

    fn z(re: f64, im: f64) -> ComplexEnergy {
        ComplexEnergy::new(re, im).unwrap()
    }

    #[test]
    fn one_and_two_site_values() {
        let g = green_entry(&free(1), z(0.0, 1.0), 0, 0).unwrap();
        assert!((g - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        let g = green_entry(&free(2), z(0.0, 1.0), 0, 1).unwrap();
        assert!((g - Complex64::new(-0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn corner_identity_small_cases() {
        assert!(corner_determinant_check(&free(2), z(0.0, 1.0)).unwrap() < 1e-15);
        let h = assemble_box_hamiltonian(Interval::new(0, 0).unwrap(), &[0.3]).unwrap();
        assert!(corner_determinant_check(&h, z(0.1, 0.5)).unwrap() < 1e-15);
    }

    #[test]
    fn depleted_split_structure() {
        let h = free(4);
        let pair = depleted_split(&h, Interval::new(0, 1).unwrap()).unwrap();
        assert_eq!(pair.coupling, vec![(1, 2, 1.0), (2, 1, 1.0)]);
        assert_eq!(pair.reconstruct(), h.dense());
        let gl = pair.resolvent(z(0.2, 0.3)).unwrap();
        assert_eq!(gl.entry(0, 3).unwrap(), Complex64::new(0.0, 0.0));
        let whole = depleted_split(&h, h.domain()).unwrap();
        assert!(whole.coupling.is_empty());
        assert!(depleted_split(&h, Interval::new(2, 5).unwrap()).is_err());
    }

    #[test]
    fn trivial_split_has_zero_residuals() {
        let h = free(6);
        let (r1, r2) = resolvent_identity_residuals(&h, h.domain(), z(0.1, 0.2)).unwrap();
        assert_eq!((r1, r2), (0.0, 0.0));
    }

    #[test]
    fn schur_two_site_example() {
        let s = schur_block(&free(2), Interval::new(0, 0).unwrap(), z(0.0, 1.0)).unwrap();
        assert!((s.b[0] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
        assert!(s.residual < 1e-15);
        let s = schur_block(&free(5), Interval::new(0, 4).unwrap(), z(0.0, 1.0)).unwrap();
        assert!(s.b.iter().all(|b| *b == Complex64::new(0.0, 0.0)));
        let s = schur_block(&free(8), Interval::new(2, 5).unwrap(), z(0.3, 0.1)).unwrap();
        assert_eq!(s.b[1], Complex64::new(0.0, 0.0));
        assert_eq!(s.b[2], Complex64::new(0.0, 0.0));
        assert!(s.residual < 1e-12);
    }

    #[test]
    fn real_energy_at_eigenvalue_is_guarded() {
        // free 3-site box has eigenvalue 0
        assert!(matches!(green_entry(&free(3), ComplexEnergy::real(0.0), 0, 0), Err(Error::NearSingular { .. })));
    }
}
