//! Tridiagonal kernels: complex LU with partial pivoting, the three-term
//! determinant recurrence, Sturm counts and the implicit QL eigensolver.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Smallest admissible |pivot| relative to the row-sum norm.
pub const PIVOT_GUARD: f64 = 1e-13;

/// LU factorisation `P A = L U` of a complex tridiagonal matrix; `U` has
/// two superdiagonals after row interchanges.
#[derive(Debug, Clone)]
pub struct TridiagLu {
    dl: Vec<Complex64>,
    d: Vec<Complex64>,
    du: Vec<Complex64>,
    du2: Vec<Complex64>,
    swapped: Vec<bool>,
    norm: f64,
    min_pivot_ratio: f64,
}

impl TridiagLu {
    /// `sub[i] = A[i+1][i]`, `sup[i] = A[i][i+1]`.
    pub fn factor(sub: &[Complex64], diag: &[Complex64], sup: &[Complex64]) -> Result<Self> {
        let n = diag.len();
        assert!(n >= 1 && sub.len() + 1 == n && sup.len() + 1 == n);
        let mut norm = 0.0f64;
        for i in 0..n {
            let mut row = diag[i].norm();
            if i > 0 {
                row += sub[i - 1].norm();
            }
            if i + 1 < n {
                row += sup[i].norm();
            }
            norm = norm.max(row);
        }
        let mut dl = sub.to_vec();
        let mut d = diag.to_vec();
        let mut du = sup.to_vec();
        let mut du2 = vec![Complex64::new(0.0, 0.0); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if d[i].l1_norm() >= dl[i].l1_norm() {
                if d[i].l1_norm() != 0.0 {
                    let fact = dl[i] / d[i];
                    dl[i] = fact;
                    d[i + 1] -= fact * du[i];
                }
            } else {
                let fact = d[i] / dl[i];
                d[i] = dl[i];
                dl[i] = fact;
                let tmp = du[i];
                du[i] = d[i + 1];
                d[i + 1] = tmp - fact * d[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        let min_pivot = d.iter().fold(f64::INFINITY, |m, p| m.min(p.norm()));
        let min_pivot_ratio = if norm > 0.0 { min_pivot / norm } else { 0.0 };
        if !(min_pivot_ratio >= PIVOT_GUARD) {
            return Err(Error::NearSingular { ratio: min_pivot_ratio });
        }
        Ok(Self { dl, d, du, du2, swapped, norm, min_pivot_ratio })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    pub fn min_pivot_ratio(&self) -> f64 {
        self.min_pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.dim();
        assert_eq!(b.len(), n);
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                b.swap(i, i + 1);
            }
            let bi = b[i];
            b[i + 1] -= self.dl[i] * bi;
        }
        b[n - 1] /= self.d[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.d[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.d[i];
        }
    }

    /// Column `j` of the inverse.
    pub fn inverse_column(&self, j: usize) -> Vec<Complex64> {
        let mut e = vec![Complex64::new(0.0, 0.0); self.dim()];
        e[j] = Complex64::new(1.0, 0.0);
        self.solve_in_place(&mut e);
        e
    }

    pub fn determinant(&self) -> Complex64 {
        let sign = if self.swapped.iter().filter(|s| **s).count() % 2 == 0 { 1.0 } else { -1.0 };
        self.d.iter().fold(Complex64::new(sign, 0.0), |acc, p| acc * p)
    }
}

/// Determinant by the continuant recurrence `f_k = d_k f_{k-1} - b_{k-1} c_{k-1} f_{k-2}`.
pub fn determinant_recurrence(sub: &[Complex64], diag: &[Complex64], sup: &[Complex64]) -> Complex64 {
    let mut prev = Complex64::new(1.0, 0.0);
    let mut cur = diag[0];
    for k in 1..diag.len() {
        let next = diag[k] * cur - sub[k - 1] * sup[k - 1] * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Number of eigenvalues strictly below `x` of the real symmetric tridiagonal
/// matrix with diagonal `diag` and off-diagonal `off`.
pub fn sturm_count(diag: &[f64], off: &[f64], x: f64) -> usize {
    let tiny = f64::MIN_POSITIVE.sqrt();
    let mut count = 0;
    let mut q = diag[0] - x;
    if q < 0.0 {
        count += 1;
    }
    for i in 1..diag.len() {
        if q.abs() < tiny {
            q = -tiny;
        }
        q = diag[i] - x - off[i - 1] * off[i - 1] / q;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

/// Eigenvalues (ascending) and orthonormal eigenvectors, vector `i` stored in
/// `vectors[i*n..(i+1)*n]`.
pub fn symmetric_tridiagonal_eigen(diag: &[f64], off: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(&off[..n - 1]);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::ConvergenceFailure);
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (1.0, 1.0, 0.0);
            let mut deflated = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    deflated = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                let (lo, hi) = z.split_at_mut((i + 1) * n);
                let zi = &mut lo[i * n..(i + 1) * n];
                let zi1 = &mut hi[..n];
                for k in 0..n {
                    let f = zi1[k];
                    zi1[k] = s * zi[k] + c * f;
                    zi[k] = c * zi[k] - s * f;
                }
            }
            if deflated {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| d[*a].partial_cmp(&d[*b]).unwrap());
    let values = order.iter().map(|&i| d[i]).collect();
    let mut vectors = Vec::with_capacity(n * n);
    for &i in &order {
        vectors.extend_from_slice(&z[i * n..(i + 1) * n]);
    }
    Ok((values, vectors))
}
