//! Single-site profiles, coupling densities, the alloy potential and box
//! Hamiltonians `H = -Δ + V` with Dirichlet truncation.

use std::fmt;
use std::sync::OnceLock;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{gk15, TanhSinh};
use crate::rng;

/// Inclusive integer interval `[start, end]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    pub start: i64,
    pub end: i64,
}

impl Interval {
    pub fn new(start: i64, end: i64) -> Result<Self> {
        if end < start {
            return Err(Error::EmptyBox);
        }
        Ok(Self { start, end })
    }

    /// `[center - half_width, center + half_width]`.
    pub fn centered(center: i64, half_width: i64) -> Self {
        Self { start: center - half_width, end: center + half_width }
    }

    pub fn len(&self) -> usize {
        (self.end - self.start + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.end < self.start
    }

    pub fn contains(&self, x: i64) -> bool {
        self.start <= x && x <= self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> {
        self.start..=self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

// ---------------------------------------------------------------------------
// Single-site potential
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SingleSitePotential {
    values: Vec<f64>,
    theta: Vec<usize>,
    gap_width: usize,
}

impl SingleSitePotential {
    pub fn new(values: &[f64]) -> Result<Self> {
        if values.iter().all(|v| *v == 0.0) {
            return Err(Error::EmptySupport);
        }
        if values[0] == 0.0 || values[values.len() - 1] == 0.0 {
            return Err(Error::UnnormalizedSupport);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite single-site value".into()));
        }
        let theta: Vec<usize> = (0..values.len()).filter(|&k| values[k] != 0.0).collect();
        let gap_width = theta.windows(2).map(|w| w[1] - w[0] - 1).max().unwrap_or(0);
        Ok(Self { values: values.to_vec(), theta, gap_width })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Support span n.
    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn theta(&self) -> &[usize] {
        &self.theta
    }

    /// Longest run of consecutive integers in `{0..n-1}` missing from the support.
    pub fn gap_width(&self) -> usize {
        self.gap_width
    }

    pub fn is_connected(&self) -> bool {
        self.gap_width == 0
    }

    /// `u(k)`, zero outside `0..n`.
    pub fn at(&self, k: i64) -> f64 {
        if k < 0 || k >= self.values.len() as i64 {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    pub fn l1(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        let v: Vec<f64> = self.values.iter().map(|x| x * c).collect();
        Self::new(&v)
    }
}

pub fn build_single_site(values: &[f64]) -> Result<SingleSitePotential> {
    SingleSitePotential::new(values)
}

// ---------------------------------------------------------------------------
// Disorder densities
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Uniform,
    Triangular,
    Bump,
}

impl DensityKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "uniform" => Ok(Self::Uniform),
            "triangular" => Ok(Self::Triangular),
            "bump" => Ok(Self::Bump),
            other => Err(Error::InvalidDensity(format!("unknown kind `{other}`"))),
        }
    }
}

/// Compactly supported coupling density on `[-R, R]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DisorderDensity {
    kind: DensityKind,
    radius: f64,
}

fn unit_bump(t: f64) -> f64 {
    let q = 1.0 - t * t;
    if q <= 0.0 {
        0.0
    } else {
        (-1.0 / q).exp()
    }
}

const BUMP_CELLS: usize = 4096;

struct BumpTable {
    mass: f64,
    cdf: Vec<f64>,
}

fn bump_table() -> &'static BumpTable {
    static TABLE: OnceLock<BumpTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mass =
            TanhSinh::with_tol(1e-14).integrate(-1.0, 1.0, |n| unit_bump(n.x)).expect("bump normalisation").value;
        let h = 2.0 / BUMP_CELLS as f64;
        let mut cdf = Vec::with_capacity(BUMP_CELLS + 1);
        let mut acc = 0.0;
        cdf.push(0.0);
        let mut f = |t: f64| unit_bump(t) / mass;
        for i in 0..BUMP_CELLS {
            let a = -1.0 + i as f64 * h;
            acc += gk15(a, a + h, &mut f).0;
            cdf.push(acc);
        }
        let last = acc;
        cdf.iter_mut().for_each(|c| *c /= last);
        BumpTable { mass, cdf }
    })
}

impl DisorderDensity {
    pub fn new(kind: DensityKind, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidDensity(format!("radius must be positive, got {radius}")));
        }
        Ok(Self { kind, radius })
    }

    pub fn uniform(radius: f64) -> Result<Self> {
        Self::new(DensityKind::Uniform, radius)
    }

    pub fn triangular(radius: f64) -> Result<Self> {
        Self::new(DensityKind::Triangular, radius)
    }

    pub fn bump(radius: f64) -> Result<Self> {
        Self::new(DensityKind::Bump, radius)
    }

    pub fn kind(&self) -> DensityKind {
        self.kind
    }

    /// Support radius R.
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let r = self.radius;
        if x.abs() > r {
            return 0.0;
        }
        match self.kind {
            DensityKind::Uniform => 0.5 / r,
            DensityKind::Triangular => (r - x.abs()) / (r * r),
            DensityKind::Bump => unit_bump(x / r) / (r * bump_table().mass),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let r = self.radius;
        if x <= -r {
            return 0.0;
        }
        if x >= r {
            return 1.0;
        }
        match self.kind {
            DensityKind::Uniform => (x + r) / (2.0 * r),
            DensityKind::Triangular => {
                if x < 0.0 {
                    (r + x).powi(2) / (2.0 * r * r)
                } else {
                    1.0 - (r - x).powi(2) / (2.0 * r * r)
                }
            }
            DensityKind::Bump => {
                let t = x / r;
                let (i, t0, h) = bump_cell(t);
                bump_cell_cdf(i, t0, h, t)
            }
        }
    }

    /// Inverse CDF on `(0, 1)`.
    pub fn quantile(&self, p: f64) -> f64 {
        let r = self.radius;
        match self.kind {
            DensityKind::Uniform => r * (2.0 * p - 1.0),
            DensityKind::Triangular => {
                if p < 0.5 {
                    -r + r * (2.0 * p).sqrt()
                } else {
                    r - r * (2.0 * (1.0 - p)).sqrt()
                }
            }
            DensityKind::Bump => r * bump_quantile(p),
        }
    }

    /// ‖ρ‖_∞.
    pub fn sup_norm(&self) -> f64 {
        match self.kind {
            DensityKind::Uniform => 0.5 / self.radius,
            DensityKind::Triangular => 1.0 / self.radius,
            DensityKind::Bump => (-1.0f64).exp() / (self.radius * bump_table().mass),
        }
    }

    /// ‖ρ′‖ in L¹ when ρ is absolutely continuous.
    pub fn w11_norm(&self) -> Option<f64> {
        match self.kind {
            DensityKind::Uniform => None,
            // unimodal and symmetric: total variation is twice the peak
            DensityKind::Triangular | DensityKind::Bump => Some(2.0 * self.sup_norm()),
        }
    }

    /// ‖ρ‖ in L¹ (a probability density).
    pub fn l1_norm(&self) -> f64 {
        1.0
    }

    pub fn satisfies_a1(&self) -> bool {
        self.w11_norm().is_some()
    }

    pub fn satisfies_a2(&self) -> bool {
        true
    }

    /// Support ends plus interior points where ρ is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        let r = self.radius;
        match self.kind {
            DensityKind::Triangular => vec![-r, 0.0, r],
            _ => vec![-r, r],
        }
    }
}

fn bump_cell(t: f64) -> (usize, f64, f64) {
    let h = 2.0 / BUMP_CELLS as f64;
    let i = (((t + 1.0) / h) as usize).min(BUMP_CELLS - 1);
    (i, -1.0 + i as f64 * h, h)
}

// cubic Hermite interpolation of the tabulated CDF inside one cell
fn bump_cell_cdf(i: usize, t0: f64, h: f64, t: f64) -> f64 {
    let tab = bump_table();
    let (f0, f1) = (tab.cdf[i], tab.cdf[i + 1]);
    let d0 = unit_bump(t0) / tab.mass * h;
    let d1 = unit_bump(t0 + h) / tab.mass * h;
    let q = ((t - t0) / h).clamp(0.0, 1.0);
    let q2 = q * q;
    let q3 = q2 * q;
    f0 * (2.0 * q3 - 3.0 * q2 + 1.0) + d0 * (q3 - 2.0 * q2 + q) + f1 * (-2.0 * q3 + 3.0 * q2) + d1 * (q3 - q2)
}

fn bump_quantile(p: f64) -> f64 {
    let tab = bump_table();
    let i = match tab.cdf.binary_search_by(|c| c.partial_cmp(&p).unwrap()) {
        Ok(i) => return -1.0 + i as f64 * 2.0 / BUMP_CELLS as f64,
        Err(i) => i.clamp(1, BUMP_CELLS) - 1,
    };
    let h = 2.0 / BUMP_CELLS as f64;
    let t0 = -1.0 + i as f64 * h;
    let (mut lo, mut hi) = (t0, t0 + h);
    let mut t = 0.5 * (lo + hi);
    for _ in 0..60 {
        let g = bump_cell_cdf(i, t0, h, t) - p;
        if g.abs() < 1e-16 {
            break;
        }
        if g > 0.0 {
            hi = t;
        } else {
            lo = t;
        }
        let slope = unit_bump(t) / tab.mass;
        let newton = if slope > 0.0 { t - g / slope } else { f64::NAN };
        t = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if hi - lo < 1e-15 {
            break;
        }
    }
    t
}

// ---------------------------------------------------------------------------
// Couplings, potential, Hamiltonian
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct CouplingField {
    pub offsets: Interval,
    pub values: Vec<f64>,
    pub seed: u64,
    pub sample_index: u64,
}

impl CouplingField {
    pub fn from_values(offsets: Interval, values: Vec<f64>) -> Result<Self> {
        if values.len() != offsets.len() {
            return Err(Error::InvalidArgument("coupling count does not match offsets".into()));
        }
        Ok(Self { offsets, values, seed: 0, sample_index: 0 })
    }

    pub fn get(&self, k: i64) -> f64 {
        self.values[(k - self.offsets.start) as usize]
    }

    pub fn set(&mut self, k: i64, value: f64) {
        let i = (k - self.offsets.start) as usize;
        self.values[i] = value;
    }
}

pub fn sample_couplings(density: &DisorderDensity, offsets: Interval, seed: u64, sample_index: u64) -> CouplingField {
    sample_couplings_attempt(density, offsets, seed, sample_index, 0)
}

/// Fresh draw for the `attempt`-th resample of a sample index.
pub fn sample_couplings_attempt(
    density: &DisorderDensity,
    offsets: Interval,
    seed: u64,
    sample_index: u64,
    attempt: u32,
) -> CouplingField {
    let values = rng::uniforms(seed, sample_index, attempt, offsets.start, offsets.len())
        .into_iter()
        .map(|p| density.quantile(p))
        .collect();
    CouplingField { offsets, values, seed, sample_index }
}

/// Coupling indices that influence the potential on `domain`.
pub fn coupling_range(u: &SingleSitePotential, domain: Interval) -> Interval {
    Interval { start: domain.start - u.n() as i64 + 1, end: domain.end }
}

pub fn alloy_potential(u: &SingleSitePotential, couplings: &CouplingField, domain: Interval) -> Result<Vec<f64>> {
    let need = coupling_range(u, domain);
    if !couplings.offsets.contains_interval(&need) {
        return Err(Error::InsufficientCouplings { have: couplings.offsets, need });
    }
    Ok(domain.sites().map(|x| u.theta().iter().map(|&j| couplings.get(x - j as i64) * u.values()[j]).sum()).collect())
}

/// Tridiagonal `-Δ + V` on a finite interval, hopping `-1`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxHamiltonian {
    domain: Interval,
    potential: Vec<f64>,
}

pub fn assemble_box_hamiltonian(domain: Interval, potential: &[f64]) -> Result<BoxHamiltonian> {
    if domain.is_empty() {
        return Err(Error::EmptyBox);
    }
    if potential.len() != domain.len() {
        return Err(Error::InvalidArgument(format!(
            "potential has {} entries for a box of {} sites",
            potential.len(),
            domain.len()
        )));
    }
    Ok(BoxHamiltonian { domain, potential: potential.to_vec() })
}

impl BoxHamiltonian {
    /// Couplings drawn for `sample_index` (and resample `attempt`) mapped to a box.
    pub fn sample(
        u: &SingleSitePotential,
        density: &DisorderDensity,
        domain: Interval,
        seed: u64,
        sample_index: u64,
        attempt: u32,
    ) -> Self {
        let c = sample_couplings_attempt(density, coupling_range(u, domain), seed, sample_index, attempt);
        let v = alloy_potential(u, &c, domain).expect("coupling range covers the box");
        Self { domain, potential: v }
    }

    pub fn free(domain: Interval) -> Self {
        Self { domain, potential: vec![0.0; domain.len()] }
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn dim(&self) -> usize {
        self.potential.len()
    }

    pub fn potential(&self) -> &[f64] {
        &self.potential
    }

    pub fn index(&self, site: i64) -> Result<usize> {
        if self.domain.contains(site) {
            Ok((site - self.domain.start) as usize)
        } else {
            Err(Error::SiteOutsideBox { site, domain: self.domain })
        }
    }

    /// Row-sum norm, an upper bound on the spectral norm.
    pub fn norm_bound(&self) -> f64 {
        let hop = if self.dim() > 1 { 2.0 } else { 0.0 };
        self.potential.iter().fold(0.0f64, |m, v| m.max(v.abs())) + hop
    }

    pub fn restrict(&self, sub: Interval) -> Result<Self> {
        if !self.domain.contains_interval(&sub) {
            return Err(Error::BadSubbox { sub, outer: self.domain });
        }
        let a = (sub.start - self.domain.start) as usize;
        Ok(Self { domain: sub, potential: self.potential[a..a + sub.len()].to_vec() })
    }

    pub fn with_potential(&self, potential: Vec<f64>) -> Result<Self> {
        assemble_box_hamiltonian(self.domain, &potential)
    }

    pub fn dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.potential[i]
            } else if i.abs_diff(j) == 1 {
                -1.0
            } else {
                0.0
            }
        })
    }

    /// `H v`.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut s = self.potential[i] * v[i];
                if i > 0 {
                    s -= v[i - 1];
                }
                if i + 1 < n {
                    s -= v[i + 1];
                }
                s
            })
            .collect()
    }
}

/// Deterministic bound on ‖H_ω‖ over all realizations.
pub fn hamiltonian_norm_bound(u: &SingleSitePotential, density: &DisorderDensity) -> f64 {
    2.0 + density.radius() * u.l1()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_site_examples() {
        let u = build_single_site(&[1.0]).unwrap();
        assert_eq!((u.n(), u.theta(), u.gap_width()), (1, &[0usize][..], 0));
        let u = build_single_site(&[1.0, 0.0, 2.0]).unwrap();
        assert_eq!((u.n(), u.theta(), u.gap_width()), (3, &[0usize, 2][..], 1));
        let u = build_single_site(&[3.0, 0.0, 0.0, -1.0]).unwrap();
        assert_eq!((u.n(), u.theta(), u.gap_width()), (4, &[0usize, 3][..], 2));
        assert_eq!(build_single_site(&[0.0, 0.0]), Err(Error::EmptySupport));
        assert_eq!(build_single_site(&[0.0, 1.0]), Err(Error::UnnormalizedSupport));
        assert_eq!(build_single_site(&[1.0, 0.0]), Err(Error::UnnormalizedSupport));
    }

    #[test]
    fn density_norms() {
        let d = DisorderDensity::uniform(4.0).unwrap();
        assert_eq!(d.sup_norm(), 0.125);
        assert_eq!(d.w11_norm(), None);
        let d = DisorderDensity::triangular(4.0).unwrap();
        assert_eq!(d.sup_norm(), 0.25);
        assert_eq!(d.w11_norm(), Some(0.5));
        let d = DisorderDensity::bump(2.0).unwrap();
        assert!((d.sup_norm() - d.pdf(0.0)).abs() < 1e-15);
    }

    #[test]
    fn densities_normalised_by_quadrature() {
        for d in [
            DisorderDensity::uniform(1.5).unwrap(),
            DisorderDensity::triangular(1.5).unwrap(),
            DisorderDensity::bump(1.5).unwrap(),
        ] {
            let bp = d.breakpoints();
            let q = TanhSinh::with_tol(1e-13).integrate_panels(&bp, |_, n| d.pdf(n.x)).unwrap();
            assert!((q.value - 1.0).abs() < 1e-10, "{:?}: {}", d.kind(), q.value);
        }
    }

    #[test]
    fn bump_derivative_norm_by_quadrature() {
        let d = DisorderDensity::bump(3.0).unwrap();
        let h = 1e-6;
        let q = TanhSinh::with_tol(1e-9)
            .integrate_panels(&[-3.0, 0.0, 3.0], |_, n| ((d.pdf(n.x + h) - d.pdf(n.x - h)) / (2.0 * h)).abs())
            .unwrap();
        assert!((q.value - d.w11_norm().unwrap()).abs() < 1e-6);
    }

    #[test]
    fn quantile_inverts_cdf() {
        for d in [
            DisorderDensity::uniform(2.0).unwrap(),
            DisorderDensity::triangular(2.0).unwrap(),
            DisorderDensity::bump(2.0).unwrap(),
        ] {
            for p in [1e-6, 0.01, 0.2, 0.5, 0.73, 0.999] {
                let x = d.quantile(p);
                assert!((d.cdf(x) - p).abs() < 1e-10, "{:?} p={p}", d.kind());
            }
        }
    }

    #[test]
    fn convolution_examples() {
        let u = build_single_site(&[1.0]).unwrap();
        let c = CouplingField::from_values(Interval::new(3, 3).unwrap(), vec![5.0]).unwrap();
        assert_eq!(alloy_potential(&u, &c, Interval::new(3, 3).unwrap()).unwrap(), vec![5.0]);

        let u = build_single_site(&[1.0, 2.0]).unwrap();
        let c = CouplingField::from_values(Interval::new(-1, 0).unwrap(), vec![1.0, 3.0]).unwrap();
        assert_eq!(alloy_potential(&u, &c, Interval::new(0, 0).unwrap()).unwrap(), vec![5.0]);

        let u = build_single_site(&[1.0, -1.0]).unwrap();
        let c = CouplingField::from_values(Interval::new(-1, 5).unwrap(), vec![0.7; 7]).unwrap();
        let v = alloy_potential(&u, &c, Interval::new(0, 5).unwrap()).unwrap();
        assert!(v.iter().all(|x| *x == 0.0));

        let short = CouplingField::from_values(Interval::new(0, 5).unwrap(), vec![0.0; 6]).unwrap();
        assert!(matches!(
            alloy_potential(&u, &short, Interval::new(0, 5).unwrap()),
            Err(Error::InsufficientCouplings { .. })
        ));
    }

    #[test]
    fn assembly_examples() {
        let h = assemble_box_hamiltonian(Interval::new(0, 2).unwrap(), &[0.0; 3]).unwrap();
        let m = h.dense();
        assert_eq!(m[(0, 1)], -1.0);
        assert_eq!(m[(1, 2)], -1.0);
        assert_eq!(m[(0, 2)], 0.0);
        assert_eq!(m[(1, 1)], 0.0);
        let h = assemble_box_hamiltonian(Interval::new(5, 5).unwrap(), &[7.0]).unwrap();
        assert_eq!(h.dense()[(0, 0)], 7.0);
        assert!(assemble_box_hamiltonian(Interval { start: 1, end: 0 }, &[]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_supported() {
        let d = DisorderDensity::uniform(1.0).unwrap();
        let off = Interval::new(-20, 20).unwrap();
        let a = sample_couplings(&d, off, 11, 4);
        let b = sample_couplings(&d, off, 11, 4);
        assert_eq!(a, b);
        assert!(a.values.iter().all(|v| v.abs() <= 1.0));
    }

    #[test]
    fn uniform_sample_mean_clt() {
        let d = DisorderDensity::uniform(10.0).unwrap();
        let c = sample_couplings(&d, Interval::new(0, 99_999).unwrap(), 2024, 0);
        let mean = c.values.iter().sum::<f64>() / 1e5;
        let se = 10.0 / (3.0e5f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean}");
    }
}
