//! Finite-volume localization diagnostics: spectra, `(m,E)`-regularity of
//! boxes, two-box regularity probabilities, Wegner counts and eigenfunction
//! decay rates.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fmm_mc::{EstimatorKind, MomentSampler};
use crate::greens::{ComplexEnergy, Resolvent};
use crate::model::{BoxHamiltonian, DisorderDensity, Interval, SingleSitePotential};
use crate::par;
use crate::stats::{mean_and_se, median_ci, quantile_sorted, wilson_interval, Z95};
use crate::tridiag::{sturm_count, symmetric_tridiagonal_eigen};

const EIGEN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenSystem {
    pub domain: Interval,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<Vec<f64>>,
}

impl EigenSystem {
    /// `G(E; a, b)` by spectral expansion; infinite on the spectrum.
    pub fn green(&self, e: f64, a: usize, b: usize) -> f64 {
        self.eigenvalues.iter().zip(&self.eigenvectors).map(|(ek, v)| v[a] * v[b] / (ek - e)).sum()
    }

    pub fn distance_to_spectrum(&self, e: f64) -> f64 {
        let i = self.eigenvalues.partition_point(|v| *v < e);
        let above = self.eigenvalues.get(i).map_or(f64::INFINITY, |v| v - e);
        let below = if i > 0 { e - self.eigenvalues[i - 1] } else { f64::INFINITY };
        above.min(below)
    }
}

pub fn eigensolve_box(h: &BoxHamiltonian) -> Result<EigenSystem> {
    let n = h.dim();
    let off = vec![-1.0; n.saturating_sub(1)];
    let (values, flat) = symmetric_tridiagonal_eigen(h.potential(), &off)?;
    let vectors: Vec<Vec<f64>> = flat.chunks(n).map(<[f64]>::to_vec).collect();
    let scale = h.norm_bound().max(1.0);
    for (e, v) in values.iter().zip(&vectors) {
        let hv = h.apply(v);
        let r = hv.iter().zip(v).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt();
        if r > EIGEN_TOL * scale {
            return Err(Error::ConvergenceFailure);
        }
    }
    for i in 0..n {
        for j in i..n {
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > EIGEN_TOL {
                return Err(Error::ConvergenceFailure);
            }
        }
    }
    Ok(EigenSystem { domain: h.domain(), eigenvalues: values, eigenvectors: vectors })
}

// ---------------------------------------------------------------------------
// Regularity
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegularityVerdict {
    pub center: i64,
    pub half_width: i64,
    pub energy: f64,
    pub mass: f64,
    pub regular: bool,
    /// `max(|G(E;x,x-L)|, |G(E;x,x+L)|)`, infinite when the solve is singular.
    pub boundary_sup: f64,
}

fn center_and_half_width(domain: Interval) -> (i64, i64) {
    let l = (domain.len() as i64 - 1) / 2;
    (domain.start + l, l)
}

/// `(m,E)`-regularity of a box, read as centred at its midpoint with the two
/// endpoints as boundary.
pub fn regularity_check(h: &BoxHamiltonian, e: f64, m: f64) -> RegularityVerdict {
    let d = h.domain();
    let (center, half_width) = center_and_half_width(d);
    let boundary_sup = Resolvent::new(h, ComplexEnergy::real(e))
        .and_then(|r| r.column(center))
        .map(|col| col[0].norm().max(col[col.len() - 1].norm()))
        .unwrap_or(f64::INFINITY);
    let regular = boundary_sup <= (-m * half_width as f64).exp();
    RegularityVerdict { center, half_width, energy: e, mass: m, regular, boundary_sup }
}

/// Constants entering the lower bound `1 - K` on the two-box event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct TwoBoxConstants {
    pub c: f64,
    pub mu: f64,
    pub s: f64,
    pub n_prime: u32,
    pub c_prime: f64,
}

impl TwoBoxConstants {
    pub fn wegner_constant(&self) -> f64 {
        4.0 * self.c_prime / std::f64::consts::PI
    }

    pub fn k(&self, interval_len: f64, l: i64) -> f64 {
        let side = (2 * l + 1) as f64;
        8.0 * (self.c * interval_len + self.wegner_constant() * side * side)
            * (-self.mu * self.s * l as f64 / (8.0 * self.n_prime as f64)).exp()
    }
}

#[derive(Debug, Clone, Serialize, serde::Deserialize)]
pub struct TwoBoxRequest {
    pub half_width: i64,
    pub x: i64,
    pub y: i64,
    pub interval: (f64, f64),
    pub mass: f64,
    /// Defaults to `e^{-2mL}`, widened so the grid has at most `MAX_CELLS` cells.
    pub grid_step: Option<f64>,
    pub n_samples: u64,
    pub seed: u64,
    pub constants: Option<TwoBoxConstants>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TwoBoxResult {
    pub p_hat: f64,
    pub std_error: f64,
    pub wilson: (f64, f64),
    pub successes: u64,
    pub n_samples: u64,
    pub grid_step: f64,
    /// Realizations counted as failures only because bisection ran out.
    pub undecided: u64,
    pub paper_bound: Option<f64>,
    /// Single-energy regularity rates of the two boxes, for point intervals.
    pub box_rates: Option<(f64, f64)>,
}

pub const MAX_CELLS: f64 = 1e5;
const MAX_BISECTIONS: u32 = 40;

enum CellOutcome {
    Covered,
    Failed,
    Undecided,
}

struct BoxProbe {
    sys: EigenSystem,
    center: usize,
    threshold: f64,
}

impl BoxProbe {
    fn new(h: &BoxHamiltonian, threshold: f64) -> Result<Self> {
        let (c, _) = center_and_half_width(h.domain());
        Ok(Self { sys: eigensolve_box(h)?, center: (c - h.domain().start) as usize, threshold })
    }

    fn boundary_sup(&self, e: f64) -> f64 {
        let last = self.sys.eigenvalues.len() - 1;
        self.sys.green(e, self.center, 0).abs().max(self.sys.green(e, self.center, last).abs())
    }

    fn regular_at(&self, e: f64) -> bool {
        self.sys.distance_to_spectrum(e) > 0.0 && self.boundary_sup(e) <= self.threshold
    }

    /// Regular on all of `[c-h, c+h]`, via `|G(E)-G(c)| ≤ |E-c|·‖G(E)‖·‖G(c)‖`.
    fn certified(&self, c: f64, h: f64) -> bool {
        let d = self.sys.distance_to_spectrum(c);
        d > h && self.boundary_sup(c) + h / (d * (d - h)) <= self.threshold
    }
}

fn cover_cell(bx: &BoxProbe, by: &BoxProbe, c: f64, h: f64, depth: u32) -> CellOutcome {
    if bx.certified(c, h) || by.certified(c, h) {
        return CellOutcome::Covered;
    }
    if !bx.regular_at(c) && !by.regular_at(c) {
        return CellOutcome::Failed;
    }
    if h == 0.0 || depth >= MAX_BISECTIONS {
        return CellOutcome::Undecided;
    }
    let q = h / 2.0;
    match cover_cell(bx, by, c - q, q, depth + 1) {
        CellOutcome::Covered => cover_cell(bx, by, c + q, q, depth + 1),
        other => other,
    }
}

/// Monte-Carlo frequency of "for every `E` in `I`, one of the boxes
/// `Λ_{x,L}`, `Λ_{y,L}` is `(m,E)`-regular".
pub fn two_box_regularity_probability(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    req: &TwoBoxRequest,
) -> Result<TwoBoxResult> {
    let l = req.half_width;
    let required = 2 * l + u.n() as i64;
    if (req.x - req.y).abs() < required {
        return Err(Error::SeparationViolated { x: req.x, y: req.y, required });
    }
    let (a, b) = req.interval;
    if !(a <= b) || !a.is_finite() || !b.is_finite() {
        return Err(Error::InvalidArgument(format!("bad energy interval [{a}, {b}]")));
    }
    if req.n_samples == 0 {
        return Err(Error::InvalidArgument("need at least one sample".into()));
    }
    let threshold = (-req.mass * l as f64).exp();
    let len = b - a;
    let step = req.grid_step.unwrap_or((-2.0 * req.mass * l as f64).exp()).max(len / MAX_CELLS);
    let cells = if len > 0.0 { (len / step).ceil().max(1.0) as u64 } else { 1 };
    let h = len / (2.0 * cells as f64);
    let bx = Interval::centered(req.x, l);
    let by = Interval::centered(req.y, l);
    let whole = Interval::new(bx.start.min(by.start), bx.end.max(by.end))?;

    let rows = par::try_map_range(0..req.n_samples, |i| {
        let h_all = BoxHamiltonian::sample(u, rho, whole, req.seed, i, 0);
        let px = BoxProbe::new(&h_all.restrict(bx)?, threshold)?;
        let py = BoxProbe::new(&h_all.restrict(by)?, threshold)?;
        let mut outcome = CellOutcome::Covered;
        for k in 0..cells {
            let c = a + (2 * k + 1) as f64 * h;
            match cover_cell(&px, &py, c, h, 0) {
                CellOutcome::Covered => {}
                other => {
                    outcome = other;
                    break;
                }
            }
        }
        let rates = (px.regular_at(a), py.regular_at(a));
        Ok((outcome, rates))
    })?;

    let mut successes = 0;
    let mut undecided = 0;
    let (mut rx, mut ry) = (0u64, 0u64);
    for (o, (gx, gy)) in &rows {
        match o {
            CellOutcome::Covered => successes += 1,
            CellOutcome::Undecided => undecided += 1,
            CellOutcome::Failed => {}
        }
        rx += u64::from(*gx);
        ry += u64::from(*gy);
    }
    let n = req.n_samples as f64;
    let p_hat = successes as f64 / n;
    Ok(TwoBoxResult {
        p_hat,
        std_error: (p_hat * (1.0 - p_hat) / n).sqrt(),
        wilson: wilson_interval(successes, req.n_samples),
        successes,
        n_samples: req.n_samples,
        grid_step: if len > 0.0 { 2.0 * h } else { 0.0 },
        undecided,
        paper_bound: req.constants.map(|k| 1.0 - k.k(len, l)),
        box_rates: (len == 0.0).then(|| (rx as f64 / n, ry as f64 / n)),
    })
}

// ---------------------------------------------------------------------------
// Wegner
// ---------------------------------------------------------------------------

/// Number of eigenvalues of the box in `[a, b)`.
pub fn trace_count(h: &BoxHamiltonian, a: f64, b: f64) -> usize {
    let off = vec![-1.0; h.dim().saturating_sub(1)];
    sturm_count(h.potential(), &off, b) - sturm_count(h.potential(), &off, a)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WegnerPoint {
    pub a: f64,
    pub b: f64,
    pub lhs: f64,
    pub std_error: f64,
    pub rhs: f64,
    pub violated: bool,
}

/// `C_W |b-a|^{s/N'} |Λ|` with `C_W = 4C'/π`.
pub fn wegner_rhs(a: f64, b: f64, sites: usize, s: f64, n_prime: u32, c_prime: f64) -> f64 {
    4.0 * c_prime / std::f64::consts::PI * (b - a).powf(s / n_prime as f64) * sites as f64
}

/// Mean eigenvalue counts for several intervals from shared realizations.
#[allow(clippy::too_many_arguments)]
pub fn wegner_sweep(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    intervals: &[(f64, f64)],
    n_samples: u64,
    seed: u64,
    s: f64,
    n_prime: u32,
    c_prime: f64,
) -> Result<Vec<WegnerPoint>> {
    if let Some(&(a, b)) = intervals.iter().find(|(a, b)| !(a < b)) {
        return Err(Error::InvalidArgument(format!("empty interval [{a}, {b}]")));
    }
    if n_samples == 0 || n_prime == 0 {
        return Err(Error::InvalidArgument("need samples and N' >= 1".into()));
    }
    let counts = par::map_range(0..n_samples, |i| {
        let h = BoxHamiltonian::sample(u, rho, domain, seed, i, 0);
        intervals.iter().map(|&(a, b)| trace_count(&h, a, b) as f64).collect::<Vec<_>>()
    });
    Ok(intervals
        .iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let col: Vec<f64> = counts.iter().map(|c| c[k]).collect();
            let (lhs, std_error) = mean_and_se(&col);
            let rhs = wegner_rhs(a, b, domain.len(), s, n_prime, c_prime);
            WegnerPoint { a, b, lhs, std_error, rhs, violated: lhs > rhs }
        })
        .collect())
}

#[allow(clippy::too_many_arguments)]
pub fn wegner_statistic(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    a: f64,
    b: f64,
    n_samples: u64,
    seed: u64,
    s: f64,
    n_prime: u32,
    c_prime: f64,
) -> Result<WegnerPoint> {
    Ok(wegner_sweep(u, rho, domain, &[(a, b)], n_samples, seed, s, n_prime, c_prime)?.remove(0))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationCell {
    pub energy: f64,
    pub epsilon: f64,
    pub site: i64,
    pub mean: f64,
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WegnerCalibration {
    /// Largest `mean + 3·se` over the calibration grid.
    pub c_prime: f64,
    pub cells: Vec<CalibrationCell>,
}

/// Empirical `C' ≥ E|G(E+iε;x,x)|^{s/N'}` over energies, widths and five
/// sites spread across the box.
#[allow(clippy::too_many_arguments)]
pub fn calibrate_wegner_constant(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    energies: &[f64],
    epsilons: &[f64],
    s: f64,
    n_prime: u32,
    n_samples: u64,
    seed: u64,
) -> Result<WegnerCalibration> {
    let exponent = s / n_prime as f64;
    let last = domain.len() as i64 - 1;
    let mut sites: Vec<i64> = (0..5).map(|k| domain.start + k * last / 4).collect();
    sites.dedup();
    let mut cells = Vec::new();
    for &energy in energies {
        for &epsilon in epsilons {
            let z = ComplexEnergy::new(energy, epsilon)?;
            for &site in &sites {
                let sampler = MomentSampler { u, rho, domain, z, source: site, targets: vec![site], exponent, seed };
                let block = sampler.sample(0..n_samples)?;
                let est = sampler.estimates(&block, EstimatorKind::PlainMean)?.remove(0);
                cells.push(CalibrationCell { energy, epsilon, site, mean: est.mean, std_error: est.std_error });
            }
        }
    }
    let c_prime = cells.iter().map(|c| c.mean + 3.0 * c.std_error).fold(0.0, f64::max);
    Ok(WegnerCalibration { c_prime, cells })
}

// ---------------------------------------------------------------------------
// Eigenfunction decay
// ---------------------------------------------------------------------------

/// Sites this close to the localization centre are left out of the fit.
pub const NEAR_FIELD: usize = 5;
const AMPLITUDE_FLOOR: f64 = 1e-12;

/// Inverse localization length: minus the least-squares slope of
/// `ln|ψ(x)|` against `|x - c|`, `c = argmax |ψ|`.
pub fn fit_eigenvector_decay(psi: &[f64]) -> Option<f64> {
    let c = psi.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map(|(i, _)| i)?;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, v) in psi.iter().enumerate() {
        let dist = i.abs_diff(c);
        if dist > NEAR_FIELD && v.abs() > AMPLITUDE_FLOOR {
            xs.push(dist as f64);
            ys.push(v.abs().ln());
        }
    }
    crate::stats::linear_fit(&xs, &ys).ok().map(|f| -f.slope)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EigenDecayStats {
    pub n_realizations: usize,
    pub n_fits: usize,
    pub median: f64,
    pub q25: f64,
    pub q75: f64,
    /// 95% interval for the median, from the per-realization medians.
    pub median_ci: (f64, f64),
    pub realization_medians: Vec<f64>,
}

/// Pools fitted rates over every eigenvector of every system.
pub fn decay_stats_from_systems(systems: &[EigenSystem]) -> Result<EigenDecayStats> {
    let mut all = Vec::new();
    let mut medians = Vec::new();
    for sys in systems {
        let mut rates: Vec<f64> = sys.eigenvectors.iter().filter_map(|v| fit_eigenvector_decay(v)).collect();
        if rates.is_empty() {
            continue;
        }
        rates.sort_by(f64::total_cmp);
        medians.push(quantile_sorted(&rates, 0.5));
        all.extend(rates);
    }
    if all.is_empty() {
        return Err(Error::DegenerateDesign);
    }
    all.sort_by(f64::total_cmp);
    let mut sorted_medians = medians.clone();
    sorted_medians.sort_by(f64::total_cmp);
    let median = quantile_sorted(&all, 0.5);
    let median_ci = if sorted_medians.len() >= 6 {
        median_ci(&sorted_medians)
    } else {
        // Too few realizations for order statistics: normal interval on
        // the mean of the realization medians.
        let (m, se) = mean_and_se(&sorted_medians);
        (m - Z95 * se, m + Z95 * se)
    };
    Ok(EigenDecayStats {
        n_realizations: systems.len(),
        n_fits: all.len(),
        median,
        q25: quantile_sorted(&all, 0.25),
        q75: quantile_sorted(&all, 0.75),
        median_ci,
        realization_medians: medians,
    })
}

pub fn eigenfunction_decay_stats(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    n_samples: u64,
    seed: u64,
) -> Result<EigenDecayStats> {
    let (_, hw) = center_and_half_width(domain);
    if hw < 50 * u.n() as i64 {
        return Err(Error::InvalidArgument(format!("box half-width {hw} below 50·n")));
    }
    let systems =
        par::try_map_range(0..n_samples, |i| eigensolve_box(&BoxHamiltonian::sample(u, rho, domain, seed, i, 0)))?;
    decay_stats_from_systems(&systems)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn free(n: i64) -> BoxHamiltonian {
        BoxHamiltonian::free(Interval::new(0, n - 1).unwrap())
    }

    #[test]
    fn three_site_laplacian() {
        let sys = eigensolve_box(&free(3)).unwrap();
        let r2 = 2f64.sqrt();
        for (got, want) in sys.eigenvalues.iter().zip([-r2, 0.0, r2]) {
            assert_abs_diff_eq!(*got, want, epsilon = 1e-12);
        }
    }

    #[test]
    fn single_site_box() {
        let h = BoxHamiltonian::free(Interval::new(4, 4).unwrap()).with_potential(vec![7.0]).unwrap();
        let sys = eigensolve_box(&h).unwrap();
        assert_eq!(sys.eigenvalues, vec![7.0]);
        assert_eq!(sys.eigenvectors[0].iter().map(|v| v.abs()).collect::<Vec<_>>(), vec![1.0]);
    }

    #[test]
    fn gershgorin_disks_hold() {
        let pot = vec![10.0, -9.0, 15.0, 5.5, -20.0];
        let h = free(5).with_potential(pot.clone()).unwrap();
        let sys = eigensolve_box(&h).unwrap();
        for e in sys.eigenvalues {
            assert!(pot.iter().any(|v| (e - v).abs() <= 2.0 + 1e-12));
        }
    }

    #[test]
    fn far_energy_is_regular_and_eigenvalue_is_not() {
        let h = free(21).with_potential((0..21).map(|i| (i as f64 * 0.7).sin()).collect()).unwrap();
        let v = regularity_check(&h, 50.0, 0.05);
        assert!(v.regular && v.boundary_sup < 1.0 / 40.0);
        let e = eigensolve_box(&h).unwrap().eigenvalues[10];
        assert!(!regularity_check(&h, e, 0.05).regular);
    }

    #[test]
    fn regularity_monotone_in_mass() {
        let h = free(15).with_potential((0..15).map(|i| 3.0 * (i as f64 * 1.3).cos()).collect()).unwrap();
        for k in 0..20 {
            let e = -3.0 + 0.3 * k as f64;
            let mut prev = true;
            for m in [0.0, 0.05, 0.1, 0.2, 0.5] {
                let now = regularity_check(&h, e, m).regular;
                assert!(prev || !now);
                prev = now;
            }
        }
    }

    #[test]
    fn eigen_expansion_matches_solve() {
        let h = free(11).with_potential((0..11).map(|i| (i as f64).sqrt()).collect()).unwrap();
        let sys = eigensolve_box(&h).unwrap();
        let g = Resolvent::new(&h, ComplexEnergy::real(0.37)).unwrap().entry(5, 10).unwrap();
        assert_abs_diff_eq!(sys.green(0.37, 5, 10), g.re, epsilon = 1e-10);
    }

    #[test]
    fn full_trace_and_additivity() {
        let u = SingleSitePotential::new(&[1.0, -2.0]).unwrap();
        let rho = DisorderDensity::uniform(2.0).unwrap();
        let d = Interval::centered(0, 8);
        let h = BoxHamiltonian::sample(&u, &rho, d, 1, 0, 0);
        let nb = h.norm_bound() + 1.0;
        assert_eq!(trace_count(&h, -nb, nb), 17);
        assert_eq!(trace_count(&h, -nb, 0.3) + trace_count(&h, 0.3, nb), 17);
    }

    #[test]
    fn separation_enforced() {
        let u = SingleSitePotential::new(&[1.0]).unwrap();
        let rho = DisorderDensity::uniform(5.0).unwrap();
        let req = TwoBoxRequest {
            half_width: 4,
            x: 0,
            y: 8,
            interval: (0.0, 0.0),
            mass: 0.1,
            grid_step: None,
            n_samples: 10,
            seed: 0,
            constants: None,
        };
        assert_eq!(
            two_box_regularity_probability(&u, &rho, &req).unwrap_err(),
            Error::SeparationViolated { x: 0, y: 8, required: 9 }
        );
    }

    #[test]
    fn impurity_bound_state_rate() {
        let c = 6.0;
        let mut pot = vec![0.0; 201];
        pot[100] = c;
        let sys = eigensolve_box(&free(201).with_potential(pot).unwrap()).unwrap();
        let top = sys.eigenvectors.last().unwrap();
        let rate = fit_eigenvector_decay(top).unwrap();
        assert_abs_diff_eq!(rate, (c / 2.0f64).asinh(), epsilon = 1e-4);
    }
}
