//! Monte-Carlo estimates of fractional moments `E|G(z;x,y)|^p` and the
//! decay, conditional and a-priori checks built on them.
//!
//! A sample index fully determines its couplings, so disjoint index ranges
//! can be drawn independently and concatenated; the merged block is
//! bit-identical to a single pass over the union.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::averaging::{connected_constants, det_fractional_average, fmm_constants, CMatrix};
use crate::error::{Error, Result};
use crate::greens::{boundary_block, ComplexEnergy, Resolvent};
use crate::model::{
    alloy_potential, assemble_box_hamiltonian, coupling_range, hamiltonian_norm_bound, sample_couplings_attempt,
    BoxHamiltonian, DisorderDensity, Interval, SingleSitePotential,
};
use crate::par;
use crate::rng::MAX_ATTEMPTS;
use crate::stats::{mean_and_se, median_of_means, weighted_linear_fit, MOM_BLOCKS, Z95};
use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    PlainMean,
    MedianOfMeans,
}

impl EstimatorKind {
    /// Median-of-means close to the real axis, where tails get heavy.
    pub fn default_for(z: ComplexEnergy) -> Self {
        if z.im < 1e-2 {
            Self::MedianOfMeans
        } else {
            Self::PlainMean
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "plain-mean" | "mean" => Ok(Self::PlainMean),
            "median-of-means" | "mom" => Ok(Self::MedianOfMeans),
            other => Err(Error::InvalidArgument(format!("unknown estimator '{other}'"))),
        }
    }

    pub fn apply(self, values: &[f64]) -> (f64, f64) {
        match self {
            Self::PlainMean => mean_and_se(values),
            Self::MedianOfMeans => median_of_means(values, MOM_BLOCKS),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub exponent: f64,
    pub x: i64,
    pub y: i64,
    pub z: ComplexEnergy,
    pub n_samples: u64,
    pub mean: f64,
    pub std_error: f64,
    pub resample_count: u64,
    pub estimator: EstimatorKind,
    pub seed: u64,
}

/// Draws `|G(z; x_t, source)|^p` for several targets from one column solve
/// per sample.
#[derive(Debug, Clone)]
pub struct MomentSampler<'a> {
    pub u: &'a SingleSitePotential,
    pub rho: &'a DisorderDensity,
    pub domain: Interval,
    pub z: ComplexEnergy,
    pub source: i64,
    pub targets: Vec<i64>,
    pub exponent: f64,
    pub seed: u64,
}

/// Per-target sample values for the contiguous index range starting at `first`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    pub first: u64,
    pub values: Vec<Vec<f64>>,
    pub resamples: u64,
}

impl SampleBlock {
    pub fn len(&self) -> u64 {
        self.values.first().map_or(0, |v| v.len() as u64)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends a block that starts where this one ends.
    pub fn merge(mut self, other: SampleBlock) -> Result<SampleBlock> {
        if other.first != self.first + self.len() || other.values.len() != self.values.len() {
            return Err(Error::InvalidArgument("sample blocks are not adjacent".into()));
        }
        for (mine, theirs) in self.values.iter_mut().zip(other.values) {
            mine.extend(theirs);
        }
        self.resamples += other.resamples;
        Ok(self)
    }

    fn check_resampling(&self) -> Result<()> {
        if self.resamples > 0 && self.resamples.saturating_mul(1000) >= self.len() {
            return Err(Error::ExcessiveResampling { resamples: self.resamples, samples: self.len() });
        }
        Ok(())
    }
}

impl MomentSampler<'_> {
    fn validate(&self) -> Result<()> {
        if !(self.exponent > 0.0 && self.exponent < 1.0) {
            return Err(Error::ExponentOutOfRange { s: self.exponent, lo: 0.0, hi: 1.0 });
        }
        for site in self.targets.iter().chain(std::iter::once(&self.source)) {
            if !self.domain.contains(*site) {
                return Err(Error::SiteOutsideBox { site: *site, domain: self.domain });
            }
        }
        Ok(())
    }

    /// Column `G(z; ·, source)` for one sample, redrawing on singular hits.
    fn draw(&self, index: u64) -> Result<(Vec<Complex64>, u64)> {
        let mut resamples = 0;
        for attempt in 0..MAX_ATTEMPTS {
            let h = BoxHamiltonian::sample(self.u, self.rho, self.domain, self.seed, index, attempt);
            match Resolvent::new(&h, self.z).and_then(|r| r.column(self.source)) {
                Ok(col) => return Ok((col, resamples)),
                Err(Error::NearSingular { .. }) => resamples += 1,
                Err(e) => return Err(e),
            }
        }
        Err(Error::ExcessiveResampling { resamples, samples: 1 })
    }

    pub fn sample(&self, range: Range<u64>) -> Result<SampleBlock> {
        self.validate()?;
        let first = range.start;
        let idx: Vec<usize> = self.targets.iter().map(|t| (t - self.domain.start) as usize).collect();
        let rows = par::try_map_range(range, |i| {
            let (col, resamples) = self.draw(i)?;
            let vals: Vec<f64> = idx.iter().map(|&k| col[k].norm().powf(self.exponent)).collect();
            Ok((vals, resamples))
        })?;
        let mut values = vec![Vec::with_capacity(rows.len()); self.targets.len()];
        let mut resamples = 0;
        for (vals, r) in rows {
            for (t, v) in vals.into_iter().enumerate() {
                values[t].push(v);
            }
            resamples += r;
        }
        Ok(SampleBlock { first, values, resamples })
    }

    pub fn estimates(&self, block: &SampleBlock, kind: EstimatorKind) -> Result<Vec<MomentEstimate>> {
        block.check_resampling()?;
        Ok(self
            .targets
            .iter()
            .zip(&block.values)
            .map(|(&x, vals)| {
                let (mean, std_error) = kind.apply(vals);
                MomentEstimate {
                    exponent: self.exponent,
                    x,
                    y: self.source,
                    z: self.z,
                    n_samples: block.len(),
                    mean,
                    std_error,
                    resample_count: block.resamples,
                    estimator: kind,
                    seed: self.seed,
                }
            })
            .collect())
    }
}

pub const MIN_SAMPLES: u64 = 1000;

#[allow(clippy::too_many_arguments)]
pub fn estimate_moment(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    z: ComplexEnergy,
    x: i64,
    y: i64,
    exponent: f64,
    n_samples: u64,
    seed: u64,
    kind: EstimatorKind,
) -> Result<MomentEstimate> {
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples")));
    }
    let sampler = MomentSampler { u, rho, domain, z, source: y, targets: vec![x], exponent, seed };
    let block = sampler.sample(0..n_samples)?;
    Ok(sampler.estimates(&block, kind)?.remove(0))
}

// ---------------------------------------------------------------------------
// Conditional moment
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct ConditionalCheck {
    pub backgrounds: u64,
    pub violations: u64,
    pub violation_rate: f64,
    /// `C_{u,ρ}`.
    pub bound: f64,
    pub max_ratio: f64,
    /// Worst relative mismatch between `1/|det|` and a direct resolvent
    /// solve at spot-checked couplings.
    pub max_identity_residual: f64,
    pub resample_count: u64,
}

/// One frozen background: couplings on the box with `ω_x` zeroed, plus the
/// reduced `n × n` problem `A + ω_x V` on `[x, x+n-1]`.
struct Background {
    h0: BoxHamiltonian,
    a: CMatrix,
    v: CMatrix,
}

fn background(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    x: i64,
    z: ComplexEnergy,
    seed: u64,
    index: u64,
) -> Result<(Background, u64)> {
    let n = u.n();
    let block = Interval::new(x, x + n as i64 - 1)?;
    let mut resamples = 0;
    for attempt in 0..MAX_ATTEMPTS {
        let mut c = sample_couplings_attempt(rho, coupling_range(u, domain), seed, index, attempt);
        c.set(x, 0.0);
        let h0 = assemble_box_hamiltonian(domain, &alloy_potential(u, &c, domain)?)?;
        let b = match boundary_block(&h0, block, z) {
            Ok(b) => b,
            Err(Error::NearSingular { .. }) => {
                resamples += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let sub = h0.restrict(block)?;
        let mut a = CMatrix::zeros(n, n);
        let mut v = CMatrix::zeros(n, n);
        for i in 0..n {
            a[(i, i)] = Complex64::new(sub.potential()[i], 0.0) - z.value() - b[i];
            if i + 1 < n {
                a[(i, i + 1)] = Complex64::new(-1.0, 0.0);
                a[(i + 1, i)] = Complex64::new(-1.0, 0.0);
            }
            v[(i, i)] = Complex64::new(u.values()[i], 0.0);
        }
        return Ok((Background { h0, a, v }, resamples));
    }
    Err(Error::ExcessiveResampling { resamples, samples: 1 })
}

/// Averages `|G(z; x, x+n-1)|^{s/n}` over `ω_x` alone, by quadrature, for
/// `n_outer` frozen backgrounds and counts those exceeding `C_{u,ρ}(1+tol)`.
#[allow(clippy::too_many_arguments)]
pub fn conditional_moment_check(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    domain: Interval,
    z: ComplexEnergy,
    s: f64,
    frozen_seed: u64,
    n_outer: u64,
    tol: f64,
) -> Result<ConditionalCheck> {
    let consts = connected_constants(u, rho, s)?;
    let n = u.n() as i64;
    if (domain.len() as i64) < n {
        return Err(Error::InvalidArgument("box shorter than the single-site support".into()));
    }
    let x = (domain.start + domain.end - n + 1).div_euclid(2);
    let spot = [rho.quantile(0.3), rho.quantile(0.8)];
    let rows = par::try_map_range(0..n_outer, |b| {
        let (bg, resamples) = background(u, rho, domain, x, z, frozen_seed, b)?;
        let avg = det_fractional_average(&bg.a, &bg.v, rho, s)?;
        let mut residual = 0.0f64;
        for w in spot {
            let pot: Vec<f64> =
                bg.h0.potential().iter().enumerate().map(|(i, p)| p + w * u.at(domain.start + i as i64 - x)).collect();
            let g = Resolvent::new(&bg.h0.with_potential(pot)?, z)?.entry(x, x + n - 1)?;
            let reduced = 1.0 / (&bg.a + &bg.v * Complex64::new(w, 0.0)).lu().determinant().norm();
            residual = residual.max((g.norm() - reduced).abs() / reduced);
        }
        Ok((avg.integral, residual, resamples))
    })?;
    let bound = consts.c_u_rho;
    let mut violations = 0;
    let mut max_ratio = 0.0f64;
    let mut max_identity_residual = 0.0f64;
    let mut resample_count = 0;
    for (integral, res, r) in rows {
        if integral > bound * (1.0 + tol) {
            violations += 1;
        }
        max_ratio = max_ratio.max(integral / bound);
        max_identity_residual = max_identity_residual.max(res);
        resample_count += r;
    }
    Ok(ConditionalCheck {
        backgrounds: n_outer,
        violations,
        violation_rate: violations as f64 / n_outer as f64,
        bound,
        max_ratio,
        max_identity_residual,
        resample_count,
    })
}

// ---------------------------------------------------------------------------
// Decay profiles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecayRequest {
    pub s: f64,
    pub z: ComplexEnergy,
    /// Defaults to `4·max(d) + 8·unit`.
    pub box_halfwidth: Option<i64>,
    pub distances: Vec<i64>,
    pub n_samples: u64,
    pub seed: u64,
    /// Defaults to `EstimatorKind::default_for(z)`.
    pub estimator: Option<EstimatorKind>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayPoint {
    pub distance: i64,
    pub estimate: MomentEstimate,
    /// Prefactor-times-exponential bound valid at every distance.
    pub bound: f64,
    /// The stricter general-support form, where its distance floor is met.
    pub theorem_bound: Option<f64>,
    /// `(bound - mean) / std_error`.
    pub margin_sigmas: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub distances: Vec<i64>,
    pub log_means: Vec<f64>,
    pub log_sigmas: Vec<f64>,
    /// Fitted decay rate per site.
    pub rate: f64,
    pub prefactor: f64,
    pub rate_ci: (f64, f64),
}

#[derive(Debug, Clone, Serialize)]
pub struct DecayProfile {
    pub unit: usize,
    pub exponent: f64,
    pub mass: f64,
    /// `mass / unit`, the per-site rate the fit is compared against.
    pub theory_rate: f64,
    /// Whether the disorder hypothesis of the bound holds; bounds are only
    /// asserted when it does.
    pub hypothesis_holds: bool,
    pub box_halfwidth: i64,
    pub points: Vec<DecayPoint>,
    pub fit: DecayFit,
    pub violations: usize,
    pub rate_consistent: bool,
    pub resample_count: u64,
}

struct DecayTheory {
    unit: usize,
    exponent: f64,
    mass: f64,
    hypothesis: bool,
    prefactor: f64,
    theorem_prefactor: Option<f64>,
    theorem_floor: i64,
    fit_floor: i64,
}

fn run_decay(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    req: &DecayRequest,
    th: DecayTheory,
) -> Result<DecayProfile> {
    let mut distinct = req.distances.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(Error::DegenerateDesign);
    }
    if distinct[0] < 0 {
        return Err(Error::InvalidArgument("distances must be nonnegative".into()));
    }
    let unit = th.unit as i64;
    let max_d = *distinct.last().unwrap();
    let hw = req.box_halfwidth.unwrap_or(4 * max_d + 8 * unit);
    if hw < max_d + unit {
        return Err(Error::InvalidArgument(format!("box half-width {hw} leaves no margin beyond distance {max_d}")));
    }
    let domain = Interval::new(-hw, hw)?;
    let kind = req.estimator.unwrap_or_else(|| EstimatorKind::default_for(req.z));
    let sampler = MomentSampler {
        u,
        rho,
        domain,
        z: req.z,
        source: 0,
        targets: req.distances.clone(),
        exponent: th.exponent,
        seed: req.seed,
    };
    if req.n_samples < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("need at least {MIN_SAMPLES} samples")));
    }
    let block = sampler.sample(0..req.n_samples)?;
    let estimates = sampler.estimates(&block, kind)?;
    let mut points = Vec::new();
    let mut violations = 0;
    for (est, &d) in estimates.into_iter().zip(&req.distances) {
        let decay = (-th.mass * (d / unit) as f64).exp();
        let bound = th.prefactor * decay;
        let theorem_bound = th.theorem_prefactor.filter(|_| d >= th.theorem_floor).map(|c| c * decay);
        let slack = 3.0 * est.std_error;
        if th.hypothesis && (est.mean > bound + slack || theorem_bound.is_some_and(|b| est.mean > b + slack)) {
            violations += 1;
        }
        let margin_sigmas = (bound - est.mean) / est.std_error;
        points.push(DecayPoint { distance: d, estimate: est, bound, theorem_bound, margin_sigmas });
    }
    let used: Vec<&DecayPoint> =
        points.iter().filter(|p| p.distance >= th.fit_floor && p.estimate.mean > 0.0).collect();
    let xs: Vec<f64> = used.iter().map(|p| p.distance as f64).collect();
    let ys: Vec<f64> = used.iter().map(|p| p.estimate.mean.ln()).collect();
    let sig: Vec<f64> = used.iter().map(|p| (p.estimate.std_error / p.estimate.mean).max(1e-12)).collect();
    let lf = weighted_linear_fit(&xs, &ys, &sig)?;
    let rate = -lf.slope;
    let half = Z95 * lf.slope_se;
    let fit = DecayFit {
        distances: used.iter().map(|p| p.distance).collect(),
        log_means: ys,
        log_sigmas: sig,
        rate,
        prefactor: lf.intercept.exp(),
        rate_ci: (rate - half, rate + half),
    };
    let theory_rate = th.mass / th.unit as f64;
    Ok(DecayProfile {
        unit: th.unit,
        exponent: th.exponent,
        mass: th.mass,
        theory_rate,
        hypothesis_holds: th.hypothesis,
        box_halfwidth: hw,
        rate_consistent: rate >= theory_rate - half,
        points,
        fit,
        violations,
        resample_count: block.resamples,
    })
}

/// Decay of `E|G(z;0,d)|^{s/n}` for connected support.
pub fn decay_profile(u: &SingleSitePotential, rho: &DisorderDensity, req: &DecayRequest) -> Result<DecayProfile> {
    let c = connected_constants(u, rho, req.s)?;
    let n = u.n();
    let th = DecayTheory {
        unit: n,
        exponent: req.s / n as f64,
        mass: c.mass_m,
        hypothesis: rho.sup_norm() < c.disorder_threshold,
        prefactor: c.c_u_rho_pplus,
        theorem_prefactor: Some(c.c_u_rho_plus),
        theorem_floor: 2 * n as i64,
        fit_floor: n as i64,
    };
    run_decay(u, rho, req, th)
}

/// Decay of `E|G(z;0,d)|^{s/(n+r)}` for supports with a gap.
pub fn general_support_decay(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    req: &DecayRequest,
) -> Result<DecayProfile> {
    if u.is_connected() {
        return decay_profile(u, rho, req);
    }
    let width = u.n() + u.gap_width();
    let hi = u.n() as f64 / width as f64;
    if !(req.s > 0.0 && req.s < hi) {
        return Err(Error::ExponentOutOfRange { s: req.s, lo: 0.0, hi });
    }
    let rep = fmm_constants(u, rho, req.s)?;
    let th = DecayTheory {
        unit: width,
        exponent: req.s / width as f64,
        mass: rep.general_mass,
        hypothesis: rep.d_best < 1.0,
        prefactor: rep.dplus_best,
        theorem_prefactor: None,
        theorem_floor: 0,
        fit_floor: 2 * width as i64,
    };
    run_decay(u, rho, req, th)
}

// ---------------------------------------------------------------------------
// A-priori sweep
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize)]
pub struct AprioriCell {
    pub x: i64,
    pub y: i64,
    pub z: ComplexEnergy,
    pub mean: f64,
    pub std_error: f64,
    pub max_sample: f64,
    /// `|z|` exceeds the norm bound of every realization plus one.
    pub far_from_spectrum: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct AprioriSweep {
    pub exponent: f64,
    pub n_samples: u64,
    pub cells: Vec<AprioriCell>,
    pub sup: f64,
    pub sup_std_error: f64,
    pub argmax: usize,
    pub resample_count: u64,
}

/// `sup` over `sites × sites × z_grid` of `E|G(z;x,y)|^{s/(4n)}`.
#[allow(clippy::too_many_arguments)]
pub fn apriori_sweep(
    u: &SingleSitePotential,
    rho: &DisorderDensity,
    s: f64,
    z_grid: &[ComplexEnergy],
    domain: Interval,
    sites: &[i64],
    n_samples: u64,
    seed: u64,
    kind: Option<EstimatorKind>,
) -> Result<AprioriSweep> {
    if !rho.satisfies_a2() {
        return Err(Error::NoApplicableAssumption);
    }
    if sites.is_empty() || z_grid.is_empty() {
        return Err(Error::InvalidArgument("empty sweep grid".into()));
    }
    let exponent = s / (4.0 * u.n() as f64);
    let far = hamiltonian_norm_bound(u, rho) + 1.0;
    let mut cells = Vec::new();
    let mut resample_count = 0;
    for &z in z_grid {
        let kind = kind.unwrap_or_else(|| EstimatorKind::default_for(z));
        for &y in sites {
            let sampler = MomentSampler { u, rho, domain, z, source: y, targets: sites.to_vec(), exponent, seed };
            let block = sampler.sample(0..n_samples)?;
            resample_count += block.resamples;
            for (est, vals) in sampler.estimates(&block, kind)?.into_iter().zip(&block.values) {
                cells.push(AprioriCell {
                    x: est.x,
                    y,
                    z,
                    mean: est.mean,
                    std_error: est.std_error,
                    max_sample: vals.iter().fold(0.0f64, |m, v| m.max(*v)),
                    far_from_spectrum: z.abs() > far,
                });
            }
        }
    }
    let (argmax, top) = cells.iter().enumerate().max_by(|a, b| a.1.mean.partial_cmp(&b.1.mean).unwrap()).unwrap();
    Ok(AprioriSweep { exponent, n_samples, sup: top.mean, sup_std_error: top.std_error, argmax, cells, resample_count })
}
