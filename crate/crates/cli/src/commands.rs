use fmm_lab::averaging::{det_fractional_average, fmm_constants, radius_threshold, random_det_instance, CMatrix};
use fmm_lab::fmm_mc::{
    apriori_sweep, conditional_moment_check, decay_profile, general_support_decay, DecayRequest, EstimatorKind,
};
use fmm_lab::greens::{
    corner_determinant_check, geometric_resolvent_residual, resolvent_identity_residuals, schur_block,
};
use fmm_lab::localization::{
    calibrate_wegner_constant, eigenfunction_decay_stats, two_box_regularity_probability, wegner_sweep, TwoBoxRequest,
};
use fmm_lab::model::hamiltonian_norm_bound;
use fmm_lab::monotone::{monotone_moment_bound_check, positive_combination_search, MonotoneRequest};
use fmm_lab::rng::AuxStream;
use fmm_lab::{BoxHamiltonian, ComplexEnergy, DensityKind, DisorderDensity, Interval, SingleSitePotential};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExperimentConfig, RunConfig};
use crate::contract;
use crate::error::{CliError, Context, Result};
use crate::output::{table, Table, Verdict};
use crate::Command;

pub struct Report {
    pub result: Value,
    pub tables: Vec<Table>,
    pub verdict: Verdict,
    pub resample_count: u64,
    pub summary: String,
}

pub struct Ctx<'a> {
    pub run: &'a RunConfig,
    pub u: SingleSitePotential,
    pub rho: DisorderDensity,
    pub seed: u64,
    pub hash: &'a str,
}

impl<'a> Ctx<'a> {
    pub fn new(cfg: &'a ExperimentConfig, hash: &'a str) -> Result<Self> {
        Ok(Ctx { run: &cfg.run, u: cfg.potential()?, rho: cfg.density()?, seed: cfg.model.seed, hash })
    }

    fn s(&self, default: f64) -> Result<f64> {
        let s = self.run.s.unwrap_or(default);
        if !(s > 0.0 && s < 1.0) {
            return Err(CliError::invalid("run.s", format!("{s} is not in (0, 1)")));
        }
        Ok(s)
    }

    fn z(&self, energy: f64, epsilon: f64) -> Result<ComplexEnergy> {
        let (e, eps) = (self.run.energy.unwrap_or(energy), self.run.epsilon.unwrap_or(epsilon));
        if !(eps > 0.0) {
            return Err(CliError::invalid("run.epsilon", format!("{eps} must be positive")));
        }
        ComplexEnergy::new(e, eps).map_err(|e| CliError::invalid("run.energy", e))
    }

    fn positive(&self, field: &str, value: Option<u64>, default: u64) -> Result<u64> {
        match value.unwrap_or(default) {
            0 => Err(CliError::invalid(format!("run.{field}"), "must be at least 1")),
            v => Ok(v),
        }
    }
}

fn to_value<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| CliError::encode("result", e))
}

pub fn dispatch(cmd: Command, cx: &Ctx) -> Result<Report> {
    match cmd {
        Command::Constants => constants(cx),
        Command::DetAverage => det_average(cx),
        Command::VerifyIdentities => verify_identities(cx),
        Command::FmDecay => fm_decay(cx),
        Command::Apriori => apriori(cx),
        Command::ConditionalCheck => conditional(cx),
        Command::Wegner => wegner(cx),
        Command::Regularity => regularity(cx),
        Command::EigenDecay => eigen_decay(cx),
        Command::Monotone => monotone(cx),
    }
}

fn constants(cx: &Ctx) -> Result<Report> {
    let s = cx.s(0.5)?;
    let rep = fmm_constants(&cx.u, &cx.rho, s).context("constants")?;
    let mut result = to_value(&rep)?;
    result["radius_threshold"] = json!(radius_threshold(&cx.u, cx.rho.kind(), s).ok());
    result["hamiltonian_norm_bound"] = json!(hamiltonian_norm_bound(&cx.u, &cx.rho));
    let summary = match &rep.connected {
        Some(c) => format!(
            "C_u,rho = {:.6}, threshold {:.6}, sup rho {:.6}, mass {:.6}",
            c.c_u_rho, c.disorder_threshold, rep.rho_sup, c.mass_m
        ),
        None => format!("r = {}, D = {:.6}, D+ = {:.6}", rep.r, rep.d_best, rep.dplus_best),
    };
    Ok(Report { result, tables: vec![], verdict: Verdict::NotAsserted, resample_count: 0, summary })
}

#[derive(Serialize)]
struct DetRow<'a> {
    config_hash: &'a str,
    index: u64,
    n: usize,
    s: f64,
    density: DensityKind,
    radius: f64,
    integral: f64,
    quad_error: f64,
    bound1: f64,
    bound2_min: f64,
    ratio: f64,
    violated: bool,
}

/// Randomized matrix family; the model block only supplies the seed.
fn det_average(cx: &Ctx) -> Result<Report> {
    let n = cx.positive("n_instances", cx.run.n_instances, 1000)?;
    let tol = cx.run.tolerance.unwrap_or(1e-6);
    let rows = (0..n)
        .into_par_iter()
        .map(|i| {
            let inst = random_det_instance(cx.seed, i);
            let avg = det_fractional_average(&inst.a, &inst.v, &inst.rho, inst.s).context("det-average")?;
            let bound2_min = inst.lambdas.iter().map(|l| avg.bound2(*l)).fold(f64::INFINITY, f64::min);
            let ratio = (avg.integral / avg.bound1).max(avg.integral / bound2_min);
            Ok(DetRow {
                config_hash: cx.hash,
                index: i,
                n: avg.n,
                s: inst.s,
                density: inst.rho.kind(),
                radius: inst.rho.radius(),
                integral: avg.integral,
                quad_error: avg.quad_error,
                bound1: avg.bound1,
                bound2_min,
                ratio,
                violated: ratio > 1.0 + tol,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let one = |x: f64| CMatrix::from_element(1, 1, Complex64::new(x, 0.0));
    let uniform = DisorderDensity::uniform(1.0).context("det-average")?;
    let closed = det_fractional_average(&one(0.0), &one(1.0), &uniform, 0.5).context("det-average")?;
    let closed_ok = (closed.integral - 2.0).abs() <= 1e-9 && (closed.bound1 - 2.0 * 2f64.sqrt()).abs() <= 1e-9;
    let violations = rows.iter().filter(|r| r.violated).count();
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    let result = json!({
        "instances": n,
        "violations": violations,
        "worst_ratio": worst,
        "tolerance": tol,
        "closed_form": { "integral": closed.integral, "bound1": closed.bound1, "ok": closed_ok },
    });
    Ok(Report {
        result,
        tables: vec![table(&contract::DET_AVERAGE, &rows)?],
        verdict: Verdict::from_check(violations == 0 && closed_ok),
        resample_count: 0,
        summary: format!("{violations} violations over {n} instances, worst ratio {worst:.4}"),
    })
}

#[derive(Serialize)]
struct IdentityRow<'a> {
    config_hash: &'a str,
    index: u64,
    sites: usize,
    energy: f64,
    epsilon: f64,
    corner: f64,
    schur: f64,
    resolvent1: f64,
    resolvent2: f64,
    factorization: f64,
}

fn verify_identities(cx: &Ctx) -> Result<Report> {
    let count = cx.positive("n_instances", cx.run.n_instances, 1000)?;
    let tol = cx.run.tolerance.unwrap_or(1e-9);
    let n = cx.u.n() as i64;
    if n + 1 > 64 {
        return Err(CliError::invalid("model.u", "support too long for boxes of at most 64 sites"));
    }
    let rows = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut g = AuxStream::new(cx.seed, i);
            let len = g.int_in(4.max(n + 1), 64);
            let d = Interval::new(0, len - 1).context("verify-identities")?;
            let h = BoxHamiltonian::sample(&cx.u, &cx.rho, d, cx.seed.wrapping_add(1), i, 0);
            let z =
                ComplexEnergy::new(g.range(-4.0, 4.0), 10f64.powf(g.range(-3.0, 0.0))).context("verify-identities")?;
            let a = g.int_in(0, len - 1);
            let b = g.int_in(a, len - 1);
            let inner = Interval::new(a, b).context("verify-identities")?;
            let x = g.int_in(0, len - 1 - n);
            let y = g.int_in(x + n, len - 1);
            let ctx = "verify-identities";
            let corner = corner_determinant_check(&h, z).context(ctx)?;
            let schur = schur_block(&h, inner, z).context(ctx)?.residual;
            let (r1, r2) = resolvent_identity_residuals(&h, inner, z).context(ctx)?;
            let geo = geometric_resolvent_residual(&h, n as usize, x, y, z).context(ctx)?;
            Ok(IdentityRow {
                config_hash: cx.hash,
                index: i,
                sites: len as usize,
                energy: z.re,
                epsilon: z.im,
                corner,
                schur,
                resolvent1: r1.max(geo.res1),
                resolvent2: r2.max(geo.res2),
                factorization: geo.res_factor,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let worst = |f: fn(&IdentityRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    let maxima = json!({
        "corner": worst(|r| r.corner),
        "schur": worst(|r| r.schur),
        "resolvent1": worst(|r| r.resolvent1),
        "resolvent2": worst(|r| r.resolvent2),
        "factorization": worst(|r| r.factorization),
    });
    let max = maxima.as_object().into_iter().flatten().filter_map(|(_, v)| v.as_f64()).fold(0.0, f64::max);
    Ok(Report {
        result: json!({ "instances": count, "tolerance": tol, "max_residual": max, "worst": maxima }),
        tables: vec![table(&contract::IDENTITIES, &rows)?],
        verdict: Verdict::from_check(max <= tol),
        resample_count: 0,
        summary: format!("{count} instances, worst residual {max:.2e}"),
    })
}

#[derive(Serialize)]
struct DecayRow<'a> {
    config_hash: &'a str,
    distance: i64,
    exponent: f64,
    n_samples: u64,
    mean: f64,
    std_error: f64,
    bound: f64,
    theorem_bound: Option<f64>,
    margin_sigmas: f64,
    mass: f64,
    unit: usize,
    estimator: EstimatorKind,
    resample_count: u64,
}

fn fm_decay(cx: &Ctx) -> Result<Report> {
    let s = cx.s(0.5)?;
    let z = cx.z(0.0, 1e-3)?;
    let (n, r) = (cx.u.n() as i64, cx.u.gap_width() as i64);
    let distances = cx.run.distances.clone().unwrap_or_else(|| {
        if r == 0 {
            (1..=5).map(|k| 5 * k * n).collect()
        } else {
            (2..=6).map(|k| k * (n + r)).collect()
        }
    });
    let req = DecayRequest {
        s,
        z,
        box_halfwidth: cx.run.box_halfwidth,
        distances,
        n_samples: cx.positive("n_samples", cx.run.n_samples, 20_000)?,
        seed: cx.seed,
        estimator: cx.run.estimator,
    };
    let prof = if r == 0 { decay_profile(&cx.u, &cx.rho, &req) } else { general_support_decay(&cx.u, &cx.rho, &req) }
        .context("fm-decay")?;
    let rows: Vec<DecayRow> = prof
        .points
        .iter()
        .map(|p| DecayRow {
            config_hash: cx.hash,
            distance: p.distance,
            exponent: p.estimate.exponent,
            n_samples: p.estimate.n_samples,
            mean: p.estimate.mean,
            std_error: p.estimate.std_error,
            bound: p.bound,
            theorem_bound: p.theorem_bound,
            margin_sigmas: p.margin_sigmas,
            mass: prof.mass,
            unit: prof.unit,
            estimator: p.estimate.estimator,
            resample_count: p.estimate.resample_count,
        })
        .collect();
    let verdict = if prof.hypothesis_holds {
        Verdict::from_check(prof.violations == 0 && prof.rate_consistent)
    } else {
        Verdict::NotAsserted
    };
    let summary = format!(
        "fitted rate {:.4} (CI {:.4}..{:.4}) vs theory {:.4}; {} bound violations",
        prof.fit.rate, prof.fit.rate_ci.0, prof.fit.rate_ci.1, prof.theory_rate, prof.violations
    );
    Ok(Report {
        result: to_value(&prof)?,
        tables: vec![table(&contract::DECAY, &rows)?],
        verdict,
        resample_count: prof.resample_count,
        summary,
    })
}

#[derive(Serialize)]
struct AprioriRow<'a> {
    config_hash: &'a str,
    x: i64,
    y: i64,
    energy: f64,
    epsilon: f64,
    mean: f64,
    std_error: f64,
    max_sample: f64,
    far_from_spectrum: bool,
}

fn apriori(cx: &Ctx) -> Result<Report> {
    let s = cx.s(0.5)?;
    let far = hamiltonian_norm_bound(&cx.u, &cx.rho) + 2.0;
    let grid = cx.run.energies.clone().unwrap_or_else(|| vec![[0.0, 0.01], [1.0, 0.1], [-2.5, 0.5], [far, 0.1]]);
    let zs = grid
        .iter()
        .map(|[re, im]| {
            if !(*im > 0.0) {
                return Err(CliError::invalid("run.energies", format!("imaginary part {im} must be positive")));
            }
            ComplexEnergy::new(*re, *im).map_err(|e| CliError::invalid("run.energies", e))
        })
        .collect::<Result<Vec<_>>>()?;
    let sites = cx.run.sites.clone().unwrap_or_else(|| vec![-4, -2, 0, 2, 4]);
    let hw = cx.run.box_halfwidth.unwrap_or(16);
    let n = cx.positive("n_samples", cx.run.n_samples, 2000)?;
    let sweep = apriori_sweep(&cx.u, &cx.rho, s, &zs, Interval::centered(0, hw), &sites, n, cx.seed, cx.run.estimator)
        .context("apriori")?;
    let rows: Vec<AprioriRow> = sweep
        .cells
        .iter()
        .map(|c| AprioriRow {
            config_hash: cx.hash,
            x: c.x,
            y: c.y,
            energy: c.z.re,
            epsilon: c.z.im,
            mean: c.mean,
            std_error: c.std_error,
            max_sample: c.max_sample,
            far_from_spectrum: c.far_from_spectrum,
        })
        .collect();
    let far_ok = sweep.cells.iter().filter(|c| c.far_from_spectrum).all(|c| c.max_sample <= 1.0);
    Ok(Report {
        result: to_value(&sweep)?,
        tables: vec![table(&contract::APRIORI, &rows)?],
        verdict: Verdict::from_check(sweep.sup.is_finite() && far_ok),
        resample_count: sweep.resample_count,
        summary: format!("sup {:.4} ± {:.4} over {} cells", sweep.sup, sweep.sup_std_error, sweep.cells.len()),
    })
}

fn conditional(cx: &Ctx) -> Result<Report> {
    let s = cx.s(0.5)?;
    let z = cx.z(0.3, 0.05)?;
    let hw = cx.run.box_halfwidth.unwrap_or(10);
    let outer = cx.positive("n_instances", cx.run.n_instances, 200)?;
    let tol = cx.run.tolerance.unwrap_or(0.01);
    let check = conditional_moment_check(&cx.u, &cx.rho, Interval::centered(0, hw), z, s, cx.seed, outer, tol)
        .context("conditional-check")?;
    Ok(Report {
        result: to_value(&check)?,
        tables: vec![],
        verdict: Verdict::from_check(check.violations == 0),
        resample_count: check.resample_count,
        summary: format!(
            "{} violations over {} backgrounds, max ratio {:.4}",
            check.violations, check.backgrounds, check.max_ratio
        ),
    })
}

#[derive(Serialize)]
struct WegnerRow<'a> {
    config_hash: &'a str,
    half_width: i64,
    a: f64,
    b: f64,
    width: f64,
    lhs: f64,
    std_error: f64,
    rhs: f64,
    c_prime: f64,
    violated: bool,
}

#[derive(Serialize)]
struct CalibrationRow<'a> {
    config_hash: &'a str,
    half_width: i64,
    energy: f64,
    epsilon: f64,
    site: i64,
    mean: f64,
    std_error: f64,
}

fn wegner(cx: &Ctx) -> Result<Report> {
    let s = cx.s(0.5)?;
    let n_prime = cx.run.n_prime.unwrap_or(8);
    if n_prime == 0 {
        return Err(CliError::invalid("run.n_prime", "must be at least 1"));
    }
    let widths = cx.run.widths.clone().unwrap_or_else(|| vec![0.02, 0.05, 0.1, 0.2]);
    let centers = cx.run.centers.clone().unwrap_or_else(|| vec![-1.0, 0.5, 2.0]);
    let cal_energies = cx.run.calibration_energies.clone().unwrap_or_else(|| vec![-3.0, -0.25, 1.25, 3.0]);
    let cal_eps = cx.run.calibration_epsilons.clone().unwrap_or_else(|| widths.clone());
    let half_widths = cx.run.half_widths.clone().unwrap_or_else(|| vec![16, 32]);
    let cal_n = cx.positive("calibration_samples", cx.run.calibration_samples, 400)?;
    let n = cx.positive("n_samples", cx.run.n_samples, 2000)?;
    let mut intervals = Vec::new();
    for c in &centers {
        for w in &widths {
            if !(*w > 0.0) {
                return Err(CliError::invalid("run.widths", format!("{w} must be positive")));
            }
            intervals.push((c - w / 2.0, c + w / 2.0));
        }
    }
    if let Some(e) = cal_energies.iter().find(|e| intervals.iter().any(|(a, b)| a <= *e && *e <= b)) {
        return Err(CliError::invalid("run.calibration_energies", format!("{e} lies inside a counted interval")));
    }
    let mut rows = Vec::new();
    let mut cal_rows = Vec::new();
    let mut per_box = Vec::new();
    for &l in &half_widths {
        if l < 0 {
            return Err(CliError::invalid("run.half_widths", format!("{l} is negative")));
        }
        let d = Interval::centered(0, l);
        let cal = calibrate_wegner_constant(&cx.u, &cx.rho, d, &cal_energies, &cal_eps, s, n_prime, cal_n, cx.seed)
            .context("wegner calibration")?;
        let pts = wegner_sweep(&cx.u, &cx.rho, d, &intervals, n, cx.seed.wrapping_add(1), s, n_prime, cal.c_prime)
            .context("wegner")?;
        for c in &cal.cells {
            cal_rows.push(CalibrationRow {
                config_hash: cx.hash,
                half_width: l,
                energy: c.energy,
                epsilon: c.epsilon,
                site: c.site,
                mean: c.mean,
                std_error: c.std_error,
            });
        }
        let violations = pts.iter().filter(|p| p.violated).count();
        let worst = pts.iter().map(|p| p.lhs / p.rhs).fold(0.0, f64::max);
        per_box.push(json!({ "half_width": l, "c_prime": cal.c_prime, "violations": violations, "max_ratio": worst }));
        rows.extend(pts.into_iter().map(|p| WegnerRow {
            config_hash: cx.hash,
            half_width: l,
            a: p.a,
            b: p.b,
            width: p.b - p.a,
            lhs: p.lhs,
            std_error: p.std_error,
            rhs: p.rhs,
            c_prime: cal.c_prime,
            violated: p.violated,
        }));
    }
    let violations = rows.iter().filter(|r| r.violated).count();
    Ok(Report {
        result: json!({ "s": s, "n_prime": n_prime, "violations": violations, "boxes": per_box }),
        tables: vec![table(&contract::WEGNER, &rows)?, table(&contract::WEGNER_CALIBRATION, &cal_rows)?],
        verdict: Verdict::from_check(violations == 0),
        resample_count: 0,
        summary: format!("{violations} violations over {} intervals", rows.len()),
    })
}

#[derive(Serialize)]
struct RegularityRow<'a> {
    config_hash: &'a str,
    half_width: i64,
    x: i64,
    y: i64,
    a: f64,
    b: f64,
    mass: f64,
    grid_step: f64,
    n_samples: u64,
    successes: u64,
    p_hat: f64,
    std_error: f64,
    wilson_lo: f64,
    wilson_hi: f64,
    undecided: u64,
    lower_bound: Option<f64>,
}

fn regularity(cx: &Ctx) -> Result<Report> {
    let half_widths = cx.run.half_widths.clone().unwrap_or_else(|| vec![5, 10]);
    let [a, b] = cx.run.interval.unwrap_or([-0.5, 0.5]);
    let mass = cx.run.mass.unwrap_or(0.05);
    let n = cx.positive("n_samples", cx.run.n_samples, 1000)?;
    let x = cx.run.x.unwrap_or(0);
    let mut rows = Vec::new();
    let mut results = Vec::new();
    for &l in &half_widths {
        let y = x + cx.run.separation.unwrap_or(2 * l + cx.u.n() as i64);
        let req = TwoBoxRequest {
            half_width: l,
            x,
            y,
            interval: (a, b),
            mass,
            grid_step: cx.run.grid_step,
            n_samples: n,
            seed: cx.seed,
            constants: cx.run.constants,
        };
        let r = two_box_regularity_probability(&cx.u, &cx.rho, &req).context("regularity")?;
        rows.push(RegularityRow {
            config_hash: cx.hash,
            half_width: l,
            x,
            y,
            a,
            b,
            mass,
            grid_step: r.grid_step,
            n_samples: r.n_samples,
            successes: r.successes,
            p_hat: r.p_hat,
            std_error: r.std_error,
            wilson_lo: r.wilson.0,
            wilson_hi: r.wilson.1,
            undecided: r.undecided,
            lower_bound: r.paper_bound,
        });
        results.push(r);
    }
    let verdict = if cx.run.constants.is_some() {
        Verdict::from_check(rows.iter().all(|r| r.lower_bound.is_none_or(|lb| r.p_hat + 3.0 * r.std_error >= lb)))
    } else {
        Verdict::NotAsserted
    };
    let summary = rows.iter().map(|r| format!("L={}: p={:.4}", r.half_width, r.p_hat)).collect::<Vec<_>>().join(", ");
    Ok(Report {
        result: json!({ "boxes": to_value(&results)? }),
        tables: vec![table(&contract::REGULARITY, &rows)?],
        verdict,
        resample_count: 0,
        summary,
    })
}

#[derive(Serialize)]
struct EigenRow<'a> {
    config_hash: &'a str,
    realization: usize,
    median_rate: f64,
}

fn eigen_decay(cx: &Ctx) -> Result<Report> {
    let hw = cx.run.box_halfwidth.unwrap_or(200);
    let n = cx.positive("n_samples", cx.run.n_samples, 100)?;
    let st = eigenfunction_decay_stats(&cx.u, &cx.rho, Interval::centered(0, hw), n, cx.seed).context("eigen-decay")?;
    let rows: Vec<EigenRow> = st
        .realization_medians
        .iter()
        .enumerate()
        .map(|(i, m)| EigenRow { config_hash: cx.hash, realization: i, median_rate: *m })
        .collect();
    Ok(Report {
        result: to_value(&st)?,
        tables: vec![table(&contract::EIGEN_DECAY, &rows)?],
        verdict: Verdict::from_check(st.median_ci.0 > 0.0),
        resample_count: 0,
        summary: format!("median inverse length {:.4} (CI {:.4}..{:.4})", st.median, st.median_ci.0, st.median_ci.1),
    })
}

fn monotone(cx: &Ctx) -> Result<Report> {
    let m_max = cx.run.m_max.unwrap_or(50);
    let w = match positive_combination_search(&cx.u, m_max) {
        Ok(w) => w,
        Err(fmm_lab::Error::NotExtractable) => {
            return Ok(Report {
                result: json!({ "extractable": false }),
                tables: vec![],
                verdict: Verdict::NotAsserted,
                resample_count: 0,
                summary: "no positive block combination exists".into(),
            })
        }
        Err(e) => return Err(e).context("monotone"),
    };
    let mut result = json!({ "extractable": true, "m": w.m, "gamma": w.gamma, "v": w.v });
    let mut verdict = Verdict::NotAsserted;
    let mut summary = format!("witness M = {}", w.m);
    if cx.run.check_bound.unwrap_or(false) {
        let c_w = cx.run.c_w.ok_or_else(|| CliError::invalid("run.c_w", "required when check_bound is set"))?;
        let x = cx.run.x.unwrap_or(0);
        let j = cx.run.j.unwrap_or(x + 2 * (w.m as i64 + cx.u.n() as i64) - 1);
        let hw = cx.run.box_halfwidth.unwrap_or((j - x).abs() / 2 + 10);
        let req = MonotoneRequest {
            domain: Interval::centered((x + j).div_euclid(2), hw),
            x,
            j,
            z: cx.z(0.2, 0.05)?,
            s: cx.s(0.5)?,
            n_samples: cx.positive("n_samples", cx.run.n_samples, 2000)?,
            seed: cx.seed,
            c_w,
            m_max,
        };
        let check = monotone_moment_bound_check(&cx.u, &cx.rho, &req).context("monotone")?;
        verdict = Verdict::from_check(check.within_bound);
        summary =
            format!("{summary}; estimate {:.4e} ± {:.1e} vs K = {:.4e}", check.estimate, check.std_error, check.k);
        result["bound_check"] = to_value(&check)?;
    }
    Ok(Report { result, tables: vec![], verdict, resample_count: 0, summary })
}
