//! Three small entry points for the static page in `www/`.
//!
//! Build with `wasm-pack build --target web crates/demo` and serve `www/`
//! next to the generated `pkg/`.

use fmm_lab::averaging::fmm_constants;
use fmm_lab::fmm_mc::MomentSampler;
use fmm_lab::localization::eigensolve_box;
use fmm_lab::{BoxHamiltonian, ComplexEnergy, DensityKind, DisorderDensity, Interval, SingleSitePotential};
use wasm_bindgen::prelude::*;

fn model(u: &[f64], kind: &str, radius: f64) -> Result<(SingleSitePotential, DisorderDensity), String> {
    let u = SingleSitePotential::new(u).map_err(|e| e.to_string())?;
    let kind = DensityKind::parse(kind).map_err(|e| e.to_string())?;
    let rho = DisorderDensity::new(kind, radius).map_err(|e| e.to_string())?;
    Ok((u, rho))
}

pub fn constants_report(u: &[f64], kind: &str, radius: f64, s: f64) -> Result<String, String> {
    let (u, rho) = model(u, kind, radius)?;
    let rep = fmm_constants(&u, &rho, s).map_err(|e| e.to_string())?;
    serde_json::to_string(&rep).map_err(|e| e.to_string())
}

/// Sample means of `|G(E+iε; 0, d)|^{s/n}` for `d = 0..=max_distance`.
#[allow(clippy::too_many_arguments)]
pub fn moment_curve(
    u: &[f64],
    kind: &str,
    radius: f64,
    s: f64,
    energy: f64,
    epsilon: f64,
    max_distance: u32,
    n_samples: u32,
    seed: u32,
) -> Result<Vec<f64>, String> {
    let (u, rho) = model(u, kind, radius)?;
    if !(s > 0.0 && s < 1.0) {
        return Err(format!("s = {s} is not in (0, 1)"));
    }
    let z = ComplexEnergy::new(energy, epsilon).map_err(|e| e.to_string())?;
    let max = max_distance as i64;
    let sampler = MomentSampler {
        u: &u,
        rho: &rho,
        domain: Interval::centered(0, 2 * max + 8 * u.n() as i64),
        z,
        source: 0,
        targets: (0..=max).collect(),
        exponent: s / u.n() as f64,
        seed: seed as u64,
    };
    let block = sampler.sample(0..n_samples.max(1) as u64).map_err(|e| e.to_string())?;
    Ok(block.values.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect())
}

/// `|ψ|` of the eigenvector whose eigenvalue is closest to `energy`.
pub fn eigen_profile(
    u: &[f64],
    kind: &str,
    radius: f64,
    half_width: u32,
    energy: f64,
    seed: u32,
) -> Result<Vec<f64>, String> {
    let (u, rho) = model(u, kind, radius)?;
    let d = Interval::centered(0, half_width as i64);
    let sys = eigensolve_box(&BoxHamiltonian::sample(&u, &rho, d, seed as u64, 0, 0)).map_err(|e| e.to_string())?;
    let k = (0..sys.eigenvalues.len())
        .min_by(|a, b| (sys.eigenvalues[*a] - energy).abs().total_cmp(&(sys.eigenvalues[*b] - energy).abs()))
        .ok_or("empty box")?;
    Ok(sys.eigenvectors[k].iter().map(|v| v.abs()).collect())
}

#[wasm_bindgen]
pub fn constants_json(u: &[f64], kind: &str, radius: f64, s: f64) -> Result<String, JsError> {
    constants_report(u, kind, radius, s).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn decay_curve(
    u: &[f64],
    kind: &str,
    radius: f64,
    s: f64,
    energy: f64,
    epsilon: f64,
    max_distance: u32,
    n_samples: u32,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    moment_curve(u, kind, radius, s, energy, epsilon, max_distance, n_samples, seed).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn eigenvector_profile(
    u: &[f64],
    kind: &str,
    radius: f64,
    half_width: u32,
    energy: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    eigen_profile(u, kind, radius, half_width, energy, seed).map_err(|e| JsError::new(&e))
}
