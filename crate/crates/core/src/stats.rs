//! Small-sample statistics used by the Monte-Carlo checks.

use serde::Serialize;

use crate::error::{Error, Result};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub const MOM_BLOCKS: usize = 16;

/// Median of `blocks` contiguous block means, with the asymptotic standard
/// error `sqrt(π/2) · sd(block means) / sqrt(blocks)`.
pub fn median_of_means(values: &[f64], blocks: usize) -> (f64, f64) {
    let blocks = blocks.min(values.len()).max(1);
    let size = values.len() / blocks;
    let mut means: Vec<f64> = (0..blocks)
        .map(|b| {
            let end = if b + 1 == blocks { values.len() } else { (b + 1) * size };
            let chunk = &values[b * size..end];
            chunk.iter().sum::<f64>() / chunk.len() as f64
        })
        .collect();
    let (_, se_of_mean) = mean_and_se(&means);
    means.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = quantile_sorted(&means, 0.5);
    (median, (std::f64::consts::PI / 2.0).sqrt() * se_of_mean)
}

/// Linear-interpolated quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// Distribution-free 95% interval for the median from order statistics.
pub fn median_ci(sorted: &[f64]) -> (f64, f64) {
    let n = sorted.len() as f64;
    let half = Z95 * n.sqrt() / 2.0;
    let lo = ((n / 2.0 - half).floor().max(1.0) as usize).min(sorted.len()) - 1;
    let hi = ((n / 2.0 + half).ceil() as usize).clamp(1, sorted.len()) - 1;
    (sorted[lo], sorted[hi])
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: u64, trials: u64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    let lo = if successes == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if successes >= trials { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
}

/// Weighted least squares `y ≈ intercept + slope·x` with weights `1/σ²`.
/// Standard errors are taken from the weights, not rescaled by the residual.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> Result<LinearFit> {
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let sx: f64 = w.iter().zip(x).map(|(w, x)| w * x).sum();
    let sy: f64 = w.iter().zip(y).map(|(w, y)| w * y).sum();
    let sxx: f64 = w.iter().zip(x).map(|(w, x)| w * x * x).sum();
    let sxy: f64 = w.iter().zip(x).zip(y).map(|((w, x), y)| w * x * y).sum();
    let det = sw * sxx - sx * sx;
    if !(det > 1e-12 * sw * sxx) || !det.is_finite() {
        return Err(Error::DegenerateDesign);
    }
    let slope = (sw * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    Ok(LinearFit { slope, intercept, slope_se: (sw / det).sqrt(), intercept_se: (sxx / det).sqrt() })
}

/// Ordinary least squares; standard errors from the residual variance.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let ones = vec![1.0; x.len()];
    let mut fit = weighted_linear_fit(x, y, &ones)?;
    if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2)).sum();
        let scale = (rss / (x.len() - 2) as f64).sqrt();
        fit.slope_se *= scale;
        fit.intercept_se *= scale;
    }
    Ok(fit)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = weighted_linear_fit(&x, &y, &[1.0, 2.0, 1.0, 0.5]).unwrap();
        assert!((f.slope + 0.5).abs() < 1e-13 && (f.intercept - 3.0).abs() < 1e-13);
    }

    #[test]
    fn constant_design_is_degenerate() {
        assert_eq!(weighted_linear_fit(&[2.0, 2.0], &[1.0, 3.0], &[1.0, 1.0]), Err(Error::DegenerateDesign));
    }

    #[test]
    fn wilson_brackets_proportion() {
        let (lo, hi) = wilson_interval(90, 100);
        assert!(lo < 0.9 && hi > 0.9 && lo > 0.8 && hi < 0.96);
        assert_eq!(wilson_interval(0, 50).0, 0.0);
        assert_eq!(wilson_interval(50, 50).1, 1.0);
    }

    #[test]
    fn median_of_means_on_constant_data() {
        let (m, se) = median_of_means(&[2.5; 160], 16);
        assert_eq!(m, 2.5);
        assert_eq!(se, 0.0);
    }

    #[test]
    fn median_interval_contains_median() {
        let v: Vec<f64> = (0..101).map(|i| i as f64).collect();
        let (lo, hi) = median_ci(&v);
        assert!(lo < 50.0 && hi > 50.0 && lo > 35.0 && hi < 65.0);
    }
}
