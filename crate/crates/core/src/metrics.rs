//! Goodness-of-fit statistics for comparing model and measured traces.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::trace::VoltageTrace;

/// Label written into reports for the NRMSE normaliser in use.
pub const NRMSE_NORMALIZER: &str = "range";

fn check_pair(a: &[f64], b: &[f64], min_len: usize) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Domain(format!(
            "series lengths differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.len() < min_len {
        return Err(Error::Domain(format!(
            "need at least {min_len} samples (got {})",
            a.len()
        )));
    }
    Ok(())
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Sample standard deviation (n − 1 denominator).
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    let ss: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (x.len() as f64 - 1.0)).sqrt()
}

/// Pearson product-moment correlation.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_pair(a, b, 2)?;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::Domain(
            "correlation undefined for a zero-variance series".into(),
        ));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// RMSE normalised by the range (max − min) of the reference.
pub fn nrmse(model: &[f64], reference: &[f64]) -> Result<f64> {
    check_pair(model, reference, 1)?;
    let hi = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = reference.iter().copied().fold(f64::INFINITY, f64::min);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::Domain("NRMSE undefined for a flat reference".into()));
    }
    let mse = model
        .iter()
        .zip(reference)
        .map(|(m, r)| (m - r) * (m - r))
        .sum::<f64>()
        / model.len() as f64;
    Ok(mse.sqrt() / range)
}

/// `|max(model) − max(ref)| / max(ref)`; timing is ignored.
pub fn peak_error(model: &[f64], reference: &[f64]) -> Result<f64> {
    if model.is_empty() || reference.is_empty() {
        return Err(Error::Domain("peak error needs non-empty series".into()));
    }
    let pm = model.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pr = reference.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(pr > 0.0) {
        return Err(Error::Domain(format!(
            "peak error undefined for non-positive reference peak {pr}"
        )));
    }
    Ok((pm - pr).abs() / pr)
}

/// `exp − model`, sample by sample. Both traces must share a grid.
pub fn residuals(exp: &VoltageTrace, model: &VoltageTrace) -> Result<Vec<f64>> {
    if !exp.same_grid(model) {
        return Err(Error::Alignment(format!(
            "grids differ (t0 {} / {}, dt {} / {}, n {} / {}); resample first",
            exp.t0,
            model.t0,
            exp.dt,
            model.dt,
            exp.len(),
            model.len()
        )));
    }
    Ok(exp
        .samples
        .iter()
        .zip(&model.samples)
        .map(|(e, m)| e - m)
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPoint {
    pub theoretical: f64,
    pub empirical: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QqAnalysis {
    pub points: Vec<QqPoint>,
    /// Least-squares slope of empirical on theoretical quantiles.
    pub slope: f64,
    pub intercept: f64,
    pub ks_statistic: f64,
    pub ks_p: f64,
    pub mean: f64,
    pub std: f64,
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Kolmogorov distribution tail `P(K > λ)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // small-λ form of the CDF converges fast here
        let mut cdf = 0.0;
        let c = std::f64::consts::PI * std::f64::consts::PI / (8.0 * lambda * lambda);
        for k in 1..=50 {
            let j = (2 * k - 1) as f64;
            cdf += (-j * j * c).exp();
        }
        cdf *= (2.0 * std::f64::consts::PI).sqrt() / lambda;
        return (1.0 - cdf).clamp(0.0, 1.0);
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-300 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Normal Q-Q data for `values` with plotting positions `(i − 0.5)/n`, and
/// a Kolmogorov–Smirnov test against `N(mean, s²)` using the estimated
/// moments (the p-value is therefore indicative only).
pub fn qq_against_normal(values: &[f64]) -> Result<QqAnalysis> {
    let n = values.len();
    if n < 20 {
        return Err(Error::Domain(format!(
            "Q-Q analysis needs at least 20 samples (got {n})"
        )));
    }
    let m = mean(values);
    let s = std_dev(values);
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Domain(
            "degenerate residuals: zero variance, Q-Q undefined".into(),
        ));
    }
    let mut z: Vec<f64> = values.iter().map(|v| (v - m) / s).collect();
    z.sort_by(f64::total_cmp);
    let norm = standard_normal();
    let nf = n as f64;
    let points: Vec<QqPoint> = z
        .iter()
        .enumerate()
        .map(|(i, &e)| QqPoint {
            theoretical: norm.inverse_cdf((i as f64 + 0.5) / nf),
            empirical: e,
        })
        .collect();

    let mut d = 0.0_f64;
    for (i, &e) in z.iter().enumerate() {
        let f = norm.cdf(e);
        d = d.max((i as f64 + 1.0) / nf - f).max(f - i as f64 / nf);
    }
    let sq = nf.sqrt();
    let ks_p = kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d);

    let tx: Vec<f64> = points.iter().map(|p| p.theoretical).collect();
    let (mx, my) = (mean(&tx), mean(&z));
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (x, y) in tx.iter().zip(&z) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
    }
    let slope = sxy / sxx;
    Ok(QqAnalysis {
        points,
        slope,
        intercept: my - slope * mx,
        ks_statistic: d,
        ks_p,
        mean: m,
        std: s,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        self.edges.windows(2).map(|w| 0.5 * (w[0] + w[1]))
    }
}

/// Equal-width histogram over `[min, max]`; the maximum lands in the last
/// bin. A constant sample gets a unit-width range around its value.
pub fn histogram(values: &[f64], bins: usize) -> Result<Histogram> {
    if values.is_empty() || bins == 0 {
        return Err(Error::Domain(
            "histogram needs samples and at least one bin".into(),
        ));
    }
    let mut lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo.is_finite() && hi.is_finite()) {
        return Err(Error::Domain(
            "histogram input contains non-finite values".into(),
        ));
    }
    if hi == lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + i as f64 * width).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}

/// Pearson χ² statistic and p-value for counts against a uniform
/// expectation.
pub fn chi_square_uniform(counts: &[usize]) -> Result<(f64, f64)> {
    if counts.len() < 2 {
        return Err(Error::Domain("chi-square needs at least two bins".into()));
    }
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    if expected == 0.0 {
        return Err(Error::Domain("chi-square needs a non-empty sample".into()));
    }
    let stat: f64 = counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum();
    let dist =
        ChiSquared::new((counts.len() - 1) as f64).map_err(|e| Error::Numerical(e.to_string()))?;
    Ok((stat, dist.sf(stat)))
}

/// Fit statistics between an experimental and a model voltage trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub pearson_r: f64,
    pub nrmse: f64,
    pub nrmse_normalizer: String,
    pub peak_error: f64,
    pub residual_mean: f64,
    pub residual_std: f64,
    /// Shift applied to the model before comparison, s.
    pub alignment_lag_s: f64,
    pub n_samples: usize,
    pub qq_slope: Option<f64>,
    pub ks_p: Option<f64>,
    pub qq_points: Vec<QqPoint>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl ValidationReport {
    /// Computes every field from aligned experiment and model samples. The
    /// model prediction is the reference for NRMSE and peak error.
    pub fn from_aligned(exp: &[f64], model: &[f64], lag: f64) -> Result<Self> {
        check_pair(exp, model, 2)?;
        let res: Vec<f64> = exp.iter().zip(model).map(|(e, m)| e - m).collect();
        let mut warnings = Vec::new();
        let (qq_slope, ks_p, qq_points) = match qq_against_normal(&res) {
            Ok(qq) => (Some(qq.slope), Some(qq.ks_p), qq.points),
            Err(e) => {
                warnings.push(format!("residual Q-Q skipped: {e}"));
                (None, None, Vec::new())
            }
        };
        Ok(Self {
            pearson_r: pearson(exp, model)?,
            nrmse: nrmse(exp, model)?,
            nrmse_normalizer: NRMSE_NORMALIZER.to_string(),
            peak_error: peak_error(exp, model)?,
            residual_mean: mean(&res),
            residual_std: std_dev(&res),
            alignment_lag_s: lag,
            n_samples: exp.len(),
            qq_slope,
            ks_p,
            qq_points,
            warnings,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_extremes() {
        let a = [1.0, 2.0, 4.0, 3.0];
        let b: Vec<f64> = a.iter().map(|x| -x).collect();
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&a, &b).unwrap() + 1.0).abs() < 1e-15);
        assert!(pearson(&a, &[1.0; 4]).is_err());
        assert!(pearson(&a, &a[..3]).is_err());
    }

    #[test]
    fn nrmse_identities() {
        let r = [0.0, 1.0, 3.0, 2.0];
        assert_eq!(nrmse(&r, &r).unwrap(), 0.0);
        let m: Vec<f64> = r.iter().map(|x| x + 0.3).collect();
        assert!((nrmse(&m, &r).unwrap() - 0.1).abs() < 1e-15);
        assert!(nrmse(&r, &[1.0; 4]).is_err());
    }

    #[test]
    fn peak_error_ignores_timing() {
        let r = [0.0, 1.0, 2.0, 1.0];
        assert_eq!(peak_error(&r, &r).unwrap(), 0.0);
        let s: Vec<f64> = r.iter().map(|x| 1.1 * x).collect();
        assert!((peak_error(&s, &r).unwrap() - 0.1).abs() < 1e-12);
        assert_eq!(peak_error(&[2.0, 1.0, 0.0, 0.0], &r).unwrap(), 0.0);
        assert!(peak_error(&r, &[0.0, -1.0]).is_err());
    }

    #[test]
    fn residual_grid_mismatch() {
        let a = VoltageTrace::new(0.0, 0.01, vec![1.0; 5]).unwrap();
        let b = VoltageTrace::new(0.0, 0.02, vec![1.0; 5]).unwrap();
        assert!(matches!(residuals(&a, &b), Err(Error::Alignment(_))));
        assert_eq!(residuals(&a, &a).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn qq_degenerate_and_outlier() {
        assert!(qq_against_normal(&[1.0; 50]).is_err());
        assert!(qq_against_normal(&[1.0, 2.0]).is_err());
        let mut v = vec![1.0; 49];
        v.push(100.0);
        let qq = qq_against_normal(&v).unwrap();
        for w in qq.points.windows(2) {
            assert!(w[1].theoretical > w[0].theoretical);
            assert!(w[1].empirical >= w[0].empirical);
        }
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the Kolmogorov distribution
        assert!((kolmogorov_survival(1.36) - 0.0494).abs() < 5e-4);
        assert!((kolmogorov_survival(1.63) - 0.0098).abs() < 5e-4);
        assert!((kolmogorov_survival(0.5) - 0.9639).abs() < 5e-4);
        // both branches meet
        let (a, b) = (kolmogorov_survival(1.18 - 1e-9), kolmogorov_survival(1.18));
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn histogram_conserves_counts() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 * 0.37).sin()).collect();
        let h = histogram(&v, 17).unwrap();
        assert_eq!(h.total(), 1000);
        assert_eq!(h.edges.len(), 18);
        assert_eq!(histogram(&[2.0; 5], 4).unwrap().total(), 5);
    }

    #[test]
    fn chi_square_flat_counts() {
        let (stat, p) = chi_square_uniform(&[100; 10]).unwrap();
        assert_eq!(stat, 0.0);
        assert!((p - 1.0).abs() < 1e-12);
        let (_, p) = chi_square_uniform(&[10, 200, 10, 10]).unwrap();
        assert!(p < 1e-6);
    }
}
