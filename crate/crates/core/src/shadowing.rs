//! Large-scale fading: aggregate dB gain per time sample, least-squares
//! linear detrending and a normal fit of the dB residuals (log-normal
//! shadowing).
//!
//! Unlike the hardening and tail analyses this works on raw coefficients,
//! so intercepts are absolute dB levels.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelTensor;
use crate::error::{invalid, Error, Result};
use crate::special::{normal_cdf, normal_quantile};
use crate::stats::{ks_critical_1pct, ks_distance};

pub const MIN_NORMAL_FIT_SAMPLES: usize = 30;

fn sample_gain_db(tensor: &ChannelTensor, n: usize) -> Result<f64> {
    let p: f64 = tensor.time_slice(n).iter().map(|h| h.norm_sqr()).sum();
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::ZeroPower);
    }
    Ok(10.0 * (p / tensor.n_freq() as f64).log10())
}

/// `g(n) = 10 log10((1/F) sum_f sum_m |h(n, f, m)|^2)` for every sample.
pub fn large_scale_series(tensor: &ChannelTensor) -> Result<Vec<f64>> {
    if tensor.has_flagged_samples() {
        return Err(Error::UnhandledLostSamples);
    }
    (0..tensor.n_time())
        .map(|n| sample_gain_db(tensor, n))
        .collect()
}

/// Aggregate gain of the samples not flagged in `mask`, with their
/// original time indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LargeScaleSeries {
    pub index: Vec<usize>,
    pub g_db: Vec<f64>,
}

pub fn large_scale_series_masked(
    tensor: &ChannelTensor,
    mask: &[bool],
) -> Result<LargeScaleSeries> {
    if mask.len() != tensor.n_time() {
        return Err(Error::MaskLength {
            mask: mask.len(),
            n_time: tensor.n_time(),
        });
    }
    let index: Vec<usize> = (0..tensor.n_time()).filter(|&n| !mask[n]).collect();
    if index.is_empty() {
        return Err(Error::AllMasked);
    }
    let g_db = index
        .iter()
        .map(|&n| sample_gain_db(tensor, n))
        .collect::<Result<_>>()?;
    Ok(LargeScaleSeries { index, g_db })
}

/// Ordinary least-squares line `y = k x + m` with residuals and the usual
/// standard errors (residual variance with `n - 2` degrees of freedom).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope_k: f64,
    pub intercept_m: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    pub residuals: Vec<f64>,
}

/// Detrends a series sampled at `x = 0, 1, ..., n - 1`.
pub fn detrend_linear(series: &[f64]) -> Result<LinearFit> {
    let x: Vec<f64> = (0..series.len()).map(|i| i as f64).collect();
    detrend_linear_at(&x, series)
}

/// Detrends `y` against an arbitrary abscissa.
pub fn detrend_linear_at(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(invalid(format!(
            "abscissa has {} points, series {}",
            x.len(),
            y.len()
        )));
    }
    let n = y.len();
    if n < 3 {
        return Err(Error::InsufficientSamples { needed: 3, got: n });
    }
    if let Some(i) = x.iter().chain(y).position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(i % n));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("constant abscissa".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope_k = sxy / sxx;
    let intercept_m = my - slope_k * mx;
    // centered form keeps the residual mean at rounding level
    let residuals: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - my) - slope_k * (a - mx))
        .collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let s2 = rss / (nf - 2.0);
    Ok(LinearFit {
        slope_k,
        intercept_m,
        slope_se: (s2 / sxx).sqrt(),
        intercept_se: (s2 * (1.0 / nf + mx * mx / sxx)).sqrt(),
        residuals,
    })
}

/// Normal fit of dB residuals: sample mean and unbiased sample std.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalFit {
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub sample_count: usize,
}

impl NormalFit {
    pub fn cdf(&self, x: f64) -> f64 {
        if self.sigma_hat == 0.0 {
            return if x >= self.mu_hat { 1.0 } else { 0.0 };
        }
        normal_cdf((x - self.mu_hat) / self.sigma_hat)
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("probability {p} outside (0, 1)")));
        }
        Ok(self.mu_hat + self.sigma_hat * normal_quantile(p))
    }

    /// KS distance of `samples` from this fit, and whether it passes at the
    /// 1 % level.
    pub fn ks_test(&self, samples: &[f64]) -> (f64, bool) {
        let d = ks_distance(samples, |x| self.cdf(x));
        (d, d <= ks_critical_1pct(samples.len()))
    }
}

pub fn fit_lognormal(residuals: &[f64]) -> Result<NormalFit> {
    let n = residuals.len();
    if n < MIN_NORMAL_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_NORMAL_FIT_SAMPLES,
            got: n,
        });
    }
    let nf = n as f64;
    let mu_hat = residuals.iter().sum::<f64>() / nf;
    let ss: f64 = residuals.iter().map(|r| (r - mu_hat) * (r - mu_hat)).sum();
    Ok(NormalFit {
        mu_hat,
        sigma_hat: (ss / (nf - 1.0)).sqrt(),
        sample_count: n,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub residual_db: f64,
    pub empirical: f64,
    pub fitted: f64,
}

/// Empirical residual CDF at (at most) `max_points` evenly spaced ranks,
/// side by side with the fitted normal CDF.
pub fn residual_cdf_table(residuals: &[f64], fit: &NormalFit, max_points: usize) -> Vec<CdfRow> {
    let mut sorted = residuals.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 {
        return Vec::new();
    }
    let k = max_points.clamp(2, n.max(2));
    let mut ranks: Vec<usize> = (0..k).map(|j| j * (n - 1) / (k - 1)).collect();
    ranks.dedup();
    ranks
        .into_iter()
        .map(|i| CdfRow {
            residual_db: sorted[i],
            empirical: (i as f64 + 0.5) / n as f64,
            fitted: fit.cdf(sorted[i]),
        })
        .collect()
}

/// Minimum and maximum residual.
pub fn shadowing_span(residuals: &[f64]) -> Result<(f64, f64)> {
    if residuals.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(residuals
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &r| {
            (lo.min(r), hi.max(r))
        }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct ShadowingOptions {
    /// Samples before this index are left out of the regression.
    #[serde(default)]
    pub from_sample: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowingFit {
    pub slope_k: f64,
    pub intercept_m: f64,
    pub slope_se: f64,
    pub intercept_se: f64,
    /// Time index of each regression point.
    pub sample_index: Vec<usize>,
    pub g_db: Vec<f64>,
    pub residuals: Vec<f64>,
    pub mu_hat: f64,
    pub sigma_hat: f64,
    pub span: (f64, f64),
}

impl ShadowingFit {
    pub fn trend_db(&self, n: usize) -> f64 {
        self.slope_k * n as f64 + self.intercept_m
    }
}

/// Full large-scale analysis of a tensor. Samples flagged in the tensor's
/// lost mask are left out; the regression runs on the original time
/// indices so the trend stays in dB per sample.
pub fn fit_shadowing(tensor: &ChannelTensor, opts: &ShadowingOptions) -> Result<ShadowingFit> {
    if opts.from_sample >= tensor.n_time() {
        return Err(invalid(format!(
            "from_sample {} leaves no samples out of {}",
            opts.from_sample,
            tensor.n_time()
        )));
    }
    let mask: Vec<bool> = match tensor.lost_mask() {
        Some(m) => m
            .iter()
            .enumerate()
            .map(|(n, &lost)| lost || n < opts.from_sample)
            .collect(),
        None => (0..tensor.n_time()).map(|n| n < opts.from_sample).collect(),
    };
    let series = large_scale_series_masked(tensor, &mask)?;
    let x: Vec<f64> = series.index.iter().map(|&n| n as f64).collect();
    let line = detrend_linear_at(&x, &series.g_db)?;
    let normal = fit_lognormal(&line.residuals)?;
    let span = shadowing_span(&line.residuals)?;
    Ok(ShadowingFit {
        slope_k: line.slope_k,
        intercept_m: line.intercept_m,
        slope_se: line.slope_se,
        intercept_se: line.intercept_se,
        sample_index: series.index,
        g_db: series.g_db,
        residuals: line.residuals,
        mu_hat: normal.mu_hat,
        sigma_hat: normal.sigma_hat,
        span,
    })
}
