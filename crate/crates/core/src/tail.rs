//! Lower-tail modelling of the combined gain.
//!
//! Summing the powers of `M` i.i.d. Rayleigh-faded antennas and dividing by
//! `M` gives a `Gamma(M, 1/M)` gain, so the gamma shape read off a
//! measured gain distribution acts as its effective number of degrees of
//! freedom. This module builds empirical CDFs, evaluates the gamma
//! reference, fits shape and scale, and turns quantiles into fading
//! margins `10 log10(Q(0.5) / Q(p))`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{select_subset, subset_gain, ChannelTensor, SubsetPolicy};
use crate::error::{invalid, Error, Result};
use crate::special::{
    digamma, gamma_density, gamma_p, gamma_q, ln_gamma, normal_quantile, trigamma,
};
use crate::stats::to_db;

/// Minimum expected count of samples below a quantile for it to be trusted.
pub const RELIABLE_TAIL_COUNT: f64 = 10.0;

pub const DEFAULT_OUTAGE_PROBABILITIES: [f64; 5] = [1e-1, 1e-2, 1e-3, 1e-4, 1e-5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMethod {
    /// Linear interpolation between order statistics placed at `(i - 0.5) / n`.
    #[default]
    Hazen,
}

/// Empirical CDF of a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
    method: QuantileMethod,
}

/// A quantile estimate with its sample-sufficiency verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileEstimate {
    pub value: f64,
    pub reliable: bool,
}

impl Ecdf {
    pub fn new(samples: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if let Some(i) = samples.iter().position(|x| !x.is_finite()) {
            return Err(invalid(format!("sample {i} is not finite")));
        }
        let mut sorted = samples;
        sorted.sort_by(f64::total_cmp);
        Ok(Self {
            sorted,
            method: QuantileMethod::Hazen,
        })
    }

    pub fn from_slice(samples: &[f64]) -> Result<Self> {
        Self::new(samples.to_vec())
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn method(&self) -> QuantileMethod {
        self.method
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn min(&self) -> f64 {
        self.sorted[0]
    }

    pub fn max(&self) -> f64 {
        self.sorted[self.sorted.len() - 1]
    }

    /// Fraction of samples not exceeding `x`.
    pub fn cdf(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.len() as f64
    }

    /// Hazen quantile. Outside the plotting positions of the extreme order
    /// statistics the extreme sample is returned.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("probability {p} outside (0, 1)")));
        }
        let n = self.len();
        let h = n as f64 * p + 0.5;
        if h <= 1.0 {
            return Ok(self.sorted[0]);
        }
        if h >= n as f64 {
            return Ok(self.sorted[n - 1]);
        }
        let i = h.floor() as usize;
        let w = h - i as f64;
        let lo = self.sorted[i - 1];
        let hi = self.sorted[i];
        Ok(lo + w * (hi - lo))
    }

    /// True when at least [`RELIABLE_TAIL_COUNT`] samples are expected on
    /// the short side of `p`.
    pub fn is_reliable(&self, p: f64) -> bool {
        let n = self.len() as f64;
        n * p.min(1.0 - p) >= RELIABLE_TAIL_COUNT
    }

    pub fn estimate(&self, p: f64) -> Result<QuantileEstimate> {
        Ok(QuantileEstimate {
            value: self.quantile(p)?,
            reliable: self.is_reliable(p),
        })
    }

    /// Up to `max_points` `(value, probability)` pairs at ranks spaced
    /// logarithmically from the minimum to the maximum sample, so both a
    /// log-probability tail plot and the bulk are resolved.
    pub fn log_spaced_points(&self, max_points: usize) -> Vec<(f64, f64)> {
        let n = self.len();
        let k = max_points.max(2);
        let mut ranks: Vec<usize> = (0..k)
            .map(|j| {
                let r = ((n as f64).ln() * j as f64 / (k - 1) as f64).exp();
                (r.round() as usize).clamp(1, n)
            })
            .collect();
        // dense upper half on a linear grid
        ranks.extend((1..=k / 2).map(|j| (n / 2 + j * (n - n / 2) / (k / 2)).clamp(1, n)));
        ranks.sort_unstable();
        ranks.dedup();
        ranks
            .into_iter()
            .map(|i| (self.sorted[i - 1], (i as f64 - 0.5) / n as f64))
            .collect()
    }
}

/// `P(X <= x)` for `X ~ Gamma(shape, 1/shape)`: `P(shape, shape * x)`.
pub fn gamma_reference_cdf(shape: f64, x: f64) -> Result<f64> {
    check_shape(shape)?;
    if x.is_nan() {
        return Err(invalid("x is NaN"));
    }
    Ok(gamma_p(shape, shape * x.max(0.0)))
}

fn check_shape(shape: f64) -> Result<()> {
    if !(shape > 0.0) || !shape.is_finite() {
        return Err(invalid(format!("gamma shape {shape} must be positive")));
    }
    Ok(())
}

/// Inverse of [`gamma_reference_cdf`] to about 1e-12 relative accuracy.
///
/// Newton's method on the log of the relevant tail probability, kept
/// inside a shrinking bracket and falling back to bisection.
pub fn gamma_quantile(shape: f64, p: f64) -> Result<f64> {
    check_shape(shape)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("probability {p} outside (0, 1)")));
    }
    let a = shape;
    let lower = p < 0.5;
    let target = if lower { p.ln() } else { (1.0 - p).ln() };
    // log tail probability and its derivative in y (unit scale)
    let eval = |y: f64| -> (f64, f64) {
        let tail = if lower { gamma_p(a, y) } else { gamma_q(a, y) };
        let dens = gamma_density(a, y);
        let dlog = if lower { dens / tail } else { -dens / tail };
        (tail.ln(), dlog)
    };

    let z = normal_quantile(p);
    let c = 1.0 / (9.0 * a);
    let wh = a * (1.0 - c + z * c.sqrt()).powi(3);
    let small = ((p.ln() + ln_gamma(a + 1.0)) / a).exp();
    let mut y = if wh > 0.0 && z > -3.0 {
        wh
    } else {
        small.min(wh.max(small))
    };
    if !(y > 0.0) || !y.is_finite() {
        y = a;
    }

    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let (g, dg) = eval(y);
        let err = g - target;
        // increasing log P / decreasing log Q: same sign logic via `lower`
        let too_high = if lower { err > 0.0 } else { err < 0.0 };
        if too_high {
            hi = hi.min(y);
        } else {
            lo = lo.max(y);
        }
        if err == 0.0 {
            break;
        }
        let mut next = y - err / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                if lo > 0.0 {
                    (lo * hi).sqrt()
                } else {
                    0.5 * hi
                }
            } else {
                2.0 * y.max(lo)
            };
        }
        let step = (next - y).abs();
        y = next;
        if step <= 1e-15 * y || (hi.is_finite() && hi - lo <= 1e-15 * y) {
            break;
        }
    }
    Ok(y / a)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    /// Method of moments: shape = mean^2 / var, scale = var / mean.
    MoM,
    /// Maximum likelihood.
    #[default]
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FitConstraint {
    /// Shape and scale estimated jointly.
    #[default]
    Joint,
    /// Scale tied to `1 / shape` (unit mean), only the shape is estimated.
    UnitMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub shape: f64,
    pub scale: f64,
    pub method: FitMethod,
    pub constraint: FitConstraint,
    pub sample_count: usize,
}

pub const MIN_FIT_SAMPLES: usize = 100;

struct Moments {
    mean: f64,
    var: f64,
    mean_ln: f64,
}

fn moments(samples: &[f64]) -> Result<Moments> {
    if samples.len() < MIN_FIT_SAMPLES {
        return Err(Error::InsufficientSamples {
            needed: MIN_FIT_SAMPLES,
            got: samples.len(),
        });
    }
    if let Some(i) = samples.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(invalid(format!(
            "sample {i} = {} is not a positive finite value",
            samples[i]
        )));
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mean_ln = samples.iter().map(|x| x.ln()).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(Error::Degenerate("samples have zero variance".into()));
    }
    Ok(Moments { mean, var, mean_ln })
}

/// Solves `ln k - digamma(k) = s` for `k > 0` (`s > 0`), a strictly
/// decreasing function of `k`, by bracketed Newton iteration.
fn solve_log_minus_digamma(s: f64) -> Result<f64> {
    if !(s > 0.0) || !s.is_finite() {
        return Err(Error::Degenerate(format!(
            "log-moment statistic {s} admits no gamma shape"
        )));
    }
    let f = |k: f64| k.ln() - digamma(k) - s;
    // Minka's closed-form start
    let mut k = (3.0 - s + ((s - 3.0).powi(2) + 24.0 * s).sqrt()) / (12.0 * s);
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    for _ in 0..200 {
        let fk = f(k);
        if fk > 0.0 {
            lo = lo.max(k);
        } else {
            hi = hi.min(k);
        }
        let dk = 1.0 / k - trigamma(k);
        let mut next = k - fk / dk;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = if hi.is_finite() {
                if lo > 0.0 {
                    (lo * hi).sqrt()
                } else {
                    0.5 * hi
                }
            } else {
                2.0 * k
            };
        }
        let step = (next - k).abs();
        k = next;
        if step <= 1e-10 * k {
            return Ok(k);
        }
    }
    Ok(k)
}

/// Fits a gamma distribution to positive samples.
pub fn fit_gamma(
    samples: &[f64],
    method: FitMethod,
    constraint: FitConstraint,
) -> Result<GammaFit> {
    let m = moments(samples)?;
    let (shape, scale) = match (method, constraint) {
        (FitMethod::MoM, FitConstraint::Joint) => (m.mean * m.mean / m.var, m.var / m.mean),
        (FitMethod::MoM, FitConstraint::UnitMean) => {
            let shape = m.mean * m.mean / m.var;
            (shape, 1.0 / shape)
        }
        (FitMethod::Mle, FitConstraint::Joint) => {
            let shape = solve_log_minus_digamma(m.mean.ln() - m.mean_ln)?;
            (shape, m.mean / shape)
        }
        (FitMethod::Mle, FitConstraint::UnitMean) => {
            // d/dk of the Gamma(k, 1/k) log-likelihood vanishes where
            // ln k - digamma(k) = mean(x) - mean(ln x) - 1
            let shape = solve_log_minus_digamma(m.mean - m.mean_ln - 1.0)?;
            (shape, 1.0 / shape)
        }
    };
    Ok(GammaFit {
        shape,
        scale,
        method,
        constraint,
        sample_count: samples.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofPoint {
    pub subset_size: usize,
    pub fit: GammaFit,
    /// Method-of-moments fit reported alongside.
    pub mom: GammaFit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofCurve {
    pub points: Vec<DofPoint>,
    pub policy: SubsetPolicy,
}

impl DofCurve {
    /// Least-squares slope of fitted shape against subset size.
    pub fn shape_slope(&self) -> f64 {
        let xs: Vec<f64> = self.points.iter().map(|p| p.subset_size as f64).collect();
        let ys: Vec<f64> = self.points.iter().map(|p| p.fit.shape).collect();
        let mx = xs.iter().sum::<f64>() / xs.len() as f64;
        let my = ys.iter().sum::<f64>() / ys.len() as f64;
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
        sxy / sxx
    }
}

/// Gamma fit of the normalized combined gain for every subset size.
pub fn dof_curve(
    tensor: &ChannelTensor,
    policy: &SubsetPolicy,
    method: FitMethod,
    constraint: FitConstraint,
) -> Result<DofCurve> {
    policy.validate(tensor.layout())?;
    let points = policy
        .sizes
        .par_iter()
        .map(|&k| {
            let subset = select_subset(tensor.layout(), policy.mode, k)?;
            let gains = subset_gain(tensor, &subset)?;
            Ok(DofPoint {
                subset_size: k,
                fit: fit_gamma(&gains, method, constraint)?,
                mom: fit_gamma(&gains, FitMethod::MoM, constraint)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DofCurve {
        points,
        policy: policy.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OffsetUnit {
    /// `10 log10(reference / empirical)` quantile ratio.
    #[default]
    Db,
    /// `reference - empirical` in linear gain.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfOffset {
    pub value: f64,
    pub unit: OffsetUnit,
    pub reliable: bool,
}

/// Horizontal gap between the `Gamma(shape, 1/shape)` reference and the
/// empirical CDF at probability `p`. Positive when the empirical tail is
/// heavier than the reference.
pub fn cdf_offset(ecdf: &Ecdf, shape: f64, p: f64, unit: OffsetUnit) -> Result<CdfOffset> {
    let reference = gamma_quantile(shape, p)?;
    let empirical = ecdf.estimate(p)?;
    let value = match unit {
        OffsetUnit::Db => {
            if !(empirical.value > 0.0) {
                return Err(Error::Degenerate(
                    "empirical quantile is not positive".into(),
                ));
            }
            to_db(reference / empirical.value)
        }
        OffsetUnit::Linear => reference - empirical.value,
    };
    Ok(CdfOffset {
        value,
        unit,
        reliable: empirical.reliable,
    })
}

/// Where the quantiles of a fading margin come from.
#[derive(Debug, Clone, Copy)]
pub enum MarginSource<'a> {
    Empirical(&'a Ecdf),
    /// `Gamma(shape, 1/shape)`.
    Analytic {
        shape: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FadingMargin {
    pub margin_db: f64,
    pub reliable: bool,
}

fn check_outage(p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 0.5) {
        return Err(invalid(format!("outage probability {p} outside (0, 0.5]")));
    }
    Ok(())
}

/// `10 log10(Q(0.5) / Q(p))`: how far below the median the gain falls with
/// probability `p`.
pub fn fading_margin(source: MarginSource<'_>, p: f64) -> Result<FadingMargin> {
    check_outage(p)?;
    match source {
        MarginSource::Analytic { shape } => Ok(FadingMargin {
            margin_db: to_db(gamma_quantile(shape, 0.5)? / gamma_quantile(shape, p)?),
            reliable: true,
        }),
        MarginSource::Empirical(ecdf) => {
            let median = ecdf.quantile(0.5)?;
            let q = ecdf.estimate(p)?;
            if !(q.value > 0.0) {
                return Err(Error::Degenerate(format!(
                    "empirical {p}-quantile is not positive"
                )));
            }
            Ok(FadingMargin {
                margin_db: to_db(median / q.value),
                reliable: q.reliable,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub subset_size: usize,
    pub outage_probability: f64,
    pub margin_db: f64,
    pub reliable: bool,
    /// Margin of the i.i.d. `Gamma(M, 1/M)` reference at the same point.
    pub iid_margin_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingMarginTable {
    pub rows: Vec<MarginRow>,
}

impl FadingMarginTable {
    pub fn unreliable_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.reliable).count()
    }

    pub fn get(&self, subset_size: usize, p: f64) -> Option<&MarginRow> {
        self.rows
            .iter()
            .find(|r| r.subset_size == subset_size && r.outage_probability == p)
    }
}

/// Empirical fading margins for every (subset size, outage probability).
pub fn fading_margin_table(
    tensor: &ChannelTensor,
    policy: &SubsetPolicy,
    probabilities: &[f64],
) -> Result<FadingMarginTable> {
    policy.validate(tensor.layout())?;
    for &p in probabilities {
        check_outage(p)?;
    }
    let per_size = policy
        .sizes
        .par_iter()
        .map(|&k| {
            let subset = select_subset(tensor.layout(), policy.mode, k)?;
            let ecdf = Ecdf::new(subset_gain(tensor, &subset)?)?;
            probabilities
                .iter()
                .map(|&p| {
                    let m = fading_margin(MarginSource::Empirical(&ecdf), p)?;
                    let iid = fading_margin(MarginSource::Analytic { shape: k as f64 }, p)?;
                    Ok(MarginRow {
                        subset_size: k,
                        outage_probability: p,
                        margin_db: m.margin_db,
                        reliable: m.reliable,
                        iid_margin_db: iid.margin_db,
                    })
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FadingMarginTable {
        rows: per_size.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::Dims;
    use crate::synth::{gen_correlated, gen_iid, SynthConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp1, Gamma};

    fn gamma_draws(shape: f64, n: usize, seed: u64) -> Vec<f64> {
        let d = Gamma::new(shape, 1.0 / shape).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| d.sample(&mut rng)).collect()
    }

    #[test]
    fn hazen_quantile_examples() {
        let e = Ecdf::from_slice(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(e.quantile(0.5).unwrap(), 2.5);
        // plotting positions 0.125, 0.375, ...
        assert_eq!(e.quantile(0.125).unwrap(), 1.0);
        assert_eq!(e.quantile(0.25).unwrap(), 1.5);
        assert_eq!(e.quantile(0.01).unwrap(), 1.0);
        assert_eq!(e.quantile(0.99).unwrap(), 4.0);
        assert!(e.quantile(0.0).is_err());
        assert!(e.quantile(1.0).is_err());
        assert!(Ecdf::new(vec![]).is_err());
        assert!(Ecdf::new(vec![1.0, f64::NAN]).is_err());
    }

    #[test]
    fn below_first_position_is_unreliable() {
        let e = Ecdf::new((1..=100).map(f64::from).collect()).unwrap();
        let q = e.estimate(0.001).unwrap();
        assert_eq!(q.value, 1.0);
        assert!(!q.reliable);
        assert!(e.estimate(0.1).unwrap().reliable);
        assert!(!e.estimate(0.05).unwrap().reliable);
    }

    #[test]
    fn exponential_median() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let xs: Vec<f64> = (0..1_000_000).map(|_| Exp1.sample(&mut rng)).collect();
        let e = Ecdf::new(xs).unwrap();
        // sd of the sample median is 1 / (2 f(m) sqrt(n)) = 1e-3
        assert_relative_eq!(e.quantile(0.5).unwrap(), 2f64.ln(), epsilon = 0.002);
    }

    #[test]
    fn reference_cdf_and_quantile_closed_forms() {
        assert_relative_eq!(
            gamma_reference_cdf(1.0, 2f64.ln()).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        let want = -(-1e-5f64).ln_1p();
        assert_relative_eq!(
            gamma_quantile(1.0, 1e-5).unwrap(),
            want,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            gamma_quantile(1.0, 0.5).unwrap(),
            2f64.ln(),
            max_relative = 1e-12
        );
        assert!(gamma_quantile(1.0, 0.0).is_err());
        assert!(gamma_quantile(1.0, 1.0).is_err());
        assert!(gamma_quantile(0.0, 0.5).is_err());
    }

    #[test]
    fn gamma_quantile_matches_statrs() {
        use statrs::distribution::{ContinuousCDF, Gamma as SGamma};
        for &shape in &[1.0, 2.0, 7.3, 32.0, 100.0] {
            let d = SGamma::new(shape, shape).unwrap(); // rate parameterization
            for &p in &[1e-7, 1e-5, 1e-3, 0.1, 0.5, 0.9, 0.999] {
                let ours = gamma_quantile(shape, p).unwrap();
                assert_relative_eq!(d.cdf(ours), p, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn median_of_gamma_100() {
        // numeric inverse cross-checked by Monte Carlo below
        let q = gamma_quantile(100.0, 0.5).unwrap();
        assert_relative_eq!(q, 0.996_667, epsilon = 1e-5);
        let xs = gamma_draws(100.0, 1_000_000, 8);
        let e = Ecdf::new(xs).unwrap();
        assert_relative_eq!(e.quantile(0.5).unwrap(), q, epsilon = 5e-4);
    }

    #[test]
    fn mom_identities() {
        // mean 1, population variance 0.25
        let xs: Vec<f64> = (0..200)
            .map(|i| if i % 2 == 0 { 0.5 } else { 1.5 })
            .collect();
        let fit = fit_gamma(&xs, FitMethod::MoM, FitConstraint::Joint).unwrap();
        assert_relative_eq!(fit.shape, 4.0, max_relative = 1e-12);
        assert_relative_eq!(fit.scale, 0.25, max_relative = 1e-12);
        assert_eq!(fit.sample_count, 200);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_gamma(&[1.0; 50], FitMethod::Mle, FitConstraint::Joint),
            Err(Error::InsufficientSamples { .. })
        ));
        let mut xs = vec![1.0; 150];
        xs[3] = 0.0;
        assert!(fit_gamma(&xs, FitMethod::Mle, FitConstraint::Joint).is_err());
        assert!(matches!(
            fit_gamma(&[2.0; 150], FitMethod::Mle, FitConstraint::Joint),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn mle_recovers_shape() {
        for (shape, seed) in [(1.0, 1), (4.0, 2), (100.0, 3)] {
            let xs = gamma_draws(shape, 1_000_000, seed);
            let mle = fit_gamma(&xs, FitMethod::Mle, FitConstraint::Joint).unwrap();
            let mom = fit_gamma(&xs, FitMethod::MoM, FitConstraint::Joint).unwrap();
            assert_relative_eq!(mle.shape, shape, max_relative = 0.05);
            assert_relative_eq!(mle.shape * mle.scale, 1.0, max_relative = 0.01);
            assert_relative_eq!(mle.shape, mom.shape, max_relative = 0.03);
            let tied = fit_gamma(&xs, FitMethod::Mle, FitConstraint::UnitMean).unwrap();
            assert_relative_eq!(tied.shape, shape, max_relative = 0.05);
            assert_relative_eq!(tied.scale, 1.0 / tied.shape);
        }
    }

    #[test]
    fn mle_solver_hits_tolerance() {
        for &k in &[0.3f64, 1.0, 12.5, 400.0] {
            let s = k.ln() - digamma(k);
            assert_relative_eq!(solve_log_minus_digamma(s).unwrap(), k, max_relative = 1e-9);
        }
    }

    #[test]
    fn iid_dof_is_linear() {
        let t = gen_iid(&SynthConfig::iid(Dims::new(2000, 10, 32), 4)).unwrap();
        let curve = dof_curve(
            &t,
            &SubsetPolicy::default_for(32),
            FitMethod::Mle,
            FitConstraint::Joint,
        )
        .unwrap();
        for p in &curve.points {
            let k = p.subset_size as f64;
            assert_relative_eq!(p.fit.shape, k, max_relative = 0.1);
            assert_relative_eq!(p.fit.scale, 1.0 / p.fit.shape, max_relative = 0.1);
        }
        assert!((curve.shape_slope() - 1.0).abs() < 0.1);
    }

    #[test]
    fn analytic_margins() {
        for &k in &[1.0, 8.0, 100.0] {
            let m = fading_margin(MarginSource::Analytic { shape: k }, 0.5).unwrap();
            assert!(m.margin_db.abs() < 1e-12);
        }
        let m1 = fading_margin(MarginSource::Analytic { shape: 1.0 }, 1e-5).unwrap();
        let closed = 10.0 * (2f64.ln() / -(-1e-5f64).ln_1p()).log10();
        assert_relative_eq!(m1.margin_db, closed, epsilon = 1e-9);
        assert_relative_eq!(m1.margin_db, 48.4, epsilon = 0.05);
        let m100 = fading_margin(MarginSource::Analytic { shape: 100.0 }, 1e-5).unwrap();
        assert!(m100.margin_db <= 4.3);
        assert!(fading_margin(MarginSource::Analytic { shape: 1.0 }, 0.6).is_err());
        assert!(fading_margin(MarginSource::Analytic { shape: 1.0 }, 0.0).is_err());
    }

    #[test]
    fn analytic_margin_monotonicity() {
        let ps = [0.3, 1e-1, 1e-2, 1e-3, 1e-4, 1e-5];
        let ks = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0];
        for &p in &ps {
            let ms: Vec<f64> = ks
                .iter()
                .map(|&k| {
                    fading_margin(MarginSource::Analytic { shape: k }, p)
                        .unwrap()
                        .margin_db
                })
                .collect();
            assert!(ms.windows(2).all(|w| w[1] < w[0]), "p={p}: {ms:?}");
        }
        for &k in &ks {
            let ms: Vec<f64> = ps
                .iter()
                .map(|&p| {
                    fading_margin(MarginSource::Analytic { shape: k }, p)
                        .unwrap()
                        .margin_db
                })
                .collect();
            assert!(ms.windows(2).all(|w| w[1] > w[0]), "k={k}: {ms:?}");
        }
    }

    #[test]
    fn empirical_margin_scale_invariant_and_flagged() {
        let xs = gamma_draws(4.0, 10_000, 5);
        let a = Ecdf::from_slice(&xs).unwrap();
        let b = Ecdf::new(xs.iter().map(|x| x * 17.0).collect()).unwrap();
        for &p in &[0.5, 0.1, 1e-3] {
            let ma = fading_margin(MarginSource::Empirical(&a), p).unwrap();
            let mb = fading_margin(MarginSource::Empirical(&b), p).unwrap();
            assert_relative_eq!(ma.margin_db, mb.margin_db, epsilon = 1e-10);
            assert!(ma.reliable);
        }
        let deep = fading_margin(MarginSource::Empirical(&a), 1e-5).unwrap();
        assert!(!deep.reliable);
    }

    #[test]
    fn self_offset_is_zero_and_correlation_gives_positive_offset() {
        let e = Ecdf::new(gamma_draws(10.0, 1_000_000, 9)).unwrap();
        let off = cdf_offset(&e, 10.0, 1e-2, OffsetUnit::Db).unwrap();
        assert!(off.value.abs() < 0.05, "{off:?}");
        assert!(off.reliable);

        let t = gen_correlated(&SynthConfig::correlated(
            Dims::new(4000, 16, 100),
            0.9,
            0.0,
            8,
            2,
        ))
        .unwrap();
        let all: Vec<usize> = (0..100).collect();
        let e = Ecdf::new(subset_gain(&t, &all).unwrap()).unwrap();
        let off = cdf_offset(&e, 100.0, 1e-3, OffsetUnit::Db).unwrap();
        assert!(off.value > 0.0, "{off:?}");
        let lin = cdf_offset(&e, 100.0, 1e-3, OffsetUnit::Linear).unwrap();
        assert!(lin.value > 0.0);
    }

    #[test]
    fn margin_table_shape() {
        let t = gen_iid(&SynthConfig::iid(Dims::new(100, 100, 8), 4)).unwrap();
        let policy = SubsetPolicy::default_for(8);
        let table = fading_margin_table(&t, &policy, &DEFAULT_OUTAGE_PROBABILITIES).unwrap();
        assert_eq!(table.rows.len(), 4 * 5);
        // 1e4 samples: 1e-4 and 1e-5 fall short of 10 tail samples
        assert_eq!(table.unreliable_count(), 4 * 2);
        for r in &table.rows {
            assert!(r.margin_db >= 0.0);
        }
        assert!(fading_margin_table(&t, &policy, &[0.7]).is_err());
    }
}
