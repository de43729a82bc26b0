//! Data conditioning: lost-sample detection, per-(frequency, antenna)
//! interpolation or removal of lost samples, time autocorrelation and the
//! Nyquist speed limit of the snapshot rate.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelMeta, ChannelTensor, Dims, C64, SPEED_OF_LIGHT};
use crate::error::{invalid, Error, Result};

pub const DEFAULT_THRESHOLD_DB: f64 = 15.0;
pub const DEFAULT_WINDOW: usize = 21;
/// Correlation magnitude below which samples count as decorrelated.
pub const DECORRELATION_LEVEL: f64 = 0.5;

/// Frequency-averaged, antenna-summed gain per time sample, in dB.
pub fn aggregate_gain_db(tensor: &ChannelTensor) -> Vec<f64> {
    let f = tensor.n_freq() as f64;
    (0..tensor.n_time())
        .map(|n| {
            let p: f64 = tensor.time_slice(n).iter().map(|h| h.norm_sqr()).sum();
            10.0 * (p / f).log10()
        })
        .collect()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Flags time samples whose aggregate gain falls more than `threshold_db`
/// below the median of the centred `window`.
///
/// Two passes: the second recomputes each window median with the first
/// pass's flags excluded, so a neighbouring burst cannot drag the reference
/// level down.
pub fn detect_lost_samples(
    tensor: &ChannelTensor,
    threshold_db: f64,
    window: usize,
) -> Result<Vec<bool>> {
    if window < 3 || window.is_multiple_of(2) {
        return Err(invalid(format!("window {window} must be odd and >= 3")));
    }
    if tensor.n_time() <= window {
        return Err(Error::InsufficientSamples {
            needed: window + 1,
            got: tensor.n_time(),
        });
    }
    if !(threshold_db > 0.0) {
        return Err(invalid("threshold_db must be positive"));
    }
    let level = aggregate_gain_db(tensor);
    let first = flag_pass(&level, threshold_db, window, None);
    Ok(flag_pass(&level, threshold_db, window, Some(&first)))
}

fn flag_pass(
    level: &[f64],
    threshold_db: f64,
    window: usize,
    exclude: Option<&[bool]>,
) -> Vec<bool> {
    let n_time = level.len();
    let half = window / 2;
    let mut scratch = Vec::with_capacity(window);
    (0..n_time)
        .map(|n| {
            // shift the window inward at the edges so it keeps full length
            let lo = n.saturating_sub(half).min(n_time - window);
            let hi = lo + window;
            scratch.clear();
            match exclude {
                Some(ex) => scratch.extend((lo..hi).filter(|&i| !ex[i]).map(|i| level[i])),
                None => scratch.extend_from_slice(&level[lo..hi]),
            }
            if scratch.is_empty() {
                scratch.extend_from_slice(&level[lo..hi]);
            }
            let reference = median(&mut scratch);
            level[n] < reference - threshold_db
        })
        .collect()
}

fn check_mask(tensor: &ChannelTensor, mask: &[bool]) -> Result<()> {
    if mask.len() != tensor.n_time() {
        return Err(Error::MaskLength {
            mask: mask.len(),
            n_time: tensor.n_time(),
        });
    }
    if mask.iter().all(|&b| b) {
        return Err(Error::AllMasked);
    }
    Ok(())
}

/// Replaces every masked coefficient by complex linear interpolation in
/// time between the nearest unmasked neighbours of the same (f, m).
/// Masked runs at either end take the nearest unmasked value.
pub fn interpolate_lost(tensor: &ChannelTensor, mask: &[bool]) -> Result<ChannelTensor> {
    check_mask(tensor, mask)?;
    let stride = tensor.n_freq() * tensor.n_ant();
    let mut data = tensor.data().to_vec();
    let kept: Vec<usize> = (0..mask.len()).filter(|&n| !mask[n]).collect();
    let mut next_kept: usize = 0;
    for n in 0..mask.len() {
        if !mask[n] {
            next_kept += 1;
            continue;
        }
        let before = next_kept.checked_sub(1).map(|i| kept[i]);
        let after = kept.get(next_kept).copied();
        let target = &mut data[n * stride..(n + 1) * stride];
        match (before, after) {
            (Some(a), Some(b)) => {
                let w = (n - a) as f64 / (b - a) as f64;
                let d = tensor.data();
                for (i, t) in target.iter_mut().enumerate() {
                    let ha = d[a * stride + i];
                    let hb = d[b * stride + i];
                    *t = ha + (hb - ha) * w;
                }
            }
            (Some(a), None) => target.copy_from_slice(tensor.time_slice(a)),
            (None, Some(b)) => target.copy_from_slice(tensor.time_slice(b)),
            (None, None) => unreachable!("check_mask rejects all-masked tensors"),
        }
    }
    Ok(handled(tensor, tensor.dims(), data))
}

fn handled(tensor: &ChannelTensor, dims: Dims, data: Vec<C64>) -> ChannelTensor {
    let meta: ChannelMeta = tensor.meta().clone();
    ChannelTensor::from_parts(dims, data, meta, None)
}

/// Removes masked time samples.
pub fn drop_lost(tensor: &ChannelTensor, mask: &[bool]) -> Result<ChannelTensor> {
    check_mask(tensor, mask)?;
    let kept = mask.iter().filter(|&&b| !b).count();
    let stride = tensor.n_freq() * tensor.n_ant();
    let mut data = Vec::with_capacity(kept * stride);
    for (n, &lost) in mask.iter().enumerate() {
        if !lost {
            data.extend_from_slice(tensor.time_slice(n));
        }
    }
    let dims = Dims::new(kept, tensor.n_freq(), tensor.n_ant());
    Ok(handled(tensor, dims, data))
}

/// Sorted indices of flagged samples.
pub fn lost_indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter_map(|(n, &b)| b.then_some(n))
        .collect()
}

/// Histogram of consecutive-run lengths of flagged samples.
pub fn burst_histogram(mask: &[bool]) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    let mut run = 0;
    for &b in mask.iter().chain(std::iter::once(&false)) {
        if b {
            run += 1;
        } else if run > 0 {
            *hist.entry(run).or_insert(0) += 1;
            run = 0;
        }
    }
    hist
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    /// Correlation of the complex coefficients.
    #[default]
    Complex,
    /// Correlation of the mean-removed envelope `|h|`.
    Envelope,
}

/// Normalized time autocorrelation magnitudes per (f, m).
#[derive(Debug, Clone, PartialEq)]
pub struct Autocorrelation {
    pub kind: CorrelationKind,
    pub max_lag: usize,
    pub n_freq: usize,
    pub n_ant: usize,
    /// `values[(f * M + m) * (max_lag + 1) + lag]`, lag 0 included.
    pub values: Vec<f64>,
    /// Per (f, m): smallest lag with magnitude below 0.5, if any.
    pub first_below: Vec<Option<usize>>,
}

impl Autocorrelation {
    pub fn at(&self, f: usize, m: usize, lag: usize) -> f64 {
        self.values[(f * self.n_ant + m) * (self.max_lag + 1) + lag]
    }

    /// Largest decorrelation lag over all (f, m); `None` if some series
    /// stays above 0.5 up to `max_lag`.
    pub fn summary(&self) -> Option<usize> {
        self.first_below
            .iter()
            .try_fold(0usize, |acc, l| l.map(|l| acc.max(l)))
    }

    /// Magnitude per lag averaged over all (f, m).
    pub fn mean_by_lag(&self) -> Vec<f64> {
        let series = self.n_freq * self.n_ant;
        (0..=self.max_lag)
            .map(|lag| {
                self.values
                    .chunks_exact(self.max_lag + 1)
                    .map(|c| c[lag])
                    .sum::<f64>()
                    / series as f64
            })
            .collect()
    }
}

/// Normalized autocorrelation `|r(l)| / r(0)` per (f, m) for lags
/// `0..=max_lag`, with `r(l) = sum_n x(n + l) conj(x(n)) / (N - l)`.
///
/// Samples flagged in `mask` are skipped: a lag pair contributes only when
/// both ends are unmasked.
pub fn time_autocorrelation(
    tensor: &ChannelTensor,
    max_lag: usize,
    kind: CorrelationKind,
    mask: Option<&[bool]>,
) -> Result<Autocorrelation> {
    let n_time = tensor.n_time();
    if max_lag == 0 {
        return Err(invalid("max_lag must be at least 1"));
    }
    if 2 * max_lag >= n_time {
        return Err(invalid(format!(
            "max_lag {max_lag} must be below N/2 = {}",
            n_time / 2
        )));
    }
    if let Some(m) = mask {
        check_mask(tensor, m)?;
    }
    let keep = |n: usize| mask.is_none_or(|m| !m[n]);
    let stride = tensor.n_freq() * tensor.n_ant();

    let series: Vec<C64> = match kind {
        CorrelationKind::Complex => tensor.data().to_vec(),
        CorrelationKind::Envelope => {
            let mut mean = vec![0.0; stride];
            let mut count = 0.0;
            for n in (0..n_time).filter(|&n| keep(n)) {
                for (acc, h) in mean.iter_mut().zip(tensor.time_slice(n)) {
                    *acc += h.norm();
                }
                count += 1.0;
            }
            mean.iter_mut().for_each(|m| *m /= count);
            tensor
                .data()
                .chunks_exact(stride)
                .flat_map(|slice| {
                    slice
                        .iter()
                        .zip(&mean)
                        .map(|(h, mu)| C64::new(h.norm() - mu, 0.0))
                        .collect::<Vec<_>>()
                })
                .collect()
        }
    };

    let mut values = vec![0.0; stride * (max_lag + 1)];
    let mut energy = vec![0.0; stride];
    let mut count0 = 0usize;
    for n in (0..n_time).filter(|&n| keep(n)) {
        for (e, h) in energy.iter_mut().zip(&series[n * stride..(n + 1) * stride]) {
            *e += h.norm_sqr();
        }
        count0 += 1;
    }
    let mut acc = vec![C64::new(0.0, 0.0); stride];
    for lag in 1..=max_lag {
        acc.iter_mut().for_each(|a| *a = C64::new(0.0, 0.0));
        let mut count = 0usize;
        for n in 0..n_time - lag {
            if !(keep(n) && keep(n + lag)) {
                continue;
            }
            let a = &series[(n + lag) * stride..(n + lag + 1) * stride];
            let b = &series[n * stride..(n + 1) * stride];
            for ((s, x), y) in acc.iter_mut().zip(a).zip(b) {
                *s += x * y.conj();
            }
            count += 1;
        }
        for (i, s) in acc.iter().enumerate() {
            let r0 = energy[i] / count0 as f64;
            values[i * (max_lag + 1) + lag] = if r0 > 0.0 && count > 0 {
                (s.norm() / count as f64) / r0
            } else {
                1.0
            };
        }
    }
    for i in 0..stride {
        values[i * (max_lag + 1)] = 1.0;
    }
    let first_below = values
        .chunks_exact(max_lag + 1)
        .map(|c| (1..=max_lag).find(|&l| c[l] < DECORRELATION_LEVEL))
        .collect();
    Ok(Autocorrelation {
        kind,
        max_lag,
        n_freq: tensor.n_freq(),
        n_ant: tensor.n_ant(),
        values,
        first_below,
    })
}

/// Largest UE speed the snapshot rate resolves without Doppler aliasing:
/// `c * f_rep / (2 * f_c)`.
pub fn max_ue_speed(rep_rate_hz: f64, carrier_freq_hz: f64) -> Result<f64> {
    if !(rep_rate_hz > 0.0) || !(carrier_freq_hz > 0.0) {
        return Err(invalid(
            "repetition rate and carrier frequency must be positive",
        ));
    }
    Ok(SPEED_OF_LIGHT * rep_rate_hz / (2.0 * carrier_freq_hz))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcOptions {
    pub threshold_db: f64,
    pub window: usize,
    pub max_lag: usize,
    pub correlation: CorrelationKind,
    /// Speed the UE is assumed to move at, checked against the limit.
    pub ue_speed_mps: f64,
}

impl Default for QcOptions {
    fn default() -> Self {
        Self {
            threshold_db: DEFAULT_THRESHOLD_DB,
            window: DEFAULT_WINDOW,
            max_lag: 10,
            correlation: CorrelationKind::Complex,
            ue_speed_mps: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QcReport {
    pub lost_indices: Vec<usize>,
    pub burst_histogram: BTreeMap<usize, usize>,
    pub correlation: CorrelationKind,
    /// Per (f, m) in `f * M + m` order: smallest lag with |correlation| < 0.5.
    pub autocorr_first_below: Vec<Option<usize>>,
    /// Maximum of `autocorr_first_below`.
    pub autocorr_summary: Option<usize>,
    pub max_ue_speed_mps: f64,
    pub ue_speed_mps: f64,
    pub nyquist_ok: bool,
}

/// Detection, burst statistics, autocorrelation (skipping flagged samples)
/// and the speed check in one pass.
pub fn run_qc(
    tensor: &ChannelTensor,
    opts: &QcOptions,
) -> Result<(QcReport, Vec<bool>, Autocorrelation)> {
    let mask = detect_lost_samples(tensor, opts.threshold_db, opts.window)?;
    let acf = time_autocorrelation(tensor, opts.max_lag, opts.correlation, Some(&mask))?;
    let meta = tensor.meta();
    let v_max = max_ue_speed(meta.rep_rate_hz, meta.carrier_freq_hz)?;
    let report = QcReport {
        lost_indices: lost_indices(&mask),
        burst_histogram: burst_histogram(&mask),
        correlation: opts.correlation,
        autocorr_summary: acf.summary(),
        autocorr_first_below: acf.first_below.clone(),
        max_ue_speed_mps: v_max,
        ue_speed_mps: opts.ue_speed_mps,
        nyquist_ok: opts.ue_speed_mps <= v_max,
    };
    Ok((report, mask, acf))
}
