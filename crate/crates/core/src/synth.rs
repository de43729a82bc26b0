//! Synthetic channel tensors with known statistics.
//!
//! Every generator is a pure function of its configuration and seed. Each
//! stochastic component draws from its own ChaCha stream derived from the
//! seed, so enabling one component never perturbs another, and parallel
//! generation is bit-identical to serial generation.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::channel::{ArrayLayout, ChannelMeta, ChannelTensor, Dims, UeOrientation, C64};
use crate::error::{invalid, Result};

mod stream {
    pub const SMALL_SCALE: u64 = 1;
    pub const LOS_PHASE: u64 = 2;
    pub const SHADOWING: u64 = 3;
    pub const ANTENNA_OFFSETS: u64 = 4;
    pub const LOST_SAMPLES: u64 = 5;
    pub const LAYOUT: u64 = 6;
}

fn stream_rng(seed: u64, component: u64, chunk: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((component << 48) | chunk);
    rng
}

#[inline]
fn cn01<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * FRAC_1_SQRT_2, im * FRAC_1_SQRT_2)
}

fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Small-scale fading model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FadingModel {
    /// Independent CN(0, 1) coefficients.
    Iid,
    /// Exponential correlation `spatial_rho^|i-j|` across antenna index,
    /// first-order autoregression in time, and `n_delay_taps` equal-power
    /// delay taps shaping the frequency correlation.
    Correlated {
        spatial_rho: f64,
        temporal_rho: f64,
        n_delay_taps: usize,
    },
    /// Static line-of-sight component plus CN(0, 1) scatter, unit mean gain.
    Rician { k_factor: f64 },
}

/// Large-scale overlay on the frequency- and antenna-aggregate gain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrendProfile {
    /// dB per time sample.
    pub slope_k: f64,
    /// Aggregate gain at sample 0, dB.
    pub intercept_m: f64,
    /// Standard deviation of the shadowing process, dB.
    pub shadow_sigma: f64,
    /// Moving-average length of the shadowing process, samples.
    #[serde(default = "one")]
    pub shadow_coherence: usize,
    /// Spread of constant per-antenna gains, dB.
    #[serde(default)]
    pub per_antenna_offset_sigma: f64,
}

fn one() -> usize {
    1
}

impl TrendProfile {
    pub fn validate(&self) -> Result<()> {
        if !(self.shadow_sigma >= 0.0) || !self.shadow_sigma.is_finite() {
            return Err(invalid("shadow_sigma must be a finite value >= 0"));
        }
        if self.shadow_coherence < 1 {
            return Err(invalid("shadow_coherence must be >= 1"));
        }
        if !(self.per_antenna_offset_sigma >= 0.0) {
            return Err(invalid("per_antenna_offset_sigma must be >= 0"));
        }
        if !self.slope_k.is_finite() || !self.intercept_m.is_finite() {
            return Err(invalid("trend slope and intercept must be finite"));
        }
        Ok(())
    }
}

/// Default burst-length probabilities for lengths 1..=4.
pub const DEFAULT_BURST_DIST: [f64; 4] = [0.6, 0.3, 0.07, 0.03];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Expected fraction of time samples lost.
    pub rate: f64,
    /// Attenuation of a lost sample, dB.
    pub depth_db: f64,
    /// Probabilities of burst lengths 1, 2, 3, 4.
    #[serde(default = "default_burst_dist")]
    pub burst_dist: [f64; 4],
}

fn default_burst_dist() -> [f64; 4] {
    DEFAULT_BURST_DIST
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArraySpec {
    #[default]
    CoLocated,
    Distributed {
        extent_m: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub dims: Dims,
    pub model: FadingModel,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub large_scale: Option<TrendProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_samples: Option<LossConfig>,
    #[serde(default)]
    pub array: ArraySpec,
    #[serde(default = "default_carrier")]
    pub carrier_freq_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_rep_rate")]
    pub rep_rate_hz: f64,
    #[serde(default = "default_orientation")]
    pub ue_orientation: UeOrientation,
}

fn default_carrier() -> f64 {
    3.7e9
}
fn default_bandwidth() -> f64 {
    20e6
}
fn default_rep_rate() -> f64 {
    100.0
}
fn default_orientation() -> UeOrientation {
    UeOrientation::Vertical
}

impl SynthConfig {
    pub fn new(dims: Dims, model: FadingModel, seed: u64) -> Self {
        Self {
            dims,
            model,
            seed,
            large_scale: None,
            lost_samples: None,
            array: ArraySpec::CoLocated,
            carrier_freq_hz: default_carrier(),
            bandwidth_hz: default_bandwidth(),
            rep_rate_hz: default_rep_rate(),
            ue_orientation: default_orientation(),
        }
    }

    pub fn iid(dims: Dims, seed: u64) -> Self {
        Self::new(dims, FadingModel::Iid, seed)
    }

    pub fn correlated(
        dims: Dims,
        spatial_rho: f64,
        temporal_rho: f64,
        n_delay_taps: usize,
        seed: u64,
    ) -> Self {
        Self::new(
            dims,
            FadingModel::Correlated {
                spatial_rho,
                temporal_rho,
                n_delay_taps,
            },
            seed,
        )
    }

    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        match self.model {
            FadingModel::Iid => {}
            FadingModel::Correlated {
                spatial_rho,
                temporal_rho,
                n_delay_taps,
            } => {
                if !(0.0..1.0).contains(&spatial_rho) {
                    return Err(invalid(format!("spatial_rho {spatial_rho} outside [0, 1)")));
                }
                if !(0.0..1.0).contains(&temporal_rho) {
                    return Err(invalid(format!(
                        "temporal_rho {temporal_rho} outside [0, 1)"
                    )));
                }
                if n_delay_taps < 1 || n_delay_taps > self.dims.n_freq {
                    return Err(invalid(format!(
                        "n_delay_taps {n_delay_taps} outside [1, F={}]",
                        self.dims.n_freq
                    )));
                }
            }
            FadingModel::Rician { k_factor } => {
                if !(k_factor >= 0.0) || !k_factor.is_finite() {
                    return Err(invalid(format!("k_factor {k_factor} must be >= 0")));
                }
            }
        }
        if let Some(p) = &self.large_scale {
            p.validate()?;
        }
        if let Some(l) = &self.lost_samples {
            validate_loss(l.rate, l.depth_db, &l.burst_dist)?;
        }
        for (name, v) in [
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("rep_rate_hz", self.rep_rate_hz),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    pub fn meta(&self) -> ChannelMeta {
        let layout = match self.array {
            ArraySpec::CoLocated => ArrayLayout::co_located(self.dims.n_ant, self.carrier_freq_hz),
            ArraySpec::Distributed { extent_m } => ArrayLayout::distributed(
                self.dims.n_ant,
                extent_m,
                stream_rng(self.seed, stream::LAYOUT, 0).random(),
            ),
        };
        ChannelMeta {
            carrier_freq_hz: self.carrier_freq_hz,
            bandwidth_hz: self.bandwidth_hz,
            rep_rate_hz: self.rep_rate_hz,
            layout,
            ue_orientation: self.ue_orientation,
        }
    }
}

/// Output of the full synthesis pipeline.
#[derive(Debug, Clone)]
pub struct Synthesized {
    pub tensor: ChannelTensor,
    /// Ground-truth lost-sample mask when loss injection was configured.
    pub truth_mask: Option<Vec<bool>>,
}

/// Small-scale model, then the large-scale overlay, then lost samples.
pub fn synthesize(cfg: &SynthConfig) -> Result<Synthesized> {
    cfg.validate()?;
    let mut tensor = match cfg.model {
        FadingModel::Iid => gen_iid(cfg)?,
        FadingModel::Correlated { .. } => gen_correlated(cfg)?,
        FadingModel::Rician { .. } => gen_rician(cfg)?,
    };
    if let Some(profile) = &cfg.large_scale {
        tensor = apply_large_scale(&tensor, profile, cfg.seed)?;
    }
    let mut truth_mask = None;
    if let Some(loss) = &cfg.lost_samples {
        let (t, mask) = inject_lost_samples(
            &tensor,
            loss.rate,
            loss.depth_db,
            &loss.burst_dist,
            cfg.seed,
        )?;
        tensor = t;
        truth_mask = Some(mask);
    }
    Ok(Synthesized { tensor, truth_mask })
}

/// I.i.d. circularly-symmetric CN(0, 1) coefficients.
pub fn gen_iid(cfg: &SynthConfig) -> Result<ChannelTensor> {
    cfg.validate()?;
    let dims = cfg.dims;
    let stride = dims.n_freq * dims.n_ant;
    let mut data = vec![C64::new(0.0, 0.0); dims.len()];
    data.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(n, slice)| {
            let mut rng = stream_rng(cfg.seed, stream::SMALL_SCALE, n as u64);
            slice.iter_mut().for_each(|h| *h = cn01(&mut rng));
        });
    ChannelTensor::new(dims, data, cfg.meta())
}

/// Correlated Rayleigh fading (see [`FadingModel::Correlated`]).
///
/// Per time sample and delay tap, an antenna vector with covariance
/// `rho^|i-j|` is drawn as an autoregression along the antenna index; the tap
/// coefficients evolve in time as an AR(1) process; the frequency response is
/// the DFT of the equal-power taps. Every marginal stays CN(0, 1).
pub fn gen_correlated(cfg: &SynthConfig) -> Result<ChannelTensor> {
    cfg.validate()?;
    let FadingModel::Correlated {
        spatial_rho,
        temporal_rho,
        n_delay_taps,
    } = cfg.model
    else {
        return Err(invalid("gen_correlated requires the correlated model"));
    };
    let Dims {
        n_time,
        n_freq,
        n_ant,
    } = cfg.dims;
    let taps = n_delay_taps;
    let spatial_innov = (1.0 - spatial_rho * spatial_rho).sqrt();
    let temporal_innov = (1.0 - temporal_rho * temporal_rho).sqrt();
    let tap_gain = (taps as f64).sqrt().recip();

    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_freq);
    let mut rng = stream_rng(cfg.seed, stream::SMALL_SCALE, 0);
    // state[l * M + m]
    let mut state = vec![C64::new(0.0, 0.0); taps * n_ant];
    let mut innovation = vec![C64::new(0.0, 0.0); n_ant];
    let mut buf = vec![C64::new(0.0, 0.0); n_freq];
    let mut data = vec![C64::new(0.0, 0.0); cfg.dims.len()];

    for n in 0..n_time {
        for l in 0..taps {
            let mut prev = cn01(&mut rng);
            innovation[0] = prev;
            for slot in innovation.iter_mut().skip(1) {
                prev = spatial_rho * prev + spatial_innov * cn01(&mut rng);
                *slot = prev;
            }
            let tap_state = &mut state[l * n_ant..(l + 1) * n_ant];
            if n == 0 {
                tap_state.copy_from_slice(&innovation);
            } else {
                for (g, s) in tap_state.iter_mut().zip(&innovation) {
                    *g = temporal_rho * *g + temporal_innov * s;
                }
            }
        }
        for m in 0..n_ant {
            buf.iter_mut().for_each(|b| *b = C64::new(0.0, 0.0));
            for l in 0..taps {
                buf[l] = state[l * n_ant + m] * tap_gain;
            }
            fft.process(&mut buf);
            for (f, &h) in buf.iter().enumerate() {
                data[(n * n_freq + f) * n_ant + m] = h;
            }
        }
    }
    ChannelTensor::new(cfg.dims, data, cfg.meta())
}

/// Rician fading: a static line-of-sight term whose phase follows the array
/// geometry for a random arrival direction, plus CN(0, 1) scatter, scaled
/// to unit mean gain.
pub fn gen_rician(cfg: &SynthConfig) -> Result<ChannelTensor> {
    cfg.validate()?;
    let FadingModel::Rician { k_factor } = cfg.model else {
        return Err(invalid("gen_rician requires the Rician model"));
    };
    let meta = cfg.meta();
    let mut los_rng = stream_rng(cfg.seed, stream::LOS_PHASE, 0);
    let z: f64 = los_rng.random_range(-1.0..1.0);
    let phi: f64 = los_rng.random_range(0.0..TAU);
    let r = (1.0 - z * z).sqrt();
    let dir = [r * phi.cos(), r * phi.sin(), z];
    let wavenumber = TAU * cfg.carrier_freq_hz / crate::channel::SPEED_OF_LIGHT;
    let los_amp = (k_factor / (k_factor + 1.0)).sqrt();
    let nlos_amp = (k_factor + 1.0).sqrt().recip();
    let los: Vec<C64> = meta
        .layout
        .antennas
        .iter()
        .map(|a| {
            let path = a.position[0] * dir[0] + a.position[1] * dir[1] + a.position[2] * dir[2];
            C64::from_polar(los_amp, wavenumber * path)
        })
        .collect();

    let dims = cfg.dims;
    let stride = dims.n_freq * dims.n_ant;
    let mut data = vec![C64::new(0.0, 0.0); dims.len()];
    data.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(n, slice)| {
            let mut rng = stream_rng(cfg.seed, stream::SMALL_SCALE, n as u64);
            for snap in slice.chunks_exact_mut(dims.n_ant) {
                for (h, l) in snap.iter_mut().zip(&los) {
                    *h = l + cn01(&mut rng) * nlos_amp;
                }
            }
        });
    ChannelTensor::new(dims, data, meta)
}

/// Imposes a dB trend `k*n + m`, smoothed Gaussian shadowing and constant
/// per-antenna offsets on a unit-mean-gain tensor, so that the frequency
/// average of the antenna-summed gain follows the profile.
///
/// The shadowing process is white Gaussian noise smoothed by a moving
/// average of `shadow_coherence` samples and rescaled to unit variance
/// before applying `shadow_sigma`. Antenna offsets are centered to zero mean
/// in dB so the aggregate level stays at the intercept.
pub fn apply_large_scale(
    tensor: &ChannelTensor,
    profile: &TrendProfile,
    seed: u64,
) -> Result<ChannelTensor> {
    profile.validate()?;
    let shadow = shadowing_process(
        tensor.n_time(),
        profile.shadow_coherence,
        &mut stream_rng(seed, stream::SHADOWING, 0),
    );
    let n_ant = tensor.n_ant();
    let mut offsets: Vec<f64> = {
        let mut rng = stream_rng(seed, stream::ANTENNA_OFFSETS, 0);
        (0..n_ant)
            .map(|_| profile.per_antenna_offset_sigma * standard_normal(&mut rng))
            .collect()
    };
    if n_ant > 1 {
        let mean = offsets.iter().sum::<f64>() / n_ant as f64;
        offsets.iter_mut().for_each(|o| *o -= mean);
    }
    let antenna_amp: Vec<f64> = offsets.iter().map(|o| 10f64.powf(o / 20.0)).collect();
    let array_db = 10.0 * (n_ant as f64).log10();

    let stride = tensor.n_freq() * n_ant;
    let mut data = tensor.data().to_vec();
    data.par_chunks_mut(stride)
        .enumerate()
        .for_each(|(n, slice)| {
            let level_db =
                profile.slope_k * n as f64 + profile.intercept_m + profile.shadow_sigma * shadow[n]
                    - array_db;
            let amp = 10f64.powf(level_db / 20.0);
            for snap in slice.chunks_exact_mut(n_ant) {
                for (h, a) in snap.iter_mut().zip(&antenna_amp) {
                    *h *= amp * a;
                }
            }
        });
    Ok(tensor.with_data(data))
}

/// Unit-variance moving-average-smoothed Gaussian sequence.
pub(crate) fn shadowing_process<R: Rng + ?Sized>(
    n: usize,
    coherence: usize,
    rng: &mut R,
) -> Vec<f64> {
    let white: Vec<f64> = (0..n + coherence - 1)
        .map(|_| standard_normal(rng))
        .collect();
    let gain = (coherence as f64).sqrt().recip();
    let mut acc: f64 = white[..coherence].iter().sum();
    let mut out = Vec::with_capacity(n);
    out.push(acc * gain);
    for i in 1..n {
        acc += white[i + coherence - 1] - white[i - 1];
        out.push(acc * gain);
    }
    out
}

fn validate_loss(rate: f64, depth_db: f64, burst_dist: &[f64; 4]) -> Result<()> {
    if !(0.0..=0.1).contains(&rate) {
        return Err(invalid(format!("loss rate {rate} outside [0, 0.1]")));
    }
    if !(depth_db >= 10.0) || !depth_db.is_finite() {
        return Err(invalid(format!("loss depth {depth_db} dB must be >= 10")));
    }
    if burst_dist.iter().any(|&p| !(p >= 0.0)) {
        return Err(invalid("burst probabilities must be non-negative"));
    }
    let total: f64 = burst_dist.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(invalid(format!(
            "burst probabilities sum to {total}, not 1"
        )));
    }
    Ok(())
}

/// Attenuates randomly chosen time samples by `depth_db` across every
/// frequency and antenna, in bursts of 1 to 4 consecutive samples.
///
/// Bursts are separated by at least one intact sample. The start
/// probability is set so that the expected lost fraction equals `rate`.
/// Returns the attenuated tensor and the ground-truth mask.
pub fn inject_lost_samples(
    tensor: &ChannelTensor,
    rate: f64,
    depth_db: f64,
    burst_dist: &[f64; 4],
    seed: u64,
) -> Result<(ChannelTensor, Vec<bool>)> {
    validate_loss(rate, depth_db, burst_dist)?;
    let n_time = tensor.n_time();
    let mut mask = vec![false; n_time];
    if rate == 0.0 {
        return Ok((tensor.clone(), mask));
    }
    let mean_burst: f64 = burst_dist
        .iter()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum();
    if rate * n_time as f64 > n_time as f64 / 2.0 {
        return Err(invalid("expected losses exceed half the time samples"));
    }
    // a start costs L lost + 1 guard sample, a non-start costs 1 sample:
    // lost fraction q*E[L] / (1 + q*E[L]) = rate
    let start_prob = rate / ((1.0 - rate) * mean_burst);
    let lengths = WeightedIndex::new(burst_dist).map_err(|e| invalid(e.to_string()))?;
    let mut rng = stream_rng(seed, stream::LOST_SAMPLES, 0);
    let mut n = 0;
    while n < n_time {
        if rng.random::<f64>() < start_prob {
            let len = lengths.sample(&mut rng) + 1;
            let end = (n + len).min(n_time);
            mask[n..end].iter_mut().for_each(|b| *b = true);
            n = end + 1;
        } else {
            n += 1;
        }
    }

    let amp = 10f64.powf(-depth_db / 20.0);
    let stride = tensor.n_freq() * tensor.n_ant();
    let mut data = tensor.data().to_vec();
    for (n, lost) in mask.iter().enumerate() {
        if *lost {
            data[n * stride..(n + 1) * stride]
                .iter_mut()
                .for_each(|h| *h *= amp);
        }
    }
    Ok((tensor.with_data(data), mask))
}
