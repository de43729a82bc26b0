//! Channel tensor data model, antenna layouts, subset selection and the
//! normalized MRC-combined gain that every analysis module consumes.
//!
//! Coefficients are stored time-major: the flat index of `(n, f, m)` is
//! `(n * F + f) * M + m`, so all antennas of one time/frequency sample are
//! contiguous.

use std::collections::BTreeSet;

use num_complex::Complex;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex<f64>;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    V,
    H,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayKind {
    CoLocated,
    Distributed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UeOrientation {
    Vertical,
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Antenna {
    pub index: usize,
    /// Position in meters.
    pub position: [f64; 3],
    /// Unit boresight vector.
    pub orientation: [f64; 3],
    pub polarization: Polarization,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayLayout {
    pub kind: ArrayKind,
    pub antennas: Vec<Antenna>,
}

/// Number of columns of the co-located planar panel.
pub const PANEL_COLUMNS: usize = 25;

impl ArrayLayout {
    /// The 4 x 25 half-wavelength panel with alternating polarization.
    pub fn default_co_located(carrier_freq_hz: f64) -> Self {
        Self::co_located(4 * PANEL_COLUMNS, carrier_freq_hz)
    }

    /// Planar panel filled row by row with [`PANEL_COLUMNS`] elements per
    /// row at half-wavelength spacing. Polarization alternates between
    /// consecutive elements along a row; with an even column offset per row
    /// this is the parity of the flat index, so a full 100-element panel
    /// holds 50 elements of each polarization.
    pub fn co_located(n_ant: usize, carrier_freq_hz: f64) -> Self {
        let spacing = 0.5 * SPEED_OF_LIGHT / carrier_freq_hz;
        let antennas = (0..n_ant)
            .map(|index| {
                let row = index / PANEL_COLUMNS;
                let col = index % PANEL_COLUMNS;
                Antenna {
                    index,
                    position: [col as f64 * spacing, 0.0, row as f64 * spacing],
                    orientation: [0.0, 1.0, 0.0],
                    polarization: if (row + col).is_multiple_of(2) {
                        Polarization::V
                    } else {
                        Polarization::H
                    },
                }
            })
            .collect();
        Self {
            kind: ArrayKind::CoLocated,
            antennas,
        }
    }

    /// Antennas scattered uniformly inside a box of the given extent (m),
    /// with random boresight and random polarization.
    pub fn distributed(n_ant: usize, extent_m: [f64; 3], seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let antennas = (0..n_ant)
            .map(|index| {
                let position = [
                    rng.random::<f64>() * extent_m[0],
                    rng.random::<f64>() * extent_m[1],
                    rng.random::<f64>() * extent_m[2],
                ];
                // uniform direction on the sphere
                let z: f64 = rng.random_range(-1.0..1.0);
                let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = (1.0 - z * z).sqrt();
                Antenna {
                    index,
                    position,
                    orientation: [r * phi.cos(), r * phi.sin(), z],
                    polarization: if rng.random::<bool>() {
                        Polarization::V
                    } else {
                        Polarization::H
                    },
                }
            })
            .collect();
        Self {
            kind: ArrayKind::Distributed,
            antennas,
        }
    }

    pub fn len(&self) -> usize {
        self.antennas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.antennas.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        for (i, a) in self.antennas.iter().enumerate() {
            if a.index != i {
                return Err(Error::InvalidParameter(format!(
                    "antenna at position {i} has index {}",
                    a.index
                )));
            }
        }
        Ok(())
    }

    /// Layout of the given antennas, re-indexed from zero in subset order.
    pub fn restrict(&self, subset: &[usize]) -> Self {
        let antennas = subset
            .iter()
            .enumerate()
            .map(|(i, &m)| Antenna {
                index: i,
                ..self.antennas[m].clone()
            })
            .collect();
        Self {
            kind: self.kind,
            antennas,
        }
    }

    pub fn count_polarization(&self, pol: Polarization) -> usize {
        self.antennas
            .iter()
            .filter(|a| a.polarization == pol)
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n_time: usize,
    pub n_freq: usize,
    pub n_ant: usize,
}

impl Dims {
    pub fn new(n_time: usize, n_freq: usize, n_ant: usize) -> Self {
        Self {
            n_time,
            n_freq,
            n_ant,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_time == 0 || self.n_freq == 0 || self.n_ant == 0 {
            return Err(Error::InvalidDims(format!(
                "N={}, F={}, M={} (all must be at least 1)",
                self.n_time, self.n_freq, self.n_ant
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.n_time * self.n_freq * self.n_ant
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Acquisition metadata carried alongside the coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMeta {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub rep_rate_hz: f64,
    pub layout: ArrayLayout,
    pub ue_orientation: UeOrientation,
}

impl ChannelMeta {
    /// 3.7 GHz carrier, 20 MHz bandwidth, 100 Hz snapshot rate and a
    /// co-located panel of `n_ant` elements.
    pub fn sounder_default(n_ant: usize) -> Self {
        let carrier_freq_hz = 3.7e9;
        Self {
            carrier_freq_hz,
            bandwidth_hz: 20e6,
            rep_rate_hz: 100.0,
            layout: ArrayLayout::co_located(n_ant, carrier_freq_hz),
            ue_orientation: UeOrientation::Vertical,
        }
    }
}

/// Complex channel coefficients `h(n, f, m)` with acquisition metadata.
///
/// Immutable once built; every transformation returns a new tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelTensor {
    dims: Dims,
    data: Vec<C64>,
    meta: ChannelMeta,
    lost_mask: Option<Vec<bool>>,
}

impl ChannelTensor {
    pub fn new(dims: Dims, data: Vec<C64>, meta: ChannelMeta) -> Result<Self> {
        dims.validate()?;
        if data.len() != dims.len() {
            return Err(Error::InvalidDims(format!(
                "data length {} does not equal N*F*M = {}",
                data.len(),
                dims.len()
            )));
        }
        if meta.layout.len() != dims.n_ant {
            return Err(Error::InvalidDims(format!(
                "layout has {} antennas, tensor has M={}",
                meta.layout.len(),
                dims.n_ant
            )));
        }
        meta.layout.validate()?;
        if let Some(i) = data
            .iter()
            .position(|c| !(c.re.is_finite() && c.im.is_finite()))
        {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            dims,
            data,
            meta,
            lost_mask: None,
        })
    }

    pub fn with_lost_mask(mut self, mask: Option<Vec<bool>>) -> Result<Self> {
        if let Some(m) = &mask {
            if m.len() != self.dims.n_time {
                return Err(Error::MaskLength {
                    mask: m.len(),
                    n_time: self.dims.n_time,
                });
            }
        }
        self.lost_mask = mask;
        Ok(self)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn n_time(&self) -> usize {
        self.dims.n_time
    }

    pub fn n_freq(&self) -> usize {
        self.dims.n_freq
    }

    pub fn n_ant(&self) -> usize {
        self.dims.n_ant
    }

    pub fn data(&self) -> &[C64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<C64> {
        self.data
    }

    pub fn meta(&self) -> &ChannelMeta {
        &self.meta
    }

    pub fn layout(&self) -> &ArrayLayout {
        &self.meta.layout
    }

    pub fn lost_mask(&self) -> Option<&[bool]> {
        self.lost_mask.as_deref()
    }

    /// True when a mask is attached and flags at least one sample.
    pub fn has_flagged_samples(&self) -> bool {
        self.lost_mask
            .as_ref()
            .is_some_and(|m| m.iter().any(|&b| b))
    }

    #[inline]
    pub fn index(&self, n: usize, f: usize, m: usize) -> usize {
        (n * self.dims.n_freq + f) * self.dims.n_ant + m
    }

    #[inline]
    pub fn get(&self, n: usize, f: usize, m: usize) -> C64 {
        self.data[self.index(n, f, m)]
    }

    /// All antennas of one time/frequency sample.
    #[inline]
    pub fn snapshot(&self, n: usize, f: usize) -> &[C64] {
        let start = self.index(n, f, 0);
        &self.data[start..start + self.dims.n_ant]
    }

    /// All frequencies and antennas of one time sample.
    #[inline]
    pub fn time_slice(&self, n: usize) -> &[C64] {
        let stride = self.dims.n_freq * self.dims.n_ant;
        &self.data[n * stride..(n + 1) * stride]
    }

    /// Same metadata and mask, new coefficients of identical shape.
    pub(crate) fn with_data(&self, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), self.data.len());
        Self {
            dims: self.dims,
            data,
            meta: self.meta.clone(),
            lost_mask: self.lost_mask.clone(),
        }
    }

    pub(crate) fn from_parts(
        dims: Dims,
        data: Vec<C64>,
        meta: ChannelMeta,
        lost_mask: Option<Vec<bool>>,
    ) -> Self {
        Self {
            dims,
            data,
            meta,
            lost_mask,
        }
    }

    /// Every coefficient multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        self.with_data(self.data.iter().map(|&c| c * factor).collect())
    }

    /// Coefficients rounded to single precision, as stored on disk.
    pub fn with_f32_precision(&self) -> Self {
        self.with_data(
            self.data
                .iter()
                .map(|c| C64::new(c.re as f32 as f64, c.im as f32 as f64))
                .collect(),
        )
    }

    /// Tensor restricted to the given antennas, in subset order.
    pub fn restrict_antennas(&self, subset: &[usize]) -> Result<Self> {
        validate_subset(subset, self.dims.n_ant)?;
        let k = subset.len();
        let mut data = Vec::with_capacity(self.dims.n_time * self.dims.n_freq * k);
        for n in 0..self.dims.n_time {
            for f in 0..self.dims.n_freq {
                let snap = self.snapshot(n, f);
                data.extend(subset.iter().map(|&m| snap[m]));
            }
        }
        let mut meta = self.meta.clone();
        meta.layout = self.meta.layout.restrict(subset);
        Ok(Self {
            dims: Dims::new(self.dims.n_time, self.dims.n_freq, k),
            data,
            meta,
            lost_mask: self.lost_mask.clone(),
        })
    }

    /// Sum of `|h|^2` over the given antennas, one value per (n, f),
    /// in time-major order.
    pub fn subset_power(&self, subset: &[usize]) -> Vec<f64> {
        let m_all = self.dims.n_ant;
        let contiguous = subset.iter().enumerate().all(|(i, &m)| m == subset[0] + i);
        self.data
            .chunks_exact(m_all)
            .map(|snap| {
                if contiguous {
                    let lo = subset.first().copied().unwrap_or(0);
                    snap[lo..lo + subset.len()]
                        .iter()
                        .map(|c| c.norm_sqr())
                        .sum()
                } else {
                    subset.iter().map(|&m| snap[m].norm_sqr()).sum()
                }
            })
            .collect()
    }
}

pub(crate) fn validate_subset(subset: &[usize], n_ant: usize) -> Result<()> {
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    let mut seen = BTreeSet::new();
    for &m in subset {
        if m >= n_ant {
            return Err(Error::AntennaIndex { index: m, n_ant });
        }
        if !seen.insert(m) {
            return Err(Error::DuplicateAntenna(m));
        }
    }
    Ok(())
}

/// How antennas are picked for a subset of a given size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SubsetMode {
    /// Antennas `0..k` in layout order.
    FirstK,
    /// A seeded random permutation, truncated to `k`. Subsets of growing
    /// size are nested.
    RandomK { seed: u64 },
    /// The first `k` antennas carrying the given polarization.
    PolarizationOnly { polarization: Polarization },
}

/// Subset sizes plotted for the hardening, DoF and margin curves.
pub const DEFAULT_SUBSET_SIZES: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 100];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubsetPolicy {
    pub mode: SubsetMode,
    pub sizes: Vec<usize>,
}

impl Default for SubsetPolicy {
    fn default() -> Self {
        Self {
            mode: SubsetMode::FirstK,
            sizes: DEFAULT_SUBSET_SIZES.to_vec(),
        }
    }
}

impl SubsetPolicy {
    pub fn new(mode: SubsetMode, sizes: Vec<usize>) -> Self {
        Self { mode, sizes }
    }

    /// Default sizes truncated to those not exceeding `n_ant`.
    pub fn default_for(n_ant: usize) -> Self {
        Self {
            mode: SubsetMode::FirstK,
            sizes: DEFAULT_SUBSET_SIZES
                .iter()
                .copied()
                .filter(|&k| k <= n_ant)
                .collect(),
        }
    }

    /// Checks that sizes are non-empty, strictly increasing and feasible for
    /// the layout under this mode.
    pub fn validate(&self, layout: &ArrayLayout) -> Result<()> {
        if self.sizes.is_empty() {
            return Err(Error::InvalidParameter("no subset sizes given".into()));
        }
        if self.sizes[0] == 0 {
            return Err(Error::EmptySubset);
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(
                "subset sizes must be strictly increasing".into(),
            ));
        }
        let available = available_antennas(layout, self.mode);
        let largest = *self.sizes.last().unwrap();
        if largest > available {
            return Err(Error::SubsetTooLarge {
                requested: largest,
                available,
            });
        }
        Ok(())
    }
}

fn available_antennas(layout: &ArrayLayout, mode: SubsetMode) -> usize {
    match mode {
        SubsetMode::PolarizationOnly { polarization } => layout.count_polarization(polarization),
        _ => layout.len(),
    }
}

/// Picks `k` antenna indices from the layout according to `mode`.
pub fn select_subset(layout: &ArrayLayout, mode: SubsetMode, k: usize) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::EmptySubset);
    }
    let available = available_antennas(layout, mode);
    if k > available {
        return Err(Error::SubsetTooLarge {
            requested: k,
            available,
        });
    }
    Ok(match mode {
        SubsetMode::FirstK => (0..k).collect(),
        SubsetMode::RandomK { seed } => {
            let mut order: Vec<usize> = (0..layout.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order.truncate(k);
            order
        }
        SubsetMode::PolarizationOnly { polarization } => layout
            .antennas
            .iter()
            .filter(|a| a.polarization == polarization)
            .map(|a| a.index)
            .take(k)
            .collect(),
    })
}

/// A tensor restricted to a subset and scaled to unit mean gain over it.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedChannel {
    tensor: ChannelTensor,
    subset: Vec<usize>,
    /// Mean `|h|^2` of the raw coefficients over (n, f, subset).
    raw_mean_gain: f64,
}

impl NormalizedChannel {
    pub fn tensor(&self) -> &ChannelTensor {
        &self.tensor
    }

    /// Antenna indices of the source tensor, in the order they were given.
    pub fn subset(&self) -> &[usize] {
        &self.subset
    }

    pub fn raw_mean_gain(&self) -> f64 {
        self.raw_mean_gain
    }

    pub fn into_tensor(self) -> ChannelTensor {
        self.tensor
    }
}

/// Restricts the tensor to `subset` and divides every coefficient by the
/// root mean gain over all time samples, frequencies and selected antennas.
pub fn normalize(tensor: &ChannelTensor, subset: &[usize]) -> Result<NormalizedChannel> {
    validate_subset(subset, tensor.n_ant())?;
    if tensor.has_flagged_samples() {
        return Err(Error::UnhandledLostSamples);
    }
    let restricted = tensor.restrict_antennas(subset)?;
    let raw_mean_gain = mean_gain(restricted.data());
    if raw_mean_gain <= 0.0 || !raw_mean_gain.is_finite() {
        return Err(Error::ZeroPower);
    }
    let inv = raw_mean_gain.sqrt().recip();
    let data = restricted.data().iter().map(|&c| c * inv).collect();
    Ok(NormalizedChannel {
        tensor: restricted.with_data(data),
        subset: subset.to_vec(),
        raw_mean_gain,
    })
}

/// Mean of `|h|^2`, accumulated in chunks to limit rounding drift.
pub(crate) fn mean_gain(data: &[C64]) -> f64 {
    let total: f64 = data
        .chunks(4096)
        .map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>())
        .sum();
    total / data.len() as f64
}

/// MRC-combined gain `G(n, f) = (1/|S|) * sum_{m in S} |h(n, f, m)|^2` of a
/// normalized channel, in time-major order. `subset` must name the same set
/// of antennas the channel was normalized over (any order).
pub fn combined_gain(channel: &NormalizedChannel, subset: &[usize]) -> Result<Vec<f64>> {
    let a: BTreeSet<_> = subset.iter().collect();
    let b: BTreeSet<_> = channel.subset.iter().collect();
    if a != b || subset.len() != channel.subset.len() {
        return Err(Error::SubsetMismatch);
    }
    let k = channel.tensor.n_ant() as f64;
    Ok(channel
        .tensor
        .data()
        .chunks_exact(channel.tensor.n_ant())
        .map(|snap| snap.iter().map(|c| c.norm_sqr()).sum::<f64>() / k)
        .collect())
}

/// Normalized combined gain of `subset` computed directly from the raw
/// tensor, without materializing the normalized copy. Equal to
/// `combined_gain(&normalize(tensor, subset)?, subset)` up to rounding.
pub fn subset_gain(tensor: &ChannelTensor, subset: &[usize]) -> Result<Vec<f64>> {
    validate_subset(subset, tensor.n_ant())?;
    if tensor.has_flagged_samples() {
        return Err(Error::UnhandledLostSamples);
    }
    let mut power = tensor.subset_power(subset);
    let total: f64 = power.chunks(4096).map(|c| c.iter().sum::<f64>()).sum();
    let mean = total / power.len() as f64;
    if mean <= 0.0 || !mean.is_finite() {
        return Err(Error::ZeroPower);
    }
    let inv = mean.recip();
    power.iter_mut().for_each(|p| *p *= inv);
    Ok(power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn constant(dims: Dims, value: C64) -> ChannelTensor {
        ChannelTensor::new(
            dims,
            vec![value; dims.len()],
            ChannelMeta::sounder_default(dims.n_ant),
        )
        .unwrap()
    }

    fn ramp(dims: Dims) -> ChannelTensor {
        let data = (0..dims.len())
            .map(|i| C64::new((i as f64 * 0.37).sin() + 1.2, (i as f64 * 0.11).cos()))
            .collect();
        ChannelTensor::new(dims, data, ChannelMeta::sounder_default(dims.n_ant)).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        let meta = ChannelMeta::sounder_default(2);
        assert!(matches!(
            ChannelTensor::new(Dims::new(0, 1, 2), vec![], meta.clone()),
            Err(Error::InvalidDims(_))
        ));
        assert!(matches!(
            ChannelTensor::new(Dims::new(1, 1, 2), vec![C64::new(1.0, 0.0)], meta.clone()),
            Err(Error::InvalidDims(_))
        ));
        assert_eq!(
            ChannelTensor::new(
                Dims::new(1, 1, 2),
                vec![C64::new(1.0, 0.0), C64::new(f64::NAN, 0.0)],
                meta.clone()
            ),
            Err(Error::NonFinite(1))
        );
        let t = constant(Dims::new(3, 1, 2), C64::new(1.0, 0.0));
        assert!(matches!(
            t.with_lost_mask(Some(vec![false; 2])),
            Err(Error::MaskLength { .. })
        ));
    }

    #[test]
    fn default_panel_geometry() {
        let layout = ArrayLayout::default_co_located(3.7e9);
        assert_eq!(layout.len(), 100);
        assert_eq!(layout.count_polarization(Polarization::V), 50);
        assert_eq!(layout.count_polarization(Polarization::H), 50);
        let spacing = 0.5 * SPEED_OF_LIGHT / 3.7e9;
        assert_relative_eq!(layout.antennas[1].position[0], spacing);
        assert_relative_eq!(layout.antennas[25].position[2], spacing);
        // consecutive elements along each row alternate
        for row in 0..4 {
            for col in 1..PANEL_COLUMNS {
                let a = &layout.antennas[row * PANEL_COLUMNS + col - 1];
                let b = &layout.antennas[row * PANEL_COLUMNS + col];
                assert_ne!(a.polarization, b.polarization);
            }
        }
    }

    #[test]
    fn normalize_constant_tensor() {
        let t = constant(Dims::new(3, 4, 5), C64::new(2.0, 0.0));
        let norm = normalize(&t, &[0, 1, 2, 3, 4]).unwrap();
        assert!(norm
            .tensor()
            .data()
            .iter()
            .all(|c| (c - C64::new(1.0, 0.0)).norm() < 1e-15));
        assert_relative_eq!(norm.raw_mean_gain(), 4.0);
    }

    #[test]
    fn normalize_errors() {
        let t = constant(Dims::new(2, 2, 3), C64::new(0.0, 0.0));
        assert_eq!(normalize(&t, &[]), Err(Error::EmptySubset));
        assert_eq!(normalize(&t, &[0, 1]), Err(Error::ZeroPower));
        assert_eq!(
            normalize(&t, &[3]),
            Err(Error::AntennaIndex { index: 3, n_ant: 3 })
        );
        assert_eq!(normalize(&t, &[1, 1]), Err(Error::DuplicateAntenna(1)));
        let flagged = ramp(Dims::new(3, 1, 2))
            .with_lost_mask(Some(vec![false, true, false]))
            .unwrap();
        assert_eq!(normalize(&flagged, &[0]), Err(Error::UnhandledLostSamples));
    }

    #[test]
    fn normalize_unit_mean_and_idempotent() {
        let t = ramp(Dims::new(7, 3, 6));
        let subset = [5, 0, 2];
        let norm = normalize(&t, &subset).unwrap();
        assert_relative_eq!(mean_gain(norm.tensor().data()), 1.0, max_relative = 1e-12);
        let again = normalize(norm.tensor(), &[0, 1, 2]).unwrap();
        for (a, b) in again.tensor().data().iter().zip(norm.tensor().data()) {
            assert!((a - b).norm() <= 1e-12 * b.norm().max(1.0));
        }
    }

    #[test]
    fn normalize_is_scale_invariant() {
        let t = ramp(Dims::new(5, 2, 4));
        let a = normalize(&t, &[0, 1, 2, 3]).unwrap();
        let b = normalize(&t.scaled(37.5), &[0, 1, 2, 3]).unwrap();
        for (x, y) in a.tensor().data().iter().zip(b.tensor().data()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn combined_gain_examples() {
        let single = constant(Dims::new(4, 2, 1), C64::new(0.0, 3.0));
        let g = combined_gain(&normalize(&single, &[0]).unwrap(), &[0]).unwrap();
        assert!(g.iter().all(|&x| (x - 1.0).abs() < 1e-15));

        // per-sample gains {0, 2}
        let meta = ChannelMeta::sounder_default(2);
        let data = vec![
            C64::new(0.0, 0.0),
            C64::new(2f64.sqrt(), 0.0),
            C64::new(0.0, 0.0),
            C64::new(0.0, 2f64.sqrt()),
        ];
        let t = ChannelTensor::new(Dims::new(2, 1, 2), data, meta).unwrap();
        let norm = normalize(&t, &[0, 1]).unwrap();
        let g = combined_gain(&norm, &[0, 1]).unwrap();
        assert!(g.iter().all(|&x| (x - 1.0).abs() < 1e-15));
        assert_eq!(combined_gain(&norm, &[0]), Err(Error::SubsetMismatch));
    }

    #[test]
    fn combined_gain_permutation_invariant_and_matches_streaming() {
        let t = ramp(Dims::new(9, 4, 8));
        let subset = [6, 1, 3, 7];
        let norm = normalize(&t, &subset).unwrap();
        let a = combined_gain(&norm, &subset).unwrap();
        let b = combined_gain(&norm, &[7, 3, 1, 6]).unwrap();
        assert_eq!(a, b);
        let streamed = subset_gain(&t, &subset).unwrap();
        for (x, y) in a.iter().zip(&streamed) {
            assert_relative_eq!(x, y, max_relative = 1e-12);
        }
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert_relative_eq!(mean, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn select_subset_modes() {
        let layout = ArrayLayout::default_co_located(3.7e9);
        assert_eq!(
            select_subset(&layout, SubsetMode::FirstK, 4).unwrap(),
            vec![0, 1, 2, 3]
        );
        let v = select_subset(
            &layout,
            SubsetMode::PolarizationOnly {
                polarization: Polarization::V,
            },
            50,
        )
        .unwrap();
        assert_eq!(v.len(), 50);
        assert!(v
            .iter()
            .all(|&m| layout.antennas[m].polarization == Polarization::V));
        let expected_v: Vec<usize> = layout
            .antennas
            .iter()
            .filter(|a| a.polarization == Polarization::V)
            .map(|a| a.index)
            .collect();
        assert_eq!(v, expected_v);

        let r1 = select_subset(&layout, SubsetMode::RandomK { seed: 7 }, 10).unwrap();
        let r2 = select_subset(&layout, SubsetMode::RandomK { seed: 7 }, 10).unwrap();
        assert_eq!(r1, r2);
        let r_big = select_subset(&layout, SubsetMode::RandomK { seed: 7 }, 20).unwrap();
        assert_eq!(&r_big[..10], &r1[..]);

        assert_eq!(
            select_subset(
                &layout,
                SubsetMode::PolarizationOnly {
                    polarization: Polarization::H
                },
                51
            ),
            Err(Error::SubsetTooLarge {
                requested: 51,
                available: 50
            })
        );
        assert_eq!(
            select_subset(&layout, SubsetMode::FirstK, 101),
            Err(Error::SubsetTooLarge {
                requested: 101,
                available: 100
            })
        );
    }

    #[test]
    fn policy_validation() {
        let layout = ArrayLayout::co_located(16, 3.7e9);
        assert!(SubsetPolicy::default_for(16).validate(&layout).is_ok());
        assert_eq!(SubsetPolicy::default_for(16).sizes, vec![1, 2, 4, 8, 16]);
        assert!(SubsetPolicy::default().validate(&layout).is_err());
        let bad = SubsetPolicy::new(SubsetMode::FirstK, vec![2, 2]);
        assert!(bad.validate(&layout).is_err());
    }
}
