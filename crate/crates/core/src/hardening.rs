//! Channel hardening: spread of the normalized MRC-combined gain versus the
//! number of combined antennas.
//!
//! For each subset size the tensor is renormalized over the selected
//! antennas, so the combined gain has unit mean at every point and its
//! standard deviation alone measures how much the small-scale fading has
//! been averaged out. The spread is computed on linear gain and reported as
//! `10 log10(std)`, which puts the i.i.d. Rayleigh benchmark at
//! `-5 log10(M)` dB.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{select_subset, subset_gain, ChannelTensor, SubsetMode, SubsetPolicy};
use crate::error::{Error, Result};
use crate::stats::{std_dev, to_db};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardeningPoint {
    pub subset_size: usize,
    pub std_linear: f64,
    pub std_db: f64,
}

impl HardeningPoint {
    fn new(subset_size: usize, std_linear: f64) -> Self {
        Self {
            subset_size,
            std_linear,
            std_db: to_db(std_linear),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardeningCurve {
    pub points: Vec<HardeningPoint>,
    pub policy: SubsetPolicy,
    /// `std_db` of the first point minus that of the last.
    pub hardening_amount_db: f64,
}

impl HardeningCurve {
    fn from_points(points: Vec<HardeningPoint>, policy: SubsetPolicy) -> Self {
        let hardening_amount_db = match (points.first(), points.last()) {
            (Some(a), Some(b)) => a.std_db - b.std_db,
            _ => 0.0,
        };
        Self {
            points,
            policy,
            hardening_amount_db,
        }
    }

    pub fn point(&self, subset_size: usize) -> Option<&HardeningPoint> {
        self.points.iter().find(|p| p.subset_size == subset_size)
    }
}

/// Population standard deviation of a combined-gain series around its mean.
pub fn gain_std_of(gains: &[f64]) -> Result<f64> {
    if gains.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: gains.len(),
        });
    }
    Ok(std_dev(gains, 0))
}

/// Standard deviation of the combined gain of `subset`, after normalizing
/// the tensor over that subset.
pub fn gain_std(tensor: &ChannelTensor, subset: &[usize]) -> Result<f64> {
    gain_std_of(&subset_gain(tensor, subset)?)
}

/// One [`gain_std`] point per subset size of the policy.
pub fn hardening_curve(tensor: &ChannelTensor, policy: &SubsetPolicy) -> Result<HardeningCurve> {
    policy.validate(tensor.layout())?;
    let points = policy
        .sizes
        .par_iter()
        .map(|&k| {
            let subset = select_subset(tensor.layout(), policy.mode, k)?;
            Ok(HardeningPoint::new(k, gain_std(tensor, &subset)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HardeningCurve::from_points(points, policy.clone()))
}

/// Analytic curve of the i.i.d. complex Gaussian channel, for which the
/// combined gain is `Gamma(M, 1/M)` with standard deviation `1/sqrt(M)`.
pub fn iid_reference_curve(sizes: &[usize]) -> Result<HardeningCurve> {
    if sizes.contains(&0) {
        return Err(Error::EmptySubset);
    }
    let points = sizes
        .iter()
        .map(|&k| HardeningPoint::new(k, (k as f64).sqrt().recip()))
        .collect();
    Ok(HardeningCurve::from_points(
        points,
        SubsetPolicy::new(SubsetMode::FirstK, sizes.to_vec()),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerAntennaStats {
    /// Mean normalized gain of each antenna over (n, f), dB.
    pub mean_db: Vec<f64>,
    /// Sample standard deviation of `mean_db` across antennas, dB.
    pub std_db: f64,
}

/// Per-antenna mean gain after normalizing over all antennas, and its
/// spread across the array.
pub fn per_antenna_mean_stats(tensor: &ChannelTensor) -> Result<PerAntennaStats> {
    let n_ant = tensor.n_ant();
    if n_ant < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: n_ant,
        });
    }
    if tensor.has_flagged_samples() {
        return Err(Error::UnhandledLostSamples);
    }
    let mut power = vec![0.0; n_ant];
    for snap in tensor.data().chunks_exact(n_ant) {
        for (p, h) in power.iter_mut().zip(snap) {
            *p += h.norm_sqr();
        }
    }
    let overall = power.iter().sum::<f64>() / n_ant as f64;
    if overall <= 0.0 {
        return Err(Error::ZeroPower);
    }
    let mean_db: Vec<f64> = power.iter().map(|p| to_db(p / overall)).collect();
    if mean_db.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("an antenna has zero mean gain".into()));
    }
    let std_db = std_dev(&mean_db, 1);
    Ok(PerAntennaStats { mean_db, std_db })
}
