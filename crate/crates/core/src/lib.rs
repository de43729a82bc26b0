//! Massive MIMO channel hardening and link-reliability analysis.
//!
//! The crate synthesizes channel tensors `h(n, f, m)` (time, frequency,
//! antenna), conditions measured ones, and quantifies:
//!
//! * channel hardening: the spread of the MRC-combined gain versus the
//!   number of combined antennas ([`hardening`]),
//! * the gain distribution's lower tail against a `Gamma(M, 1/M)` reference,
//!   the effective degrees of freedom and fading margins ([`tail`]),
//! * large-scale trend and log-normal shadowing of the aggregate gain
//!   ([`shadowing`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod cht;
pub mod error;
pub mod hardening;
pub mod qc;
pub mod shadowing;
pub mod special;
pub mod stats;
pub mod synth;
pub mod tail;

pub use channel::{
    combined_gain, normalize, select_subset, subset_gain, ArrayKind, ArrayLayout, ChannelMeta,
    ChannelTensor, Dims, NormalizedChannel, Polarization, SubsetMode, SubsetPolicy, UeOrientation,
    C64,
};
pub use error::{Error, Result};
pub use hardening::{hardening_curve, iid_reference_curve, HardeningCurve, HardeningPoint};
pub use qc::{run_qc, QcOptions, QcReport};
pub use shadowing::{fit_shadowing, ShadowingFit, ShadowingOptions};
pub use synth::{FadingModel, SynthConfig, TrendProfile};
pub use tail::{
    dof_curve, fading_margin, fading_margin_table, fit_gamma, gamma_quantile, gamma_reference_cdf,
    DofCurve, Ecdf, FitConstraint, FitMethod, GammaFit, MarginSource,
};
