//! `CHT v1` channel tensor files.
//!
//! ```text
//! offset  size  content
//! 0       4     magic "CHTF"
//! 4       4     format version, u32 little-endian (1)
//! 8       4     header length L in bytes, u32 little-endian
//! 12      L     UTF-8 JSON metadata header
//! 12+L    8NFM  coefficients as little-endian f32 pairs (re, im),
//!               n-major, then f, then m
//! ```
//!
//! Coefficients are widened to f64 on read and narrowed to f32 on write, so
//! a tensor read from disk writes back bit-identically.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{ArrayLayout, ChannelMeta, ChannelTensor, Dims, UeOrientation, C64};

pub const MAGIC: [u8; 4] = *b"CHTF";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 12;

#[derive(Debug, Error)]
pub enum ChtError {
    #[error("not a CHT file (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported CHT version {0}")]
    UnsupportedVersion(u32),
    #[error("invalid CHT header: {0}")]
    InvalidHeader(String),
    #[error("file truncated: {0}")]
    Truncated(String),
    #[error("payload holds {actual} coefficients, header declares {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl ChtError {
    /// Stable short code per failure class.
    pub fn code(&self) -> &'static str {
        match self {
            ChtError::BadMagic(_) => "cht-magic",
            ChtError::UnsupportedVersion(_) => "cht-version",
            ChtError::InvalidHeader(_) => "cht-header",
            ChtError::Truncated(_) => "cht-truncated",
            ChtError::DimensionMismatch { .. } => "cht-dimension",
            ChtError::Io(_) => "cht-io",
        }
    }
}

/// Metadata header as serialized in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChtHeader {
    #[serde(rename = "N")]
    pub n_time: usize,
    #[serde(rename = "F")]
    pub n_freq: usize,
    #[serde(rename = "M")]
    pub n_ant: usize,
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub rep_rate_hz: f64,
    pub layout: ArrayLayout,
    pub ue_orientation: UeOrientation,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lost_mask: Option<Vec<bool>>,
}

impl ChtHeader {
    fn of(tensor: &ChannelTensor) -> Self {
        let meta = tensor.meta();
        Self {
            n_time: tensor.n_time(),
            n_freq: tensor.n_freq(),
            n_ant: tensor.n_ant(),
            carrier_freq_hz: meta.carrier_freq_hz,
            bandwidth_hz: meta.bandwidth_hz,
            rep_rate_hz: meta.rep_rate_hz,
            layout: meta.layout.clone(),
            ue_orientation: meta.ue_orientation,
            lost_mask: tensor.lost_mask().map(<[bool]>::to_vec),
        }
    }

    fn dims(&self) -> Dims {
        Dims::new(self.n_time, self.n_freq, self.n_ant)
    }
}

pub fn encode(tensor: &ChannelTensor) -> Result<Vec<u8>, ChtError> {
    let header = serde_json::to_vec(&ChtHeader::of(tensor))
        .map_err(|e| ChtError::InvalidHeader(e.to_string()))?;
    let header_len = u32::try_from(header.len())
        .map_err(|_| ChtError::InvalidHeader("header exceeds 4 GiB".into()))?;
    let mut out = Vec::with_capacity(PREAMBLE + header.len() + tensor.data().len() * 8);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&header_len.to_le_bytes());
    out.extend_from_slice(&header);
    for c in tensor.data() {
        out.extend_from_slice(&(c.re as f32).to_le_bytes());
        out.extend_from_slice(&(c.im as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<ChannelTensor, ChtError> {
    if bytes.len() < PREAMBLE {
        return Err(ChtError::Truncated(format!(
            "{} bytes is shorter than the {PREAMBLE}-byte preamble",
            bytes.len()
        )));
    }
    let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(ChtError::BadMagic(magic));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(ChtError::UnsupportedVersion(version));
    }
    let header_len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let header_end = PREAMBLE
        .checked_add(header_len)
        .filter(|&end| end <= bytes.len())
        .ok_or_else(|| ChtError::Truncated("header extends past end of file".into()))?;
    let header: ChtHeader = serde_json::from_slice(&bytes[PREAMBLE..header_end])
        .map_err(|e| ChtError::InvalidHeader(e.to_string()))?;
    let dims = header.dims();
    dims.validate()
        .map_err(|e| ChtError::InvalidHeader(e.to_string()))?;

    let payload = &bytes[header_end..];
    if !payload.len().is_multiple_of(8) {
        return Err(ChtError::Truncated(format!(
            "payload of {} bytes is not a whole number of coefficients",
            payload.len()
        )));
    }
    let expected = dims
        .n_time
        .checked_mul(dims.n_freq)
        .and_then(|x| x.checked_mul(dims.n_ant))
        .ok_or_else(|| ChtError::InvalidHeader("N*F*M overflows".into()))?;
    if payload.len() / 8 != expected {
        return Err(ChtError::DimensionMismatch {
            expected,
            actual: payload.len() / 8,
        });
    }
    let data: Vec<C64> = payload
        .chunks_exact(8)
        .map(|b| {
            let re = f32::from_le_bytes(b[0..4].try_into().unwrap());
            let im = f32::from_le_bytes(b[4..8].try_into().unwrap());
            C64::new(re as f64, im as f64)
        })
        .collect();
    let meta = ChannelMeta {
        carrier_freq_hz: header.carrier_freq_hz,
        bandwidth_hz: header.bandwidth_hz,
        rep_rate_hz: header.rep_rate_hz,
        layout: header.layout,
        ue_orientation: header.ue_orientation,
    };
    ChannelTensor::new(dims, data, meta)
        .and_then(|t| t.with_lost_mask(header.lost_mask))
        .map_err(|e| ChtError::InvalidHeader(e.to_string()))
}

pub fn write_to<W: Write>(tensor: &ChannelTensor, mut w: W) -> Result<(), ChtError> {
    w.write_all(&encode(tensor)?)?;
    w.flush()?;
    Ok(())
}

pub fn read_from<R: Read>(mut r: R) -> Result<ChannelTensor, ChtError> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    decode(&bytes)
}

pub fn write_cht(tensor: &ChannelTensor, path: impl AsRef<Path>) -> Result<(), ChtError> {
    fs::write(path, encode(tensor)?)?;
    Ok(())
}

pub fn read_cht(path: impl AsRef<Path>) -> Result<ChannelTensor, ChtError> {
    decode(&fs::read(path)?)
}
