//! Shared fixtures for the benchmarks.

use mmimo_core::synth::{gen_iid, SynthConfig};
use mmimo_core::{ChannelTensor, Dims};

/// I.i.d. tensor with the given shape and a fixed seed.
pub fn iid_tensor(n_time: usize, n_freq: usize, n_ant: usize) -> ChannelTensor {
    gen_iid(&SynthConfig::iid(Dims::new(n_time, n_freq, n_ant), 0x5eed)).expect("valid dims")
}
