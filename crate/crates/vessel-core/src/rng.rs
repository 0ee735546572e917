//! Tiny deterministic RNG (SplitMix64).
//!
//! Generated realizations must be bit-reproducible per seed across builds and
//! platforms, so we do not depend on an external RNG crate whose streams may
//! change between versions.

use crate::numkernel::C64;

#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform in [0, 1).
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    /// Uniform in [lo, hi).
    pub fn next_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform on the closed unit disc (polar sampling, two draws per value).
    pub fn next_unit_disc(&mut self) -> C64 {
        let r = self.next_f64().sqrt();
        let theta = 2.0 * std::f64::consts::PI * self.next_f64();
        C64::new(r * theta.cos(), r * theta.sin())
    }
}
