//! Counter-based random streams.
//!
//! Every stream is addressed by a seed and a tuple of coordinates (replicate,
//! subject, draw slot, ...). The `k`-th output of a stream is a pure function of
//! its key and `k`, so draws never depend on execution order or thread count.

use rand::RngCore;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Distinct coordinate domains so bootstrap and simulation streams never collide.
pub mod domain {
    pub const SIMULATION: u64 = 0x5349_4D55;
    pub const BOOTSTRAP: u64 = 0x424F_4F54;
}

/// SplitMix64 evaluated at `key + k·γ`.
#[derive(Debug, Clone)]
pub struct CounterRng {
    key: u64,
    counter: u64,
}

impl CounterRng {
    pub fn new(seed: u64, coords: &[u64]) -> Self {
        let mut key = mix64(seed ^ 0x6A09_E667_F3BC_C908);
        for &c in coords {
            key = mix64(key.wrapping_add(GOLDEN_GAMMA) ^ mix64(c.wrapping_add(0x3C6E_F372_FE94_F82B)));
        }
        Self { key, counter: 0 }
    }

    /// The raw output at position `k` without advancing.
    pub fn at(&self, k: u64) -> u64 {
        mix64(self.key.wrapping_add(k.wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
    }
}

impl RngCore for CounterRng {
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    fn next_u64(&mut self) -> u64 {
        let out = self.at(self.counter);
        self.counter += 1;
        out
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        for chunk in dst.chunks_mut(8) {
            let bytes = self.next_u64().to_le_bytes();
            chunk.copy_from_slice(&bytes[..chunk.len()]);
        }
    }
}
