//! Seedable, splittable random streams.
//!
//! Every consumer of randomness (a chain, a trajectory, a data dimension)
//! derives its own substream from a root seed by a path of integer keys, so
//! results never depend on evaluation order or thread scheduling.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Labels for the substreams used across the crate.
pub mod keys {
    pub const DATA: u64 = 0x6461_7461;
    pub const MEANS: u64 = 0x6d65_616e;
    pub const CHAIN: u64 = 0x6368_6169;
    pub const PILOT: u64 = 0x7069_6c6f;
    pub const SCHEDULE: u64 = 0x7363_6864;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A reproducible random stream identified by a 64-bit key path.
#[derive(Clone, Debug)]
pub struct Stream {
    key: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        let key = splitmix64(seed);
        Self { key, rng: ChaCha8Rng::seed_from_u64(key) }
    }

    /// Independent child stream. Does not consume state from `self`.
    pub fn derive(&self, label: u64) -> Self {
        let key = splitmix64(self.key ^ splitmix64(label.wrapping_add(0x5851_f42d_4c95_7f2d)));
        Self { key, rng: ChaCha8Rng::seed_from_u64(key) }
    }

    /// A seed for an independent child computation.
    pub fn child_seed(&self, label: u64) -> u64 {
        self.derive(label).key
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Uniform draw on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform index in `0..n`. `n` must be nonzero.
    pub fn index(&mut self, n: usize) -> usize {
        self.rng.random_range(0..n)
    }
}

impl RngCore for Stream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
