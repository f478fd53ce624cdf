//! Seed derivation.
//!
//! A run is driven by one 64-bit master seed. Every consumer (a shot, a
//! tuple batch, a repetition) gets its own ChaCha stream keyed by a
//! deterministic path below that seed, so results never depend on how work
//! is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SeedStream(u64);

impl SeedStream {
    pub fn new(master: u64) -> Self {
        SeedStream(master)
    }

    pub fn seed(&self) -> u64 {
        self.0
    }

    pub fn child(&self, label: u64) -> SeedStream {
        SeedStream(splitmix64(self.0 ^ splitmix64(label.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    pub fn named(&self, label: &str) -> SeedStream {
        // FNV-1a keeps labels stable across platforms and releases
        let h = label.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01b3));
        self.child(h)
    }

    /// Independent generator for item `index` (a shot, a batch …).
    pub fn rng(&self, index: u64) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        rng.set_stream(index);
        rng
    }
}
