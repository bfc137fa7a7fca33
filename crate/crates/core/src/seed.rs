//! Seed derivation. Every image gets its own generator keyed by
//! `(seed, salt, image_id)`, so results never depend on the order in which
//! images are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::types::ImageId;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a(mut hash: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(FNV_PRIME);
    }
    hash
}

// splitmix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A deterministic family of random streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SeedStream {
    key: u64,
}

impl SeedStream {
    pub fn new(seed: u64) -> Self {
        Self { key: mix(fnv1a(FNV_OFFSET, &seed.to_le_bytes())) }
    }

    /// Independent sub-family, e.g. one per cycle or per purpose.
    pub fn child(&self, salt: u64) -> Self {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.key.to_le_bytes()), &salt.to_le_bytes());
        Self { key: mix(h) }
    }

    /// Sub-family keyed by a label, for purpose-separated streams.
    pub fn labeled(&self, label: &str) -> Self {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.key.to_le_bytes()), label.as_bytes());
        Self { key: mix(h ^ 0x5a5a_5a5a_5a5a_5a5a) }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.key)
    }

    pub fn rng_for(&self, image: &ImageId) -> ChaCha8Rng {
        let h = fnv1a(fnv1a(FNV_OFFSET, &self.key.to_le_bytes()), image.as_str().as_bytes());
        ChaCha8Rng::seed_from_u64(mix(h))
    }
}
