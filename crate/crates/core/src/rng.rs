//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! keyed by a 64-bit seed derived from a list of integer components, so
//! parallel and serial runs draw identical numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// Domain tags for derived streams.
pub mod stream {
    pub const GROUND_TRUTH: u64 = 0x6774;
    pub const PARTITIONS: u64 = 0x7061;
    pub const DATA: u64 = 0x6461;
    pub const NEW_CLIENT: u64 = 0x6e63;
    pub const TRANSFER_DATA: u64 = 0x7464;
    pub const PRIVACY: u64 = 0x7076;
    pub const SHUFFLE: u64 = 0x7368;
}

/// Mixes seed components into a single 64-bit seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    let mut hasher = Sha256::new();
    for p in parts {
        hasher.update(p.to_le_bytes());
    }
    let digest = hasher.finalize();
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    u64::from_le_bytes(bytes)
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn derived_rng(parts: &[u64]) -> ChaCha8Rng {
    rng_from_seed(derive_seed(parts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derived_streams_are_stable_and_distinct() {
        let a = derive_seed(&[1, 2]);
        assert_eq!(a, derive_seed(&[1, 2]));
        assert_ne!(a, derive_seed(&[2, 1]));
        let mut r1 = derived_rng(&[7]);
        let mut r2 = derived_rng(&[7]);
        let x: u64 = r1.random();
        let y: u64 = r2.random();
        assert_eq!(x, y);
    }
}
