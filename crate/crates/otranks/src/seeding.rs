//! Deterministic seed derivation.
//!
//! Every random draw in the library flows through a ChaCha stream.
//! Substreams are derived by hashing a master seed together with a short
//! tag and an index, so replicate r of an experiment always sees the same
//! stream no matter where or when it runs. Randomized rank draws are keyed
//! by the coordinates of the point being ranked, which makes identical
//! points receive identical draws within one evaluation.

use rand::SeedableRng;

pub type SeededRng = rand_chacha::ChaCha8Rng;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

#[inline]
fn fnv1a(state: u64, bytes: &[u8]) -> u64 {
    let mut h = state;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Final avalanche so that nearby seeds do not produce nearby streams.
#[inline]
fn mix(mut x: u64) -> u64 {
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^= x >> 31;
    x
}

/// Derive a substream seed from a master seed, a tag and an index.
pub fn derive_seed(master: u64, tag: &str, index: u64) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    h = fnv1a(h, tag.as_bytes());
    h = fnv1a(h, &index.to_le_bytes());
    mix(h)
}

/// Seed keyed by a point's coordinates, bitwise.
pub fn point_keyed_seed(master: u64, point: &[f64]) -> u64 {
    let mut h = fnv1a(FNV_OFFSET, &master.to_le_bytes());
    for c in point {
        h = fnv1a(h, &c.to_le_bytes());
    }
    mix(h)
}

pub fn rng_from(seed: u64) -> SeededRng {
    SeededRng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn derive_is_stable_and_tag_sensitive() {
        let a = derive_seed(7, "perm", 3);
        assert_eq!(a, derive_seed(7, "perm", 3));
        assert_ne!(a, derive_seed(7, "perm", 4));
        assert_ne!(a, derive_seed(7, "mc", 3));
        assert_ne!(a, derive_seed(8, "perm", 3));
    }

    #[test]
    fn point_key_uses_bits() {
        let a = point_keyed_seed(1, &[0.1, 0.2]);
        assert_eq!(a, point_keyed_seed(1, &[0.1, 0.2]));
        assert_ne!(a, point_keyed_seed(1, &[0.2, 0.1]));
        assert_ne!(a, point_keyed_seed(2, &[0.1, 0.2]));
    }

    #[test]
    fn streams_are_reproducible() {
        let mut r1 = rng_from(42);
        let mut r2 = rng_from(42);
        for _ in 0..16 {
            assert_eq!(r1.random::<f64>(), r2.random::<f64>());
        }
    }
}
