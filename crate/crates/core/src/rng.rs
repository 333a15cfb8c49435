//! Deterministic seed derivation.
//!
//! All randomness flows from a single master seed through named sub-streams,
//! so that individual components (data generation, training, evaluation) are
//! reproducible in isolation.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

/// Mix an arbitrary sequence of integers into one well-scrambled seed.
pub fn mix(parts: &[u64]) -> u64 {
    let mut acc: u64 = 0x6A09_E667_F3BC_C909;
    for &p in parts {
        acc = splitmix64(acc ^ splitmix64(p));
    }
    acc
}

/// Derive the seed of a named sub-stream from a master seed.
pub fn derive(master: u64, tag: &str) -> u64 {
    mix(&[master, fnv1a(tag.as_bytes())])
}

/// Stable hash of a string for use as a mixing ingredient.
pub fn hash_str(s: &str) -> u64 {
    fnv1a(s.as_bytes())
}

/// Seeded RNG used throughout; small, fast, identical on every platform.
pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Map a hash to a uniform float in [0, 1).
pub fn unit_f64(h: u64) -> f64 {
    (h >> 11) as f64 / (1u64 << 53) as f64
}
