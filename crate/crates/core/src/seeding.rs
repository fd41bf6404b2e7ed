//! Stable seed derivation.
//!
//! Every stochastic task gets its own seed derived from a master seed and the
//! task's schedule coordinates, so results never depend on which thread ran
//! which task or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed. Order-sensitive.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    let mut acc = mix64(master.wrapping_add(GOLDEN));
    for (i, &p) in parts.iter().enumerate() {
        acc = mix64(acc ^ p.wrapping_add(GOLDEN.wrapping_mul(i as u64 + 1)));
    }
    acc
}

/// FNV-1a over bytes; used to turn text keys into seed words.
pub fn hash_str(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
