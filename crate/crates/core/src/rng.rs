//! Seed derivation for reproducible replicate streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of replicate `replicate` under `master`; independent of scheduling.
pub fn derive_seed(master: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(master) ^ replicate.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn replicate_rng(master: u64, replicate: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, replicate))
}
