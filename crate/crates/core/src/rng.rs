//! Reproducible per-trial random streams.
//!
//! Every trial gets its own generator seeded from `(master_seed, indices…)`,
//! so results do not depend on the order in which trials are executed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator owned by a single trial.
pub type TrialRng = ChaCha8Rng;

// SplitMix64 finalizer
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed and a path of indices into a child seed.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix(master), |acc, &i| mix(acc ^ mix(i)))
}

pub fn trial_rng(master: u64, path: &[u64]) -> TrialRng {
    TrialRng::seed_from_u64(derive_seed(master, path))
}
