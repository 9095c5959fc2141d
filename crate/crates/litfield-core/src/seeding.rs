//! Seed derivation.
//!
//! All randomness in the pipeline flows from a single master seed. A stage
//! (or a chain within a stage) obtains its own seed as the first eight bytes,
//! little-endian, of `SHA-256(master_le_bytes || label_utf8)`. Labels are
//! stable strings such as `"split"`, `"fit/rho_nref_t"`, or
//! `"fit/rho_nref_t/chain/2"`, so reordering stages or adding new ones never
//! perturbs the streams of existing ones.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Derive a stage seed from the master seed and a stable label.
pub fn stage_seed(master: u64, label: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(master.to_le_bytes());
    hasher.update(label.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// RNG for a stage, seeded by [`stage_seed`].
pub fn stage_rng(master: u64, label: &str) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(stage_seed(master, label))
}

/// RNG for one chain of an MCMC fit.
pub fn chain_rng(master: u64, fit_label: &str, chain: usize) -> ChaCha12Rng {
    stage_rng(master, &format!("{fit_label}/chain/{chain}"))
}
