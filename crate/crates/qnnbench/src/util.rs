//! Seed derivation helpers. One master seed expands deterministically into
//! per-stage and per-item streams so reruns and worker counts cannot change
//! any sampled value.

use sha2::{Digest, Sha256};

/// Fast per-item stream split (not cryptographic, just well-mixed).
pub fn splitmix64(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stage-labelled seed derivation: stable across runs and platforms.
pub fn derive_seed(master: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(label.as_bytes());
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}
