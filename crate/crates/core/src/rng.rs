//! Deterministic random-stream derivation.
//!
//! Every random quantity in a run is drawn from its own ChaCha12 stream whose
//! 256-bit key is derived from a parent seed and a path of integer labels:
//!
//! ```text
//! key(parent, [l0, l1, ...]) = four SplitMix64 words of a chained hash of
//!                              (parent, l0, l1, ..., path length)
//! ```
//!
//! Streams for different paths are independent generators, so the order in
//! which workers consume them never changes results. Typical paths:
//!
//! * `[PLACEMENT]`, `[INIT]`, `[DATA]` under the master seed (scenario build)
//! * `[TRIAL, t]` under the master seed gives the seed of trial `t`
//! * `[FADING, r]`, `[TRAINING, r]` under a trial seed (round `r`)
//! * `[device]` under a training round seed (one stream per device)

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SimRng = ChaCha12Rng;

pub const PLACEMENT: u64 = 1;
pub const INIT: u64 = 2;
pub const DATA: u64 = 3;
pub const TRIAL: u64 = 4;
pub const FADING: u64 = 5;
pub const TRAINING: u64 = 6;
pub const PLACEMENT_EVAL: u64 = 7;
pub const SELECTION: u64 = 8;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn chain(parent: u64, labels: &[u64]) -> u64 {
    let mut h = splitmix64(parent);
    for &l in labels {
        h = splitmix64(h ^ splitmix64(l.wrapping_add(GOLDEN)));
    }
    splitmix64(h ^ labels.len() as u64)
}

/// 64-bit child seed for a label path.
pub fn derive_seed(parent: u64, labels: &[u64]) -> u64 {
    chain(parent, labels)
}

/// Generator for a label path under `parent`.
pub fn stream(parent: u64, labels: &[u64]) -> SimRng {
    let mut h = chain(parent, labels);
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        h = splitmix64(h);
        chunk.copy_from_slice(&h.to_le_bytes());
    }
    SimRng::from_seed(key)
}
