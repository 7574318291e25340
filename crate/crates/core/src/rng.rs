//! Named, seeded random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] keyed by the run
//! seed plus a stream name, so adding draws to one stream never shifts another.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const INIT: &str = "init";
pub const OMEGA0: &str = "omega0";
pub const NEGATIVES: &str = "negatives";
pub const SHUFFLE: &str = "shuffle";
pub const MODEL: &str = "model";

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// RNG for the stream `name` under `seed`.
pub fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// RNG for a numbered sub-stream, e.g. one per epoch or per trial.
pub fn substream(seed: u64, name: &str, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    rng.set_stream(fnv1a(name.as_bytes()));
    rng
}

/// Stable 64-bit hash used to key per-item randomness.
pub fn hash_key(values: &[u32]) -> u64 {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a(&bytes)
}
