//! Seeded random streams.
//!
//! One master seed feeds every source of randomness through named
//! substreams (`init`, `noise`, `sampler`, `shuffle`, `split`, `eval-*`),
//! so any component can be reproduced in isolation from the same seed.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Deterministic stream rng.
pub type StreamRng = ChaCha12Rng;

/// Derive the rng for a named substream of `seed`. Stable across platforms:
/// the name is folded into the seed with FNV-1a.
pub fn named_stream(seed: u64, name: &str) -> StreamRng {
    ChaCha12Rng::seed_from_u64(seed ^ fnv1a(name.as_bytes()))
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
