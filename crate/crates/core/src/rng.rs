//! Deterministic generator streams.
//!
//! Every independent unit of work (a repetition, a trace block, a sweep arm)
//! gets its own ChaCha8 stream derived from the user seed and a path of
//! indices, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// SplitMix64 finaliser.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from a parent seed and a label.
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    mix(mix(seed) ^ label.rotate_left(17) ^ 0x5851_F42D_4C95_7F2D)
}

/// Generator for `(seed, stream)`; ChaCha's 64-bit stream id keeps streams
/// disjoint.
pub fn stream(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
