//! Deterministic stream splitting.
//!
//! Every random draw in the workspace flows from one 64-bit master seed.
//! A derived stream is obtained by mixing `(seed, tag)` through SplitMix64
//! and seeding a ChaCha generator with the result. Distinct tags yield
//! statistically independent streams, so per-example draws, trials, and
//! training phases can run in any order (or concurrently) without
//! perturbing each other.
//!
//! Convention used throughout:
//!
//! - samplers tag each example by its index: `stream(seed, i)`;
//! - multi-stage procedures first derive a phase seed with
//!   [`child_seed`] and then tag within the phase.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed for stream `tag` under `seed`.
pub fn child_seed(seed: u64, tag: u64) -> u64 {
    splitmix64(seed ^ splitmix64(tag))
}

/// Deterministic generator for stream `tag` under `seed`.
pub fn stream(seed: u64, tag: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(child_seed(seed, tag))
}

/// Generator for a nested stream: phase first, index within the phase.
pub fn substream(seed: u64, phase: u64, index: u64) -> ChaCha8Rng {
    stream(child_seed(seed, phase), index)
}
