//! Reproducible random streams.
//!
//! Every stochastic routine draws from ChaCha8 (a counter-based generator with
//! a platform-independent output sequence). A run is identified by a 64-bit
//! master seed; replicate `i` of an experiment uses the ChaCha stream `i` of
//! that seed, so results do not depend on how replicates are scheduled over
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for stream `stream` under master seed `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a fresh master seed for a sub-experiment. Used when one report
/// needs several independent families of streams (for example a held-out
/// variance estimate next to the replicates under test).
pub fn derive_seed(seed: u64, label: u64) -> u64 {
    // splitmix64 finaliser
    let mut z = seed ^ label.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
