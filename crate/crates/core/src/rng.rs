//! Seeded random streams.
//!
//! Every algorithm in the crate draws from [`SmcRng`], a ChaCha8 generator.
//! Independent replicates use the same master seed with distinct stream
//! numbers, so replicate `k` is the same sequence whether replicates run
//! serially or in parallel.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SmcRng = ChaCha8Rng;

/// Stream used by single-run studies (`filter`, `compare`, lag studies).
pub const MAIN_STREAM: u64 = 0;

/// Brute-force replicate `k` uses stream `BRUTE_FORCE_STREAM_BASE + k`, so it
/// never shares randomness with the study replicates (streams `1..`).
pub const BRUTE_FORCE_STREAM_BASE: u64 = 1 << 32;

/// Generator for stream `stream` under `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SmcRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
