//! Seed derivation for reproducible random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 stream keyed by
//! a 64-bit seed. Child streams (per trial, per retry, per pipeline stage) are
//! derived with [`derive_seed`], so the randomness a computation sees depends
//! only on its seed and its position, never on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream tags for the stages of one solver call.
pub mod stream {
    pub const SCORE_NOISE: u64 = 0x5c0e;
    pub const SKETCH: u64 = 0x5e7c;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an index: `splitmix64(base ^ splitmix64(index))`.
///
/// This is the `hash(base_seed, trial_index)` used for per-trial seeds by the
/// benchmark harness, and for per-stage streams inside the solvers.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

pub fn stream_rng(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
