//! Seeded randomness.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`), a portable
//! generator whose output is identical on every platform. Independent
//! consumers of one seed use distinct ChaCha streams. Normal variates use
//! `rand_distr::StandardNormal` (ziggurat) on top of it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Streams reserved for each consumer of a seed.
pub mod stream {
    pub const INIT: u64 = 0;
    pub const BLOB_MEANS: u64 = 1;
    pub const BLOB_NOISE: u64 = 2;
    pub const SPLIT: u64 = 3;
    pub const VERIFY: u64 = 4;
    pub const CALIBRATED: u64 = 5;
    /// Epoch `e` shuffles with stream `EPOCH_BASE + e`.
    pub const EPOCH_BASE: u64 = 1 << 32;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
