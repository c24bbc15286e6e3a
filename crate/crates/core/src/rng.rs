//! Seeded random streams.
//!
//! Every consumer derives its generator from a `(seed, stream)` pair so that
//! environment, exploration and imputation draws never interleave.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_ENV: u64 = 1;
pub const STREAM_EXPLORE: u64 = 2;
pub const STREAM_IMPUTE: u64 = 3;
pub const STREAM_INIT: u64 = 4;
pub const STREAM_REPLAY: u64 = 5;
pub const STREAM_PLAN: u64 = 6;
pub const STREAM_DATA: u64 = 7;

pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// SplitMix64 mix, used to derive child seeds deterministically.
pub fn derive(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
