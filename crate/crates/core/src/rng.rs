//! Seeded random streams.
//!
//! Every random draw in the laboratory comes from a ChaCha8 stream keyed by
//! `(master seed, purpose, index)`. The purpose selects the ChaCha stream id,
//! the index (trial or iteration number) is mixed into the seed. Same key,
//! same numbers, on any thread.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a stream is used for. The discriminant is the ChaCha stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Activity = 1,
    Channel = 2,
    Noise = 3,
    Bits = 4,
    Snr = 5,
    Init = 6,
    Preambles = 7,
    Training = 8,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and an index.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Stream for one purpose and index under a master seed.
pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, index));
    rng.set_stream(purpose as u64);
    rng
}
