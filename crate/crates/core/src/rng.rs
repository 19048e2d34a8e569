//! Counter-based random streams.
//!
//! Every random draw in the crate comes from a [`StreamRng`] addressed by a
//! master seed and a path of integer coordinates (grid point, trial, test
//! index, ...). ChaCha is a counter-based generator: the master seed keys the
//! cipher and the mixed path selects the 64-bit stream, so any stream can be
//! reconstructed independently of the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Random stream used throughout the crate.
pub type StreamRng = ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a master seed and a coordinate path into a stream id.
///
/// The path length is folded in, so `[1]` and `[1, 0]` address different
/// streams.
pub fn stream_id(master_seed: u64, path: &[u64]) -> u64 {
    let mut h = splitmix64(master_seed ^ (path.len() as u64).wrapping_mul(GOLDEN));
    for &p in path {
        h = splitmix64(h ^ splitmix64(p));
    }
    h
}

/// Derives a child seed. Used to hand a sub-experiment its own master seed.
pub fn derive_seed(master_seed: u64, path: &[u64]) -> u64 {
    splitmix64(stream_id(master_seed, path) ^ 0xA5A5_A5A5_5A5A_5A5A)
}

/// Opens the stream addressed by `(master_seed, path)`.
pub fn stream(master_seed: u64, path: &[u64]) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(stream_id(master_seed, path));
    rng
}
