//! Deterministic seed derivation. Every random draw in the crate comes from a
//! `ChaCha8Rng` seeded through [`stream_rng`], so results do not depend on
//! thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used within one frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Source = 1,
    Ase = 2,
    Misc = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index (frame number, amplifier
/// number, ...).
pub fn derive_seed(base: u64, stream: Stream, index: u64) -> u64 {
    splitmix64(splitmix64(base ^ ((stream as u64) << 56)).wrapping_add(index))
}

pub fn stream_rng(base: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, stream, index))
}
