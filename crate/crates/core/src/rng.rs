//! Counter-style seeding: every shot owns a ChaCha stream derived from
//! (experiment seed, shot index), so shots can be generated in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ShotRng = ChaCha8Rng;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mix a list of tags into a base seed. Used for per-(d, α², cycles) sub-seeds.
pub fn derive_seed(seed: u64, tags: &[u64]) -> u64 {
    tags.iter().fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

pub fn shot_seed(seed: u64, index: u64) -> u64 {
    derive_seed(seed, &[index])
}

pub fn shot_rng(shot_seed: u64) -> ShotRng {
    ChaCha8Rng::seed_from_u64(shot_seed)
}
