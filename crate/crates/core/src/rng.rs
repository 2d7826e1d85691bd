//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! seeded from a base seed plus a path of stream identifiers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix(base), |acc, &p| splitmix(acc ^ splitmix(p.wrapping_add(0x51_7cc1_b727_220a))))
}

pub fn stream(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}

// Stream tags.
pub(crate) const SPLIT: u64 = 1;
pub(crate) const NEGATIVES: u64 = 2;
pub(crate) const FOLDS: u64 = 3;
pub(crate) const FOREST: u64 = 4;
pub(crate) const PERMUTE: u64 = 5;
pub(crate) const CV_FOREST: u64 = 6;
