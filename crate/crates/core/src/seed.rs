//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is derived from one root seed and a
//! path of integer labels (split index, fold, model seed, ...). Derivation is
//! a chain of SplitMix64 finalizers over `(state ^ label)`, so a stream depends
//! only on its path and never on the order in which work units execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels. Keeping them in one place avoids accidental reuse.
pub mod stream {
    pub const GENERATOR: u64 = 1;
    pub const SPLIT: u64 = 2;
    pub const FOLD: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const AUGMENT: u64 = 6;
    pub const DROPOUT: u64 = 7;
    pub const PSEUDO: u64 = 8;
    pub const GRID: u64 = 9;
    pub const MODEL: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |state, &label| splitmix64(state ^ splitmix64(label)))
}

pub fn rng_for(root: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(root, path))
}
