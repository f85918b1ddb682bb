//! Deterministic random streams keyed by `(seed, purpose, index)`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes, kept distinct so that e.g. augmentation draws never
/// alias generation draws for the same sample index.
pub mod purpose {
    pub const GENERATE: u64 = 1;
    pub const DEGRADE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const SHUFFLE: u64 = 4;
    pub const INIT: u64 = 5;
    pub const SPLIT: u64 = 6;
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one `(seed, purpose, index)` triple.
pub fn stream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix(seed ^ splitmix(purpose)));
    rng.set_stream(index);
    rng
}
