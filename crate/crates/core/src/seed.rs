//! Counter-based seed splitting: every random stream in a run is derived
//! from one root seed plus a (stream, index) pair.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Well-known stream identifiers.
pub mod stream {
    pub const PARAM_INIT: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const STD_PLACE: u64 = 3;
    pub const BASELINE: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const EPISODE: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for `(root, stream, index)`.
pub fn derive(root: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(root) ^ stream) ^ index)
}

pub fn rng(root: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(root, stream, index))
}
