//! Deterministic seed derivation.
//!
//! All randomness in the crate flows from one master seed. Sub-streams
//! (dataset records, per-epoch shuffles, per-batch augmentation, Monte Carlo
//! trials) derive their own seed from the master seed plus a stream tag and
//! index words, so parallel or streaming producers reproduce serial results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags; one per independent consumer of the master seed.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const INIT: u64 = 4;
    pub const SWEEP: u64 = 5;
    pub const HOLDOUT: u64 = 6;
    pub const SCENE: u64 = 7;
    pub const MASK: u64 = 8;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a master seed with a list of stream words into a single sub-seed.
pub fn derive_seed(master: u64, words: &[u64]) -> u64 {
    let mut s = splitmix64(master);
    for &w in words {
        s = splitmix64(s ^ splitmix64(w));
    }
    s
}

/// ChaCha8 stream for `(master, words)`; the workhorse RNG of the crate.
pub fn stream_rng(master: u64, words: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, words))
}
