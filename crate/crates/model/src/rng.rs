//! Reproducible random streams.
//!
//! The generator is ChaCha8 (`rand_chacha`). A 64-bit seed fixes the key;
//! the 64-bit ChaCha stream id encodes `(purpose, index)` so that, e.g., the
//! samples of block `l` never overlap the draws used for the initial
//! iterate, whatever order the blocks are produced in. Hierarchical keys
//! (cell, trial, …) are folded into the seed with [`derive_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// What a stream is used for; occupies the top byte of the stream id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Path = 1,
    Sample = 2,
    Init = 3,
    Reinit = 4,
    Instance = 5,
    Calibrate = 6,
}

const INDEX_MASK: u64 = (1 << 56) - 1;

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 56) | (index & INDEX_MASK));
    rng
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a key path into a child seed.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(seed), |acc, &x| splitmix(acc ^ splitmix(x)))
}
