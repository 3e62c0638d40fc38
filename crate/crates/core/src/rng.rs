//! Counter-based random streams.
//!
//! Every draw comes from `ChaCha8Rng::seed_from_u64(seed)` with the stream id
//! `(purpose << 48) | index`, so a batch depends only on the master seed, what
//! it is for and its iteration index, never on how many draws came before.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Prior = 1,
    Batch = 2,
    RealBatch = 3,
    DiscInit = 4,
    Eval = 5,
}

pub fn stream(seed: u64, purpose: Purpose, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 48) | (index & ((1 << 48) - 1)));
    rng
}

/// `count` draws from `N(0, scale^2 I_d)`, flattened row by row.
pub fn gaussian_rows(rng: &mut ChaCha8Rng, count: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    scale * z
                })
                .collect()
        })
        .collect()
}
