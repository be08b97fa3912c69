//! Counter-based seeding: every random stream is keyed by a tuple of integers
//! instead of by consumption order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Mixes a seed with a sequence of counters into a single stream key.
pub fn derive_seed(seed: u64, counters: &[u64]) -> u64 {
    counters
        .iter()
        .fold(splitmix(seed), |acc, &c| splitmix(acc ^ splitmix(c)))
}

pub fn stream(seed: u64, counters: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, counters))
}

/// `dim` standard normal draws from the stream keyed by `(seed, counters)`.
pub fn normal_vector(seed: u64, counters: &[u64], dim: usize) -> Vec<f64> {
    let mut rng = stream(seed, counters);
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}
