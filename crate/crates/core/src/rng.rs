//! Seeded, order-stable randomness. Every random decision is keyed by the
//! user seed plus a tag path (replica, row index, round, ...), so replays and
//! reorderings of independent work give identical draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash of a seed and a tag path.
pub fn mix(seed: u64, tags: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &t in tags {
        h = splitmix64(h ^ splitmix64(t.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

/// Independent generator for one tag path.
pub fn substream(seed: u64, tags: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed, tags))
}

/// Uniform draw in (0, 1] derived directly from the hash.
pub fn unit_uniform(seed: u64, tags: &[u64]) -> f64 {
    ((mix(seed, tags) >> 11) as f64 + 1.0) / (1u64 << 53) as f64
}

/// Exp(1) by inverse CDF.
pub fn exponential(seed: u64, tags: &[u64]) -> f64 {
    -unit_uniform(seed, tags).ln()
}
