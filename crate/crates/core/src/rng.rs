//! Seed derivation. Every random stream is a ChaCha8 generator seeded from a
//! master seed and a path of stream indices, mixed with SplitMix64.

use rand::SeedableRng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a sub-seed from `seed` and a stream path.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(1)))
    })
}

/// A generator for the stream `path` under `seed`.
pub fn stream<R: SeedableRng>(seed: u64, path: &[u64]) -> R {
    R::seed_from_u64(derive_seed(seed, path))
}
