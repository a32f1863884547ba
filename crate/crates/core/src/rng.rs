//! Seeding for reproducible Monte Carlo streams.
//!
//! Every replica draws from its own ChaCha8 stream keyed by `(seed, replica)`,
//! so results do not depend on how replicas are scheduled across workers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type ReplicaRng = ChaCha8Rng;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for stream `index` under `seed`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index.wrapping_add(0x5851_F42D_4C95_7F2D)))
}

/// Generator for replica `index` of a run seeded with `seed`.
pub fn replica_rng(seed: u64, index: u64) -> ReplicaRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

/// Uniform direction on the unit sphere in `d` dimensions (normalized Gaussian).
pub fn unit_direction<R: Rng + ?Sized>(rng: &mut R, d: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), d);
    loop {
        let mut sq = 0.0;
        for x in out.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = g;
            sq += g * g;
        }
        if sq > 0.0 {
            let inv = 1.0 / sq.sqrt();
            out.iter_mut().for_each(|x| *x *= inv);
            return;
        }
    }
}
