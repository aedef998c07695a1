//! Counter-based seeding and the small set of sampling primitives shared by
//! the estimators.
//!
//! Every random draw is keyed by `(seed, index path)` rather than by a shared
//! stream, so results do not depend on how work is split across threads and a
//! run with `n` samples is a prefix of a run with `m > n` samples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(seed), |acc, &p| {
        splitmix64(acc ^ splitmix64(p.wrapping_add(0x5851_F42D)))
    })
}

pub fn rng_for(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Uniform point in the closed Euclidean ball.
pub fn uniform_in_ball<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    let d = center.len();
    if d == 0 {
        return Vec::new();
    }
    let dir: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = crate::linalg::norm(&dir);
    if n == 0.0 {
        return center.to_vec();
    }
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / d as f64);
    center.iter().zip(&dir).map(|(c, v)| c + r * v / n).collect()
}

/// Uniform point in the axis-aligned box `center ± radius`.
pub fn uniform_in_box<R: Rng + ?Sized>(rng: &mut R, center: &[f64], radius: f64) -> Vec<f64> {
    center
        .iter()
        .map(|c| c + radius * (2.0 * rng.random::<f64>() - 1.0))
        .collect()
}

pub fn exponential<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}
