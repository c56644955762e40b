//! Reproducible random streams.
//!
//! Every simulated path owns one ChaCha8 stream keyed by
//! `(experiment seed, path index)`. ChaCha is counter based, so stream `k`
//! is the same bits no matter which worker draws it or in what order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type PathRng = ChaCha8Rng;

/// Stream for path `path_index` of the experiment seeded with `seed`.
pub fn path_stream(seed: u64, path_index: u64) -> PathRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Uniform draw on the half-open interval `(0, 1]`, safe to pass to `ln`.
#[inline]
pub fn uniform_open0<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    1.0 - rng.random::<f64>()
}

/// `Exp(rate)` by inverse transform, `-ln(U) / rate`. Infinite when `rate == 0`.
#[inline]
pub fn exponential<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> f64 {
    if rate <= 0.0 {
        return f64::INFINITY;
    }
    -uniform_open0(rng).ln() / rate
}
