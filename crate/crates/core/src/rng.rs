//! Seeded random streams and the samplers built on them.
//!
//! Every random draw in the crate goes through [`stream_rng`]: a ChaCha8
//! generator keyed by a 64-bit seed and a 64-bit stream id. Independent
//! consumers (one Dirichlet row, one episode, one trial) get their own stream
//! id, so results never depend on the order in which streams are consumed.
//! Seeds for unrelated purposes are separated with [`derive_seed`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// SplitMix64 finalizer applied to `seed ^ tag`.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = (seed ^ tag.wrapping_mul(0xA24B_AED4_963E_E407)).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Index drawn from a discrete distribution by CDF inversion.
pub fn categorical<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn gamma<R: Rng>(rng: &mut R, shape: f64) -> f64 {
    Gamma::new(shape, 1.0).expect("gamma shape must be positive").sample(rng)
}

/// Dirichlet draw by normalizing independent Gamma variates. Unlike
/// `rand_distr::Dirichlet` this accepts one category and survives every
/// draw underflowing to zero.
pub fn dirichlet<R: Rng>(rng: &mut R, alpha: &[f64]) -> Vec<f64> {
    let mut draws: Vec<f64> = alpha.iter().map(|&a| gamma(rng, a)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|x| *x /= total);
    } else {
        let k = alpha
            .iter()
            .enumerate()
            .fold(0, |b, (i, &a)| if a > alpha[b] { i } else { b });
        draws.iter_mut().enumerate().for_each(|(i, x)| *x = if i == k { 1.0 } else { 0.0 });
    }
    draws
}

pub fn poisson<R: Rng>(rng: &mut R, rate: f64) -> u64 {
    if rate == 0.0 {
        return 0;
    }
    Poisson::new(rate).expect("poisson rate must be positive").sample(rng) as u64
}
