//! Seed derivation and normal variates for the simulation harness.
//!
//! Every replication gets its own ChaCha8 stream seeded with
//! [`sub_seed`]`(master, rep)`. Normal draws use the inverse CDF of an open
//! uniform built from the top 52 bits of a `u64`, so ports to other
//! languages can reproduce the same transform.

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Normal};

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// `splitmix64(master ^ splitmix64(rep))`.
pub fn sub_seed(master: u64, rep: u64) -> u64 {
    splitmix64(master ^ splitmix64(rep))
}

/// Stream for replication `rep` of a run seeded with `master`.
pub fn replication_rng(master: u64, rep: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(master, rep))
}

/// Uniform on the open interval `(0, 1)`: `(k + 0.5) / 2^52` for the top 52
/// bits `k` of a `u64`.
pub fn open_uniform<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// Standard normal draw via `Φ⁻¹(U)`.
pub fn std_normal<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    standard().inverse_cdf(open_uniform(rng))
}

/// Fills `out` with standard normal draws.
pub fn fill_std_normal<R: RngCore + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let dist = standard();
    for v in out {
        *v = dist.inverse_cdf(open_uniform(rng));
    }
}

fn standard() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// `Φ(x)`.
pub fn normal_cdf(x: f64) -> f64 {
    standard().cdf(x)
}

/// `Φ⁻¹(p)`.
pub fn normal_quantile(p: f64) -> f64 {
    standard().inverse_cdf(p)
}

/// `φ(x)`.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
