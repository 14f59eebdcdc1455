//! Counter-keyed random streams.
//!
//! Every Monte-Carlo draw is taken from a ChaCha8 stream selected by
//! `(master seed, lane, sub-index)` for the key and the trial index for the
//! ChaCha stream id. Results therefore depend only on those keys, never on
//! which worker ran a trial or in what order.

use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Independent purposes a trial draws randomness for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Scene = 1,
    Waveform = 2,
    Symbols = 3,
    Noise = 4,
    Oracle = 5,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stream for trial `trial` of `lane`, sub-keyed by `sub` (user index, etc.).
pub fn child_rng(master: u64, lane: Lane, sub: u64, trial: u64) -> ChaCha8Rng {
    let key = splitmix64(splitmix64(master ^ splitmix64(lane as u64)) ^ sub);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(trial);
    rng
}

/// Derives an independent generator from an existing one.
pub fn fork(rng: &mut impl RngCore, sub: u64) -> ChaCha8Rng {
    let base = rng.next_u64();
    let mut child = ChaCha8Rng::seed_from_u64(splitmix64(base));
    child.set_stream(sub);
    child
}

/// Stream `index` under `tag`, keyed from a base value drawn once per scene.
pub fn sub_stream(base: u64, tag: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(base ^ splitmix64(tag)));
    rng.set_stream(index);
    rng
}

/// Circularly-symmetric complex Gaussian with unit variance, CN(0, 1).
pub fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}
