//! Counter-based RNG stream derivation.
//!
//! Every random draw in the workbench comes from a stream keyed by
//! `(seed, purpose, entity, epoch)`, so generation is bit-identical
//! regardless of iteration order or thread count.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream purposes; spread apart so tag mixing cannot collide trivially.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Purpose {
    RoadLayout = 0x01,
    InsNoise = 0x02,
    MaskAngle = 0x03,
    Measurement = 0x04,
    FilterInit = 0x05,
    FilterPredict = 0x06,
    FilterResample = 0x07,
    Trial = 0x08,
    Baseline = 0x09,
    Prior = 0x0A,
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent stream for `(seed, purpose, a, b)`.
pub fn stream(seed: u64, purpose: Purpose, a: u64, b: u64) -> ChaCha8Rng {
    let mixed = splitmix(seed ^ splitmix(purpose as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(mixed);
    rng.set_stream(splitmix(a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ splitmix(b)));
    rng
}

/// Derive a child seed (for nested drivers like per-trial scenarios).
pub fn child_seed(seed: u64, tag: u64, index: u64) -> u64 {
    splitmix(seed ^ splitmix(tag).wrapping_add(index.wrapping_mul(0xD134_2543_DE82_EF95)))
}
