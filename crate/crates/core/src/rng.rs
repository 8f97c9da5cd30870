//! Seeded random streams.
//!
//! Every random decision in the crate (subsampling, shuffling, synthetic
//! corpora, initialisation) draws from [`SeededRng`], which is the PCG-64 MCG
//! generator (`Mcg128Xsl64`: 128-bit multiplicative congruential state with
//! the XSL-RR 128/64 output permutation) seeded through
//! `SeedableRng::seed_from_u64`. Independent sub-streams are derived with
//! [`derive_seed`], a SplitMix64 finaliser over `(seed, tag)`, so adding a new
//! consumer never perturbs the streams of existing ones.

use rand::{RngExt, SeedableRng};
use rand_pcg::Pcg64Mcg;

pub type SeededRng = Pcg64Mcg;

pub fn seeded(seed: u64) -> SeededRng {
    Pcg64Mcg::seed_from_u64(seed)
}

/// Mixes `tag` into `seed` with the SplitMix64 finaliser.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-stream for a named consumer.
pub fn substream(seed: u64, tag: &str) -> SeededRng {
    let h = tag
        .bytes()
        .fold(0xCBF2_9CE4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x100_0000_01B3));
    seeded(derive_seed(seed, h))
}

/// Fisher-Yates shuffle of `0..n` driven by `rng`.
///
/// Position `i` (from the back) swaps with a uniform index in `0..=i`.
pub fn permutation(n: usize, rng: &mut SeededRng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// Uniform `k`-subset of `0..n` without replacement, returned in ascending
/// order. Uses a partial Fisher-Yates pass over the first `k` positions.
pub fn sample_indices(n: usize, k: usize, rng: &mut SeededRng) -> Vec<usize> {
    let k = k.min(n);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.random_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx.sort_unstable();
    idx
}

/// Uniform draw in `[-scale, scale]`.
pub fn symmetric(rng: &mut SeededRng, scale: f64) -> f64 {
    (rng.random::<f64>() * 2.0 - 1.0) * scale
}
