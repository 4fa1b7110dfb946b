//! Seeded, streamable PRNG: xoshiro256++ with SplitMix64 initialization.
//!
//! Determinism contract: identical `(seed, stream)` produce identical output
//! sequences on every platform. Normal variates use the Box-Muller cosine
//! branch through `libm`, so even transcendental results are bit-stable.
//!
//! Stream derivation: `child = mix64(seed + GOLDEN * (stream + 1))` where
//! `mix64` is the SplitMix64 finalizer and `GOLDEN` is 2^64/phi. The child
//! seed then fills the xoshiro state with four consecutive SplitMix64
//! outputs (the same convention as the reference implementation's
//! seed-from-u64 path, which the golden-value test pins down).

use crate::{CoreError, Result};

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream-id namespaces. Every random draw in the workbench comes from
/// `Rng::new(base_seed, NAMESPACE + index)`, so adding draws in one place
/// never shifts another's sequence.
pub mod streams {
    /// Training-environment data generation (`+ env index`).
    pub const DATA: u64 = 0 << 32;
    /// Held-out evaluation environments (`+ env index`).
    pub const EVAL: u64 = 1 << 32;
    /// Validation-split shuffles (`+ env index`).
    pub const SPLIT: u64 = 2 << 32;
    /// Model initialization per grid configuration (`+ config index`).
    pub const GRID_INIT: u64 = 3 << 32;
    /// Model initialization for the final retrain after grid selection.
    pub const FINAL_INIT: u64 = 4 << 32;
}

/// SplitMix64 finalizer (also used standalone for stream derivation).
#[inline]
fn mix64(x: u64) -> u64 {
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// One SplitMix64 step: advances `state` and returns the next output.
#[inline]
fn split_mix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(GOLDEN);
    mix64(*state)
}

/// xoshiro256++ generator state bound to a `(seed, stream)` pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rng {
    s: [u64; 4],
}

impl Rng {
    /// Deterministic generator for a `(seed, stream)` pair. Distinct streams
    /// from one base seed yield statistically independent sequences.
    pub fn new(seed: u64, stream: u64) -> Self {
        let child = mix64(seed.wrapping_add(GOLDEN.wrapping_mul(stream.wrapping_add(1))));
        Self::from_u64_seed(child)
    }

    /// Fills the state with four consecutive SplitMix64 outputs of `seed`.
    pub fn from_u64_seed(seed: u64) -> Self {
        let mut sm = seed;
        let mut s = [0u64; 4];
        for slot in &mut s {
            *slot = split_mix64(&mut sm);
        }
        if s == [0, 0, 0, 0] {
            // xoshiro's one forbidden state; unreachable from SplitMix64 in
            // practice, but cheap to rule out entirely.
            s[0] = GOLDEN;
        }
        Rng { s }
    }

    /// Next raw 64-bit output.
    pub fn next_u64(&mut self) -> u64 {
        let result = self.s[0]
            .wrapping_add(self.s[3])
            .rotate_left(23)
            .wrapping_add(self.s[0]);
        let t = self.s[1] << 17;
        self.s[2] ^= self.s[0];
        self.s[3] ^= self.s[1];
        self.s[1] ^= self.s[2];
        self.s[0] ^= self.s[3];
        self.s[2] ^= t;
        self.s[3] = self.s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `(0, 1]`; used as the log argument in Box-Muller.
    fn next_f64_open_closed(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal variate via the Box-Muller cosine branch.
    ///
    /// Consumes exactly two uniforms; the sine branch is discarded so that
    /// every call maps to a fixed draw count (seed-stable under refactoring).
    pub fn next_normal(&mut self) -> f64 {
        let u1 = self.next_f64_open_closed();
        let u2 = self.next_f64();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform draw in `{0, 1, ..., bound-1}` by unbiased rejection.
    pub fn next_below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "next_below requires a positive bound");
        let zone = (u64::MAX / bound) * bound;
        loop {
            let v = self.next_u64();
            if v < zone {
                return v % bound;
            }
        }
    }

    /// Bernoulli draw: true with probability `p`. Consumes one uniform.
    pub fn next_bool(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }
}

/// `mean + std * z` with `z` standard normal. Always consumes two uniforms,
/// so the draw sequence does not depend on `std`; `std = 0` returns `mean`
/// exactly.
pub fn sample_normal(rng: &mut Rng, mean: f64, std: f64) -> Result<f64> {
    if !(std >= 0.0) {
        return Err(CoreError::InvalidArgument("std must be nonnegative"));
    }
    Ok(mean + std * rng.next_normal())
}
