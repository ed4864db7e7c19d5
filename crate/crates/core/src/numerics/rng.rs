use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Counter-based random stream.
///
/// The `k`-th 64-bit draw of a `(seed, stream)` pair is a pure function of
/// `(seed, stream, k)`: it does not depend on which other streams exist or
/// in what order they are consumed. Every pixel, frame and epoch gets its
/// own stream, so results never depend on thread scheduling.
#[derive(Clone, Debug)]
pub struct Rng {
    seed: u64,
    stream: u64,
    counter: u64,
    core: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self::at(seed, stream, 0)
    }

    /// Stream positioned at draw `counter`.
    pub fn at(seed: u64, stream: u64, counter: u64) -> Self {
        let mut core = ChaCha8Rng::seed_from_u64(seed);
        core.set_stream(stream);
        // ChaCha counts 32-bit words; one draw consumes two.
        core.set_word_pos(u128::from(counter) * 2);
        Rng {
            seed,
            stream,
            counter,
            core,
        }
    }

    /// Derived independent stream; `salt` distinguishes uses of one parent.
    pub fn derive(seed: u64, parts: &[u64]) -> Self {
        let mut h = 0x6a09_e667_f3bc_c908u64;
        for &p in parts {
            h = mix64(h ^ mix64(p.wrapping_add(0x9e37_79b9_7f4a_7c15)));
        }
        Rng::new(seed, h)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Number of 64-bit draws consumed so far.
    pub fn counter(&self) -> u64 {
        self.counter
    }

    pub fn next_u64(&mut self) -> u64 {
        self.counter += 1;
        self.core.next_u64()
    }

    /// Uniform in `[0, 1)` with 24 random bits.
    pub fn next_f32(&mut self) -> f32 {
        (self.next_u64() >> 40) as f32 * (1.0 / (1u64 << 24) as f32)
    }

    /// Uniform in `[0, 1)` with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform integer in `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u64, hi: u64) -> u64 {
        debug_assert!(lo <= hi);
        let span = hi - lo + 1;
        // Multiply-shift; bias is below 2^-40 for the spans used here.
        lo + ((u128::from(self.next_u64()) * u128::from(span)) >> 64) as u64
    }

    pub fn choose<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        let i = self.range_inclusive(0, items.len() as u64 - 1) as usize;
        &items[i]
    }
}

/// SplitMix64 finalizer.
pub(crate) fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
