//! Deterministic random number generation.
//!
//! A hand-rolled PCG32 (XSH-RR variant) keeps every stochastic choice in the
//! engine reproducible across platforms and releases: the algorithm is fixed
//! here rather than inherited from an external crate whose output might
//! change between versions.
//!
//! Independent consumers (initialization, dropout, shuffling, data
//! generation, fold assignment, gradient probes) each draw from their own
//! PCG *stream*, derived from the user seed and a [`StreamId`]. Streams never
//! interleave, so adding draws to one consumer cannot perturb another.

const MULTIPLIER: u64 = 6364136223846793005;

/// PCG32 generator (XSH-RR output function, 64-bit state, 32-bit output).
#[derive(Clone, Debug)]
pub struct Pcg32 {
    state: u64,
    inc: u64,
}

/// Named sub-stream of the run seed; one per independent consumer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamId {
    /// Parameter initialization.
    Init = 1,
    /// Dropout masks (one stream per epoch).
    Dropout = 2,
    /// Example shuffling (one stream per epoch).
    Shuffle = 3,
    /// Synthetic data generation.
    Generator = 4,
    /// Fold assignment in cross-validation.
    Folds = 5,
    /// Coordinate probes in gradient checking.
    Probes = 6,
}

impl Pcg32 {
    /// Seeds a generator on the given stream (standard PCG init sequence).
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = Pcg32 {
            state: 0,
            inc: (stream << 1) | 1,
        };
        rng.next_u32();
        rng.state = rng.state.wrapping_add(seed);
        rng.next_u32();
        rng
    }

    /// Seeds the sub-stream `(id, index)` of `seed`; `index` distinguishes
    /// per-epoch or per-fold instances of the same consumer.
    pub fn stream(seed: u64, id: StreamId, index: u64) -> Self {
        Pcg32::new(seed, ((id as u64) << 32) ^ index)
    }

    /// Next 32 uniformly random bits.
    pub fn next_u32(&mut self) -> u32 {
        let old = self.state;
        self.state = old.wrapping_mul(MULTIPLIER).wrapping_add(self.inc);
        let xorshifted = (((old >> 18) ^ old) >> 27) as u32;
        let rot = (old >> 59) as u32;
        xorshifted.rotate_right(rot)
    }

    /// Next 64 uniformly random bits (two 32-bit draws, high word first).
    pub fn next_u64(&mut self) -> u64 {
        let hi = self.next_u32() as u64;
        let lo = self.next_u32() as u64;
        (hi << 32) | lo
    }

    /// Uniform double in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform double in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, n)`. Panics if `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0) is undefined");
        (self.next_u64() % n as u64) as usize
    }

    /// In-place Fisher–Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}
